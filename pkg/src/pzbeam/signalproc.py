"""Dominant-frequency extraction from sampled time series."""

from __future__ import annotations

import numpy as np

from .errors import NumericalError


def dominant_frequency(series, dt: float) -> float:
    """Frequency (Hz) of the strongest spectral peak.

    Hann-windowed periodogram with three-point parabolic interpolation of
    the log power around the peak bin.  Raises on series too short or with
    no off-DC spectral content (constant input).
    """
    x = np.asarray(series, dtype=float)
    if x.ndim != 1:
        raise ValueError("series must be one-dimensional")
    if len(x) < 64:
        raise ValueError(f"need at least 64 samples, got {len(x)}")
    if not dt > 0:
        raise ValueError("dt must be > 0")
    x = x - x.mean()
    scale = np.abs(x).max()
    if scale == 0.0:
        raise NumericalError("no spectral peak: constant series")
    power = np.abs(np.fft.rfft(x * np.hanning(len(x))))**2
    power[0] = 0.0
    k = int(np.argmax(power))
    if power[k] <= 1e-24 * scale**2 * len(x):
        raise NumericalError("no spectral peak: flat spectrum")
    df = 1.0 / (dt * len(x))
    if k == 0 or k == len(power) - 1:
        return k * df
    # parabolic vertex through the log-power triple
    with np.errstate(divide="ignore"):
        la, lb, lc = np.log(power[k - 1:k + 2])
    denom = la - 2.0 * lb + lc
    delta = 0.0 if denom == 0 or not np.isfinite(denom) else 0.5 * (la - lc) / denom
    delta = float(np.clip(delta, -0.5, 0.5))
    return (k + delta) * df
