"""Measured (or synthesized) time series of vibrometer velocity and sensor
voltage, with the normalization constants used by the identification
objective."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

CSV_HEADER = "t,vz,V"


@dataclass
class MeasurementSet:
    """Time-stamped (velocity, voltage) pairs and channel scalings.

    When auto-computed, the scalings are the channel amplitude maxima,
    which balances the two contributions in the least-squares objective.
    """

    times: np.ndarray
    velocity: np.ndarray
    voltage: np.ndarray
    s_vz: float
    s_v: float

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.velocity = np.asarray(self.velocity, dtype=float)
        self.voltage = np.asarray(self.voltage, dtype=float)
        n = len(self.times)
        if not (len(self.velocity) == len(self.voltage) == n):
            raise ValueError("channel lengths differ")
        if n == 0:
            raise ValueError("empty measurement set")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("measurement times must be strictly increasing")
        if self.times[0] < 0:
            raise ValueError("measurement times must be non-negative")

    @property
    def n_samples(self) -> int:
        return len(self.times)

    @classmethod
    def with_auto_scaling(cls, times, velocity, voltage) -> "MeasurementSet":
        velocity = np.asarray(velocity, dtype=float)
        voltage = np.asarray(voltage, dtype=float)
        return cls(times, velocity, voltage,
                   float(np.abs(velocity).max()), float(np.abs(voltage).max()))

    def subsample(self, stride: int | None = None,
                  time_window: tuple | None = None) -> "MeasurementSet":
        """Deterministic decimation and/or time-window restriction;
        scalings are recomputed on the subset."""
        mask = np.ones(self.n_samples, dtype=bool)
        if time_window is not None:
            t0, t1 = time_window
            mask &= (self.times >= t0) & (self.times <= t1)
        idx = np.flatnonzero(mask)
        if stride is not None:
            if stride < 1:
                raise ValueError("stride must be >= 1")
            idx = idx[::stride]
        if not len(idx):
            raise ValueError("subsampling left no measurements")
        return MeasurementSet.with_auto_scaling(
            self.times[idx], self.velocity[idx], self.voltage[idx])

    def save_csv(self, path) -> None:
        with open(path, "w", newline="\n") as fh:
            fh.write(CSV_HEADER + "\n")
            for t, v, u in zip(self.times, self.velocity, self.voltage):
                fh.write(f"{t:.17g},{v:.17g},{u:.17g}\n")

    @classmethod
    def load_csv(cls, path) -> "MeasurementSet":
        with open(path) as fh:
            header = fh.readline().strip()
            if header != CSV_HEADER:
                raise ConfigError(f"measurement CSV must start with "
                                  f"'{CSV_HEADER}', got {header!r}")
            try:
                data = np.loadtxt(fh, delimiter=",", ndmin=2)
            except ValueError as exc:
                raise ConfigError(f"malformed measurement CSV: {exc}") from exc
        if data.shape[1] != 3:
            raise ConfigError("measurement CSV must have 3 columns")
        return cls.with_auto_scaling(data[:, 0], data[:, 1], data[:, 2])


def add_measurement_noise(clean: MeasurementSet, noise_level: float,
                          seed: int) -> MeasurementSet:
    """Additive zero-mean Gaussian noise, per channel, with standard
    deviation noise_level * max |channel|; deterministic under the seed."""
    if noise_level < 0:
        raise ValueError("noise_level must be >= 0")
    rng = np.random.default_rng(seed)
    v = clean.velocity + noise_level * clean.s_vz * rng.standard_normal(clean.n_samples)
    u = clean.voltage + noise_level * clean.s_v * rng.standard_normal(clean.n_samples)
    return MeasurementSet.with_auto_scaling(clean.times, v, u)
