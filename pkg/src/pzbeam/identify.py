"""Objective construction and the two identification strategies:
bounded least squares (sequential, trust-region-reflective) and CMA-ES
(global), both over theta = [alpha, beta, E, R, C].

Internally both optimizers work in normalized box coordinates z in [0, 1]^5
with E, R, C mapped through log (their bounds span decades); reported
values are always physical.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from .assembly import ConstrainedSystem
from .cmaes import minimize_cmaes
from .errors import NumericalError
from .materials import ParameterVector
from .measurements import MeasurementSet
from .sensitivity import run_transient_with_sensitivities
from .solvers import TimeGrid, run_transient, solve_static

VELOCITY = "velocity"
VOLTAGE = "voltage"
BOTH = "both"

#: parameters optimized in log scale (bounds span decades)
LOG_SCALED = (False, False, True, True, True)


class ForwardModel:
    """Release transient as a function of theta.

    Each evaluation solves the static preload at the given Young's modulus,
    drops the tip force and integrates; observables are the velocity at the
    laser point and the floating-electrode potential.
    """

    def __init__(self, sysc: ConstrainedSystem, grid: TimeGrid,
                 include_body_load: bool = True, refine: int = 1):
        self.sysc = sysc
        self.grid = grid
        self.include_body_load = include_body_load
        self.refine = refine
        self.n_runs = 0

    def run(self, theta: ParameterVector):
        """(times, vz_L, p_bar) arrays over the grid."""
        self.n_runs += 1
        st = solve_static(self.sysc, young_modulus=theta.young_modulus,
                          include_body_load=self.include_body_load)
        rec = run_transient(self.sysc, self.grid, st, circuit=theta.circuit,
                            damping=theta.damping,
                            young_modulus=theta.young_modulus,
                            include_body_load=self.include_body_load,
                            record_energies=False, refine=self.refine)
        return self.grid.times, rec.vz_L, rec.p_bar

    def run_with_jacobian(self, theta: ParameterVector):
        """Observables plus their sensitivity series (direct
        differentiation, same factorization as the direct step)."""
        self.n_runs += 1
        st = solve_static(self.sysc, young_modulus=theta.young_modulus,
                          include_body_load=self.include_body_load)
        (t, vz, pbar), srec = run_transient_with_sensitivities(
            self.sysc, self.grid, st, theta,
            include_body_load=self.include_body_load, refine=self.refine)
        return (t, vz, pbar), srec


def objective(theta: ParameterVector, measurements: MeasurementSet,
              model: ForwardModel):
    """(F, F_vz, F_V): half sum of squared normalized residuals, with the
    simulated observables linearly interpolated to the measurement times.
    Forward-model failures evaluate to +inf."""
    try:
        t, vz, pbar = model.run(theta)
    except NumericalError:
        return np.inf, np.inf, np.inf
    rv, ru = _residual_blocks(theta, measurements, (t, vz, pbar))
    f_vz = 0.5 * float(rv @ rv)
    f_v = 0.5 * float(ru @ ru)
    return f_vz + f_v, f_vz, f_v


def _residual_blocks(theta, measurements, model_out, s_vz=None, s_v=None):
    t, vz, pbar = model_out
    if measurements.times[-1] > t[-1] + 1e-12:
        raise ValueError("simulation horizon does not cover the measurements")
    s_vz = measurements.s_vz if s_vz is None else s_vz
    s_v = measurements.s_v if s_v is None else s_v
    vz_i = np.interp(measurements.times, t, vz)
    pb_i = np.interp(measurements.times, t, pbar)
    return ((vz_i - measurements.velocity) / s_vz,
            (pb_i - measurements.voltage) / s_v)


def residuals_and_jacobian(theta: ParameterVector,
                           measurements: MeasurementSet,
                           model: ForwardModel):
    """Stacked residual vector (2 N_m,) and its (2 N_m, 5) Jacobian from the
    propagated sensitivities, both interpolated to the measurement times."""
    out, srec = model.run_with_jacobian(theta)
    rv, ru = _residual_blocks(theta, measurements, out)
    dvz, dvb = srec.interpolate(measurements.times)
    jac = np.vstack([dvz / measurements.s_vz, dvb / measurements.s_v])
    return np.concatenate([rv, ru]), jac


@dataclass
class StageResult:
    active: tuple
    selector: str
    theta: ParameterVector
    cost: float
    n_evaluations: int
    history_theta: list = field(default_factory=list)
    history_f: list = field(default_factory=list)
    status: str = ""


@dataclass
class IdentResult:
    """Outcome of one identification run (possibly multi-stage)."""

    theta: ParameterVector
    f_total: float
    f_vz: float
    f_v: float
    n_evaluations: int
    strategy: str
    seed: int | None = None
    stages: list = field(default_factory=list)
    history_theta: list = field(default_factory=list)
    history_f: list = field(default_factory=list)

    def report(self, theta0=None, config_hash=None) -> dict:
        doc = {
            "strategy": self.strategy,
            "theta": _theta_dict(self.theta),
            "bounds": {"lower": self.theta.lower.tolist(),
                       "upper": self.theta.upper.tolist()},
            "objective": {"F": self.f_total, "F_vz": self.f_vz,
                          "F_V": self.f_v},
            "n_evaluations": self.n_evaluations,
            "history": {"theta": [list(map(float, h))
                                  for h in self.history_theta],
                        "F": list(map(float, self.history_f))},
            "stages": [{
                "active": list(s.active), "selector": s.selector,
                "theta": _theta_dict(s.theta), "cost": s.cost,
                "n_evaluations": s.n_evaluations, "status": s.status,
            } for s in self.stages],
        }
        if self.seed is not None:
            doc["seed"] = self.seed
        if theta0 is not None:
            doc["theta0"] = _theta_dict(theta0)
        if config_hash is not None:
            doc["config_hash"] = config_hash
        return doc


def _theta_dict(theta: ParameterVector) -> dict:
    return {name: float(v)
            for name, v in zip(ParameterVector.NAMES, theta.as_array())}


# ----------------------------------------------------------------------------
# Normalized coordinates
# ----------------------------------------------------------------------------

class BoxTransform:
    """Maps theta <-> z in [0,1]^5 (log scale for E, R, C)."""

    def __init__(self, lower, upper):
        self.lower = np.asarray(lower, dtype=float)
        self.upper = np.asarray(upper, dtype=float)
        self.g_lo = np.where(LOG_SCALED, np.log(self.lower), self.lower)
        self.g_hi = np.where(LOG_SCALED, np.log(self.upper), self.upper)
        self.span = self.g_hi - self.g_lo
        if np.any(self.span <= 0):
            raise ValueError("degenerate bounds")

    def to_z(self, values) -> np.ndarray:
        g = np.where(LOG_SCALED, np.log(values), values)
        return (g - self.g_lo) / self.span

    def to_theta_values(self, z) -> np.ndarray:
        g = self.g_lo + np.asarray(z) * self.span
        return np.where(LOG_SCALED, np.exp(g), g)

    def dtheta_dz(self, values) -> np.ndarray:
        """Diagonal of the chain-rule factor at given physical values."""
        return np.where(LOG_SCALED, np.asarray(values) * self.span, self.span)


# ----------------------------------------------------------------------------
# Bounded least squares (TRF)
# ----------------------------------------------------------------------------

def identify_lsq(theta0: ParameterVector, measurements: MeasurementSet,
                 model: ForwardModel,
                 active_mask=(True,) * 5,
                 residual_selector: str = BOTH,
                 jacobian: str = "sensitivity",
                 ftol: float = 1e-8, xtol: float = 1e-8,
                 max_iterations: int = 100) -> StageResult:
    """Bounded nonlinear least squares over the parameters enabled by
    active_mask, fitting only the residual block chosen by
    residual_selector.  In single-block mode the normalization constant of
    that block is set to one (a constant scale does not move the minimum).

    jacobian: "sensitivity" uses the direct-differentiation series;
    "fd" lets the trust-region solver build two-point finite differences.
    """
    if residual_selector not in (VELOCITY, VOLTAGE, BOTH):
        raise ValueError(f"unknown residual selector {residual_selector!r}")
    if jacobian not in ("sensitivity", "fd"):
        raise ValueError(f"unknown jacobian mode {jacobian!r}")
    active = np.asarray(active_mask, dtype=bool)
    if not active.any():
        raise ValueError("no active parameters")
    tr = BoxTransform(theta0.lower, theta0.upper)
    z_full = tr.to_z(theta0.as_array())
    scales = {VELOCITY: (1.0, None), VOLTAGE: (None, 1.0),
              BOTH: (None, None)}[residual_selector]

    history_theta, history_f = [], []
    cache = {}

    def theta_at(z_active):
        z = z_full.copy()
        z[active] = z_active
        vals = tr.to_theta_values(z)
        return ParameterVector(*vals, theta0.lower, theta0.upper)

    def evaluate(z_active):
        key = z_active.tobytes()
        if key not in cache:
            th = theta_at(z_active)
            if jacobian == "sensitivity":
                out, srec = model.run_with_jacobian(th)
                dvz, dvb = srec.interpolate(measurements.times)
            else:
                out = model.run(th)
                dvz = dvb = None
            rv, ru = _residual_blocks(th, measurements, out,
                                      s_vz=scales[0], s_v=scales[1])
            if residual_selector == VELOCITY:
                r, j = rv, dvz
            elif residual_selector == VOLTAGE:
                r, j = ru, dvb
            else:
                r = np.concatenate([rv, ru])
                j = (np.vstack([dvz / measurements.s_vz,
                                dvb / measurements.s_v])
                     if dvz is not None else None)
            if j is not None:
                j = j[:, active] * tr.dtheta_dz(th.as_array())[None, active]
            if not np.all(np.isfinite(r)):
                raise NumericalError("non-finite residuals at theta = "
                                     f"{th.as_array()}")
            history_theta.append(th.as_array())
            history_f.append(0.5 * float(r @ r))
            cache.clear()
            cache[key] = (r, j)
        return cache[key]

    def fun(z_active):
        return evaluate(z_active)[0]

    def jac(z_active):
        return evaluate(z_active)[1]

    z0 = z_full[active]
    max_nfev = (max_iterations if jacobian == "sensitivity"
                else max_iterations * (int(active.sum()) + 1))
    res = least_squares(
        fun, z0, jac=jac if jacobian == "sensitivity" else "2-point",
        bounds=(np.zeros(z0.size), np.ones(z0.size)),
        method="trf", ftol=ftol, xtol=xtol, gtol=1e-14, max_nfev=max_nfev)
    theta_hat = theta_at(res.x)
    return StageResult(
        active=tuple(np.array(ParameterVector.NAMES)[active]),
        selector=residual_selector, theta=theta_hat, cost=float(res.cost),
        n_evaluations=model.n_runs, history_theta=history_theta,
        history_f=history_f, status=res.message)


def identify_sequential(theta0: ParameterVector,
                        measurements: MeasurementSet, model: ForwardModel,
                        jacobian: str = "sensitivity",
                        ftol: float = 1e-8, xtol: float = 1e-8,
                        max_iterations: int = 100,
                        passes: int = 1) -> IdentResult:
    """Sequential protocol: mechanical parameters (alpha, beta, E) against
    the velocity block with the electrical pair frozen, then (R, C) against
    the voltage block with the mechanics frozen.

    With passes > 1 the two stages alternate; on clean data this drives the
    weakly identifiable mass-proportional damping to the joint optimum that
    a single pass cannot reach (each stage inherits the other block's
    residual error, which lands on the flattest direction).
    """
    if passes < 1:
        raise ValueError("passes must be >= 1")
    runs_before = model.n_runs
    theta = theta0
    stages = []
    for _ in range(passes):
        mark = model.n_runs
        stage1 = identify_lsq(theta, measurements, model,
                              active_mask=(True, True, True, False, False),
                              residual_selector=VELOCITY, jacobian=jacobian,
                              ftol=ftol, xtol=xtol,
                              max_iterations=max_iterations)
        stage1.n_evaluations = model.n_runs - mark
        mark = model.n_runs
        stage2 = identify_lsq(stage1.theta, measurements, model,
                              active_mask=(False, False, False, True, True),
                              residual_selector=VOLTAGE, jacobian=jacobian,
                              ftol=ftol, xtol=xtol,
                              max_iterations=max_iterations)
        stage2.n_evaluations = model.n_runs - mark
        stages += [stage1, stage2]
        theta = stage2.theta

    f, f_vz, f_v = objective(theta, measurements, model)
    return IdentResult(
        theta=theta, f_total=f, f_vz=f_vz, f_v=f_v,
        n_evaluations=model.n_runs - runs_before, strategy="sequential",
        stages=stages,
        history_theta=sum((s.history_theta for s in stages), []),
        history_f=sum((s.history_f for s in stages), []))


def identify_cmaes(theta0: ParameterVector, measurements: MeasurementSet,
                   model: ForwardModel, population: int = 16,
                   generations: int = 400, seed: int = 0,
                   sigma0: float = 0.3) -> IdentResult:
    """Global strategy: CMA-ES over all five parameters on the full
    objective, in normalized box coordinates."""
    tr = BoxTransform(theta0.lower, theta0.upper)

    def fun(z):
        vals = tr.to_theta_values(np.clip(z, 0.0, 1.0))
        th = ParameterVector(*vals, theta0.lower, theta0.upper)
        f, _, _ = objective(th, measurements, model)
        return f

    runs_before = model.n_runs
    res = minimize_cmaes(fun, tr.to_z(theta0.as_array()), sigma0,
                         np.zeros(5), np.ones(5), population=population,
                         generations=generations, seed=seed)
    vals = tr.to_theta_values(res.x_best)
    theta_hat = ParameterVector(*vals, theta0.lower, theta0.upper)
    f, f_vz, f_v = objective(theta_hat, measurements, model)
    history_theta = [tr.to_theta_values(x) for x in res.history_best_x]
    return IdentResult(
        theta=theta_hat, f_total=f, f_vz=f_vz, f_v=f_v,
        n_evaluations=res.n_evaluations, strategy="cmaes", seed=seed,
        history_theta=history_theta,
        history_f=res.history_best_f.tolist())


def save_report(result: IdentResult, path, theta0=None,
                config_hash=None) -> None:
    with open(path, "w", newline="\n") as fh:
        json.dump(result.report(theta0=theta0, config_hash=config_hash),
                  fh, indent=2, sort_keys=True)
        fh.write("\n")
