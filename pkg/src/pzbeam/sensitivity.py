"""Direct-differentiation sensitivities of the transient states with
respect to theta = [alpha, beta, E, R, C].

Differentiating the one-step residual Phi(theta, y_n, y_{n-1}) = 0 gives the
recurrence

    (dPhi/dy_n) (dy_n/dtheta) = -(dPhi/dtheta + (dPhi/dy_{n-1}) (dy_{n-1}/dtheta)),

whose system matrix is exactly the factorized transient step matrix, so each
step costs n_theta extra back-substitutions.  A central finite-difference
harness reruns the forward model at perturbed parameters to verify the
propagated series.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .assembly import ConstrainedSystem
from .materials import CircuitParams, ParameterVector, RayleighDamping
from .solvers import StateVector, TimeGrid, TransientOperator, run_transient, solve_static

PARAM_NAMES = ParameterVector.NAMES
N_PARAMS = 5


@dataclass
class SensitivityBlock:
    """d(state)/d(theta_k) for all five parameters, columns in theta order."""

    u: np.ndarray  # (n_u, 5)
    u_dot: np.ndarray
    u_ddot: np.ndarray
    p: np.ndarray  # (n_p, 5)
    p_dot: np.ndarray
    p_bar: np.ndarray  # (5,)

    @classmethod
    def zero(cls, n_u: int, n_p: int) -> "SensitivityBlock":
        return cls(np.zeros((n_u, N_PARAMS)), np.zeros((n_u, N_PARAMS)),
                   np.zeros((n_u, N_PARAMS)), np.zeros((n_p, N_PARAMS)),
                   np.zeros((n_p, N_PARAMS)), np.zeros(N_PARAMS))


@dataclass
class SensitivityRecord:
    """Per-step Jacobian rows of the two observables wrt theta."""

    t: np.ndarray
    dvz: np.ndarray  # (n_steps+1, 5) velocity at L
    dv_bar: np.ndarray  # (n_steps+1, 5) electrode potential

    def interpolate(self, times: np.ndarray):
        """Linear interpolation of both Jacobian blocks to given times."""
        dvz = np.column_stack([np.interp(times, self.t, self.dvz[:, k])
                               for k in range(N_PARAMS)])
        dvb = np.column_stack([np.interp(times, self.t, self.dv_bar[:, k])
                               for k in range(N_PARAMS)])
        return dvz, dvb


class SensitivityPropagator:
    """Propagates d(state)/d(theta) alongside a direct transient run."""

    def __init__(self, op: TransientOperator, theta: ParameterVector):
        if not op.sysc.has_piezo:
            raise ValueError("sensitivity propagation expects the coupled system")
        self.op = op
        self.theta = theta
        sysc = op.sysc
        # dK/dE acts through the beam block only
        self.k_beam_by_e = (sysc.K_beam / sysc.full.young_ref).tocsr()
        self.sens = SensitivityBlock.zero(sysc.n_u, sysc.n_p)

    def initialize_static(self, include_tip_load: bool = True,
                          include_body_load: bool = True,
                          include_initial_sensitivities: bool = True) -> None:
        """Initial-condition sensitivities.

        Only E enters the static problem (damping and circuit do not), so
        du0/dE comes from differentiating the static system; everything
        else starts at zero.  The extra solve reuses the static block
        structure with the rescaled stiffness.
        """
        self.sens = SensitivityBlock.zero(self.op.sysc.n_u, self.op.sysc.n_p)
        if not include_initial_sensitivities:
            return
        sysc = self.op.sysc
        import scipy.sparse as sp
        from scipy.sparse.linalg import splu

        kk = sysc.stiffness(self.theta.young_modulus)
        bmg = (sysc.B - sysc.G).tocsr()
        dt_block = (sysc.D - sysc.F + sysc.F.T + sysc.M_p).tocsr()
        a = sp.bmat([[kk, bmg.T], [-bmg, dt_block]], format="csc")
        f = np.zeros(sysc.n_u)
        if include_body_load:
            f = f + sysc.body_load
        if include_tip_load:
            f = f + sysc.point_load
        lu = splu(a)
        x = lu.solve(np.concatenate([f, np.zeros(sysc.n_p)]))
        u0 = x[:sysc.n_u]
        rhs = np.concatenate([-(self.k_beam_by_e @ u0), np.zeros(sysc.n_p)])
        dx = lu.solve(rhs)
        k_e = PARAM_NAMES.index("young_modulus")
        self.sens.u[:, k_e] = dx[:sysc.n_u]
        self.sens.p[:, k_e] = dx[sysc.n_u:]
        # d(u_ddot0)/dE from the released equation of motion (u_dot0 = 0)
        du = dx[:sysc.n_u]
        dp = dx[sysc.n_u:]
        rhs_a = -(self.k_beam_by_e @ u0) - kk @ du - bmg.T @ dp
        self.sens.u_ddot[:, k_e] = splu(sysc.M.tocsc()).solve(rhs_a)

    def step(self, prev: StateVector, new: StateVector) -> None:
        """Advance all five sensitivity columns past an already-solved
        direct step (prev -> new), reusing the direct factorization."""
        op = self.op
        sysc = op.sysc
        dt = op.grid.dt
        gam, bet = op.grid.newmark_gamma, op.grid.newmark_beta
        s = self.sens
        nu, npd = sysc.n_u, sysc.n_p
        r, c = op.circuit.resistance, op.circuit.capacitance

        su_star = s.u + dt * s.u_dot + (0.5 - bet) * dt * dt * s.u_ddot
        sv_star = s.u_dot + (1.0 - gam) * dt * s.u_ddot

        rhs = np.zeros((nu + npd + 1, N_PARAMS))
        # previous-state propagation mirrors the direct right-hand side
        rhs[:nu] = -(op.kk @ su_star) - op.cc @ sv_star
        rhs[nu:-1] = op.bmg @ su_star
        rhs[-1] = (-(op.one_g @ sv_star) - (op.one_f @ s.p) / dt
                   + (0.5 / r - c / dt) * s.p_bar)

        # explicit parameter partials at the solved new state
        i_a, i_b, i_e, i_r, i_c = range(N_PARAMS)
        rhs[:nu, i_a] -= sysc.M @ new.u_dot
        rhs[:nu, i_b] -= op.kk @ new.u_dot
        rhs[:nu, i_e] -= self.k_beam_by_e @ (new.u + self.theta.beta * new.u_dot)
        # circuit row: -(p_bar^n + p_bar^{n-1})/(2R) differentiates wrt R;
        # -C (p_bar^n - p_bar^{n-1})/dt wrt C
        rhs[-1, i_r] -= (new.p_bar + prev.p_bar) * 0.5 / (r * r)
        rhs[-1, i_c] += (new.p_bar - prev.p_bar) / dt

        x = op.solve(rhs)
        sa = x[:nu]
        sp_new = x[nu:-1]
        spbar = x[-1]
        self.sens = SensitivityBlock(
            u=su_star + bet * dt * dt * sa,
            u_dot=sv_star + gam * dt * sa,
            u_ddot=sa,
            p=sp_new,
            p_dot=(sp_new - s.p) / dt,
            p_bar=spbar)


def run_transient_with_sensitivities(
        sysc: ConstrainedSystem, grid: TimeGrid, initial: StateVector,
        theta: ParameterVector,
        include_body_load: bool = True,
        include_initial_sensitivities: bool = True,
        refine: int = 1):
    """Direct transient plus sensitivity propagation in one sweep.

    Returns (TransientRecord-like light record, SensitivityRecord).
    """
    load = sysc.body_load.copy() if include_body_load else np.zeros(sysc.n_u)
    op = TransientOperator(sysc, grid,
                           circuit=theta.circuit, damping=theta.damping,
                           young_modulus=theta.young_modulus, load=load,
                           refine=refine)
    prop = SensitivityPropagator(op, theta)
    prop.initialize_static(
        include_body_load=include_body_load,
        include_initial_sensitivities=include_initial_sensitivities)

    state = initial.copy()
    state.u_ddot = op.initial_acceleration(state)

    n = grid.n_steps + 1
    l_node = sysc.full.mesh.point_tags["L"]
    iz = sysc.reduced_u_dof(l_node, 2)
    vz = np.zeros(n)
    pbar = np.zeros(n)
    srec = SensitivityRecord(grid.times, np.zeros((n, N_PARAMS)),
                             np.zeros((n, N_PARAMS)))
    vz[0] = state.u_dot[iz]
    pbar[0] = state.p_bar
    srec.dvz[0] = prop.sens.u_dot[iz]
    srec.dv_bar[0] = prop.sens.p_bar
    for i in range(1, n):
        new = op.step(state, step_index=i)
        prop.step(state, new)
        vz[i] = new.u_dot[iz]
        pbar[i] = new.p_bar
        srec.dvz[i] = prop.sens.u_dot[iz]
        srec.dv_bar[i] = prop.sens.p_bar
        state = new
    return (grid.times, vz, pbar), srec


def finite_difference_observables(sysc, grid, theta: ParameterVector, k: int,
                                  rel_step: float = 1e-5,
                                  include_body_load: bool = True):
    """Central finite differences of (vz_L, p_bar) series wrt theta_k,
    rerunning the static solve and transient at the perturbed parameters."""
    base = theta.as_array()
    h = rel_step * abs(base[k]) if base[k] != 0 else rel_step
    out = []
    for sign in (+1.0, -1.0):
        vals = base.copy()
        vals[k] += sign * h
        th = ParameterVector(*vals, theta.lower, theta.upper)
        st = solve_static(sysc, young_modulus=th.young_modulus,
                          include_body_load=include_body_load)
        rec = run_transient(sysc, grid, st, circuit=th.circuit,
                            damping=th.damping,
                            young_modulus=th.young_modulus,
                            include_body_load=include_body_load,
                            record_energies=False)
        out.append((rec.vz_L, rec.p_bar))
    dvz = (out[0][0] - out[1][0]) / (2.0 * h)
    dvb = (out[0][1] - out[1][1]) / (2.0 * h)
    return dvz, dvb
