"""Static, modal and transient solvers for the coupled discrete system.

The transient step solves one constant-coefficient linear system per step
for (u_ddot, p, p_bar): the Newmark update (displacement block), the
quasi-static electrical balance with the non-symmetric Nitsche terms, and
the electrode/circuit current balance with a trapezoidal resistor term and
backward-difference capacitor term.  The factorization is computed once and
reused for every step (and by the sensitivity propagation).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as dla
import scipy.sparse as sp
from scipy.sparse.linalg import eigsh, splu

from .assembly import ConstrainedSystem, electrode_charge
from .errors import NumericalError
from .materials import CircuitParams, RayleighDamping

#: Free-DOF count below which the dense generalized eigensolver is used.
DENSE_EIG_CUTOFF = 3000


@dataclass(frozen=True)
class TimeGrid:
    """Uniform time discretization with Newmark parameters."""

    dt: float
    n_steps: int
    newmark_beta: float = 0.25
    newmark_gamma: float = 0.5

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be > 0")
        if self.n_steps < 1:
            raise ValueError("n_steps must be >= 1")
        if not (2.0 * self.newmark_beta >= self.newmark_gamma >= 0.5):
            raise ValueError("unconditional stability requires "
                             "2*beta >= gamma >= 1/2")

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.n_steps + 1)

    @property
    def t_end(self) -> float:
        return self.dt * self.n_steps


@dataclass
class StateVector:
    """State at one time step, in reduced (free-DOF) coordinates."""

    u: np.ndarray
    u_dot: np.ndarray
    u_ddot: np.ndarray
    p: np.ndarray
    p_dot: np.ndarray
    p_bar: float
    time: float = 0.0

    @classmethod
    def zero(cls, sysc: ConstrainedSystem, time: float = 0.0) -> "StateVector":
        nu, npd = sysc.n_u, sysc.n_p
        return cls(np.zeros(nu), np.zeros(nu), np.zeros(nu),
                   np.zeros(npd), np.zeros(npd), 0.0, time)

    def copy(self) -> "StateVector":
        return StateVector(self.u.copy(), self.u_dot.copy(), self.u_ddot.copy(),
                           self.p.copy(), self.p_dot.copy(), self.p_bar,
                           self.time)


@dataclass
class TransientRecord:
    """Per-step samples at the laser point and the electrode."""

    t: np.ndarray
    uz_L: np.ndarray
    vz_L: np.ndarray
    p_bar: np.ndarray
    q_pq: np.ndarray
    q_p0: np.ndarray
    e_kin: np.ndarray
    e_strain: np.ndarray
    e_elec: np.ndarray
    phi_spread: np.ndarray  # max |phi - p_bar| over electrode DOFs

    CSV_HEADER = "t,uz_L,vz_L,p_bar,Q_pQ,Q_p0,E_kin,E_strain,E_elec"

    @property
    def n_samples(self) -> int:
        return len(self.t)

    def total_energy(self) -> np.ndarray:
        return self.e_kin + self.e_strain + self.e_elec

    def to_csv(self, path) -> None:
        cols = (self.t, self.uz_L, self.vz_L, self.p_bar, self.q_pq,
                self.q_p0, self.e_kin, self.e_strain, self.e_elec)
        with open(path, "w", newline="\n") as fh:
            fh.write(self.CSV_HEADER + "\n")
            for row in zip(*cols):
                fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def solve_static(sysc: ConstrainedSystem,
                 young_modulus: float | None = None,
                 include_tip_load: bool = True,
                 include_body_load: bool = True) -> StateVector:
    """Static equilibrium under self-weight and the tip point load.

    With all rates zero the circuit drains the floating electrode through
    the resistor, so p_bar = 0 and (u, p) solve the static coupled block
    system.  The returned residual is checked to 1e-10 relative.
    """
    kk = sysc.stiffness(young_modulus)
    f = np.zeros(sysc.n_u)
    if include_body_load:
        f = f + sysc.body_load
    if include_tip_load:
        f = f + sysc.point_load
    state = StateVector.zero(sysc)
    if sysc.has_piezo:
        bmg = (sysc.B - sysc.G).tocsr()
        dt_block = (sysc.D - sysc.F + sysc.F.T + sysc.M_p).tocsr()
        a = sp.bmat([[kk, bmg.T], [-bmg, dt_block]], format="csc")
        rhs = np.concatenate([f, np.zeros(sysc.n_p)])
        try:
            lu = splu(a)
        except RuntimeError as exc:
            raise NumericalError(f"static factorization failed: {exc}") from exc
        x = lu.solve(rhs)
        x += lu.solve(rhs - a @ x)
        _check_residual(a, x, rhs)
        state.u = x[:sysc.n_u]
        state.p = x[sysc.n_u:]
    else:
        kk = kk.tocsc()
        try:
            lu = splu(kk)
        except RuntimeError as exc:
            raise NumericalError(f"static factorization failed: {exc}") from exc
        x = lu.solve(f)
        x += lu.solve(f - kk @ x)
        _check_residual(kk, x, f)
        state.u = x
    return state


def _check_residual(a, x, rhs, tol=1e-10):
    """Backward-error residual check: |Ax - b| against |A||x| + |b|.

    A backward-stable solve of a (near-)singular system returns a huge
    spurious solution with a deceptively small backward error, so the
    solution magnitude is bounded against the load as well."""
    scale_vec = abs(a) @ np.abs(x)
    rhs_norm = np.linalg.norm(rhs)
    if np.linalg.norm(scale_vec) > 1e12 * max(rhs_norm, 1e-300):
        raise NumericalError("singular or ill-posed system (missing clamp "
                             "or ground?): solution magnitude diverged")
    resid = np.linalg.norm(a @ x - rhs)
    scale = max(np.linalg.norm(scale_vec + np.abs(rhs)), 1e-300)
    if resid > tol * scale:
        raise NumericalError(f"linear solve residual {resid/scale:.2e} "
                             f"exceeds {tol:g} relative")


def solve_modal(sysc: ConstrainedSystem, n_modes: int = 6,
                include_piezo: bool = True,
                young_modulus: float | None = None,
                dense_cutoff: int = DENSE_EIG_CUTOFF):
    """Lowest natural frequencies and mass-normalized mode shapes.

    Mechanical-only meshes solve K x = omega^2 M x directly.  With the
    piezo region included, the electrical block (dielectric, Nitsche flux
    and penalty terms, floating potential with zero net electrode charge)
    is condensed into an effective stiffness by its Schur complement; the
    tiny non-symmetric remainder of the Nitsche terms is symmetrized away.

    Returns (frequencies_hz ascending (n_modes,), modes (n_u, n_modes)).
    """
    if n_modes < 1:
        raise ValueError("n_modes must be >= 1")
    kk = sysc.stiffness(young_modulus).tocsr()
    if include_piezo and sysc.has_piezo:
        kk = kk + _electrical_schur_correction(sysc)
        kk = (0.5 * (kk + kk.T)).tocsr()
    m = sysc.M.tocsr()

    n = kk.shape[0]
    if n <= dense_cutoff:
        w, v = dla.eigh(kk.toarray(), m.toarray())
        w, v = w[:n_modes], v[:, :n_modes]
    else:
        try:
            w, v = eigsh(kk, k=n_modes, M=m, sigma=0.0, which="LM")
        except Exception as exc:  # noqa: BLE001 - eigsh raises various types
            raise NumericalError(f"eigensolver failed: {exc}") from exc
        order = np.argsort(w)
        w, v = w[order], v[:, order]
    w = np.clip(w, 0.0, None)
    freqs = np.sqrt(w) / (2.0 * np.pi)
    for j in range(v.shape[1]):
        v[:, j] /= np.sqrt(v[:, j] @ (m @ v[:, j]))
    return freqs, v


def _electrical_schur_correction(sysc: ConstrainedSystem) -> sp.csr_matrix:
    """-C_up E^{-1} C_pu restricted to the coupled displacement DOFs.

    E is the static electrical block extended by the floating potential
    with a zero-net-charge electrode (open-circuit modal condition).
    """
    bmg = (sysc.B - sysc.G).tocsr()
    dt_block = (sysc.D - sysc.F + sysc.F.T + sysc.M_p).tocsr()
    ft_mp_1 = (sysc.F.T + sysc.M_p) @ sysc.ones
    one_f = sysc.ones @ sysc.F
    one_g = sysc.ones @ sysc.G
    e_block = sp.bmat([[dt_block, -ft_mp_1[:, None]],
                       [sp.csr_matrix(one_f[None, :]), None]], format="csc")
    c_pu = sp.vstack([-bmg, sp.csr_matrix(-one_g[None, :])]).tocsc()
    c_up = sp.hstack([bmg.T, sp.csr_matrix((sysc.G.T @ sysc.ones)[:, None])]).tocsr()

    # both coupling blocks are supported on the same small set of
    # displacement DOFs, so the correction is a dense block on that set
    cols = np.unique(c_pu.tocoo().col) if c_pu.nnz else np.empty(0, np.int64)
    rows = np.unique(c_up.tocoo().row) if c_up.nnz else np.empty(0, np.int64)
    if not len(cols):
        return sp.csr_matrix((sysc.n_u, sysc.n_u))
    lu = splu(e_block)
    x = lu.solve(np.asarray(c_pu[:, cols].todense()))
    block = -np.asarray((c_up[rows] @ x))
    rr = np.repeat(rows, len(cols))
    cc = np.tile(cols, len(rows))
    return sp.coo_matrix((block.ravel(), (rr, cc)),
                         shape=(sysc.n_u, sysc.n_u)).tocsr()


class TransientOperator:
    """Factorized step operator for the fully discrete system.

    Constant coefficients and a uniform step size mean a single sparse LU
    factorization serves the whole run; the same factorization also serves
    the sensitivity right-hand sides.
    """

    def __init__(self, sysc: ConstrainedSystem, grid: TimeGrid,
                 circuit: CircuitParams | None = None,
                 damping: RayleighDamping | None = None,
                 young_modulus: float | None = None,
                 load: np.ndarray | None = None,
                 refine: int = 1):
        self.sysc = sysc
        self.grid = grid
        self.circuit = circuit or CircuitParams(1e7, 1e-9)
        self.damping = damping if damping is not None else sysc.full.damping
        self.young = (young_modulus if young_modulus is not None
                      else sysc.full.young_ref)
        self.load = (load if load is not None else sysc.body_load.copy())
        self.refine = refine

        dt = grid.dt
        gam, bet = grid.newmark_gamma, grid.newmark_beta
        self.kk = sysc.stiffness(self.young).tocsr()
        self.cc = sysc.rayleigh(self.damping.alpha, self.damping.beta,
                                self.young).tocsr()
        a_uu = (sysc.M + gam * dt * self.cc + bet * dt * dt * self.kk).tocsr()

        if sysc.has_piezo:
            self.bmg = (sysc.B - sysc.G).tocsr()
            self.dt_block = (sysc.D - sysc.F + sysc.F.T + sysc.M_p).tocsr()
            self.gt1 = np.asarray(sysc.G.T @ sysc.ones).ravel()
            self.ftmp1 = np.asarray((sysc.F.T + sysc.M_p) @ sysc.ones).ravel()
            self.one_g = np.asarray(sysc.ones @ sysc.G).ravel()
            self.one_f = np.asarray(sysc.ones @ sysc.F).ravel()
            r, c = self.circuit.resistance, self.circuit.capacitance
            # circuit row: charge balance 1'G du/dt - 1'F dp/dt equals the
            # current drawn by the RC load (stable discharge sign)
            a = sp.bmat([
                [a_uu, self.bmg.T, sp.csr_matrix(self.gt1[:, None])],
                [-bet * dt * dt * self.bmg, self.dt_block,
                 sp.csr_matrix(-self.ftmp1[:, None])],
                [sp.csr_matrix(gam * dt * self.one_g[None, :]),
                 sp.csr_matrix(-self.one_f[None, :] / dt),
                 sp.csr_matrix([[-0.5 / r - c / dt]])],
            ], format="csc")
        else:
            a = a_uu.tocsc()
        self.matrix = a.tocsr()
        try:
            self.lu = splu(a)
        except (RuntimeError, ValueError) as exc:
            raise NumericalError(f"transient factorization failed: {exc}") from exc
        self._rhs = np.empty(a.shape[0])
        self._electrode_pos = (sysc.electrode_dof_positions()
                               if sysc.has_piezo else np.empty(0, np.int64))

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """LU solve with iterative refinement; rhs may hold multiple
        columns.  The block system mixes displacement rows (~1e10) with
        dielectric rows (~1e-11), so a raw solve leaves several digits on
        the table; refinement restores them at the cost of one matvec and
        back-substitution per pass."""
        x = self.lu.solve(rhs)
        for _ in range(self.refine):
            x += self.lu.solve(rhs - self.matrix @ x)
        return x

    def predictors(self, s: StateVector):
        dt = self.grid.dt
        gam, bet = self.grid.newmark_gamma, self.grid.newmark_beta
        u_star = s.u + dt * s.u_dot + (0.5 - bet) * dt * dt * s.u_ddot
        v_star = s.u_dot + (1.0 - gam) * dt * s.u_ddot
        return u_star, v_star

    def initial_acceleration(self, s: StateVector) -> np.ndarray:
        """Consistent u_ddot from the dynamic equation at the current state
        (used at t = 0 with the post-release load)."""
        rhs = self.load - self.cc @ s.u_dot - self.kk @ s.u
        if self.sysc.has_piezo:
            rhs = rhs - self.bmg.T @ s.p - self.gt1 * s.p_bar
        return splu(self.sysc.M.tocsc()).solve(rhs)

    def step(self, s: StateVector, step_index: int = 0) -> StateVector:
        dt = self.grid.dt
        gam, bet = self.grid.newmark_gamma, self.grid.newmark_beta
        u_star, v_star = self.predictors(s)
        nu = self.sysc.n_u
        if self.sysc.has_piezo:
            r, c = self.circuit.resistance, self.circuit.capacitance
            rhs = self._rhs
            rhs[:nu] = self.load - self.cc @ v_star - self.kk @ u_star
            rhs[nu:-1] = self.bmg @ u_star
            rhs[-1] = (-self.one_g @ v_star - (self.one_f @ s.p) / dt
                       + (0.5 / r - c / dt) * s.p_bar)
            x = self.solve(rhs)
            if not np.all(np.isfinite(x)):
                raise NumericalError(f"non-finite state at step {step_index}")
            a_new = x[:nu]
            p_new = x[nu:-1]
            p_bar = float(x[-1])
        else:
            rhs = self.load - self.cc @ v_star - self.kk @ u_star
            x = self.solve(rhs)
            if not np.all(np.isfinite(x)):
                raise NumericalError(f"non-finite state at step {step_index}")
            a_new = x
            p_new = s.p
            p_bar = 0.0
        new = StateVector(
            u=u_star + bet * dt * dt * a_new,
            u_dot=v_star + gam * dt * a_new,
            u_ddot=a_new,
            p=p_new,
            p_dot=(p_new - s.p) / dt if self.sysc.has_piezo else s.p_dot,
            p_bar=p_bar,
            time=s.time + dt)
        return new

    def residual_norms(self, prev: StateVector, new: StateVector):
        """Norms of the three discrete residual blocks at a solved step,
        with the natural scale of each block for relative checks."""
        dt = self.grid.dt
        s = self.sysc
        terms_a = [s.M @ new.u_ddot, self.cc @ new.u_dot, self.kk @ new.u,
                   -self.load]
        if s.has_piezo:
            terms_a += [self.bmg.T @ new.p, self.gt1 * new.p_bar]
        ra = sum(terms_a)
        scale_a = max(np.linalg.norm(t) for t in terms_a)
        out = [(np.linalg.norm(ra), scale_a)]
        if s.has_piezo:
            terms_b = [-(self.bmg @ new.u), self.dt_block @ new.p,
                       -self.ftmp1 * new.p_bar]
            rb = sum(terms_b)
            scale_b = max(np.linalg.norm(t) for t in terms_b)
            r, c = self.circuit.resistance, self.circuit.capacitance
            terms_c = [self.one_g @ new.u_dot, -(self.one_f @ new.p_dot),
                       -(new.p_bar + prev.p_bar) * 0.5 / r,
                       -c * (new.p_bar - prev.p_bar) / dt]
            rc = sum(terms_c)
            scale_c = max(abs(t) for t in terms_c)
            out += [(np.linalg.norm(rb), scale_b), (abs(rc), max(scale_c, 1e-300))]
        return out

    def electrode_spread(self, s: StateVector) -> float:
        if not len(self._electrode_pos):
            return 0.0
        return float(np.abs(s.p[self._electrode_pos] - s.p_bar).max())


def run_transient(sysc: ConstrainedSystem, grid: TimeGrid,
                  initial: StateVector,
                  circuit: CircuitParams | None = None,
                  damping: RayleighDamping | None = None,
                  young_modulus: float | None = None,
                  keep_tip_load: bool = False,
                  include_body_load: bool = True,
                  record_energies: bool = True,
                  consistent_initial_accel: bool = True,
                  refine: int = 1) -> TransientRecord:
    """Integrate the release transient and record the observables.

    The tip load is dropped at t = 0+ by default (sudden release); gravity
    stays on unless disabled.  One factorization is reused for all steps.
    """
    load = np.zeros(sysc.n_u)
    if include_body_load:
        load = load + sysc.body_load
    if keep_tip_load:
        load = load + sysc.point_load
    op = TransientOperator(sysc, grid, circuit, damping, young_modulus, load,
                           refine=refine)

    state = initial.copy()
    if consistent_initial_accel:
        state.u_ddot = op.initial_acceleration(state)

    n = grid.n_steps + 1
    rec = TransientRecord(*(np.zeros(n) for _ in range(10)))
    rec.t[:] = grid.times
    l_node = sysc.full.mesh.point_tags["L"]
    iz = sysc.reduced_u_dof(l_node, 2)

    evaluator = sysc.energy_evaluator() if record_energies else None

    def sample(i, s: StateVector, s_prev: StateVector | None):
        rec.uz_L[i] = s.u[iz]
        rec.vz_L[i] = s.u_dot[iz]
        rec.p_bar[i] = s.p_bar
        if record_energies:
            rec.q_pq[i], rec.q_p0[i] = electrode_charge(sysc, s.u, s.p)
            rec.e_kin[i] = 0.5 * (s.u_dot @ (sysc.M @ s.u_dot))
            rec.e_strain[i] = evaluator.strain_energy(sysc.expand_u(s.u),
                                                      op.young)
            if sysc.has_piezo:
                rec.e_elec[i] = evaluator.electric_energy(sysc.expand_p(s.p))
            rec.phi_spread[i] = op.electrode_spread(s)

    sample(0, state, None)
    for i in range(1, n):
        new = op.step(state, step_index=i)
        sample(i, new, state)
        state = new
    return rec
