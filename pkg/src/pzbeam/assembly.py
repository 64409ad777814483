"""Assembly of the coupled piezo-elastodynamic operators.

Voigt order everywhere: (11, 22, 33, 23, 13, 12), engineering shear.

Assembled blocks (full DOF numbering, scipy CSR):

* M, K (mass, stiffness; K split into beam and piezo parts so the beam
  Young's modulus can be rescaled without reassembly)
* B (piezo coupling, potential rows x displacement cols), D (dielectric)
* F, G (electrode flux matrices on the floating electrode) and the penalty
  mass M_p used by the non-symmetric Nitsche enforcement of phi = phi_bar
* body/point loads and the floating-electrode selector vector
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import mesh as meshmod
from .elements import TET_FACES, barycentric_gradients, physical_gradients, shape_values
from .errors import MeshError
from .materials import (ElasticMaterial, PiezoMaterial, RayleighDamping,
                        STANDARD_GRAVITY, isotropic_stiffness_voigt)
from .mesh import ELASTIC, GAMMA_P0, GAMMA_PQ, GAMMA_U, PIEZO, TaggedMesh, build_face_table
from .quadrature import barycentric_from_reference, tetrahedron_rule, triangle_rule
from .spaces import FieldSpace, scalar_space, vector_space

#: Default Nitsche penalty scale: gamma = factor * eps_33 / h_face.  The
#: factor keeps the electrode potential spread |phi - phi_bar| below 1e-3
#: of the signal scale on desk-scale meshes (the spread scales like
#: h_face / (factor * disc_thickness)).
DEFAULT_NITSCHE_FACTOR = 4.0e4


# ----------------------------------------------------------------------------
# Volume assembly kernels
# ----------------------------------------------------------------------------

def _cell_batch(mesh: TaggedMesh, rows: np.ndarray, degree: int):
    """Quadrature data for a batch of cells: (bary (nq,4), w (nq,), detJ (nc,),
    shape values (nq,nbf), physical grads (nc,nq,nbf,3))."""
    pts, w = tetrahedron_rule(degree)
    lam = barycentric_from_reference(pts)
    verts = mesh.corner_coords(rows)
    grad_l, det = barycentric_gradients(verts)
    vals = shape_values(mesh.order, lam)
    grads = physical_gradients(mesh.order, lam, grad_l)
    return lam, w, det, vals, grads


def _strain_operator(g: np.ndarray) -> np.ndarray:
    """Strain-displacement matrix (nc, 6, 3*nbf) from shape grads (nc, nbf, 3)."""
    nc, nbf, _ = g.shape
    bs = np.zeros((nc, 6, 3 * nbf))
    bs[:, 0, 0::3] = g[..., 0]
    bs[:, 1, 1::3] = g[..., 1]
    bs[:, 2, 2::3] = g[..., 2]
    bs[:, 3, 1::3] = g[..., 2]
    bs[:, 3, 2::3] = g[..., 1]
    bs[:, 4, 0::3] = g[..., 2]
    bs[:, 4, 2::3] = g[..., 0]
    bs[:, 5, 0::3] = g[..., 1]
    bs[:, 5, 1::3] = g[..., 0]
    return bs


def _scatter_pair(rows_dofs, cols_dofs):
    """Flattened (row, col) index arrays for element blocks."""
    nr, nc_ = rows_dofs.shape[1], cols_dofs.shape[1]
    r = np.repeat(rows_dofs, nc_, axis=1).ravel()
    c = np.tile(cols_dofs, (1, nr)).ravel()
    return r, c


def _to_csr(vals, idx, shape):
    return sp.coo_matrix((vals.ravel(), idx), shape=shape).tocsr()


def _assemble_region(mesh, rows, u_space, p_space, stiffness, density,
                     coupling=None, permittivity=None, gravity_vec=None):
    """Element integrals over one region; returns dict of CSR matrices."""
    degree = 2 * mesh.order
    lam, w, det, vals, grads = _cell_batch(mesh, rows, degree)
    nc = len(rows)
    nbf = vals.shape[1]
    cell_nodes = mesh.cells[rows]
    udofs = u_space.cell_dofs(cell_nodes)
    uu_idx = _scatter_pair(udofs, udofs)
    nu = (u_space.n_dofs, u_space.n_dofs)

    # mass: affine geometry makes the reference block exact
    mref = np.einsum("q,qi,qj->ij", w, vals, vals)
    me = density * det[:, None, None] * mref[None, :, :]
    m3 = np.zeros((nc, 3 * nbf, 3 * nbf))
    for comp in range(3):
        m3[:, comp::3, comp::3] = me
    out = {"M": _to_csr(m3, uu_idx, nu)}

    ke = np.zeros((nc, 3 * nbf, 3 * nbf))
    be = de = None
    if coupling is not None:
        pdofs = p_space.cell_dofs(cell_nodes)
        be = np.zeros((nc, nbf, 3 * nbf))
        de = np.zeros((nc, nbf, nbf))
    sqw = np.sqrt(w[None, :] * det[:, None])  # positive rule
    for q in range(len(w)):
        bs = _strain_operator(grads[:, q]) * sqw[:, q, None, None]
        ke += np.matmul(bs.transpose(0, 2, 1), np.matmul(stiffness, bs))
        if coupling is not None:
            g = grads[:, q] * sqw[:, q, None, None]
            be += np.matmul(g, np.matmul(coupling, bs))
            de += np.matmul(g, np.matmul(permittivity, g.transpose(0, 2, 1)))
    out["K"] = _to_csr(ke, uu_idx, nu)
    if coupling is not None:
        out["B"] = _to_csr(be, _scatter_pair(pdofs, udofs),
                           (p_space.n_dofs, u_space.n_dofs))
        out["D"] = _to_csr(de, _scatter_pair(pdofs, pdofs),
                           (p_space.n_dofs, p_space.n_dofs))

    if gravity_vec is not None:
        fe = density * det[:, None] * np.einsum("q,qi->i", w, vals)[None, :]
        load = np.zeros(u_space.n_dofs)
        for comp in range(3):
            np.add.at(load, udofs[:, comp::3], fe * gravity_vec[comp])
        out["body"] = load
    return out


# ----------------------------------------------------------------------------
# Facet (electrode) assembly
# ----------------------------------------------------------------------------

def facet_parents(mesh: TaggedMesh, facets: np.ndarray, region: str):
    """(cell, local_face) owner in `region` for each tagged facet."""
    table = build_face_table(mesh)
    out = []
    for tri in facets:
        owners = table.get(tuple(sorted(int(t) for t in tri)))
        if not owners:
            raise MeshError(f"tagged facet {tuple(tri)} is not a cell face")
        match = [o for o in owners if mesh.volume_tags[o[0]] == region]
        if not match:
            raise MeshError(f"facet {tuple(tri)} has no {region} parent cell")
        out.append(match[0])
    return out


def _facet_quad(mesh: TaggedMesh, cell: int, local_face: int, degree: int):
    """Surface quadrature on one cell face: (weights (nq,), shape vals
    (nq,nbf), physical grads (nq,nbf,3), outward unit normal, h_face)."""
    pts, w2 = triangle_rule(degree)
    zeta = barycentric_from_reference(pts)  # (nq, 3) face barycentric
    row = mesh.cells[cell]
    face = TET_FACES[local_face]
    lam = np.zeros((len(w2), 4))
    for k in range(3):
        lam[:, face[k]] = zeta[:, k]
    verts = mesh.corner_coords(np.array([cell]))
    grad_l, _ = barycentric_gradients(verts)
    vals = shape_values(mesh.order, lam)
    grads = physical_gradients(mesh.order, lam, grad_l)[0]

    p = mesh.vertices[[row[face[0]], row[face[1]], row[face[2]]]]
    av = np.cross(p[1] - p[0], p[2] - p[0])
    area2 = np.linalg.norm(av)
    normal = av / area2
    opp = mesh.vertices[row[local_face]]
    if np.dot(normal, opp - p[0]) > 0:
        normal = -normal
    h_face = max(np.linalg.norm(p[1] - p[0]), np.linalg.norm(p[2] - p[1]),
                 np.linalg.norm(p[0] - p[2]))
    return w2 * area2, vals, grads, normal, h_face


def _electrode_blocks(mesh, facets, region, u_space, p_space, piezo,
                      gamma_factor):
    """Flux matrices F, G, penalty mass M_p and the DOF selector vector on
    one electrode surface."""
    nu, npd = u_space.n_dofs, p_space.n_dofs
    degree = 2 * mesh.order
    eps = piezo.permittivity
    coup = piezo.coupling_voigt
    F = sp.lil_matrix((npd, npd))
    G = sp.lil_matrix((npd, nu))
    Mp = sp.lil_matrix((npd, npd))
    selector = np.zeros(npd)
    for (cell, lf) in facet_parents(mesh, facets, region):
        w, vals, grads, n, h = _facet_quad(mesh, cell, lf, degree)
        nodes = mesh.cells[cell][None, :]
        pd = p_space.cell_dofs(nodes)[0]
        ud = u_space.cell_dofs(nodes)[0]
        flux_p = np.einsum("qjx,xy,y->qj", grads, eps, n)  # (nq, nbf)
        fe = np.einsum("q,qi,qj->ij", w, vals, flux_p)
        bsq = _strain_operator(grads)  # grads (nq,nbf,3) -> (nq,6,3nbf)
        ne_bs = np.einsum("x,xs,qsj->qj", n, coup, bsq)  # (nq, 3nbf)
        ge = np.einsum("q,qi,qj->ij", w, vals, ne_bs)
        gamma = gamma_factor * eps[2, 2] / h
        mpe = gamma * np.einsum("q,qi,qj->ij", w, vals, vals)
        F[np.ix_(pd, pd)] += fe
        G[np.ix_(pd, ud)] += ge
        Mp[np.ix_(pd, pd)] += mpe
        on_face = np.abs(vals).max(axis=0) > 1e-12
        selector[pd[on_face]] = 1.0
    return F.tocsr(), G.tocsr(), Mp.tocsr(), selector


def assemble_traction_load(mesh: TaggedMesh, u_space: FieldSpace,
                           facets: np.ndarray, region: str,
                           traction) -> np.ndarray:
    """Consistent load vector for a surface traction t(x) (callable or
    constant 3-vector) over the given facets."""
    load = np.zeros(u_space.n_dofs)
    degree = 2 * mesh.order
    pts, _ = triangle_rule(degree)
    for (cell, lf) in facet_parents(mesh, facets, region):
        w, vals, _, n, _ = _facet_quad(mesh, cell, lf, degree)
        nodes = mesh.cells[cell][None, :]
        ud = u_space.cell_dofs(nodes)[0]
        face = TET_FACES[lf]
        p = mesh.vertices[mesh.cells[cell][list(face)]]
        zeta = barycentric_from_reference(pts)
        xq = zeta @ p
        if callable(traction):
            tq = np.array([traction(x) for x in xq])
        else:
            tq = np.broadcast_to(np.asarray(traction, float), (len(w), 3))
        fe = np.einsum("q,qi,qx->ix", w, vals, tq)  # (nbf, 3)
        np.add.at(load, ud, fe.reshape(-1))
    return load


# ----------------------------------------------------------------------------
# Assembled system
# ----------------------------------------------------------------------------

@dataclass
class AssembledSystem:
    """All discrete operators in full DOF numbering plus the field spaces.

    The beam stiffness is stored at `young_ref`; `stiffness(E)` rescales the
    beam block only, the piezo block is fixed manufacturer data.
    """

    mesh: TaggedMesh
    u_space: FieldSpace
    p_space: FieldSpace | None
    beam: ElasticMaterial
    piezo: PiezoMaterial | None
    damping: RayleighDamping
    gamma_factor: float
    M: sp.csr_matrix
    K_beam: sp.csr_matrix
    K_piezo: sp.csr_matrix | None
    B: sp.csr_matrix | None
    D: sp.csr_matrix | None
    F_pq: sp.csr_matrix | None
    G_pq: sp.csr_matrix | None
    M_p: sp.csr_matrix | None
    F_p0: sp.csr_matrix | None
    G_p0: sp.csr_matrix | None
    ones_pq: np.ndarray | None
    body_load: np.ndarray
    point_load: np.ndarray
    tip_force: float

    @property
    def young_ref(self) -> float:
        return self.beam.young_modulus

    @property
    def has_piezo(self) -> bool:
        return self.p_space is not None

    def stiffness(self, young_modulus: float | None = None) -> sp.csr_matrix:
        scale = 1.0 if young_modulus is None else young_modulus / self.young_ref
        k = scale * self.K_beam
        if self.K_piezo is not None:
            k = k + self.K_piezo
        return k.tocsr()

    @property
    def K(self) -> sp.csr_matrix:
        return self.stiffness()

    @property
    def C_damp(self) -> sp.csr_matrix:
        return (self.damping.alpha * self.M + self.damping.beta * self.K).tocsr()

    def rayleigh(self, alpha: float, beta: float,
                 young_modulus: float | None = None) -> sp.csr_matrix:
        return (alpha * self.M + beta * self.stiffness(young_modulus)).tocsr()


def assemble(mesh: TaggedMesh,
             beam: ElasticMaterial,
             piezo: PiezoMaterial | None = None,
             damping: RayleighDamping = RayleighDamping(),
             gamma_factor: float = DEFAULT_NITSCHE_FACTOR,
             gravity: bool = True,
             tip_force: float = 0.0) -> AssembledSystem:
    """Assemble every operator of the discrete coupled system.

    Gauss rules are exact for the polynomial degree of each integrand
    (degree 2*order on cells and facets).  B, D are integrated over PIEZO
    cells only; F, G, M_p over the tagged electrode facets.
    """
    if gamma_factor < 0:
        raise ValueError("nitsche gamma factor must be >= 0")
    u_space = vector_space(mesh)
    has_piezo = bool(np.any(mesh.volume_tags == PIEZO))
    if has_piezo and piezo is None:
        raise MeshError("mesh has PIEZO cells but no piezo material given")
    p_space = scalar_space(mesh, PIEZO) if has_piezo else None

    gvec = np.array([0.0, 0.0, -STANDARD_GRAVITY]) if gravity else None
    c_beam = isotropic_stiffness_voigt(beam)
    el_rows = mesh.cells_of(ELASTIC)
    parts = _assemble_region(mesh, el_rows, u_space, p_space, c_beam,
                             beam.density, gravity_vec=gvec)
    M = parts["M"]
    K_beam = parts["K"]
    body = parts.get("body", np.zeros(u_space.n_dofs))

    K_piezo = B = D = F_pq = G_pq = M_p = F_p0 = G_p0 = None
    ones_pq = None
    if has_piezo:
        pz_rows = mesh.cells_of(PIEZO)
        pz = _assemble_region(mesh, pz_rows, u_space, p_space,
                              piezo.stiffness_voigt, piezo.density,
                              coupling=piezo.coupling_voigt,
                              permittivity=piezo.permittivity,
                              gravity_vec=gvec)
        M = (M + pz["M"]).tocsr()
        K_piezo = pz["K"]
        B, D = pz["B"], pz["D"]
        if "body" in pz:
            body = body + pz["body"]
        F_pq, G_pq, M_p, ones_pq = _electrode_blocks(
            mesh, mesh.surface_tags[GAMMA_PQ], PIEZO, u_space, p_space,
            piezo, gamma_factor)
        F_p0, G_p0, _, _ = _electrode_blocks(
            mesh, mesh.surface_tags[GAMMA_P0], PIEZO, u_space, p_space,
            piezo, gamma_factor)

    point = np.zeros(u_space.n_dofs)
    if tip_force:
        w_node = mesh.point_tags["W"]
        point[u_space.dof(w_node, 2)] = -tip_force

    # Dirichlet sets: clamp all displacement components, ground the bottom
    # electrode; the floating electrode stays unconstrained (Nitsche).
    u_space.constrain_surface(GAMMA_U)
    if has_piezo:
        p_space.constrain_surface(GAMMA_P0)

    return AssembledSystem(
        mesh=mesh, u_space=u_space, p_space=p_space, beam=beam, piezo=piezo,
        damping=damping, gamma_factor=gamma_factor,
        M=M, K_beam=K_beam, K_piezo=K_piezo, B=B, D=D,
        F_pq=F_pq, G_pq=G_pq, M_p=M_p, F_p0=F_p0, G_p0=G_p0,
        ones_pq=ones_pq, body_load=body, point_load=point, tip_force=tip_force)


# ----------------------------------------------------------------------------
# Constrained (reduced) operators
# ----------------------------------------------------------------------------

@dataclass
class ConstrainedSystem:
    """System reduced to free DOFs (rows/columns of constrained DOFs
    eliminated); the floating-electrode condition is kept weak."""

    full: AssembledSystem
    uf: np.ndarray  # free displacement DOFs
    pf: np.ndarray  # free potential DOFs (empty when no piezo)

    def __post_init__(self):
        s = self.full
        self.M = s.M[self.uf][:, self.uf]
        self.K_beam = s.K_beam[self.uf][:, self.uf]
        self.body_load = s.body_load[self.uf]
        self.point_load = s.point_load[self.uf]
        if s.has_piezo:
            self.K_piezo = s.K_piezo[self.uf][:, self.uf]
            self.B = s.B[self.pf][:, self.uf]
            self.D = s.D[self.pf][:, self.pf]
            self.F = s.F_pq[self.pf][:, self.pf]
            self.G = s.G_pq[self.pf][:, self.uf]
            self.M_p = s.M_p[self.pf][:, self.pf]
            self.ones = s.ones_pq[self.pf]
            # charge extraction rows: Q = row_u . u - row_p . p (full DOFs)
            ones_full = s.ones_pq
            self.charge_pq_u = np.asarray(ones_full @ s.G_pq).ravel()
            self.charge_pq_p = np.asarray(ones_full @ s.F_pq).ravel()
            ones_p0 = np.zeros(s.p_space.n_dofs)
            p0_nodes = s.mesh.facet_nodes(s.mesh.surface_tags[GAMMA_P0])
            idx = s.p_space.node_index[p0_nodes]
            ones_p0[idx] = 1.0
            self.charge_p0_u = np.asarray(ones_p0 @ s.G_p0).ravel()
            self.charge_p0_p = np.asarray(ones_p0 @ s.F_p0).ravel()
            # consistent (weak) flux rows: Q = chi' (B u - D p) with chi an
            # electrode indicator; immune to the flux singularity at the
            # electrode rim that slows raw surface quadrature convergence
            self.charge_cons_pq_u = np.asarray(s.ones_pq @ s.B).ravel()
            self.charge_cons_pq_p = np.asarray(s.ones_pq @ s.D).ravel()
            self.charge_cons_p0_u = np.asarray(ones_p0 @ s.B).ravel()
            self.charge_cons_p0_p = np.asarray(ones_p0 @ s.D).ravel()
        else:
            self.K_piezo = None
        self._energy = None

    def energy_evaluator(self) -> "EnergyEvaluator":
        if self._energy is None:
            self._energy = EnergyEvaluator(self.full)
        return self._energy

    @property
    def n_u(self) -> int:
        return len(self.uf)

    @property
    def n_p(self) -> int:
        return len(self.pf)

    @property
    def has_piezo(self) -> bool:
        return self.full.has_piezo

    def stiffness(self, young_modulus: float | None = None):
        scale = (1.0 if young_modulus is None
                 else young_modulus / self.full.young_ref)
        k = scale * self.K_beam
        if self.K_piezo is not None:
            k = k + self.K_piezo
        return k.tocsr()

    def rayleigh(self, alpha: float, beta: float,
                 young_modulus: float | None = None):
        return (alpha * self.M + beta * self.stiffness(young_modulus)).tocsr()

    def expand_u(self, u_red: np.ndarray) -> np.ndarray:
        full = np.zeros(self.full.u_space.n_dofs)
        full[self.full.u_space.constrained] = self.full.u_space.prescribed
        full[self.uf] = u_red
        return full

    def expand_p(self, p_red: np.ndarray) -> np.ndarray:
        full = np.zeros(self.full.p_space.n_dofs)
        full[self.full.p_space.constrained] = self.full.p_space.prescribed
        full[self.pf] = p_red
        return full

    def reduced_u_dof(self, mesh_node: int, component: int) -> int:
        """Index into reduced displacement vectors for a free DOF."""
        full_dof = self.full.u_space.dof(mesh_node, component)
        pos = np.searchsorted(self.uf, full_dof)
        if pos >= len(self.uf) or self.uf[pos] != full_dof:
            raise KeyError(f"DOF (node {mesh_node}, comp {component}) is constrained")
        return int(pos)

    def electrode_dof_positions(self) -> np.ndarray:
        """Reduced indices of potential DOFs on the floating electrode."""
        return np.flatnonzero(self.ones > 0)


def apply_constraints(system: AssembledSystem) -> ConstrainedSystem:
    """Eliminate Dirichlet rows/columns (zero prescribed values reduce to
    plain row/column deletion)."""
    uf = system.u_space.free_dofs
    pf = (system.p_space.free_dofs if system.has_piezo
          else np.empty(0, dtype=np.int64))
    return ConstrainedSystem(system, uf, pf)


# ----------------------------------------------------------------------------
# Post-processing
# ----------------------------------------------------------------------------

def electrode_charge(sysc: ConstrainedSystem, u_red: np.ndarray,
                     p_red: np.ndarray, consistent: bool = False):
    """Induced charges (Q_pQ, Q_p0) from Q = integral of (e eps(u) -
    eps grad phi) . n over each electrode.

    The default evaluates the flux by surface quadrature.  With
    consistent=True the equivalent volume form integral of grad(chi) . d is
    used (chi = electrode indicator), which converges much faster near the
    electrode rim and keeps the two charges Gauss-balanced on desk meshes.
    """
    if not sysc.has_piezo:
        return 0.0, 0.0
    u = sysc.expand_u(u_red)
    p = sysc.expand_p(p_red)
    if consistent:
        q_pq = float(sysc.charge_cons_pq_u @ u - sysc.charge_cons_pq_p @ p)
        q_p0 = float(sysc.charge_cons_p0_u @ u - sysc.charge_cons_p0_p @ p)
    else:
        q_pq = float(sysc.charge_pq_u @ u - sysc.charge_pq_p @ p)
        q_p0 = float(sysc.charge_p0_u @ u - sysc.charge_p0_p @ p)
    return q_pq, q_p0


def energy_audit(sysc: ConstrainedSystem, u, v, p=None, p_bar=0.0,
                 p_bar_rate=0.0, young_modulus=None, alpha=None, beta=None,
                 resistance=None, capacitance=0.0) -> dict:
    """Energy bookkeeping: kinetic, strain, electric storage and the two
    dissipation channels (Rayleigh, external circuit)."""
    d = sysc.full.damping
    alpha = d.alpha if alpha is None else alpha
    beta = d.beta if beta is None else beta
    k = sysc.stiffness(young_modulus)
    ev = sysc.energy_evaluator()
    out = {
        "kinetic": 0.5 * float(v @ (sysc.M @ v)),
        "strain": ev.strain_energy(sysc.expand_u(u), young_modulus),
        "electric": 0.0,
        "rayleigh_power": float(v @ (alpha * (sysc.M @ v) + beta * (k @ v))),
        "circuit_power": 0.0,
    }
    if sysc.has_piezo and p is not None:
        out["electric"] = ev.electric_energy(sysc.expand_p(p))
        if resistance:
            out["circuit_power"] = (p_bar**2 / resistance
                                    + capacitance * p_bar * p_bar_rate)
    return out


class EnergyEvaluator:
    """Element-level strain/electric energy evaluation.

    The global quadratic forms u'Ku and p'Dp cancel catastrophically for
    thin bending states (round-off near 1e-8 of the result); summing
    per-element energies keeps the round-off near machine precision, which
    the long-run conservation checks rely on.
    """

    def __init__(self, system: AssembledSystem):
        self.system = system
        mesh = system.mesh
        degree = max(2 * (mesh.order - 1), 1)
        self._mech = []
        for region, stiff in ((ELASTIC, isotropic_stiffness_voigt(system.beam)),
                              (PIEZO, None)):
            rows = mesh.cells_of(region)
            if not len(rows):
                continue
            if stiff is None:
                stiff = system.piezo.stiffness_voigt
            lam, w, det, _, grads = _cell_batch(mesh, rows, degree)
            dofs = system.u_space.cell_dofs(mesh.cells[rows])
            wdet = w[None, :] * det[:, None]
            self._mech.append((region, dofs, grads, wdet, stiff))
        self._elec = None
        if system.has_piezo:
            rows = mesh.cells_of(PIEZO)
            lam, w, det, _, grads = _cell_batch(mesh, rows, degree)
            pdofs = system.p_space.cell_dofs(mesh.cells[rows])
            self._elec = (pdofs, grads, w[None, :] * det[:, None])

    def strain_energy(self, u_full: np.ndarray,
                      young_modulus: float | None = None) -> float:
        total = 0.0
        scale = (1.0 if young_modulus is None
                 else young_modulus / self.system.young_ref)
        for region, dofs, grads, wdet, stiff in self._mech:
            ue = u_full[dofs]
            nq = grads.shape[1]
            e = 0.0
            for q in range(nq):
                bs = _strain_operator(grads[:, q])
                strain = np.einsum("csj,cj->cs", bs, ue)
                e += np.einsum("c,cs,st,ct->", wdet[:, q], strain, stiff, strain)
            total += e * (scale if region == ELASTIC else 1.0)
        return 0.5 * total

    def electric_energy(self, p_full: np.ndarray) -> float:
        if self._elec is None:
            return 0.0
        pdofs, grads, wdet = self._elec
        pe = p_full[pdofs]
        eps = self.system.piezo.permittivity
        e = 0.0
        for q in range(grads.shape[1]):
            g = np.einsum("cjx,cj->cx", grads[:, q], pe)
            e += np.einsum("c,cx,xy,cy->", wdet[:, q], g, eps, g)
        return 0.5 * e


def von_mises_from_stress(stress_voigt: np.ndarray) -> np.ndarray:
    """Von Mises equivalent stress from Voigt vectors (..., 6)."""
    s = np.asarray(stress_voigt)
    s11, s22, s33, s23, s13, s12 = (s[..., i] for i in range(6))
    return np.sqrt(0.5 * ((s11 - s22)**2 + (s22 - s33)**2 + (s33 - s11)**2)
                   + 3.0 * (s23**2 + s13**2 + s12**2))


def nodal_von_mises(system: AssembledSystem, u_full: np.ndarray) -> np.ndarray:
    """Volume-averaged nodal von Mises stress of the mechanical field."""
    mesh = system.mesh
    num = np.zeros(mesh.n_nodes)
    den = np.zeros(mesh.n_nodes)
    for region, stiff in ((ELASTIC, isotropic_stiffness_voigt(system.beam)),
                          (PIEZO, None)):
        rows = mesh.cells_of(region)
        if not len(rows):
            continue
        if stiff is None:
            stiff = system.piezo.stiffness_voigt
        # one-point evaluation at the cell barycentre
        lam = np.full((1, 4), 0.25)
        verts = mesh.corner_coords(rows)
        grad_l, det = barycentric_gradients(verts)
        grads = physical_gradients(mesh.order, lam, grad_l)[:, 0]
        bs = _strain_operator(grads)
        ue = u_full[system.u_space.cell_dofs(mesh.cells[rows])]
        strain = np.einsum("csj,cj->cs", bs, ue)
        stress = strain @ stiff.T
        vm = von_mises_from_stress(stress)
        vol = det / 6.0
        np.add.at(num, mesh.cells[rows], (vm * vol)[:, None])
        np.add.at(den, mesh.cells[rows], vol[:, None])
    den[den == 0] = 1.0
    return num / den
