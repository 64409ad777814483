"""Operator assembly against independent oracles."""

import numpy as np
import pytest
import scipy.sparse as sp

import pzbeam.assembly as asm
from pzbeam.assembly import (apply_constraints, assemble,
                             assemble_traction_load, electrode_charge,
                             energy_audit, nodal_von_mises,
                             von_mises_from_stress)
from pzbeam.elements import (barycentric_gradients, physical_gradients,
                             shape_values)
from pzbeam.materials import (ElasticMaterial, PIC181,
                              REFERENCE_BEAM_GEOMETRY, RayleighDamping,
                              STEEL_BEAM, isotropic_stiffness_voigt)
from pzbeam.mesh import (ELASTIC, GAMMA_U, PIEZO, AssemblyGeometry,
                         MeshResolution, TaggedMesh, build_face_table,
                         generate_assembly_mesh)
from pzbeam.quadrature import barycentric_from_reference, tetrahedron_rule
from pzbeam.spaces import scalar_space, vector_space


def single_tet_mesh():
    verts = np.array([[0., 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]])
    return TaggedMesh(verts, np.array([[0, 1, 2, 3]]),
                      np.array([ELASTIC]), {}, {}, order=1)


class TestElementOracles:
    def test_p1_tet_consistent_mass(self):
        """Analytic element mass of a linear tet: (V/20)(1 + I)."""
        mesh = single_tet_mesh()
        us = vector_space(mesh)
        parts = asm._assemble_region(mesh, np.array([0]), us, None,
                                     np.eye(6), density=1.0)
        m = parts["M"].toarray()
        vol = 1.0 / 6.0
        expect = (vol / 20.0) * (np.ones((4, 4)) + np.eye(4))
        for comp in range(3):
            np.testing.assert_allclose(m[comp::3, comp::3], expect,
                                       atol=1e-15)

    def test_mass_sum_identity(self, small_beam_p2):
        mesh, system, _ = small_beam_p2
        g = REFERENCE_BEAM_GEOMETRY
        total = STEEL_BEAM.density * g.active_length * g.width * g.thickness
        assert system.M.sum() == pytest.approx(3.0 * total, rel=1e-10)

    def test_rigid_modes_in_kernel(self, small_beam_p2):
        _, system, _ = small_beam_p2
        k = system.K
        knorm = sp.linalg.norm(k)
        for comp in range(3):
            t = np.zeros(system.u_space.n_dofs)
            t[comp::3] = 1.0
            assert np.linalg.norm(k @ t) <= 1e-9 * knorm * np.linalg.norm(t)

    def test_rayleigh_identity(self, small_beam_p2):
        mesh, system, _ = small_beam_p2
        c = system.rayleigh(0.1, 0.0)
        assert abs(c - 0.1 * system.M).max() == 0.0
        beta = 2.5e-6
        c2 = system.rayleigh(0.0, beta)
        assert abs(c2 - beta * system.K).max() == 0.0

    def test_symmetry(self, small_coupled_p2):
        _, system, _ = small_coupled_p2
        for name, m in (("M", system.M), ("K", system.K), ("D", system.D),
                        ("M_p", system.M_p)):
            scale = abs(m).max()
            assert abs(m - m.T).max() <= 1e-12 * scale, name


class TestCouplingConsistency:
    def test_coupling_against_dense_quadrature(self, tiny_coupled):
        """q' B v matches an independently integrated coupling form."""
        mesh, system, _ = tiny_coupled
        rng = np.random.default_rng(42)
        v = rng.normal(size=system.u_space.n_dofs)
        q = rng.normal(size=system.p_space.n_dofs)
        via_matrix = float(q @ (system.B @ v))

        # independent element-by-element quadrature (no sparse scatter)
        rows = mesh.cells_of(PIEZO)
        pts, w = tetrahedron_rule(4)
        lam = barycentric_from_reference(pts)
        verts = mesh.corner_coords(rows)
        grad_l, det = barycentric_gradients(verts)
        grads = physical_gradients(mesh.order, lam, grad_l)
        coup = PIC181.coupling_voigt
        total = 0.0
        for ci, row in enumerate(rows):
            nodes = mesh.cells[row]
            udofs = system.u_space.cell_dofs(nodes[None, :])[0]
            pdofs = system.p_space.cell_dofs(nodes[None, :])[0]
            ue = v[udofs]
            qe = q[pdofs]
            for qq in range(len(w)):
                g = grads[ci, qq]  # (nbf, 3)
                bs = asm._strain_operator(g[None])[0]
                strain = bs @ ue
                grad_q = g.T @ qe
                total += w[qq] * det[ci] * float(grad_q @ (coup @ strain))
        assert via_matrix == pytest.approx(total, rel=1e-10)

    def test_flux_rows_supported_on_electrode(self, tiny_coupled):
        mesh, system, sysc = tiny_coupled
        electrode_nodes = mesh.facet_nodes(mesh.surface_tags["GAMMA_PQ"])
        allowed = set(system.p_space.node_index[electrode_nodes].tolist())
        for m in (system.F_pq, system.G_pq, system.M_p):
            rows = np.unique(m.tocoo().row)
            assert set(rows.tolist()) <= allowed


class TestPatchTest:
    @pytest.mark.parametrize("order", [1, 2])
    def test_affine_field_reproduces_constant_stress(self, order):
        geom = AssemblyGeometry(beam=REFERENCE_BEAM_GEOMETRY, disc_radius=0.0)
        mesh = generate_assembly_mesh(geom, MeshResolution(6, 2, 2, 1), order)
        system = assemble(mesh, STEEL_BEAM, gravity=False)
        us = system.u_space
        rng = np.random.default_rng(7)
        a = 1e-4 * rng.normal(size=(3, 3))
        c_voigt = isotropic_stiffness_voigt(STEEL_BEAM)
        strain = 0.5 * (a + a.T)
        strain_v = np.array([strain[0, 0], strain[1, 1], strain[2, 2],
                             2 * strain[1, 2], 2 * strain[0, 2],
                             2 * strain[0, 1]])
        stress_v = c_voigt @ strain_v
        stress = np.array([[stress_v[0], stress_v[5], stress_v[4]],
                           [stress_v[5], stress_v[1], stress_v[3]],
                           [stress_v[4], stress_v[3], stress_v[2]]])
        u = (mesh.vertices @ a.T).reshape(-1)

        boundary = [key for key, owners in build_face_table(mesh).items()
                    if len(owners) == 1]
        # consistent traction t = sigma n varies per facet normal, so
        # integrate facet by facet
        load = np.zeros(us.n_dofs)
        for key in boundary:
            tri = np.array([key])
            cell, lf = asm.facet_parents(mesh, tri, ELASTIC)[0]
            wq, vals, _, n, _ = asm._facet_quad(mesh, cell, lf, 2 * order)
            t = stress @ n
            ud = us.cell_dofs(mesh.cells[cell][None, :])[0]
            fe = np.einsum("q,qi,x->ix", wq, vals, t)
            np.add.at(load, ud, fe.reshape(-1))
        r = system.K @ u - load
        scale = sp.linalg.norm(system.K) * np.linalg.norm(u)
        assert np.linalg.norm(r) <= 1e-9 * scale


class TestPostProcessing:
    def test_charge_zero_states(self, tiny_coupled):
        _, system, sysc = tiny_coupled
        qq, q0 = electrode_charge(sysc, np.zeros(sysc.n_u), np.zeros(sysc.n_p))
        assert qq == 0.0 and q0 == 0.0
        # uniform potential has no gradient -> no dielectric flux
        p_full = np.ones(system.p_space.n_dofs)
        u_full = np.zeros(system.u_space.n_dofs)
        q_uniform = sysc.charge_pq_u @ u_full - sysc.charge_pq_p @ p_full
        assert abs(q_uniform) <= 1e-12 * abs(sysc.charge_pq_p).max()

    def test_static_charge_balance(self, default_coupled_p2):
        """Gauss balance: the two electrode charges cancel to within the
        weak-enforcement discretization error."""
        from pzbeam.solvers import solve_static
        _, _, sysc = default_coupled_p2
        st = solve_static(sysc)
        qq, q0 = electrode_charge(sysc, st.u, st.p)
        assert abs(qq + q0) <= 0.02 * max(abs(qq), abs(q0))

    def test_energy_audit_scaling(self, tiny_coupled):
        _, _, sysc = tiny_coupled
        rng = np.random.default_rng(1)
        u = rng.normal(size=sysc.n_u) * 1e-4
        v = rng.normal(size=sysc.n_u) * 1e-1
        zero = energy_audit(sysc, np.zeros(sysc.n_u), np.zeros(sysc.n_u))
        assert zero["kinetic"] == 0.0 and zero["strain"] == 0.0
        e1 = energy_audit(sysc, u, v)
        e2 = energy_audit(sysc, u, 2 * v)
        assert e2["kinetic"] == pytest.approx(4 * e1["kinetic"], rel=1e-12)

    def test_energy_evaluator_matches_quadratic_forms(self, tiny_coupled):
        _, _, sysc = tiny_coupled
        rng = np.random.default_rng(2)
        u = rng.normal(size=sysc.n_u) * 1e-5
        p = rng.normal(size=sysc.n_p)
        ev = sysc.energy_evaluator()
        direct = 0.5 * u @ (sysc.stiffness() @ u)
        assert ev.strain_energy(sysc.expand_u(u)) == pytest.approx(
            direct, rel=1e-9)
        direct_e = 0.5 * p @ (sysc.D @ p)
        assert ev.electric_energy(sysc.expand_p(p)) == pytest.approx(
            direct_e, rel=1e-9)

    def test_von_mises_uniaxial(self):
        s = np.zeros(6)
        s[0] = 1.0
        assert von_mises_from_stress(s) == pytest.approx(1.0)

    def test_nodal_von_mises_uniform_state(self):
        """A displacement field with uniform uniaxial stress recovers 1
        at every node."""
        mesh = generate_assembly_mesh(
            AssemblyGeometry(beam=REFERENCE_BEAM_GEOMETRY, disc_radius=0.0),
            MeshResolution(5, 2, 2, 1), order=2)
        system = assemble(mesh, STEEL_BEAM, gravity=False)
        c = isotropic_stiffness_voigt(STEEL_BEAM)
        strain_v = np.linalg.solve(c, np.eye(6)[0])  # sigma = e_11
        eps = np.array([[strain_v[0], strain_v[5] / 2, strain_v[4] / 2],
                        [strain_v[5] / 2, strain_v[1], strain_v[3] / 2],
                        [strain_v[4] / 2, strain_v[3] / 2, strain_v[2]]])
        u = (mesh.vertices @ eps.T).reshape(-1)
        vm = nodal_von_mises(system, u)
        np.testing.assert_allclose(vm, 1.0, rtol=1e-9)


class TestConstraints:
    def test_eliminated_dof_count(self, small_beam_p2):
        mesh, system, sysc = small_beam_p2
        clamped_nodes = mesh.facet_nodes(mesh.surface_tags[GAMMA_U])
        assert len(system.u_space.constrained) == 3 * len(clamped_nodes)
        assert sysc.n_u == system.u_space.n_dofs - 3 * len(clamped_nodes)

    def test_constrained_stiffness_spd(self, tiny_coupled):
        _, _, sysc = tiny_coupled
        k = sysc.stiffness().toarray()
        assert np.linalg.eigvalsh(0.5 * (k + k.T)).min() > 0

    def test_zero_dirichlet_keeps_load(self, small_beam_p2):
        _, system, sysc = small_beam_p2
        np.testing.assert_array_equal(sysc.point_load,
                                      system.point_load[sysc.uf])


def test_matrixmarket_dump(tmp_path, tiny_coupled):
    import scipy.io
    _, system, _ = tiny_coupled
    path = tmp_path / "K.mtx"
    scipy.io.mmwrite(path, system.K)
    again = scipy.io.mmread(path)
    assert abs(again - system.K).max() <= 1e-12 * abs(system.K).max()
