"""Static preload and modal analyses against the closed-form oracles and
the reference frequencies."""

import numpy as np
import pytest

from pzbeam.assembly import apply_constraints, assemble
from pzbeam.errors import NumericalError
from pzbeam.materials import (PIC181, REFERENCE_BEAM_GEOMETRY,
                              REFERENCE_TIP_FORCE, STEEL_BEAM,
                              bernoulli_first_frequency,
                              cantilever_tip_deflection)
from pzbeam.mesh import AssemblyGeometry, MeshResolution, generate_assembly_mesh
from pzbeam.solvers import solve_modal, solve_static


def tip_top_node(mesh, geom):
    """Top-surface vertex above the load point (avoids the point-load
    dimple at the bottom face)."""
    v = mesh.vertices
    mask = ((np.abs(v[:, 2]) < 1e-12)
            & (np.abs(v[:, 0] - geom.weight_point_x) < 1e-9)
            & (np.abs(v[:, 1]) < 1e-9))
    idx = np.flatnonzero(mask)
    assert len(idx) == 1
    return int(idx[0])


class TestStatic:
    def test_zero_loads_zero_state(self, small_beam_p2):
        _, _, sysc = small_beam_p2
        st = solve_static(sysc, include_tip_load=False,
                          include_body_load=False)
        assert np.abs(st.u).max() == 0.0

    def test_tip_deflection_matches_cantilever_oracle(self, default_beam_p2):
        mesh, system, sysc = default_beam_p2
        geom = AssemblyGeometry(beam=REFERENCE_BEAM_GEOMETRY, disc_radius=0.0)
        st = solve_static(sysc, include_body_load=False)
        node = tip_top_node(mesh, geom)
        uz = sysc.expand_u(st.u)[system.u_space.dof(node, 2)]
        oracle = cantilever_tip_deflection(REFERENCE_BEAM_GEOMETRY,
                                           STEEL_BEAM, REFERENCE_TIP_FORCE)
        assert abs(-uz - oracle) <= 0.03 * oracle

    def test_linearity_in_load(self, small_beam_p2):
        mesh, system, sysc = small_beam_p2
        st1 = solve_static(sysc, include_body_load=False)
        system2 = assemble(mesh, STEEL_BEAM, gravity=False,
                           tip_force=2 * REFERENCE_TIP_FORCE)
        sysc2 = apply_constraints(system2)
        st2 = solve_static(sysc2, include_body_load=False)
        np.testing.assert_allclose(st2.u, 2 * st1.u, rtol=1e-12, atol=1e-18)

    def test_static_electrode_potential_is_zero(self, tiny_coupled):
        _, _, sysc = tiny_coupled
        st = solve_static(sysc)
        assert st.p_bar == 0.0
        assert np.abs(st.u_dot).max() == 0.0

    def test_missing_clamp_raises(self):
        """A floating structure must fail with a configuration error."""
        geom = AssemblyGeometry(beam=REFERENCE_BEAM_GEOMETRY, disc_radius=0.0)
        mesh = generate_assembly_mesh(geom, MeshResolution(4, 2, 2, 1), 1)
        system = assemble(mesh, STEEL_BEAM, gravity=False, tip_force=1.0)
        system.u_space.constrained = np.empty(0, dtype=np.int64)
        system.u_space.prescribed = np.empty(0)
        sysc = apply_constraints(system)
        with pytest.raises(NumericalError):
            solve_static(sysc)


class TestModal:
    def test_beam_only_first_frequency(self, default_beam_p2):
        _, _, sysc = default_beam_p2
        freqs, modes = solve_modal(sysc, n_modes=3, include_piezo=False)
        assert abs(freqs[0] - 145.44) <= 0.015 * 145.44
        analytic = bernoulli_first_frequency(REFERENCE_BEAM_GEOMETRY,
                                             STEEL_BEAM)
        # 3D clamped model is slightly stiffer than the 1D oracle
        assert freqs[0] > analytic
        assert freqs[0] <= 1.02 * analytic

    def test_modes_mass_normalized_and_sorted(self, default_beam_p2):
        _, _, sysc = default_beam_p2
        freqs, modes = solve_modal(sysc, n_modes=3, include_piezo=False)
        assert np.all(np.diff(freqs) >= 0)
        for j in range(modes.shape[1]):
            assert modes[:, j] @ (sysc.M @ modes[:, j]) == pytest.approx(
                1.0, rel=1e-9)

    def test_coupled_first_frequency(self, default_coupled_p2):
        _, _, sysc = default_coupled_p2
        freqs, _ = solve_modal(sysc, n_modes=1, include_piezo=True)
        assert abs(freqs[0] - 150.74) <= 0.03 * 150.74

    def test_electrical_coupling_stiffens(self, small_coupled_p2):
        _, _, sysc = small_coupled_p2
        f_open, _ = solve_modal(sysc, n_modes=1, include_piezo=True)
        f_mech, _ = solve_modal(sysc, n_modes=1, include_piezo=False)
        assert f_open[0] > f_mech[0]

    def test_dense_fallback_matches_iterative(self, tiny_coupled):
        _, _, sysc = tiny_coupled
        f_dense, _ = solve_modal(sysc, n_modes=2, include_piezo=True,
                                 dense_cutoff=10**9)
        f_iter, _ = solve_modal(sysc, n_modes=2, include_piezo=True,
                                dense_cutoff=0)
        np.testing.assert_allclose(f_dense, f_iter, rtol=1e-8)

    def test_n_modes_validation(self, tiny_coupled):
        _, _, sysc = tiny_coupled
        with pytest.raises(ValueError):
            solve_modal(sysc, n_modes=0)
