"""Shared fixtures: small systems are session-scoped since assembly
dominates test runtime."""

import numpy as np
import pytest

from pzbeam.assembly import apply_constraints, assemble
from pzbeam.materials import (PIC181, REFERENCE_BEAM_GEOMETRY,
                              REFERENCE_TIP_FORCE, STEEL_BEAM)
from pzbeam.mesh import AssemblyGeometry, MeshResolution, generate_assembly_mesh
from pzbeam.solvers import TimeGrid


@pytest.fixture(scope="session")
def tiny_coupled():
    """Coarse P1 beam+disc system used by transient/identification tests."""
    geom = AssemblyGeometry(beam=REFERENCE_BEAM_GEOMETRY)
    mesh = generate_assembly_mesh(geom, MeshResolution(10, 3, 2, 1), order=1)
    system = assemble(mesh, STEEL_BEAM, piezo=PIC181, gravity=True,
                      tip_force=REFERENCE_TIP_FORCE)
    return mesh, system, apply_constraints(system)


@pytest.fixture(scope="session")
def small_coupled_p2():
    """P2 beam+disc at reduced resolution (modal-quality, still quick)."""
    geom = AssemblyGeometry(beam=REFERENCE_BEAM_GEOMETRY)
    mesh = generate_assembly_mesh(geom, MeshResolution(17, 4, 2, 2), order=2)
    system = assemble(mesh, STEEL_BEAM, piezo=PIC181, gravity=True,
                      tip_force=REFERENCE_TIP_FORCE)
    return mesh, system, apply_constraints(system)


@pytest.fixture(scope="session")
def small_beam_p2():
    """P2 beam-only system (no disc), tip load wired, gravity off."""
    geom = AssemblyGeometry(beam=REFERENCE_BEAM_GEOMETRY, disc_radius=0.0)
    mesh = generate_assembly_mesh(geom, MeshResolution(17, 4, 2, 2), order=2)
    system = assemble(mesh, STEEL_BEAM, gravity=False,
                      tip_force=REFERENCE_TIP_FORCE)
    return mesh, system, apply_constraints(system)


@pytest.fixture(scope="session")
def default_beam_p2():
    """Beam-only mesh at the default (reference-scale) resolution."""
    geom = AssemblyGeometry(beam=REFERENCE_BEAM_GEOMETRY, disc_radius=0.0)
    mesh = generate_assembly_mesh(geom, MeshResolution(), order=2)
    system = assemble(mesh, STEEL_BEAM, gravity=False,
                      tip_force=REFERENCE_TIP_FORCE)
    return mesh, system, apply_constraints(system)


@pytest.fixture(scope="session")
def default_coupled_p2():
    """Beam+disc at the default resolution (the reference-scale mesh)."""
    geom = AssemblyGeometry(beam=REFERENCE_BEAM_GEOMETRY)
    mesh = generate_assembly_mesh(geom, MeshResolution(), order=2)
    system = assemble(mesh, STEEL_BEAM, piezo=PIC181, gravity=True,
                      tip_force=REFERENCE_TIP_FORCE)
    return mesh, system, apply_constraints(system)


@pytest.fixture
def ident_grid():
    return TimeGrid(dt=4e-5, n_steps=1250)


def l2_rel(a, b):
    nb = np.linalg.norm(b)
    d = np.linalg.norm(np.asarray(a) - np.asarray(b))
    return d / nb if nb > 0 else d
