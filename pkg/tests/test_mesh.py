"""Mesh generation, tagging, file round trips and VTK export."""

import math

import numpy as np
import pytest

from pzbeam.errors import MeshError, MeshParseError
from pzbeam.materials import BeamGeometry, REFERENCE_BEAM_GEOMETRY
from pzbeam.mesh import (ELASTIC, GAMMA_P0, GAMMA_PQ, GAMMA_U, PIEZO,
                         AssemblyGeometry, MeshResolution, TaggedMesh,
                         equal_area_polygon_radius, export_vtk,
                         generate_assembly_mesh, load_mesh, save_mesh,
                         validate_mesh)


def unit_box(nx=1, ny=1, nz=1):
    geom = AssemblyGeometry(beam=BeamGeometry(1.0, 1.0, 1.0), disc_radius=0.0,
                            disc_center_x=0.5, laser_point_x=0.5,
                            weight_point_x=1.0)
    return generate_assembly_mesh(geom, MeshResolution(nx, ny, nz, 1), order=1)


@pytest.fixture(scope="module")
def reference_mesh():
    return generate_assembly_mesh(AssemblyGeometry(beam=REFERENCE_BEAM_GEOMETRY),
                                  MeshResolution(), order=2)


class TestGeneration:
    def test_unit_box_split(self):
        mesh = unit_box()
        assert mesh.n_cells == 6
        assert np.all(mesh.volume_tags == ELASTIC)
        assert np.all(mesh.cell_volumes() > 0)
        assert mesh.region_volume(ELASTIC) == pytest.approx(1.0, rel=1e-14)

    def test_reference_mesh_scale(self, reference_mesh):
        """Vertex and cell counts stay within 3x of the reference
        discretization (2121 vertices, 6577 tetrahedra)."""
        corner_vertices = int(reference_mesh.cells[:, :4].max()) + 1
        assert 2121 / 3 <= corner_vertices <= 2121 * 3
        assert 6577 / 3 <= reference_mesh.n_cells <= 6577 * 3

    def test_region_volumes(self, reference_mesh):
        g = REFERENCE_BEAM_GEOMETRY
        beam_vol = g.active_length * g.width * g.thickness
        assert reference_mesh.region_volume(ELASTIC) == pytest.approx(
            beam_vol, rel=1e-12)
        disc_vol = math.pi * 0.005**2 * 0.002
        n = 16
        bound = (1.0 - math.cos(math.pi / n)) * disc_vol
        err = abs(reference_mesh.region_volume(PIEZO) - disc_vol)
        assert err <= bound
        # equal-area polygon: the footprint area matches the disc exactly
        assert err <= 1e-10 * disc_vol

    def test_polygon_area_oracle(self):
        """Equal-area circumradius reproduces pi r^2 via the polygon
        area formula (n/2) R^2 sin(2 pi/n)."""
        r, n = 0.005, 16
        req = equal_area_polygon_radius(r, n)
        area = 0.5 * n * req**2 * math.sin(2 * math.pi / n)
        assert area == pytest.approx(math.pi * r**2, rel=1e-14)

    def test_refinement_volumes(self):
        geom = AssemblyGeometry(beam=REFERENCE_BEAM_GEOMETRY)
        coarse = generate_assembly_mesh(geom, MeshResolution(10, 3, 2, 1), 1)
        fine = generate_assembly_mesh(geom, MeshResolution(20, 6, 4, 2), 1)
        g = REFERENCE_BEAM_GEOMETRY
        beam_vol = g.active_length * g.width * g.thickness
        for mesh in (coarse, fine):
            assert mesh.region_volume(ELASTIC) == pytest.approx(beam_vol,
                                                                rel=1e-12)
        disc_vol = math.pi * 0.005**2 * 0.002
        e_coarse = abs(coarse.region_volume(PIEZO) - disc_vol)
        e_fine = abs(fine.region_volume(PIEZO) - disc_vol)
        assert e_fine <= e_coarse + 1e-12 * disc_vol

    def test_tags_present(self, reference_mesh):
        for tag in (GAMMA_U, GAMMA_P0, GAMMA_PQ):
            assert len(reference_mesh.surface_tags[tag]) > 0
        for point in ("W", "L"):
            assert point in reference_mesh.point_tags
        validate_mesh(reference_mesh)

    def test_clamp_on_clamp_plane(self, reference_mesh):
        tris = reference_mesh.surface_tags[GAMMA_U]
        xs = reference_mesh.vertices[tris.ravel(), 0]
        np.testing.assert_allclose(xs, 0.0, atol=1e-12)

    def test_electrodes_on_disc_faces(self, reference_mesh):
        z0 = reference_mesh.vertices[
            reference_mesh.surface_tags[GAMMA_P0].ravel(), 2]
        zq = reference_mesh.vertices[
            reference_mesh.surface_tags[GAMMA_PQ].ravel(), 2]
        np.testing.assert_allclose(z0, 0.0, atol=1e-12)
        np.testing.assert_allclose(zq, 0.002, atol=1e-12)

    def test_point_tags_on_surface(self, reference_mesh):
        w = reference_mesh.vertices[reference_mesh.point_tags["W"]]
        l = reference_mesh.vertices[reference_mesh.point_tags["L"]]
        assert w[2] == pytest.approx(-REFERENCE_BEAM_GEOMETRY.thickness)
        assert l[2] == pytest.approx(0.0, abs=1e-12)
        assert l[0] == pytest.approx(0.051, abs=2e-3)

    def test_disc_too_large_rejected(self):
        geom = AssemblyGeometry(beam=REFERENCE_BEAM_GEOMETRY,
                                disc_radius=0.0098)
        with pytest.raises(MeshError, match="exceeds the beam top face"):
            generate_assembly_mesh(geom, MeshResolution(10, 3, 2, 1), 1)

    def test_too_few_polygon_sides_rejected(self):
        geom = AssemblyGeometry(beam=REFERENCE_BEAM_GEOMETRY,
                                disc_polygon_sides=6)
        with pytest.raises(MeshError, match="sides"):
            generate_assembly_mesh(geom, MeshResolution(10, 3, 2, 1), 1)

    def test_overhang_mass_geometry(self):
        """The full 150 mm strip weighs 45.803 g at the measured density."""
        geom = AssemblyGeometry(beam=REFERENCE_BEAM_GEOMETRY,
                                clamped_overhang=0.048, disc_radius=0.0)
        mesh = generate_assembly_mesh(geom, MeshResolution(15, 3, 2, 1), 1)
        vol = mesh.region_volume(ELASTIC)
        assert 8014.5 * vol == pytest.approx(45.803e-3, rel=1e-3)

    def test_quadratic_midedge_nodes(self, reference_mesh):
        assert reference_mesh.order == 2
        assert reference_mesh.cells.shape[1] == 10
        emap = reference_mesh.edge_midnode_map()
        (a, b), mid = next(iter(emap.items()))
        np.testing.assert_allclose(
            reference_mesh.vertices[mid],
            0.5 * (reference_mesh.vertices[a] + reference_mesh.vertices[b]))


class TestFileRoundTrip:
    def test_round_trip_identical(self, reference_mesh, tmp_path):
        path = tmp_path / "m.pzmesh"
        save_mesh(reference_mesh, path)
        again = load_mesh(path)
        assert np.array_equal(again.vertices, reference_mesh.vertices)
        assert np.array_equal(again.cells, reference_mesh.cells)
        assert np.array_equal(again.volume_tags, reference_mesh.volume_tags)
        for k in reference_mesh.surface_tags:
            assert np.array_equal(again.surface_tags[k],
                                  reference_mesh.surface_tags[k])
        assert again.point_tags == reference_mesh.point_tags
        # byte stability under rewrite
        path2 = tmp_path / "m2.pzmesh"
        save_mesh(again, path2)
        assert path.read_bytes() == path2.read_bytes()

    def test_negative_volume_cell_rejected(self, tmp_path):
        mesh = unit_box()
        bad = TaggedMesh(mesh.vertices.copy(), mesh.cells.copy(),
                         mesh.volume_tags.copy(), dict(mesh.surface_tags),
                         dict(mesh.point_tags), order=1)
        bad.cells[0, [0, 1]] = bad.cells[0, [1, 0]]
        path = tmp_path / "bad.pzmesh"
        save_mesh(bad, path)
        with pytest.raises(MeshParseError, match="cell 0"):
            load_mesh(path)

    def test_missing_electrode_rejected(self, tmp_path):
        geom = AssemblyGeometry(beam=REFERENCE_BEAM_GEOMETRY)
        mesh = generate_assembly_mesh(geom, MeshResolution(10, 3, 2, 1), 1)
        gutted = TaggedMesh(mesh.vertices, mesh.cells, mesh.volume_tags,
                            {GAMMA_U: mesh.surface_tags[GAMMA_U],
                             GAMMA_P0: mesh.surface_tags[GAMMA_P0]},
                            dict(mesh.point_tags), order=1)
        path = tmp_path / "gutted.pzmesh"
        save_mesh(gutted, path)
        with pytest.raises(MeshParseError, match="electrode surface missing"):
            load_mesh(path)

    def test_malformed_header(self, tmp_path):
        path = tmp_path / "junk.pzmesh"
        path.write_text("not a mesh\n")
        with pytest.raises(MeshParseError, match="line 1"):
            load_mesh(path)

    def test_truncated_file_reports_line(self, tmp_path):
        path = tmp_path / "trunc.pzmesh"
        path.write_text("pzmesh 1\nvertices 3\n0 0 0\n")
        with pytest.raises(MeshParseError):
            load_mesh(path)


class TestVtkExport:
    def test_zero_fields_structure(self, tmp_path):
        mesh = unit_box()
        path = tmp_path / "box.vtk"
        export_vtk(mesh, {}, path)
        text = path.read_text()
        assert "POINTS 8 double" in text
        assert "CELLS 6" in text
        assert "CELL_TYPES" in text

    def test_vector_field_named_u(self, tmp_path):
        mesh = unit_box()
        u = np.zeros((mesh.n_nodes, 3))
        path = tmp_path / "mode.vtk"
        export_vtk(mesh, {"u": u}, path)
        assert "VECTORS u double" in path.read_text()

    def test_quadratic_cells_type(self, tmp_path, reference_mesh):
        path = tmp_path / "p2.vtk"
        export_vtk(reference_mesh, {}, path)
        lines = path.read_text().splitlines()
        idx = lines.index(f"CELL_TYPES {reference_mesh.n_cells}")
        assert lines[idx + 1] == "24"

    def test_field_length_mismatch(self, tmp_path):
        mesh = unit_box()
        with pytest.raises(ValueError, match="length"):
            export_vtk(mesh, {"u": np.zeros((3, 3))}, tmp_path / "x.vtk")
