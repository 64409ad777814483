"""Tetrahedral meshes of the beam/disc assembly with tagged regions.

The beam is a structured box mesh; the sensor disc is an extruded regular
polygon whose footprint triangulation is shared with the beam top face, so
the two regions conform node-to-node.  Prisms are split into tetrahedra with
the smallest-global-vertex diagonal rule, which keeps shared quad faces
consistent between neighbours.

Region names: volume tags ELASTIC / PIEZO, surface tags GAMMA_U (clamp),
GAMMA_P0 (grounded electrode), GAMMA_PQ (floating electrode), point tags
W (weight) and L (laser spot).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import Delaunay

from .elements import TET_EDGES, TET_FACES
from .errors import MeshError, MeshParseError
from .materials import BeamGeometry

ELASTIC = "ELASTIC"
PIEZO = "PIEZO"
GAMMA_U = "GAMMA_U"
GAMMA_P0 = "GAMMA_P0"
GAMMA_PQ = "GAMMA_PQ"

_FILE_MAGIC = "pzmesh 1"


@dataclass(frozen=True)
class AssemblyGeometry:
    """Placement of the disc, load point and laser spot on the beam.

    Axis convention: x runs from the clamp (x = 0) to the free end
    (x = active_length), the clamped overhang extends to negative x, z is
    the thickness direction with the beam occupying [-thickness, 0] and the
    disc [0, disc_thickness].
    """

    beam: BeamGeometry
    clamped_overhang: float = 0.0
    disc_radius: float = 0.005
    disc_thickness: float = 0.002
    disc_center_x: float = 0.028
    laser_point_x: float = 0.051
    weight_point_x: float = 0.102
    disc_polygon_sides: int = 16

    def __post_init__(self):
        if self.clamped_overhang < 0:
            raise ValueError("clamped_overhang must be >= 0")
        if self.disc_radius < 0:
            raise ValueError("disc_radius must be >= 0")
        if self.has_disc and self.disc_thickness <= 0:
            raise ValueError("disc_thickness must be > 0")
        for name in ("laser_point_x", "weight_point_x"):
            v = getattr(self, name)
            if not -self.clamped_overhang <= v <= self.beam.active_length:
                raise ValueError(f"{name} outside the beam surface")

    @property
    def has_disc(self) -> bool:
        return self.disc_radius > 0


@dataclass(frozen=True)
class MeshResolution:
    """Cell counts: nx, ny over the beam face, nz through the beam thickness,
    disc_layers through the disc thickness."""

    nx: int = 34
    ny: int = 8
    nz: int = 2
    disc_layers: int = 2

    def __post_init__(self):
        if min(self.nx, self.ny, self.nz, self.disc_layers) < 1:
            raise ValueError("all resolution counts must be >= 1")

    def refined(self, factor: int = 2) -> "MeshResolution":
        return MeshResolution(self.nx * factor, self.ny * factor,
                              self.nz * factor, self.disc_layers * factor)


@dataclass
class TaggedMesh:
    """Tetrahedral mesh with named volume/surface/point regions.

    vertices : (n_nodes, 3) coordinates; for order 2 the mid-edge nodes are
        appended after the corner vertices.
    cells : (nc, 4) or (nc, 10) node indices; columns 4: follow TET_EDGES.
    volume_tags : (nc,) region name per cell.
    surface_tags : name -> (nf, 3) corner-vertex triples, oriented so that
        cross(v1 - v0, v2 - v0) points out of the owning region.
    point_tags : name -> vertex index.
    """

    vertices: np.ndarray
    cells: np.ndarray
    volume_tags: np.ndarray
    surface_tags: dict = field(default_factory=dict)
    point_tags: dict = field(default_factory=dict)
    order: int = 1

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float)
        self.cells = np.asarray(self.cells, dtype=np.int64)
        self.volume_tags = np.asarray(self.volume_tags, dtype="U16")
        self.surface_tags = {k: np.asarray(v, dtype=np.int64).reshape(-1, 3)
                             for k, v in self.surface_tags.items()}

    @property
    def n_nodes(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_cells(self) -> int:
        return self.cells.shape[0]

    def cells_of(self, region: str) -> np.ndarray:
        return np.flatnonzero(self.volume_tags == region)

    def corner_coords(self, cell_rows=None) -> np.ndarray:
        cells = self.cells if cell_rows is None else self.cells[cell_rows]
        return self.vertices[cells[:, :4]]

    def cell_volumes(self, cell_rows=None) -> np.ndarray:
        v = self.corner_coords(cell_rows)
        e = v[:, 1:, :] - v[:, :1, :]
        return np.linalg.det(e) / 6.0

    def region_volume(self, region: str) -> float:
        return float(self.cell_volumes(self.cells_of(region)).sum())

    def edge_midnode_map(self) -> dict:
        """(sorted corner pair) -> mid-edge node id; order-2 meshes only."""
        if self.order != 2:
            return {}
        out = {}
        for row in self.cells:
            for k, (a, b) in enumerate(TET_EDGES):
                va, vb = row[a], row[b]
                key = (va, vb) if va < vb else (vb, va)
                out[key] = row[4 + k]
        return out

    def facet_nodes(self, facets: np.ndarray) -> np.ndarray:
        """Unique node ids carried by the given facet triples (corners plus
        mid-edge nodes for order 2)."""
        nodes = set(np.asarray(facets).ravel().tolist())
        if self.order == 2:
            emap = self.edge_midnode_map()
            for tri in np.asarray(facets).reshape(-1, 3):
                a, b, c = sorted(tri.tolist())
                for key in ((a, b), (a, c), (b, c)):
                    nodes.add(emap[key])
        return np.array(sorted(nodes), dtype=np.int64)


def _face_key(tri) -> tuple:
    return tuple(sorted(int(t) for t in tri))


def build_face_table(mesh: TaggedMesh) -> dict:
    """sorted corner triple -> list of (cell index, local face index)."""
    table = {}
    for c, row in enumerate(mesh.cells):
        for lf, face in enumerate(TET_FACES):
            key = _face_key(row[list(face)])
            table.setdefault(key, []).append((c, lf))
    return table


def validate_mesh(mesh: TaggedMesh) -> None:
    """Raise MeshError if the mesh violates any structural invariant."""
    if mesh.volume_tags.shape[0] != mesh.n_cells:
        raise MeshError("volume_tags must tag every cell")
    unknown = set(mesh.volume_tags.tolist()) - {ELASTIC, PIEZO}
    if unknown:
        raise MeshError(f"unknown volume tags: {sorted(unknown)}")
    vols = mesh.cell_volumes()
    bad = np.flatnonzero(vols <= 0)
    if bad.size:
        raise MeshError(f"cell {bad[0]} has non-positive volume {vols[bad[0]]:g}")

    if mesh.cells.max(initial=-1) >= mesh.n_nodes or mesh.cells.min(initial=0) < 0:
        raise MeshError("cell connectivity references missing nodes")

    table = build_face_table(mesh)
    for key, owners in table.items():
        if len(owners) > 2:
            raise MeshError(f"face {key} shared by {len(owners)} cells")

    def region_boundary_check(name, tris, region):
        for tri in tris:
            owners = table.get(_face_key(tri))
            if owners is None:
                raise MeshError(f"{name} facet {tuple(tri)} is not a cell face")
            regions = [mesh.volume_tags[c] for c, _ in owners]
            if region not in regions:
                raise MeshError(f"{name} facet {tuple(tri)} not on a {region} cell")
            if regions.count(region) > 1:
                raise MeshError(f"{name} facet {tuple(tri)} interior to {region}")

    for name, region in ((GAMMA_U, ELASTIC), (GAMMA_P0, PIEZO), (GAMMA_PQ, PIEZO)):
        if name in mesh.surface_tags:
            region_boundary_check(name, mesh.surface_tags[name], region)

    has_piezo = bool(np.any(mesh.volume_tags == PIEZO))
    if has_piezo:
        for name in (GAMMA_P0, GAMMA_PQ):
            if mesh.surface_tags.get(name) is None or not len(mesh.surface_tags[name]):
                raise MeshError(f"electrode surface missing: empty {name} tag set")

    elastic_nodes = set(mesh.cells[mesh.cells_of(ELASTIC)][:, :4].ravel().tolist())
    for name in ("W", "L"):
        if name in mesh.point_tags and mesh.point_tags[name] not in elastic_nodes:
            raise MeshError(f"point tag {name} is not a vertex of an ELASTIC cell")

    if mesh.order == 2:
        corners = mesh.vertices[mesh.cells[:, :4]]
        for k, (a, b) in enumerate(TET_EDGES):
            mids = mesh.vertices[mesh.cells[:, 4 + k]]
            expect = 0.5 * (corners[:, a] + corners[:, b])
            if not np.allclose(mids, expect, atol=1e-9 * _diameter(mesh)):
                raise MeshError("mid-edge nodes are not at edge midpoints")


def _diameter(mesh):
    lo = mesh.vertices.min(axis=0)
    hi = mesh.vertices.max(axis=0)
    return float(np.linalg.norm(hi - lo)) or 1.0


# ----------------------------------------------------------------------------
# Generation
# ----------------------------------------------------------------------------

def equal_area_polygon_radius(radius: float, sides: int) -> float:
    """Circumradius of the regular polygon whose area equals the disc's."""
    return radius * math.sqrt(2.0 * math.pi / (sides * math.sin(2.0 * math.pi / sides)))


def _top_face_points(geom: AssemblyGeometry, res: MeshResolution):
    """2D point set for the beam top face and the disc footprint polygon.

    Returns (points (n,2), polygon (sides,2), footprint_mask or None).
    Grid points within a clearance band of the polygon are dropped so the
    Delaunay triangulation conforms to the polygon edges.
    """
    b = geom.beam
    x0, x1 = -geom.clamped_overhang, b.active_length
    xs = np.linspace(x0, x1, res.nx + 1)
    ys = np.linspace(-b.width / 2.0, b.width / 2.0, res.ny + 1)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    grid = np.column_stack([gx.ravel(), gy.ravel()])

    if not geom.has_disc:
        return grid, None, None

    if geom.disc_polygon_sides < 8:
        raise MeshError("disc_polygon_sides must be >= 8")
    n = geom.disc_polygon_sides
    r_eq = equal_area_polygon_radius(geom.disc_radius, n)
    h2d = min((x1 - x0) / res.nx, b.width / res.ny)
    clearance = 0.55 * h2d
    cx, cy = geom.disc_center_x, 0.0
    margin = r_eq + clearance
    if (cx - margin <= x0 or cx + margin >= x1
            or abs(cy) + margin >= b.width / 2.0):
        raise MeshError("disc footprint (plus mesh clearance) exceeds the "
                        "beam top face")

    ang = 2.0 * math.pi * np.arange(n) / n
    polygon = np.column_stack([cx + r_eq * np.cos(ang), cy + r_eq * np.sin(ang)])

    keep = np.hypot(grid[:, 0] - cx, grid[:, 1] - cy) >= r_eq + clearance
    pts = [grid[keep]]
    m_rings = max(1, int(round(r_eq / h2d)))
    for k in range(1, m_rings):
        rk = r_eq * k / m_rings
        nk = max(8, int(round(n * k / m_rings)))
        a = 2.0 * math.pi * np.arange(nk) / nk
        pts.append(np.column_stack([cx + rk * np.cos(a), cy + rk * np.sin(a)]))
    pts.append(polygon)
    pts.append(np.array([[cx, cy]]))
    return np.vstack(pts), polygon, None


def _inside_convex(points, polygon, tol):
    """Point-in-convex-polygon test (counter-clockwise polygon); tol is a
    distance, positive values accept points slightly outside."""
    inside = np.ones(points.shape[0], dtype=bool)
    n = polygon.shape[0]
    for j in range(n):
        a = polygon[j]
        d = polygon[(j + 1) % n] - a
        cross = d[0] * (points[:, 1] - a[1]) - d[1] * (points[:, 0] - a[0])
        inside &= cross >= -tol * np.hypot(d[0], d[1])
    return inside


def _triangulate_top_face(geom: AssemblyGeometry, res: MeshResolution):
    """Conforming 2D triangulation: (points2d, triangles, footprint_tri_mask)."""
    points, polygon, _ = _top_face_points(geom, res)
    tri = Delaunay(points)
    simplices = tri.simplices.copy()
    # orient counter-clockwise
    p = points[simplices]
    area2 = ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
             - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1]))
    flip = area2 < 0
    simplices[flip] = simplices[flip][:, [0, 2, 1]]
    area2 = np.abs(area2)
    if np.any(area2 <= 0):
        raise MeshError("degenerate triangle in top-face triangulation")

    if polygon is None:
        return points, simplices, np.zeros(len(simplices), dtype=bool)

    # conformity: every polygon edge must appear in the triangulation
    edges = set()
    for t in simplices:
        for a, b in ((t[0], t[1]), (t[1], t[2]), (t[2], t[0])):
            edges.add((min(a, b), max(a, b)))
    n = polygon.shape[0]
    ring_ids = [int(np.argmin(np.hypot(points[:, 0] - polygon[j, 0],
                                       points[:, 1] - polygon[j, 1])))
                for j in range(n)]
    for j in range(n):
        a, b = ring_ids[j], ring_ids[(j + 1) % n]
        if (min(a, b), max(a, b)) not in edges:
            raise MeshError("non-conforming disc interface: polygon edge "
                            f"{j} missing from the triangulation")

    centroids = points[simplices].mean(axis=1)
    tol = 1e-9 * geom.disc_radius
    fp = _inside_convex(centroids, polygon, tol)
    # footprint triangles may touch the polygon boundary but not cross it
    fp_nodes = set(simplices[fp].ravel().tolist())
    on_or_in = _inside_convex(points, polygon, tol)
    straddle = [i for i in fp_nodes if not on_or_in[i]]
    if straddle:
        raise MeshError("non-conforming disc interface: footprint triangle "
                        "uses a point outside the polygon")
    return points, simplices, fp


_PRISM_PERMS = (
    (0, 1, 2, 3, 4, 5), (1, 2, 0, 4, 5, 3), (2, 0, 1, 5, 3, 4),
    (3, 5, 4, 0, 2, 1), (4, 3, 5, 1, 0, 2), (5, 4, 3, 2, 1, 0),
)


def _split_prism(p):
    """Split a prism (bottom v0 v1 v2, top v3 v4 v5 with vi+3 above vi) into
    3 tets; quad diagonals run through each quad's smallest global vertex, so
    neighbouring prisms agree on shared faces."""
    w = [p[i] for i in _PRISM_PERMS[int(np.argmin(p))]]
    if min(w[1], w[5]) < min(w[2], w[4]):
        return ((w[0], w[1], w[2], w[5]),
                (w[0], w[1], w[5], w[4]),
                (w[0], w[4], w[5], w[3]))
    return ((w[0], w[1], w[2], w[4]),
            (w[0], w[4], w[2], w[5]),
            (w[0], w[4], w[5], w[3]))


def _orient_positive(cells, vertices):
    cells = np.asarray(cells, dtype=np.int64)
    v = vertices[cells]
    det = np.linalg.det(v[:, 1:, :] - v[:, :1, :])
    flip = det < 0
    cells[flip] = cells[flip][:, [0, 1, 3, 2]]
    return cells


def generate_assembly_mesh(geom: AssemblyGeometry,
                           resolution: MeshResolution = MeshResolution(),
                           order: int = 2) -> TaggedMesh:
    """Generate the tagged beam(+disc) mesh.

    The disc polygon uses the equal-area circumradius, so the PIEZO region
    volume matches pi r^2 t up to round-off for any number of sides.
    """
    if order not in (1, 2):
        raise MeshError(f"unsupported order {order}")
    b = geom.beam
    pts2d, tris, fp_mask = _triangulate_top_face(geom, resolution)
    n2d = pts2d.shape[0]
    nz = resolution.nz

    # beam nodes: layer k at z = -h k / nz, ids k*n2d + pid (layer 0 = top face)
    zs = -b.thickness * np.arange(nz + 1) / nz
    verts = np.concatenate([
        np.column_stack([pts2d, np.full(n2d, z)]) for z in zs
    ])

    cells = []
    for k in range(nz):
        top = k * n2d
        bot = (k + 1) * n2d
        for t in tris:
            prism = (top + t[0], top + t[1], top + t[2],
                     bot + t[0], bot + t[1], bot + t[2])
            cells.extend(_split_prism(prism))
    n_beam_cells = len(cells)

    fp_tris = tris[fp_mask]
    if geom.has_disc:
        if not len(fp_tris):
            raise MeshError("disc requested but footprint triangulation empty")
        fp_ids = np.unique(fp_tris.ravel())
        fp_index = {int(pid): i for i, pid in enumerate(fp_ids)}
        nfp = len(fp_ids)
        nzd = resolution.disc_layers
        base = (nz + 1) * n2d
        disc_z = geom.disc_thickness * np.arange(1, nzd + 1) / nzd
        disc_verts = np.concatenate([
            np.column_stack([pts2d[fp_ids], np.full(nfp, z)]) for z in disc_z
        ])
        verts = np.vstack([verts, disc_verts])

        def disc_node(pid, layer):
            if layer == 0:
                return int(pid)  # shared with beam top face
            return base + (layer - 1) * nfp + fp_index[int(pid)]

        for k in range(nzd):
            for t in fp_tris:
                prism = (disc_node(t[0], k), disc_node(t[1], k), disc_node(t[2], k),
                         disc_node(t[0], k + 1), disc_node(t[1], k + 1),
                         disc_node(t[2], k + 1))
                cells.extend(_split_prism(prism))

    cells = _orient_positive(cells, verts)
    volume_tags = np.array([ELASTIC] * n_beam_cells
                           + [PIEZO] * (len(cells) - n_beam_cells), dtype="U16")

    mesh = TaggedMesh(verts, cells, volume_tags, {}, {}, order=1)
    mesh.surface_tags = _build_surface_tags(mesh, geom)
    mesh.point_tags = _build_point_tags(mesh, geom)
    if order == 2:
        mesh = _to_quadratic(mesh)
    validate_mesh(mesh)
    return mesh


def _oriented_face(mesh, cell, local_face):
    """Corner triple of a cell face, oriented with outward normal."""
    row = mesh.cells[cell]
    tri = [int(row[i]) for i in TET_FACES[local_face]]
    opp = int(row[local_face])
    v = mesh.vertices
    nrm = np.cross(v[tri[1]] - v[tri[0]], v[tri[2]] - v[tri[0]])
    if np.dot(nrm, v[opp] - v[tri[0]]) > 0:
        tri[1], tri[2] = tri[2], tri[1]
    return tuple(tri)


def _build_surface_tags(mesh: TaggedMesh, geom: AssemblyGeometry) -> dict:
    b = geom.beam
    x0 = -geom.clamped_overhang
    tol = 1e-9 * max(b.active_length, b.width, b.thickness)
    table = build_face_table(mesh)
    v = mesh.vertices
    gamma_u, gamma_p0, gamma_pq = [], [], []
    for key, owners in table.items():
        regions = [mesh.volume_tags[c] for c, _ in owners]
        xs = v[list(key), 0]
        zs_ = v[list(key), 2]
        if len(owners) == 1 and regions[0] == ELASTIC:
            clamped = (np.all(np.abs(xs - x0) < tol) if geom.clamped_overhang == 0
                       else np.all(xs <= tol))
            if clamped:
                gamma_u.append(_oriented_face(mesh, *owners[0]))
        if PIEZO in regions and regions.count(PIEZO) == 1:
            c, lf = owners[regions.index(PIEZO)]
            if np.all(np.abs(zs_) < tol):
                gamma_p0.append(_oriented_face(mesh, c, lf))
            elif np.all(np.abs(zs_ - geom.disc_thickness) < tol):
                gamma_pq.append(_oriented_face(mesh, c, lf))
    tags = {GAMMA_U: np.array(sorted(gamma_u), dtype=np.int64).reshape(-1, 3)}
    if geom.has_disc:
        tags[GAMMA_P0] = np.array(sorted(gamma_p0), dtype=np.int64).reshape(-1, 3)
        tags[GAMMA_PQ] = np.array(sorted(gamma_pq), dtype=np.int64).reshape(-1, 3)
    return tags


def _build_point_tags(mesh: TaggedMesh, geom: AssemblyGeometry) -> dict:
    b = geom.beam
    v = mesh.vertices
    tol = 1e-9 * max(b.active_length, b.width, b.thickness)

    def nearest(x, y, z_plane):
        on = np.abs(v[:, 2] - z_plane) < tol
        ids = np.flatnonzero(on)
        d = np.hypot(v[ids, 0] - x, v[ids, 1] - y)
        return int(ids[np.argmin(d)])

    return {"W": nearest(geom.weight_point_x, 0.0, -b.thickness),
            "L": nearest(geom.laser_point_x, 0.0, 0.0)}


def _to_quadratic(mesh: TaggedMesh) -> TaggedMesh:
    """Insert mid-edge nodes and upgrade cells to 10-node tetrahedra."""
    edges = {}
    nc = mesh.n_cells
    cells10 = np.empty((nc, 10), dtype=np.int64)
    cells10[:, :4] = mesh.cells[:, :4]
    next_id = mesh.n_nodes
    mid_coords = []
    for c in range(nc):
        row = mesh.cells[c]
        for k, (a, bb) in enumerate(TET_EDGES):
            va, vb = int(row[a]), int(row[bb])
            key = (va, vb) if va < vb else (vb, va)
            node = edges.get(key)
            if node is None:
                node = next_id
                edges[key] = node
                next_id += 1
                mid_coords.append(0.5 * (mesh.vertices[va] + mesh.vertices[vb]))
            cells10[c, 4 + k] = node
    verts = np.vstack([mesh.vertices, np.array(mid_coords)])
    return TaggedMesh(verts, cells10, mesh.volume_tags.copy(),
                      dict(mesh.surface_tags), dict(mesh.point_tags), order=2)


# ----------------------------------------------------------------------------
# File I/O
# ----------------------------------------------------------------------------

def save_mesh(mesh: TaggedMesh, path) -> None:
    """Write the line-oriented ASCII mesh format (bit-exact round trips)."""
    lines = [_FILE_MAGIC]
    lines.append(f"vertices {mesh.n_nodes}")
    for x, y, z in mesh.vertices:
        lines.append(f"{x:.17g} {y:.17g} {z:.17g}")
    lines.append(f"cells {mesh.n_cells} order {mesh.order}")
    for row in mesh.cells:
        lines.append(" ".join(str(int(i)) for i in row))
    lines.append("vtag")
    lines.append(" ".join(mesh.volume_tags.tolist()))
    for name in sorted(mesh.surface_tags):
        tris = mesh.surface_tags[name]
        lines.append(f"stag {name} {len(tris)}")
        for tri in tris:
            lines.append(f"{tri[0]} {tri[1]} {tri[2]}")
    for name in sorted(mesh.point_tags):
        lines.append(f"ptag {name} {mesh.point_tags[name]}")
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def load_mesh(path) -> TaggedMesh:
    """Parse and validate a mesh file; raises MeshParseError with the line
    number on malformed input."""
    with open(path) as fh:
        lines = fh.read().splitlines()

    idx = 0

    def take(expect=None):
        nonlocal idx
        if idx >= len(lines):
            raise MeshParseError("unexpected end of file", line=len(lines))
        ln = lines[idx]
        idx += 1
        if expect is not None and not ln.startswith(expect):
            raise MeshParseError(f"expected '{expect}'", line=idx)
        return ln

    if take().strip() != _FILE_MAGIC:
        raise MeshParseError(f"bad header, expected '{_FILE_MAGIC}'", line=1)
    try:
        n_verts = int(take("vertices").split()[1])
    except (IndexError, ValueError):
        raise MeshParseError("malformed vertices header", line=idx) from None
    verts = np.empty((n_verts, 3))
    for i in range(n_verts):
        parts = take().split()
        if len(parts) != 3:
            raise MeshParseError("vertex line must have 3 coordinates", line=idx)
        try:
            verts[i] = [float(p) for p in parts]
        except ValueError:
            raise MeshParseError("bad vertex coordinate", line=idx) from None

    parts = take("cells").split()
    try:
        n_cells, order = int(parts[1]), int(parts[3])
    except (IndexError, ValueError):
        raise MeshParseError("malformed cells header", line=idx) from None
    if order not in (1, 2):
        raise MeshParseError(f"unsupported order {order}", line=idx)
    width = 4 if order == 1 else 10
    cells = np.empty((n_cells, width), dtype=np.int64)
    for i in range(n_cells):
        parts = take().split()
        if len(parts) != width:
            raise MeshParseError(f"cell line must have {width} indices", line=idx)
        try:
            cells[i] = [int(p) for p in parts]
        except ValueError:
            raise MeshParseError("bad cell index", line=idx) from None

    take("vtag")
    tags = take().split()
    if len(tags) != n_cells:
        raise MeshParseError(f"vtag line must list {n_cells} names", line=idx)

    surface_tags = {}
    point_tags = {}
    while idx < len(lines):
        ln = lines[idx]
        if not ln.strip():
            idx += 1
            continue
        if ln.startswith("stag"):
            idx += 1
            parts = ln.split()
            try:
                name, count = parts[1], int(parts[2])
            except (IndexError, ValueError):
                raise MeshParseError("malformed stag header", line=idx) from None
            tris = np.empty((count, 3), dtype=np.int64)
            for i in range(count):
                parts = take().split()
                if len(parts) != 3:
                    raise MeshParseError("facet line must have 3 indices", line=idx)
                tris[i] = [int(p) for p in parts]
            surface_tags[name] = tris
        elif ln.startswith("ptag"):
            idx += 1
            parts = ln.split()
            try:
                point_tags[parts[1]] = int(parts[2])
            except (IndexError, ValueError):
                raise MeshParseError("malformed ptag line", line=idx) from None
        else:
            raise MeshParseError(f"unrecognized directive: {ln[:40]!r}", line=idx + 1)

    mesh = TaggedMesh(verts, cells, np.array(tags, dtype="U16"),
                      surface_tags, point_tags, order=order)
    try:
        validate_mesh(mesh)
    except MeshError as exc:
        raise MeshParseError(str(exc)) from exc
    return mesh


# ----------------------------------------------------------------------------
# VTK export
# ----------------------------------------------------------------------------

# legacy VTK node order for quadratic tets: corners, then edges
# (0,1),(1,2),(2,0),(0,3),(1,3),(2,3) -> our columns
_VTK_P2_PERM = [0, 1, 2, 3, 4, 7, 5, 6, 8, 9]


def export_vtk(mesh: TaggedMesh, nodal_fields: dict, path) -> None:
    """Write a legacy ASCII VTK unstructured grid with nodal point data.

    nodal_fields maps a name to an (n_nodes,) scalar or (n_nodes, 3) vector
    array.
    """
    n = mesh.n_nodes
    for name, arr in nodal_fields.items():
        arr = np.asarray(arr)
        if arr.shape[0] != n:
            raise ValueError(f"field {name!r} length {arr.shape[0]} != {n} nodes")
    out = ["# vtk DataFile Version 3.0", "pzbeam mesh", "ASCII",
           "DATASET UNSTRUCTURED_GRID", f"POINTS {n} double"]
    for x, y, z in mesh.vertices:
        out.append(f"{x:.17g} {y:.17g} {z:.17g}")
    width = mesh.cells.shape[1]
    out.append(f"CELLS {mesh.n_cells} {mesh.n_cells * (width + 1)}")
    perm = _VTK_P2_PERM if mesh.order == 2 else [0, 1, 2, 3]
    for row in mesh.cells:
        out.append(f"{width} " + " ".join(str(int(row[i])) for i in perm))
    out.append(f"CELL_TYPES {mesh.n_cells}")
    ctype = "24" if mesh.order == 2 else "10"
    out.extend([ctype] * mesh.n_cells)
    if nodal_fields:
        out.append(f"POINT_DATA {n}")
        for name, arr in nodal_fields.items():
            arr = np.asarray(arr, dtype=float)
            if arr.ndim == 1:
                out.append(f"SCALARS {name} double 1")
                out.append("LOOKUP_TABLE default")
                out.extend(f"{v:.17g}" for v in arr)
            else:
                out.append(f"VECTORS {name} double")
                out.extend(f"{v[0]:.17g} {v[1]:.17g} {v[2]:.17g}" for v in arr)
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(out) + "\n")
