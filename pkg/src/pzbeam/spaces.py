"""Finite element fields: DOF numbering and Dirichlet bookkeeping."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mesh import TaggedMesh

VECTOR3 = "VECTOR3"
SCALAR = "SCALAR"


@dataclass
class FieldSpace:
    """Nodal Lagrange space on the mesh (or on one tagged region).

    DOF numbering is dense over the active nodes: dof = local_node * n_comp
    + component.  Constrained DOFs keep their numbers; solvers reduce to the
    free set via `free_dofs`.
    """

    mesh: TaggedMesh
    kind: str
    nodes: np.ndarray  # active mesh node ids, sorted
    node_index: np.ndarray  # mesh node id -> local node (or -1)
    constrained: np.ndarray = field(default_factory=lambda: np.empty(0, np.int64))
    prescribed: np.ndarray = field(default_factory=lambda: np.empty(0, float))

    @property
    def n_components(self) -> int:
        return 3 if self.kind == VECTOR3 else 1

    @property
    def n_dofs(self) -> int:
        return len(self.nodes) * self.n_components

    @property
    def free_dofs(self) -> np.ndarray:
        mask = np.ones(self.n_dofs, dtype=bool)
        mask[self.constrained] = False
        return np.flatnonzero(mask)

    def dof(self, mesh_node: int, component: int = 0) -> int:
        local = self.node_index[mesh_node]
        if local < 0:
            raise KeyError(f"node {mesh_node} not active in this space")
        return int(local) * self.n_components + component

    def cell_dofs(self, cell_nodes: np.ndarray) -> np.ndarray:
        """(nc, nbf*ncomp) DOF ids, components interleaved per node."""
        local = self.node_index[cell_nodes]
        nc, nbf = cell_nodes.shape
        ncomp = self.n_components
        if ncomp == 1:
            return local.astype(np.int64)
        dofs = (local[:, :, None] * ncomp
                + np.arange(ncomp)[None, None, :])
        return dofs.reshape(nc, nbf * ncomp).astype(np.int64)

    def constrain_nodes(self, mesh_nodes, components=None, value=0.0) -> None:
        """Mark DOFs of the given mesh nodes as Dirichlet-constrained."""
        comps = range(self.n_components) if components is None else components
        new = [self.dof(n, c) for n in np.asarray(mesh_nodes).ravel()
               for c in comps]
        allc = np.concatenate([self.constrained, np.array(new, np.int64)])
        allv = np.concatenate([self.prescribed, np.full(len(new), value)])
        allc, keep = np.unique(allc, return_index=True)
        self.constrained = allc
        self.prescribed = allv[keep]

    def constrain_surface(self, tag: str, components=None, value=0.0) -> None:
        facets = self.mesh.surface_tags[tag]
        self.constrain_nodes(self.mesh.facet_nodes(facets), components, value)


def vector_space(mesh: TaggedMesh) -> FieldSpace:
    """Displacement space over the whole mesh."""
    nodes = np.arange(mesh.n_nodes, dtype=np.int64)
    return FieldSpace(mesh, VECTOR3, nodes, nodes.copy())


def scalar_space(mesh: TaggedMesh, region: str | None = None) -> FieldSpace:
    """Scalar space over the whole mesh or one volume region."""
    if region is None:
        nodes = np.arange(mesh.n_nodes, dtype=np.int64)
    else:
        rows = mesh.cells_of(region)
        nodes = np.unique(mesh.cells[rows].ravel())
    index = np.full(mesh.n_nodes, -1, dtype=np.int64)
    index[nodes] = np.arange(len(nodes))
    return FieldSpace(mesh, SCALAR, nodes, index)
