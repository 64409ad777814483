"""Lagrange shape functions on straight-sided tetrahedra (orders 1 and 2).

Node numbering: 4 vertices first; for order 2, six mid-edge nodes follow in
the canonical local edge order TET_EDGES.  Mid-edge nodes sit at edge
midpoints, so the geometry map stays affine and Jacobians are constant per
cell.
"""

from __future__ import annotations

import numpy as np

#: Local edges of a tetrahedron (vertex index pairs), canonical order.
TET_EDGES = ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3))

#: Local face k is opposite vertex k.
TET_FACES = ((1, 2, 3), (0, 2, 3), (0, 1, 3), (0, 1, 2))


def n_basis(order: int) -> int:
    if order == 1:
        return 4
    if order == 2:
        return 10
    raise ValueError(f"unsupported order {order}")


def shape_values(order: int, lam: np.ndarray) -> np.ndarray:
    """Shape function values at barycentric points lam (nq, 4) -> (nq, nbf)."""
    lam = np.atleast_2d(lam)
    if order == 1:
        return lam.copy()
    vals = np.empty((lam.shape[0], 10))
    vals[:, :4] = lam * (2.0 * lam - 1.0)
    for k, (a, b) in enumerate(TET_EDGES):
        vals[:, 4 + k] = 4.0 * lam[:, a] * lam[:, b]
    return vals


def shape_grads_barycentric(order: int, lam: np.ndarray) -> np.ndarray:
    """d(shape)/d(lambda_a) at barycentric points -> (nq, nbf, 4)."""
    lam = np.atleast_2d(lam)
    nq = lam.shape[0]
    if order == 1:
        g = np.zeros((nq, 4, 4))
        g[:, np.arange(4), np.arange(4)] = 1.0
        return g
    g = np.zeros((nq, 10, 4))
    for i in range(4):
        g[:, i, i] = 4.0 * lam[:, i] - 1.0
    for k, (a, b) in enumerate(TET_EDGES):
        g[:, 4 + k, a] = 4.0 * lam[:, b]
        g[:, 4 + k, b] = 4.0 * lam[:, a]
    return g


def barycentric_gradients(verts: np.ndarray):
    """Per-cell gradients of the barycentric coordinates.

    verts : (nc, 4, 3) corner coordinates.
    Returns (grad_lambda (nc, 4, 3), detJ (nc,)) with detJ = 6 * volume.
    """
    e = verts[:, 1:, :] - verts[:, :1, :]  # (nc, 3, 3) rows are edge vectors
    det = np.linalg.det(e)
    inv = np.linalg.inv(e)  # columns of inv are grad(xi_i)? see below
    # x = v0 + e^T xi  =>  xi = e^{-T} (x - v0), so grad xi_i = rows of inv(e)^T
    # i.e. grad xi_i = inv[:, i] transposed appropriately.
    grad_xi = np.transpose(inv, (0, 2, 1))  # (nc, 3(xi), 3(space))
    grad = np.empty((verts.shape[0], 4, 3))
    grad[:, 1:, :] = grad_xi
    grad[:, 0, :] = -grad_xi.sum(axis=1)
    return grad, det


def physical_gradients(order: int, lam: np.ndarray, grad_lambda: np.ndarray):
    """Physical shape gradients (nc, nq, nbf, 3) at barycentric points."""
    dndl = shape_grads_barycentric(order, lam)  # (nq, nbf, 4)
    return np.einsum("qba,cax->cqbx", dndl, grad_lambda)
