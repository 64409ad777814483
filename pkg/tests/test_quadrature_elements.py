"""Quadrature exactness and shape-function identities."""

import math

import numpy as np
import pytest

from pzbeam.elements import (TET_EDGES, barycentric_gradients, n_basis,
                             physical_gradients, shape_grads_barycentric,
                             shape_values)
from pzbeam.quadrature import (barycentric_from_reference, tetrahedron_rule,
                               triangle_rule)


def monomial_integral_tet(a, b, c):
    """int over reference tet of x^a y^b z^c = a! b! c! / (a+b+c+3)!."""
    return (math.factorial(a) * math.factorial(b) * math.factorial(c)
            / math.factorial(a + b + c + 3))


def monomial_integral_tri(a, b):
    return math.factorial(a) * math.factorial(b) / math.factorial(a + b + 2)


@pytest.mark.parametrize("degree", [1, 2, 3, 4, 5])
def test_tet_rule_exactness(degree):
    pts, w = tetrahedron_rule(degree)
    assert np.all(w > 0)
    assert w.sum() == pytest.approx(1.0 / 6.0, rel=1e-14)
    for a in range(degree + 1):
        for b in range(degree + 1 - a):
            for c in range(degree + 1 - a - b):
                val = np.sum(w * pts[:, 0]**a * pts[:, 1]**b * pts[:, 2]**c)
                assert val == pytest.approx(monomial_integral_tet(a, b, c),
                                            rel=1e-13)


@pytest.mark.parametrize("degree", [1, 2, 3, 4, 5])
def test_triangle_rule_exactness(degree):
    pts, w = triangle_rule(degree)
    assert np.all(w > 0)
    assert w.sum() == pytest.approx(0.5, rel=1e-14)
    for a in range(degree + 1):
        for b in range(degree + 1 - a):
            val = np.sum(w * pts[:, 0]**a * pts[:, 1]**b)
            assert val == pytest.approx(monomial_integral_tri(a, b), rel=1e-13)


@pytest.mark.parametrize("order", [1, 2])
def test_partition_of_unity(order):
    pts, _ = tetrahedron_rule(3)
    lam = barycentric_from_reference(pts)
    vals = shape_values(order, lam)
    np.testing.assert_allclose(vals.sum(axis=1), 1.0, atol=1e-13)
    # physical gradients of the constant-one field vanish
    rng = np.random.default_rng(11)
    verts = rng.normal(size=(2, 4, 3))
    for c in range(2):
        if np.linalg.det(verts[c, 1:] - verts[c, 0]) < 0:
            verts[c, [1, 2]] = verts[c, [2, 1]]
    grad_l, _ = barycentric_gradients(verts)
    g = physical_gradients(order, lam, grad_l)
    np.testing.assert_allclose(g.sum(axis=2), 0.0, atol=1e-12)


@pytest.mark.parametrize("order", [1, 2])
def test_nodal_interpolation_property(order):
    """Shape i equals 1 at node i and 0 at every other node."""
    nodes_bary = [np.eye(4)[i] for i in range(4)]
    if order == 2:
        for a, b in TET_EDGES:
            mid = 0.5 * (np.eye(4)[a] + np.eye(4)[b])
            nodes_bary.append(mid)
    lam = np.array(nodes_bary)
    vals = shape_values(order, lam)
    np.testing.assert_allclose(vals, np.eye(n_basis(order)), atol=1e-14)


def test_barycentric_gradients_against_fd():
    rng = np.random.default_rng(3)
    verts = rng.normal(size=(1, 4, 3))
    # ensure positive orientation
    e = verts[0, 1:] - verts[0, 0]
    if np.linalg.det(e) < 0:
        verts[0, [1, 2]] = verts[0, [2, 1]]
    grad, det = barycentric_gradients(verts)
    assert det[0] > 0

    def bary(x):
        a = np.column_stack([verts[0, 1] - verts[0, 0],
                             verts[0, 2] - verts[0, 0],
                             verts[0, 3] - verts[0, 0]])
        xi = np.linalg.solve(a, x - verts[0, 0])
        return np.concatenate([[1 - xi.sum()], xi])

    x0 = verts[0].mean(axis=0)
    h = 1e-7
    for j in range(3):
        dx = np.zeros(3)
        dx[j] = h
        fd = (bary(x0 + dx) - bary(x0 - dx)) / (2 * h)
        np.testing.assert_allclose(grad[0, :, j], fd, atol=1e-6)


def test_physical_gradients_linear_field():
    """Gradients of an interpolated linear field are exact."""
    rng = np.random.default_rng(5)
    verts = rng.normal(size=(3, 4, 3))
    for c in range(3):
        e = verts[c, 1:] - verts[c, 0]
        if np.linalg.det(e) < 0:
            verts[c, [1, 2]] = verts[c, [2, 1]]
    grad_l, _ = barycentric_gradients(verts)
    coef = rng.normal(size=3)
    pts, _ = tetrahedron_rule(2)
    lam = barycentric_from_reference(pts)
    grads = physical_gradients(1, lam, grad_l)  # (nc, nq, 4, 3)
    nodal = np.einsum("cnx,x->cn", verts, coef)  # linear field at vertices
    g = np.einsum("cqnx,cn->cqx", grads, nodal)
    np.testing.assert_allclose(g, np.broadcast_to(coef, g.shape), rtol=1e-10)
