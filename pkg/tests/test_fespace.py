import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hhomg.fespace import (
    BulkSpace,
    DegenerateElementError,
    QuadratureError,
    SkeletonSpace,
    l2_project_face,
    make_cell_basis,
    make_face_basis,
    monomial_exponents,
    poly_dim,
    project_bulk,
    project_faces,
    project_skeleton,
    quadrature,
)
from hhomg.mesh import build_cube_bey, build_structured_square

TRIANGLE = np.array([[0.1, 0.2], [1.3, 0.4], [0.5, 1.1]])
TET = np.array([[0.0, 0.1, 0.0], [1.0, 0.2, 0.1], [0.2, 1.1, 0.0], [0.3, 0.2, 0.9]])


def test_quadrature_examples():
    q = quadrature(2, 1)
    assert math.isclose(q.integrate(q.points.sum(axis=1)), 1 / 3, rel_tol=1e-13)
    q = quadrature(2, 4)
    x, y = q.points.T
    assert math.isclose(q.integrate(x**2 * y**2), 1 / 180, rel_tol=1e-13)
    q = quadrature(1, 3)
    assert math.isclose(q.integrate(q.points[:, 0] ** 3), 1 / 4, rel_tol=1e-13)


def _monomial_integral(e):
    # int over the reference simplex of x^e = prod(e_i!) / (|e| + d)!
    return math.prod(math.factorial(k) for k in e) / math.factorial(sum(e) + len(e))


@pytest.mark.parametrize("dim", [1, 2, 3])
@pytest.mark.parametrize("degree", [0, 3, 6, 10])
def test_quadrature_exact_for_all_monomials(dim, degree):
    q = quadrature(dim, degree)
    assert np.all(q.weights > 0)
    for e in monomial_exponents(degree, dim):
        approx = q.integrate(np.prod(q.points**e, axis=1))
        assert math.isclose(approx, _monomial_integral(e), rel_tol=1e-13)


@settings(max_examples=40, deadline=None)
@given(
    dim=st.integers(1, 3),
    degree=st.integers(0, 8),
    seed=st.integers(0, 2**31),
)
def test_quadrature_random_polynomials(dim, degree, seed):
    rng = np.random.default_rng(seed)
    exps = monomial_exponents(degree, dim)
    c = rng.standard_normal(len(exps))
    q = quadrature(dim, degree)
    vals = np.prod(q.points[:, None, :] ** exps[None], axis=2) @ c
    exact = sum(ci * _monomial_integral(e) for ci, e in zip(c, exps))
    assert abs(q.integrate(vals) - exact) <= 1e-13 * max(1.0, np.abs(c).sum())


def test_quadrature_errors():
    with pytest.raises(QuadratureError):
        quadrature(2, -1)
    with pytest.raises(QuadratureError):
        quadrature(4, 2)


def test_cell_basis_degree_zero_is_normalized_constant():
    b = make_cell_basis(TRIANGLE, 0)
    x, _ = b.quadrature()
    assert b.size == 1
    np.testing.assert_allclose(b(x), 1 / math.sqrt(b.volume), rtol=1e-13)


@pytest.mark.parametrize("verts", [TRIANGLE, TET], ids=["triangle", "tet"])
@pytest.mark.parametrize("degree", [1, 2, 3, 4])
def test_cell_basis_orthonormal(verts, degree):
    b = make_cell_basis(verts, degree)
    assert b.size == poly_dim(degree, len(verts) - 1)
    assert np.abs(b.gram() - np.eye(b.size)).max() < 1e-12


def test_cell_basis_higher_functions_have_zero_mean():
    b = make_cell_basis(TRIANGLE, 2)
    x, w = b.quadrature()
    means = w @ b(x)
    assert b.size == 6
    assert np.abs(means[1:]).max() < 1e-13


def test_cell_basis_gradients_match_finite_differences():
    b = make_cell_basis(TET, 3)
    x0 = np.array([[0.35, 0.4, 0.2]])
    eps = 1e-6
    fd = np.stack(
        [(b(x0 + eps * e) - b(x0 - eps * e))[0] / (2 * eps) for e in np.eye(3)], axis=1
    )
    np.testing.assert_allclose(b.gradients(x0)[0], fd, atol=1e-6)


@pytest.mark.parametrize("degree", [0, 1, 2, 3])
def test_face_basis_on_edge(degree):
    b = make_face_basis(np.array([[0.2, 0.1], [1.0, 0.7]]), degree)
    assert b.size == degree + 1
    assert np.abs(b.gram() - np.eye(b.size)).max() < 1e-12
    if degree == 0:
        x, _ = b.quadrature()
        np.testing.assert_allclose(b(x), 1 / math.sqrt(b.measure))


def test_face_basis_on_triangle_in_3d():
    b = make_face_basis(TET[1:], 3)
    assert b.size == 10
    assert np.abs(b.gram() - np.eye(b.size)).max() < 1e-12


def test_degenerate_elements_rejected():
    with pytest.raises(DegenerateElementError):
        make_cell_basis([[0, 0], [1, 1], [2, 2]], 1)
    with pytest.raises(DegenerateElementError):
        make_face_basis([[0, 0, 0], [1, 0, 0], [2, 0, 0]], 1)


def test_projection_of_x_squared_onto_linears():
    b = make_face_basis(np.array([[0.0, 0.0], [1.0, 0.0]]), 1)
    c = l2_project_face(lambda x: x[:, 0] ** 2, b)
    t = np.linspace(0, 1, 7)
    pts = np.column_stack([t, 0 * t])
    np.testing.assert_allclose(b(pts) @ c, t - 1 / 6, atol=1e-13)


def test_face_projection_reproduces_and_zero():
    b = make_face_basis(TET[:3], 2)
    g = lambda x: 1 + x[:, 0] - 2 * x[:, 1] * x[:, 2] + x[:, 0] ** 2
    c = l2_project_face(g, b)
    x, _ = b.quadrature()
    np.testing.assert_allclose(b(x) @ c, g(x), atol=1e-12)
    assert not np.any(l2_project_face(lambda x: 0 * x[:, 0], b))


def _eval_bulk(mesh, coef, degree, pts, cells):
    out = np.empty(len(pts))
    for i, (p, c) in enumerate(zip(pts, cells)):
        out[i] = make_cell_basis(mesh.vertices[mesh.cells[c]], degree)(p[None])[0] @ coef[c]
    return out


@pytest.mark.parametrize("mesh", [build_structured_square(3), build_cube_bey(1)], ids=["2d", "3d"])
def test_project_bulk_reproduces_polynomials_and_is_idempotent(mesh):
    p = 2
    u = lambda x: 1 + x[:, 0] - 3 * x[:, 1] + x[:, 0] * x[:, -1] + 0.5 * x[:, 1] ** 2
    coef = project_bulk(u, mesh, p)
    assert coef.shape == (mesh.n_cells, poly_dim(p, mesh.dim))
    assert coef.size == BulkSpace.from_mesh(mesh, p).size
    cells = np.arange(mesh.n_cells)
    pts = mesh.barycenters() * 0.9 + 0.1 * mesh.vertices[mesh.cells[:, 0]]
    np.testing.assert_allclose(_eval_bulk(mesh, coef, p, pts, cells), u(pts), atol=1e-12)
    # project the projection: evaluate the piecewise polynomial through the owning cell
    f = lambda x: np.sin(3 * x[:, 0]) * np.exp(x[:, 1])
    c1 = project_bulk(f, mesh, p)
    # the projected function, cell by cell, projected again
    c2 = np.empty_like(c1)
    for c in cells:
        b = make_cell_basis(mesh.vertices[mesh.cells[c]], p)
        x, w = b.quadrature()
        c2[c] = b(x).T @ (w * (b(x) @ c1[c]))
    np.testing.assert_allclose(c2, c1, atol=1e-13)


def test_skeleton_space_layout():
    mesh = build_structured_square(3)
    s = SkeletonSpace.from_mesh(mesh, 2)
    assert s.face_dofs == 3
    assert np.all(s.offsets[mesh.face_boundary] == -1)
    offs = s.offsets[s.interior_faces]
    assert np.array_equal(offs, np.arange(len(offs)) * 3)
    assert s.size == 3 * np.count_nonzero(~mesh.face_boundary)
    with pytest.raises(KeyError):
        s.face_slice(int(np.flatnonzero(mesh.face_boundary)[0]))
    # weights: sum over adjacent cells of |T| / |dT|
    T = mesh.face_cells[s.interior_faces[0]]
    expected = sum(mesh.cell_volume[t] / mesh.cell_boundary_measure[t] for t in T)
    assert math.isclose(s.weights[s.interior_faces[0]], expected)
    assert np.all(s.dof_weights() > 0)


def test_project_skeleton_linear_exact_and_idempotent():
    mesh = build_cube_bey(2)
    s = SkeletonSpace.from_mesh(mesh, 1)
    u = lambda x: 2 - x[:, 0] + 4 * x[:, 1] - x[:, 2]
    m = project_skeleton(u, mesh, s)
    assert m.shape == (s.size,)
    for f in s.interior_faces[:10]:
        b = make_face_basis(mesh.vertices[mesh.faces[f]], 1)
        x, _ = b.quadrature()
        np.testing.assert_allclose(b(x) @ m[s.face_slice(f)], u(x), atol=1e-12)
    f0 = s.interior_faces[0]
    b = make_face_basis(mesh.vertices[mesh.faces[f0]], 1)
    g = lambda x: np.cos(x[:, 0] + 2 * x[:, 1])
    once = project_faces(g, mesh, 1, [f0])[0]
    twice = l2_project_face(lambda x: b(x) @ once, b)
    np.testing.assert_allclose(twice, once, atol=1e-14)
    assert not np.any(project_skeleton(lambda x: 0 * x[:, 0], mesh, s))
