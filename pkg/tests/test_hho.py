import numpy as np
import pytest
import scipy.sparse.linalg as spla

from hhomg.fespace import make_cell_basis, make_face_basis, project_bulk, project_faces
from hhomg.hho import HHOLevel
from hhomg.mesh import build_cube_bey, build_lshape_coarse, build_structured_square
from hhomg.problems import get_problem

RNG = np.random.default_rng(11)

MESHES = {
    "square": lambda: build_structured_square(2),
    "cube": lambda: build_cube_bey(1),
    "lshape": build_lshape_coarse,
}


@pytest.fixture(scope="module", params=[(k, p) for k in MESHES for p in (1, 2, 3)],
                ids=lambda kp: f"{kp[0]}-p{kp[1]}")
def level(request):
    name, p = request.param
    return HHOLevel(MESHES[name](), p)


def affine(mesh, seed=0):
    a = np.random.default_rng(seed).standard_normal(mesh.dim + 1)
    return (lambda x: a[0] + x @ a[1:]), a[1:]


def hybrid_of(level, w):
    """Local hybrid coefficient arrays (nc, nH) of the interpolate of ``w``."""
    mesh = level.mesh
    cells = project_bulk(w, mesh, level.degree)
    faces = project_faces(w, mesh, level.degree)
    return np.concatenate([cells, faces[mesh.cell_faces].reshape(mesh.n_cells, level.nL)], axis=1)


def test_degree_zero_rejected():
    with pytest.raises(ValueError):
        HHOLevel(build_structured_square(1), 0)


def test_reconstruction_of_constants_and_affines(level):
    mesh = level.mesh
    const = hybrid_of(level, lambda x: 0 * x[:, 0] + 2.5)
    theta = np.einsum("crh,ch->cr", level.R, const)
    expected = project_bulk(lambda x: 0 * x[:, 0] + 2.5, mesh, level.degree + 1)
    np.testing.assert_allclose(theta, expected, atol=1e-11)
    w, grad = affine(mesh)
    x = hybrid_of(level, w)
    theta = np.einsum("crh,ch->cr", level.R, x)
    np.testing.assert_allclose(theta, project_bulk(w, mesh, level.degree + 1), atol=1e-11)
    # gradient coefficients: the constant grad w sits on the first basis function of each component
    for cell in range(min(mesh.n_cells, 4)):
        ops = level.local_operators(cell)
        G = (ops.G @ x[cell]).reshape(mesh.dim, level.nV)
        q0 = -G[:, 0] / np.sqrt(mesh.cell_volume[cell])
        np.testing.assert_allclose(q0, -grad, atol=1e-11)
        assert np.abs(G[:, 1:]).max() < 1e-11


def test_reconstruction_satisfies_defining_equation(level):
    """Residual of the variational definition over a full basis of P_{p+1}."""
    mesh, p, d = level.mesh, level.degree, level.dim
    for cell in range(min(mesh.n_cells, 3)):
        x = RNG.standard_normal(level.nH)
        v, mu = x[: level.nV], x[level.nV :].reshape(d + 1, level.nF)
        cb = make_cell_basis(mesh.vertices[mesh.cells[cell]], p + 1)
        vb = make_cell_basis(mesh.vertices[mesh.cells[cell]], p)
        xq, wq = cb.quadrature()
        gpsi = cb.gradients(xq)  # (nq, nR, d)
        gv = np.einsum("qia,i->qa", vb.gradients(xq), v)
        theta = level.R[cell] @ x
        gth = np.einsum("qia,i->qa", gpsi, theta)
        lhs = np.einsum("q,qa,qja->j", wq, gth, gpsi)
        rhs = np.einsum("q,qa,qja->j", wq, gv, gpsi)
        for i, f in enumerate(mesh.cell_faces[cell]):
            fb = make_face_basis(mesh.vertices[mesh.faces[f]], p)
            xf, wf = fb.quadrature()
            jump = fb(xf) @ mu[i] - vb(xf) @ v
            flux = cb.gradients(xf) @ mesh.cell_face_normals[cell, i]
            rhs += np.einsum("q,q,qj->j", wf, jump, flux)
        assert np.abs(lhs - rhs).max() <= 1e-11 * max(1.0, np.abs(rhs).max())
        # closure: equal means
        assert abs(theta[0] - v[0]) < 1e-12 * max(1.0, abs(v[0]))


def test_stabilization_properties(level):
    mesh = level.mesh
    w, _ = affine(mesh, 3)
    xa = hybrid_of(level, w)
    xc = hybrid_of(level, lambda x: 0 * x[:, 0] - 1.5)
    S = level.stabilization_matrices()
    for cell in range(mesh.n_cells):
        s = S[cell]
        scale = np.abs(s).max()
        assert np.abs(s - s.T).max() <= 1e-12 * scale
        assert np.linalg.eigvalsh(s).min() >= -1e-12 * scale
        assert np.abs(s @ xc[cell]).max() <= 1e-11 * scale * np.abs(xc[cell]).max()
        assert np.abs(s @ xa[cell]).max() <= 1e-11 * scale * np.abs(xa[cell]).max()
    ops = level.local_operators(0)
    np.testing.assert_allclose(ops.S, S[0], atol=1e-14)


def test_local_hybrid_matrix(level):
    mesh = level.mesh
    w, grad = affine(mesh, 5)
    x = hybrid_of(level, w)
    for cell in range(min(mesh.n_cells, 6)):
        ops = level.local_operators(cell)
        A = ops.A
        assert np.abs(A - A.T).max() <= 1e-12 * np.abs(A).max()
        assert np.linalg.eigvalsh(ops.A_TT).min() > 0
        energy = x[cell] @ A @ x[cell]
        assert np.isclose(energy, grad @ grad * mesh.cell_volume[cell], rtol=1e-10)


def test_condensation_identities(level):
    for cell in range(min(level.mesh.n_cells, 6)):
        ops = level.local_operators(cell)
        np.testing.assert_allclose(level.schur[cell], ops.schur, atol=1e-10 * np.abs(ops.A).max())
        np.testing.assert_allclose(level.U[cell], ops.cell_solver, atol=1e-10)
        sigma = level.schur[cell]
        assert np.abs(sigma - sigma.T).max() <= 1e-12 * np.abs(sigma).max()
        assert np.linalg.eigvalsh(sigma).min() >= -1e-12 * np.abs(sigma).max()
        for _ in range(5):
            mu = RNG.standard_normal(level.nL)
            full = np.concatenate([ops.cell_solver @ mu, mu])
            e_cond, e_hyb = mu @ sigma @ mu, full @ ops.A @ full
            assert abs(e_cond - e_hyb) <= 1e-10 * abs(e_hyb)
            assert e_cond <= mu @ ops.A_FF @ mu * (1 + 1e-12)


def test_zero_data_gives_zero_system(level):
    system = level.assemble()
    assert not np.any(system.b)
    m = spla.spsolve(system.A.tocsc(), system.b)
    assert not np.any(m)
    assert not np.any(level.recover_cells(np.zeros(system.size)))


def test_condensed_matrix_structure(level):
    system = level.assemble()
    A = system.A
    assert abs(A - A.T).max() <= 1e-12 * abs(A).max()
    for _ in range(3):
        mu = RNG.standard_normal(system.size)
        assert system.a_norm(mu) > 0
        assert system.inner(mu, mu) > 0
    # coupling only through shared cells
    mesh, nF = level.mesh, level.nF
    face_of_dof = level.skeleton.interior_faces[np.arange(system.size) // nF]
    coo = A.tocoo()
    share = set()
    for c in range(mesh.n_cells):
        fs = mesh.cell_faces[c]
        share.update((a, b) for a in fs for b in fs)
    assert all((face_of_dof[i], face_of_dof[j]) in share for i, j in zip(coo.row, coo.col))


SMALL = {
    "square-2": lambda: build_structured_square(1),
    "square-8": lambda: build_structured_square(2),
    "cube-6": lambda: build_cube_bey(1),
}


@pytest.mark.parametrize("name", list(SMALL))
@pytest.mark.parametrize("p", [1, 2, 3])
def test_condensed_solve_matches_hybrid_oracle(name, p):
    mesh = SMALL[name]()
    assert mesh.n_cells <= 8
    lev = HHOLevel(mesh, p)
    f = lambda x: np.cos(2 * x[:, 0]) + x[:, 1] ** 3
    g = lambda x: np.sin(x[:, 0] - 2 * x[:, 1])
    system = lev.assemble(f, g)
    m = spla.spsolve(system.A.tocsc(), system.b)
    M, rhs, ncell = lev.assemble_hybrid(f, g)
    full = spla.spsolve(M.tocsc(), rhs)
    np.testing.assert_allclose(m, full[ncell:], atol=1e-10 * np.abs(full).max())
    u = lev.recover_cells(m, f, g)
    np.testing.assert_allclose(u.ravel(), full[:ncell], atol=1e-10 * np.abs(full).max())
    # and the matrix itself is the Schur complement of the hybrid system
    D = M.toarray()
    schur = D[ncell:, ncell:] - D[ncell:, :ncell] @ np.linalg.solve(D[:ncell, :ncell], D[:ncell, ncell:])
    np.testing.assert_allclose(system.A.toarray(), schur, atol=1e-10 * np.abs(schur).max())


def test_recover_cells_affine_and_local_residual():
    lev = HHOLevel(build_structured_square(3), 2)
    w, _ = affine(lev.mesh, 8)
    system = lev.assemble(None, w)
    m = spla.spsolve(system.A.tocsc(), system.b)
    u = lev.recover_cells(m, None, w)
    assert lev.l2_error(u, w) < 1e-10
    # random skeletal data: A_TT u + A_TF mu = 0 in every cell
    mu = RNG.standard_normal(system.size)
    u = lev.recover_cells(mu)
    loc = lev.hybrid_local(mu, u)
    A = lev.A_local
    res = np.einsum("cvh,ch->cv", A[:, : lev.nV, :], loc)
    assert np.abs(res).max() <= 1e-11 * np.abs(A).max() * np.abs(loc).max()


def test_square_problem_solution_is_accurate():
    prob = get_problem("square")
    lev = HHOLevel(build_structured_square(8), 2)
    system = lev.assemble(prob.f, prob.g)
    m = spla.spsolve(system.A.tocsc(), system.b)
    u = lev.recover_cells(m, prob.f)
    norm = lev.l2_error(np.zeros_like(u), prob.u)
    assert lev.l2_error(u, prob.u) < 0.05 * norm
    hyb = lev.hybrid_local(m, u)
    # |u|_{H1} = 2 sqrt(2) pi for sin(4 pi x) sin(4 pi y)
    assert lev.energy_error(hyb, prob.grad_u) < 0.2 * 2 * np.sqrt(2) * np.pi
