"""Quadrature, orthonormal modal bases and DOF spaces on simplices.

Bases are built once on the reference simplex (vertices ``0, e_1, ..., e_d``)
by orthonormalizing graded monomials against the exact reference mass
matrix, then mapped affinely.  Because the maps are affine, the mapped
functions scaled by ``sqrt(|ref| / |K|)`` are orthonormal on the physical
element ``K`` as well, so every cell and face mass matrix is the identity.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations_with_replacement

import numpy as np
from scipy.special import roots_jacobi

__all__ = [
    "QuadratureRule",
    "quadrature",
    "ReferenceBasis",
    "reference_basis",
    "CellBasis",
    "FaceBasis",
    "make_cell_basis",
    "make_face_basis",
    "l2_project_face",
    "SkeletonSpace",
    "BulkSpace",
    "project_bulk",
    "project_skeleton",
    "poly_dim",
]


class QuadratureError(ValueError):
    pass


class DegenerateElementError(ValueError):
    pass


def poly_dim(degree: int, dim: int) -> int:
    """Dimension of the total-degree polynomial space P_degree in ``dim`` variables."""
    if degree < 0:
        return 0
    return math.comb(degree + dim, dim)


def simplex_volume(dim: int) -> float:
    return 1.0 / math.factorial(dim)


# ---------------------------------------------------------------------------
# quadrature

@dataclass(frozen=True)
class QuadratureRule:
    """Rule on the reference simplex of dimension ``dim``."""

    points: np.ndarray  # (nq, dim)
    weights: np.ndarray  # (nq,)
    degree: int

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def integrate(self, values: np.ndarray) -> np.ndarray:
        return np.tensordot(self.weights, values, axes=(0, 0))


def _jacobi_01(n: int, alpha: float):
    # Gauss-Jacobi on [0, 1] with weight (1 - t)^alpha
    x, w = roots_jacobi(n, alpha, 0.0)
    return (x + 1.0) / 2.0, w / 2.0 ** (alpha + 1.0)


@lru_cache(maxsize=None)
def _collapsed_rule(dim: int, degree: int) -> QuadratureRule:
    n = max(1, (degree + 2) // 2)
    if dim == 1:
        t, w = _jacobi_01(n, 0.0)
        return QuadratureRule(t[:, None], w, degree)
    if dim == 2:
        u, wu = _jacobi_01(n, 0.0)
        v, wv = _jacobi_01(n, 1.0)
        U, V = np.meshgrid(u, v, indexing="ij")
        W = np.outer(wu, wv)
        pts = np.stack([U * (1.0 - V), V], axis=-1).reshape(-1, 2)
        return QuadratureRule(pts, W.ravel(), degree)
    if dim == 3:
        u, wu = _jacobi_01(n, 0.0)
        v, wv = _jacobi_01(n, 1.0)
        s, ws = _jacobi_01(n, 2.0)
        U, V, S = np.meshgrid(u, v, s, indexing="ij")
        W = wu[:, None, None] * wv[None, :, None] * ws[None, None, :]
        pts = np.stack(
            [U * (1.0 - V) * (1.0 - S), V * (1.0 - S), S], axis=-1
        ).reshape(-1, 3)
        return QuadratureRule(pts, W.ravel(), degree)
    raise QuadratureError(f"unsupported simplex dimension {dim}")


def quadrature(dim: int, degree: int) -> QuadratureRule:
    """Collapsed Gauss-Jacobi rule on the reference ``dim``-simplex.

    The rule is exact for all polynomials of total degree ``<= degree`` and
    has strictly positive weights.
    """
    if degree < 0 or degree > 60:
        raise QuadratureError(f"unsupported quadrature degree {degree}")
    return _collapsed_rule(dim, degree)


# ---------------------------------------------------------------------------
# reference orthonormal bases

def monomial_exponents(degree: int, dim: int) -> np.ndarray:
    """Graded exponent list: all of degree 0, then degree 1, and so on."""
    rows = []
    for k in range(degree + 1):
        for combo in combinations_with_replacement(range(dim), k):
            e = [0] * dim
            for c in combo:
                e[c] += 1
            rows.append(e)
    return np.array(rows, dtype=int).reshape(-1, dim)


@dataclass(frozen=True)
class ReferenceBasis:
    """Orthonormal basis of P_degree on the reference simplex.

    ``coeffs[i, j]`` is the coefficient of monomial ``j`` (in coordinates
    centred at the barycentre) in basis function ``i``.  The ordering is
    graded, so the first ``poly_dim(q, dim)`` functions span P_q for every
    ``q <= degree``.
    """

    dim: int
    degree: int
    exponents: np.ndarray
    coeffs: np.ndarray

    @property
    def size(self) -> int:
        return self.coeffs.shape[0]

    def _shift(self, xi):
        return np.asarray(xi, dtype=float) - 1.0 / (self.dim + 1)

    def _powers(self, xi):
        """Table pw[k, ..., a] = z_a ** k for k = 0..degree (by repeated products)."""
        z = self._shift(xi)
        pw = np.empty((self.degree + 1,) + z.shape)
        pw[0] = 1.0
        for k in range(1, self.degree + 1):
            pw[k] = pw[k - 1] * z
        return pw

    def _monomials(self, pw, deriv=None):
        e = self.exponents
        out = None
        for a in range(self.dim):
            if a == deriv:
                f = pw[np.maximum(e[:, a] - 1, 0), ..., a] * e[:, a].reshape((-1,) + (1,) * (pw.ndim - 2))
            else:
                f = pw[e[:, a], ..., a]
            out = f if out is None else out * f
        return np.moveaxis(out, 0, -1)

    def values(self, xi: np.ndarray) -> np.ndarray:
        """Evaluate at reference points ``xi`` (..., dim) -> (..., size)."""
        return self._monomials(self._powers(xi)) @ self.coeffs.T

    def gradients(self, xi: np.ndarray) -> np.ndarray:
        """Reference gradients (..., size, dim)."""
        pw = self._powers(xi)
        return np.stack([self._monomials(pw, b) @ self.coeffs.T for b in range(self.dim)], axis=-1)


def _orthonormalize(mass: np.ndarray) -> np.ndarray:
    # Cholesky-based Gram-Schmidt with one re-orthogonalisation pass.
    n = mass.shape[0]
    C = np.eye(n)
    for _ in range(2):
        G = C @ mass @ C.T
        try:
            L = np.linalg.cholesky(G)
        except np.linalg.LinAlgError as exc:
            raise DegenerateElementError("singular Gram matrix") from exc
        C = np.linalg.solve(L, C)
    return C


@lru_cache(maxsize=None)
def reference_basis(dim: int, degree: int) -> ReferenceBasis:
    if degree < 0:
        raise ValueError("degree must be non-negative")
    exps = monomial_exponents(degree, dim)
    rule = quadrature(dim, 2 * degree)
    z = rule.points - 1.0 / (dim + 1)
    mono = np.ones((len(rule.weights), len(exps)))
    for a in range(dim):
        mono *= z[:, a, None] ** exps[:, a]
    mass = mono.T @ (rule.weights[:, None] * mono)
    coeffs = _orthonormalize(mass)
    # fix signs so the leading monomial coefficient is positive
    lead = np.array([coeffs[i, i] for i in range(len(exps))])
    coeffs *= np.sign(lead)[:, None]
    return ReferenceBasis(dim, degree, exps, coeffs)


# ---------------------------------------------------------------------------
# per-element bases

@dataclass(frozen=True)
class CellBasis:
    """Orthonormal basis of P_degree on one physical simplex."""

    vertices: np.ndarray  # (d+1, d)
    degree: int
    ref: ReferenceBasis

    @property
    def dim(self) -> int:
        return self.vertices.shape[1]

    @property
    def size(self) -> int:
        return self.ref.size

    @property
    def jacobian(self) -> np.ndarray:
        return (self.vertices[1:] - self.vertices[0]).T

    @property
    def volume(self) -> float:
        return abs(np.linalg.det(self.jacobian)) * simplex_volume(self.dim)

    @property
    def scale(self) -> float:
        return math.sqrt(simplex_volume(self.dim) / self.volume)

    def to_reference(self, x: np.ndarray) -> np.ndarray:
        return np.linalg.solve(self.jacobian, (np.asarray(x) - self.vertices[0]).T).T

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.scale * self.ref.values(self.to_reference(x))

    def gradients(self, x: np.ndarray) -> np.ndarray:
        g = self.ref.gradients(self.to_reference(x))
        Jinv = np.linalg.inv(self.jacobian)
        return self.scale * g @ Jinv

    def quadrature(self, degree: int | None = None):
        """Physical quadrature points and weights on the cell."""
        rule = quadrature(self.dim, 2 * self.degree + 2 if degree is None else degree)
        x = self.vertices[0] + rule.points @ self.jacobian.T
        return x, rule.weights * self.volume / simplex_volume(self.dim)

    def gram(self) -> np.ndarray:
        x, w = self.quadrature(2 * self.degree)
        V = self(x)
        return V.T @ (w[:, None] * V)


@dataclass(frozen=True)
class FaceBasis:
    """Orthonormal basis of P_degree on one physical face (a (d-1)-simplex)."""

    vertices: np.ndarray  # (d, d): face vertices in canonical order
    degree: int
    ref: ReferenceBasis

    @property
    def dim(self) -> int:
        return self.vertices.shape[0] - 1

    @property
    def size(self) -> int:
        return self.ref.size

    @property
    def jacobian(self) -> np.ndarray:
        return (self.vertices[1:] - self.vertices[0]).T  # (d, d-1)

    @property
    def measure(self) -> float:
        J = self.jacobian
        return math.sqrt(abs(np.linalg.det(J.T @ J))) * simplex_volume(self.dim)

    @property
    def scale(self) -> float:
        return math.sqrt(simplex_volume(self.dim) / self.measure)

    def to_reference(self, x: np.ndarray) -> np.ndarray:
        J = self.jacobian
        rhs = (np.asarray(x) - self.vertices[0]) @ J
        return np.linalg.solve(J.T @ J, rhs.T).T

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.scale * self.ref.values(self.to_reference(x))

    def quadrature(self, degree: int | None = None):
        rule = quadrature(self.dim, 2 * self.degree + 2 if degree is None else degree)
        x = self.vertices[0] + rule.points @ self.jacobian.T
        return x, rule.weights * self.measure / simplex_volume(self.dim)

    def gram(self) -> np.ndarray:
        x, w = self.quadrature(2 * self.degree)
        V = self(x)
        return V.T @ (w[:, None] * V)


def make_cell_basis(vertices, degree: int) -> CellBasis:
    vertices = np.asarray(vertices, dtype=float)
    d = vertices.shape[1]
    basis = CellBasis(vertices, degree, reference_basis(d, degree))
    if basis.volume <= 1e-14 * np.ptp(vertices, axis=0).max() ** d:
        raise DegenerateElementError("degenerate cell")
    return basis


def make_face_basis(vertices, degree: int) -> FaceBasis:
    vertices = np.asarray(vertices, dtype=float)
    fdim = vertices.shape[0] - 1
    basis = FaceBasis(vertices, degree, reference_basis(fdim, degree))
    if basis.measure <= 1e-14 * max(np.ptp(vertices, axis=0).max(), 1e-300) ** fdim:
        raise DegenerateElementError("degenerate face")
    return basis


def l2_project_face(g, basis: FaceBasis, degree: int | None = None) -> np.ndarray:
    """Coefficients of the L2 projection of ``g`` onto the face basis.

    With an orthonormal basis these are simply the moments ``int_F g phi_i``.
    """
    x, w = basis.quadrature(degree)
    return basis(x).T @ (w * g(x))


# ---------------------------------------------------------------------------
# global DOF spaces

@dataclass(frozen=True)
class SkeletonSpace:
    """Face DOF layout: ``p``-degree polynomials on interior faces only."""

    degree: int
    face_dofs: int
    interior_faces: np.ndarray  # global face ids carrying DOFs, in face order
    offsets: np.ndarray  # (n_faces,) first DOF of each face, -1 on the boundary
    weights: np.ndarray  # (n_faces,) sum over adjacent cells of |T| / |dT|

    @classmethod
    def from_mesh(cls, mesh, degree: int) -> "SkeletonSpace":
        nf = poly_dim(degree, mesh.dim - 1)
        interior = np.flatnonzero(~mesh.face_boundary)
        offsets = np.full(mesh.n_faces, -1, dtype=np.int64)
        offsets[interior] = np.arange(len(interior)) * nf
        ratio = mesh.cell_volume / mesh.cell_boundary_measure
        weights = np.zeros(mesh.n_faces)
        np.add.at(weights, mesh.cell_faces.ravel(), np.repeat(ratio, mesh.dim + 1))
        return cls(degree, nf, interior, offsets, weights)

    @property
    def size(self) -> int:
        return len(self.interior_faces) * self.face_dofs

    def dof_weights(self) -> np.ndarray:
        """Diagonal of the skeletal Gram matrix of <.,.>_l."""
        return np.repeat(self.weights[self.interior_faces], self.face_dofs)

    def face_slice(self, face: int) -> slice:
        o = self.offsets[face]
        if o < 0:
            raise KeyError(f"face {face} is a boundary face")
        return slice(o, o + self.face_dofs)


@dataclass(frozen=True)
class BulkSpace:
    degree: int
    cell_dofs: int
    n_cells: int

    @classmethod
    def from_mesh(cls, mesh, degree: int) -> "BulkSpace":
        return cls(degree, poly_dim(degree, mesh.dim), mesh.n_cells)

    @property
    def size(self) -> int:
        return self.n_cells * self.cell_dofs


def project_bulk(v, mesh, degree: int, qdegree: int | None = None) -> np.ndarray:
    """Cell-wise L2 projection, shape (n_cells, dim P_degree)."""
    d = mesh.dim
    ref = reference_basis(d, degree)
    rule = quadrature(d, 2 * degree + 2 if qdegree is None else qdegree)
    phi = ref.values(rule.points)
    J = mesh.cell_jacobians()
    x0 = mesh.vertices[mesh.cells[:, 0]]
    scale = np.sqrt(mesh.cell_volume / simplex_volume(d))
    out = np.empty((mesh.n_cells, ref.size))
    step = max(1, 2**22 // (len(rule.weights) * d))
    for start in range(0, mesh.n_cells, step):
        c = slice(start, start + step)
        x = x0[c, None, :] + np.einsum("cab,qb->cqa", J[c], rule.points)
        vals = v(x.reshape(-1, d)).reshape(x.shape[:2])
        out[c] = scale[c, None] * (vals * rule.weights) @ phi
    return out


def face_quadrature(mesh, faces, degree: int):
    """Physical quadrature points (nf, nq, d) and weights (nf, nq) on faces."""
    d = mesh.dim
    rule = quadrature(d - 1, degree)
    fv = mesh.vertices[mesh.faces[faces]]  # (nf, d, d)
    J = np.swapaxes(fv[:, 1:] - fv[:, :1], 1, 2)  # (nf, d, d-1)
    x = fv[:, None, 0, :] + np.einsum("fab,qb->fqa", J, rule.points)
    w = rule.weights[None, :] * (mesh.face_measure[faces] / simplex_volume(d - 1))[:, None]
    return x, w, rule


def project_faces(v, mesh, degree: int, faces=None, qdegree: int | None = None) -> np.ndarray:
    """Face-wise L2 moments against the orthonormal face bases, (nf, dim P_degree(F))."""
    d = mesh.dim
    if faces is None:
        faces = np.arange(mesh.n_faces)
    x, w, rule = face_quadrature(mesh, faces, 2 * degree + 2 if qdegree is None else qdegree)
    ref = reference_basis(d - 1, degree)
    chi = ref.values(rule.points)
    scale = np.sqrt(simplex_volume(d - 1) / mesh.face_measure[faces])
    vals = v(x.reshape(-1, d)).reshape(x.shape[:2])
    return scale[:, None] * (vals * w) @ chi


def project_skeleton(v, mesh, space: SkeletonSpace, qdegree: int | None = None) -> np.ndarray:
    """L2 projection onto the skeletal space (boundary faces dropped)."""
    coef = project_faces(v, mesh, space.degree, space.interior_faces, qdegree)
    return coef.ravel()
