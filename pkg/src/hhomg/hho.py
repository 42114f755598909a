"""HHO local operators, static condensation and the skeletal system.

All per-cell work is batched over cells with numpy.  For a cell ``T`` the
local hybrid vector is ``x = (v_T, mu_0, ..., mu_d)``: the ``nV`` cell
coefficients followed by ``nF`` coefficients on each local face ``i`` (the
face opposite local vertex ``i``).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.io import mmwrite

from .fespace import (
    BulkSpace,
    SkeletonSpace,
    face_quadrature,
    poly_dim,
    project_bulk,
    project_faces,
    quadrature,
    reference_basis,
    simplex_volume,
)
from .mesh import SimplicialMesh

__all__ = [
    "LocalElementOperators",
    "CondensedSystem",
    "HHOLevel",
    "export_system",
]


_CHUNK_BYTES = 64 * 2**20


def cell_chunks(n: int, *widths: int):
    """Slices over ``n`` items so that a float array of shape (chunk, *widths) stays small."""
    per_item = 8 * int(np.prod(widths))
    size = max(1, _CHUNK_BYTES // max(per_item, 1))
    for start in range(0, n, size):
        yield slice(start, min(n, start + size))


def scatter_blocks(rows, cols, blocks, shape, chunk_rows=None) -> sp.csr_matrix:
    """Sparse matrix summing dense blocks ``blocks[n]`` at ``rows[n] x cols[n]``.

    Negative indices mark dropped rows or columns.  Work proceeds in chunks
    with 32-bit indices, and the partial CSR matrices are added pairwise, which
    keeps the peak memory near the size of the result.
    """
    n, a, b = blocks.shape
    step = chunk_rows or max(1, _CHUNK_BYTES // (16 * a * b))
    parts = []
    for start in range(0, n, step):
        sl = slice(start, min(n, start + step))
        r = np.broadcast_to(rows[sl, :, None], (sl.stop - sl.start, a, b))
        c = np.broadcast_to(cols[sl, None, :], r.shape)
        keep = (r >= 0) & (c >= 0)
        m = sp.coo_matrix(
            (blocks[sl][keep], (r[keep].astype(np.int32), c[keep].astype(np.int32))), shape=shape
        ).tocsr()
        parts.append(m)
    return sum_sparse(parts, shape)


def sum_sparse(parts, shape) -> sp.csr_matrix:
    """Pairwise (tree) sum of same-shape sparse matrices, as sorted CSR."""
    parts = list(parts)
    if not parts:
        return sp.csr_matrix(shape)
    while len(parts) > 1:
        parts = [parts[i] + parts[i + 1] if i + 1 < len(parts) else parts[i] for i in range(0, len(parts), 2)]
    out = sp.csr_matrix(parts[0])
    out.sum_duplicates()
    out.sort_indices()
    return out


class SingularLocalProblem(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class LocalElementOperators:
    """Dense local matrices of one cell (a view on the batched arrays)."""

    cell: int
    R: np.ndarray  # hybrid -> P_{p+1} coefficients of the reconstruction
    G: np.ndarray  # hybrid -> coefficients of grad(reconstruction), (d*nV, nH)
    S: np.ndarray  # stabilisation
    A: np.ndarray  # full local hybrid matrix
    nV: int

    @property
    def A_TT(self):
        return self.A[: self.nV, : self.nV]

    @property
    def A_TF(self):
        return self.A[: self.nV, self.nV :]

    @property
    def A_FF(self):
        return self.A[self.nV :, self.nV :]

    @property
    def schur(self):
        return self.A_FF - self.A_TF.T @ np.linalg.solve(self.A_TT, self.A_TF)

    @property
    def cell_solver(self):
        """U_T = -A_TT^{-1} A_TF, the face -> cell local solver."""
        return -np.linalg.solve(self.A_TT, self.A_TF)


@dataclass
class CondensedSystem:
    """Skeletal system ``A m = b`` with the diagonal weight of <.,.>_l."""

    A: sp.csr_matrix
    b: np.ndarray
    W: np.ndarray
    boundary_values: np.ndarray  # (n_faces, nF), zero on interior faces

    @property
    def size(self) -> int:
        return self.A.shape[0]

    def inner(self, rho, mu) -> float:
        return float(rho @ (self.W * mu))

    def norm(self, mu) -> float:
        return float(np.sqrt(self.inner(mu, mu)))

    def a_norm(self, mu) -> float:
        return float(np.sqrt(mu @ (self.A @ mu)))


class HHOLevel:
    """HHO discretization of -Laplace(u) = f on one mesh.

    Construction stores, per cell, the reconstruction, the face traces of
    the degree-(p+1) basis, the local solver and the Schur complement.  The
    full local hybrid matrices and the stabilisation matrices are cheap to
    rebuild from these and are recomputed on demand to save memory.
    """

    def __init__(self, mesh: SimplicialMesh, degree: int):
        if degree < 1:
            raise ValueError("degree must be >= 1")
        self.mesh = mesh
        self.degree = p = degree
        self.dim = d = mesh.dim
        self.nV = poly_dim(p, d)
        self.nR = poly_dim(p + 1, d)
        self.nF = poly_dim(p, d - 1)
        self.nL = (d + 1) * self.nF
        self.nH = self.nV + self.nL
        self.qdegree = 2 * (p + 1) + 2
        self.skeleton = SkeletonSpace.from_mesh(mesh, p)
        self.bulk = BulkSpace.from_mesh(mesh, p)
        self._cell_ref = reference_basis(d, p + 1)
        self._face_ref = reference_basis(d - 1, p)
        J = mesh.cell_jacobians()
        self.Jinv = np.linalg.inv(J)
        self.cell_scale = np.sqrt(simplex_volume(d) / mesh.cell_volume)
        self._build_local_operators()
        offs = self.skeleton.offsets[mesh.cell_faces]  # (nc, d+1)
        ldofs = offs[:, :, None] + np.arange(self.nF)
        ldofs[offs < 0] = -1
        self.local_dofs = ldofs.reshape(mesh.n_cells, self.nL)

    # -- geometry helpers -------------------------------------------------

    def to_reference(self, cells, x):
        """Reference coordinates of points ``x`` (n, ..., d) lying in ``cells`` (n,)."""
        x0 = self.mesh.vertices[self.mesh.cells[cells, 0]]
        x0 = x0.reshape(x0.shape[:1] + (1,) * (x.ndim - 2) + (self.dim,))
        return np.einsum("cab,c...b->c...a", self.Jinv[cells], x - x0)

    def cell_values(self, cells, x, degree=None):
        """Physical orthonormal cell basis of degree ``degree`` (default p+1) at ``x``."""
        ref = self._cell_ref if degree is None else reference_basis(self.dim, degree)
        xi = self.to_reference(cells, x)
        vals = ref.values(xi)
        return self.cell_scale[cells].reshape((-1,) + (1,) * (vals.ndim - 1)) * vals

    # -- construction -----------------------------------------------------

    def _build_local_operators(self):
        """Reconstruction R, face traces TrR and the local hybrid matrices, chunk by chunk."""
        mesh, d = self.mesh, self.dim
        nV, nR, nF, nH = self.nV, self.nR, self.nF, self.nH
        nc = mesh.n_cells
        cf = mesh.cell_faces
        xf, wf, frule = face_quadrature(mesh, np.arange(mesh.n_faces), self.qdegree)
        chi = self._face_ref.values(frule.points)  # (nq, nF)
        fscale = np.sqrt(simplex_volume(d - 1) / mesh.face_measure)
        crule = quadrature(d, self.qdegree)
        g = self._cell_ref.gradients(crule.points)  # (nq, nR, d)
        self._Khat = np.einsum("q,qia,qjb->abij", crule.weights, g, g)
        self.TrR = np.empty((nc, d + 1, nF, nR))
        self.R = np.zeros((nc, nR, nH))
        self.R[:, 0, 0] = 1.0  # mean of the reconstruction matches the mean of v_T
        self.Att_inv = np.empty((nc, nV, nV))
        self.U = np.empty((nc, nV, self.nL))
        self.schur = np.empty((nc, self.nL, self.nL))
        width = (d + 1) * len(frule.weights) * nR * (d + 1)
        for c in cell_chunks(nc, width):
            # TrR[c, f, k, j] = int_F chi_k psi_j ; N[c, f, k, j] = int_F chi_k grad(psi_j).n
            x0 = mesh.vertices[mesh.cells[c, 0]][:, None, None, :]
            xi = np.einsum("cab,cfqb->cfqa", self.Jinv[c], xf[cf[c]] - x0)
            scale = self.cell_scale[c, None, None, None]
            Jn = np.einsum("cab,cfb->cfa", self.Jinv[c], mesh.cell_face_normals[c])
            psi = self._cell_ref.values(xi) * scale
            dn = (self._cell_ref.gradients(xi) @ Jn[:, :, None, :, None])[..., 0] * scale
            w = wf[cf[c]] * fscale[cf[c]][..., None]  # weights with the face-basis scale folded in
            wchiT = np.swapaxes(w[..., None] * chi, -1, -2)  # (n, d+1, nF, nq)
            self.TrR[c] = wchiT @ psi
            N = wchiT @ dn
            n = N.shape[0]
            K = self._stiffness(c)
            B = np.empty((n, nR, nH))
            B[:, :, :nV] = K[:, :, :nV] - np.einsum("cfki,cfkj->cij", N, self.TrR[c, ..., :nV])
            B[:, :, nV:] = N.transpose(0, 3, 1, 2).reshape(n, nR, (d + 1) * nF)
            try:
                self.R[c, 1:, :] = np.linalg.solve(K[:, 1:, 1:], B[:, 1:, :])
            except np.linalg.LinAlgError as exc:
                raise SingularLocalProblem("singular gradient Gram matrix (degenerate cell)") from exc
            self._condense(c, self._hybrid_matrices(c, K))

    def _hybrid_matrices(self, cells, K=None) -> np.ndarray:
        R = self.R[cells]
        K = self._stiffness(cells) if K is None else K
        A = np.swapaxes(R, 1, 2) @ K @ R + self.stabilization_matrices(cells)
        return 0.5 * (A + np.swapaxes(A, 1, 2))

    @property
    def A_local(self) -> np.ndarray:
        """Local hybrid matrices of all cells (recomputed on each access)."""
        return self._hybrid_matrices(slice(None))

    def _stiffness(self, cells) -> np.ndarray:
        """Gradient Gram matrices of the degree-(p+1) cell bases."""
        Jinv = self.Jinv[cells]
        return np.einsum("cab,abij->cij", Jinv @ np.swapaxes(Jinv, 1, 2), self._Khat)

    def stabilization_matrices(self, cells=slice(None)) -> np.ndarray:
        """S_T for the given cells: sum over faces of h_F^{-1} (delta_F)^T delta_F."""
        d, nV, nF, nH = self.dim, self.nV, self.nF, self.nH
        R, TrR = self.R[cells], self.TrR[cells]
        Dv = -R[:, :nV, :].copy()
        Dv[:, np.arange(nV), np.arange(nV)] += 1.0  # pi_T^p(v - theta)
        delta = -(TrR @ R[:, None]) - TrR[..., :nV] @ Dv[:, None]
        for f in range(d + 1):
            delta[:, f, np.arange(nF), nV + f * nF + np.arange(nF)] += 1.0
        hF = self.mesh.face_diameter[self.mesh.cell_faces[cells]]
        delta *= (1.0 / np.sqrt(hF))[:, :, None, None]
        delta = delta.reshape(-1, (d + 1) * nF, nH)
        return np.swapaxes(delta, 1, 2) @ delta

    def _condense(self, cells, A):
        nV = self.nV
        Att, Atf, Aff = A[:, :nV, :nV], A[:, :nV, nV:], A[:, nV:, nV:]
        try:
            L = np.linalg.cholesky(Att)
        except np.linalg.LinAlgError as exc:
            raise SingularLocalProblem("cell block A_TT is not positive definite") from exc
        Linv = np.linalg.inv(L)
        Att_inv = np.swapaxes(Linv, 1, 2) @ Linv
        U = -Att_inv @ Atf  # face -> cell local solver
        schur = Aff + np.swapaxes(Atf, 1, 2) @ U
        self.Att_inv[cells], self.U[cells] = Att_inv, U
        self.schur[cells] = 0.5 * (schur + np.swapaxes(schur, 1, 2))

    # -- per-cell view ------------------------------------------------------

    def local_operators(self, cell: int) -> LocalElementOperators:
        d, nV = self.dim, self.nV
        rule = quadrature(d, self.qdegree)
        phi = reference_basis(d, self.degree).values(rule.points)
        g = self._cell_ref.gradients(rule.points)
        Dhat = np.einsum("q,qi,qjb->bij", rule.weights, phi, g)
        # int_T phi_i d_a psi_j = sum_b Jinv[b, a] Dhat_b[i, j]
        D = np.einsum("ba,bij->aij", self.Jinv[cell], Dhat).reshape(d * nV, self.nR)
        return LocalElementOperators(
            cell, self.R[cell], D @ self.R[cell], self.stabilization_matrices([cell])[0],
            self._hybrid_matrices([cell])[0], nV
        )

    # -- global operations --------------------------------------------------

    def load_vector(self, f) -> np.ndarray:
        """Cell moments int_T f phi_j, shape (nc, nV)."""
        if f is None:
            return np.zeros((self.mesh.n_cells, self.nV))
        return project_bulk(f, self.mesh, self.degree, self.qdegree)

    def boundary_values(self, g) -> np.ndarray:
        vals = np.zeros((self.mesh.n_faces, self.nF))
        if g is not None:
            bf = np.flatnonzero(self.mesh.face_boundary)
            vals[bf] = project_faces(g, self.mesh, self.degree, bf, self.qdegree)
        return vals

    def _local_face_values(self, m, bvals) -> np.ndarray:
        """Local face coefficient vectors (nc, nL) of a skeletal vector plus boundary data."""
        loc = bvals[self.mesh.cell_faces].reshape(self.mesh.n_cells, self.nL).copy()
        mask = self.local_dofs >= 0
        if m is not None:
            loc[mask] = m[self.local_dofs[mask]]
        return loc

    def condensed_matrix(self) -> sp.csr_matrix:
        n = self.skeleton.size
        return scatter_blocks(self.local_dofs, self.local_dofs, self.schur, (n, n))

    def assemble(self, f=None, g=None) -> CondensedSystem:
        """Condensed skeletal system for load ``f`` and Dirichlet data ``g``."""
        fT = self.load_vector(f)
        bvals = self.boundary_values(g)
        lift = self._local_face_values(None, bvals)
        lift[self.local_dofs >= 0] = 0.0
        bT = np.einsum("cvl,cv->cl", self.U, fT) - np.einsum("clm,cm->cl", self.schur, lift)
        mask = self.local_dofs >= 0
        b = np.bincount(self.local_dofs[mask], weights=bT[mask], minlength=self.skeleton.size)
        return CondensedSystem(self.condensed_matrix(), b, self.skeleton.dof_weights(), bvals)

    def recover_cells(self, m, f=None, g=None, boundary_values=None) -> np.ndarray:
        """Cell unknowns u_T = U_T m_dT + A_TT^{-1} f_T, shape (nc, nV)."""
        bvals = self.boundary_values(g) if boundary_values is None else boundary_values
        loc = self._local_face_values(m, bvals)
        u = np.einsum("cvl,cl->cv", self.U, loc)
        if f is not None:
            u += np.einsum("cvw,cw->cv", self.Att_inv, self.load_vector(f))
        return u

    def hybrid_local(self, m, u_cells, boundary_values=None) -> np.ndarray:
        bvals = np.zeros((self.mesh.n_faces, self.nF)) if boundary_values is None else boundary_values
        return np.concatenate([u_cells, self._local_face_values(m, bvals)], axis=1)

    def skeleton_trace_defect(self, mu) -> float:
        """||U mu - mu||_l, the <.,.>_l distance between cell traces and face values."""
        loc = self._local_face_values(mu, np.zeros((self.mesh.n_faces, self.nF)))
        u = np.einsum("cvl,cl->cv", self.U, loc)
        tr = np.einsum("cfkv,cv->cfk", self.TrR[..., : self.nV], u)
        diff = tr - loc.reshape(tr.shape)
        wT = self.mesh.cell_volume / self.mesh.cell_boundary_measure
        return float(np.sqrt(np.sum(wT * np.sum(diff**2, axis=(1, 2)))))

    def stabilization_form(self, x, y) -> float:
        """Sum over cells of s_T(x_T, y_T) for local hybrid arrays (nc, nH)."""
        total = 0.0
        for c in cell_chunks(self.mesh.n_cells, self.nH, self.nH):
            total += float(np.einsum("ch,chg,cg->", x[c], self.stabilization_matrices(c), y[c]))
        return total

    # -- hybrid (uncondensed) system, used as an oracle on small meshes -----

    def assemble_hybrid(self, f=None, g=None):
        """Full cell+face system ``[[A_TT, A_TF], [A_FT, A_FF]]``.

        Returns the sparse matrix, the right-hand side, and the number of
        cell unknowns (which come first).
        """
        nc, nV, nL = self.mesh.n_cells, self.nV, self.nL
        ncell = nc * nV
        gdofs = np.concatenate(
            [np.arange(ncell).reshape(nc, nV), np.where(self.local_dofs >= 0, self.local_dofs + ncell, -1)],
            axis=1,
        )
        n = ncell + self.skeleton.size
        A_local = self.A_local
        M = scatter_blocks(gdofs, gdofs, A_local, (n, n))
        bvals = self.boundary_values(g)
        lift = np.zeros((nc, self.nH))
        lift[:, nV:] = self._local_face_values(None, bvals)
        lift[:, nV:][self.local_dofs >= 0] = 0.0
        rhs_loc = -np.einsum("chg,cg->ch", A_local, lift)
        rhs_loc[:, :nV] += self.load_vector(f)
        keep = gdofs >= 0
        rhs = np.bincount(gdofs[keep], weights=rhs_loc[keep], minlength=n)
        return M, rhs, ncell

    # -- errors ---------------------------------------------------------------

    def _cell_quadrature(self, degree=None):
        d = self.dim
        rule = quadrature(d, self.qdegree if degree is None else degree)
        J = self.mesh.cell_jacobians()
        x0 = self.mesh.vertices[self.mesh.cells[:, 0]]
        x = x0[:, None, :] + np.einsum("cab,qb->cqa", J, rule.points)
        w = rule.weights[None, :] * (self.mesh.cell_volume / simplex_volume(d))[:, None]
        return rule, x, w

    def l2_error(self, u_cells, u_exact) -> float:
        rule, x, w = self._cell_quadrature()
        phi = reference_basis(self.dim, self.degree).values(rule.points)
        uh = self.cell_scale[:, None] * (u_cells @ phi.T)
        ue = u_exact(x.reshape(-1, self.dim)).reshape(x.shape[:2])
        return float(np.sqrt(np.sum(w * (uh - ue) ** 2)))

    def energy_error(self, hybrid, grad_exact) -> float:
        """sqrt(sum_T |grad(theta_T) - grad u|^2_T + s_T(x_T, x_T))."""
        rule, x, w = self._cell_quadrature()
        theta = np.einsum("crh,ch->cr", self.R, hybrid)
        g = self._cell_ref.gradients(rule.points)  # (nq, nR, d)
        gref = np.einsum("qrb,cr->cqb", g, theta)
        gphys = self.cell_scale[:, None, None] * np.einsum("cqb,cba->cqa", gref, self.Jinv)
        ge = grad_exact(x.reshape(-1, self.dim)).reshape(gphys.shape)
        err2 = np.sum(w * np.sum((gphys - ge) ** 2, axis=2))
        return float(np.sqrt(err2 + self.stabilization_form(hybrid, hybrid)))


def export_system(system: CondensedSystem, matrix_path, rhs_path) -> None:
    """MatrixMarket (symmetric, coordinate) matrix plus a one-value-per-line RHS."""
    mmwrite(str(matrix_path), sp.coo_matrix(system.A), symmetry="symmetric", precision=17)
    np.savetxt(rhs_path, system.b, fmt="%.17g")
