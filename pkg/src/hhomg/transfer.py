"""Skeletal injection operators between nested levels and their adjoints.

Every fine-face row is computed by fine-face quadrature of a coarse
polynomial followed by L2 projection onto the orthonormal fine-face basis,
which is exact whenever the coarse polynomial restricted to the fine face
already lies in the fine face space.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .fespace import face_quadrature, quadrature, simplex_volume
from .hho import HHOLevel, cell_chunks, scatter_blocks, sum_sparse
from .mesh import FaceClassification, MeshError

__all__ = ["TransferPair", "build_injection", "restrict", "INJECTIONS"]

INJECTIONS = ("i1", "i2", "i3")


@dataclass
class TransferPair:
    """Injection ``I`` (fine x coarse) and the weights of both skeletal inner products."""

    kind: str
    I: sp.csr_matrix
    W_coarse: np.ndarray
    W_fine: np.ndarray

    @property
    def IT(self):
        return self.I.T

    def inject(self, mu: np.ndarray) -> np.ndarray:
        return self.I @ mu

    def restrict(self, rho: np.ndarray) -> np.ndarray:
        """Adjoint of ``I`` for <.,.>: W_c^{-1} I^T W_f rho."""
        if rho.shape[0] != self.I.shape[0]:
            raise ValueError("dimension mismatch")
        return (self.IT @ (self.W_fine * rho)) / self.W_coarse

    def restrict_dual(self, r: np.ndarray) -> np.ndarray:
        """Transpose apply, for residuals stored as load vectors (``b - A x``)."""
        return self.IT @ r


def restrict(pair: TransferPair, rho: np.ndarray) -> np.ndarray:
    return pair.restrict(rho)


def _fine_face_weights(fine: HHOLevel, faces):
    """Quadrature points and weights with the fine face-basis values folded in."""
    mesh, d = fine.mesh, fine.dim
    x, w, rule = face_quadrature(mesh, faces, fine.qdegree)
    chi = fine._face_ref.values(rule.points)  # (nq, nF)
    scale = np.sqrt(simplex_volume(d - 1) / mesh.face_measure[faces])
    return x, (w * scale[:, None])[..., None] * chi  # (n, nq, nF)


def _coarse_face_values(coarse: HHOLevel, faces, x):
    mesh, d = coarse.mesh, coarse.dim
    fv = mesh.vertices[mesh.faces[faces]]
    J = np.swapaxes(fv[:, 1:] - fv[:, :1], 1, 2)  # (n, d, d-1)
    JtJ = np.swapaxes(J, 1, 2) @ J
    rhs = np.einsum("nab,nqa->nqb", J, x - fv[:, None, 0, :])
    s = np.linalg.solve(JtJ[:, None], rhs[..., None])[..., 0]
    scale = np.sqrt(simplex_volume(d - 1) / mesh.face_measure[faces])
    return scale[:, None, None] * coarse._face_ref.values(s)


def build_injection(
    coarse: HHOLevel, fine: HHOLevel, classification: FaceClassification, kind: str = "i3"
) -> TransferPair:
    """Assemble the sparse injection ``I^1``, ``I^2`` or ``I^3`` from ``coarse`` to ``fine``."""
    if kind not in INJECTIONS:
        raise ValueError(f"unknown injection {kind!r}; expected one of {INJECTIONS}")
    if coarse.degree != fine.degree:
        raise ValueError("levels must share the polynomial degree")
    emb = classification.embedded_in
    inner = classification.interior_to
    if len(emb) != fine.mesh.n_faces:
        raise MeshError("classification does not match the fine mesh")
    ffaces = fine.skeleton.interior_faces
    if np.any((emb[ffaces] < 0) & (inner[ffaces] < 0)):
        raise MeshError("unclassified fine face")
    nF, nV = fine.nF, coarse.nV
    shape = (fine.skeleton.size, coarse.skeleton.size)
    parts = []

    def emit(faces, col_dofs, blocks):
        # blocks: (n, nF, ncols), col_dofs: (n, ncols) with -1 for dropped columns
        rows = fine.skeleton.offsets[faces][:, None] + np.arange(nF)
        parts.append(scatter_blocks(rows, col_dofs, blocks, shape))

    # (fine face, coarse cell, weight) triples
    is_emb = emb[ffaces] >= 0
    ef = ffaces[is_emb]
    cf_cells = coarse.mesh.face_cells[emb[ef]]  # (n, 2); coarse face is interior
    if np.any(cf_cells[:, 1] < 0):
        raise MeshError("interior fine face embedded in a coarse boundary face")
    inf = ffaces[~is_emb]
    if kind == "i1":
        faces = inf
        cells = inner[inf]
        weights = np.ones(len(inf))
    else:
        faces = np.concatenate([inf, ef, ef])
        cells = np.concatenate([inner[inf], cf_cells[:, 0], cf_cells[:, 1]])
        weights = np.concatenate([np.ones(len(inf)), np.full(2 * len(ef), 0.5)])

    nq = len(quadrature(fine.dim - 1, fine.qdegree).weights)
    for c in cell_chunks(len(faces), nq, coarse.nR + coarse.nH):
        fc, cc = faces[c], cells[c]
        x, wchi = _fine_face_weights(fine, fc)
        psi = coarse.cell_values(cc, x)  # (n, nq, nR)
        M = np.einsum("nqk,nqj->nkj", wchi, psi) * weights[c, None, None]
        U = coarse.U[cc]  # (n, nV, nLc)
        if kind == "i3":
            R = coarse.R[cc]
            lifted = R[:, :, :nV] @ U + R[:, :, nV:]  # theta(U mu, mu)
            blocks = M @ lifted
        else:
            blocks = M[:, :, :nV] @ U
        emit(fc, coarse.local_dofs[cc], blocks)

    if kind == "i1" and len(ef):
        x, wchi = _fine_face_weights(fine, ef)
        chi_c = _coarse_face_values(coarse, emb[ef], x)  # (n, nq, nF)
        blocks = np.einsum("nqk,nqj->nkj", wchi, chi_c)
        cols = coarse.skeleton.offsets[emb[ef]][:, None] + np.arange(nF)
        emit(ef, cols, blocks)

    I = sum_sparse(parts, shape)
    I.eliminate_zeros()
    return TransferPair(kind, I, coarse.skeleton.dof_weights(), fine.skeleton.dof_weights())
