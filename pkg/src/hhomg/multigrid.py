"""Homogeneous V-cycle with pointwise Gauss-Seidel smoothing.

Vectors handed to the cycle are algebraic residuals ``b - A x`` (load-vector
form).  In that form the restriction ``W_{l-1}^{-1} I^T W_l`` applied to the
operator residual ``W_l^{-1} r`` collapses to ``I^T r``, and the coarse
operator inverse ``A_{l-1}^{-1} W_{l-1}`` to a plain solve with the
assembled coarse matrix, so the weights never appear explicitly.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numba
import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

__all__ = [
    "CycleSpec",
    "MultigridHierarchy",
    "SolveReport",
    "gauss_seidel_sweep",
    "v_cycle",
    "solve",
    "estimate_lambda_max",
]

FORWARD, BACKWARD = "forward", "backward"


@numba.njit(cache=True)
def _gs_forward(indptr, indices, data, diag, x, b):
    n = x.shape[0]
    for i in range(n):
        s = b[i]
        for k in range(indptr[i], indptr[i + 1]):
            j = indices[k]
            if j != i:
                s -= data[k] * x[j]
        x[i] = s / diag[i]


@numba.njit(cache=True)
def _gs_backward(indptr, indices, data, diag, x, b):
    n = x.shape[0]
    for i in range(n - 1, -1, -1):
        s = b[i]
        for k in range(indptr[i], indptr[i + 1]):
            j = indices[k]
            if j != i:
                s -= data[k] * x[j]
        x[i] = s / diag[i]


def _diagonal(A: sp.csr_matrix) -> np.ndarray:
    diag = A.diagonal()
    if np.any(diag == 0):
        raise ZeroDivisionError("zero diagonal entry in Gauss-Seidel smoother")
    return diag


def gauss_seidel_sweep(A, x, b, direction: str = FORWARD, diag=None) -> np.ndarray:
    """One in-place pointwise sweep over the DOFs in ascending or descending order."""
    A = A if sp.isspmatrix_csr(A) or isinstance(A, sp.csr_array) else sp.csr_matrix(A)
    if diag is None:
        diag = _diagonal(A)
    args = (A.indptr, A.indices, A.data.astype(float, copy=False), diag, x, np.asarray(b, dtype=float))
    if direction == FORWARD:
        _gs_forward(*args)
    elif direction == BACKWARD:
        _gs_backward(*args)
    else:
        raise ValueError(f"unknown sweep direction {direction!r}")
    return x


def _adjoint(direction):
    return BACKWARD if direction == FORWARD else FORWARD


@dataclass(frozen=True)
class CycleSpec:
    """Smoothing schedule.

    ``sweeps`` is the number of pre-smoothing sweeps on the finest level.
    Pre-smoothing alternates forward/backward starting forward; the
    post-smoothing sequence is the adjoint of the pre-smoothing one in
    reverse order, so each cycle is symmetric.  With ``growth > 1`` the
    sweep count on level ``l-1`` is ``ceil(growth * n_l)`` (variable V-cycle).
    """

    sweeps: int = 1
    growth: float = 1.0

    def __post_init__(self):
        if self.sweeps < 1:
            raise ValueError("at least one smoothing sweep per level is required")
        if not (self.growth == 1.0 or 1.0 < self.growth <= 2.0):
            raise ValueError("growth must be 1 (fixed cycle) or lie in (1, 2]")

    @classmethod
    def v11(cls):
        return cls(1)

    @classmethod
    def v22(cls):
        return cls(2)

    @classmethod
    def variable(cls, n_finest: int = 1, growth: float = 2.0):
        return cls(n_finest, growth)

    @classmethod
    def parse(cls, name: str) -> "CycleSpec":
        key = name.lower()
        if key in ("v11", "v(1,1)"):
            return cls.v11()
        if key in ("v22", "v(2,2)"):
            return cls.v22()
        if key == "variable":
            return cls.variable()
        raise ValueError(f"unknown cycle {name!r}")

    def sweeps_per_level(self, n_levels: int) -> list[int]:
        """n_l for l = 0..L-1 (coarse to fine); entry 0 is unused by the cycle."""
        counts = [self.sweeps]
        for _ in range(n_levels - 1):
            counts.append(self.sweeps if self.growth == 1.0 else math.ceil(self.growth * counts[-1]))
        return counts[::-1]

    @staticmethod
    def pre_sequence(n: int) -> list[str]:
        return [FORWARD if i % 2 == 0 else BACKWARD for i in range(n)]

    @staticmethod
    def post_sequence(n: int) -> list[str]:
        return [_adjoint(s) for s in reversed(CycleSpec.pre_sequence(n))]


@dataclass
class _Level:
    A: sp.csr_matrix
    diag: np.ndarray


class MultigridHierarchy:
    """Per-level skeletal matrices, injections, schedule and coarse Cholesky factor.

    Parameters
    ----------
    matrices : list of sparse SPD matrices, coarse to fine
    transfers : list of ``TransferPair``; ``transfers[k]`` maps level k to k+1
    cycle : CycleSpec
    """

    def __init__(self, matrices, transfers, cycle: CycleSpec | None = None):
        if len(transfers) != len(matrices) - 1:
            raise ValueError("need one transfer per consecutive level pair")
        self.levels = [_Level(sp.csr_matrix(A), _diagonal(sp.csr_matrix(A))) for A in matrices]
        for L in self.levels:
            L.A.sort_indices()
        self.transfers = transfers
        self.cycle = cycle or CycleSpec.v11()
        self.sweeps = self.cycle.sweeps_per_level(len(matrices))
        A0 = self.levels[0].A.toarray()
        self.coarse_factor = sla.cho_factor(A0, lower=True)

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    def with_cycle(self, cycle: CycleSpec) -> "MultigridHierarchy":
        clone = object.__new__(MultigridHierarchy)
        clone.levels, clone.transfers, clone.coarse_factor = self.levels, self.transfers, self.coarse_factor
        clone.cycle = cycle
        clone.sweeps = cycle.sweeps_per_level(len(self.levels))
        return clone

    def coarse_solve(self, b):
        return sla.cho_solve(self.coarse_factor, b)


def v_cycle(hier: MultigridHierarchy, level: int, b: np.ndarray) -> np.ndarray:
    """One application of the multigrid operator B_l to ``b``."""
    if level == 0:
        return hier.coarse_solve(b)
    L = hier.levels[level]
    A = L.A
    n = hier.sweeps[level]
    x = np.zeros_like(b, dtype=float)
    for direction in CycleSpec.pre_sequence(n):
        gauss_seidel_sweep(A, x, b, direction, L.diag)
    pair = hier.transfers[level - 1]
    q = v_cycle(hier, level - 1, pair.restrict_dual(b - A @ x))
    x += pair.inject(q)
    for direction in CycleSpec.post_sequence(n):
        gauss_seidel_sweep(A, x, b, direction, L.diag)
    return x


@dataclass
class SolveReport:
    iterations: int | None  # None when divergent
    backward_errors: list = field(default_factory=list)
    wall_time: float = 0.0
    solution: np.ndarray | None = None

    @property
    def divergent(self) -> bool:
        return self.iterations is None

    def as_cell(self) -> str:
        return "inf" if self.divergent else str(self.iterations)


def solve(hier: MultigridHierarchy, b, tol=1e-6, max_iter=100, divergence=1e6) -> SolveReport:
    """Stationary iteration x <- x + B(b - A x) from x = 0 on the finest level."""
    t0 = time.perf_counter()
    level = hier.n_levels - 1
    A = hier.levels[level].A
    b = np.asarray(b, dtype=float)
    x = np.zeros_like(b)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return SolveReport(0, [], time.perf_counter() - t0, x)
    errors = []
    r = b.copy()
    for it in range(1, max_iter + 1):
        x += v_cycle(hier, level, r)
        r = b - A @ x
        err = np.linalg.norm(r) / bnorm
        errors.append(err)
        if err < tol:
            return SolveReport(it, errors, time.perf_counter() - t0, x)
        if not np.isfinite(err) or err > divergence:
            break
    return SolveReport(None, errors, time.perf_counter() - t0, x)


def estimate_lambda_max(A, iterations=200, W=None, seed=0) -> float:
    """Power-iteration estimate of the largest eigenvalue of ``W^{-1} A``.

    With ``W`` omitted this is the largest eigenvalue of the symmetric ``A``.
    """
    n = A.shape[0]
    w = np.ones(n) if W is None else np.asarray(W, dtype=float)
    x = np.random.default_rng(seed).standard_normal(n)
    x /= np.sqrt(x @ (w * x))
    lam = 0.0
    for _ in range(iterations):
        y = (A @ x) / w
        lam = float(x @ (w * y))  # Rayleigh quotient in the W inner product
        nrm = np.sqrt(y @ (w * y))
        if nrm == 0.0:
            return 0.0
        x = y / nrm
    return lam
