"""Numeric checks of the discretization and transfer assumptions on a built hierarchy.

Each check returns an :class:`AssumptionReport` holding one entry per level
or per consecutive level pair.  Random inputs come from a seeded generator,
so reports are reproducible run to run.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from .discrete import DiscreteHierarchy
from .fespace import face_quadrature, quadrature, reference_basis, simplex_volume
from .multigrid import estimate_lambda_max
from .transfer import INJECTIONS

__all__ = [
    "CheckEntry",
    "AssumptionReport",
    "random_p1",
    "p1_face_coefficients",
    "p1_cell_coefficients",
    "p1_skeleton",
    "check_hm4_ia2",
    "check_hm7",
    "check_hm6",
    "check_hm1",
    "check_ia1",
    "check_spd",
    "measure_rate",
    "run_suite",
]

ASSUMPTIONS = ("HM1", "HM4", "HM6", "HM7", "IA1", "IA2", "SPD", "RATE")
EXACT_TOL = 1e-10
N_SAMPLES = 20


@dataclass(frozen=True)
class CheckEntry:
    assumption: str
    level: str  # "k" for a level, "k-(k+1)" for a level pair
    quantity: float
    tolerance: str
    passed: bool
    detail: str = ""


@dataclass
class AssumptionReport:
    entries: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries)

    def __add__(self, other: "AssumptionReport") -> "AssumptionReport":
        return AssumptionReport(self.entries + other.entries)

    def __iter__(self):
        return iter(self.entries)

    def __len__(self):
        return len(self.entries)

    def select(self, assumption: str) -> list:
        return [e for e in self.entries if e.assumption == assumption]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["assumption", "level", "quantity", "tolerance", "passed", "detail"])
        for e in self.entries:
            w.writerow([e.assumption, e.level, f"{e.quantity:.6e}", e.tolerance, int(e.passed), e.detail])
        return buf.getvalue()

    def to_text(self) -> str:
        lines = [f"{'check':<6} {'level':<7} {'quantity':>12}  {'tolerance':<22} result"]
        for e in self.entries:
            res = "PASS" if e.passed else "FAIL"
            line = f"{e.assumption:<6} {e.level:<7} {e.quantity:>12.4e}  {e.tolerance:<22} {res}"
            if e.detail:
                line += f"  ({e.detail})"
            lines.append(line)
        lines.append(f"overall: {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines)


# ---------------------------------------------------------------------------
# continuous piecewise-linear test functions

def _barycentric(points: np.ndarray) -> np.ndarray:
    return np.column_stack([1.0 - points.sum(axis=1), points])


def random_p1(mesh, rng, zero_boundary: bool = True) -> np.ndarray:
    """Random vertex values of a continuous piecewise-linear function."""
    vals = rng.standard_normal(mesh.n_vertices)
    if zero_boundary:
        vals[mesh.boundary_vertices()] = 0.0
    return vals


def p1_face_coefficients(level, vertex_values) -> np.ndarray:
    """Face moments of the P1 function with the given vertex values, (n_faces, nF)."""
    mesh = level.mesh
    faces = np.arange(mesh.n_faces)
    _, w, rule = face_quadrature(mesh, faces, level.qdegree)
    vals = vertex_values[mesh.faces] @ _barycentric(rule.points).T  # (nf, nq)
    chi = reference_basis(mesh.dim - 1, level.degree).values(rule.points)
    scale = np.sqrt(simplex_volume(mesh.dim - 1) / mesh.face_measure)
    return scale[:, None] * (vals * w) @ chi


def p1_skeleton(level, vertex_values) -> np.ndarray:
    """The skeletal vector gamma_l w (interior faces only)."""
    return p1_face_coefficients(level, vertex_values)[level.skeleton.interior_faces].ravel()


def p1_cell_coefficients(level, vertex_values) -> np.ndarray:
    mesh = level.mesh
    rule = quadrature(mesh.dim, level.qdegree)
    vals = vertex_values[mesh.cells] @ _barycentric(rule.points).T
    phi = reference_basis(mesh.dim, level.degree).values(rule.points)
    scale = np.sqrt(mesh.cell_volume / simplex_volume(mesh.dim))
    return scale[:, None] * (vals * rule.weights) @ phi


def _p1_gradients(level, vertex_values) -> np.ndarray:
    v = vertex_values[level.mesh.cells]
    return np.einsum("cab,ca->cb", level.Jinv, v[:, 1:] - v[:, :1])


def _reconstruction_gradients(level, hybrid) -> np.ndarray:
    """grad(theta) at the cell quadrature points, (nc, nq, d)."""
    rule = quadrature(level.dim, level.qdegree)
    theta = np.einsum("crh,ch->cr", level.R, hybrid)
    g = level._cell_ref.gradients(rule.points)
    gref = np.einsum("qrb,cr->cqb", g, theta)
    return level.cell_scale[:, None, None] * np.einsum("cqb,cba->cqa", gref, level.Jinv)


def _fine_vertex_values(maps, coarse_values) -> np.ndarray:
    vp = maps.vertex_parents
    return 0.5 * (coarse_values[vp[:, 0]] + coarse_values[vp[:, 1]])


def _hybrid(level, m) -> np.ndarray:
    return level.hybrid_local(m, level.recover_cells(m))


def _rel(num: float, den: float) -> float:
    return num / den if den > 0 else num


# ---------------------------------------------------------------------------
# checks

def check_hm4_ia2(hier: DiscreteHierarchy, injections=INJECTIONS, samples: int = N_SAMPLES, seed: int = 0):
    """Linear-FE consistency of the local solvers (HM4) and of the injections (IA2).

    HM4, per level: the cell recovery of gamma w equals w and the reconstructed
    flux equals -grad w.  IA2, per level pair: I gamma_{l-1} w = gamma_l w for
    every requested injection.  Errors are relative and maximized over samples.
    """
    rng = np.random.default_rng(seed)
    entries = []
    tol = f"<= {EXACT_TOL:g} relative"
    for k, level in enumerate(hier.levels):
        worst = 0.0
        for _ in range(samples):
            w = random_p1(level.mesh, rng)
            if not np.any(w):
                continue
            m = p1_skeleton(level, w)
            u = level.recover_cells(m)
            wc = p1_cell_coefficients(level, w)
            err_u = _rel(np.linalg.norm(u - wc), np.linalg.norm(wc))
            grad = _reconstruction_gradients(level, level.hybrid_local(m, u))
            gw = _p1_gradients(level, w)
            err_q = _rel(np.abs(grad - gw[:, None, :]).max(), np.abs(gw).max())
            worst = max(worst, err_u, err_q)
        entries.append(CheckEntry("HM4", str(k), worst, tol, worst <= EXACT_TOL))
    for k in range(len(hier) - 1):
        coarse, fine = hier.levels[k], hier.levels[k + 1]
        maps = hier.meshes.maps[k]
        errs = {kind: 0.0 for kind in injections}
        W = fine.skeleton.dof_weights()
        for _ in range(samples):
            w = random_p1(coarse.mesh, rng)
            target = p1_skeleton(fine, _fine_vertex_values(maps, w))
            den = np.sqrt(target @ (W * target))
            mc = p1_skeleton(coarse, w)
            for kind in injections:
                diff = hier.transfer(k, kind).inject(mc) - target
                errs[kind] = max(errs[kind], _rel(np.sqrt(diff @ (W * diff)), den))
        worst = max(errs.values()) if errs else 0.0
        detail = " ".join(f"{kind}={e:.1e}" for kind, e in errs.items())
        entries.append(CheckEntry("IA2", f"{k}-{k + 1}", worst, tol, worst <= EXACT_TOL, detail))
    return AssumptionReport(entries)


def check_hm7(hier: DiscreteHierarchy, samples: int = N_SAMPLES, seed: int = 1):
    """|s_l(gamma w, mu)| <= 1e-10 ||gamma w||_a ||mu||_a for random w and mu."""
    rng = np.random.default_rng(seed)
    entries = []
    for k, level in enumerate(hier.levels):
        A = hier.system(k).A
        worst = 0.0
        for _ in range(samples):
            gw = p1_skeleton(level, random_p1(level.mesh, rng))
            mu = rng.standard_normal(level.skeleton.size)
            s = level.stabilization_form(_hybrid(level, gw), _hybrid(level, mu))
            den = np.sqrt(gw @ (A @ gw)) * np.sqrt(mu @ (A @ mu))
            worst = max(worst, _rel(abs(s), den))
        entries.append(CheckEntry("HM7", str(k), worst, f"<= {EXACT_TOL:g} relative", worst <= EXACT_TOL))
    return AssumptionReport(entries)


def _lambda_min(A, W, iterations: int = 60, seed: int = 0) -> float:
    """Smallest eigenvalue of W^{-1} A by inverse iteration."""
    solve = spla.factorized(A.tocsc())
    x = np.random.default_rng(seed).standard_normal(A.shape[0])
    lam = 0.0
    for _ in range(iterations):
        x /= np.sqrt(x @ (W * x))
        y = solve(W * x)
        lam = 1.0 / float(x @ (W * y))
        x = y
    return lam


def check_hm6(hier: DiscreteHierarchy, ratio_bounds=(2.0, 8.0)):
    """Eigenvalue scaling of A_l in the <.,.>_l inner product.

    Per level pair the ratio lambda_max(A_l) / lambda_max(A_{l-1}) must lie in
    ``ratio_bounds`` (about 4 under uniform refinement).  The scaled values
    lambda_max h^2 and the Poincare-type constant 1 / lambda_min are reported
    alongside.
    """
    lo, hi = ratio_bounds
    lmax, info = [], []
    for k, level in enumerate(hier.levels):
        A, W = hier.system(k).A, hier.system(k).W
        lam = estimate_lambda_max(A, W=W)
        lmax.append(lam)
        h = level.mesh.h
        info.append(f"lmax*h^2={lam * h * h:.3g} 1/lmin={1.0 / _lambda_min(A, W):.3g}")
    tol = f"ratio in [{lo:g}, {hi:g}]"
    if len(lmax) == 1:
        return AssumptionReport([CheckEntry("HM6", "0", lmax[0], tol, True, info[0])])
    entries = []
    for k in range(1, len(lmax)):
        r = lmax[k] / lmax[k - 1]
        entries.append(
            CheckEntry("HM6", f"{k - 1}-{k}", r, tol, lo <= r <= hi, f"{info[k - 1]}; {info[k]}")
        )
    return AssumptionReport(entries)


def check_hm1(hier: DiscreteHierarchy, samples: int = N_SAMPLES, seed: int = 2, drift: float = 2.0):
    """max over random mu of ||U mu - mu||_l / (h_l ||mu||_a); may grow at most ``drift``-fold per level."""
    rng = np.random.default_rng(seed)
    entries, prev = [], None
    for k, level in enumerate(hier.levels):
        A = hier.system(k).A
        h = level.mesh.h
        worst = 0.0
        for _ in range(samples):
            mu = rng.standard_normal(level.skeleton.size)
            worst = max(worst, level.skeleton_trace_defect(mu) / (h * np.sqrt(mu @ (A @ mu))))
        ok = math.isfinite(worst) and (prev is None or worst <= drift * prev)
        entries.append(CheckEntry("HM1", str(k), worst, f"<= {drift:g} x previous level", ok))
        prev = worst
    return AssumptionReport(entries)


def _injection_norm(pair, iterations: int = 100, seed: int = 0) -> float:
    """sup ||I rho||_l / ||rho||_{l-1} via power iteration on W_c^{-1} I^T W_f I."""
    Wc, Wf = pair.W_coarse, pair.W_fine
    x = np.random.default_rng(seed).standard_normal(pair.I.shape[1])
    lam = 0.0
    for _ in range(iterations):
        x /= np.sqrt(x @ (Wc * x))
        y = pair.restrict(pair.inject(x))
        lam = float(x @ (Wc * y))
        x = y
    return math.sqrt(lam)


def check_ia1(hier: DiscreteHierarchy, injections=INJECTIONS, growth: float = 1.10):
    """Boundedness of the injections: the operator norm may not grow by more than 10% per level."""
    entries, prev = [], {}
    for k in range(len(hier) - 1):
        norms = {kind: _injection_norm(hier.transfer(k, kind)) for kind in injections}
        ok = all(prev.get(kind) is None or n <= growth * prev[kind] for kind, n in norms.items())
        detail = " ".join(f"{kind}={n:.4f}" for kind, n in norms.items())
        tol = f"<= {growth:g} x previous pair"
        entries.append(CheckEntry("IA1", f"{k}-{k + 1}", max(norms.values()), tol, ok, detail))
        prev = norms
    return AssumptionReport(entries)


def check_spd(hier: DiscreteHierarchy, samples: int = N_SAMPLES, seed: int = 3):
    """Symmetry to 1e-12 relative and positivity of mu^T A mu on random mu."""
    rng = np.random.default_rng(seed)
    entries = []
    for k in range(len(hier)):
        A = hier.system(k).A
        scale = abs(A).max()
        asym = abs(A - A.T).max() / scale if A.nnz else 0.0
        quad = min(
            float(mu @ (A @ mu)) / float(mu @ mu)
            for mu in (rng.standard_normal(A.shape[0]) for _ in range(samples))
        )
        ok = asym <= 1e-12 and quad > 0
        entries.append(
            CheckEntry("SPD", str(k), asym, "asym <= 1e-12, x'Ax > 0", ok, f"min Rayleigh={quad:.3e}")
        )
    return AssumptionReport(entries)


def run_suite(hier: DiscreteHierarchy, injections=INJECTIONS) -> AssumptionReport:
    """Every structural check on one hierarchy (the rate measurement is separate)."""
    return (
        check_spd(hier)
        + check_hm4_ia2(hier, injections)
        + check_hm7(hier)
        + check_hm6(hier)
        + check_hm1(hier)
        + check_ia1(hier, injections)
    )


# ---------------------------------------------------------------------------
# convergence rates

DEFAULT_RATE_WINDOWS = {"square": None, "cube": None, "lshape": (0.55, 0.80)}


def discrete_errors(hier: DiscreteHierarchy, k: int) -> tuple[float, float]:
    """(energy error, cell L2 error) of the exact condensed solution on level ``k``."""
    level, system, prob = hier.levels[k], hier.system(k), hier.problem
    m = spla.spsolve(system.A.tocsc(), system.b)
    u = level.recover_cells(m, prob.f, boundary_values=system.boundary_values)
    hybrid = level.hybrid_local(m, u, system.boundary_values)
    return level.energy_error(hybrid, prob.grad_u), level.l2_error(u, prob.u)


def measure_rate(domain: str, p: int, levels: int, window=None, hier: DiscreteHierarchy | None = None):
    """Observed energy and L2 orders log2(e_{l-1}/e_l) for each level pair.

    Only the finest pair is graded.  For smooth solutions the energy order must
    reach ``p + 0.8``; on the L-shape it must fall inside ``window``
    (default [0.55, 0.80], the regularity-limited rate 2/3).  Coarser pairs are
    reported for information and marked passed.
    """
    if hier is None:
        hier = DiscreteHierarchy.for_domain(domain, p, levels)
    elif len(hier) < levels:
        raise ValueError("hierarchy has fewer levels than requested")
    if levels < 2:
        raise ValueError("a rate needs at least two levels")
    if window is None:
        window = DEFAULT_RATE_WINDOWS.get(domain) or (p + 0.8, math.inf)
    lo, hi = window
    errs = [discrete_errors(hier, k) for k in range(levels)]
    entries = []
    for k in range(1, levels):
        e_order = math.log2(errs[k - 1][0] / errs[k][0])
        l2_order = math.log2(errs[k - 1][1] / errs[k][1])
        finest = k == levels - 1
        ok = (lo <= e_order <= hi) if finest else True
        tol = f"order in [{lo:g}, {hi:g}]" if finest else "informational"
        detail = f"energy={errs[k][0]:.3e} l2={errs[k][1]:.3e} l2_order={l2_order:.2f}"
        entries.append(CheckEntry("RATE", f"{k - 1}-{k}", e_order, tol, ok, detail))
    return AssumptionReport(entries)
