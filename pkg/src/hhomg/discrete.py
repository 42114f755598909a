"""Discrete hierarchy: HHO levels on a mesh hierarchy, with systems and transfers built lazily."""
from __future__ import annotations

from functools import cached_property

from .hho import HHOLevel
from .mesh import MeshHierarchy
from .multigrid import CycleSpec, MultigridHierarchy
from .problems import Problem, get_problem, hierarchy
from .transfer import INJECTIONS, build_injection

__all__ = ["DiscreteHierarchy"]


class DiscreteHierarchy:
    """HHO discretizations of one problem on every level of a nested mesh hierarchy.

    ``levels[k]`` is the :class:`HHOLevel` of mesh ``k`` (coarse to fine).
    Assembled systems and injections are computed on first use and cached,
    so truncated views share all work with their parent.
    """

    def __init__(self, meshes: MeshHierarchy, degree: int, problem: Problem | None = None, _levels=None):
        self.meshes = meshes
        self.degree = degree
        self.problem = problem
        self.levels = _levels if _levels is not None else [HHOLevel(m, degree) for m in meshes.levels]
        self._systems: dict[int, object] = {}
        self._transfers: dict[tuple[int, str], object] = {}

    @classmethod
    def for_domain(cls, domain: str, degree: int, n_levels: int) -> "DiscreteHierarchy":
        return cls(hierarchy(domain, n_levels), degree, get_problem(domain))

    def __len__(self):
        return len(self.levels)

    @property
    def dim(self) -> int:
        return self.meshes.levels[0].dim

    def truncated(self, n_levels: int) -> "DiscreteHierarchy":
        """View on the ``n_levels`` coarsest levels, sharing cached systems and transfers."""
        if not 1 <= n_levels <= len(self):
            raise ValueError(f"cannot truncate a {len(self)}-level hierarchy to {n_levels} levels")
        view = DiscreteHierarchy(self.meshes.truncated(n_levels), self.degree, self.problem, self.levels[:n_levels])
        view._systems = self._systems
        view._transfers = self._transfers
        return view

    def system(self, k: int):
        if k not in self._systems:
            prob = self.problem
            f = prob.f if prob is not None else None
            g = prob.g if prob is not None else None
            self._systems[k] = self.levels[k].assemble(f, g)
        return self._systems[k]

    @property
    def systems(self) -> list:
        return [self.system(k) for k in range(len(self))]

    def transfer(self, k: int, kind: str):
        """Injection from level ``k`` to ``k + 1``."""
        if kind not in INJECTIONS:
            raise ValueError(f"unknown injection {kind!r}; expected one of {INJECTIONS}")
        key = (k, kind)
        if key not in self._transfers:
            self._transfers[key] = build_injection(
                self.levels[k], self.levels[k + 1], self.meshes.classifications[k], kind
            )
        return self._transfers[key]

    def multigrid(self, kind: str = "i3", cycle: CycleSpec | str = "v11") -> MultigridHierarchy:
        if isinstance(cycle, str):
            cycle = CycleSpec.parse(cycle)
        return MultigridHierarchy(
            [s.A for s in self.systems], [self.transfer(k, kind) for k in range(len(self) - 1)], cycle
        )

    @cached_property
    def dofs(self) -> list[int]:
        return [lv.skeleton.size for lv in self.levels]
