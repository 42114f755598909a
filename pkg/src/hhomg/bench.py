"""Experiment driver and command-line harness.

Level numbers follow the tables: level ``L`` is the finest mesh of an
``L``-mesh hierarchy whose level 1 is the coarse mesh of the domain, and the
multigrid solve on level ``L`` uses all ``L`` meshes.
"""
from __future__ import annotations

import argparse
import csv
import io
import sys
import time
from dataclasses import dataclass, replace
from pathlib import Path

from .discrete import DiscreteHierarchy
from .fespace import poly_dim
from .hho import export_system as _export_condensed
from .multigrid import CycleSpec, solve
from .problems import DOMAINS, hierarchy
from .transfer import INJECTIONS

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "ResultRow",
    "run_experiment",
    "rows_to_csv",
    "rows_to_markdown",
    "reproduce_tables",
    "export_system",
    "main",
]

CYCLES = ("v11", "v22", "variable")
FORMATS = ("csv", "md")
MAX_CUBE_LEVELS = 5
FIRST_REPORTED_LEVEL = 3


class ConfigError(ValueError):
    """Invalid experiment configuration."""


@dataclass(frozen=True)
class ExperimentConfig:
    domain: str = "square"
    p: int = 1
    levels: int = 5
    injection: str = "i3"
    cycle: str = "v11"
    tol: float = 1e-6
    max_iter: int = 100
    fmt: str = "csv"
    export: str | None = None

    def __post_init__(self):
        if self.domain not in DOMAINS:
            raise ConfigError(f"unknown domain {self.domain!r}; choose from {', '.join(DOMAINS)}")
        if not isinstance(self.p, int) or self.p < 1:
            raise ConfigError("polynomial degree p must be an integer >= 1")
        if self.levels < 2:
            raise ConfigError("a multigrid hierarchy needs at least 2 levels")
        if self.domain == "cube" and self.levels > MAX_CUBE_LEVELS:
            raise ConfigError(
                f"refusing cube hierarchies deeper than {MAX_CUBE_LEVELS} levels: "
                "level 6 needs tens of millions of unknowns and will exhaust memory"
            )
        if self.injection not in INJECTIONS:
            raise ConfigError(f"unknown injection {self.injection!r}; choose from {', '.join(INJECTIONS)}")
        if self.cycle not in CYCLES:
            raise ConfigError(f"unknown cycle {self.cycle!r}; choose from {', '.join(CYCLES)}")
        if not self.tol > 0:
            raise ConfigError("tol must be positive")
        if self.max_iter < 1:
            raise ConfigError("max_iter must be >= 1")
        if self.fmt not in FORMATS:
            raise ConfigError(f"unknown format {self.fmt!r}; choose from {', '.join(FORMATS)}")


@dataclass(frozen=True)
class ResultRow:
    domain: str
    p: int
    injection: str
    cycle: str
    level: int
    dofs: int
    iterations: int | None  # None means divergent
    wall_time: float = 0.0

    @property
    def iterations_cell(self) -> str:
        return "inf" if self.iterations is None else str(self.iterations)


def _hierarchy_for(config: ExperimentConfig, hier: DiscreteHierarchy | None) -> DiscreteHierarchy:
    if hier is None:
        return DiscreteHierarchy.for_domain(config.domain, config.p, config.levels)
    if hier.degree != config.p or len(hier) < config.levels:
        raise ConfigError("supplied hierarchy does not match the configuration")
    return hier


def run_experiment(config: ExperimentConfig, hier: DiscreteHierarchy | None = None) -> list[ResultRow]:
    """Solve on levels 3..L (or just L when L < 3) and return one row per level.

    ``hier`` may be a prebuilt hierarchy for the same domain and degree with at
    least ``config.levels`` levels; its cached systems and transfers are reused.
    """
    hier = _hierarchy_for(config, hier)
    cycle = CycleSpec.parse(config.cycle)
    rows = []
    for n in range(min(FIRST_REPORTED_LEVEL, config.levels), config.levels + 1):
        sub = hier.truncated(n)
        mg = sub.multigrid(config.injection, cycle)
        report = solve(mg, sub.system(n - 1).b, tol=config.tol, max_iter=config.max_iter)
        rows.append(
            ResultRow(
                config.domain, config.p, config.injection, config.cycle, n,
                sub.dofs[-1], report.iterations, report.wall_time,
            )
        )
    if config.export:
        export_system(config, config.levels, config.export, hier)
    return rows


CSV_COLUMNS = ("domain", "p", "injection", "cycle", "level", "dofs", "iterations")


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow([r.domain, r.p, r.injection, r.cycle, r.level, r.dofs, r.iterations_cell])
    return buf.getvalue()


def _md_table(header, body) -> str:
    lines = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
    lines += ["| " + " | ".join(str(c) for c in row) + " |" for row in body]
    return "\n".join(lines)


def rows_to_markdown(rows) -> str:
    header = ["domain", "p", "injection", "cycle", "level", "dofs", "iterations"]
    body = [[r.domain, r.p, r.injection, r.cycle, r.level, r.dofs, r.iterations_cell] for r in rows]
    return _md_table(header, body)


def export_system(config: ExperimentConfig, level: int, path, hier: DiscreteHierarchy | None = None):
    """Write the condensed system of ``level`` as ``<path>.mtx`` and ``<path>.rhs``.

    The matrix is MatrixMarket coordinate format (symmetric, 1-based), the
    right-hand side one value per line.  Returns the two paths.
    """
    if not 1 <= level <= config.levels:
        raise ConfigError(f"level must lie in 1..{config.levels}")
    hier = _hierarchy_for(replace(config, export=None), hier)
    base = Path(path)
    if base.suffix == ".mtx":
        base = base.with_suffix("")
    mtx, rhs = base.with_name(base.name + ".mtx"), base.with_name(base.name + ".rhs")
    _export_condensed(hier.system(level - 1), mtx, rhs)
    return mtx, rhs


# ---------------------------------------------------------------------------
# table reproduction

# table id -> (domain, kind, injection, cycles); kind "dofs" tables list problem sizes
TABLES = {
    1: ("square", "dofs", None, ()),
    2: ("square", "iters", "i1", ("v22",)),
    3: ("square", "iters", "i2", ("v11", "v22")),
    4: ("square", "iters", "i3", ("v11", "v22")),
    5: ("lshape", "dofs", None, ()),
    6: ("lshape", "iters", "i2", ("v11", "v22")),
    7: ("lshape", "iters", "i3", ("v11", "v22")),
    8: ("cube", "dofs", None, ()),
    9: ("cube", "iters", "i3", ("v22",)),
}

_TITLES = {
    1: "Square: number of face unknowns",
    2: "Square: V(2,2) iterations with I1",
    3: "Square: iterations with I2",
    4: "Square: iterations with I3",
    5: "L-shape: number of face unknowns",
    6: "L-shape: iterations with I2",
    7: "L-shape: iterations with I3",
    8: "Cube: number of face unknowns",
    9: "Cube: V(2,2) iterations with I3",
}


def skeleton_size(mesh, p: int) -> int:
    """Number of face unknowns without building any operator."""
    return int((~mesh.face_boundary).sum()) * poly_dim(p, mesh.dim - 1)


_CYCLE_LABEL = {"v11": "V(1,1)", "v22": "V(2,2)", "variable": "variable"}


def reproduce_tables(which, max_level: int = 5, degrees=(1, 2, 3), progress=None) -> str:
    """Markdown document with the requested tables (ids 1..9), levels 3..max_level.

    Hierarchies are shared between tables of the same domain and degree.
    Cube tables are capped at the memory guard.
    """
    which = sorted(set(which))
    bad = [t for t in which if t not in TABLES]
    if bad:
        raise ConfigError(f"unknown table id(s) {bad}; valid ids are 1..9")
    cache: dict[tuple[str, int], DiscreteHierarchy] = {}
    parts = []
    for t in which:
        domain, kind, injection, cycles = TABLES[t]
        top = min(max_level, MAX_CUBE_LEVELS) if domain == "cube" else max_level
        levels = list(range(min(FIRST_REPORTED_LEVEL, top), top + 1))

        def hier_for(p):
            key = (domain, p)
            if key not in cache or len(cache[key]) < top:
                cache[key] = DiscreteHierarchy.for_domain(domain, p, top)
            return cache[key]

        if kind == "dofs":
            meshes = hierarchy(domain, top).levels
            header = ["Levels"] + [str(n) for n in levels]
            body = [[f"p={p}"] + [skeleton_size(meshes[n - 1], p) for n in levels] for p in degrees]
        else:
            header = ["Levels"] + [f"{_CYCLE_LABEL[c]} {n}" for c in cycles for n in levels]
            body = []
            for p in degrees:
                row = [f"p={p}"]
                for c in cycles:
                    cfg = ExperimentConfig(domain, p, top, injection, c)
                    if progress:
                        progress(f"table {t}: p={p} {c}")
                    row += [r.iterations_cell for r in run_experiment(cfg, hier_for(p))]
                body.append(row)
        parts.append(f"### Table {t}. {_TITLES[t]}\n\n{_md_table(header, body)}\n")
    return "\n".join(parts)


# ---------------------------------------------------------------------------
# command line

def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="hhomg-bench",
        description="Multigrid iteration counts for condensed HHO systems on nested meshes.",
    )
    ap.add_argument("--domain", default="square", choices=DOMAINS)
    ap.add_argument("--p", type=int, nargs="+", default=[1, 2, 3], help="polynomial degree(s)")
    ap.add_argument("--levels", type=int, default=5, help="number of meshes in the hierarchy")
    ap.add_argument("--injection", default="i3", choices=INJECTIONS)
    ap.add_argument("--cycle", nargs="+", default=["v11"], choices=CYCLES)
    ap.add_argument("--tol", type=float, default=1e-6)
    ap.add_argument("--max-iter", type=int, default=100)
    ap.add_argument("--format", default="csv", choices=FORMATS)
    ap.add_argument("--export", metavar="PREFIX", help="write the finest system to PREFIX.mtx / PREFIX.rhs")
    ap.add_argument("--table", type=int, nargs="+", metavar="N", help="reproduce table(s) 1..9 instead")
    ap.add_argument("--rates", action="store_true", help="report discretization error orders instead")
    ap.add_argument("--verify", action="store_true", help="run the assumption checks instead")
    ap.add_argument("--timing", action="store_true", help="print wall-clock times to stderr")
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    out = sys.stdout
    try:
        if args.table:
            out.write(reproduce_tables(args.table, args.levels, tuple(args.p)))
            return 0
        configs = [
            ExperimentConfig(
                args.domain, p, args.levels, args.injection, c, args.tol, args.max_iter, args.format,
                f"{args.export}_p{p}_{c}" if args.export and (len(args.p) > 1 or len(args.cycle) > 1)
                else args.export,
            )
            for p in args.p
            for c in args.cycle
        ]
        if args.rates or args.verify:
            from .verify import measure_rate, run_suite

            for p in args.p:
                if args.rates:
                    report = measure_rate(args.domain, p, args.levels)
                else:
                    report = run_suite(DiscreteHierarchy.for_domain(args.domain, p, args.levels))
                out.write(f"# {args.domain} p={p}\n")
                out.write(report.to_csv() if args.format == "csv" else report.to_text() + "\n")
            return 0
    except ConfigError as exc:
        print(f"hhomg-bench: error: {exc}", file=sys.stderr)
        return 2
    rows, hiers = [], {}
    for cfg in configs:
        t0 = time.perf_counter()
        if cfg.p not in hiers:
            hiers[cfg.p] = DiscreteHierarchy.for_domain(cfg.domain, cfg.p, cfg.levels)
        new = run_experiment(cfg, hiers[cfg.p])
        rows += new
        if args.timing:
            solve_t = ", ".join(f"L{r.level}: {r.wall_time:.2f}s" for r in new)
            print(f"p={cfg.p} {cfg.cycle}: total {time.perf_counter() - t0:.1f}s ({solve_t})", file=sys.stderr)
    out.write(rows_to_csv(rows) if args.format == "csv" else rows_to_markdown(rows) + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
