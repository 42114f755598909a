"""Numerically check the structural properties the convergence theory relies on.

Linear-FE consistency of the local solvers and injections, the
stabilization vanishing on linear traces, eigenvalue scaling across levels,
injection norms, and the trace defect of P1 functions.
"""
from hhomg.discrete import DiscreteHierarchy
from hhomg.verify import run_suite

hier = DiscreteHierarchy.for_domain("square", 2, 3)
report = run_suite(hier)
print(report.to_text())
