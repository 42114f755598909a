"""Discretize the square model problem, condense to the skeleton, solve directly.

The condensed matrix only couples face unknowns.  Cell unknowns come back
element by element afterwards, and the energy error shows the expected
order p+1.
"""
import numpy as np
import scipy.sparse.linalg as spla

from hhomg.discrete import DiscreteHierarchy

for p in (1, 2, 3):
    hier = DiscreteHierarchy.for_domain("square", p, 4)
    prob = hier.problem
    errors = []
    for k, level in enumerate(hier.levels):
        system = hier.system(k)
        m = spla.spsolve(system.A.tocsc(), system.b)
        u = level.recover_cells(m, prob.f, boundary_values=system.boundary_values)
        hybrid = level.hybrid_local(m, u, system.boundary_values)
        errors.append(level.energy_error(hybrid, prob.grad_u))
    orders = np.log2(np.array(errors[:-1]) / np.array(errors[1:]))
    print(f"p={p}: skeleton sizes {hier.dofs}")
    print(f"      energy errors {[f'{e:.2e}' for e in errors]}")
    print(f"      observed orders {np.round(orders, 2).tolist()}  (expected {p + 1})")
