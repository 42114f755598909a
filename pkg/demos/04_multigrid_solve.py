"""Solve with the multigrid V-cycle and compare injections and cycles.

The stopping rule is a relative residual of 1e-6 from a zero initial guess.
"inf" marks a divergent iteration.
"""
from hhomg.discrete import DiscreteHierarchy
from hhomg.multigrid import CycleSpec, solve

hier = DiscreteHierarchy.for_domain("square", 1, 5)
b = hier.system(len(hier) - 1).b
print(f"square, p=1, {len(hier)} meshes, {hier.dofs[-1]} skeletal unknowns")
for kind in ("i1", "i2", "i3"):
    cells = []
    for name, cycle in (("V(1,1)", CycleSpec.v11()), ("V(2,2)", CycleSpec.v22()),
                        ("variable", CycleSpec.variable(1, 2.0))):
        rep = solve(hier.multigrid(kind, cycle), b)
        cells.append(f"{name} {rep.as_cell():>3}")
    print(f"  {kind}: " + "   ".join(cells))

rep = solve(hier.multigrid("i3", "v22"), b)
print("\nI3 V(2,2) residual history:", " ".join(f"{e:.1e}" for e in rep.backward_errors))
