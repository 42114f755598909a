"""Nested simplicial hierarchies and how coarse faces sit inside fine ones.

Every fine face is either embedded in a coarse face (it carries a piece of a
coarse trace) or lies in the interior of a coarse cell (it is new).  The
injections are built from exactly this classification.
"""
from hhomg.mesh import MeshHierarchy, build_structured_square, write_mesh
from hhomg.problems import hierarchy

for domain in ("square", "lshape", "cube"):
    hier = hierarchy(domain, 3)
    print(f"{domain}:")
    for k, mesh in enumerate(hier.levels):
        print(f"  mesh {k}: {mesh.n_cells:6d} cells  {mesh.n_faces:6d} faces  h = {mesh.h:.4f}"
              f"  shape regularity {mesh.shape_regularity():.2f}")
    print("  refinement ratios h_{k-1}/h_k:", [round(float(r), 3) for r in hier.refinement_ratios()])

# one red refinement of two triangles, in detail
hier = MeshHierarchy.from_coarse(build_structured_square(1), 2)
fc = hier.classifications[0]
print("\nunit square, 2 -> 8 triangles")
print("  fine faces embedded in a coarse face:", int(fc.embedded.sum()))
print("  fine faces interior to a coarse cell:", int((~fc.embedded).sum()))

write_mesh(hier.levels[-1], "/tmp/square_fine.msh")
print("  wrote /tmp/square_fine.msh")
