"""The three injections of a coarse skeletal function into the fine skeleton.

I1 copies coarse traces onto embedded faces and leaves new faces at zero.
I2 fills new faces with the average of the neighbouring cell polynomials.
I3 uses the reconstructed polynomial instead.  Each injection reproduces
continuous piecewise linears, and restriction is its adjoint in the weighted
skeletal inner product.
"""
import numpy as np

from hhomg.discrete import DiscreteHierarchy
from hhomg.verify import _fine_vertex_values, p1_skeleton, random_p1

hier = DiscreteHierarchy.for_domain("square", 2, 2)
coarse, fine = hier.levels
rng = np.random.default_rng(0)
w = random_p1(coarse.mesh, rng)
w_fine = _fine_vertex_values(hier.meshes.maps[0], w)

print("injecting the trace of a random continuous P1 function, p=2")
for kind in ("i1", "i2", "i3"):
    pair = hier.transfer(0, kind)
    injected = pair.inject(p1_skeleton(coarse, w))
    exact = p1_skeleton(fine, w_fine)
    rho, mu = rng.standard_normal(pair.I.shape[0]), rng.standard_normal(pair.I.shape[1])
    gap = pair.restrict(rho) @ (pair.W_coarse * mu) - rho @ (pair.W_fine * pair.inject(mu))
    print(f"  {kind}: nnz {pair.I.nnz:5d}  P1 reproduction error "
          f"{np.abs(injected - exact).max():.1e}  adjointness gap {abs(gap):.1e}")
