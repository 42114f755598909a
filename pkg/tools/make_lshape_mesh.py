"""Regenerate src/hhomg/data/lshape_coarse.msh.

Boundary vertices are spaced 0.25 apart; the 33 interior lattice points are
jittered with a fixed seed and the point cloud is Delaunay-triangulated.
Triangles falling in the removed quadrant are discarded.
"""
from pathlib import Path

import numpy as np
from scipy.spatial import Delaunay

from hhomg.mesh import SimplicialMesh, write_mesh

OUT = Path(__file__).resolve().parents[1] / "src" / "hhomg" / "data" / "lshape_coarse.msh"


def in_domain(p, tol=1e-12):
    x, y = p[..., 0], p[..., 1]
    inside_box = (np.abs(x) <= 1 + tol) & (np.abs(y) <= 1 + tol)
    return inside_box & ~((x > tol) & (y < -tol))


def generate(seed=2023, jitter=0.06):
    t = np.linspace(-1.0, 1.0, 9)
    X, Y = np.meshgrid(t, t, indexing="xy")
    pts = np.column_stack([X.ravel(), Y.ravel()])
    pts = pts[in_domain(pts)]
    on_bnd = (
        np.isclose(np.abs(pts[:, 0]), 1) | np.isclose(np.abs(pts[:, 1]), 1)
        | (np.isclose(pts[:, 0], 0) & (pts[:, 1] <= 0))
        | (np.isclose(pts[:, 1], 0) & (pts[:, 0] >= 0))
    )
    rng = np.random.default_rng(seed)
    pts[~on_bnd] += rng.uniform(-jitter, jitter, size=(int((~on_bnd).sum()), 2))
    tri = Delaunay(pts).simplices
    cen = pts[tri].mean(axis=1)
    tri = tri[in_domain(cen)]
    # counter-clockwise orientation
    a, b, c = pts[tri[:, 0]], pts[tri[:, 1]], pts[tri[:, 2]]
    det = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
    tri[det < 0] = tri[det < 0][:, [0, 2, 1]]
    mesh = SimplicialMesh(pts, tri)
    assert mesh.n_cells == 96, mesh.n_cells
    assert mesh.face_boundary.sum() == 32
    assert abs(mesh.cell_volume.sum() - 3.0) < 1e-12
    return mesh


if __name__ == "__main__":
    write_mesh(generate(), OUT)
    print(f"wrote {OUT}")
