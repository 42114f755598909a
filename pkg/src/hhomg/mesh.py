"""Conforming simplicial meshes in 2D/3D and nested uniform refinement.

Faces are identified by their sorted vertex-index tuples and are ordered
lexicographically; that order is the global face order used for every DOF
numbering downstream.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from itertools import permutations
from pathlib import Path

import numpy as np

__all__ = [
    "SimplicialMesh",
    "RefinementMaps",
    "FaceClassification",
    "MeshHierarchy",
    "MeshError",
    "build_structured_square",
    "build_lshape_coarse",
    "build_cube_bey",
    "refine_uniform",
    "classify_faces",
    "read_mesh",
    "write_mesh",
]


class MeshError(ValueError):
    pass


def _pairwise_max_distance(pts: np.ndarray) -> np.ndarray:
    """Max distance between the points along axis 1; pts is (n, k, d)."""
    k = pts.shape[1]
    out = np.zeros(pts.shape[0])
    for i in range(k):
        for j in range(i + 1, k):
            out = np.maximum(out, np.linalg.norm(pts[:, i] - pts[:, j], axis=1))
    return out


class SimplicialMesh:
    """A conforming simplicial mesh.

    Parameters
    ----------
    vertices : (nv, d) array
    cells : (nc, d+1) integer array

    Local face ``i`` of a cell is the face opposite to its local vertex ``i``.
    """

    def __init__(self, vertices, cells):
        self.vertices = np.ascontiguousarray(vertices, dtype=float)
        self.cells = np.ascontiguousarray(cells, dtype=np.int64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] not in (2, 3):
            raise MeshError("vertices must be an (nv, 2) or (nv, 3) array")
        if self.cells.shape[1] != self.dim + 1:
            raise MeshError("cells must have d+1 vertices")
        self._build_faces()

    @property
    def dim(self) -> int:
        return self.vertices.shape[1]

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def _build_faces(self):
        d = self.dim
        nc = self.n_cells
        local = np.array([[j for j in range(d + 1) if j != i] for i in range(d + 1)])
        all_faces = np.sort(self.cells[:, local], axis=2).reshape(-1, d)
        faces, inverse, counts = np.unique(
            all_faces, axis=0, return_inverse=True, return_counts=True
        )
        if counts.max() > 2:
            raise MeshError("non-conforming mesh: a face is shared by more than two cells")
        self.faces = faces
        self.cell_faces = inverse.reshape(nc, d + 1)
        face_cells = np.full((len(faces), 2), -1, dtype=np.int64)
        owner = np.repeat(np.arange(nc), d + 1)
        order = np.argsort(inverse, kind="stable")
        inv_sorted = inverse[order]
        first = np.ones(len(order), dtype=bool)
        first[1:] = inv_sorted[1:] != inv_sorted[:-1]
        face_cells[inv_sorted[first], 0] = owner[order[first]]
        face_cells[inv_sorted[~first], 1] = owner[order[~first]]
        self.face_cells = face_cells
        self.face_boundary = face_cells[:, 1] < 0

    # -- geometry ---------------------------------------------------------

    def cell_jacobians(self) -> np.ndarray:
        x = self.vertices[self.cells]
        return np.swapaxes(x[:, 1:] - x[:, :1], 1, 2)

    @cached_property
    def cell_volume(self) -> np.ndarray:
        return np.abs(np.linalg.det(self.cell_jacobians())) / math.factorial(self.dim)

    @cached_property
    def cell_diameter(self) -> np.ndarray:
        return _pairwise_max_distance(self.vertices[self.cells])

    @cached_property
    def face_measure(self) -> np.ndarray:
        x = self.vertices[self.faces]
        if self.dim == 2:
            return np.linalg.norm(x[:, 1] - x[:, 0], axis=1)
        return 0.5 * np.linalg.norm(np.cross(x[:, 1] - x[:, 0], x[:, 2] - x[:, 0]), axis=1)

    @cached_property
    def face_diameter(self) -> np.ndarray:
        return _pairwise_max_distance(self.vertices[self.faces])

    @cached_property
    def cell_boundary_measure(self) -> np.ndarray:
        return self.face_measure[self.cell_faces].sum(axis=1)

    @cached_property
    def cell_face_normals(self) -> np.ndarray:
        """Outward unit normals, shape (nc, d+1, d)."""
        x = self.vertices[self.faces[self.cell_faces]]  # (nc, d+1, d, d)
        if self.dim == 2:
            t = x[..., 1, :] - x[..., 0, :]
            n = np.stack([t[..., 1], -t[..., 0]], axis=-1)
        else:
            n = np.cross(x[..., 1, :] - x[..., 0, :], x[..., 2, :] - x[..., 0, :])
        n /= np.linalg.norm(n, axis=-1, keepdims=True)
        opposite = self.vertices[self.cells]  # local vertex i is opposite to face i
        sign = np.sign(np.einsum("cia,cia->ci", opposite - x[..., 0, :], n))
        return -sign[..., None] * n

    @property
    def h(self) -> float:
        return float(self.cell_diameter.max())

    def shape_regularity(self) -> float:
        """max_T h_T^d / |T|."""
        return float((self.cell_diameter ** self.dim / self.cell_volume).max())

    def barycenters(self) -> np.ndarray:
        return self.vertices[self.cells].mean(axis=1)

    @cached_property
    def edges(self) -> np.ndarray:
        d = self.dim
        pairs = [(i, j) for i in range(d + 1) for j in range(i + 1, d + 1)]
        e = np.sort(self.cells[:, pairs], axis=2).reshape(-1, 2)
        return np.unique(e, axis=0)

    def boundary_vertices(self) -> np.ndarray:
        return np.unique(self.faces[self.face_boundary])

    def __repr__(self):
        return (
            f"SimplicialMesh(dim={self.dim}, vertices={self.n_vertices}, "
            f"cells={self.n_cells}, faces={self.n_faces})"
        )


# ---------------------------------------------------------------------------
# builders

def build_structured_square(n: int) -> SimplicialMesh:
    """Unit square, n x n squares each cut along the lower-left/upper-right diagonal."""
    if n < 1:
        raise MeshError("n must be positive")
    t = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(t, t, indexing="xy")
    vertices = np.column_stack([X.ravel(), Y.ravel()])
    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="xy")
    v00 = (j * (n + 1) + i).ravel()
    v10, v01 = v00 + 1, v00 + n + 1
    v11 = v01 + 1
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    cells = np.stack([lower, upper], axis=1).reshape(-1, 3)
    return SimplicialMesh(vertices, cells)


def build_cube_bey(n: int) -> SimplicialMesh:
    """Unit cube, n^3 sub-cubes each split into the 6 Kuhn tetrahedra.

    Every tetrahedron is stored as a monotone lattice path
    ``(v, v + e_a, v + e_a + e_b, v + 1)``, which is the vertex order the
    Bey refinement rule needs to reproduce the Kuhn split of the 2n grid.
    """
    if n < 1:
        raise MeshError("n must be positive")
    t = np.linspace(0.0, 1.0, n + 1)
    Z, Y, X = np.meshgrid(t, t, t, indexing="ij")
    vertices = np.column_stack([X.ravel(), Y.ravel(), Z.ravel()])
    stride = np.array([1, n + 1, (n + 1) ** 2])
    k, j, i = np.meshgrid(np.arange(n), np.arange(n), np.arange(n), indexing="ij")
    base = (i * stride[0] + j * stride[1] + k * stride[2]).ravel()
    tets = []
    for perm in permutations(range(3)):
        a, b, _ = perm
        tets.append(
            np.column_stack(
                [base, base + stride[a], base + stride[a] + stride[b], base + stride.sum()]
            )
        )
    cells = np.stack(tets, axis=1).reshape(-1, 4)
    return SimplicialMesh(vertices, cells)


def read_mesh(source) -> SimplicialMesh:
    """Read the ASCII format: ``dim nv nc``, nv coordinate lines, nc cell lines."""
    text = Path(source).read_text() if not hasattr(source, "read") else source.read()
    try:
        tokens = text.split()
        dim, nv, nc = (int(tok) for tok in tokens[:3])
        pos = 3
        coords = np.array(tokens[pos : pos + nv * dim], dtype=float).reshape(nv, dim)
        pos += nv * dim
        cells = np.array(tokens[pos : pos + nc * (dim + 1)], dtype=np.int64)
        cells = cells.reshape(nc, dim + 1)
        if len(tokens) != pos + nc * (dim + 1):
            raise ValueError("trailing or missing data")
    except (ValueError, IndexError) as exc:
        raise MeshError(f"corrupt mesh file: {exc}") from exc
    if cells.min() < 0 or cells.max() >= nv:
        raise MeshError("corrupt mesh file: vertex index out of range")
    return SimplicialMesh(coords, cells)


def write_mesh(mesh: SimplicialMesh, path) -> None:
    lines = [f"{mesh.dim} {mesh.n_vertices} {mesh.n_cells}"]
    lines += [" ".join(repr(float(c)) for c in v) for v in mesh.vertices]
    lines += [" ".join(str(int(i)) for i in c) for c in mesh.cells]
    Path(path).write_text("\n".join(lines) + "\n")


def build_lshape_coarse() -> SimplicialMesh:
    """Bundled Delaunay triangulation of (-1,1)^2 minus [0,1]x[-1,0] (96 triangles)."""
    try:
        ref = resources.files("hhomg") / "data" / "lshape_coarse.msh"
        with ref.open("r") as fh:
            return read_mesh(fh)
    except FileNotFoundError as exc:
        raise MeshError("bundled L-shape mesh is missing") from exc


# ---------------------------------------------------------------------------
# refinement

@dataclass(frozen=True)
class RefinementMaps:
    """Parent data from one uniform refinement step.

    ``vertex_parents[v]`` is ``(a, a)`` if fine vertex ``v`` is coarse vertex
    ``a`` and ``(a, b)`` if it is the midpoint of coarse edge ``(a, b)``.
    """

    cell_parent: np.ndarray
    vertex_parents: np.ndarray


# Bey's rule on local vertices 0..3 and edge midpoints (i, j) -> 4 + edge index
_EDGES_3D = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]
_M3 = {e: 4 + k for k, e in enumerate(_EDGES_3D)}
_BEY_CHILDREN = np.array(
    [
        [0, _M3[0, 1], _M3[0, 2], _M3[0, 3]],
        [_M3[0, 1], 1, _M3[1, 2], _M3[1, 3]],
        [_M3[0, 2], _M3[1, 2], 2, _M3[2, 3]],
        [_M3[0, 3], _M3[1, 3], _M3[2, 3], 3],
        [_M3[0, 1], _M3[0, 2], _M3[0, 3], _M3[1, 3]],
        [_M3[0, 1], _M3[0, 2], _M3[1, 2], _M3[1, 3]],
        [_M3[0, 2], _M3[0, 3], _M3[1, 3], _M3[2, 3]],
        [_M3[0, 2], _M3[1, 2], _M3[1, 3], _M3[2, 3]],
    ]
)
_EDGES_2D = [(0, 1), (1, 2), (0, 2)]
_M2 = {e: 3 + k for k, e in enumerate(_EDGES_2D)}
_RED_CHILDREN = np.array(
    [
        [0, _M2[0, 1], _M2[0, 2]],
        [_M2[0, 1], 1, _M2[1, 2]],
        [_M2[0, 2], _M2[1, 2], 2],
        [_M2[0, 1], _M2[1, 2], _M2[0, 2]],
    ]
)


def refine_uniform(mesh: SimplicialMesh) -> tuple[SimplicialMesh, RefinementMaps]:
    """Red refinement in 2D (4 children), Bey refinement in 3D (8 children)."""
    d = mesh.dim
    local_edges, children = (_EDGES_2D, _RED_CHILDREN) if d == 2 else (_EDGES_3D, _BEY_CHILDREN)
    edges = mesh.edges
    nv = mesh.n_vertices
    # edge keys -> midpoint ids
    key = edges[:, 0] * nv + edges[:, 1]
    cell_edges = np.sort(mesh.cells[:, local_edges], axis=2)
    cell_keys = cell_edges[..., 0] * nv + cell_edges[..., 1]
    mid = nv + np.searchsorted(key, cell_keys)
    ext = np.concatenate([mesh.cells, mid], axis=1)  # (nc, d+1+nedges)
    fine_cells = ext[:, children].reshape(-1, d + 1)
    new_vertices = 0.5 * (mesh.vertices[edges[:, 0]] + mesh.vertices[edges[:, 1]])
    vertices = np.concatenate([mesh.vertices, new_vertices])
    vparents = np.concatenate([np.repeat(np.arange(nv)[:, None], 2, axis=1), edges])
    parent = np.repeat(np.arange(mesh.n_cells), len(children))
    fine = SimplicialMesh(vertices, fine_cells)
    return fine, RefinementMaps(parent, vparents)


@dataclass(frozen=True)
class FaceClassification:
    """Each fine face is embedded in a coarse face or interior to a coarse cell."""

    embedded_in: np.ndarray  # coarse face id, -1 if not embedded
    interior_to: np.ndarray  # coarse cell id, -1 if embedded

    @property
    def embedded(self) -> np.ndarray:
        return self.embedded_in >= 0


def _face_keys(faces: np.ndarray, base: int) -> np.ndarray:
    key = np.zeros(len(faces), dtype=np.int64)
    for c in range(faces.shape[1]):
        key = key * base + faces[:, c]
    return key


def classify_faces(coarse: SimplicialMesh, fine: SimplicialMesh, maps: RefinementMaps) -> FaceClassification:
    d = coarse.dim
    if (
        fine.dim != d
        or len(maps.cell_parent) != fine.n_cells
        or len(maps.vertex_parents) != fine.n_vertices
        or maps.vertex_parents.max() >= coarse.n_vertices
        or maps.cell_parent.max() >= coarse.n_cells
    ):
        raise MeshError("meshes are not related by the given refinement maps")
    # every fine cell must be spanned by vertices and edge midpoints of its parent
    owner = coarse.cells[maps.cell_parent]
    cell_carriers = maps.vertex_parents[fine.cells].reshape(fine.n_cells, -1)
    if not np.all((cell_carriers[:, :, None] == owner[:, None, :]).any(axis=2)):
        raise MeshError("non-nested meshes: a fine cell is not contained in its parent")
    carriers = np.sort(maps.vertex_parents[fine.faces].reshape(fine.n_faces, 2 * d), axis=1)
    new = carriers[:, 1:] != carriers[:, :-1]
    distinct = 1 + new.sum(axis=1)
    candidate = np.flatnonzero(distinct == d)
    sub = carriers[candidate]
    keep = np.concatenate([np.ones((len(candidate), 1), bool), new[candidate]], axis=1)
    verts = sub[keep].reshape(len(candidate), d)
    base = coarse.n_vertices
    ckeys = _face_keys(coarse.faces, base)
    fkeys = _face_keys(verts, base)
    pos = np.clip(np.searchsorted(ckeys, fkeys), 0, len(ckeys) - 1)
    hit = ckeys[pos] == fkeys

    embedded_in = np.full(fine.n_faces, -1, dtype=np.int64)
    embedded_in[candidate[hit]] = pos[hit]
    interior_to = np.full(fine.n_faces, -1, dtype=np.int64)
    inner = embedded_in < 0
    fc = fine.face_cells[inner]
    if np.any(fc[:, 1] < 0):
        raise MeshError("non-nested meshes: a boundary fine face is not on the coarse skeleton")
    p0, p1 = maps.cell_parent[fc[:, 0]], maps.cell_parent[fc[:, 1]]
    if np.any(p0 != p1):
        raise MeshError("non-nested meshes: interior fine face between different coarse cells")
    interior_to[inner] = p0
    return FaceClassification(embedded_in, interior_to)


# ---------------------------------------------------------------------------

@dataclass
class MeshHierarchy:
    """Nested meshes, coarse to fine, with the per-pair refinement data."""

    levels: list = field(default_factory=list)
    maps: list = field(default_factory=list)  # maps[k] relates levels k and k+1
    classifications: list = field(default_factory=list)

    @classmethod
    def from_coarse(cls, coarse: SimplicialMesh, n_levels: int) -> "MeshHierarchy":
        if n_levels < 1:
            raise MeshError("a hierarchy needs at least one level")
        hier = cls([coarse], [], [])
        for _ in range(n_levels - 1):
            fine, maps = refine_uniform(hier.levels[-1])
            hier.classifications.append(classify_faces(hier.levels[-1], fine, maps))
            hier.levels.append(fine)
            hier.maps.append(maps)
        return hier

    def __len__(self):
        return len(self.levels)

    def __getitem__(self, k):
        return self.levels[k]

    def truncated(self, n_levels: int) -> "MeshHierarchy":
        """The sub-hierarchy made of the ``n_levels`` coarsest meshes."""
        return MeshHierarchy(
            self.levels[:n_levels], self.maps[: n_levels - 1], self.classifications[: n_levels - 1]
        )

    def refinement_ratios(self) -> np.ndarray:
        h = np.array([m.h for m in self.levels])
        return h[1:] / h[:-1]
