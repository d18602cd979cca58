"""Periodic voxel grid with a six-tetrahedra split of every voxel.

The cell Y = (0,a1) x (0,a2) x (0,a3) is divided into n1*n2*n3 equal voxels
and each voxel into the six tetrahedra that share the main diagonal from its
local corner (0,0,0) to (1,1,1).  In local coordinates the tetrahedra are the
order regions 0 <= x_{s1} <= x_{s2} <= x_{s3} <= 1, one per permutation
(s1,s2,s3) of (1,2,3).  Nodes sit on voxel corners and are identified
periodically, so the mesh has exactly n1*n2*n3 distinct nodes.  On this mesh
the two diagonal corners of a voxel belong to all six of its tetrahedra and
the remaining six corners to three each, which makes the node degrees 7 and 4
once the tetrahedra of neighbouring voxels are counted in.

Index conventions used throughout the package:

* node (i, j, k) sits at (i*h1, j*h2, k*h3); indices wrap modulo (n1,n2,n3);
* flat node ids are x-fastest: id = i + n1*(j + n2*k);
* lattice-shaped arrays are indexed [k, j, i] so a C-order ravel walks the
  flat node ids in order;
* local corner c of a voxel is the offset (dx,dy,dz) with c = dx + 2*dy + 4*dz;
* element ids are t*n_vox + voxel_id for tetrahedron type t in 0..5, with the
  types ordered by lexicographic permutation.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

__all__ = [
    "PeriodicGrid",
    "Tetrahedron",
    "build_grid",
    "node_index",
    "node_coords_of_index",
    "tetrahedra_of_voxel",
    "KUHN_PERMUTATIONS",
    "CORNER_OFFSETS",
    "TET_VERTEX_OFFSETS",
    "TET_CORNERS",
    "REF_GRADIENTS",
    "REF_CENTROIDS",
    "reference_coefficient_table",
]

# Permutations (s1,s2,s3) of (0,1,2), lexicographic.  Type t is the region
# 0 <= x[s1] <= x[s2] <= x[s3] <= 1 of the unit voxel.
KUHN_PERMUTATIONS = tuple(itertools.permutations((0, 1, 2)))

# Corner c = dx + 2*dy + 4*dz.
CORNER_OFFSETS = np.array(
    [[c & 1, (c >> 1) & 1, (c >> 2) & 1] for c in range(8)], dtype=np.int64
)


def _build_tet_tables():
    """Vertices, corner ids and P1 shape-function gradients per tet type.

    For permutation (s1,s2,s3) the vertices walk the diagonal chain
    0, e_{s3}, e_{s3}+e_{s2}, (1,1,1) and the barycentric coordinates are
    1-x_{s3}, x_{s3}-x_{s2}, x_{s2}-x_{s1}, x_{s1}, from which the constant
    gradients below are read off.
    """
    eye = np.eye(3, dtype=np.int64)
    verts = np.empty((6, 4, 3), dtype=np.int64)
    grads = np.empty((6, 4, 3), dtype=np.float64)
    for t, (s1, s2, s3) in enumerate(KUHN_PERMUTATIONS):
        verts[t, 0] = 0
        verts[t, 1] = eye[s3]
        verts[t, 2] = eye[s3] + eye[s2]
        verts[t, 3] = 1
        grads[t, 0] = -eye[s3]
        grads[t, 1] = eye[s3] - eye[s2]
        grads[t, 2] = eye[s2] - eye[s1]
        grads[t, 3] = eye[s1]
    corners = (verts[..., 0] + 2 * verts[..., 1] + 4 * verts[..., 2]).astype(np.int64)
    return verts, corners, grads


TET_VERTEX_OFFSETS, TET_CORNERS, REF_GRADIENTS = _build_tet_tables()

# Centroid of each tet in unit-voxel local coordinates.
REF_CENTROIDS = TET_VERTEX_OFFSETS.mean(axis=1)


def reference_coefficient_table() -> np.ndarray:
    """Gradient coefficients C[t, j, c] on the unit voxel.

    C[t, j, c] is the j-th gradient component of the hat function of corner c
    restricted to tet t; corners not belonging to the tet contribute zero.
    Physical gradients follow by dividing row j by the voxel extent h_j.
    """
    table = np.zeros((6, 3, 8))
    for t in range(6):
        for m in range(4):
            table[t, :, TET_CORNERS[t, m]] = REF_GRADIENTS[t, m]
    return table


@dataclass(frozen=True)
class PeriodicGrid:
    """Uniform periodic voxel grid of the cell (0,a1) x (0,a2) x (0,a3)."""

    n1: int
    n2: int
    n3: int
    a1: float
    a2: float
    a3: float

    def __post_init__(self):
        for n in (self.n1, self.n2, self.n3):
            if not isinstance(n, (int, np.integer)) or n < 1:
                raise ValueError(f"voxel counts must be positive integers, got {n!r}")
        for a in (self.a1, self.a2, self.a3):
            if not np.isfinite(a) or a <= 0:
                raise ValueError(f"cell extents must be positive finite, got {a!r}")

    @property
    def shape(self) -> tuple[int, int, int]:
        """Lattice array shape (n3, n2, n1)."""
        return (self.n3, self.n2, self.n1)

    @property
    def h(self) -> np.ndarray:
        return np.array([self.a1 / self.n1, self.a2 / self.n2, self.a3 / self.n3])

    @property
    def n_vox(self) -> int:
        return self.n1 * self.n2 * self.n3

    @property
    def n_ele(self) -> int:
        return 6 * self.n_vox

    @property
    def cell_volume(self) -> float:
        return self.a1 * self.a2 * self.a3

    @property
    def element_volume(self) -> float:
        """Volume of one tetrahedron; also the quadrature weight."""
        return self.cell_volume / self.n_ele


def build_grid(
    n1: int,
    n2: int | None = None,
    n3: int | None = None,
    a1: float = 2.0 * np.pi,
    a2: float | None = None,
    a3: float | None = None,
) -> PeriodicGrid:
    """Construct a grid; omitted counts/extents repeat the first one."""
    n2 = n1 if n2 is None else n2
    n3 = n1 if n3 is None else n3
    a2 = a1 if a2 is None else a2
    a3 = a1 if a3 is None else a3
    return PeriodicGrid(int(n1), int(n2), int(n3), float(a1), float(a2), float(a3))


def node_index(grid: PeriodicGrid, i, j, k):
    """Flat id of node (i,j,k); indices wrap periodically, arrays welcome."""
    i = np.asarray(i) % grid.n1
    j = np.asarray(j) % grid.n2
    k = np.asarray(k) % grid.n3
    flat = i + grid.n1 * (j + grid.n2 * k)
    return int(flat) if flat.ndim == 0 else flat


def node_coords_of_index(grid: PeriodicGrid, flat: int) -> tuple[int, int, int]:
    """Inverse of :func:`node_index` for a valid flat id."""
    if not 0 <= flat < grid.n_vox:
        raise ValueError(f"flat id {flat} outside 0..{grid.n_vox - 1}")
    i = flat % grid.n1
    j = (flat // grid.n1) % grid.n2
    k = flat // (grid.n1 * grid.n2)
    return i, j, k


@dataclass(frozen=True)
class Tetrahedron:
    """One tetrahedron of the split, with periodic node ids and geometry."""

    element_id: int
    tet_type: int
    node_ids: tuple[int, int, int, int]
    vertices: np.ndarray  # (4, 3) physical coordinates, unwrapped
    centroid: np.ndarray  # (3,)

    @property
    def signed_volume(self) -> float:
        edges = self.vertices[1:] - self.vertices[0]
        return float(np.linalg.det(edges)) / 6.0


def tetrahedra_of_voxel(grid: PeriodicGrid, voxel: int) -> list[Tetrahedron]:
    """The six tetrahedra of a voxel, in tet-type order."""
    if not 0 <= voxel < grid.n_vox:
        raise ValueError(f"voxel id {voxel} outside 0..{grid.n_vox - 1}")
    i, j, k = node_coords_of_index(grid, voxel)
    origin = np.array([i, j, k], dtype=float)
    h = grid.h
    tets = []
    for t in range(6):
        offs = TET_VERTEX_OFFSETS[t]
        ids = tuple(
            node_index(grid, i + offs[m, 0], j + offs[m, 1], k + offs[m, 2])
            for m in range(4)
        )
        verts = (origin + offs) * h
        tets.append(
            Tetrahedron(
                element_id=t * grid.n_vox + voxel,
                tet_type=t,
                node_ids=ids,
                vertices=verts,
                centroid=(origin + REF_CENTROIDS[t]) * h,
            )
        )
    return tets
