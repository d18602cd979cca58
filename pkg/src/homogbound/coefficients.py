"""Element-wise constant SPD coefficient fields and their voxel file format.

A field stores one symmetric 3x3 matrix per tetrahedron as six components in
the order (a11, a22, a33, a12, a13, a23), laid out component-first as
``comps[comp, tet_type, k, j, i]``.  The inverse matrices are precomputed at
construction since the dual operator consumes them on every application.

The voxel file format keeps one matrix per voxel (shared by its six
tetrahedra): the magic line ``HBVOX1``, a line ``n1 n2 n3``, a line
``a1 a2 a3``, then raw little-endian float64 payload of n1*n2*n3 records of
six components each, voxels ordered x-fastest.
"""

from __future__ import annotations

import os
import warnings

import numpy as np

from . import _sym3
from .grid import REF_CENTROIDS, PeriodicGrid

__all__ = [
    "CoefficientField",
    "constant_field",
    "example1_field",
    "example2_field",
    "laminate_field",
    "load_voxel_file",
    "save_voxel_file",
    "element_centroids",
]

VOXEL_MAGIC = b"HBVOX1"
COMPONENT_ORDER = ("a11", "a22", "a33", "a12", "a13", "a23")


class CoefficientField:
    """Per-element SPD matrices on a periodic grid, with cached inverses."""

    def __init__(self, grid: PeriodicGrid, comps: np.ndarray):
        comps = np.ascontiguousarray(comps, dtype=np.float64)
        want = (6, 6) + grid.shape
        if comps.shape != want:
            raise ValueError(f"component array must have shape {want}, got {comps.shape}")
        if not np.all(np.isfinite(comps)):
            raise ValueError("coefficient components must be finite")
        eigs = _sym3.eigvals(comps)
        lam_min = float(eigs[0].min())
        if lam_min <= 0.0:
            flat = int(np.argmin(eigs[0]))
            t, vox = divmod(flat, grid.n_vox)
            raise ValueError(
                f"coefficient matrix not positive definite on element "
                f"(tet {t}, voxel {vox}): smallest eigenvalue {lam_min:.6g}"
            )
        self.grid = grid
        self.comps = comps
        self.inv_comps = np.ascontiguousarray(_sym3.inv(comps))
        self.lambda_min = lam_min
        self.lambda_max = float(eigs[2].max())

    def is_voxel_constant(self) -> bool:
        """True when all six tetrahedra of every voxel share one matrix."""
        return all(np.array_equal(self.comps[:, t], self.comps[:, 0]) for t in range(1, 6))

    def matrix_at(self, tet_type: int, voxel: int) -> np.ndarray:
        """Dense 3x3 matrix of one element (for inspection and tests)."""
        k, rem = divmod(voxel, self.grid.n1 * self.grid.n2)
        j, i = divmod(rem, self.grid.n1)
        return _sym3.to_dense(self.comps[:, tet_type, k, j, i])


def element_centroids(grid: PeriodicGrid):
    """Physical centroid coordinates of all elements, one (6,n3,n2,n1) array
    per coordinate direction."""
    h1, h2, h3 = grid.h
    i = np.arange(grid.n1)
    j = np.arange(grid.n2)
    k = np.arange(grid.n3)
    c = REF_CENTROIDS  # (6, 3)
    x1 = (i[None, None, None, :] + c[:, 0, None, None, None]) * h1
    x2 = (j[None, None, :, None] + c[:, 1, None, None, None]) * h2
    x3 = (k[None, :, None, None] + c[:, 2, None, None, None]) * h3
    shape = (6,) + grid.shape
    return (
        np.broadcast_to(x1, shape).copy(),
        np.broadcast_to(x2, shape).copy(),
        np.broadcast_to(x3, shape).copy(),
    )


def _warn_example_grid(grid: PeriodicGrid):
    if any(abs(a - 2.0 * np.pi) > 1e-12 * a for a in (grid.a1, grid.a2, grid.a3)):
        warnings.warn(
            "built-in example fields are 2*pi-periodic; other cell extents "
            "break the periodicity of the coefficients",
            stacklevel=3,
        )
    if any(n % 3 for n in (grid.n1, grid.n2, grid.n3)):
        warnings.warn(
            "voxel counts not divisible by 3: the sign-pattern discontinuities "
            "fall inside voxels and the field varies between tetrahedra",
            stacklevel=3,
        )


def example1_field(grid: PeriodicGrid) -> CoefficientField:
    """Anisotropic piecewise-constant test field driven by sign(sin(3 x_j / 2)).

    With sign(0) = 0 on the null set of discontinuity planes; for grids with
    3 | n_j the field is constant per voxel.
    """
    _warn_example_grid(grid)
    x1, x2, x3 = element_centroids(grid)
    s1 = np.sin(1.5 * x1)
    s2 = np.sin(1.5 * x2)
    s3 = np.sin(1.5 * x3)
    g12 = np.sign(s1 * s2)
    g23 = np.sign(s2 * s3)
    g123 = np.sign(s1 * s2 * s3)
    comps = np.stack(
        [7.0 + g12, 4.01 + g12, 3.0 + g23, -2.0 - g23, g123, np.zeros_like(g12)]
    )
    return CoefficientField(grid, comps)


def example2_field(grid: PeriodicGrid) -> CoefficientField:
    """Isotropic two-phase test field (2 + sign(sin products)) * identity."""
    _warn_example_grid(grid)
    x1, x2, x3 = element_centroids(grid)
    v = 2.0 + np.sign(np.sin(1.5 * x1) * np.sin(1.5 * x2) * np.sin(1.5 * x3))
    z = np.zeros_like(v)
    return CoefficientField(grid, np.stack([v, v, v, z, z, z]))


def _as_sym3(matrix) -> np.ndarray:
    m = np.asarray(matrix, dtype=float)
    if m.shape != (3, 3):
        raise ValueError(f"expected a 3x3 matrix, got shape {m.shape}")
    scale = np.abs(m).max()
    if scale > 0 and np.abs(m - m.T).max() > 1e-12 * scale:
        raise ValueError("matrix is not symmetric")
    return 0.5 * (m + m.T)


def constant_field(grid: PeriodicGrid, matrix) -> CoefficientField:
    """Spatially constant field; the matrix must be symmetric positive definite."""
    m = _as_sym3(matrix)
    comps = np.empty((6, 6) + grid.shape)
    vals = _sym3.from_dense(m)
    for c in range(6):
        comps[c] = vals[c]
    return CoefficientField(grid, comps)


def laminate_field(
    grid: PeriodicGrid, axis: int, matrix_a, matrix_b, fraction: float
) -> CoefficientField:
    """Two-phase layering normal to a coordinate axis (1, 2 or 3).

    Phase a fills the first ``fraction`` of the cell along that axis; the
    interface must fall on a voxel boundary so the mesh resolves it exactly.
    """
    if axis not in (1, 2, 3):
        raise ValueError(f"axis must be 1, 2 or 3, got {axis!r}")
    n = (grid.n1, grid.n2, grid.n3)[axis - 1]
    cut = fraction * n
    if abs(cut - round(cut)) > 1e-9:
        raise ValueError(
            f"fraction {fraction} puts the interface inside a voxel "
            f"(needs fraction * n{axis} integral)"
        )
    cut = int(round(cut))
    if not 0 <= cut <= n:
        raise ValueError(f"fraction {fraction} outside [0, 1]")
    va = _sym3.from_dense(_as_sym3(matrix_a))
    vb = _sym3.from_dense(_as_sym3(matrix_b))
    idx = np.arange(n)
    in_a = idx < cut
    # broadcast the phase mask across the lattice: axis 1 -> i, 2 -> j, 3 -> k
    lattice_axis = {1: 2, 2: 1, 3: 0}[axis]
    shape = [1, 1, 1]
    shape[lattice_axis] = n
    mask = in_a.reshape(shape)
    comps = np.empty((6, 6) + grid.shape)
    for c in range(6):
        comps[c] = np.where(mask, va[c], vb[c])
    return CoefficientField(grid, comps)


def save_voxel_file(field: CoefficientField, path) -> None:
    """Write a voxel-constant field; rejects fields that vary within voxels."""
    if not field.is_voxel_constant():
        raise ValueError("field varies between tetrahedra of a voxel; cannot save")
    g = field.grid
    header = (
        VOXEL_MAGIC
        + b"\n"
        + f"{g.n1} {g.n2} {g.n3}\n".encode()
        + f"{g.a1!r} {g.a2!r} {g.a3!r}\n".encode()
    )
    # records x-fastest, six components each
    payload = np.ascontiguousarray(
        field.comps[:, 0].transpose(1, 2, 3, 0), dtype="<f8"
    ).tobytes()
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(header)
        fh.write(payload)
    os.replace(tmp, path)


def load_voxel_file(grid: PeriodicGrid, path) -> CoefficientField:
    """Read a voxel coefficient file and check it against the grid."""
    with open(path, "rb") as fh:
        blob = fh.read()
    try:
        magic_end = blob.index(b"\n")
        dims_end = blob.index(b"\n", magic_end + 1)
        cell_end = blob.index(b"\n", dims_end + 1)
    except ValueError:
        raise ValueError(f"{path}: truncated header") from None
    if blob[:magic_end] != VOXEL_MAGIC:
        raise ValueError(f"{path}: bad magic {blob[:magic_end]!r}")
    try:
        dims = tuple(int(v) for v in blob[magic_end + 1 : dims_end].split())
        cell = tuple(float(v) for v in blob[dims_end + 1 : cell_end].split())
    except ValueError:
        raise ValueError(f"{path}: malformed header") from None
    if len(dims) != 3 or len(cell) != 3:
        raise ValueError(f"{path}: malformed header")
    if dims != (grid.n1, grid.n2, grid.n3):
        raise ValueError(f"{path}: grid is {dims}, expected {(grid.n1, grid.n2, grid.n3)}")
    for got, want in zip(cell, (grid.a1, grid.a2, grid.a3)):
        if abs(got - want) > 1e-9 * max(1.0, abs(want)):
            raise ValueError(f"{path}: cell extents {cell} do not match the grid")
    payload = np.frombuffer(blob[cell_end + 1 :], dtype="<f8")
    if payload.size != grid.n_vox * 6:
        raise ValueError(
            f"{path}: payload holds {payload.size} values, expected {grid.n_vox * 6}"
        )
    vox = payload.reshape(grid.shape + (6,)).transpose(3, 0, 1, 2)
    lam_min = _sym3.eigvals(vox)[0]
    if lam_min.min() <= 0.0:
        flat = int(np.argmin(lam_min))
        k, rem = divmod(flat, grid.n2 * grid.n1)
        j, i = divmod(rem, grid.n1)
        voxel = i + grid.n1 * (j + grid.n2 * k)
        raise ValueError(
            f"{path}: record for voxel {voxel} is not positive definite "
            f"(smallest eigenvalue {lam_min.ravel()[flat]:.6g})"
        )
    comps = np.broadcast_to(vox[:, None], (6, 6) + grid.shape).copy()
    return CoefficientField(grid, comps)
