"""Batched operations on symmetric 3x3 matrices stored as 6 components.

Component order is (a11, a22, a33, a12, a13, a23) along the FIRST axis, so a
stack of matrices has shape (6, ...) and vectors (3, ...).  Everything here is
plain broadcasting, shared by the coefficient fields and the eigen-analysis.
"""

from __future__ import annotations

import numpy as np

# comps index of matrix entry (r, c)
SYM_INDEX = np.array([[0, 3, 4], [3, 1, 5], [4, 5, 2]])


def matvec(comps: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Matrix-vector products, broadcasting over trailing axes."""
    a, b, c, d, e, f = comps
    return np.stack(
        [
            a * v[0] + d * v[1] + e * v[2],
            d * v[0] + b * v[1] + f * v[2],
            e * v[0] + f * v[1] + c * v[2],
        ]
    )


def det(comps: np.ndarray) -> np.ndarray:
    a, b, c, d, e, f = comps
    return a * (b * c - f * f) - d * (d * c - f * e) + e * (d * f - b * e)


def inv(comps: np.ndarray) -> np.ndarray:
    """Inverses via the adjugate; input must be nonsingular."""
    a, b, c, d, e, f = comps
    dt = det(comps)
    return np.stack(
        [
            (b * c - f * f) / dt,
            (a * c - e * e) / dt,
            (a * b - d * d) / dt,
            (e * f - d * c) / dt,
            (d * f - e * b) / dt,
            (d * e - a * f) / dt,
        ]
    )


def eigvals(comps: np.ndarray) -> np.ndarray:
    """Eigenvalues, ascending along a new first axis, by the trigonometric
    closed form for symmetric 3x3 matrices.

    Accurate to machine precision relative to the matrix scale; near-equal
    eigenvalues keep full absolute accuracy because the spread factor p
    multiplies the cosine terms.
    """
    a, b, c, d, e, f = (np.asarray(x, dtype=float) for x in comps)
    q = (a + b + c) / 3.0
    p1 = d * d + e * e + f * f
    p2 = (a - q) ** 2 + (b - q) ** 2 + (c - q) ** 2 + 2.0 * p1
    p = np.sqrt(p2 / 6.0)
    safe = np.where(p > 0.0, p, 1.0)
    # r = det((A - q I) / p) / 2, clipped to the domain of arccos
    bb = np.stack([a - q, b - q, c - q, d, e, f]) / safe
    r = np.clip(det(bb) / 2.0, -1.0, 1.0)
    phi = np.arccos(r) / 3.0
    hi = q + 2.0 * p * np.cos(phi)
    lo = q + 2.0 * p * np.cos(phi + 2.0 * np.pi / 3.0)
    mid = 3.0 * q - hi - lo
    return np.stack([lo, mid, hi])


def to_dense(comps: np.ndarray) -> np.ndarray:
    """Expand (6, ...) component stacks to (..., 3, 3) dense matrices."""
    comps = np.asarray(comps)
    out = np.empty(comps.shape[1:] + (3, 3), dtype=comps.dtype)
    for r in range(3):
        for c in range(3):
            out[..., r, c] = comps[SYM_INDEX[r, c]]
    return out


def from_dense(mat: np.ndarray) -> np.ndarray:
    """Extract (6, ...) components from (..., 3, 3) symmetric matrices."""
    mat = np.asarray(mat)
    return np.stack(
        [
            mat[..., 0, 0],
            mat[..., 1, 1],
            mat[..., 2, 2],
            mat[..., 0, 1],
            mat[..., 0, 2],
            mat[..., 1, 2],
        ]
    )
