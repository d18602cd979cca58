"""NumPy reference kernels for the matrix-free mesh operators.

All kernels work on lattice-shaped arrays (n3, n2, n1) indexed [k, j, i].
Gathering the eight voxel corners is done with periodic rolls, after which
the per-element gradients are one dense (18, 8) x (8, n_vox) product with the
coefficient table.  Transposes run the same two steps backwards.  These are
the fallback implementations; the compiled kernels fuse the whole
gather-multiply-scatter per voxel.
"""

from __future__ import annotations

import numpy as np

from . import _sym3

# element curl components from per-channel gradients G[channel][deriv]:
#   w0 = G[1][2] - G[2][1],  w1 = G[2][0] - G[0][2],  w2 = G[0][1] - G[1][0]
_CURL_PLUS = ((1, 2), (2, 0), (0, 1))
_CURL_MINUS = ((2, 1), (0, 2), (1, 0))


def _gather(shifts, u: np.ndarray) -> np.ndarray:
    """Corner values of every voxel: out[c] = u shifted by corner offset c."""
    out = np.empty((8,) + u.shape)
    for c, (dx, dy, dz) in enumerate(shifts):
        out[c] = np.roll(u, (-dz, -dy, -dx), axis=(0, 1, 2))
    return out


def _scatter(shifts, contrib: np.ndarray, out: np.ndarray) -> None:
    """Adjoint of :func:`_gather`: accumulate corner contributions into out."""
    for c, (dx, dy, dz) in enumerate(shifts):
        out += np.roll(contrib[c], (dz, dy, dx), axis=(0, 1, 2))


def grad(c_jt, shifts, u: np.ndarray) -> np.ndarray:
    """Per-element gradients of a nodal field: (3 deriv, 6 tet, n3, n2, n1)."""
    corners = _gather(shifts, u)
    g = c_jt @ corners.reshape(8, -1)
    return g.reshape((3, 6) + u.shape)


def grad_t(c_jt, shifts, field: np.ndarray) -> np.ndarray:
    """Adjoint of :func:`grad` (no quadrature weight)."""
    shape = field.shape[2:]
    contrib = (c_jt.T @ field.reshape(18, -1)).reshape((8,) + shape)
    out = np.zeros(shape)
    _scatter(shifts, contrib, out)
    return out


def curl(c_jt, shifts, psi: np.ndarray) -> np.ndarray:
    """Element curls of a 3-channel nodal field: (3 comp, 6 tet, n3, n2, n1)."""
    g = np.stack([grad(c_jt, shifts, psi[p]) for p in range(3)])
    out = np.empty((3, 6) + psi.shape[1:])
    for i in range(3):
        (pp, pa), (mp, ma) = _CURL_PLUS[i], _CURL_MINUS[i]
        out[i] = g[pp, pa] - g[mp, ma]
    return out


def curl_t(c_jt, shifts, field: np.ndarray) -> np.ndarray:
    """Adjoint of :func:`curl` (no quadrature weight)."""
    shape = field.shape[2:]
    out = np.empty((3,) + shape)
    h = np.empty((3, 6) + shape)
    for p in range(3):
        h[:] = 0.0
        for i in range(3):
            pp, pa = _CURL_PLUS[i]
            if pp == p:
                h[pa] += field[i]
            mp, ma = _CURL_MINUS[i]
            if mp == p:
                h[ma] -= field[i]
        out[p] = grad_t(c_jt, shifts, h)
    return out


def primal_apply(c_jt, shifts, comps, u: np.ndarray, wq: float) -> np.ndarray:
    """wq * grad^T (A grad u) on the nodal lattice."""
    flux = _sym3.matvec(comps, grad(c_jt, shifts, u))
    return wq * grad_t(c_jt, shifts, flux)


def dual_apply(c_jt, shifts, inv_comps, psi: np.ndarray, wq: float) -> np.ndarray:
    """wq * curl^T (A^{-1} curl psi) on the 3-channel nodal lattice."""
    flux = _sym3.matvec(inv_comps, curl(c_jt, shifts, psi))
    return wq * curl_t(c_jt, shifts, flux)
