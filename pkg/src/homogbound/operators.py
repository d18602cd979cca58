"""Matrix-free first-order operators of the periodic P1 discretization.

The element gradient operator D applied to a nodal field returns one constant
gradient per tetrahedron; stacking its three directional blocks gives the
(3 n_ele) x n_vox map D_grad.  The curl-shaped map D_curl acts on three nodal
potential fields and produces per-element vectors

    ( D3 psi_2 - D2 psi_3,  D1 psi_3 - D3 psi_1,  D2 psi_1 - D1 psi_2 ),

which are exactly divergence-free with zero componentwise mean; the same map
arises by applying the skew generators Q3, Q2, Q1 to the per-channel
gradients, which serves as a cross-check.  With the one-point quadrature
weight w_q = |Y| / n_ele the stiffness actions are

    primal:  w_q * D_grad^T A D_grad u        on n_vox unknowns,
    dual:    w_q * D_curl^T A^{-1} D_curl psi on 3 n_vox unknowns,

both singular exactly on the constants in each channel, which CG never meets
because right-hand sides have zero mean.

Vectors at this layer are flat: nodal fields of length n_vox, potential
triples of length 3*n_vox (channel-major), element fields of length 3*n_ele
(component-major, elements ordered t*n_vox + voxel).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _sym3, kernels
from .coefficients import CoefficientField
from .grid import PeriodicGrid, node_index, tetrahedra_of_voxel

__all__ = [
    "Q1",
    "Q2",
    "Q3",
    "DerivativeOperators",
    "CurlGradViews",
    "build_derivative_operators",
    "grad",
    "grad_transpose",
    "curl",
    "curl_transpose",
    "apply_primal",
    "apply_dual",
    "rhs_primal",
    "rhs_dual",
    "strip_null_noise",
    "dense_views",
]

# Skew generators: Q_j v = e_j x v up to sign convention; their images of
# gradient fields span the divergence-free space used by the dual problem.
Q1 = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
Q2 = np.array([[0.0, 0.0, 1.0], [0.0, 0.0, 0.0], [-1.0, 0.0, 0.0]])
Q3 = np.array([[0.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]])


@dataclass(frozen=True)
class DerivativeOperators:
    """Per-grid operator context: kernel tables plus shape bookkeeping."""

    grid: PeriodicGrid
    tables: kernels.KernelTables = field(repr=False)

    @property
    def n_primal(self) -> int:
        return self.grid.n_vox

    @property
    def n_dual(self) -> int:
        return 3 * self.grid.n_vox

    @property
    def n_element(self) -> int:
        return 3 * self.grid.n_ele


def build_derivative_operators(grid: PeriodicGrid) -> DerivativeOperators:
    return DerivativeOperators(grid=grid, tables=kernels.make_tables(grid))


def _as_lattice(ops: DerivativeOperators, u: np.ndarray, channels: int) -> np.ndarray:
    shape = (channels,) + ops.grid.shape if channels > 1 else ops.grid.shape
    u = np.asarray(u, dtype=np.float64)
    if u.shape == shape:
        return u
    want = channels * ops.grid.n_vox if channels > 1 else ops.grid.n_vox
    if u.shape != (want,):
        raise ValueError(f"expected a vector of length {want} or shape {shape}, got {u.shape}")
    return u.reshape(shape)


def _ele_lattice(ops: DerivativeOperators, f: np.ndarray) -> np.ndarray:
    shape = (3, 6) + ops.grid.shape
    f = np.asarray(f, dtype=np.float64)
    if f.shape == shape:
        return f
    if f.shape != (ops.n_element,):
        raise ValueError(
            f"expected an element field of length {ops.n_element} or shape {shape}, got {f.shape}"
        )
    return f.reshape(shape)


def grad(ops: DerivativeOperators, u: np.ndarray) -> np.ndarray:
    """Element gradients (3, 6, n3, n2, n1) of a nodal field."""
    return kernels.grad(ops.tables, _as_lattice(ops, u, 1))


def grad_transpose(ops: DerivativeOperators, f: np.ndarray) -> np.ndarray:
    """Unweighted adjoint of :func:`grad`, as a lattice array."""
    return kernels.grad_t(ops.tables, _ele_lattice(ops, f))


def curl(ops: DerivativeOperators, psi: np.ndarray) -> np.ndarray:
    """Element curl field (3, 6, n3, n2, n1) of a potential triple."""
    return kernels.curl(ops.tables, _as_lattice(ops, psi, 3))


def curl_transpose(ops: DerivativeOperators, f: np.ndarray) -> np.ndarray:
    """Unweighted adjoint of :func:`curl`, as a (3, n3, n2, n1) array."""
    return kernels.curl_t(ops.tables, _ele_lattice(ops, f))


def apply_primal(ops: DerivativeOperators, coeff: CoefficientField, u: np.ndarray) -> np.ndarray:
    """Flat stiffness action w_q * D_grad^T A D_grad u."""
    out = kernels.primal_apply(ops.tables, coeff.comps, _as_lattice(ops, u, 1))
    return out.ravel()


def apply_dual(ops: DerivativeOperators, coeff: CoefficientField, psi: np.ndarray) -> np.ndarray:
    """Flat stiffness action w_q * D_curl^T A^{-1} D_curl psi."""
    out = kernels.dual_apply(ops.tables, coeff.inv_comps, _as_lattice(ops, psi, 3))
    return out.ravel()


def _const_element_field(ops: DerivativeOperators, vec) -> np.ndarray:
    v = np.asarray(vec, dtype=np.float64)
    if v.shape != (3,):
        raise ValueError(f"expected a direction vector of length 3, got shape {v.shape}")
    return np.broadcast_to(v[:, None, None, None, None], (3, 6) + ops.grid.shape)


def strip_null_noise(ops: DerivativeOperators, b: np.ndarray, term_scale: float):
    """Clean an adjoint-assembled load vector of roundoff in the null space.

    The exact load vectors are mean-free per channel; summation noise can
    leave a spatially constant residue, which lies in the operator null
    space and would stall CG at zero curvature.  Remove it, and when the
    whole vector sits below the cancellation noise floor of its assembly
    (``term_scale`` = the magnitude of the summed terms) return exact zeros.
    """
    b -= b.mean(axis=-1, keepdims=True)
    floor = 1e-12 * np.abs(ops.tables.c_jt).max() * term_scale
    if np.abs(b).max() <= floor:
        b[:] = 0.0
    return b.ravel()


def rhs_primal(ops: DerivativeOperators, coeff: CoefficientField, xi) -> np.ndarray:
    """Load vector -w_q * D_grad^T (A e_xi) for a unit-cell direction xi."""
    flux = _sym3.matvec(coeff.comps, _const_element_field(ops, xi))
    b = (-ops.tables.wq) * kernels.grad_t(ops.tables, flux)
    scale = ops.tables.wq * float(np.abs(flux).max())
    return strip_null_noise(ops, b.reshape(1, -1), scale)


def rhs_dual(ops: DerivativeOperators, coeff: CoefficientField, alpha) -> np.ndarray:
    """Load vector -w_q * D_curl^T (A^{-1} alpha) for a flux direction alpha."""
    flux = _sym3.matvec(coeff.inv_comps, _const_element_field(ops, alpha))
    b = (-ops.tables.wq) * kernels.curl_t(ops.tables, flux)
    scale = ops.tables.wq * float(np.abs(flux).max())
    return strip_null_noise(ops, b.reshape(3, -1), scale)


@dataclass(frozen=True)
class CurlGradViews:
    """Dense realizations of D_grad and D_curl, for small-grid verification.

    ``d_blocks[j]`` is the n_ele x n_vox derivative matrix D_{j+1};
    ``d_grad`` stacks them vertically; ``d_curl`` is the 3 n_ele x 3 n_vox
    block pattern [[0, D3, -D2], [-D3, 0, D1], [D2, -D1, 0]].
    """

    d_blocks: tuple[np.ndarray, np.ndarray, np.ndarray]
    d_grad: np.ndarray
    d_curl: np.ndarray


def dense_views(ops: DerivativeOperators) -> CurlGradViews:
    """Assemble dense operator matrices by explicit element loops.

    Quadratic memory in the grid size; meant for n_vox of a few dozen.
    """
    from .grid import REF_GRADIENTS

    g = ops.grid
    d = [np.zeros((g.n_ele, g.n_vox)) for _ in range(3)]
    h = g.h
    for vox in range(g.n_vox):
        for tet in tetrahedra_of_voxel(g, vox):
            t = tet.tet_type
            for m, node in enumerate(tet.node_ids):
                for j in range(3):
                    d[j][tet.element_id, node] += REF_GRADIENTS[t, m, j] / h[j]
    d1, d2, d3 = d
    zero = np.zeros_like(d1)
    d_grad = np.vstack([d1, d2, d3])
    d_curl = np.block([[zero, d3, -d2], [-d3, zero, d1], [d2, -d1, zero]])
    return CurlGradViews(d_blocks=(d1, d2, d3), d_grad=d_grad, d_curl=d_curl)
