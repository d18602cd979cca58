"""Backend selection for the mesh operator kernels.

Two interchangeable implementations exist: compiled kernels (built at install
time when a C compiler is available) and a NumPy fallback.  The default is
chosen at import time; the environment variable HOMOGBOUND_BACKEND overrides
it with ``auto``, ``cython`` or ``numpy``.  Results agree up to floating-point
reduction order.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from . import _kernels_np
from .grid import TET_CORNERS, PeriodicGrid, REF_GRADIENTS, reference_coefficient_table

try:
    from . import _kernels_cy
except ImportError:
    _kernels_cy = None

__all__ = [
    "KernelTables",
    "make_tables",
    "available_backends",
    "current_backend",
    "set_backend",
    "grad",
    "grad_t",
    "curl",
    "curl_t",
    "primal_apply",
    "dual_apply",
]


def available_backends() -> tuple[str, ...]:
    return ("cython", "numpy") if _kernels_cy is not None else ("numpy",)


def _initial_backend() -> str:
    choice = os.environ.get("HOMOGBOUND_BACKEND", "auto").lower()
    if choice not in ("auto", "cython", "numpy"):
        raise ValueError(f"HOMOGBOUND_BACKEND must be auto, cython or numpy, got {choice!r}")
    if choice == "auto":
        return "cython" if _kernels_cy is not None else "numpy"
    if choice == "cython" and _kernels_cy is None:
        raise RuntimeError("HOMOGBOUND_BACKEND=cython but the compiled kernels are not installed")
    return choice


_backend = _initial_backend()


def current_backend() -> str:
    return _backend


def set_backend(name: str) -> None:
    """Switch kernel implementations at runtime (mainly for benchmarks)."""
    global _backend
    if name not in ("cython", "numpy"):
        raise ValueError(f"backend must be cython or numpy, got {name!r}")
    if name == "cython" and _kernels_cy is None:
        raise RuntimeError("compiled kernels are not installed")
    _backend = name


@dataclass(frozen=True)
class KernelTables:
    """Precomputed per-grid tables shared by both kernel backends.

    ``c_jt`` is the (18, 8) physical gradient table with row j*6 + t used by
    the GEMM formulation; ``c4``/``corners`` carry the same coefficients
    compressed to the four corners of each tet for the fused kernels.
    """

    shape: tuple[int, int, int]
    c_jt: np.ndarray
    c4: np.ndarray
    corners: np.ndarray
    shifts: tuple[tuple[int, int, int], ...]
    wq: float


def make_tables(grid: PeriodicGrid) -> KernelTables:
    h = grid.h
    c8 = reference_coefficient_table() / h[None, :, None]
    c_jt = np.ascontiguousarray(c8.transpose(1, 0, 2).reshape(18, 8))
    c4 = np.ascontiguousarray(REF_GRADIENTS.transpose(0, 2, 1) / h[None, :, None])
    corners = np.ascontiguousarray(TET_CORNERS, dtype=np.intp)
    shifts = tuple((c & 1, (c >> 1) & 1, (c >> 2) & 1) for c in range(8))
    return KernelTables(
        shape=grid.shape,
        c_jt=c_jt,
        c4=c4,
        corners=corners,
        shifts=shifts,
        wq=grid.element_volume,
    )


def grad(tb: KernelTables, u: np.ndarray) -> np.ndarray:
    return _kernels_np.grad(tb.c_jt, tb.shifts, u)


def grad_t(tb: KernelTables, field: np.ndarray) -> np.ndarray:
    return _kernels_np.grad_t(tb.c_jt, tb.shifts, field)


def curl(tb: KernelTables, psi: np.ndarray) -> np.ndarray:
    if _backend == "cython":
        out = np.empty((3, 6) + tb.shape)
        _kernels_cy.curl_apply(tb.c4, tb.corners, psi, out)
        return out
    return _kernels_np.curl(tb.c_jt, tb.shifts, psi)


def curl_t(tb: KernelTables, field: np.ndarray) -> np.ndarray:
    if _backend == "cython":
        out = np.zeros((3,) + tb.shape)
        _kernels_cy.curl_t_apply(tb.c4, tb.corners, field, out)
        return out
    return _kernels_np.curl_t(tb.c_jt, tb.shifts, field)


def primal_apply(tb: KernelTables, comps: np.ndarray, u: np.ndarray) -> np.ndarray:
    if _backend == "cython":
        out = np.zeros(tb.shape)
        _kernels_cy.primal_apply(tb.c4, tb.corners, comps, u, out, tb.wq)
        return out
    return _kernels_np.primal_apply(tb.c_jt, tb.shifts, comps, u, tb.wq)


def dual_apply(tb: KernelTables, inv_comps: np.ndarray, psi: np.ndarray) -> np.ndarray:
    if _backend == "cython":
        out = np.zeros((3,) + tb.shape)
        _kernels_cy.dual_apply(tb.c4, tb.corners, inv_comps, psi, out, tb.wq)
        return out
    return _kernels_np.dual_apply(tb.c_jt, tb.shifts, inv_comps, psi, tb.wq)
