"""Guaranteed two-sided bounds on the homogenized coefficient matrix.

Three quantities are produced for an element-wise constant SPD coefficient
field A on the periodic cell:

* ``A*_h``  -- upper bound: solve the three periodic corrector problems in
  the P1 space and evaluate the energy of e_j + grad u_j.  Any conforming
  corrector gives an upper bound in the Loewner order, so solver accuracy
  only affects sharpness, never validity.
* ``(B*_h)^{-1}`` -- lower bound: solve the three dual problems for
  curl-represented fluxes and evaluate the complementary energy of
  e_j + curl psi_j in A^{-1}; again any iterate certifies.
* ``(B~*_h)^{-1}`` -- projected lower bound: skip the dual solves entirely.
  The primal flux residuals A (e_j + grad u_j) - A*_h e_j are L2-projected
  onto the curl space (a block-diagonal solve in Fourier space, since the
  normal equations are block circulant on the uniform mesh), and the
  complementary energy of A*_h e_j + w~_j is assembled into G, giving the
  bound A*_h G^{-1} A*_h.

Diagonal entries of the bound matrices bracket the diagonal of the exact
A*; off-diagonal entries are estimates.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _sym3, operators
from .coefficients import CoefficientField
from .grid import PeriodicGrid
from .krylov import SolveOutcome, SolverConfig, cg
from .operators import DerivativeOperators, build_derivative_operators

__all__ = [
    "PrimalSolution",
    "DualSolution",
    "ProjectedDual",
    "BoundsResult",
    "FftProjector",
    "solve_primal_all",
    "solve_dual_all",
    "fft_project",
    "project_cg",
    "algorithm2",
    "run_bounds",
]

_EYE3 = np.eye(3)


def _resolve_threads(threads: int | None) -> int:
    if threads is None:
        threads = int(os.environ.get("HOMOGBOUND_THREADS", "1"))
    return max(1, int(threads))


def _map_directions(fn, threads: int):
    if threads <= 1:
        return [fn(j) for j in range(3)]
    with ThreadPoolExecutor(max_workers=min(threads, 3)) as pool:
        return list(pool.map(fn, range(3)))


def _symmetrized(m: np.ndarray, what: str, tol: float = 1e-12) -> np.ndarray:
    scale = np.abs(m).max()
    asym = np.abs(m - m.T).max()
    if scale > 0 and asym > tol * scale:
        raise RuntimeError(f"{what} lost symmetry: asymmetry {asym:.3e} at scale {scale:.3e}")
    return 0.5 * (m + m.T)


def _spd_inverse(m: np.ndarray, what: str) -> np.ndarray:
    eigs = _sym3.eigvals(_sym3.from_dense(m))
    if eigs[0] <= 0.0:
        raise RuntimeError(f"{what} is not positive definite (eigenvalue {eigs[0]:.3e})")
    return np.linalg.inv(m)


def _energy_matrix(comps: np.ndarray, fields: list[np.ndarray]) -> np.ndarray:
    """Gram matrix (1/n_ele) sum_q <C f_k, f_j> of three element fields."""
    n_ele = fields[0][0].size
    t = np.stack([f.reshape(3, -1) for f in fields])
    flux = np.stack([_sym3.matvec(comps, f).reshape(3, -1) for f in fields])
    return np.einsum("jce,kce->jk", t, flux) / n_ele


@dataclass
class PrimalSolution:
    """Correctors and the upper bound they certify."""

    u: np.ndarray  # (3, n_vox) corrector per unit direction
    iterations: np.ndarray  # (3,)
    a_star: np.ndarray  # (3, 3) upper bound A*_h
    rel_residuals: np.ndarray = field(default=None, repr=False)


@dataclass
class DualSolution:
    """Flux potentials and the lower bound they certify."""

    psi: np.ndarray  # (3, 3*n_vox) potential triple per unit direction
    iterations: np.ndarray  # (3,)
    b_star: np.ndarray  # (3, 3) complementary energy matrix B*_h
    bound: np.ndarray  # (3, 3) lower bound (B*_h)^{-1}
    rel_residuals: np.ndarray = field(default=None, repr=False)


@dataclass
class ProjectedDual:
    """Projection-based lower bound, no dual iterations."""

    psi: np.ndarray  # (3, 3*n_vox) projection potentials
    g_matrix: np.ndarray  # (3, 3) complementary energy of alpha_j + w~_j
    b_tilde: np.ndarray  # (3, 3) B~*_h
    bound: np.ndarray  # (3, 3) lower bound (B~*_h)^{-1}


@dataclass
class BoundsResult:
    """Everything one pipeline run produced."""

    grid: PeriodicGrid
    config: SolverConfig
    primal: PrimalSolution
    dual: DualSolution | None
    projected: ProjectedDual | None
    timings: dict[str, float]


def _total_gradients(ops: DerivativeOperators, coeff: CoefficientField, u: np.ndarray):
    """Fields e_j + grad u_j for the three correctors, as element arrays."""
    shape = (3, 6) + ops.grid.shape
    fields = []
    for j in range(3):
        t = operators.grad(ops, u[j])
        t[j] += 1.0
        fields.append(t.reshape(shape))
    return fields


def solve_primal_all(
    grid: PeriodicGrid,
    coeff: CoefficientField,
    config: SolverConfig | None = None,
    ops: DerivativeOperators | None = None,
    threads: int | None = None,
) -> PrimalSolution:
    """Solve the three corrector problems and assemble the upper bound."""
    config = config or SolverConfig()
    ops = ops or build_derivative_operators(grid)
    threads = _resolve_threads(threads)

    def solve(j: int) -> SolveOutcome:
        b = operators.rhs_primal(ops, coeff, _EYE3[j])
        return cg(lambda v: operators.apply_primal(ops, coeff, v), b, config)

    outcomes = _map_directions(solve, threads)
    u = np.stack([o.x for o in outcomes])
    fields = _total_gradients(ops, coeff, u)
    a_star = _symmetrized(_energy_matrix(coeff.comps, fields), "upper bound")
    return PrimalSolution(
        u=u,
        iterations=np.array([o.iterations for o in outcomes]),
        a_star=a_star,
        rel_residuals=np.array([o.rel_residual for o in outcomes]),
    )


def _check_mean_free(fields, what: str, tol: float = 1e-12) -> None:
    for f in fields:
        w = f.reshape(3, -1)
        scale = max(np.abs(w).max(), 1.0)
        worst = np.abs(w.mean(axis=1)).max()
        if worst > tol * scale:
            raise RuntimeError(
                f"{what} lost the zero-mean property: mean {worst:.3e} at scale {scale:.3e}"
            )


def solve_dual_all(
    grid: PeriodicGrid,
    coeff: CoefficientField,
    config: SolverConfig | None = None,
    ops: DerivativeOperators | None = None,
    threads: int | None = None,
) -> DualSolution:
    """Solve the three dual flux problems and assemble the lower bound."""
    config = config or SolverConfig()
    ops = ops or build_derivative_operators(grid)
    threads = _resolve_threads(threads)

    def solve(j: int) -> SolveOutcome:
        b = operators.rhs_dual(ops, coeff, _EYE3[j])
        return cg(lambda v: operators.apply_dual(ops, coeff, v), b, config)

    outcomes = _map_directions(solve, threads)
    psi = np.stack([o.x for o in outcomes])
    curls = [operators.curl(ops, psi[j]) for j in range(3)]
    _check_mean_free(curls, "dual curl field")
    fields = []
    for j in range(3):
        w = curls[j].copy()
        w[j] += 1.0
        fields.append(w)
    b_star = _symmetrized(_energy_matrix(coeff.inv_comps, fields), "dual energy matrix")
    bound = _symmetrized(_spd_inverse(b_star, "dual energy matrix"), "dual bound")
    return DualSolution(
        psi=psi,
        iterations=np.array([o.iterations for o in outcomes]),
        b_star=b_star,
        bound=bound,
        rel_residuals=np.array([o.rel_residual for o in outcomes]),
    )


class FftProjector:
    """L2 projector onto the curl space, diagonalized by the DFT.

    The normal equations curl^T curl psi = curl^T g couple only equal
    frequencies because the mesh and quadrature are translation invariant.
    Per frequency the 3x3 Hermitian block is sum_t (|d_t|^2 I - d_t d_t^H)
    with d_t the symbol triple of the derivative operators on tet type t;
    its eigendecomposition is precomputed once and pseudo-inverted with a
    global relative cutoff so the all-ones kernels drop out cleanly.
    """

    def __init__(
        self,
        grid: PeriodicGrid,
        ops: DerivativeOperators | None = None,
        cutoff: float = 1e-12,
    ):
        self.grid = grid
        self.ops = ops or build_derivative_operators(grid)
        n3, n2, n1 = grid.shape
        f3 = np.arange(n3).reshape(-1, 1, 1) / n3
        f2 = np.arange(n2).reshape(1, -1, 1) / n2
        f1 = np.arange(n1).reshape(1, 1, -1) / n1
        # phase of the shift to corner c = (dx, dy, dz)
        phases = np.empty((8, n3, n2, n1), dtype=np.complex128)
        for c in range(8):
            dx, dy, dz = c & 1, (c >> 1) & 1, (c >> 2) & 1
            phases[c] = np.exp(2j * np.pi * (f1 * dx + f2 * dy + f3 * dz))
        c_jt = self.ops.tables.c_jt  # (18, 8), rows j*6 + t
        d = (c_jt @ phases.reshape(8, -1)).reshape(3, 6, n3, n2, n1)
        d = np.ascontiguousarray(d.transpose(2, 3, 4, 1, 0))  # (..., tet, comp)
        norm2 = np.einsum("...tm,...tm->...", d, d.conj()).real
        outer = np.einsum("...tm,...tn->...mn", d, d.conj())
        m = norm2[..., None, None] * np.eye(3) - outer
        m = 0.5 * (m + np.conj(np.swapaxes(m, -1, -2)))
        w, v = np.linalg.eigh(m)
        w_max = w.max()
        self._inv_w = np.where(w > cutoff * w_max, 1.0 / np.where(w > 0, w, 1.0), 0.0)
        self._v = v

    def project(self, field: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Project an element field; returns (potentials, projected field).

        The projected field is evaluated as curl of the potentials in real
        space, so membership in the curl space holds by construction.
        """
        ops = self.ops
        shape = self.grid.shape
        s = operators.curl_transpose(ops, field)
        r_hat = np.fft.fftn(s, axes=(1, 2, 3))
        r_pt = r_hat.transpose(1, 2, 3, 0)
        y = np.einsum("...nm,...n->...m", self._v.conj(), r_pt)
        y *= self._inv_w
        psi_pt = np.einsum("...mn,...n->...m", self._v, y)
        psi_hat = psi_pt.transpose(3, 0, 1, 2)
        psi_hat[:, 0, 0, 0] = 0.0
        psi = np.real(np.fft.ifftn(psi_hat, axes=(1, 2, 3)))
        psi = np.ascontiguousarray(psi)
        return psi.reshape(3, -1), operators.curl(ops, psi)


def fft_project(
    grid: PeriodicGrid, field: np.ndarray, ops: DerivativeOperators | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """One-shot L2 projection of an element field onto the curl space."""
    return FftProjector(grid, ops).project(field)


def project_cg(
    grid: PeriodicGrid,
    field: np.ndarray,
    config: SolverConfig | None = None,
    ops: DerivativeOperators | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """CG fallback for the same projection, via the normal equations."""
    ops = ops or build_derivative_operators(grid)
    config = config or SolverConfig()
    field = np.asarray(field, dtype=np.float64).reshape((3, 6) + grid.shape)
    b = operators.strip_null_noise(
        ops,
        operators.curl_transpose(ops, field).reshape(3, -1),
        float(np.abs(field).max()),
    )
    outcome = cg(
        lambda v: operators.curl_transpose(
            ops, operators.curl(ops, v.reshape((3,) + grid.shape))
        ).ravel(),
        b,
        config,
    )
    psi = outcome.x.reshape((3,) + grid.shape)
    return outcome.x.reshape(3, -1).copy(), operators.curl(ops, psi)


def algorithm2(
    grid: PeriodicGrid,
    coeff: CoefficientField,
    primal: PrimalSolution,
    ops: DerivativeOperators | None = None,
    projector: FftProjector | None = None,
    use_cg: bool = False,
    config: SolverConfig | None = None,
) -> ProjectedDual:
    """Projection shortcut to a lower bound, reusing the primal correctors.

    For each direction the candidate flux alpha_j + w~_j uses
    alpha_j = A*_h e_j and w~_j = the L2 projection of the flux residual
    A (e_j + grad u_j) - A*_h e_j onto the curl space.  Because the w~_j are
    honest members of the divergence-free space and the alpha_j span R^3,
    the assembled complementary energy G yields the guaranteed lower bound
    A*_h G^{-1} A*_h regardless of how sharp the correctors were.
    """
    ops = ops or build_derivative_operators(grid)
    a_t = primal.a_star
    a_t_inv = _spd_inverse(a_t, "upper bound")
    if not use_cg and projector is None:
        projector = FftProjector(grid, ops)
    fields = _total_gradients(ops, coeff, primal.u)
    psi_all = []
    w_all = []
    for j in range(3):
        residual = _sym3.matvec(coeff.comps, fields[j])
        residual -= a_t[:, j][:, None, None, None, None]
        if use_cg:
            psi, w = project_cg(grid, residual, config, ops)
        else:
            psi, w = projector.project(residual)
        psi_all.append(psi)
        w_all.append(w)
    _check_mean_free(w_all, "projected field")
    candidates = []
    for j in range(3):
        c = w_all[j].copy()
        c += a_t[:, j][:, None, None, None, None]
        candidates.append(c)
    g = _symmetrized(_energy_matrix(coeff.inv_comps, candidates), "projected energy matrix")
    g_inv = _spd_inverse(g, "projected energy matrix")
    b_tilde = _symmetrized(a_t_inv @ g @ a_t_inv, "projected dual matrix")
    bound = _symmetrized(a_t @ g_inv @ a_t, "projected bound")
    return ProjectedDual(
        psi=np.stack(psi_all), g_matrix=g, b_tilde=b_tilde, bound=bound
    )


def run_bounds(
    grid: PeriodicGrid,
    coeff: CoefficientField,
    config: SolverConfig | None = None,
    *,
    skip_dual: bool = False,
    dual_only: bool = False,
    fallback_projection: bool = False,
    threads: int | None = None,
    ops: DerivativeOperators | None = None,
) -> BoundsResult:
    """Full pipeline: primal bound, then one or both lower-bound routes.

    ``skip_dual`` drops the iterative dual solves (projection route only);
    ``dual_only`` drops the projection route.  The primal problem always
    runs since both routes consume its correctors.
    """
    if coeff.grid != grid:
        raise ValueError("coefficient field was built for a different grid")
    if skip_dual and dual_only:
        raise ValueError("skip_dual and dual_only exclude each other")
    config = config or SolverConfig()
    ops = ops or build_derivative_operators(grid)
    timings: dict[str, float] = {}

    tic = time.perf_counter()
    primal = solve_primal_all(grid, coeff, config, ops, threads)
    timings["primal"] = time.perf_counter() - tic

    dual = None
    if not skip_dual:
        tic = time.perf_counter()
        dual = solve_dual_all(grid, coeff, config, ops, threads)
        timings["dual"] = time.perf_counter() - tic

    projected = None
    if not dual_only:
        tic = time.perf_counter()
        projected = algorithm2(
            grid, coeff, primal, ops, use_cg=fallback_projection, config=config
        )
        timings["projection"] = time.perf_counter() - tic

    return BoundsResult(
        grid=grid, config=config, primal=primal, dual=dual,
        projected=projected, timings=timings,
    )
