"""Eigenvalue analysis, ordering certificates and report serialization.

The Loewner ordering lower <= upper is certified through the eigenvalues of
the symmetrized difference; a small negative slack proportional to the upper
bound's norm absorbs roundoff.  Reports serialize deterministically (12
significant digits, fixed key order) so repeated runs are byte-identical;
wall-clock timings are quarantined in an optional section that defaults off.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import _sym3
from .coefficients import CoefficientField, example1_field, example2_field
from .grid import PeriodicGrid, build_grid
from .homogenize import BoundsResult, run_bounds
from .krylov import SolverConfig

__all__ = [
    "eig3_sym",
    "OrderingCertificate",
    "certify_ordering",
    "BoundsReport",
    "ConvergenceStudy",
    "build_report",
    "run_convergence",
    "emit_report",
    "emit_convergence",
    "load_report",
    "load_convergence",
]

ENTRY_LABELS = ("11", "22", "33", "12", "13", "23")


def _jacobi_eig3(m: np.ndarray, sweeps: int = 50) -> np.ndarray:
    """Cyclic Jacobi rotations; robust near degenerate spectra."""
    a = m.copy()
    for _ in range(sweeps):
        off = math.sqrt(a[0, 1] ** 2 + a[0, 2] ** 2 + a[1, 2] ** 2)
        if off <= 1e-15 * max(1.0, np.abs(np.diag(a)).max()):
            break
        for p in range(2):
            for q in range(p + 1, 3):
                if a[p, q] == 0.0:
                    continue
                theta = 0.5 * (a[q, q] - a[p, p]) / a[p, q]
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                rot = np.eye(3)
                rot[p, p] = rot[q, q] = c
                rot[p, q] = s
                rot[q, p] = -s
                a = rot.T @ a @ rot
    return np.sort(np.diag(a))


def eig3_sym(matrix) -> np.ndarray:
    """Ascending eigenvalues of a symmetric 3x3 matrix.

    Uses the trigonometric closed form; near a double root, where the arccos
    derivative blows up, it switches to Jacobi rotations to keep absolute
    accuracy at the 1e-12 * ||M|| level.  Rejects matrices whose asymmetry
    exceeds 1e-9 relative and symmetrizes the rest.
    """
    m = np.asarray(matrix, dtype=float)
    if m.shape != (3, 3):
        raise ValueError(f"expected a 3x3 matrix, got shape {m.shape}")
    scale = np.abs(m).max()
    if scale > 0 and np.abs(m - m.T).max() > 1e-9 * scale:
        raise ValueError("matrix is not symmetric")
    m = 0.5 * (m + m.T)
    if scale == 0.0:
        return np.zeros(3)
    comps = _sym3.from_dense(m)
    a, b, c, d, e, f = comps
    q = (a + b + c) / 3.0
    p2 = (a - q) ** 2 + (b - q) ** 2 + (c - q) ** 2 + 2.0 * (d * d + e * e + f * f)
    p = math.sqrt(p2 / 6.0)
    if p <= 1e-12 * scale:
        return np.full(3, q)
    r = float(_sym3.det(np.stack([a - q, b - q, c - q, d, e, f]) / p)) / 2.0
    if abs(r) > 1.0 - 1e-6:
        return _jacobi_eig3(m)
    return _sym3.eigvals(comps)


@dataclass(frozen=True)
class OrderingCertificate:
    """Outcome of a Loewner comparison lower <= upper."""

    satisfied: bool
    min_eigenvalue: float  # smallest eigenvalue of upper - lower
    slack: float


def certify_ordering(lower, upper, slack: float | None = None) -> OrderingCertificate:
    """Check lower <= upper up to a roundoff slack (default 1e-9 ||upper||)."""
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    if slack is None:
        slack = 1e-9 * np.linalg.norm(upper, 2)
    gap = eig3_sym(upper - lower)
    return OrderingCertificate(
        satisfied=bool(gap[0] >= -slack), min_eigenvalue=float(gap[0]), slack=float(slack)
    )


@dataclass
class BoundsReport:
    """Serializable summary of one pipeline run."""

    grid: dict
    upper: np.ndarray
    lower_dual: np.ndarray | None
    lower_projected: np.ndarray | None
    b_star: np.ndarray | None  # dual complementary-energy matrix
    b_tilde: np.ndarray | None  # projected complementary-energy matrix
    gap_eigs: dict[str, list[float]]
    iterations: dict[str, list[int]]
    config: dict
    notes: dict
    timings: dict[str, float] = field(default_factory=dict)


@dataclass
class ConvergenceStudy:
    """Bound gaps per entry across a family of resolutions."""

    n_values: list[int]
    dofs_primal: list[int]
    dofs_dual: list[int]
    gaps_cg: np.ndarray  # (len(n), 3, 3) upper - dual lower, nan if absent
    gaps_proj: np.ndarray  # (len(n), 3, 3) upper - projected lower
    slopes_cg: dict[str, float]
    slopes_proj: dict[str, float]
    failures: list[str] = field(default_factory=list)


def build_report(result: BoundsResult) -> BoundsReport:
    g = result.grid
    gap_eigs: dict[str, list[float]] = {}
    iterations = {"primal": [int(i) for i in result.primal.iterations]}
    upper = result.primal.a_star
    lower_dual = result.dual.bound if result.dual is not None else None
    lower_proj = result.projected.bound if result.projected is not None else None
    if result.dual is not None:
        iterations["dual"] = [int(i) for i in result.dual.iterations]
        gap_eigs["upper_minus_dual"] = [float(x) for x in eig3_sym(upper - lower_dual)]
    if lower_proj is not None:
        gap_eigs["upper_minus_projected"] = [float(x) for x in eig3_sym(upper - lower_proj)]
    if lower_dual is not None and lower_proj is not None:
        gap_eigs["dual_minus_projected"] = [
            float(x) for x in eig3_sym(lower_dual - lower_proj)
        ]
    return BoundsReport(
        grid={
            "n": [g.n1, g.n2, g.n3],
            "cell": [g.a1, g.a2, g.a3],
            "dofs_primal": g.n_vox,
            "dofs_dual": 3 * g.n_vox,
        },
        upper=upper,
        lower_dual=lower_dual,
        lower_projected=lower_proj,
        b_star=result.dual.b_star if result.dual is not None else None,
        b_tilde=result.projected.b_tilde if result.projected is not None else None,
        gap_eigs=gap_eigs,
        iterations=iterations,
        config={
            "rel_tol": result.config.rel_tol,
            "max_iter": result.config.max_iter,
        },
        notes={
            "diagonal_entries": "guaranteed two-sided bounds",
            "off_diagonal_entries": "estimates",
        },
        timings=dict(result.timings),
    )


def _fmt(x: float) -> float:
    """Round to 12 significant digits for stable serialization."""
    return float(f"{float(x):.12g}")


def _matrix_payload(m: np.ndarray | None):
    if m is None:
        return None
    return [[_fmt(v) for v in row] for row in m]


def emit_report(report: BoundsReport, fmt: str = "json", include_timings: bool = False) -> str:
    """Serialize a report; identical inputs give identical bytes."""
    payload = {
        "grid": report.grid,
        "upper": _matrix_payload(report.upper),
        "lower_dual": _matrix_payload(report.lower_dual),
        "lower_projected": _matrix_payload(report.lower_projected),
        "b_star": _matrix_payload(report.b_star),
        "b_tilde": _matrix_payload(report.b_tilde),
        "gap_eigs": {k: [_fmt(v) for v in vals] for k, vals in report.gap_eigs.items()},
        "iterations": report.iterations,
        "config": report.config,
        "notes": report.notes,
    }
    if fmt == "json":
        if include_timings:
            payload["timings"] = {k: _fmt(v) for k, v in report.timings.items()}
        return json.dumps(payload, indent=2) + "\n"
    if fmt == "csv":
        out = io.StringIO()
        out.write("section,entry,value\n")
        for name in ("upper", "lower_dual", "lower_projected", "b_star", "b_tilde"):
            m = payload[name]
            if m is None:
                continue
            for (r, c), label in zip(
                ((0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)), ENTRY_LABELS
            ):
                out.write(f"{name},{label},{m[r][c]:.12g}\n")
        for key, vals in payload["gap_eigs"].items():
            for rank, v in enumerate(vals):
                out.write(f"gap_eigs.{key},{rank},{v:.12g}\n")
        for key, vals in payload["iterations"].items():
            for j, v in enumerate(vals):
                out.write(f"iterations.{key},{j},{v}\n")
        if include_timings:
            for key in sorted(report.timings):
                out.write(f"timings.{key},,{_fmt(report.timings[key]):.12g}\n")
        return out.getvalue()
    raise ValueError(f"format must be json or csv, got {fmt!r}")


def load_report(text: str) -> BoundsReport:
    """Parse the JSON emitted by :func:`emit_report`."""
    data = json.loads(text)
    def arr(x):
        return None if x is None else np.array(x, dtype=float)
    return BoundsReport(
        grid=data["grid"],
        upper=arr(data["upper"]),
        lower_dual=arr(data["lower_dual"]),
        lower_projected=arr(data["lower_projected"]),
        b_star=arr(data.get("b_star")),
        b_tilde=arr(data.get("b_tilde")),
        gap_eigs=data["gap_eigs"],
        iterations=data["iterations"],
        config=data["config"],
        notes=data["notes"],
        timings=data.get("timings", {}),
    )


_GAP_NOISE_FLOOR = 1e-9


def _fit_slopes(n_values, gaps: np.ndarray) -> dict[str, float]:
    """Least-squares slope of log(gap) vs log(N) per entry; nan when gaps
    sit at the solver noise floor (exactly representable problems have
    nothing to converge, and a log fit through roundoff is meaningless)."""
    slopes: dict[str, float] = {}
    logn = np.log(np.asarray(n_values, dtype=float))
    for (r, c), label in zip(((0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)), ENTRY_LABELS):
        g = gaps[:, r, c]
        if np.any(~np.isfinite(g)) or np.any(g <= _GAP_NOISE_FLOOR):
            slopes[label] = float("nan")
            continue
        slopes[label] = float(np.polyfit(logn, np.log(g), 1)[0])
    return slopes


def run_convergence(
    field_source,
    n_values,
    config: SolverConfig | None = None,
    cell: tuple[float, float, float] | None = None,
    *,
    include_dual: bool = True,
    fallback_projection: bool = False,
    threads: int | None = None,
    on_result=None,
) -> ConvergenceStudy:
    """Run the pipeline across resolutions and fit bound-gap slopes.

    ``field_source`` is 1 or 2 for the built-in examples, or a callable
    mapping a grid to a CoefficientField.  Per-resolution solver failures
    are recorded and the remaining resolutions still run.
    """
    n_values = [int(n) for n in n_values]
    if len(n_values) < 2:
        raise ValueError("need at least two resolutions to fit a slope")
    if any(b <= a for a, b in zip(n_values, n_values[1:])):
        raise ValueError("resolutions must be strictly increasing")
    if field_source in (1, 2):
        builder = example1_field if field_source == 1 else example2_field
    elif callable(field_source):
        builder = field_source
    else:
        raise ValueError(f"field source must be 1, 2 or a callable, got {field_source!r}")
    cell = cell or (2.0 * np.pi,) * 3

    count = len(n_values)
    gaps_cg = np.full((count, 3, 3), np.nan)
    gaps_proj = np.full((count, 3, 3), np.nan)
    dofs_p: list[int] = []
    dofs_d: list[int] = []
    failures: list[str] = []
    for idx, n in enumerate(n_values):
        grid = build_grid(n, n, n, *cell)
        dofs_p.append(grid.n_vox)
        dofs_d.append(3 * grid.n_vox)
        try:
            result = run_bounds(
                grid,
                builder(grid),
                config,
                skip_dual=not include_dual,
                fallback_projection=fallback_projection,
                threads=threads,
            )
        except Exception as exc:
            failures.append(f"N={n}: {exc}")
            continue
        if result.dual is not None:
            gaps_cg[idx] = result.primal.a_star - result.dual.bound
        gaps_proj[idx] = result.primal.a_star - result.projected.bound
        if on_result is not None:
            on_result(n, result)
    return ConvergenceStudy(
        n_values=n_values,
        dofs_primal=dofs_p,
        dofs_dual=dofs_d,
        gaps_cg=gaps_cg,
        gaps_proj=gaps_proj,
        slopes_cg=_fit_slopes(n_values, gaps_cg) if include_dual else {},
        slopes_proj=_fit_slopes(n_values, gaps_proj),
        failures=failures,
    )


def emit_convergence(study: ConvergenceStudy) -> str:
    """Delimited table of per-entry diagonal and off-diagonal bound gaps."""
    out = io.StringIO()
    out.write("N,dofs_primal,dofs_dual,entry,gap_cg,gap_proj\n")
    entries = tuple(zip(((0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)), ENTRY_LABELS))
    for idx, n in enumerate(study.n_values):
        for (r, c), label in entries:
            gc = study.gaps_cg[idx, r, c]
            gp = study.gaps_proj[idx, r, c]
            gc_s = "" if not np.isfinite(gc) else f"{_fmt(gc):.12g}"
            gp_s = "" if not np.isfinite(gp) else f"{_fmt(gp):.12g}"
            out.write(
                f"{n},{study.dofs_primal[idx]},{study.dofs_dual[idx]},{label},{gc_s},{gp_s}\n"
            )
    return out.getvalue()


def load_convergence(text: str) -> ConvergenceStudy:
    """Parse the table emitted by :func:`emit_convergence`."""
    lines = [ln for ln in text.strip().splitlines() if ln]
    header = "N,dofs_primal,dofs_dual,entry,gap_cg,gap_proj"
    if not lines or lines[0] != header:
        raise ValueError("not a convergence table")
    pos = {label: rc for rc, label in zip(((0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)), ENTRY_LABELS)}
    n_values: list[int] = []
    dofs_p: dict[int, int] = {}
    dofs_d: dict[int, int] = {}
    rows: dict[int, dict[str, tuple[float, float]]] = {}
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != 6:
            raise ValueError(f"malformed row: {ln!r}")
        n = int(parts[0])
        if n not in rows:
            n_values.append(n)
            rows[n] = {}
            dofs_p[n] = int(parts[1])
            dofs_d[n] = int(parts[2])
        gc = float(parts[4]) if parts[4] else float("nan")
        gp = float(parts[5]) if parts[5] else float("nan")
        rows[n][parts[3]] = (gc, gp)
    count = len(n_values)
    gaps_cg = np.full((count, 3, 3), np.nan)
    gaps_proj = np.full((count, 3, 3), np.nan)
    for idx, n in enumerate(n_values):
        for label, (gc, gp) in rows[n].items():
            r, c = pos[label]
            gaps_cg[idx, r, c] = gc
            gaps_cg[idx, c, r] = gc
            gaps_proj[idx, r, c] = gp
            gaps_proj[idx, c, r] = gp
    has_cg = bool(np.any(np.isfinite(gaps_cg)))
    return ConvergenceStudy(
        n_values=n_values,
        dofs_primal=[dofs_p[n] for n in n_values],
        dofs_dual=[dofs_d[n] for n in n_values],
        gaps_cg=gaps_cg,
        gaps_proj=gaps_proj,
        slopes_cg=_fit_slopes(n_values, gaps_cg) if has_cg else {},
        slopes_proj=_fit_slopes(n_values, gaps_proj),
    )
