"""Command-line interface.

Three subcommands share the grid and field-selection flags:

* ``run``      -- compute bounds at one resolution and write a report;
* ``converge`` -- sweep resolutions, emit the gap table and fitted slopes;
* ``verify``   -- run the structural invariant suite.

Exit codes: 0 success, 2 certificate or invariant violation, 1 solver or
input error.  An optional JSON config file supplies defaults for any flag
(keys are the long flag names with underscores); explicit flags win.  Output
files are written atomically.  The environment variable HOMOGBOUND_THREADS
caps how many corrector directions run concurrently.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .analysis import (
    build_report,
    certify_ordering,
    emit_convergence,
    emit_report,
    run_convergence,
)
from .coefficients import (
    CoefficientField,
    example1_field,
    example2_field,
    laminate_field,
    load_voxel_file,
)
from .grid import PeriodicGrid, build_grid
from .homogenize import BoundsResult, run_bounds
from .krylov import SolverConfig, SolverError
from .verify import verify_invariants

__all__ = ["main"]

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_VIOLATION = 2


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; our contract reserves 2 for
    certificate violations, so remap to the input-error code."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="homogbound", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", metavar="PATH", help="JSON file with flag defaults")
        p.add_argument("--example", type=int, choices=(1, 2), help="built-in example field")
        p.add_argument(
            "--laminate",
            metavar="AX,FRAC[,A11,A22,A33,B11,B22,B33]",
            help="two-phase layering normal to axis AX with phase-a fraction FRAC "
            "(diagonal materials, defaults identity and 3x identity)",
        )
        p.add_argument("--coeff-file", metavar="PATH", help="voxel coefficient file")
        p.add_argument("--n", type=int, help="voxels per axis (default 24)")
        p.add_argument("--n1", type=int, help="voxels along x")
        p.add_argument("--n2", type=int, help="voxels along y")
        p.add_argument("--n3", type=int, help="voxels along z")
        p.add_argument("--cell", metavar="A1,A2,A3", help="cell extents (default 2*pi each)")
        p.add_argument("--tol", type=float, help="CG relative tolerance (default 1e-9)")
        p.add_argument("--max-iter", type=int, help="CG iteration cap")

    run_p = sub.add_parser("run", help="compute bounds at one resolution")
    add_common(run_p)
    run_p.add_argument("--skip-dual", action="store_true", default=None,
                       help="skip the iterative dual solve (projection route only)")
    run_p.add_argument("--dual-only", action="store_true", default=None,
                       help="skip the projection route")
    run_p.add_argument("--fallback-projection", action="store_true", default=None,
                       help="project with CG normal equations instead of FFT")
    run_p.add_argument("--out", metavar="PATH", help="report file (default stdout)")
    run_p.add_argument("--format", choices=("json", "csv"), help="report format")

    conv_p = sub.add_parser("converge", help="sweep resolutions and fit gap slopes")
    add_common(conv_p)
    conv_p.add_argument("--n-list", metavar="L", help="comma-separated resolutions")
    conv_p.add_argument("--fallback-projection", action="store_true", default=None,
                        help="project with CG normal equations instead of FFT")
    conv_p.add_argument("--out", metavar="PATH", help="table file (default stdout)")

    ver_p = sub.add_parser("verify", help="run the structural invariant suite")
    ver_p.add_argument("--n", type=int, help="voxels per axis (default 6)")
    ver_p.add_argument("--curl-sign-flip", action="store_true", help=argparse.SUPPRESS)
    return parser


class _Options:
    """Flag values merged over config-file values merged over defaults."""

    def __init__(self, args: argparse.Namespace):
        self._args = vars(args)
        self._file = {}
        path = self._args.get("config")
        if path:
            with open(path) as fh:
                data = json.load(fh)
            if not isinstance(data, dict):
                raise ValueError(f"{path}: config must be a JSON object")
            self._file = data

    def get(self, name, default=None):
        v = self._args.get(name)
        if v is not None:
            return v
        v = self._file.get(name)
        if v is not None:
            return v
        return default

    def given(self, name) -> bool:
        return self._args.get(name) is not None or name in self._file


def _parse_floats(text: str, what: str) -> list[float]:
    try:
        return [float(v) for v in str(text).split(",")]
    except ValueError:
        raise ValueError(f"cannot parse {what} {text!r}") from None


def _grid_from(opt: _Options) -> PeriodicGrid:
    n = int(opt.get("n", 24))
    n1 = int(opt.get("n1", n))
    n2 = int(opt.get("n2", n))
    n3 = int(opt.get("n3", n))
    cell = opt.get("cell")
    if cell is None:
        a1 = a2 = a3 = 2.0 * np.pi
    else:
        if isinstance(cell, (list, tuple)):
            vals = [float(v) for v in cell]
        else:
            vals = _parse_floats(cell, "--cell")
        if len(vals) == 1:
            vals = vals * 3
        if len(vals) != 3:
            raise ValueError("--cell needs one or three comma-separated lengths")
        a1, a2, a3 = vals
    return build_grid(n1, n2, n3, a1, a2, a3)


def _field_from(opt: _Options, grid: PeriodicGrid) -> CoefficientField:
    sources = [s for s in ("example", "laminate", "coeff_file") if opt.given(s)]
    if len(sources) > 1:
        raise ValueError(f"exactly one field source allowed, got {', '.join(sources)}")
    source = sources[0] if sources else "example"
    if source == "example":
        ex = int(opt.get("example", 1))
        return example1_field(grid) if ex == 1 else example2_field(grid)
    if source == "coeff_file":
        return load_voxel_file(grid, opt.get("coeff_file"))
    spec = opt.get("laminate")
    vals = [float(v) for v in spec] if isinstance(spec, (list, tuple)) else _parse_floats(spec, "--laminate")
    if len(vals) not in (2, 8):
        raise ValueError("--laminate needs AX,FRAC or AX,FRAC plus six diagonal values")
    axis = int(vals[0])
    frac = vals[1]
    if len(vals) == 8:
        mat_a = np.diag(vals[2:5])
        mat_b = np.diag(vals[5:8])
    else:
        mat_a = np.eye(3)
        mat_b = 3.0 * np.eye(3)
    return laminate_field(grid, axis, mat_a, mat_b, frac)


def _solver_config(opt: _Options) -> SolverConfig:
    max_iter = opt.get("max_iter")
    return SolverConfig(
        rel_tol=float(opt.get("tol", 1e-9)),
        max_iter=None if max_iter is None else int(max_iter),
    )


def _write_atomic(path: str, text: str) -> None:
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _fmt_matrix(m: np.ndarray) -> str:
    rows = ["    [" + "  ".join(f"{v: .6f}" for v in row) + "]" for row in m]
    return "\n".join(rows)


def _certificates(result: BoundsResult) -> list[tuple[str, object]]:
    """Loewner-chain certificates applicable to the routes that ran."""
    upper = result.primal.a_star
    slack = 1e-9 * np.linalg.norm(upper, 2)
    certs = []
    if result.dual is not None:
        certs.append(
            ("lower_dual <= upper", certify_ordering(result.dual.bound, upper, slack))
        )
    if result.projected is not None:
        certs.append(
            ("lower_projected <= upper", certify_ordering(result.projected.bound, upper, slack))
        )
    if result.dual is not None and result.projected is not None:
        certs.append(
            (
                "lower_projected <= lower_dual",
                certify_ordering(result.projected.bound, result.dual.bound, slack),
            )
        )
    return certs


def _cmd_run(opt: _Options) -> int:
    grid = _grid_from(opt)
    field = _field_from(opt, grid)
    config = _solver_config(opt)
    result = run_bounds(
        grid,
        field,
        config,
        skip_dual=bool(opt.get("skip_dual", False)),
        dual_only=bool(opt.get("dual_only", False)),
        fallback_projection=bool(opt.get("fallback_projection", False)),
    )
    report = build_report(result)
    doc = emit_report(report, fmt=opt.get("format", "json"), include_timings=True)
    out = opt.get("out")
    if out:
        _write_atomic(out, doc)
        print(f"report written to {out}")
    else:
        print(doc, end="")

    print(f"grid {grid.n1}x{grid.n2}x{grid.n3}, "
          f"{grid.n_vox} primal / {3 * grid.n_vox} dual unknowns")
    print("upper bound A*_h:")
    print(_fmt_matrix(result.primal.a_star))
    print(f"  primal CG iterations: {[int(k) for k in result.primal.iterations]}")
    if result.dual is not None:
        print("lower bound from dual solve:")
        print(_fmt_matrix(result.dual.bound))
        print(f"  dual CG iterations: {[int(k) for k in result.dual.iterations]}")
    if result.projected is not None:
        print("lower bound from projection (no CG iterations):")
        print(_fmt_matrix(result.projected.bound))
    status = EXIT_OK
    for name, cert in _certificates(result):
        verdict = "certified" if cert.satisfied else "VIOLATED"
        print(f"  {name}: {verdict} (min gap eigenvalue {cert.min_eigenvalue:.3e}, "
              f"slack {cert.slack:.3e})")
        if not cert.satisfied:
            status = EXIT_VIOLATION
    return status


def _cmd_converge(opt: _Options) -> int:
    n_list = opt.get("n_list")
    if n_list is None:
        raise ValueError("--n-list is required for converge")
    if isinstance(n_list, (list, tuple)):
        n_values = [int(v) for v in n_list]
    else:
        n_values = [int(v) for v in str(n_list).split(",")]
    if len(n_values) < 2:
        raise ValueError("--n-list needs at least two resolutions")
    opt_example = opt.get("example")
    sources = [s for s in ("example", "laminate", "coeff_file") if opt.given(s)]
    if "coeff_file" in sources:
        raise ValueError("converge regenerates the field per resolution; "
                         "voxel files are tied to one grid")
    if len(sources) > 1:
        raise ValueError(f"exactly one field source allowed, got {', '.join(sources)}")
    if "laminate" in sources:
        def source(grid):
            return _field_from(opt, grid)
    else:
        source = 1 if opt_example in (None, 1) else 2
    cell_opt = _grid_from(opt)
    config = _solver_config(opt)

    violations: list[str] = []

    def on_result(n: int, result: BoundsResult):
        line = f"N={n}: primal iters {[int(k) for k in result.primal.iterations]}"
        if result.dual is not None:
            line += f", dual iters {[int(k) for k in result.dual.iterations]}"
        print(line)
        for name, cert in _certificates(result):
            if not cert.satisfied:
                violations.append(
                    f"N={n}: {name} violated (min gap eigenvalue {cert.min_eigenvalue:.3e})"
                )

    study = run_convergence(
        source,
        n_values,
        config,
        cell=(cell_opt.a1, cell_opt.a2, cell_opt.a3),
        fallback_projection=bool(opt.get("fallback_projection", False)),
        on_result=on_result,
    )
    table = emit_convergence(study)
    out = opt.get("out")
    if out:
        _write_atomic(out, table)
        print(f"table written to {out}")
    else:
        print(table, end="")
    for label in ("11", "22", "33"):
        sc = study.slopes_cg.get(label, float("nan"))
        sp = study.slopes_proj.get(label, float("nan"))
        print(f"slope entry {label}: dual gap {sc:.3f}, projected gap {sp:.3f}")
    for msg in study.failures:
        print(f"error: {msg}", file=sys.stderr)
    for msg in violations:
        print(f"certificate: {msg}", file=sys.stderr)
    if violations:
        return EXIT_VIOLATION
    if study.failures:
        return EXIT_ERROR
    return EXIT_OK


def _cmd_verify(opt: _Options) -> int:
    n = int(opt.get("n", 6))
    results = verify_invariants(n=n, curl_sign_flip=bool(opt.get("curl_sign_flip", False)))
    for res in results:
        print(res.line())
    failed = [r for r in results if not r.passed]
    if failed:
        print(f"{len(failed)} of {len(results)} invariants failed", file=sys.stderr)
        return EXIT_VIOLATION
    print(f"all {len(results)} invariants passed")
    return EXIT_OK


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        opt = _Options(args)
        if args.command == "run":
            return _cmd_run(opt)
        if args.command == "converge":
            return _cmd_converge(opt)
        return _cmd_verify(opt)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (ValueError, OSError, SolverError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
