"""End-to-end command-line behavior and exit codes."""

import json

import numpy as np
import pytest

from homogbound.analysis import load_convergence, load_report
from homogbound.cli import main
from homogbound.coefficients import example2_field, save_voxel_file
from homogbound.grid import build_grid


def test_run_writes_report(tmp_path, capsys):
    out = tmp_path / "report.json"
    code = main(["run", "--example", "2", "--n", "6", "--skip-dual", "--out", str(out)])
    assert code == 0
    assert out.exists()
    assert not list(tmp_path.glob("*.tmp*"))
    report = load_report(out.read_text())
    assert report.lower_dual is None
    assert "dual" not in report.iterations
    assert report.grid["n"] == [6, 6, 6]
    assert abs(report.lower_projected[0, 0] - 1.7035) < 1e-3
    assert abs(report.upper[0, 0] - 1.9446) < 1e-3
    text = capsys.readouterr().out
    assert "lower_projected <= upper: certified" in text
    assert "no CG iterations" in text


def test_run_stdout_full_pipeline(capsys):
    code = main(["run", "--example", "2", "--n", "3", "--tol", "1e-6"])
    assert code == 0
    text = capsys.readouterr().out
    payload = json.loads(text[: text.index("\ngrid ") + 1])
    assert payload["lower_dual"] is not None
    assert set(payload["gap_eigs"]) == {
        "upper_minus_dual",
        "upper_minus_projected",
        "dual_minus_projected",
    }
    assert "timings" in payload
    assert "lower_dual <= upper: certified" in text
    assert "lower_projected <= lower_dual: certified" in text


def test_run_dual_only(tmp_path):
    out = tmp_path / "r.json"
    code = main(["run", "--example", "2", "--n", "3", "--dual-only",
                 "--tol", "1e-6", "--out", str(out)])
    assert code == 0
    report = load_report(out.read_text())
    assert report.lower_projected is None and report.b_tilde is None
    assert report.lower_dual is not None


def test_run_csv_format(tmp_path):
    out = tmp_path / "r.csv"
    code = main(["run", "--example", "2", "--n", "3", "--tol", "1e-6",
                 "--format", "csv", "--out", str(out)])
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "section,entry,value"
    assert any(ln.startswith("upper,11,") for ln in lines)
    assert any(ln.startswith("timings.") for ln in lines)


def test_run_laminate_matches_mixture_rules(tmp_path):
    out = tmp_path / "r.json"
    code = main(["run", "--laminate", "1,0.5", "--n", "4", "--cell", "1",
                 "--tol", "1e-11", "--out", str(out)])
    assert code == 0
    report = load_report(out.read_text())
    want = np.diag([1.5, 2.0, 2.0])  # harmonic and arithmetic means of 1 and 3
    assert np.allclose(report.upper, want, atol=1e-8)
    assert np.allclose(report.lower_dual, want, atol=1e-8)


def test_run_coeff_file(tmp_path):
    g = build_grid(6)
    path = tmp_path / "field.vox"
    save_voxel_file(example2_field(g), path)
    out = tmp_path / "r.json"
    code = main(["run", "--coeff-file", str(path), "--n", "6", "--skip-dual",
                 "--out", str(out)])
    assert code == 0
    report = load_report(out.read_text())
    assert abs(report.upper[0, 0] - 1.9446) < 1e-3


def test_run_coeff_file_dimension_mismatch(tmp_path, capsys):
    g = build_grid(6)
    path = tmp_path / "field.vox"
    save_voxel_file(example2_field(g), path)
    code = main(["run", "--coeff-file", str(path), "--n", "12"])
    assert code == 1
    err = capsys.readouterr().err
    assert "error:" in err and "(6, 6, 6)" in err and "(12, 12, 12)" in err


def test_run_rejects_two_sources(capsys):
    code = main(["run", "--example", "1", "--laminate", "1,0.5", "--n", "3"])
    assert code == 1
    assert "exactly one field source" in capsys.readouterr().err


def test_config_file_defaults_and_override(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"example": 2, "n": 3, "skip_dual": True, "tol": 1e-6}))
    out = tmp_path / "a.json"
    assert main(["run", "--config", str(cfg), "--out", str(out)]) == 0
    report = load_report(out.read_text())
    assert report.grid["n"] == [3, 3, 3]
    assert report.lower_dual is None
    assert report.config["rel_tol"] == pytest.approx(1e-6)
    # explicit flag wins over the config value
    out2 = tmp_path / "b.json"
    assert main(["run", "--config", str(cfg), "--n", "6", "--out", str(out2)]) == 0
    assert load_report(out2.read_text()).grid["n"] == [6, 6, 6]


def test_converge_table_and_slopes(tmp_path, capsys):
    out = tmp_path / "table.csv"
    code = main(["converge", "--example", "2", "--n-list", "3,6",
                 "--tol", "1e-8", "--out", str(out)])
    assert code == 0
    study = load_convergence(out.read_text())
    assert study.n_values == [3, 6]
    assert np.isfinite(study.gaps_cg[:, 0, 0]).all()
    text = capsys.readouterr().out
    assert "N=3: primal iters" in text
    assert "slope entry 11: dual gap" in text


def test_converge_single_resolution_usage_error(capsys):
    code = main(["converge", "--example", "2", "--n-list", "6"])
    assert code == 1
    assert "at least two" in capsys.readouterr().err


def test_converge_missing_n_list(capsys):
    code = main(["converge", "--example", "2"])
    assert code == 1
    assert "--n-list" in capsys.readouterr().err


def test_converge_rejects_coeff_file(tmp_path, capsys):
    g = build_grid(6)
    path = tmp_path / "f.vox"
    save_voxel_file(example2_field(g), path)
    code = main(["converge", "--coeff-file", str(path), "--n-list", "3,6"])
    assert code == 1
    assert "tied to one grid" in capsys.readouterr().err


def test_verify_passes(capsys):
    code = main(["verify"])
    out = capsys.readouterr().out
    assert code == 0
    assert "all" in out and "passed" in out
    assert "FAIL" not in out


def test_verify_small_grid(capsys):
    assert main(["verify", "--n", "1"]) == 0


def test_verify_detects_sign_flip(capsys):
    # the hidden hook negates one curl component, which must break the
    # orthogonality invariant by a macroscopic margin
    code = main(["verify", "--curl-sign-flip"])
    captured = capsys.readouterr()
    assert code == 2
    assert "FAIL" in captured.out
    failing = [ln for ln in captured.out.splitlines() if "FAIL" in ln]
    assert any("helmholtz" in ln for ln in failing)
    assert "invariants failed" in captured.err


def test_unknown_flag_maps_to_input_error(capsys):
    assert main(["run", "--frobnicate"]) == 1
    assert main(["run", "--format", "yaml"]) == 1
    assert main(["bogus"]) == 1


def test_missing_config_file(capsys):
    code = main(["run", "--config", "/nonexistent/cfg.json", "--n", "3"])
    assert code == 1
    assert "error:" in capsys.readouterr().err
