"""Coefficient sampling, symmetric-matrix helpers, and voxel file I/O."""

import numpy as np
import pytest

from homogbound import _sym3
from homogbound.coefficients import (
    CoefficientField,
    constant_field,
    element_centroids,
    example1_field,
    example2_field,
    laminate_field,
    load_voxel_file,
    save_voxel_file,
)
from homogbound.grid import build_grid, tetrahedra_of_voxel


def random_spd_comps(rng, shape):
    a = rng.standard_normal((3, 3) + shape)
    m = np.einsum("ab...,cb...->ac...", a, a) + 3.0 * np.eye(3).reshape(3, 3, *([1] * len(shape)))
    return np.stack([m[0, 0], m[1, 1], m[2, 2], m[0, 1], m[0, 2], m[1, 2]])


class TestSym3:
    def test_matvec_matches_dense(self):
        rng = np.random.default_rng(7)
        comps = rng.standard_normal((6, 5))
        v = rng.standard_normal((3, 5))
        dense = _sym3.to_dense(comps)  # (5, 3, 3)
        want = np.einsum("nab,bn->an", dense, v)
        assert np.allclose(_sym3.matvec(comps, v), want, atol=1e-14)

    def test_det_and_inv(self):
        rng = np.random.default_rng(8)
        comps = random_spd_comps(rng, (40,))
        dense = _sym3.to_dense(comps)
        assert np.allclose(_sym3.det(comps), np.linalg.det(dense), rtol=1e-12)
        inv = _sym3.to_dense(_sym3.inv(comps))
        assert np.allclose(inv, np.linalg.inv(dense), rtol=1e-10)

    def test_eigvals_sorted_and_accurate(self):
        rng = np.random.default_rng(9)
        comps = random_spd_comps(rng, (200,))
        got = _sym3.eigvals(comps)
        want = np.linalg.eigvalsh(_sym3.to_dense(comps)).T
        assert np.allclose(got, want, atol=1e-9 * np.abs(want).max())
        assert np.all(np.diff(got, axis=0) >= -1e-12)

    def test_eigvals_degenerate(self):
        comps = np.array([2.0, 2.0, 2.0, 0.0, 0.0, 0.0]).reshape(6, 1)
        assert np.allclose(_sym3.eigvals(comps), 2.0)

    def test_round_trip(self):
        rng = np.random.default_rng(10)
        comps = rng.standard_normal((6, 4))
        assert np.array_equal(_sym3.from_dense(_sym3.to_dense(comps)), comps)


class TestFields:
    def test_example1_matches_pointwise_formula(self):
        g = build_grid(6)
        field = example1_field(g)
        s = lambda x: np.sign(np.sin(1.5 * x))
        for vox in (0, 57, g.n_vox - 1):
            for tet in tetrahedra_of_voxel(g, vox):
                x1, x2, x3 = tet.centroid
                want = np.array(
                    [
                        [7.0 + s(x1) * s(x2), -2.0 - s(x2) * s(x3), s(x1) * s(x2) * s(x3)],
                        [-2.0 - s(x2) * s(x3), 4.01 + s(x1) * s(x2), 0.0],
                        [s(x1) * s(x2) * s(x3), 0.0, 3.0 + s(x2) * s(x3)],
                    ]
                )
                assert np.allclose(field.matrix_at(tet.tet_type, vox), want, atol=1e-14)

    def test_example2_is_isotropic_two_phase(self):
        g = build_grid(6)
        field = example2_field(g)
        diag = field.comps[:3]
        assert np.allclose(field.comps[3:], 0.0)
        assert np.allclose(diag[0], diag[1]) and np.allclose(diag[0], diag[2])
        vals = np.unique(diag[0])
        assert np.allclose(np.sort(vals), [1.0, 3.0])

    def test_example_grid_warnings(self):
        with pytest.warns(UserWarning, match="not divisible by 3"):
            example1_field(build_grid(4))
        with pytest.warns(UserWarning, match="cell"):
            example2_field(build_grid(6, a1=1.0, a2=1.0, a3=1.0))

    def test_constant_field(self):
        g = build_grid(2, 2, 2, 1.0, 1.0, 1.0)
        m = np.array([[3.0, 0.4, 0.2], [0.4, 2.0, -0.1], [0.2, -0.1, 1.5]])
        field = constant_field(g, m)
        assert field.is_voxel_constant()
        assert np.allclose(field.matrix_at(3, 5), m)
        with pytest.raises(ValueError, match="symmetric"):
            constant_field(g, np.array([[1.0, 0.5, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]))
        with pytest.raises(ValueError, match="positive definite"):
            constant_field(g, np.diag([1.0, -1.0, 1.0]))

    def test_spd_rejection_names_location(self):
        g = build_grid(2, 2, 2, 1.0, 1.0, 1.0)
        comps = np.ones((6, 6) + g.shape) * np.array([2.0, 2.0, 2.0, 0.0, 0.0, 0.0]).reshape(6, 1, 1, 1, 1)
        comps[3, 2, 0, 0, 1] = 5.0  # a12 too large at tet 2 of voxel 1
        with pytest.raises(ValueError) as err:
            CoefficientField(g, comps)
        assert "tet 2" in str(err.value) and "voxel 1" in str(err.value)

    def test_laminate_layout(self):
        g = build_grid(4, 4, 4, 1.0, 1.0, 1.0)
        a = np.eye(3)
        b = 3.0 * np.eye(3)
        field = laminate_field(g, 1, a, b, 0.5)
        # axis 1 varies along i (last lattice axis); first half is material a
        assert np.allclose(field.comps[0, :, :, :, :2], 1.0)
        assert np.allclose(field.comps[0, :, :, :, 2:], 3.0)
        field = laminate_field(g, 3, a, b, 0.25)
        assert np.allclose(field.comps[0, :, 0, :, :], 1.0)
        assert np.allclose(field.comps[0, :, 1:, :, :], 3.0)
        with pytest.raises(ValueError, match="interface"):
            laminate_field(g, 1, a, b, 1.0 / 3.0)
        with pytest.raises(ValueError, match="axis"):
            laminate_field(g, 0, a, b, 0.5)

    def test_element_centroids_match_geometry(self):
        g = build_grid(3, 2, 2, 1.1, 0.7, 0.9)
        cx, cy, cz = element_centroids(g)
        for vox in range(g.n_vox):
            k, j, i = np.unravel_index(vox, g.shape)
            for tet in tetrahedra_of_voxel(g, vox):
                t = tet.tet_type
                got = np.array([cx[t, k, j, i], cy[t, k, j, i], cz[t, k, j, i]])
                assert np.allclose(got, tet.centroid, atol=1e-14)

    def test_lambda_bounds(self):
        g = build_grid(6)
        field = example2_field(g)
        assert abs(field.lambda_min - 1.0) < 1e-12
        assert abs(field.lambda_max - 3.0) < 1e-12


class TestVoxelFile:
    def test_round_trip_bit_exact(self, tmp_path):
        g = build_grid(6)
        field = example2_field(g)
        path = tmp_path / "field.vox"
        save_voxel_file(field, path)
        loaded = load_voxel_file(g, path)
        assert np.array_equal(loaded.comps, field.comps)

    def test_anisotropic_round_trip(self, tmp_path):
        g = build_grid(3, 4, 5, 1.0, 2.0, 0.5)
        rng = np.random.default_rng(11)
        vox = random_spd_comps(rng, g.shape)
        comps = np.broadcast_to(vox[:, None], (6, 6) + g.shape).copy()
        field = CoefficientField(g, comps)
        path = tmp_path / "field.vox"
        save_voxel_file(field, path)
        loaded = load_voxel_file(g, path)
        assert np.array_equal(loaded.comps, field.comps)

    def test_save_rejects_subvoxel_variation(self, tmp_path):
        g = build_grid(2, 2, 2, 1.0, 1.0, 1.0)
        comps = np.ones((6, 6) + g.shape) * np.array([2.0, 2.0, 2.0, 0.0, 0.0, 0.0]).reshape(6, 1, 1, 1, 1)
        comps[0, 3, 0, 0, 0] = 2.5
        field = CoefficientField(g, comps)
        with pytest.raises(ValueError, match="varies between tetrahedra"):
            save_voxel_file(field, tmp_path / "bad.vox")

    def test_load_rejects_bad_magic(self, tmp_path):
        path = tmp_path / "junk.vox"
        path.write_bytes(b"NOTAVOX\n2 2 2\n1.0 1.0 1.0\n" + b"\x00" * 384)
        g = build_grid(2, 2, 2, 1.0, 1.0, 1.0)
        with pytest.raises(ValueError, match="magic"):
            load_voxel_file(g, path)

    def test_load_rejects_dimension_mismatch(self, tmp_path):
        g = build_grid(2, 2, 2, 1.0, 1.0, 1.0)
        field = constant_field(g, np.eye(3))
        path = tmp_path / "f.vox"
        save_voxel_file(field, path)
        g3 = build_grid(3, 3, 3, 1.0, 1.0, 1.0)
        with pytest.raises(ValueError) as err:
            load_voxel_file(g3, path)
        msg = str(err.value)
        assert "(2, 2, 2)" in msg and "(3, 3, 3)" in msg

    def test_load_rejects_truncated_payload(self, tmp_path):
        g = build_grid(2, 2, 2, 1.0, 1.0, 1.0)
        field = constant_field(g, np.eye(3))
        path = tmp_path / "f.vox"
        save_voxel_file(field, path)
        blob = path.read_bytes()
        path.write_bytes(blob[:-8])
        with pytest.raises(ValueError, match="payload"):
            load_voxel_file(g, path)

    def test_load_rejects_indefinite_voxel(self, tmp_path):
        g = build_grid(2, 2, 2, 1.0, 1.0, 1.0)
        payload = np.tile(np.array([1.0, 1.0, 1.0, 0.0, 0.0, 0.0]), (8, 1))
        payload[5] = [1.0, 1.0, 1.0, 2.0, 0.0, 0.0]  # a12 = 2 makes it indefinite
        header = b"HBVOX1\n2 2 2\n" + f"{g.a1!r} {g.a2!r} {g.a3!r}\n".encode()
        path = tmp_path / "bad.vox"
        path.write_bytes(header + payload.astype("<f8").tobytes())
        with pytest.raises(ValueError) as err:
            load_voxel_file(g, path)
        assert "voxel 5" in str(err.value)

    def test_load_rejects_bad_cell(self, tmp_path):
        g = build_grid(2, 2, 2, 1.0, 1.0, 1.0)
        field = constant_field(g, np.eye(3))
        path = tmp_path / "f.vox"
        save_voxel_file(field, path)
        g2 = build_grid(2, 2, 2, 1.0, 1.0, 2.0)
        with pytest.raises(ValueError, match="cell"):
            load_voxel_file(g2, path)
