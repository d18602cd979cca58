"""Matrix-free operators against dense assembly, adjointness, and structure."""

import numpy as np
import pytest

from homogbound import kernels
from homogbound._sym3 import matvec, to_dense
from homogbound.coefficients import constant_field, example1_field
from homogbound.grid import build_grid
from homogbound.operators import (
    Q1,
    Q2,
    Q3,
    apply_dual,
    apply_primal,
    build_derivative_operators,
    curl,
    curl_transpose,
    dense_views,
    grad,
    grad_transpose,
    rhs_dual,
    rhs_primal,
)


@pytest.fixture
def small():
    g = build_grid(2, 2, 2, 1.0, 0.8, 1.3)
    return g, build_derivative_operators(g)


@pytest.fixture
def backends():
    saved = kernels.current_backend()
    yield kernels.available_backends()
    kernels.set_backend(saved)


def test_grad_matches_dense(small):
    g, ops = small
    views = dense_views(ops)
    rng = np.random.default_rng(1)
    u = rng.standard_normal(g.n_vox)
    got = grad(ops, u).reshape(3, g.n_ele)
    for j in range(3):
        assert np.allclose(got[j], views.d_blocks[j] @ u, atol=1e-13)


def test_curl_matches_dense(small):
    g, ops = small
    views = dense_views(ops)
    rng = np.random.default_rng(2)
    psi = rng.standard_normal(3 * g.n_vox)
    got = curl(ops, psi).ravel()
    assert np.allclose(got, views.d_curl @ psi, atol=1e-13)


def test_curl_matches_skew_generators(small):
    # D_curl psi = Q3 (grad psi_1) + Q2 (grad psi_2) + Q1 (grad psi_3)
    g, ops = small
    rng = np.random.default_rng(3)
    psi = rng.standard_normal((3,) + g.shape)
    parts = [grad(ops, psi[c]) for c in range(3)]
    want = (
        np.einsum("ab,b...->a...", Q3, parts[0])
        + np.einsum("ab,b...->a...", Q2, parts[1])
        + np.einsum("ab,b...->a...", Q1, parts[2])
    )
    assert np.allclose(curl(ops, psi), want, atol=1e-13)


def test_adjoint_identities(small):
    g, ops = small
    rng = np.random.default_rng(4)
    u = rng.standard_normal(g.n_vox)
    f = rng.standard_normal((3, 6) + g.shape)
    lhs = np.vdot(grad(ops, u), f)
    rhs = np.vdot(u, grad_transpose(ops, f).ravel())
    assert abs(lhs - rhs) < 1e-12 * abs(lhs)
    psi = rng.standard_normal(3 * g.n_vox)
    lhs = np.vdot(curl(ops, psi), f)
    rhs = np.vdot(psi, curl_transpose(ops, f).ravel())
    assert abs(lhs - rhs) < 1e-12 * max(1.0, abs(lhs))


def test_constants_in_kernel(small):
    g, ops = small
    assert np.abs(grad(ops, np.ones(g.n_vox))).max() < 1e-14
    assert np.abs(curl(ops, np.ones(3 * g.n_vox))).max() < 1e-14
    const = np.ones((3, 6) + g.shape)
    # column sums vanish: the adjoint of a constant element field is zero
    assert np.abs(grad_transpose(ops, const)).max() < 1e-13
    assert np.abs(curl_transpose(ops, const)).max() < 1e-13


def test_curl_component_means_vanish(small):
    g, ops = small
    rng = np.random.default_rng(5)
    psi = rng.standard_normal(3 * g.n_vox)
    w = curl(ops, psi)
    assert np.abs(w.reshape(3, -1).mean(axis=1)).max() < 1e-14


def test_helmholtz_orthogonality(small):
    g, ops = small
    rng = np.random.default_rng(6)
    u = rng.standard_normal(g.n_vox)
    psi = rng.standard_normal(3 * g.n_vox)
    inner = np.vdot(grad(ops, u), curl(ops, psi))
    scale = np.linalg.norm(grad(ops, u).ravel()) * np.linalg.norm(curl(ops, psi).ravel())
    assert abs(inner) < 1e-12 * scale


def test_first_tet_matrix_entries():
    # distinct spacings pin the 1/h_j scaling of each derivative block
    g = build_grid(2, 2, 2, 2.0, 3.0, 5.0)
    ops = build_derivative_operators(g)
    d1, d2, d3 = dense_views(ops).d_blocks
    h1, h2, h3 = g.h
    n = {(0, 0, 0): 0, (0, 0, 1): 4, (0, 1, 1): 6, (1, 1, 1): 7}
    # element 0 is the x1 <= x2 <= x3 tet of voxel 0; its hat gradients are
    # -e3, e3 - e2, e2 - e1, e1 over the vertex chain
    assert d3[0, n[(0, 0, 0)]] == pytest.approx(-1.0 / h3)
    assert d3[0, n[(0, 0, 1)]] == pytest.approx(1.0 / h3)
    assert d2[0, n[(0, 0, 1)]] == pytest.approx(-1.0 / h2)
    assert d2[0, n[(0, 1, 1)]] == pytest.approx(1.0 / h2)
    assert d1[0, n[(0, 1, 1)]] == pytest.approx(-1.0 / h1)
    assert d1[0, n[(1, 1, 1)]] == pytest.approx(1.0 / h1)
    assert d1[0, n[(0, 0, 0)]] == 0.0
    assert d3[0, n[(1, 1, 1)]] == 0.0


def test_primal_apply_matches_dense(small):
    g, ops = small
    rng = np.random.default_rng(7)
    m = np.array([[4.0, 0.5, 0.2], [0.5, 3.0, -0.3], [0.2, -0.3, 2.0]])
    coeff = constant_field(g, m)
    views = dense_views(ops)
    big_a = np.kron(m, np.eye(g.n_ele))
    k_dense = g.element_volume * views.d_grad.T @ big_a @ views.d_grad
    u = rng.standard_normal(g.n_vox)
    assert np.allclose(apply_primal(ops, coeff, u), k_dense @ u, atol=1e-12)


def test_dual_apply_matches_dense(small):
    g, ops = small
    rng = np.random.default_rng(8)
    m = np.array([[4.0, 0.5, 0.2], [0.5, 3.0, -0.3], [0.2, -0.3, 2.0]])
    coeff = constant_field(g, m)
    views = dense_views(ops)
    big = np.kron(np.linalg.inv(m), np.eye(g.n_ele))
    k_dense = g.element_volume * views.d_curl.T @ big @ views.d_curl
    psi = rng.standard_normal(3 * g.n_vox)
    assert np.allclose(apply_dual(ops, coeff, psi), k_dense @ psi, atol=1e-12)


def test_variable_coefficient_dense_agreement():
    g = build_grid(2, 2, 2, 1.0, 1.0, 1.0)
    ops = build_derivative_operators(g)
    rng = np.random.default_rng(9)
    a = rng.standard_normal((3, 3, g.n_ele))
    dense = np.einsum("abe,cbe->ace", a, a) + 3.0 * np.eye(3)[:, :, None]
    comps = np.stack(
        [dense[0, 0], dense[1, 1], dense[2, 2], dense[0, 1], dense[0, 2], dense[1, 2]]
    ).reshape(6, 6, *g.shape)
    coeff = __import__("homogbound").CoefficientField(g, comps)
    views = dense_views(ops)
    big_a = np.zeros((3 * g.n_ele, 3 * g.n_ele))
    for e in range(g.n_ele):
        for r in range(3):
            for c in range(3):
                big_a[r * g.n_ele + e, c * g.n_ele + e] = dense[r, c, e]
    k_dense = g.element_volume * views.d_grad.T @ big_a @ views.d_grad
    u = rng.standard_normal(g.n_vox)
    got = apply_primal(ops, coeff, u)
    assert np.allclose(got, k_dense @ u, atol=1e-12 * np.abs(got).max())


def test_rhs_vectors_match_dense(small):
    g, ops = small
    m = np.array([[4.0, 0.5, 0.2], [0.5, 3.0, -0.3], [0.2, -0.3, 2.0]])
    coeff = constant_field(g, m)
    views = dense_views(ops)
    for j in range(3):
        e = np.eye(3)[j]
        flux = np.tile((m @ e)[:, None], (1, g.n_ele)).ravel()
        want = -g.element_volume * views.d_grad.T @ flux
        assert np.allclose(rhs_primal(ops, coeff, e), want, atol=1e-13)
        flux = np.tile((np.linalg.inv(m) @ e)[:, None], (1, g.n_ele)).ravel()
        want = -g.element_volume * views.d_curl.T @ flux
        assert np.allclose(rhs_dual(ops, coeff, e), want, atol=1e-13)


def test_rhs_mean_free(small):
    g, ops = small
    coeff = constant_field(g, np.diag([2.0, 1.0, 3.0]))
    for j in range(3):
        assert abs(rhs_primal(ops, coeff, np.eye(3)[j]).sum()) < 1e-12
        b = rhs_dual(ops, coeff, np.eye(3)[j]).reshape(3, -1)
        assert np.abs(b.sum(axis=1)).max() < 1e-12


def test_shape_validation(small):
    g, ops = small
    with pytest.raises(ValueError, match="expected a vector"):
        grad(ops, np.zeros(g.n_vox + 1))
    with pytest.raises(ValueError, match="element field"):
        grad_transpose(ops, np.zeros(3 * g.n_ele + 3))


def test_backend_agreement(backends):
    if "cython" not in backends:
        pytest.skip("compiled kernels not installed")
    g = build_grid(3, 4, 5, 1.0, 0.8, 1.3)
    ops = build_derivative_operators(g)
    with pytest.warns(UserWarning):
        coeff = example1_field(g)
    rng = np.random.default_rng(10)
    u = rng.standard_normal(g.n_vox)
    psi = rng.standard_normal(3 * g.n_vox)
    f = rng.standard_normal((3, 6) + g.shape)
    results = {}
    for name in ("numpy", "cython"):
        kernels.set_backend(name)
        assert kernels.current_backend() == name
        results[name] = (
            apply_primal(ops, coeff, u),
            apply_dual(ops, coeff, psi),
            curl(ops, psi),
            curl_transpose(ops, f),
        )
    for a, b in zip(results["numpy"], results["cython"]):
        scale = np.abs(a).max()
        assert np.allclose(a, b, atol=1e-13 * max(1.0, scale))


def test_set_backend_validation():
    with pytest.raises(ValueError):
        kernels.set_backend("fortran")
