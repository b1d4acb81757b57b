import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dlr.errors import InvalidParameters, UnstableSpectrum
from dlr.kernels import (KERNEL_BLOCK, DlrParams, DssParams, bidirectional_kernels, cast_kernel, dlr_kernel,
                         dss_exp_kernel, init_dlr, init_dss, kronecker_product, materialize_lambda,
                         prod_as_dlr, vandermonde)


def P(log_re, log_im, H=1):
    return DlrParams(np.asarray(log_re, float), np.asarray(log_im, float), np.ones((H, len(log_re)), complex))


def test_materialize_lambda_cases():
    np.testing.assert_allclose(materialize_lambda(P([0], [0])), [1.0])
    np.testing.assert_allclose(materialize_lambda(P([0], [np.pi / 2])), [1j], atol=1e-16)
    np.testing.assert_allclose(materialize_lambda(P([1], [0])), [np.exp(-1.0)])
    with pytest.raises(InvalidParameters):
        materialize_lambda(P([np.nan], [0]))


def test_dlr_kernel_hand_values():
    np.testing.assert_allclose(dlr_kernel(np.array([0.5]), np.array([2.0]), 3), [2, 1, 0.5])
    np.testing.assert_allclose(dlr_kernel(np.array([1j]), np.array([1.0]), 4), [1, 1j, -1, -1j], atol=1e-15)
    np.testing.assert_allclose(dlr_kernel(np.array([1, -1]), np.array([0.5, 0.5]), 4), [1, 0, 1, 0])


def test_unstable_spectrum_rejected():
    with pytest.raises(UnstableSpectrum):
        dlr_kernel(np.array([1.01]), np.array([1.0]), 4)
    # a single tap never raises the spectrum to a power
    np.testing.assert_allclose(dlr_kernel(np.array([3.0]), np.array([1.0]), 1), [1.0])


def test_cast_modes():
    z = np.array([[1 + 2j]])
    assert cast_kernel(z, "real")[0, 0] == 1
    assert cast_kernel(z, "prod")[0, 0] == 2
    np.testing.assert_allclose(cast_kernel(dlr_kernel(np.array([1j]), np.array([[1.0]]), 2), "prod"), [[0, 0]],
                               atol=1e-16)


def test_bidirectional_kernels(rng):
    f = init_dlr(8, 3, seed=1)
    b = DlrParams(f.log_re, f.log_im, np.zeros_like(f.W))
    Kf, Kb = bidirectional_kernels(f, b, 8)
    assert np.all(Kb == 0)
    Kf, Kb = bidirectional_kernels(f, f, 8)
    np.testing.assert_array_equal(Kf, Kb)
    g = init_dlr(8, 3, seed=2)
    Kf, Kb = bidirectional_kernels(f, g, 8)
    np.testing.assert_array_equal(Kf, dlr_kernel(materialize_lambda(f), f.W, 8).real)
    np.testing.assert_array_equal(Kb, dlr_kernel(materialize_lambda(g), g.W, 8).real)
    with pytest.raises(ValueError):
        bidirectional_kernels(f, init_dlr(8, 2, seed=3), 8)


def test_kronecker_hand_example():
    lam, w = kronecker_product((0.5, 1), (0.5j, 2))
    np.testing.assert_allclose(lam, [0.25j])
    np.testing.assert_allclose(w, [2])
    k = np.arange(4)
    np.testing.assert_allclose(dlr_kernel(lam, w, 4), 0.5**k * (2 * (0.5j) ** k))
    ones = dlr_kernel(*kronecker_product((np.array([0.3, 0.9j]), np.array([1, 2])), (1, 1)), 5)
    np.testing.assert_allclose(ones, dlr_kernel(np.array([0.3, 0.9j]), np.array([1, 2]), 5))
    assert kronecker_product((np.ones(2), np.ones(2)), (np.ones(3), np.ones(3)))[0].shape == (6,)


def test_prod_kernel_is_a_dlr(rng):
    lam = np.exp(-rng.random(6) + 2j * np.pi * rng.random(6))
    w = rng.normal(size=6) + 1j * rng.normal(size=6)
    K = dlr_kernel(lam, w, 40)
    lam2, w2 = prod_as_dlr(lam, w)
    assert lam2.size <= 4 * 6**2
    np.testing.assert_allclose(dlr_kernel(lam2, w2, 40), K.real * K.imag, atol=1e-12)


def test_dss_exp_kernel():
    p = DssParams(np.array([-np.log(2) + 0j]), np.array([[1 + 0j]]), np.array([0.0]))
    np.testing.assert_allclose(dss_exp_kernel(p, 1), [[(0.5 - 1) / -np.log(2)]])
    # first tap of the zero-order hold is delta * w to first order
    p = DssParams(np.array([-1 + 0j]), np.array([[1 + 0j]]), np.array([np.log(1e-6)]))
    assert abs(dss_exp_kernel(p, 1)[0, 0] - 1e-6) < 1e-11
    p = DssParams(np.array([-1 + 0j]), np.array([[0j]]), np.array([0.3]))
    assert np.all(dss_exp_kernel(p, 6) == 0)
    with pytest.raises(InvalidParameters):
        dss_exp_kernel(DssParams(np.array([0j]), np.array([[1 + 0j]]), np.array([0.0])), 2)


def test_init_dlr():
    p = init_dlr(4, 2, seed=0)
    np.testing.assert_allclose(p.log_im, [0, np.pi / 2, np.pi, 3 * np.pi / 2])
    assert np.all((p.log_re >= np.sqrt(0.0005 / 2) - 1e-12) & (p.log_re <= 0.5 + 1e-12))
    z = init_dlr(4, 2, seed=0, scheme="zero_re")
    np.testing.assert_allclose(materialize_lambda(z), [1, 1j, -1, -1j], atol=1e-15)
    q = init_dlr(4, 2, seed=0)
    assert np.array_equal(p.W, q.W) and np.array_equal(p.log_re, q.log_re)


def test_init_dlr_weight_scale():
    p = init_dlr(64, 200, seed=3)
    assert abs(p.W.real.std() * 64 - 1) < 0.05 and abs(p.W.imag.std() * 64 - 1) < 0.05


def test_init_dss():
    p = init_dss(2, 3, seed=0, dt_min=0.01, dt_max=0.01)
    np.testing.assert_allclose(p.lam, [-0.5, -0.5 + 2j * np.pi])
    np.testing.assert_allclose(np.exp(p.log_delta), 0.01)
    q = init_dss(2, 3, seed=0, dt_min=0.01, dt_max=0.01)
    assert np.array_equal(p.W, q.W)
    with pytest.raises(ValueError):
        init_dss(2, 3, seed=0, dt_min=0.1, dt_max=0.01)


@settings(max_examples=25, deadline=None)
@given(N=st.integers(1, 8), L=st.integers(1, 64), seed=st.integers(0, 2**16))
def test_prefix_consistency_and_bound(N, L, seed):
    r = np.random.default_rng(seed)
    lam = r.random(N) * np.exp(2j * np.pi * r.random(N))
    W = r.normal(size=(2, N)) + 1j * r.normal(size=(2, N))
    K = dlr_kernel(lam, W, L)
    Lp = int(r.integers(1, L + 1))
    # BLAS may reorder the N-term reduction with matrix width, so allow rounding-level slack
    np.testing.assert_allclose(K[:, :Lp], dlr_kernel(lam, W, Lp), rtol=1e-14, atol=1e-15)
    assert np.all(np.abs(K) <= np.abs(W).sum(axis=1, keepdims=True) + 1e-12)


@settings(max_examples=25, deadline=None)
@given(M=st.integers(1, 8), N=st.integers(1, 8), L=st.integers(1, 64), seed=st.integers(0, 2**16))
def test_kronecker_kernel_identity(M, N, L, seed):
    r = np.random.default_rng(seed)
    a = (r.random(M) * np.exp(2j * np.pi * r.random(M)), r.normal(size=M) + 1j * r.normal(size=M))
    b = (r.random(N) * np.exp(2j * np.pi * r.random(N)), r.normal(size=N) + 1j * r.normal(size=N))
    prod = dlr_kernel(*kronecker_product(a, b), L)
    np.testing.assert_allclose(prod, dlr_kernel(*a, L) * dlr_kernel(*b, L), atol=1e-10)


@pytest.mark.parametrize("N", [4, 64, 1024])
def test_dft_grid_vandermonde_is_unitary_up_to_scale(N):
    lam = materialize_lambda(init_dlr(N, 1, seed=0, scheme="zero_re"))
    Pm = vandermonde(lam, N)
    np.testing.assert_allclose(Pm @ Pm.conj().T / N, np.eye(N), atol=1e-10)


def test_blocked_long_kernel(rng):
    N, L = 6, 2 * KERNEL_BLOCK + 37
    lam = (0.999 + 0.001 * rng.random(N)) * np.exp(2j * np.pi * rng.random(N))
    W = rng.normal(size=(3, N)) + 1j * rng.normal(size=(3, N))
    K = dlr_kernel(lam, W, L)
    direct = W @ (lam[:, None] ** np.arange(L))
    np.testing.assert_allclose(K, direct, atol=1e-11)
    np.testing.assert_allclose(K[:, : KERNEL_BLOCK + 5], dlr_kernel(lam, W, KERNEL_BLOCK + 5), rtol=1e-14, atol=1e-15)
