from fractions import Fraction

import numpy as np
import pytest

from dlr.analysis import random_diagonalizable
from dlr.convolution import causal_conv
from dlr.errors import NotDiagonalizable, SingularSystem
from dlr.kernels import dlr_kernel, init_dlr, materialize_lambda
from dlr.recurrence import (LinearRnnSystem, diagonalize_to_dlr, dft_condition_number,
                            real_shift_solution, scan_dlr, scan_linear_rnn, solve_kernel_weights,
                            uniform_lambdas, vandermonde_closed_form, vandermonde_growth)


def test_scan_dlr_examples(rng):
    np.testing.assert_allclose(scan_dlr([1], [1], np.ones(3)), [1, 2, 3])
    u = rng.normal(size=9)
    np.testing.assert_allclose(scan_dlr([0], [1], u), u)


def test_scan_matches_kernel_path(rng):
    N, L = 7, 64
    lam = rng.random(N) * np.exp(2j * np.pi * rng.random(N))
    w = rng.normal(size=N) + 1j * rng.normal(size=N)
    u = rng.normal(size=L)
    K = dlr_kernel(lam, w[None], L).real
    np.testing.assert_allclose(scan_dlr(lam, w, u).real, causal_conv(u[None, None], K)[0, 0], atol=1e-9)


def test_scan_linear_rnn_examples(rng):
    u = rng.normal(size=6)
    B, C = rng.normal(size=3), rng.normal(size=3)
    np.testing.assert_allclose(scan_linear_rnn(LinearRnnSystem(np.zeros((3, 3)), B, C), u), (C @ B) * u)
    sysI = LinearRnnSystem(np.eye(3), np.ones(3), np.array([1.0, 0, 0]))
    np.testing.assert_allclose(scan_linear_rnn(sysI, u), np.cumsum(u))
    swap = LinearRnnSystem(np.array([[0.0, 1], [1, 0]]), np.array([1.0, 0]), np.array([1.0, 0]))
    imp = np.zeros(6)
    imp[0] = 1
    np.testing.assert_allclose(scan_linear_rnn(swap, imp), [1, 0, 1, 0, 1, 0])
    with pytest.raises(ValueError):
        scan_linear_rnn(swap, np.zeros(2**14 + 1))
    with pytest.raises(ValueError):
        LinearRnnSystem(np.full((1, 1), np.inf), np.ones(1), np.ones(1))


def test_diagonalize_examples(rng):
    A = np.diag([0.5, -0.2j, 0.9])
    B, C = rng.normal(size=3), rng.normal(size=3)
    lam, w = diagonalize_to_dlr(LinearRnnSystem(A, B, C))
    order = np.argsort(np.abs(lam))
    np.testing.assert_allclose(lam, np.diag(A))
    np.testing.assert_allclose(w, C * B)
    lam, w = diagonalize_to_dlr(LinearRnnSystem(np.array([[0.0, 1], [1, 0]]), np.array([1.0, 0]),
                                                np.array([1.0, 0])))
    order = np.argsort(-lam.real)
    np.testing.assert_allclose(lam[order], [1, -1], atol=1e-12)
    np.testing.assert_allclose(w[order], [0.5, 0.5], atol=1e-12)


def test_diagonalize_preserves_map(rng):
    sys = random_diagonalizable(rng, 6)
    u = rng.normal(size=32)
    lam, w = diagonalize_to_dlr(sys)
    dense = scan_linear_rnn(sys, u)
    assert np.linalg.norm(scan_dlr(lam, w, u) - dense) <= 1e-6 * np.linalg.norm(dense)


def test_defective_matrix_rejected():
    with pytest.raises(NotDiagonalizable):
        diagonalize_to_dlr(LinearRnnSystem(np.array([[1.0, 1], [0, 1]]), np.ones(2), np.ones(2)))


def test_solve_kernel_weights(rng):
    lam = materialize_lambda(init_dlr(8, 1, seed=0, scheme="zero_re"))
    imp = np.zeros(8)
    imp[0] = 1
    w, res = solve_kernel_weights(lam, imp)
    np.testing.assert_allclose(w, np.full(8, 1 / 8), atol=1e-15)
    lam = materialize_lambda(init_dlr(64, 1, seed=0, scheme="zero_re"))
    target = rng.normal(size=64)
    w, res = solve_kernel_weights(lam, target)
    assert res <= 1e-8
    np.testing.assert_allclose(dlr_kernel(lam, w[None], 64)[0], target, atol=1e-8)
    # N=2 over the basis (lam, lam^2): shift the exponent by dividing the solved w by lam
    lam = np.array([1 / 3, 2 / 3])
    w, _ = solve_kernel_weights(lam, np.array([0.0, 1.0]))
    np.testing.assert_allclose(w / lam, [-9, 4.5], atol=1e-12)
    with pytest.raises(SingularSystem):
        solve_kernel_weights(np.array([0.5, 0.5]), np.array([0.0, 1.0]))
    with pytest.raises(ValueError):
        solve_kernel_weights(lam, np.zeros(3))


def test_real_shift_solution_examples():
    s = real_shift_solution([0.5])
    assert s.w == [Fraction(2)] and s.residual == 0
    s = real_shift_solution([Fraction(1, 3), Fraction(2, 3)])
    assert s.w == [Fraction(-9), Fraction(9, 2)] and s.solution_norm == 9
    with pytest.raises(SingularSystem):
        real_shift_solution([0.5, 0.5])
    with pytest.raises(ValueError):
        real_shift_solution([0.0, 0.5])


def test_double_precision_path_agrees_for_small_n():
    exact = real_shift_solution(uniform_lambdas(4))
    approx = real_shift_solution([float(x) for x in uniform_lambdas(4)], exact_max_n=0)
    assert not approx.exact
    np.testing.assert_allclose(approx.solution_norm, exact.solution_norm, rtol=1e-8)


# frozen from the exact rational solves
NORMS = {2: 4.0, 3: 13.5, 4: 64.0, 5: 260.41666666666669, 6: 1296.0}


def test_growth_table():
    studies = vandermonde_growth(range(2, 17))
    norms = [s.solution_norm for s in studies]
    assert all(b > a for a, b in zip(norms, norms[1:]))
    assert studies[12 - 2].solution_norm >= 1e3
    assert all(s.residual == 0 for s in studies)
    for s in studies[:5]:
        assert s.solution_norm == pytest.approx(NORMS[s.N], rel=1e-12)
    logs = np.log([s.solution_norm for s in studies[2:]])
    assert np.all(np.diff(logs) > 0.9)


def test_closed_form_matches_up_to_sign_and_rescale():
    for n in range(2, 9):
        lam = uniform_lambdas(n)
        w = real_shift_solution(lam).w
        closed = vandermonde_closed_form(lam)
        assert [(-1) ** n * c / l for c, l in zip(closed, lam)] == w


@pytest.mark.parametrize("N", [8, 64, 1024])
def test_dft_conditioning(N):
    assert dft_condition_number(N) == pytest.approx(1.0, abs=1e-8)
