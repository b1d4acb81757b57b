"""Acceptance gate: one test per criterion, each printing a single PASS/FAIL line.

Criteria 7, 8 and 12 take minutes on one CPU core. Criterion 13 is an optional
long benchmark and only runs with ``DLR_EXTENDED=1``.
"""

import os
import time

import numpy as np
import pytest

from dlr.analysis import bench, random_diagonalizable
from dlr.convolution import (bidirectional_conv, causal_conv, naive_bidirectional_conv,
                             naive_causal_conv)
from dlr.kernels import dlr_kernel, init_dlr, kronecker_product, materialize_lambda
from dlr.listops import IGNORE, eval_listops_oracle, gen_listops
from dlr.model import DlrModel, ModelConfig
from dlr.pathfinder import gen_pathfinder, validate_pathfinder
from dlr.recurrence import (dft_condition_number, diagonalize_to_dlr, real_shift_solution,
                            scan_dlr, scan_linear_rnn, solve_kernel_weights, uniform_lambdas)
from dlr.tasks import derive_seed
from dlr.training import TrainConfig, Trainer, evaluate, finite_diff_check


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\n[acceptance] criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
        assert ok, f"criterion {n}: {detail}"
    return emit


def random_spectrum(rng, n):
    return rng.random(n) * np.exp(2j * np.pi * rng.random(n))


def test_01_scan_equals_fft_kernel_path(report):
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        N, L = int(rng.integers(1, 65)), int(rng.integers(1, 257))
        lam = random_spectrum(rng, N)
        w = rng.normal(size=N) + 1j * rng.normal(size=N)
        u = rng.normal(size=L)
        K = dlr_kernel(lam, w[None], L)[0]
        # real and imaginary kernel parts as two channels fed the same input
        via_fft = causal_conv(np.broadcast_to(u, (1, 2, L)), np.stack([K.real, K.imag]))
        y = scan_dlr(lam, w, u)
        worst = max(worst, np.abs(via_fft[0, 0] - y.real).max(), np.abs(via_fft[0, 1] - y.imag).max())
    dt = time.perf_counter() - t0
    report(1, worst <= 1e-9 and dt < 10, f"max abs err {worst:.2e} (<= 1e-9), {dt:.2f}s (< 10s)")


def test_02_fft_convolution_vs_quadratic_oracle(report):
    rng = np.random.default_rng(2)
    t0 = time.perf_counter()
    worst = 0.0
    for L in (1, 2, 3, 17, 64, 257, 1024):
        u = rng.normal(size=(2, 3, L))
        Kf, Kb = rng.normal(size=(3, L)), rng.normal(size=(3, L))
        worst = max(worst, np.abs(causal_conv(u, Kf) - naive_causal_conv(u, Kf)).max(),
                    np.abs(bidirectional_conv(u, Kf, Kb) - naive_bidirectional_conv(u, Kf, Kb)).max())
    dt = time.perf_counter() - t0
    report(2, worst <= 1e-9 and dt < 30, f"max abs err {worst:.2e} (<= 1e-9), {dt:.2f}s (< 30s)")


def test_03_diagonalization_preserves_map(report):
    rng = np.random.default_rng(3)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(50):
        N, L = int(rng.integers(1, 9)), int(rng.integers(1, 65))
        sys = random_diagonalizable(rng, N)
        u = rng.normal(size=L)
        dense = scan_linear_rnn(sys, u)
        lam, w = diagonalize_to_dlr(sys)
        worst = max(worst, np.linalg.norm(scan_dlr(lam, w, u) - dense) / np.linalg.norm(dense))
    dt = time.perf_counter() - t0
    report(3, worst <= 1e-6 and dt < 10, f"max relative err {worst:.2e} (<= 1e-6), {dt:.2f}s (< 10s)")


def test_04_kronecker_identity(report):
    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(50):
        M, N, L = int(rng.integers(1, 9)), int(rng.integers(1, 9)), int(rng.integers(1, 65))
        a = (random_spectrum(rng, M), rng.normal(size=M) + 1j * rng.normal(size=M))
        b = (random_spectrum(rng, N), rng.normal(size=N) + 1j * rng.normal(size=N))
        prod = dlr_kernel(*kronecker_product(a, b), L)
        worst = max(worst, np.abs(prod - dlr_kernel(*a, L) * dlr_kernel(*b, L)).max())
    report(4, worst <= 1e-10, f"max abs err {worst:.2e} (<= 1e-10)")


def test_05_dft_init_expressivity(report):
    rng = np.random.default_rng(5)
    worst_res, worst_cond = 0.0, 0.0
    for N in (64, 256):
        lam = materialize_lambda(init_dlr(N, 1, seed=0, scheme="zero_re"))
        for _ in range(20):
            _, res = solve_kernel_weights(lam, rng.normal(size=N))
            worst_res = max(worst_res, res)
        worst_cond = max(worst_cond, dft_condition_number(N))
    report(5, worst_res <= 1e-8 and worst_cond <= 10,
           f"max residual {worst_res:.2e} (<= 1e-8), cond(P) {worst_cond:.4f} (<= 10)")


def test_06_gradient_suite(report):
    rng = np.random.default_rng(6)
    errs = {}
    for bidi in (False, True):
        for mode in ("real", "prod"):
            m = DlrModel(ModelConfig(d_in=3, d_out=2, H=4, N=8, cast_mode=mode, bidirectional=bidi, seed=6))
            errs[("bi" if bidi else "uni") + "/" + mode] = finite_diff_check(
                m, rng.normal(size=(2, 16, 3)), rng.normal(size=(2, 16, 2)), samples=64)
    worst = max(errs.values())
    report(6, worst <= 1e-4, "max rel err " + ", ".join(f"{k} {v:.1e}" for k, v in errs.items()) + " (<= 1e-4)")


DESK = dict(L=256, H=16, N=256, layers=1, lr=1e-4, steps=10_000, batch_size=16)


def desk_run(task, target=None, **kw):
    """Train under the shared budget; confirm the final metric on held-out evaluation batches."""
    cfg = TrainConfig(task=task, eval_every=250, eval_batches=8, target_metric=target, **{**DESK, **kw})
    t0 = time.perf_counter()
    trainer = Trainer(cfg)
    trainer.run()
    confirmed = evaluate(trainer.model, trainer.stream, 16, offset=100_000)
    return trainer.step, confirmed, time.perf_counter() - t0


_shift_complex = {}


@pytest.mark.slow
@pytest.mark.parametrize("task,threshold", [("shift", 0.95), ("cumsum", 0.99)])
def test_07_desk_scale_atomic_tasks(report, task, threshold):
    # stop slightly past the threshold so the held-out confirmation is not a coin flip
    steps, r2, dt = desk_run(task, target=threshold + 0.005)
    if task == "shift":
        _shift_complex["r2"] = r2
    report(7, r2 >= threshold and dt <= 1200,
           f"{task}: R2 {r2:.4f} (>= {threshold}) after {steps} steps, {dt / 60:.1f} min (<= 20)")


@pytest.mark.slow
def test_08_real_restricted_gap(report):
    complex_r2 = _shift_complex.get("r2")
    if complex_r2 is None:
        complex_r2 = desk_run("shift", target=0.955)[1]
    steps, r2, dt = desk_run("shift", real_params=True)
    report(8, r2 <= 0.5 and complex_r2 > 0.95,
           f"real-restricted R2 {r2:.4f} (<= 0.5) after {steps} steps vs complex {complex_r2:.4f} (> 0.95)")


def test_09_real_vandermonde_growth(report):
    studies = [real_shift_solution(uniform_lambdas(n)) for n in range(2, 17)]
    norms = [s.solution_norm for s in studies]
    monotone = all(b > a for a, b in zip(norms, norms[1:]))
    at12 = studies[10].solution_norm
    worst_res = max(s.residual for s in studies)
    report(9, monotone and at12 >= 1e3 and worst_res <= 1e-20 and all(s.exact for s in studies),
           f"monotone={monotone}, ||w||(12)={at12:.3g} (>= 1e3), ||w||(16)={norms[-1]:.3g}, "
           f"max residual {worst_res:.1e} (<= 1e-20, exact rationals)")


def test_10_listops_oracle_closure(report):
    example = "[MAX 2 6 [MED [SM 3 1 6 ] 8 3 ] 4 5 ]".split()
    ex_tags = tuple(t for t in eval_listops_oracle(example) if t != IGNORE)
    matches, lengths = 0, []
    for i in range(1000):
        s = gen_listops(64, 512, seed=derive_seed(10, i))
        lengths.append(len(s.tokens))
        matches += s.tags == eval_listops_oracle(s.tokens)
    in_bounds = 64 <= min(lengths) and max(lengths) <= 512
    report(10, matches == 1000 and ex_tags == (0, 3, 6) and in_bounds,
           f"{matches}/1000 tag matches, lengths {min(lengths)}..{max(lengths)}, example tags {ex_tags}")


def test_11_pathfinder_validity(report):
    failures, zero = [], []
    for i in range(200):
        s = gen_pathfinder(64, seed=derive_seed(11, i))
        ok, why = validate_pathfinder(s)
        if not ok:
            failures.append((i, why))
        zero.append(np.mean(s.mask == 0))
    a, b = gen_pathfinder(64, seed=derive_seed(11, 7)), gen_pathfinder(64, seed=derive_seed(11, 7))
    deterministic = np.array_equal(a.image, b.image) and np.array_equal(a.mask, b.mask)
    frac = float(np.mean(zero))
    report(11, not failures and frac >= 0.9 and deterministic,
           f"{200 - len(failures)}/200 valid, class-0 fraction {frac:.4f} (>= 0.9), deterministic={deterministic}")


@pytest.mark.slow
def test_12_fft_beats_scan(report):
    Ls = [2**14, 2**15, 2**16, 2**17]
    rows = bench(Ls, H=4, N=64, repeats=5)
    t = {r["L"]: r["fft_ms"] for r in rows}
    ratios = [t[2 * L] / t[L] for L in Ls[:-1]]
    scan, fft = rows[0]["scan_ms"], rows[0]["fft_ms"]
    report(12, fft < scan and max(ratios) <= 3,
           f"L=2^14 scan {scan:.1f} ms vs fft {fft:.1f} ms; doubling ratios "
           + ", ".join(f"{r:.2f}" for r in ratios) + " (<= 3)")


@pytest.mark.extended
@pytest.mark.skipif(os.environ.get("DLR_EXTENDED") != "1", reason="long benchmark; set DLR_EXTENDED=1")
def test_13_pathfinder_segmentation_extended(report):
    cfg = TrainConfig(task="pathfinder", image_size=64, L=4096, H=64, N=64, layers=6, bidirectional=True,
                      lr=1e-3, schedule="cosine", warmup_steps=1000, steps=50_000, batch_size=8,
                      eval_every=1000, eval_batches=8, target_metric=0.80)
    trainer = Trainer(cfg)
    m = trainer.run()
    report(13, (m.final_metric or 0) >= 0.80,
           f"macro accuracy {m.final_metric:.4f} (>= 0.80) after {trainer.step} steps")
