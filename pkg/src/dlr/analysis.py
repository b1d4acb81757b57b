"""Reports behind ``dlr analyze`` and ``dlr bench``."""

from __future__ import annotations

import time

import numpy as np

from dlr import recurrence as rec
from dlr.convolution import causal_conv
from dlr.kernels import cast_kernel, dlr_kernel, init_dlr, materialize_lambda


def random_diagonalizable(rng: np.random.Generator, N: int) -> rec.LinearRnnSystem:
    """``A = V diag(lam) V^-1`` with |lam| <= 1 and a random complex V."""
    lam = rng.uniform(0.3, 1.0, N) * np.exp(2j * np.pi * rng.random(N))
    V = rng.normal(size=(N, N)) + 1j * rng.normal(size=(N, N)) + 2 * np.eye(N)
    A = V @ np.diag(lam) @ np.linalg.inv(V)
    B = rng.normal(size=N) + 1j * rng.normal(size=N)
    C = rng.normal(size=N) + 1j * rng.normal(size=N)
    return rec.LinearRnnSystem(A, B, C)


def prop1_report(instances: int = 50, max_n: int = 8, max_len: int = 64, seed: int = 0) -> dict:
    rng = np.random.default_rng(seed)
    errors = []
    for _ in range(instances):
        N = int(rng.integers(1, max_n + 1))
        L = int(rng.integers(1, max_len + 1))
        sys = random_diagonalizable(rng, N)
        u = rng.normal(size=L)
        dense = rec.scan_linear_rnn(sys, u)
        lam, w = rec.diagonalize_to_dlr(sys)
        diag = rec.scan_dlr(lam, w, u)
        errors.append(float(np.linalg.norm(diag - dense) / max(np.linalg.norm(dense), 1e-300)))
    return {"analysis": "prop1", "instances": instances, "max_relative_error": max(errors),
            "relative_errors": errors}


def vandermonde_report(ns=range(2, 17)) -> dict:
    rows = []
    for st in rec.vandermonde_growth(ns):
        closed = rec.vandermonde_closed_form(st.lambdas)
        rescaled = [c / lam for c, lam in zip(closed, st.lambdas)]
        sign = (-1) ** st.N
        rows.append({"N": st.N, "solution_norm": st.solution_norm, "residual": st.residual,
                     "exact": st.exact,
                     "closed_form_matches_after_rescale": rescaled == list(st.w),
                     "closed_form_matches_up_to_sign": [sign * r for r in rescaled] == list(st.w)})
    norms = [r["solution_norm"] for r in rows]
    return {"analysis": "vandermonde", "lambdas": "uniform i/N, i=1..N", "rows": rows,
            "monotone": all(b > a for a, b in zip(norms, norms[1:]))}


def dft_expressivity_report(sizes=(64, 256), targets: int = 20, seed: int = 0) -> dict:
    rng = np.random.default_rng(seed)
    out = []
    for N in sizes:
        lam = materialize_lambda(init_dlr(N, 1, seed=seed, scheme="zero_re"))
        residuals = []
        for _ in range(targets):
            target = rng.normal(size=N)
            _, res = rec.solve_kernel_weights(lam, target)
            residuals.append(res)
        out.append({"N": N, "max_residual": max(residuals), "condition_number": rec.dft_condition_number(N)})
    return {"analysis": "dft_expressivity", "rows": out}


def _best_time(fn, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best * 1e3


def bench(L_list, H: int = 4, N: int = 64, batch: int = 1, repeats: int = 3, seed: int = 0) -> list[dict]:
    """Time the sequential scan against kernel materialization + FFT convolution."""
    params = init_dlr(N, H, seed=seed)
    lam = materialize_lambda(params)
    rng = np.random.default_rng(seed)
    rows = []
    for L in L_list:
        u = rng.normal(size=(batch, H, L))
        K = cast_kernel(dlr_kernel(lam, params.W, L))
        scan_ms = _best_time(lambda: rec.scan_dlr_channels(lam, params.W, u).real, 1)
        fft_ms = _best_time(lambda: causal_conv(u, cast_kernel(dlr_kernel(lam, params.W, L))), repeats)
        conv_ms = _best_time(lambda: causal_conv(u, K), repeats)
        rows.append({"L": L, "scan_ms": scan_ms, "fft_ms": fft_ms, "conv_ms": conv_ms})
    return rows
