"""Kernel materialization for diagonal linear RNNs and their initializations.

A DLR with spectrum ``lam`` (N,) and read-out ``W`` (H, N) has per-channel kernel
``K[h, k] = sum_n W[h, n] * lam[n] ** k``. Everything here is pure numpy in
double precision.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from dlr.errors import InvalidParameters, UnstableSpectrum

STABILITY_TOL = 1e-12
KERNEL_BLOCK = 2048  # positions per block when materializing long kernels
CAST_MODES = ("real", "prod")


@dataclass(frozen=True)
class DlrParams:
    log_re: np.ndarray  # (N,)
    log_im: np.ndarray  # (N,), radians
    W: np.ndarray  # (H, N) complex

    @property
    def N(self) -> int:
        return self.log_re.shape[0]

    @property
    def H(self) -> int:
        return self.W.shape[0]


@dataclass(frozen=True)
class DssParams:
    lam: np.ndarray  # (N,) complex, Re < 0
    W: np.ndarray  # (H, N) complex
    log_delta: np.ndarray  # (H,)


def materialize_lambda(params: DlrParams) -> np.ndarray:
    """``exp(-log_re**2 + 1j * log_im)``; squaring keeps every |lambda| <= 1."""
    log_re = np.asarray(params.log_re, dtype=np.float64)
    log_im = np.asarray(params.log_im, dtype=np.float64)
    if not (np.all(np.isfinite(log_re)) and np.all(np.isfinite(log_im))
            and np.all(np.isfinite(params.W))):
        raise InvalidParameters("invalid parameters: non-finite entries")
    return np.exp(-log_re**2 + 1j * log_im)


def vandermonde(lam: np.ndarray, L: int) -> np.ndarray:
    """``P[n, k] = lam[n] ** k`` for k < L, built by running products."""
    lam = np.asarray(lam, dtype=np.complex128)
    P = np.empty((lam.shape[0], L), dtype=np.complex128)
    P[:, 0] = 1.0
    if L > 1:
        P[:, 1:] = lam[:, None]
        np.cumprod(P[:, 1:], axis=1, out=P[:, 1:])
    return P


def dlr_kernel(lam: np.ndarray, W: np.ndarray, L: int) -> np.ndarray:
    """Complex kernel ``W @ P`` of shape (H, L); W may also be a single vector (N,)."""
    if L < 1:
        raise ValueError("kernel length must be >= 1")
    lam = np.asarray(lam, dtype=np.complex128)
    if L > 1 and np.any(np.abs(lam) > 1 + STABILITY_TOL):
        raise UnstableSpectrum("unstable spectrum: |lambda| > 1")
    W = np.asarray(W)
    if L <= KERNEL_BLOCK:
        return W @ vandermonde(lam, L)
    # Long kernels go block by block so the power matrix stays cache-sized:
    # K[:, s + j] = (W * lam**s) @ P[:, j]. Block edges sit at fixed positions,
    # so a prefix of a long kernel equals the shorter kernel.
    base = vandermonde(lam, KERNEL_BLOCK)
    out = np.empty(W.shape[:-1] + (L,), dtype=np.complex128)
    for s in range(0, L, KERNEL_BLOCK):
        e = min(L, s + KERNEL_BLOCK)
        out[..., s:e] = (W * lam**s) @ base[:, : e - s]
    return out


def cast_kernel(Kc: np.ndarray, mode: str = "real") -> np.ndarray:
    if mode == "real":
        return Kc.real.copy()
    if mode == "prod":
        return Kc.real * Kc.imag
    raise ValueError(f"unknown cast mode {mode!r}")


def params_kernel(params: DlrParams, L: int, mode: str = "real") -> np.ndarray:
    return cast_kernel(dlr_kernel(materialize_lambda(params), params.W, L), mode)


def bidirectional_kernels(fwd: DlrParams, bwd: DlrParams, L: int,
                          mode: str = "real") -> tuple[np.ndarray, np.ndarray]:
    if fwd.H != bwd.H:
        raise ValueError(f"channel mismatch: {fwd.H} vs {bwd.H}")
    return params_kernel(fwd, L, mode), params_kernel(bwd, L, mode)


def kronecker_product(a: tuple[np.ndarray, np.ndarray],
                      b: tuple[np.ndarray, np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    """DLR whose kernel is the elementwise product of the kernels of ``a`` and ``b``."""
    lam_a, w_a = (np.atleast_1d(np.asarray(v, dtype=np.complex128)) for v in a)
    lam_b, w_b = (np.atleast_1d(np.asarray(v, dtype=np.complex128)) for v in b)
    return np.kron(lam_a, lam_b), np.kron(w_a, w_b)


def prod_as_dlr(lam: np.ndarray, w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """DLR of size 2N^2 (within the 4N^2 bound) whose kernel is ``Re(K) * Im(K)``.

    ``Re(z) Im(z) = (z^2 - conj(z)^2) / 4i``, and ``K_k^2`` is the kernel of the
    Kronecker square of (lam, w); the mixed terms cancel.
    """
    lam = np.asarray(lam, dtype=np.complex128)
    w = np.asarray(w, dtype=np.complex128)
    sq_lam, sq_w = kronecker_product((lam, w), (lam, w))
    return (np.concatenate([sq_lam, sq_lam.conj()]),
            np.concatenate([sq_w / 4j, -sq_w.conj() / 4j]))


def dss_to_dlr(params: DssParams) -> tuple[np.ndarray, np.ndarray]:
    """Zero-order-hold discretization per channel.

    Returns spectra (H, N) and weights (H, N): ``exp(delta_h lam)`` and
    ``W_h * (exp(delta_h lam) - 1) / lam``.
    """
    lam = np.asarray(params.lam, dtype=np.complex128)
    if np.any(np.abs(lam) < 1e-12):
        raise InvalidParameters("division by near-zero eigenvalue")
    delta = np.exp(np.asarray(params.log_delta, dtype=np.float64))
    dlam = delta[:, None] * lam[None, :]
    spec = np.exp(dlam)
    return spec, params.W * (spec - 1.0) / lam


def dss_exp_kernel(params: DssParams, L: int) -> np.ndarray:
    spec, weights = dss_to_dlr(params)
    if np.any(np.real(params.lam) >= 0):
        raise InvalidParameters("DSS eigenvalues need negative real parts")
    K = np.stack([dlr_kernel(spec[h], weights[h], L) for h in range(spec.shape[0])])
    return K.real


def _init_W(rng: np.random.Generator, H: int, N: int) -> np.ndarray:
    sigma = 1.0 / N
    return rng.normal(0.0, sigma, (H, N)) + 1j * rng.normal(0.0, sigma, (H, N))


def init_dlr(N: int, H: int, seed: int, scheme: str = "default") -> DlrParams:
    """Phases on the uniform grid ``2 pi n / N``; ``zero_re`` gives the DFT initialization."""
    if N < 1 or H < 1:
        raise ValueError("N and H must be >= 1")
    rng = np.random.default_rng(seed)
    log_im = 2 * np.pi * np.arange(N) / N
    if scheme == "default":
        r = rng.uniform(np.log(0.0005), np.log(0.5), N)
        log_re = np.sqrt(np.exp(r) / 2)
    elif scheme == "zero_re":
        log_re = np.zeros(N)
    else:
        raise ValueError(f"unknown init scheme {scheme!r}")
    return DlrParams(log_re=log_re, log_im=log_im, W=_init_W(rng, H, N))


def init_dss(N: int, H: int, seed: int, dt_min: float = 1e-3, dt_max: float = 1e-1) -> DssParams:
    if not 0 < dt_min <= dt_max:
        raise ValueError("need 0 < dt_min <= dt_max")
    rng = np.random.default_rng(seed)
    lam = -0.5 + 2j * np.pi * np.arange(N)
    log_delta = rng.uniform(np.log(dt_min), np.log(dt_max), H)
    return DssParams(lam=lam, W=_init_W(rng, H, N), log_delta=log_delta)
