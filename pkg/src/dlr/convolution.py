"""FFT long convolution (causal and bidirectional) plus quadratic reference paths."""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from dlr.errors import ShapeError

NAIVE_MAX_LEN = 2**14


class FftPlan:
    """Radix-2 Cooley-Tukey plan for one power-of-two transform length.

    The input is split into ``radix`` interleaved subsequences whose DFTs come from
    one dense matrix product; log2(size / radix) butterfly stages then merge them.
    Immutable after construction and safe to share across threads.
    """

    def __init__(self, size: int, base: int = 64):
        if size < 2 or size & (size - 1):
            raise ValueError(f"FFT size must be a power of two >= 2, got {size}")
        self.size = size
        self.radix = min(base, size)
        s = np.arange(self.radix)
        self.dft = np.exp(-2j * np.pi * np.outer(s, s) / self.radix)
        twiddles = []
        rows = self.radix
        while rows < size:
            twiddles.append(np.exp(-1j * np.pi * np.arange(rows) / rows)[:, None, None])
            rows *= 2
        self.twiddles = tuple(twiddles)
        # untangling factors for packed real transforms
        self.half_twiddle = np.exp(-2j * np.pi * np.arange(size // 2 + 1) / size)

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x)
        if x.shape[-1] != self.size:
            raise ShapeError(f"expected last axis {self.size}, got {x.shape[-1]}")
        lead = x.shape[:-1]
        b = int(np.prod(lead, dtype=np.int64))
        S, R = self.radix, self.size // self.radix
        cols = x.reshape(b, S, R).transpose(1, 0, 2).reshape(S, b * R)
        X = (self.dft @ cols).reshape(S, b, R)
        for tw in self.twiddles:
            h = X.shape[-1] // 2
            even, odd = X[..., :h], X[..., h:] * tw
            X = np.concatenate((even + odd, even - odd), axis=0)
        return X.reshape(self.size, b).T.reshape(*lead, self.size)

    def inverse(self, X: np.ndarray) -> np.ndarray:
        return np.conj(self.forward(np.conj(X))) / self.size

    def rfft(self, x: np.ndarray) -> np.ndarray:
        """Spectrum bins 0..size/2 of a real signal, via a half-length complex transform."""
        x = np.asarray(x, dtype=np.float64)
        if self.size < 4:
            return self.forward(x)[..., : self.size // 2 + 1]
        if x.shape[-1] != self.size:
            raise ShapeError(f"expected last axis {self.size}, got {x.shape[-1]}")
        half = self.size // 2
        Z = get_plan(half).forward(x[..., 0::2] + 1j * x[..., 1::2])
        Z = np.concatenate((Z, Z[..., :1]), axis=-1)
        Zr = np.conj(Z[..., ::-1])
        even = 0.5 * (Z + Zr)
        odd = -0.5j * (Z - Zr)
        return even + self.half_twiddle * odd

    def irfft(self, X: np.ndarray) -> np.ndarray:
        """Inverse of :meth:`rfft`; returns a real signal of length ``size``."""
        X = np.asarray(X)
        half = self.size // 2
        if X.shape[-1] != half + 1:
            raise ShapeError(f"expected {half + 1} bins, got {X.shape[-1]}")
        if self.size < 4:
            full = np.concatenate((X, np.conj(X[..., 1:-1][..., ::-1])), axis=-1)
            return self.inverse(full).real
        Xr = np.conj(X[..., ::-1])
        even = 0.5 * (X + Xr)[..., :half]
        odd = (0.5 * (X - Xr) * np.conj(self.half_twiddle))[..., :half]
        z = get_plan(half).inverse(even + 1j * odd)
        out = np.empty(X.shape[:-1] + (self.size,))
        out[..., 0::2] = z.real
        out[..., 1::2] = z.imag
        return out


@lru_cache(maxsize=64)
def get_plan(size: int) -> FftPlan:
    return FftPlan(size)


def fft(x: np.ndarray, plan: FftPlan | None = None) -> np.ndarray:
    """Forward DFT along the last axis (``X_k = sum_j x_j exp(-2 pi i jk/n)``)."""
    plan = plan or get_plan(np.shape(x)[-1])
    return plan.forward(x)


def ifft(X: np.ndarray, plan: FftPlan | None = None) -> np.ndarray:
    plan = plan or get_plan(np.shape(X)[-1])
    return plan.inverse(X)


def fft_size(L: int) -> int:
    """Smallest power of two >= 2L (and >= 2)."""
    n = 2
    while n < 2 * L:
        n *= 2
    return n


def _pad(x: np.ndarray, n: int) -> np.ndarray:
    width = [(0, 0)] * (x.ndim - 1) + [(0, n - x.shape[-1])]
    return np.pad(x, width)


def circulant_kernel(Kf: np.ndarray, Kb: np.ndarray | None, n: int) -> np.ndarray:
    """Lay out forward/backward kernels as the first column of a size-n circulant.

    ``c = (Kf_0..Kf_{L-1}, 0, ..., 0, Kb_{L-2}..Kb_0)``; the free slot is zero.
    """
    L = Kf.shape[-1]
    c = _pad(Kf, n)
    if Kb is not None and L > 1:
        c[..., n - L + 1:] = Kb[..., L - 2::-1]
    return c


def circular_conv(u: np.ndarray, c: np.ndarray, n: int) -> np.ndarray:
    """First L outputs of ``circulant(c) @ [u | 0]`` computed by FFT."""
    L = u.shape[-1]
    plan = get_plan(n)
    if np.iscomplexobj(u) or np.iscomplexobj(c):
        return plan.inverse(plan.forward(_pad(u, n)) * plan.forward(c))[..., :L]
    return plan.irfft(plan.rfft(_pad(u, n)) * plan.rfft(c))[..., :L]


def _check(u: np.ndarray, *kernels: np.ndarray | None) -> None:
    if u.ndim < 1 or u.shape[-1] < 1:
        raise ShapeError("input must have a non-empty length axis")
    for K in kernels:
        if K is None:
            continue
        if K.shape[-1] != u.shape[-1]:
            raise ShapeError(f"kernel length {K.shape[-1]} != input length {u.shape[-1]}")
        if u.ndim >= 2 and K.ndim >= 2 and K.shape[-2] != u.shape[-2]:
            raise ShapeError(f"kernel channels {K.shape[-2]} != input channels {u.shape[-2]}")


def causal_conv(u: np.ndarray, K: np.ndarray) -> np.ndarray:
    """``y[..., k] = sum_{j<=k} K[..., j] u[..., k-j]`` for u of shape (B, H, L), K (H, L)."""
    u, K = np.asarray(u), np.asarray(K)
    _check(u, K)
    n = fft_size(u.shape[-1])
    return circular_conv(u, _pad(K, n), n)


def bidirectional_conv(u: np.ndarray, Kf: np.ndarray, Kb: np.ndarray) -> np.ndarray:
    """Toeplitz product: causal part with ``Kf`` plus anti-causal part with ``Kb``.

    ``y_k = sum_{j<=k} Kf_{k-j} u_j + sum_{j>k} Kb_{j-k-1} u_j``.
    """
    u, Kf, Kb = np.asarray(u), np.asarray(Kf), np.asarray(Kb)
    _check(u, Kf, Kb)
    n = fft_size(u.shape[-1])
    return circular_conv(u, circulant_kernel(Kf, Kb, n), n)


def naive_causal_conv(u: np.ndarray, K: np.ndarray) -> np.ndarray:
    u, K = np.asarray(u), np.asarray(K)
    _check(u, K)
    L = u.shape[-1]
    if L > NAIVE_MAX_LEN:
        raise ValueError(f"naive convolution refuses L={L} > {NAIVE_MAX_LEN}")
    dtype = np.result_type(u, K)
    y = np.zeros(np.broadcast_shapes(u.shape, K.shape), dtype=dtype)
    for k in range(L):
        for j in range(k + 1):
            y[..., k] += K[..., j] * u[..., k - j]
    return y


def naive_bidirectional_conv(u: np.ndarray, Kf: np.ndarray, Kb: np.ndarray) -> np.ndarray:
    u, Kf, Kb = np.asarray(u), np.asarray(Kf), np.asarray(Kb)
    _check(u, Kf, Kb)
    L = u.shape[-1]
    if L > NAIVE_MAX_LEN:
        raise ValueError(f"naive convolution refuses L={L} > {NAIVE_MAX_LEN}")
    dtype = np.result_type(u, Kf, Kb)
    y = np.zeros(np.broadcast_shapes(u.shape, Kf.shape), dtype=dtype)
    for k in range(L):
        for j in range(k + 1):
            y[..., k] += Kf[..., k - j] * u[..., j]
        for j in range(k + 1, L):
            y[..., k] += Kb[..., j - k - 1] * u[..., j]
    return y
