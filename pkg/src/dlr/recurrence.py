"""Sequential reference semantics and the analytical constructions around them.

Covers the per-step recurrences (diagonal and dense), the eigendecomposition
reduction of a dense linear RNN to a diagonal one, kernel-fitting on a given
spectrum, and the norm blow-up of real-spectrum solutions to the shift kernel.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from dlr.errors import NotDiagonalizable, SingularSystem
from dlr.kernels import vandermonde

SCAN_MAX_LEN = 2**14
EIG_COND_MAX = 1e8


@dataclass(frozen=True)
class LinearRnnSystem:
    A: np.ndarray  # (N, N)
    B: np.ndarray  # (N,) or (N, 1)
    C: np.ndarray  # (N,) or (1, N)

    def __post_init__(self):
        for name in ("A", "B", "C"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"{name} has non-finite entries")


@dataclass
class VandermondeStudy:
    lambdas: list
    N: int
    solution_norm: float
    residual: float
    w: list = field(repr=False)
    exact: bool = True


def scan_dlr(lam: np.ndarray, w: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Run ``x_k = lam * x_{k-1} + u_k``, ``y_k = <w, x_k>`` step by step.

    ``u`` may carry leading batch axes; the state is (..., N).
    """
    lam = np.asarray(lam, dtype=np.complex128)
    w = np.asarray(w, dtype=np.complex128)
    u = np.asarray(u)
    x = np.zeros(u.shape[:-1] + lam.shape, dtype=np.complex128)
    y = np.empty(u.shape, dtype=np.complex128)
    for k in range(u.shape[-1]):
        x = lam * x + u[..., k, None]
        y[..., k] = x @ w
    return y


def scan_dlr_channels(lam: np.ndarray, W: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Multi-channel scan: ``u`` (B, H, L), ``W`` (H, N), one spectrum shared by all channels."""
    lam = np.asarray(lam, dtype=np.complex128)
    u = np.asarray(u)
    x = np.zeros(u.shape[:-1] + lam.shape, dtype=np.complex128)
    y = np.empty(u.shape, dtype=np.complex128)
    for k in range(u.shape[-1]):
        x = lam * x + u[..., k, None]
        y[..., k] = np.einsum("...hn,hn->...h", x, W)
    return y


def scan_linear_rnn(sys: LinearRnnSystem, u: np.ndarray) -> np.ndarray:
    u = np.asarray(u)
    L = u.shape[-1]
    if L > SCAN_MAX_LEN:
        raise ValueError(f"dense scan refuses L={L} > {SCAN_MAX_LEN}")
    A = np.asarray(sys.A, dtype=np.complex128)
    B = np.asarray(sys.B, dtype=np.complex128).reshape(-1)
    C = np.asarray(sys.C, dtype=np.complex128).reshape(-1)
    x = np.zeros(A.shape[0], dtype=np.complex128)
    y = np.empty(L, dtype=np.complex128)
    for k in range(L):
        x = A @ x + B * u[k]
        y[k] = C @ x
    return y


def diagonalize_to_dlr(sys: LinearRnnSystem) -> tuple[np.ndarray, np.ndarray]:
    """Equivalent diagonal RNN: ``A = V diag(lam) V^-1`` gives ``w = (C V) * (V^-1 B)``."""
    A = np.asarray(sys.A, dtype=np.complex128)
    lam, V = np.linalg.eig(A)
    cond = np.linalg.cond(V)
    if not np.isfinite(cond) or cond > EIG_COND_MAX:
        raise NotDiagonalizable(
            f"not diagonalizable within tolerance (eigenvector condition {cond:.3g})")
    B = np.asarray(sys.B, dtype=np.complex128).reshape(-1)
    C = np.asarray(sys.C, dtype=np.complex128).reshape(-1)
    return lam, (C @ V) * np.linalg.solve(V, B)


def is_dft_grid(lam: np.ndarray, tol: float = 1e-12) -> bool:
    N = lam.shape[0]
    return bool(np.max(np.abs(lam - np.exp(2j * np.pi * np.arange(N) / N))) <= tol)


def solve_kernel_weights(lam: np.ndarray, target: np.ndarray,
                         tol: float = 1e-8) -> tuple[np.ndarray, float]:
    """Weights w with ``sum_n w_n lam_n^k = target_k`` for k < N; returns (w, residual).

    The DFT grid is inverted directly (``w = conj(P) K / N``); other spectra go
    through least squares. Raises :class:`SingularSystem` when the residual
    exceeds ``tol`` relative to the target scale.
    """
    lam = np.asarray(lam, dtype=np.complex128)
    target = np.asarray(target)
    N = lam.shape[0]
    if target.shape != (N,):
        raise ValueError(f"target length {target.shape} does not match N={N}")
    P = vandermonde(lam, N)
    if is_dft_grid(lam):
        w = np.conj(P) @ target / N
    else:
        w = np.linalg.lstsq(P.T, target.astype(np.complex128), rcond=None)[0]
    residual = float(np.max(np.abs(P.T @ w - target)))
    if residual > tol * max(1.0, float(np.max(np.abs(target)))):
        raise SingularSystem(f"singular system: residual {residual:.3g}", residual)
    return w, residual


def _solve_exact(M: list[list[Fraction]], b: list[Fraction]) -> list[Fraction]:
    """Gauss-Jordan elimination over the rationals."""
    n = len(b)
    aug = [row[:] + [rhs] for row, rhs in zip(M, b)]
    for col in range(n):
        pivot = next((r for r in range(col, n) if aug[r][col] != 0), None)
        if pivot is None:
            raise SingularSystem("singular Vandermonde", None)
        aug[col], aug[pivot] = aug[pivot], aug[col]
        p = aug[col][col]
        aug[col] = [v / p for v in aug[col]]
        for r in range(n):
            if r != col and aug[r][col] != 0:
                f = aug[r][col]
                aug[r] = [a - f * c for a, c in zip(aug[r], aug[col])]
    return [row[n] for row in aug]


def real_shift_solution(lambdas, exact_max_n: int = 20) -> VandermondeStudy:
    """Solve ``w P = e_N`` with ``P[i, j] = lambda_i ** j``, exponents j = 1..N.

    This is the weight vector a real-spectrum DLR needs to realize a shift-by-N
    one-hot kernel. Up to ``exact_max_n`` the solve is done in rational
    arithmetic (floats are converted exactly), so the residual is exact.
    """
    lambdas = list(lambdas)
    N = len(lambdas)
    if N == 0:
        raise ValueError("need at least one lambda")
    if len(set(Fraction(x) for x in lambdas)) != N:
        raise SingularSystem("singular Vandermonde: duplicate lambda", None)
    if any(not 0 < Fraction(x) <= 1 for x in lambdas):
        raise ValueError("lambdas must lie in (0, 1]")
    if N <= exact_max_n:
        lam = [Fraction(x) for x in lambdas]
        # row j of P^T holds lambda_i^(j+1); P^T w = e_N
        M = [[li ** (j + 1) for li in lam] for j in range(N)]
        rhs = [Fraction(0)] * (N - 1) + [Fraction(1)]
        w = _solve_exact(M, rhs)
        res = max(abs(sum(m * wi for m, wi in zip(row, w)) - r) for row, r in zip(M, rhs))
        return VandermondeStudy(lambdas=lambdas, N=N, solution_norm=float(max(abs(x) for x in w)),
                                residual=float(res), w=w, exact=True)
    lam = np.asarray(lambdas, dtype=np.float64)
    PT = lam[None, :] ** np.arange(1, N + 1)[:, None]
    rhs = np.zeros(N)
    rhs[-1] = 1.0
    w = np.linalg.lstsq(PT, rhs, rcond=None)[0]
    return VandermondeStudy(lambdas=lambdas, N=N, solution_norm=float(np.max(np.abs(w))),
                            residual=float(np.max(np.abs(PT @ w - rhs))), w=list(w), exact=False)


def uniform_lambdas(N: int) -> list[Fraction]:
    """``(1/N, 2/N, ..., 1)``: uniformly spaced, distinct, in (0, 1]."""
    return [Fraction(i, N) for i in range(1, N + 1)]


def vandermonde_closed_form(lambdas) -> list[Fraction]:
    """``w_i = -1 / prod_{j != i} (lambda_j - lambda_i)``.

    Magnitudes match the exact solve under the exponent convention j = 0..N-1,
    and with exponents 1..N after dividing by ``lambda_i``. The sign is off by
    ``(-1)**N``, so the formula is only exact for even N.
    """
    lam = [Fraction(x) for x in lambdas]
    out = []
    for i, li in enumerate(lam):
        prod = Fraction(1)
        for j, lj in enumerate(lam):
            if j != i:
                prod *= lj - li
        out.append(-1 / prod)
    return out


def vandermonde_growth(ns=range(2, 17)) -> list[VandermondeStudy]:
    return [real_shift_solution(uniform_lambdas(n)) for n in ns]


def dft_condition_number(N: int) -> float:
    lam = np.exp(2j * np.pi * np.arange(N) / N)
    return float(np.linalg.cond(vandermonde(lam, N)))
