"""Minimal reverse-mode autodiff over numpy arrays.

Operations executed while a :class:`Tape` is active are recorded in creation
order; :func:`backward` walks that list in reverse, which is a valid reverse
topological order. Complex intermediates never leave an op: every tensor on the
tape is real, and complex parameters are stored as (real, imag) pairs.
"""

from __future__ import annotations

import math

import numpy as np

from dlr.convolution import circulant_kernel, fft_size, get_plan
from dlr.kernels import vandermonde

_ACTIVE: list["Tape"] = []


class Tensor:
    __slots__ = ("value", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, value, requires_grad: bool = False, name: str | None = None):
        self.value = np.asarray(value)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents: tuple = ()
        self._backward = None
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Tensor(shape={self.value.shape}, requires_grad={self.requires_grad})"

    def accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=self.value.dtype, copy=True)
        else:
            self.grad += g

    def zero_grad(self) -> None:
        self.grad = None


class Tape:
    """Records the nodes created inside a ``with Tape():`` block."""

    def __init__(self):
        self.nodes: list[Tensor] = []

    def __enter__(self):
        _ACTIVE.append(self)
        return self

    def __exit__(self, *exc):
        _ACTIVE.pop()
        return False


def constant(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(value, parents, backward_fn) -> Tensor:
    out = Tensor(value)
    if _ACTIVE and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward_fn
        _ACTIVE[-1].nodes.append(out)
    return out


def backward(tape: Tape, loss: Tensor) -> None:
    if loss.value.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.value.shape}")
    loss.grad = np.ones_like(loss.value)
    for node in reversed(tape.nodes):
        if node.grad is not None and node._backward is not None:
            node._backward(node.grad)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _push(t: Tensor, g: np.ndarray) -> None:
    if t.requires_grad:
        t.accumulate(g)


# ---- elementwise / linear algebra -------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    def bw(g):
        _push(a, _unbroadcast(g, a.shape))
        _push(b, _unbroadcast(g, b.shape))
    return _node(a.value + b.value, (a, b), bw)


def scale(a: Tensor, c: float) -> Tensor:
    return _node(a.value * c, (a,), lambda g: _push(a, g * c))


def linear(x: Tensor, W: Tensor, b: Tensor | None = None) -> Tensor:
    """``x @ W (+ b)`` over the last axis of ``x``."""
    out = x.value @ W.value
    if b is not None:
        out = out + b.value

    def bw(g):
        if x.requires_grad:
            x.accumulate(g @ W.value.T)
        if W.requires_grad:
            W.accumulate(np.tensordot(x.value, g, axes=(list(range(x.value.ndim - 1)),) * 2))
        if b is not None and b.requires_grad:
            b.accumulate(g.reshape(-1, g.shape[-1]).sum(axis=0))
    parents = (x, W) if b is None else (x, W, b)
    return _node(out, parents, bw)


_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(x: Tensor) -> Tensor:
    """Tanh approximation of GELU."""
    v = x.value
    t = np.tanh(_GELU_C * (v + 0.044715 * v**3))
    out = 0.5 * v * (1.0 + t)

    def bw(g):
        dt = (1.0 - t**2) * _GELU_C * (1.0 + 3 * 0.044715 * v**2)
        _push(x, g * (0.5 * (1.0 + t) + 0.5 * v * dt))
    return _node(out, (x,), bw)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    v = x.value
    mu = v.mean(axis=-1, keepdims=True)
    xc = v - mu
    inv = 1.0 / np.sqrt((xc**2).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv
    out = xhat * gamma.value + beta.value

    def bw(g):
        red = tuple(range(v.ndim - 1))
        _push(gamma, (g * xhat).sum(axis=red))
        _push(beta, g.sum(axis=red))
        if x.requires_grad:
            gx = g * gamma.value
            x.accumulate(inv * (gx - gx.mean(axis=-1, keepdims=True)
                                - xhat * (gx * xhat).mean(axis=-1, keepdims=True)))
    return _node(out, (x, gamma, beta), bw)


def transpose(x: Tensor, axes: tuple) -> Tensor:
    inv = np.argsort(axes)
    return _node(np.transpose(x.value, axes), (x,),
                 lambda g: _push(x, np.transpose(g, inv)))


def take_last(x: Tensor, n: int, axis: int = 1) -> Tensor:
    """Rightmost ``n`` entries along ``axis``."""
    L = x.shape[axis]
    idx = [slice(None)] * x.value.ndim
    idx[axis] = slice(L - n, L)
    idx = tuple(idx)

    def bw(g):
        if x.requires_grad:
            full = np.zeros_like(x.value)
            full[idx] = g
            x.accumulate(full)
    return _node(x.value[idx], (x,), bw)


# ---- losses -----------------------------------------------------------------

def mse(pred: Tensor, target) -> Tensor:
    t = np.asarray(target.value if isinstance(target, Tensor) else target)
    diff = pred.value - t
    return _node(np.asarray(np.mean(diff**2)), (pred,),
                 lambda g: _push(pred, g * 2.0 * diff / diff.size))


def cross_entropy(logits: Tensor, labels: np.ndarray, ignore_index: int = -1) -> Tensor:
    """Mean softmax cross-entropy over positions whose label != ``ignore_index``."""
    z = logits.value
    labels = np.asarray(labels)
    mask = labels != ignore_index
    count = max(int(mask.sum()), 1)
    zmax = z.max(axis=-1, keepdims=True)
    logp = z - zmax - np.log(np.exp(z - zmax).sum(axis=-1, keepdims=True))
    safe = np.where(mask, labels, 0)
    picked = np.take_along_axis(logp, safe[..., None], axis=-1)[..., 0]
    loss = -(picked * mask).sum() / count

    def bw(g):
        p = np.exp(logp)
        onehot = np.zeros_like(p)
        np.put_along_axis(onehot, safe[..., None], 1.0, axis=-1)
        _push(logits, g * (p - onehot) * mask[..., None] / count)
    return _node(np.asarray(loss), (logits,), bw)


# ---- DLR kernel and FFT convolution ----------------------------------------

def dlr_kernel(log_re: Tensor, log_im: Tensor | None, W: Tensor, L: int,
               mode: str = "real") -> Tensor:
    """Real kernel (H, L) from log-space spectrum and read-out ``W`` (H, N, 2).

    ``W[..., 1]`` is ignored and ``log_im`` may be None for the real-restricted
    variant (``W`` then has shape (H, N, 1)).
    """
    a = log_re.value
    b = log_im.value if log_im is not None else np.zeros_like(a)
    z = -a**2 + 1j * b
    lam = np.exp(z)
    P = vandermonde(lam, L)
    Wv = W.value
    Wc = Wv[..., 0] + 1j * Wv[..., 1] if Wv.shape[-1] == 2 else Wv[..., 0].astype(np.complex128)
    K = Wc @ P
    if mode == "real":
        out = K.real.copy()
    elif mode == "prod":
        out = K.real * K.imag
    else:
        raise ValueError(f"unknown cast mode {mode!r}")

    def bw(g):
        Gc = g.astype(np.complex128) if mode == "real" else g * K.imag + 1j * (g * K.real)
        if W.requires_grad:
            GW = Gc @ np.conj(P).T
            W.accumulate(np.stack([GW.real, GW.imag], axis=-1)[..., : Wv.shape[-1]])
        if log_re.requires_grad or (log_im is not None and log_im.requires_grad):
            GP = np.conj(Wc).T @ Gc
            gz = (np.conj(P) * GP) @ np.arange(L)
            _push(log_re, gz.real * (-2.0 * a))
            if log_im is not None:
                _push(log_im, gz.imag)
    parents = tuple(t for t in (log_re, log_im, W) if t is not None)
    return _node(out, parents, bw)


def fft_conv(u: Tensor, Kf: Tensor, Kb: Tensor | None = None) -> Tensor:
    """Causal (``Kb`` None) or bidirectional convolution of ``u`` (B, H, L) by FFT."""
    L = u.shape[-1]
    n = fft_size(L)
    plan = get_plan(n)
    c = circulant_kernel(Kf.value, None if Kb is None else Kb.value, n)
    width = [(0, 0)] * (u.value.ndim - 1) + [(0, n - L)]
    U = plan.rfft(np.pad(u.value, width))
    C = plan.rfft(c)
    out = plan.irfft(U * C)[..., :L]

    def bw(g):
        Gf = plan.rfft(np.pad(g, width))
        if u.requires_grad:
            u.accumulate(plan.irfft(Gf * np.conj(C))[..., :L])
        if Kf.requires_grad or (Kb is not None and Kb.requires_grad):
            spec = Gf * np.conj(U)
            if spec.ndim > 2:
                spec = spec.reshape(-1, *spec.shape[-2:]).sum(axis=0)
            gc = plan.irfft(spec)
            _push(Kf, gc[..., :L])
            if Kb is not None and Kb.requires_grad:
                gb = np.zeros_like(Kb.value)
                if L > 1:
                    gb[..., : L - 1] = gc[..., n - L + 1:][..., ::-1]
                Kb.accumulate(gb)
    parents = (u, Kf) if Kb is None else (u, Kf, Kb)
    return _node(out, parents, bw)
