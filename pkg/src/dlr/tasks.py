"""Generators for the atomic regression tasks.

Every sample is drawn from its own generator seeded by ``(seed, index)``, so a
batch is a pure function of the spec and the index range it covers. Targets are
aligned with the rightmost ``out_len`` model outputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from dlr.model import augment_positional

TASKS = ("shift", "cumsum", "cummax", "reverse", "sort", "select", "select_fixed",
         "mips", "context_shift", "solve", "solve_fixed")


@dataclass(frozen=True)
class TaskSpec:
    task: str
    L: int
    C: int = 8  # shifts
    M: int = 32  # selected positions
    D: int = 4  # MIPS vector size
    seed: int = 0
    fixed_seed: int = 1234  # instance shared by every sample of the *_fixed tasks

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}; expected one of {TASKS}")
        if min(self.L, self.C, self.M, self.D) < 1:
            raise ValueError("task constants must be positive")

    @property
    def solve_n(self) -> int:
        return solve_size(self.L)


@dataclass
class TaskBatch:
    x: np.ndarray  # (B, T, D_in)
    y: np.ndarray  # (B, L', D_out)
    meta: dict = field(default_factory=dict)

    @property
    def out_len(self) -> int:
        return self.y.shape[1]


def solve_size(L: int) -> int:
    """Largest N with N^2 + 2N <= L."""
    n = 0
    while (n + 1) ** 2 + 2 * (n + 1) <= L:
        n += 1
    return n


def derive_seed(base: int, index: int) -> int:
    """Independent 32-bit seed for sample ``index`` of a stream seeded by ``base``."""
    return int(np.random.SeedSequence([base, index]).generate_state(1)[0])


def normalize(x: np.ndarray) -> np.ndarray:
    return x / np.max(np.abs(x), axis=-1, keepdims=True)


def _rngs(spec: TaskSpec, start: int, count: int):
    return [np.random.default_rng([spec.seed, start + i]) for i in range(count)]


def _normal_rows(rngs, n: int) -> np.ndarray:
    return normalize(np.stack([r.standard_normal(n) for r in rngs]))


def shift_targets(x: np.ndarray, C: int) -> np.ndarray:
    B, L = x.shape
    if L % C:
        raise ValueError(f"C={C} must divide L={L}")
    y = np.zeros((B, L, C))
    for j in range(C):
        s = j * L // C
        y[:, s:, j] = x[:, : L - s]
    return y


def gen_shift(spec, start, count):
    x = _normal_rows(_rngs(spec, start, count), spec.L)
    return x[..., None], shift_targets(x, spec.C), {}


def gen_cumsum(spec, start, count):
    x = _normal_rows(_rngs(spec, start, count), spec.L)
    y = np.cumsum(x, axis=-1) / np.sqrt(np.arange(1, spec.L + 1))
    return x[..., None], y[..., None], {}


def gen_cummax(spec, start, count):
    x = _normal_rows(_rngs(spec, start, count), spec.L)
    return x[..., None], np.maximum.accumulate(x, axis=-1)[..., None], {}


def _pad_right(x: np.ndarray, n: int) -> np.ndarray:
    return np.concatenate([x, np.zeros(x.shape[:-1] + (n,))], axis=-1)


def gen_reverse(spec, start, count):
    x = _normal_rows(_rngs(spec, start, count), spec.L)
    return _pad_right(x, spec.L)[..., None], x[:, ::-1, None].copy(), {}


def sort_by_distance(x: np.ndarray) -> np.ndarray:
    """Entries ordered by ``|x_i - x_0|``; ties keep original index order."""
    order = np.argsort(np.abs(x - x[..., :1]), axis=-1, kind="stable")
    return np.take_along_axis(x, order, axis=-1)


def gen_sort(spec, start, count):
    x = _normal_rows(_rngs(spec, start, count), spec.L)
    return _pad_right(x, spec.L)[..., None], sort_by_distance(x)[..., None], {}


def _positions(rng, L: int, M: int) -> np.ndarray:
    if M >= L:
        raise ValueError(f"M={M} must be < L={L}")
    return np.sort(rng.choice(L + M, size=M, replace=False))


def select_inputs(x: np.ndarray, positions: np.ndarray, M: int):
    """Pad by M zeros and attach the 0/1 indicator channel; target is ``x[positions]``."""
    B, n = x.shape
    ind = np.zeros((B, n + M))
    np.put_along_axis(ind, positions, 1.0, axis=-1)
    inp = np.stack([_pad_right(x, M), ind], axis=-1)
    return inp, np.take_along_axis(x, positions, axis=-1)[..., None]


def gen_select(spec, start, count, fixed=False):
    rngs = _rngs(spec, start, count)
    n = spec.L + spec.M
    x = normalize(np.stack([r.standard_normal(n) for r in rngs]))
    if fixed:
        pos = _positions(np.random.default_rng([spec.fixed_seed, 0]), spec.L, spec.M)
        positions = np.broadcast_to(pos, (count, spec.M)).copy()
    else:
        positions = np.stack([_positions(r, spec.L, spec.M) for r in rngs])
    inp, y = select_inputs(x, positions, spec.M)
    return inp, y, {"positions": positions}


def mips_targets(q: np.ndarray, k: np.ndarray, v: np.ndarray) -> np.ndarray:
    """``y_i = v[argmax_{j <= i} <q_i, k_j>]``, smallest index on ties."""
    scores = q @ np.swapaxes(k, -1, -2)
    L = q.shape[-2]
    scores = np.where(np.tril(np.ones((L, L), dtype=bool)), scores, -np.inf)
    idx = np.argmax(scores, axis=-1)
    return np.take_along_axis(v, idx[..., None], axis=-2)


def gen_mips(spec, start, count):
    rngs = _rngs(spec, start, count)
    qkv = np.stack([r.standard_normal((3, spec.L, spec.D)) for r in rngs])
    qkv /= np.linalg.norm(qkv, axis=-1, keepdims=True)
    q, k, v = qkv[:, 0], qkv[:, 1], qkv[:, 2]
    return np.concatenate([q, k, v], axis=-1), mips_targets(q, k, v), {}


def context_shift_sample(x: np.ndarray, s: int, L: int) -> tuple[np.ndarray, np.ndarray]:
    ang = 2 * np.pi * s / L
    xp = np.concatenate([[np.cos(ang), np.sin(ang)], x])
    y = np.zeros(L)
    y[s:] = xp[: L - s]
    return xp, y


def gen_context_shift(spec, start, count):
    if spec.L < 3:
        raise ValueError("context shift needs L >= 3")
    xs, ys, shifts = [], [], []
    for r in _rngs(spec, start, count):
        x = normalize(r.standard_normal(spec.L - 2))
        s = int(r.integers(0, spec.L - 1))
        xp, y = context_shift_sample(x, s, spec.L)
        xs.append(xp)
        ys.append(y)
        shifts.append(s)
    return np.stack(xs)[..., None], np.stack(ys)[..., None], {"shifts": np.array(shifts)}


def random_orthonormal(rng, n: int) -> np.ndarray:
    """QR of a Gaussian matrix with R's diagonal forced positive."""
    Q, R = np.linalg.qr(rng.standard_normal((n, n)))
    return Q * np.sign(np.diag(R))


def solve_input(A: np.ndarray, B: np.ndarray, L: int) -> np.ndarray:
    rows = np.concatenate([A, B[:, None]], axis=1).reshape(-1)
    return _pad_right(rows, L - rows.size)


def gen_solve(spec, start, count, fixed=False):
    n = spec.solve_n
    if n < 1:
        raise ValueError("solve needs L >= 3")
    fixed_A = random_orthonormal(np.random.default_rng([spec.fixed_seed, 1]), n) if fixed else None
    xs, ys, As = [], [], []
    for r in _rngs(spec, start, count):
        A = fixed_A if fixed else random_orthonormal(r, n)
        X = r.standard_normal(n)
        X /= np.linalg.norm(X)
        xs.append(solve_input(A, A @ X, spec.L))
        ys.append(X)
        As.append(A)
    return np.stack(xs)[..., None], np.stack(ys)[..., None], {"A": np.stack(As)}


_GENERATORS = {
    "shift": gen_shift,
    "cumsum": gen_cumsum,
    "cummax": gen_cummax,
    "reverse": gen_reverse,
    "sort": gen_sort,
    "select": gen_select,
    "select_fixed": lambda s, a, c: gen_select(s, a, c, fixed=True),
    "mips": gen_mips,
    "context_shift": gen_context_shift,
    "solve": gen_solve,
    "solve_fixed": lambda s, a, c: gen_solve(s, a, c, fixed=True),
}


def generate(spec: TaskSpec, count: int, start: int = 0, positional: bool = True) -> TaskBatch:
    """Samples ``start .. start+count-1`` of the task stream defined by ``spec``."""
    x, y, meta = _GENERATORS[spec.task](spec, start, count)
    if positional:
        x = augment_positional(x)
    return TaskBatch(x=x, y=y, meta=meta)


def task_dims(spec: TaskSpec) -> tuple[int, int, int, int]:
    """(input length T, input channels with positional, output length L', output channels)."""
    b = generate(replace(spec), 1)
    return b.x.shape[1], b.x.shape[2], b.y.shape[1], b.y.shape[2]
