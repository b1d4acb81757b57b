"""Losses, metrics, Adam, the training loop and gradient verification."""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from dlr import autodiff as ad
from dlr import listops, pathfinder
from dlr.errors import DegenerateBaseline, Diverged
from dlr.model import DlrModel, ModelConfig, augment_positional
from dlr.tasks import TaskSpec, derive_seed, generate

log = logging.getLogger(__name__)

EVAL_SEED_OFFSET = 10_000_019


# ---- losses and metrics ----------------------------------------------------

def mse_loss(pred, target) -> float:
    pred, target = np.asarray(pred), np.asarray(target)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {target.shape}")
    return float(np.mean((pred - target) ** 2))


def r2_score(pred, target) -> float:
    """``1 - MSE(pred, target) / MSE(mean(target), target)`` with a scalar batch mean."""
    pred, target = np.asarray(pred), np.asarray(target)
    baseline = float(np.mean((target - target.mean()) ** 2))
    if baseline == 0.0:
        raise DegenerateBaseline("degenerate baseline: constant target")
    return 1.0 - mse_loss(pred, target) / baseline


def token_accuracy(pred_labels, labels, ignore_index: int = -1) -> float:
    keep = labels != ignore_index
    return float(np.mean(pred_labels[keep] == labels[keep])) if keep.any() else float("nan")


def macro_scores(pred_labels, labels, n_classes: int = 3) -> tuple[float, float]:
    """(macro F1, macro accuracy): per-class F1 and per-class recall averaged over classes.

    Classes absent from both prediction and labels count as perfect.
    """
    f1s, accs = [], []
    for c in range(n_classes):
        tp = np.sum((pred_labels == c) & (labels == c))
        fp = np.sum((pred_labels == c) & (labels != c))
        fn = np.sum((pred_labels != c) & (labels == c))
        f1s.append(1.0 if tp + fp + fn == 0 else 2 * tp / (2 * tp + fp + fn))
        accs.append(1.0 if tp + fn == 0 else tp / (tp + fn))
    return float(np.mean(f1s)), float(np.mean(accs))


# ---- optimizer --------------------------------------------------------------

@dataclass
class AdamState:
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict, grads: dict, state: AdamState, lr: float,
              betas=(0.9, 0.999), eps: float = 1e-8, weight_decay: float = 0.0,
              no_decay: set | frozenset = frozenset()) -> AdamState:
    """In-place Adam with bias correction and decoupled weight decay.

    ``params`` maps names to arrays; parameters listed in ``no_decay`` (the DLR
    spectrum and read-out) never receive weight decay.
    """
    b1, b2 = betas
    state.step += 1
    c1 = 1 - b1**state.step
    c2 = 1 - b2**state.step
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            continue
        m = state.m.setdefault(name, np.zeros_like(p))
        v = state.v.setdefault(name, np.zeros_like(p))
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        if weight_decay and name not in no_decay:
            p -= lr * weight_decay * p
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return state


def learning_rate(step: int, base: float, schedule: str, total: int, warmup: int) -> float:
    if schedule == "constant":
        return base
    if schedule == "cosine":
        if step < warmup:
            return base * (step + 1) / warmup
        progress = (step - warmup) / max(1, total - warmup)
        return base * 0.5 * (1 + math.cos(math.pi * min(progress, 1.0)))
    raise ValueError(f"unknown schedule {schedule!r}")


# ---- configuration ----------------------------------------------------------

@dataclass
class TrainConfig:
    task: str = "cumsum"
    L: int = 128
    H: int = 16
    N: int = 128
    layers: int = 1
    cast_mode: str = "real"
    bidirectional: bool = False
    real_params: bool = False
    layer_norm: bool = True
    init_scheme: str = "default"
    lr: float = 1e-4
    schedule: str = "constant"
    warmup_steps: int = 0
    batch_size: int = 16
    steps: int = 1000
    seed: int = 0
    weight_decay: float = 0.0
    precision: str = "f64"
    eval_every: int = 200
    eval_batches: int = 16
    target_metric: float | None = None  # stop early once eval metric reaches this
    # task constants
    C: int = 8
    M: int = 32
    D: int = 4
    listops_min_len: int = 64
    listops_max_len: int = 128
    image_size: int = 64

    def __post_init__(self):
        if min(self.L, self.H, self.N, self.layers, self.batch_size) < 1 or self.steps < 0:
            raise ValueError("sizes must be positive")
        if not self.lr > 0:
            raise ValueError("lr must be > 0")
        if self.precision not in ("f64", "f32"):
            raise ValueError("precision must be f64 or f32")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name: f for f in fields(cls)}
        unknown = set(d) - set(known)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class RunMetrics:
    records: list = field(default_factory=list)  # one dict per step
    evals: list = field(default_factory=list)  # (step, metric)
    final_metric: float | None = None
    diverged: bool = False

    @property
    def losses(self) -> list:
        return [r["loss"] for r in self.records if r.get("loss") is not None]


# ---- task streams -----------------------------------------------------------

class TaskStream:
    """Fresh batches for a task plus the matching loss and evaluation metric."""

    metric_name = "r2"

    def __init__(self, cfg: TrainConfig):
        self.cfg = cfg
        self.spec = TaskSpec(cfg.task, cfg.L, C=cfg.C, M=cfg.M, D=cfg.D, seed=cfg.seed)
        probe = generate(self.spec, 1)
        self.d_in, self.d_out, self.out_len = probe.x.shape[2], probe.y.shape[2], probe.y.shape[1]

    def batch(self, index: int, eval_stream: bool = False):
        spec = self.spec
        if eval_stream:
            spec = replace(spec, seed=spec.seed + EVAL_SEED_OFFSET)
        b = generate(spec, self.cfg.batch_size, start=index * self.cfg.batch_size)
        return b.x, b.y

    def loss(self, pred: ad.Tensor, y) -> ad.Tensor:
        return ad.mse(pred, y)

    def metric(self, pred: np.ndarray, y) -> float:
        return r2_score(pred, y)


class ListopsStream(TaskStream):
    metric_name = "token_accuracy"

    def __init__(self, cfg: TrainConfig):
        self.cfg = cfg
        self.d_in = len(listops.VOCAB) + 2
        self.d_out = 10
        self.out_len = None

    def batch(self, index: int, eval_stream: bool = False):
        base = self.cfg.seed + (EVAL_SEED_OFFSET if eval_stream else 0)
        B = self.cfg.batch_size
        samples = [listops.gen_listops(self.cfg.listops_min_len, self.cfg.listops_max_len,
                                       seed=derive_seed(base, index * B + i))
                   for i in range(B)]
        ids, tags = listops.encode(samples, self.cfg.listops_max_len)
        return augment_positional(listops.one_hot(ids)), tags

    def loss(self, pred, y):
        return ad.cross_entropy(pred, y, ignore_index=listops.IGNORE)

    def metric(self, pred, y):
        return token_accuracy(pred.argmax(-1), y, listops.IGNORE)


class PathfinderStream(TaskStream):
    metric_name = "macro_accuracy"

    def __init__(self, cfg: TrainConfig):
        self.cfg = cfg
        self.d_in = 3
        self.d_out = 3
        self.out_len = None

    def batch(self, index: int, eval_stream: bool = False):
        base = self.cfg.seed + (EVAL_SEED_OFFSET if eval_stream else 0)
        B = self.cfg.batch_size
        samples = [pathfinder.gen_pathfinder(self.cfg.image_size, seed=derive_seed(base, index * B + i))
                   for i in range(B)]
        x = pathfinder.flatten(np.stack([s.image for s in samples]))[..., None]
        y = pathfinder.flatten(np.stack([s.mask for s in samples]))
        return augment_positional(x), y

    def loss(self, pred, y):
        return ad.cross_entropy(pred, y)

    def metric(self, pred, y):
        return macro_scores(pred.argmax(-1), y)[1]


def make_stream(cfg: TrainConfig) -> TaskStream:
    if cfg.task == "listops":
        return ListopsStream(cfg)
    if cfg.task == "pathfinder":
        return PathfinderStream(cfg)
    return TaskStream(cfg)


def build_model(cfg: TrainConfig, stream: TaskStream) -> DlrModel:
    return DlrModel(ModelConfig(
        d_in=stream.d_in, d_out=stream.d_out, H=cfg.H, N=cfg.N, layers=cfg.layers,
        cast_mode=cfg.cast_mode, bidirectional=cfg.bidirectional, real_params=cfg.real_params,
        layer_norm=cfg.layer_norm, init_scheme=cfg.init_scheme, out_len=stream.out_len,
        seed=cfg.seed))


# ---- training ---------------------------------------------------------------

def evaluate(model: DlrModel, stream: TaskStream, batches: int, offset: int = 0) -> float:
    """Metric averaged over ``batches`` fresh evaluation batches."""
    scores = []
    for i in range(batches):
        x, y = stream.batch(offset + i, eval_stream=True)
        scores.append(stream.metric(model.predict(x), y))
    return float(np.mean(scores))


def train_step(model: DlrModel, stream: TaskStream, x, y) -> float:
    for t in model.params.values():
        t.zero_grad()
    with ad.Tape() as tape:
        loss = stream.loss(model.forward(x), y)
    ad.backward(tape, loss)
    return float(loss.value)


class Trainer:
    """Owns model, optimizer state and the step counter; resumable from checkpoints."""

    def __init__(self, cfg: TrainConfig, model: DlrModel | None = None,
                 opt_state: AdamState | None = None, start_step: int = 0):
        self.cfg = cfg
        self.stream = make_stream(cfg)
        self.model = model or build_model(cfg, self.stream)
        if cfg.precision == "f32":
            for t in self.model.params.values():
                t.value = t.value.astype(np.float32)
        self.opt = opt_state or AdamState()
        self.step = start_step
        self.no_decay = frozenset(self.model.dlr_param_names())

    def run(self, steps: int | None = None, sink=None, metrics: RunMetrics | None = None) -> RunMetrics:
        cfg = self.cfg
        metrics = metrics or RunMetrics()
        end = cfg.steps if steps is None else self.step + steps

        def emit(rec):
            metrics.records.append(rec)
            if sink is not None:
                sink.write(json.dumps(rec) + "\n")
                sink.flush()

        if self.step == 0 and end == 0:
            r = evaluate(self.model, self.stream, cfg.eval_batches)
            metrics.evals.append((0, r))
            metrics.final_metric = r
            emit({"step": 0, "loss": None, stream_key(self.stream): r, "ms_per_step": 0.0})
            return metrics

        while self.step < end:
            t0 = time.perf_counter()
            x, y = self.stream.batch(self.step)
            loss = train_step(self.model, self.stream, x, y)
            if not math.isfinite(loss):
                metrics.diverged = True
                emit({"step": self.step, "loss": None, "error": "diverged", "ms_per_step": None})
                raise Diverged(f"non-finite loss at step {self.step}")
            lr = learning_rate(self.step, cfg.lr, cfg.schedule, cfg.steps, cfg.warmup_steps)
            adam_step({k: t.value for k, t in self.model.params.items()},
                      {k: t.grad for k, t in self.model.params.items()},
                      self.opt, lr, weight_decay=cfg.weight_decay, no_decay=self.no_decay)
            ms = (time.perf_counter() - t0) * 1e3
            self.step += 1
            rec = {"step": self.step, "loss": loss, stream_key(self.stream): None, "ms_per_step": ms}
            if self.step % cfg.eval_every == 0 or self.step == end:
                r = evaluate(self.model, self.stream, cfg.eval_batches)
                rec[stream_key(self.stream)] = r
                metrics.evals.append((self.step, r))
                metrics.final_metric = r
                log.info("step %d loss %.5f %s %.4f", self.step, loss, stream_key(self.stream), r)
                if cfg.target_metric is not None and r >= cfg.target_metric:
                    emit(rec)
                    break
            emit(rec)
        return metrics


def stream_key(stream: TaskStream) -> str:
    return stream.metric_name


def train_loop(cfg: TrainConfig, sink=None) -> RunMetrics:
    """Train from scratch on fresh batches; metrics are streamed to ``sink`` as JSONL."""
    return Trainer(cfg).run(sink=sink)


# ---- gradient verification -------------------------------------------------

def finite_diff_check(model: DlrModel, x, y, samples: int = 64, h: float = 1e-5,
                      seed: int = 0, loss_fn=None) -> float:
    """Max relative error between backward() and central differences.

    Coordinates are sampled uniformly over all parameters. The relative error of a
    coordinate is ``|fd - an| / max(|fd|, |an|, 1e-4 * max|an|)``; the floor stops
    round-off on near-zero gradients from dominating.
    """
    loss_fn = loss_fn or (lambda pred, tgt: ad.mse(pred, tgt))

    def loss_value():
        return float(loss_fn(model.forward(x), y).value)

    for t in model.params.values():
        t.zero_grad()
    with ad.Tape() as tape:
        loss = loss_fn(model.forward(x), y)
    ad.backward(tape, loss)
    names = list(model.params)
    sizes = np.array([model.params[n].value.size for n in names])
    rng = np.random.default_rng(seed)
    flat_idx = rng.choice(sizes.sum(), size=min(samples, sizes.sum()), replace=False)
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    analytic, numeric = [], []
    for fi in flat_idx:
        k = int(np.searchsorted(offsets, fi, side="right") - 1)
        t = model.params[names[k]]
        j = fi - offsets[k]
        flat = t.value.reshape(-1)
        old = flat[j]
        flat[j] = old + h
        lp = loss_value()
        flat[j] = old - h
        lm = loss_value()
        flat[j] = old
        numeric.append((lp - lm) / (2 * h))
        analytic.append(0.0 if t.grad is None else t.grad.reshape(-1)[j])
    analytic, numeric = np.array(analytic), np.array(numeric)
    floor = max(1e-4 * np.max(np.abs(analytic)), 1e-12)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom))


def config_to_dict(cfg: TrainConfig) -> dict:
    return asdict(cfg)
