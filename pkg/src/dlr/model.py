"""DLR layers, stacks, positional features and checkpoint I/O."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from dlr import autodiff as ad
from dlr.errors import ShapeError
from dlr.kernels import DlrParams, init_dlr

CHECKPOINT_VERSION = 1


@dataclass
class ModelConfig:
    d_in: int
    d_out: int
    H: int = 16
    N: int = 256
    layers: int = 1
    cast_mode: str = "real"
    bidirectional: bool = False
    real_params: bool = False  # real-restricted spectrum and read-out
    layer_norm: bool = True
    init_scheme: str = "default"
    out_len: int | None = None  # rightmost positions kept; None keeps all
    seed: int = 0


def augment_positional(x: np.ndarray) -> np.ndarray:
    """Append ``cos(2 pi i / T)`` and ``sin(2 pi i / T)`` channels to (B, T, D) input."""
    x = np.asarray(x)
    T = x.shape[-2]
    ang = 2 * np.pi * np.arange(T) / T
    pos = np.stack([np.cos(ang), np.sin(ang)], axis=-1)
    pos = np.broadcast_to(pos, x.shape[:-2] + (T, 2))
    return np.concatenate([x, pos.astype(x.dtype, copy=False)], axis=-1)


def gelu(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1.0 + np.tanh(np.sqrt(2.0 / np.pi) * (x + 0.044715 * x**3)))


class DlrModel:
    """Encoder -> DLR layers -> decoder, with all parameters held as named tensors.

    Each layer computes ``GELU(conv(u, K) + u) @ W_out`` (then layer norm when
    enabled). DLR parameters carry the ``.dlr.`` infix so the optimizer can
    exempt them from weight decay.
    """

    def __init__(self, cfg: ModelConfig):
        self.cfg = cfg
        rng = np.random.default_rng(cfg.seed)
        H = cfg.H
        self.params: dict[str, ad.Tensor] = {}
        self._add("enc.W", rng.normal(0, 1 / np.sqrt(cfg.d_in), (cfg.d_in, H)))
        self._add("enc.b", np.zeros(H))
        for i in range(cfg.layers):
            dirs = ("fwd", "bwd") if cfg.bidirectional else ("fwd",)
            for j, d in enumerate(dirs):
                p = init_dlr(cfg.N, H, seed=cfg.seed * 1000 + 2 * i + j + 1, scheme=cfg.init_scheme)
                self._add_dlr(f"layer{i}.dlr.{d}", p)
            self._add(f"layer{i}.W_out", rng.normal(0, 1 / np.sqrt(H), (H, H)))
            if cfg.layer_norm:
                self._add(f"layer{i}.ln.g", np.ones(H))
                self._add(f"layer{i}.ln.b", np.zeros(H))
        self._add("dec.W", rng.normal(0, 1 / np.sqrt(H), (H, cfg.d_out)))
        self._add("dec.b", np.zeros(cfg.d_out))

    def _add(self, name: str, value) -> None:
        self.params[name] = ad.Tensor(np.asarray(value, dtype=np.float64), requires_grad=True, name=name)

    def _add_dlr(self, prefix: str, p: DlrParams) -> None:
        if self.cfg.real_params:
            self._add(prefix + ".log_re", p.log_re)
            self._add(prefix + ".W", p.W.real[..., None])
        else:
            self._add(prefix + ".log_re", p.log_re)
            self._add(prefix + ".log_im", p.log_im)
            self._add(prefix + ".W", np.stack([p.W.real, p.W.imag], axis=-1))

    # -- forward --------------------------------------------------------------

    def kernel(self, prefix: str, L: int) -> ad.Tensor:
        P = self.params
        return ad.dlr_kernel(P[prefix + ".log_re"], P.get(prefix + ".log_im"),
                             P[prefix + ".W"], L, self.cfg.cast_mode)

    def layer_forward(self, i: int, u: ad.Tensor) -> ad.Tensor:
        """``u`` is (B, L, H)."""
        cfg, P = self.cfg, self.params
        if u.shape[-1] != cfg.H:
            raise ShapeError(f"layer expects {cfg.H} channels, got {u.shape[-1]}")
        L = u.shape[1]
        Kf = self.kernel(f"layer{i}.dlr.fwd", L)
        Kb = self.kernel(f"layer{i}.dlr.bwd", L) if cfg.bidirectional else None
        y = ad.transpose(ad.fft_conv(ad.transpose(u, (0, 2, 1)), Kf, Kb), (0, 2, 1))
        out = ad.linear(ad.gelu(ad.add(y, u)), P[f"layer{i}.W_out"])
        if cfg.layer_norm:
            out = ad.layer_norm(out, P[f"layer{i}.ln.g"], P[f"layer{i}.ln.b"])
        return out

    def forward(self, x) -> ad.Tensor:
        """(B, L, d_in) -> (B, L', d_out) with L' the rightmost ``out_len`` positions."""
        cfg, P = self.cfg, self.params
        x = ad.constant(np.asarray(x, dtype=np.float64) if not isinstance(x, ad.Tensor) else x)
        if x.shape[-1] != cfg.d_in:
            raise ShapeError(f"model expects {cfg.d_in} input channels, got {x.shape[-1]}")
        h = ad.linear(x, P["enc.W"], P["enc.b"])
        for i in range(cfg.layers):
            h = self.layer_forward(i, h)
        out = ad.linear(h, P["dec.W"], P["dec.b"])
        if cfg.out_len is not None:
            if cfg.out_len > out.shape[1]:
                raise ShapeError(f"out_len {cfg.out_len} exceeds sequence length {out.shape[1]}")
            out = ad.take_last(out, cfg.out_len, axis=1)
        return out

    def predict(self, x) -> np.ndarray:
        return self.forward(x).value

    # -- bookkeeping ----------------------------------------------------------

    def num_params(self) -> int:
        return sum(t.value.size for t in self.params.values())

    def expected_num_params(self) -> int:
        cfg = self.cfg
        dirs = 2 if cfg.bidirectional else 1
        dlr = (cfg.N + cfg.H * cfg.N) if cfg.real_params else (2 * cfg.N + 2 * cfg.H * cfg.N)
        per_layer = dirs * dlr + cfg.H * cfg.H + (2 * cfg.H if cfg.layer_norm else 0)
        return (cfg.d_in * cfg.H + cfg.H) + cfg.layers * per_layer + (cfg.H * cfg.d_out + cfg.d_out)

    def dlr_param_names(self) -> list[str]:
        return [k for k in self.params if ".dlr." in k]

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: t.value for k, t in self.params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        for k, t in self.params.items():
            if state[k].shape != t.value.shape:
                raise ShapeError(f"{k}: checkpoint shape {state[k].shape} != {t.value.shape}")
            t.value = np.array(state[k], dtype=np.float64)


def config_hash(d: dict) -> str:
    return hashlib.sha256(json.dumps(d, sort_keys=True, default=str).encode()).hexdigest()[:16]


def save_checkpoint(path, model: DlrModel, extra: dict | None = None,
                    arrays: dict[str, np.ndarray] | None = None) -> None:
    """Write ``<path>.bin`` (little-endian float64, concatenated) and ``<path>.json`` manifest.

    ``arrays`` holds additional float64 buffers (e.g. optimizer moments) stored
    after the model parameters.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    entries, offset, chunks = [], 0, []
    items = list(model.state_dict().items()) + list((arrays or {}).items())
    for name, value in items:
        buf = np.ascontiguousarray(value, dtype="<f8")
        entries.append({"name": name, "shape": list(buf.shape), "offset": offset})
        offset += buf.size
        chunks.append(buf.reshape(-1))
    manifest = {
        "format_version": CHECKPOINT_VERSION,
        "model_config": asdict(model.cfg),
        "config_hash": config_hash(asdict(model.cfg)),
        "tensors": entries,
        "n_model_tensors": len(model.params),
        **(extra or {}),
    }
    (np.concatenate(chunks) if chunks else np.zeros(0, "<f8")).tofile(path.with_suffix(".bin"))
    path.with_suffix(".json").write_text(json.dumps(manifest, indent=1))


def load_checkpoint(path) -> tuple[DlrModel, dict, dict[str, np.ndarray]]:
    path = Path(path)
    manifest = json.loads(path.with_suffix(".json").read_text())
    if manifest.get("format_version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {manifest.get('format_version')}")
    flat = np.fromfile(path.with_suffix(".bin"), dtype="<f8")
    tensors = {}
    for e in manifest["tensors"]:
        size = int(np.prod(e["shape"], dtype=np.int64))
        if e["offset"] + size > flat.size:
            raise ValueError(f"checkpoint payload truncated at {e['name']}")
        tensors[e["name"]] = flat[e["offset"]: e["offset"] + size].reshape(e["shape"]).astype(np.float64)
    model = DlrModel(ModelConfig(**manifest["model_config"]))
    names = [e["name"] for e in manifest["tensors"]]
    model_names = names[: manifest["n_model_tensors"]]
    model.load_state_dict({k: tensors[k] for k in model_names})
    extras = {k: tensors[k] for k in names[manifest["n_model_tensors"]:]}
    return model, manifest, extras
