"""``dlr`` command line: gen-data, train, eval, bench, analyze."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict, fields
from pathlib import Path

import numpy as np

from dlr import __version__
from dlr.errors import DlrError

log = logging.getLogger("dlr")

RUN_KEYS = {"out_dir": str, "checkpoint_every": int, "eval_dataset": str}


# ---- config files -----------------------------------------------------------

def _coerce(value: str, default):
    if isinstance(default, bool):
        if value.lower() in ("1", "true", "yes", "on"):
            return True
        if value.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {value!r}")
    if isinstance(default, int):
        return int(value)
    if isinstance(default, float) or default is None:
        if value.lower() in ("none", ""):
            return None
        return float(value)
    return value


def parse_config_text(text: str) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected key = value")
        k, v = (s.strip() for s in line.split("=", 1))
        out[k] = v
    return out


def build_experiment(raw: dict):
    from dlr.training import TrainConfig
    defaults = TrainConfig()
    train_kw, run = {}, {"out_dir": "runs/default", "checkpoint_every": 1000, "eval_dataset": None}
    names = {f.name for f in fields(TrainConfig)}
    for k, v in raw.items():
        if k in names:
            train_kw[k] = _coerce(v, getattr(defaults, k)) if isinstance(v, str) else v
        elif k in RUN_KEYS:
            run[k] = RUN_KEYS[k](v)
        else:
            raise ValueError(f"unknown config key {k!r}")
    return TrainConfig(**train_kw), run


def format_config(cfg, run: dict) -> str:
    lines = [f"{k} = {v}" for k, v in asdict(cfg).items()]
    lines += [f"{k} = {v}" for k, v in run.items() if v is not None]
    return "\n".join(lines) + "\n"


# ---- gen-data -----------------------------------------------------------------

def cmd_gen_data(args) -> dict:
    from dlr import dataset, listops, pathfinder, tasks
    extra = {}
    if args.task == "listops":
        samples = [listops.gen_listops(args.min_len, args.max_len, seed=tasks.derive_seed(args.seed, i))
                   for i in range(args.count)]
        ids, tags = listops.encode(samples, args.max_len)
        arrays = {"tokens": ids, "tags": tags,
                  "length": np.array([len(s.tokens) for s in samples], dtype=np.int64)}
        extra = {"vocab": list(listops.VOCAB), "min_len": args.min_len, "max_len": args.max_len}
        stats = {"min_length": int(arrays["length"].min()), "max_length": int(arrays["length"].max()),
                 "tagged_tokens": int((tags != listops.IGNORE).sum())}
    elif args.task == "pathfinder":
        samples = [pathfinder.gen_pathfinder(args.image_size, seed=tasks.derive_seed(args.seed, i))
                   for i in range(args.count)]
        arrays = {"image": pathfinder.flatten(np.stack([s.image for s in samples])),
                  "mask": pathfinder.flatten(np.stack([s.mask for s in samples])).astype(np.int64)}
        extra = {"image_size": args.image_size}
        counts = np.bincount(arrays["mask"].ravel(), minlength=3)
        stats = {"class_fractions": (counts / counts.sum()).round(6).tolist()}
        if args.png_dir:
            from dlr.plotting import plot_pathfinder
            for i, s in enumerate(samples[: args.png_count]):
                plot_pathfinder(s.image, s.mask, Path(args.png_dir) / f"sample_{i:04d}.png")
    else:
        spec = tasks.TaskSpec(args.task, args.L, C=args.C, M=args.M, D=args.D, seed=args.seed)
        b = tasks.generate(spec, args.count)
        arrays = {"x": b.x, "y": b.y}
        extra = {"L": args.L, "C": args.C, "M": args.M, "D": args.D}
        stats = {"y_mean": float(b.y.mean()), "y_std": float(b.y.std())}
    header = dataset.write_dataset(args.out, arrays, task=args.task, seed=args.seed,
                                   dtype=args.dtype, extra={"params": extra})
    summary = {"path": str(args.out), "count": header["count"],
               "shapes": {f["name"]: f["shape"] for f in header["fields"]}, **stats}
    print(json.dumps(summary))
    return summary


# ---- train --------------------------------------------------------------------

def _latest_checkpoint(run_dir: Path):
    ckpts = sorted(run_dir.glob("ckpt_*.json"), key=lambda p: int(p.stem.split("_")[1]))
    return ckpts[-1].with_suffix("") if ckpts else None


def _save_trainer(trainer, run_dir: Path, cfg_hash: str) -> None:
    from dlr.model import save_checkpoint
    arrays = {}
    for k in trainer.model.params:
        if k in trainer.opt.m:
            arrays[f"adam.m.{k}"] = trainer.opt.m[k]
            arrays[f"adam.v.{k}"] = trainer.opt.v[k]
    save_checkpoint(run_dir / f"ckpt_{trainer.step}", trainer.model,
                    extra={"step": trainer.step, "adam_step": trainer.opt.step,
                           "train_config": asdict(trainer.cfg), "train_config_hash": cfg_hash},
                    arrays=arrays)


def _load_trainer(ckpt: Path, cfg):
    from dlr.model import load_checkpoint
    from dlr.training import AdamState, Trainer
    model, manifest, extras = load_checkpoint(ckpt)
    opt = AdamState(step=manifest["adam_step"])
    for k, v in extras.items():
        kind, name = k.split(".", 2)[1], k.split(".", 2)[2]
        (opt.m if kind == "m" else opt.v)[name] = v
    return Trainer(cfg, model=model, opt_state=opt, start_step=manifest["step"])


class RunLock:
    def __init__(self, run_dir: Path):
        self.path = run_dir / ".lock"

    def __enter__(self):
        try:
            fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise DlrError(f"run directory locked by another process: {self.path}") from None
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        return self

    def __exit__(self, *exc):
        self.path.unlink(missing_ok=True)
        return False


def cmd_train(args) -> Path:
    from dlr.model import config_hash
    from dlr.plotting import plot_training
    from dlr.training import Trainer, make_stream, stream_key

    raw = parse_config_text(Path(args.config).read_text())
    for kv in args.set or []:
        k, v = kv.split("=", 1)
        raw[k.strip()] = v.strip()
    if args.out_dir:
        raw["out_dir"] = args.out_dir
    cfg, run = build_experiment(raw)
    run_dir = Path(run["out_dir"])
    run_dir.mkdir(parents=True, exist_ok=True)
    chash = config_hash(asdict(cfg))
    with RunLock(run_dir):
        ckpt = _latest_checkpoint(run_dir) if args.resume else None
        trainer = _load_trainer(ckpt, cfg) if ckpt else Trainer(cfg)
        (run_dir / "config.txt").write_text(f"# config_hash = {chash}\n" + format_config(cfg, run))
        metrics_path = run_dir / "metrics.jsonl"
        mode = "a" if ckpt else "w"
        if ckpt:
            # drop records past the checkpoint so the stream stays consistent
            kept = [ln for ln in metrics_path.read_text().splitlines()
                    if ln and json.loads(ln).get("step", 0) <= trainer.step] if metrics_path.exists() else []
            metrics_path.write_text("".join(k + "\n" for k in kept))
        every = max(1, run["checkpoint_every"])
        with open(metrics_path, mode) as sink:
            if not ckpt:
                sink.write(json.dumps({"format_version": 1, "config_hash": chash}) + "\n")
            while trainer.step < cfg.steps:
                chunk = min(every - trainer.step % every, cfg.steps - trainer.step)
                m = trainer.run(steps=chunk, sink=sink)
                _save_trainer(trainer, run_dir, chash)
                if cfg.target_metric is not None and m.final_metric is not None \
                        and m.final_metric >= cfg.target_metric:
                    break
            if cfg.steps == 0:
                trainer.run(steps=0, sink=sink)
                _save_trainer(trainer, run_dir, chash)
        records = [json.loads(ln) for ln in metrics_path.read_text().splitlines()[1:] if ln]
        plot_training(records, stream_key(make_stream(cfg)), run_dir / "training.png")
        summary = {"run_dir": str(run_dir), "steps": trainer.step, "config_hash": chash}
        if run["eval_dataset"]:
            from dlr.dataset import read_dataset
            header, arrays = read_dataset(run["eval_dataset"])
            summary["eval"] = evaluate_dataset(trainer.model, header, arrays)
            (run_dir / "eval.json").write_text(json.dumps(
                {"format_version": 1, "config_hash": chash, "dataset": run["eval_dataset"], **summary["eval"]}))
    print(json.dumps(summary))
    return run_dir


# ---- eval ---------------------------------------------------------------------

def evaluate_dataset(model, header: dict, arrays: dict, batch_size: int = 16) -> dict:
    """Metrics computed per batch and averaged over batches."""
    from dlr import listops
    from dlr.model import augment_positional
    from dlr.training import macro_scores, r2_score, token_accuracy
    task, count = header["task"], header["count"]
    per_batch = []
    for s in range(0, count, batch_size):
        sl = slice(s, min(count, s + batch_size))
        if task == "listops":
            x = augment_positional(listops.one_hot(arrays["tokens"][sl]))
            per_batch.append({"token_accuracy": token_accuracy(model.predict(x).argmax(-1), arrays["tags"][sl])})
        elif task == "pathfinder":
            x = augment_positional(arrays["image"][sl][..., None].astype(np.float64))
            f1, acc = macro_scores(model.predict(x).argmax(-1), arrays["mask"][sl])
            per_batch.append({"macro_f1": f1, "macro_accuracy": acc})
        else:
            per_batch.append({"r2": r2_score(model.predict(arrays["x"][sl]), arrays["y"][sl])})
    keys = per_batch[0].keys()
    return {k: float(np.mean([b[k] for b in per_batch])) for k in keys} | {"batches": len(per_batch)}


def cmd_eval(args) -> dict:
    from dlr.dataset import read_dataset
    from dlr.model import load_checkpoint
    model, manifest, _ = load_checkpoint(Path(args.checkpoint))
    header, arrays = read_dataset(args.dataset)
    report = {"checkpoint": str(args.checkpoint), "dataset": str(args.dataset), "task": header["task"],
              **evaluate_dataset(model, header, arrays, args.batch_size)}
    print(json.dumps(report))
    return report


# ---- bench / analyze ----------------------------------------------------------

def cmd_bench(args) -> list[dict]:
    from dlr.analysis import bench
    from dlr.plotting import plot_bench
    rows = bench(args.L, H=args.H, N=args.N, repeats=args.repeats)
    out = sys.stdout
    out.write("L\tscan_ms\tfft_ms\tconv_ms\tfft_speedup\n")
    for r in rows:
        out.write(f"{r['L']}\t{r['scan_ms']:.3f}\t{r['fft_ms']:.3f}\t{r['conv_ms']:.3f}\t"
                  f"{r['scan_ms'] / r['fft_ms']:.2f}\n")
    if args.out_dir:
        d = Path(args.out_dir)
        d.mkdir(parents=True, exist_ok=True)
        (d / "bench.json").write_text(json.dumps({"format_version": 1, "rows": rows}, indent=1))
        plot_bench(rows, d / "bench.png")
    return rows


def cmd_analyze(args) -> dict:
    from dlr import analysis, plotting
    if args.which == "vandermonde":
        report = analysis.vandermonde_report(range(2, args.max_n + 1))
    elif args.which == "prop1":
        report = analysis.prop1_report(seed=args.seed)
    else:
        report = analysis.dft_expressivity_report(seed=args.seed)
    report["format_version"] = 1
    print(json.dumps(report))
    if args.out_dir:
        d = Path(args.out_dir)
        d.mkdir(parents=True, exist_ok=True)
        (d / f"{args.which}.json").write_text(json.dumps(report, indent=1))
        if args.which == "vandermonde":
            plotting.plot_vandermonde(report["rows"], d / "vandermonde.png")
        elif args.which == "prop1":
            plotting.plot_errors(report["relative_errors"], "relative output error", d / "prop1.png")
    return report


# ---- entry point --------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dlr", description=__doc__)
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="write a synthetic dataset file")
    g.add_argument("task")
    g.add_argument("--L", type=int, default=256)
    g.add_argument("--count", type=int, default=100)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", type=Path, required=True)
    g.add_argument("--dtype", choices=("f64", "f32"), default="f64")
    g.add_argument("--C", type=int, default=8)
    g.add_argument("--M", type=int, default=32)
    g.add_argument("--D", type=int, default=4)
    g.add_argument("--min-len", type=int, default=64)
    g.add_argument("--max-len", type=int, default=128)
    g.add_argument("--image-size", type=int, default=64)
    g.add_argument("--png-dir", type=Path)
    g.add_argument("--png-count", type=int, default=8)
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="train from a key = value config file")
    t.add_argument("config")
    t.add_argument("--out-dir")
    t.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
    t.add_argument("--resume", action="store_true", help="continue from the latest checkpoint")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint on a dataset file")
    e.add_argument("checkpoint")
    e.add_argument("dataset")
    e.add_argument("--batch-size", type=int, default=16)
    e.set_defaults(func=cmd_eval)

    b = sub.add_parser("bench", help="time sequential scan vs FFT convolution")
    b.add_argument("--L", type=int, nargs="+", default=[2**12, 2**14, 2**15, 2**16, 2**17])
    b.add_argument("--H", type=int, default=4)
    b.add_argument("--N", type=int, default=64)
    b.add_argument("--repeats", type=int, default=3)
    b.add_argument("--out-dir")
    b.set_defaults(func=cmd_bench)

    a = sub.add_parser("analyze", help="analytical reports as JSON")
    a.add_argument("which", choices=("vandermonde", "prop1", "dft_expressivity"))
    a.add_argument("--max-n", type=int, default=16)
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--out-dir")
    a.set_defaults(func=cmd_analyze)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (DlrError, ValueError, OSError, KeyError) as exc:
        code = getattr(exc, "code", type(exc).__name__)
        sys.stderr.write(json.dumps({"error": code, "message": str(exc)}) + "\n")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
