"""Command-line surface: prepare, train, evaluate, predict, bench-attention.

Configuration is a flat key=value text file with ``#`` comments; unknown keys
are rejected and command-line flags override file values.  Every command
echoes the effective configuration digest into each artifact it writes.
Exit codes: 0 success, 2 config/parse error, 3 data insufficiency,
4 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import sys
import time
from pathlib import Path

import numpy as np

from . import tensor as T
from .data import (build_prepared_dataset, config_digest, derive_soc,
                   load_dataset, parse_cycle_csv, parse_dataset, save_dataset,
                   SPLIT_NAMES)
from .errors import (ConfigError, DataError, DivergenceError, GiNetError,
                     ParseError)
from .gru import GruConfig
from .informer import InformerConfig, full_attention, probsparse_attention
from .model import GiNet, GiNetConfig, VARIANTS
from .tensor import Tensor
from .training import (Checkpoint, EpochLog, TrainConfig, evaluate,
                       load_checkpoint, save_checkpoint, train)

# every recognised config key with its default and parser
_BOOL_WORDS = {"on": True, "off": False, "true": True, "false": False,
               "yes": True, "no": False, "1": True, "0": False}


def _parse_bool(text: str) -> bool:
    try:
        return _BOOL_WORDS[text.strip().lower()]
    except KeyError:
        raise ConfigError(f"expected on/off, got {text!r}") from None


def _parse_label_len(text: str):
    return None if text.strip().lower() == "auto" else int(text)


CONFIG_SCHEMA: dict[str, tuple] = {
    # data pipeline
    "slot_seconds": (1.0, float),
    "capacity_ah": (2.9, float),
    "t_in": (100, int),
    "t_out": (10, int),
    "stride": (1, int),
    "split_train": (10, int),
    "split_val": (2, int),
    "split_test": (5, int),
    "seed": (0, int),
    # model
    "variant": ("ginet", str),
    "label_len": (None, _parse_label_len),
    "d_model": (512, int),
    "n_heads": (8, int),
    "d_ff": (2048, int),
    "e_layers": (2, int),
    "d_layers": (1, int),
    "attention": ("probsparse", str),
    "distill": (True, _parse_bool),
    "sampling_factor": (5, int),
    "gru_hidden": (1024, int),
    "gru_layers": (2, int),
    "gru_dropout": (0.2, float),
    # training
    "batch_size": (32, int),
    "lr": (1e-4, float),
    "max_epochs": (20, int),
    "patience": (3, int),
    "lr_decay": (0.5, float),
    "scheduler": (True, _parse_bool),
}


def load_config_file(path: str | Path) -> dict:
    """Parse a key=value config file, rejecting unknown keys."""
    values = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, text = (part.strip() for part in line.split("=", 1))
        if key not in CONFIG_SCHEMA:
            raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
        _, parse = CONFIG_SCHEMA[key]
        try:
            values[key] = parse(text)
        except (ValueError, ConfigError) as exc:
            raise ConfigError(f"{path}:{lineno}: bad value for {key}: {exc}") from None
    return values


def effective_config(args: argparse.Namespace) -> dict:
    """Defaults, then config file, then command-line flag overrides."""
    config = {key: default for key, (default, _) in CONFIG_SCHEMA.items()}
    if getattr(args, "config", None):
        config.update(load_config_file(args.config))
    overrides = {
        "seed": args.seed, "t_in": args.t_in, "t_out": args.t_out,
        "variant": args.variant, "e_layers": args.e_layers,
        "d_layers": args.d_layers,
    }
    if args.attention is not None:
        overrides["attention"] = args.attention
    if args.distill is not None:
        overrides["distill"] = args.distill == "on"
    config.update({k: v for k, v in overrides.items() if v is not None})
    if config["variant"] not in VARIANTS:
        raise ConfigError(f"unknown variant {config['variant']!r}")
    if config["attention"] not in ("probsparse", "full"):
        raise ConfigError(f"unknown attention {config['attention']!r}")
    return config


def model_config_from(config: dict, t_in: int, t_out: int,
                      slot_seconds: float) -> GiNetConfig:
    return GiNetConfig(
        t_in=t_in, t_out=t_out, label_len=config["label_len"],
        slot_seconds=slot_seconds, variant=config["variant"],
        gru=GruConfig(input_dim=3, hidden_dim=config["gru_hidden"],
                      num_layers=config["gru_layers"],
                      dropout=config["gru_dropout"]),
        informer=InformerConfig(
            d_model=config["d_model"], n_heads=config["n_heads"],
            d_ff=config["d_ff"], e_layers=config["e_layers"],
            d_layers=config["d_layers"],
            use_probsparse=config["attention"] == "probsparse",
            use_distill=config["distill"],
            sampling_factor=config["sampling_factor"]))


def train_config_from(config: dict) -> TrainConfig:
    return TrainConfig(batch_size=config["batch_size"], lr=config["lr"],
                       max_epochs=config["max_epochs"], patience=config["patience"],
                       lr_decay=config["lr_decay"],
                       use_scheduler=config["scheduler"], seed=config["seed"])


# ---------------------------------------------------------------------------
# commands


def cmd_prepare(args) -> int:
    config = effective_config(args)
    digest = config_digest(config)
    cycles = parse_dataset(args.raw_dir, config["slot_seconds"])
    cycles = [derive_soc(c, config["capacity_ah"]) for c in cycles]
    ratio = (config["split_train"], config["split_val"], config["split_test"])
    dataset = build_prepared_dataset(
        cycles, config["t_in"], config["t_out"],
        slot_seconds=config["slot_seconds"], stride=config["stride"],
        ratio=ratio, seed=config["seed"],
        provenance={"source": str(args.raw_dir), "t_in": config["t_in"],
                    "t_out": config["t_out"],
                    "slot_seconds": config["slot_seconds"],
                    "stride": config["stride"], "seed": config["seed"],
                    "capacity_ah": config["capacity_ah"], "ratio": list(ratio)},
        config_digest=digest)
    counts = {name: dataset.n_windows(name) for name in SPLIT_NAMES}
    if counts["train"] == 0 or counts["val"] == 0:
        raise DataError(f"too little data to train: window counts {counts}")
    save_dataset(dataset, args.out)
    print(f"config_digest: {digest[:12]}")
    for name in SPLIT_NAMES:
        print(f"{name}_windows: {counts[name]} "
              f"(cycles: {len(dataset.split_cycle_ids[name])})")
    print(f"wrote {args.out}")
    return 0


def _write_train_log(path: Path, history: list[EpochLog], digest: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# config_digest: {digest}\n")
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "val_loss", "lr"])
        for e in history:
            writer.writerow([e.epoch, repr(e.train_loss), repr(e.val_loss),
                             repr(e.lr)])


def cmd_train(args) -> int:
    config = effective_config(args)
    dataset = load_dataset(args.dataset)
    for key, have in (("t_in", dataset.t_in), ("t_out", dataset.t_out)):
        want = config[key]
        if getattr(args, key) is not None and want != have:
            raise ConfigError(f"{key}={want} conflicts with dataset {key}={have}")
        config[key] = have
    digest = config_digest(config)
    model_cfg = model_config_from(config, dataset.t_in, dataset.t_out,
                                  dataset.slot_seconds)
    train_cfg = train_config_from(config)
    if dataset.n_windows("train") == 0 or dataset.n_windows("val") == 0:
        raise DataError("dataset has an empty train or validation split")

    def log_hook(entry: EpochLog):
        print(f"epoch {entry.epoch}: train_loss={entry.train_loss:.6g} "
              f"val_loss={entry.val_loss:.6g} lr={entry.lr:.3g}")

    result = train(model_cfg, train_cfg, dataset.windows("train"),
                   dataset.windows("val"), dataset.norm_stats, digest,
                   log_hook=log_hook)
    save_checkpoint(result.checkpoint, args.out_checkpoint)
    log_path = Path(args.log) if args.log else Path(args.out_checkpoint).with_suffix(".log.csv")
    _write_train_log(log_path, result.history, digest)
    print(f"config_digest: {digest[:12]}")
    print(f"best_val_loss: {result.checkpoint.best_val_loss:.6g} "
          f"(epoch {result.checkpoint.best_epoch})")
    print(f"wrote {args.out_checkpoint} and {log_path}")
    return 0


def _write_report(path: Path, report, digest: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"mae={report.mae!r}\n")
        fh.write(f"rmse={report.rmse!r}\n")
        fh.write(f"n_windows={report.n_windows}\n")
        fh.write(f"config_digest={digest}\n")


def _write_predictions(path: Path, report, digest: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# config_digest: {digest}\n")
        writer = csv.writer(fh)
        writer.writerow(["t_origin", "y_soc_pred", "y_soc_true"])
        for t0, pred, truth in zip(report.t_origins, report.predictions,
                                   report.truths):
            writer.writerow([int(t0), repr(float(pred)), repr(float(truth))])


def _write_plot(path: Path, report, digest: str) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    order = np.argsort(report.t_origins, kind="stable")
    fig, ax = plt.subplots(figsize=(8, 4.5))
    ax.plot(report.t_origins[order], report.truths[order],
            label="true", linewidth=1.2)
    ax.plot(report.t_origins[order], report.predictions[order],
            label="predicted", linewidth=1.2)
    ax.set_xlabel("window origin (slot)")
    ax.set_ylabel("horizon-averaged soc")
    ax.set_title(f"soc forecast (mae={report.mae:.4f}, rmse={report.rmse:.4f})\n"
                 f"config {digest[:12]}")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def cmd_evaluate(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    dataset = load_dataset(args.dataset)
    if dataset.t_in != ckpt.model_config.t_in or dataset.t_out != ckpt.model_config.t_out:
        raise ConfigError(
            f"dataset windows ({dataset.t_in}, {dataset.t_out}) do not match "
            f"checkpoint ({ckpt.model_config.t_in}, {ckpt.model_config.t_out})")
    split = args.split
    if dataset.n_windows(split) == 0:
        raise DataError(f"split {split!r} holds no windows")
    model = ckpt.build_model()
    report = evaluate(model, dataset.windows(split),
                      batch_size=ckpt.train_config.batch_size,
                      config_digest=ckpt.config_digest)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_report(out_dir / "report.txt", report, ckpt.config_digest)
    _write_predictions(out_dir / "predictions.csv", report, ckpt.config_digest)
    _write_plot(out_dir / "soc_forecast.svg", report, ckpt.config_digest)
    print(f"config_digest: {ckpt.config_digest[:12]}")
    print(f"mae: {report.mae:.6g}")
    print(f"rmse: {report.rmse:.6g}")
    print(f"n_windows: {report.n_windows}")
    print(f"wrote report, predictions and plot under {out_dir}")
    return 0


def cmd_predict(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    cfg = ckpt.model_config
    cycle = parse_cycle_csv(args.input_csv, cfg.slot_seconds)
    if len(cycle) < cfg.t_in:
        raise DataError(f"need at least t_in={cfg.t_in} slots after aggregation, "
                        f"got {len(cycle)}")
    from .data import apply_normalize
    normed = apply_normalize(ckpt.norm_stats, [cycle])[0]
    feats = normed.features()[-cfg.t_in:]
    t_origin = len(cycle)  # first forecast slot right after the data ends
    model = ckpt.build_model()
    with T.no_grad():
        horizon = model.forward(Tensor(feats[None, :, :]),
                                model.window_timestamps(np.array([t_origin])),
                                training=False).data[0]
    y_soc = float(horizon.mean())
    with open(args.out_csv, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# config_digest: {ckpt.config_digest}\n")
        writer = csv.writer(fh)
        writer.writerow(["t_origin", "y_soc_pred"]
                        + [f"h{k + 1}" for k in range(cfg.t_out)])
        writer.writerow([t_origin, repr(y_soc)] + [repr(float(v)) for v in horizon])
    print(f"config_digest: {ckpt.config_digest[:12]}")
    print(f"y_soc_pred: {y_soc:.6g}")
    print(f"wrote {args.out_csv}")
    return 0


def cmd_bench_attention(args) -> int:
    config = effective_config(args)
    digest = config_digest({**config, "lengths": args.lengths,
                            "bench_d_model": args.d_model,
                            "bench_heads": args.heads})
    lengths = [int(part) for part in args.lengths.split(",") if part.strip()]
    if len(lengths) < 2:
        raise ConfigError("need at least two lengths to report doubling ratios")
    if args.d_model % args.heads != 0:
        raise ConfigError(f"d_model {args.d_model} not divisible by heads {args.heads}")
    d_head = args.d_model // args.heads
    rng = np.random.default_rng(config["seed"])
    rows = []
    for length in lengths:
        q = Tensor(rng.standard_normal((1, args.heads, length, d_head)))
        k = Tensor(rng.standard_normal((1, args.heads, length, d_head)))
        v = Tensor(rng.standard_normal((1, args.heads, length, d_head)))
        graph = T.active_graph()
        with T.no_grad():
            before = graph.op_counter
            start = time.perf_counter()
            full_attention(q, k, v)
            full_ms = (time.perf_counter() - start) * 1e3
            full_ops = graph.op_counter - before

            before = graph.op_counter
            start = time.perf_counter()
            probsparse_attention(q, k, v, config["sampling_factor"],
                                 rng=np.random.default_rng(config["seed"]))
            sparse_ms = (time.perf_counter() - start) * 1e3
            sparse_ops = graph.op_counter - before
        rows.append((length, full_ops, sparse_ops, full_ms, sparse_ms))
        print(f"L={length}: full_ops={full_ops} probsparse_ops={sparse_ops} "
              f"full_ms={full_ms:.2f} probsparse_ms={sparse_ms:.2f}")

    with open(args.out_csv, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# config_digest: {digest}\n")
        writer = csv.writer(fh)
        writer.writerow(["L", "full_ops", "probsparse_ops", "full_ms",
                         "probsparse_ms"])
        for row in rows:
            writer.writerow([row[0], row[1], row[2],
                             f"{row[3]:.3f}", f"{row[4]:.3f}"])
    for (l0, f0, s0, *_), (l1, f1, s1, *_) in zip(rows, rows[1:]):
        if l1 == 2 * l0:
            print(f"L {l0} -> {l1}: full ratio {f1 / f0:.3f}, "
                  f"probsparse ratio {s1 / s0:.3f}")
    print(f"config_digest: {digest[:12]}")
    print(f"wrote {args.out_csv}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def _shared_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key=value config file")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--t-in", dest="t_in", type=int)
    parser.add_argument("--t-out", dest="t_out", type=int)
    parser.add_argument("--variant", choices=VARIANTS)
    parser.add_argument("--attention", choices=["probsparse", "full"])
    parser.add_argument("--distill", choices=["on", "off"])
    parser.add_argument("--e-layers", dest="e_layers", type=int)
    parser.add_argument("--d-layers", dest="d_layers", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ginet",
        description="battery state-of-charge forecasting pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="window raw cycle CSVs into a dataset file")
    p.add_argument("--raw-dir", required=True)
    p.add_argument("--out", required=True)
    _shared_flags(p)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="train a model on a prepared dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out-checkpoint", required=True)
    p.add_argument("--log", help="training log CSV path")
    _shared_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a checkpoint on a dataset split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--split", choices=list(SPLIT_NAMES), default="test")
    _shared_flags(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("predict", help="forecast soc from one raw cycle CSV")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input-csv", required=True)
    p.add_argument("--out-csv", required=True)
    _shared_flags(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("bench-attention",
                       help="count attention multiply-accumulates over lengths")
    p.add_argument("--lengths", required=True,
                   help="comma-separated sequence lengths")
    p.add_argument("--d-model", dest="d_model", type=int, default=64)
    p.add_argument("--heads", type=int, default=4)
    p.add_argument("--out-csv", required=True)
    _shared_flags(p)
    p.set_defaults(func=cmd_bench_attention)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (ParseError, ConfigError, GiNetError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
