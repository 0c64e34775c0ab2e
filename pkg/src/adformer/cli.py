"""Command-line pipeline: synth, train, score, eval, plot.

Every command reads a JSON run config (flags override config values),
validates it fully before writing anything, and writes outputs atomically
(temp file + rename).  Exit codes: 0 ok, 2 bad config/arguments, 3 I/O
failure, 4 numeric failure, 5 checkpoint/data incompatibility.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from . import __version__
from .data import (
    NormStats,
    SynthSpec,
    TimeSeries,
    generate,
    load_csv,
    normalize,
    save_csv,
)
from .detection import CRITERIA, ScoreSeries, ThresholdSpec, score_series
from .discrepancy import DiscrepancyConfig
from .errors import (
    AdformerError,
    CompatibilityError,
    ConfigError,
    ContractError,
    NumericError,
)
from .evaluation import DEFAULT_R_GRID, contrast_statistic, evaluate
from .model import ModelConfig, load_checkpoint, save_checkpoint
from .plotting import render_svg
from .training import TrainConfig, fit

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_NUMERIC = 4
EXIT_COMPAT = 5


def _write_atomic(path: str, content: str) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", newline="\n") as fh:
        fh.write(content)
    os.replace(tmp, path)


def _load_json(path: str) -> dict:
    try:
        with open(path, "r") as fh:
            return json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc


@dataclass
class RunConfig:
    """One pipeline run: paths plus every stage's configuration."""

    seed: int = 7
    train_data: str = "train.csv"
    val_data: str = "val.csv"
    test_data: str = "test.csv"
    test_labels: Optional[str] = "test_labels.csv"
    output_dir: str = "out"
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    threshold: ThresholdSpec = field(default_factory=ThresholdSpec)
    criterion: str = "multiplication"
    r_grid: List[float] = field(default_factory=lambda: list(DEFAULT_R_GRID))

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        cfg = cls()
        known = {
            "seed", "train_data", "val_data", "test_data", "test_labels",
            "output_dir", "model", "train", "discrepancy", "threshold",
            "criterion", "r_grid",
        }
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown run config fields: {sorted(unknown)}")
        for key in ("seed", "train_data", "val_data", "test_data",
                    "test_labels", "output_dir", "criterion", "r_grid"):
            if key in raw:
                setattr(cfg, key, raw[key])
        if "model" in raw:
            cfg.model = ModelConfig.from_json(json.dumps(raw["model"]))
        if "train" in raw:
            tr = dict(raw["train"])
            if "discrepancy" in tr:
                tr["discrepancy"] = _discrepancy_from_dict(tr["discrepancy"])
            try:
                cfg.train = TrainConfig(**tr)
            except TypeError as exc:
                raise ConfigError(f"invalid train config: {exc}") from exc
        if "discrepancy" in raw:
            cfg.train.discrepancy = _discrepancy_from_dict(raw["discrepancy"])
        if "threshold" in raw:
            th = raw["threshold"]
            try:
                cfg.threshold = ThresholdSpec(
                    mode=th.get("mode", "ratio_r"),
                    r=th.get("r"),
                    delta=th.get("delta"),
                )
            except TypeError as exc:
                raise ConfigError(f"invalid threshold spec: {exc}") from exc
        cfg.validate()
        return cfg

    def validate(self) -> None:
        self.model.validate()
        self.train.validate()
        self.threshold.validate()
        if self.criterion not in CRITERIA:
            raise ConfigError(f"criterion must be one of {CRITERIA}")
        if not self.r_grid or any(not 0.0 < r < 1.0 for r in self.r_grid):
            raise ConfigError("r_grid entries must lie in (0, 1)")
        if self.train.seed == 0:
            self.train.seed = self.seed


def _discrepancy_from_dict(raw: dict) -> DiscrepancyConfig:
    try:
        cfg = DiscrepancyConfig(
            metric=raw.get("metric", "sym_kl"),
            layers=None if raw.get("layers") is None else tuple(raw["layers"]),
            prob_floor=raw.get("prob_floor", 1e-12),
        )
    except TypeError as exc:
        raise ConfigError(f"invalid discrepancy config: {exc}") from exc
    cfg.validate()
    return cfg


def _load_run_config(args) -> RunConfig:
    raw = _load_json(args.config) if args.config else {}
    cfg = RunConfig.from_dict(raw)
    # flags win over config values
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
        cfg.train.seed = args.seed
    if getattr(args, "criterion", None) is not None:
        cfg.criterion = args.criterion
    if getattr(args, "lambda_", None) is not None:
        cfg.train.lambda_ = args.lambda_
    if getattr(args, "epochs", None) is not None:
        cfg.train.max_epochs = args.epochs
    if getattr(args, "out", None) is not None:
        cfg.output_dir = args.out
    cfg.validate()
    return cfg


def _require_file(path: str) -> None:
    if not os.path.isfile(path):
        raise ConfigError(f"input file does not exist: {path}")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_synth(args) -> int:
    spec = SynthSpec.from_json(open(args.spec).read()) if args.spec else None
    if spec is None:
        from .data import default_spec

        spec = default_spec(seed=args.seed if args.seed is not None else 7)
    elif args.seed is not None:
        spec.seed = args.seed
        spec.validate()
    os.makedirs(args.out, exist_ok=True)
    train, val, test = generate(spec)
    save_csv(train, os.path.join(args.out, "train.csv"))
    save_csv(val, os.path.join(args.out, "val.csv"))
    save_csv(test, os.path.join(args.out, "test.csv"),
             os.path.join(args.out, "test_labels.csv"))
    manifest = {
        "spec": json.loads(spec.to_json()),
        "anomaly_ratio": spec.anomaly_ratio(),
        "files": ["train.csv", "val.csv", "test.csv", "test_labels.csv"],
        "lengths": {
            "train": len(train),
            "val": len(val),
            "test": len(test),
        },
    }
    _write_atomic(
        os.path.join(args.out, "manifest.json"),
        json.dumps(manifest, sort_keys=True, indent=2) + "\n",
    )
    print(f"wrote 4 data files + manifest.json to {args.out} "
          f"(anomaly ratio {spec.anomaly_ratio():.4f})")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _load_run_config(args)
    _require_file(cfg.train_data)
    _require_file(cfg.val_data)
    os.makedirs(cfg.output_dir, exist_ok=True)
    train_ts = load_csv(cfg.train_data)
    val_ts = load_csv(cfg.val_data)
    stats = NormStats.from_train(train_ts)
    train_ts = normalize(train_ts, stats)
    val_ts = normalize(val_ts, stats)
    if cfg.model.input_dim != train_ts.values.shape[1]:
        raise CompatibilityError(
            f"model input_dim={cfg.model.input_dim} but data has "
            f"{train_ts.values.shape[1]} channels"
        )
    params, log = fit(
        train_ts.values, val_ts.values, cfg.model, cfg.train,
        log_hook=lambda s: print(
            f"epoch {s.epoch}: recon {s.recon_loss:.6f} "
            f"assdis {s.assdis:.6f} val {s.val_loss:.6f}"
        ),
    )
    ckpt = os.path.join(cfg.output_dir, "checkpoint.npz")
    save_checkpoint(ckpt, cfg.model, params)
    _write_atomic(os.path.join(cfg.output_dir, "trainlog.csv"), log.to_csv())
    _write_atomic(
        os.path.join(cfg.output_dir, "norm_stats.json"),
        json.dumps(
            {"mean": stats.mean.tolist(), "std": stats.std.tolist()},
            sort_keys=True,
        ) + "\n",
    )
    last = log.epochs[-1]
    print(f"final losses: recon {last.recon_loss:.6f} assdis {last.assdis:.6f} "
          f"val {last.val_loss:.6f} (best epoch {log.best_epoch})")
    print(f"checkpoint: {ckpt}")
    return EXIT_OK


def _load_norm_stats(path: str) -> Optional[NormStats]:
    if not os.path.isfile(path):
        return None
    raw = _load_json(path)
    return NormStats(mean=np.asarray(raw["mean"]), std=np.asarray(raw["std"]))


def cmd_score(args) -> int:
    cfg = _load_run_config(args)
    _require_file(args.checkpoint)
    _require_file(args.data)
    mcfg, params = load_checkpoint(args.checkpoint)
    data_ts = load_csv(args.data)
    if data_ts.values.shape[1] != mcfg.input_dim:
        raise CompatibilityError(
            f"checkpoint input_dim={mcfg.input_dim} but {args.data} has "
            f"{data_ts.values.shape[1]} channels"
        )
    stats = _load_norm_stats(
        args.norm_stats or os.path.join(os.path.dirname(args.checkpoint),
                                        "norm_stats.json")
    )
    if stats is not None:
        data_ts = normalize(data_ts, stats)
    ss = score_series(
        data_ts.values, params, mcfg,
        dcfg=cfg.train.discrepancy, criterion=cfg.criterion,
    )
    _write_atomic(args.out_scores, ss.to_csv())
    meta = {
        "criterion": cfg.criterion,
        "window": mcfg.window,
        "n_points": len(ss),
        "checkpoint": os.path.basename(args.checkpoint),
    }
    _write_atomic(
        os.path.splitext(args.out_scores)[0] + "_meta.json",
        json.dumps(meta, sort_keys=True, indent=2) + "\n",
    )
    print(f"scored {len(ss)} points -> {args.out_scores}")
    return EXIT_OK


def _read_scores_csv(path: str) -> np.ndarray:
    _require_file(path)
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if header[:2] != ["index", "score"]:
            raise ConfigError(f"{path}: not a score CSV (header {header})")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    return np.asarray([[float(c) for c in row] for row in rows], dtype=np.float64)


def cmd_eval(args) -> int:
    cfg = _load_run_config(args)
    test = _read_scores_csv(args.test_scores)
    val = _read_scores_csv(args.val_scores)
    labels_ts = load_csv(args.labels)
    truth = labels_ts.values[:, 0].astype(np.int64)
    if truth.shape[0] != test.shape[0]:
        raise ConfigError(
            f"labels length {truth.shape[0]} != test scores length {test.shape[0]}"
        )
    report = evaluate(
        test_scores=test[:, 1],
        truth=truth,
        val_scores=val[:, 1],
        threshold=cfg.threshold,
        criterion=cfg.criterion,
        r_grid=cfg.r_grid,
    )
    os.makedirs(args.out, exist_ok=True)
    _write_atomic(os.path.join(args.out, "report.json"), report.to_json())
    _write_atomic(os.path.join(args.out, "table.txt"), report.table())
    roc_lines = ["r,delta,fpr,tpr"] + [
        f"{p.r:.17g},{p.delta:.17g},{p.fpr:.17g},{p.tpr:.17g}" for p in report.roc
    ]
    _write_atomic(os.path.join(args.out, "roc.csv"), "\n".join(roc_lines) + "\n")
    print(report.table(), end="")
    return EXIT_OK


def cmd_plot(args) -> int:
    scores = _read_scores_csv(args.scores)
    labels = None
    if args.labels:
        _require_file(args.labels)
        with open(args.labels) as fh:
            raw = [line.strip() for line in fh if line.strip()]
        labels = np.asarray([int(v) for v in raw], dtype=np.int64) if raw else None
        if labels is not None and labels.shape[0] != scores.shape[0]:
            raise ConfigError(
                f"labels length {labels.shape[0]} != scores length {scores.shape[0]}"
            )
    series = None
    if args.data:
        series = load_csv(args.data).values
    delta = args.delta
    if delta is None and args.report:
        delta = _load_json(args.report).get("delta")
    svg = render_svg(scores[:, 1], series=series, labels=labels, delta=delta)
    _write_atomic(args.out_svg, svg)
    tidy = ["index,score,label"]
    for i in range(scores.shape[0]):
        lab = int(labels[i]) if labels is not None else 0
        tidy.append(f"{i},{scores[i, 1]:.17g},{lab}")
    _write_atomic(os.path.splitext(args.out_svg)[0] + ".csv", "\n".join(tidy) + "\n")
    print(f"wrote {args.out_svg}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="adformer",
        description="association-learning transformer for time-series "
                    "anomaly detection",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate synthetic train/val/test data")
    p.add_argument("--spec", help="synth spec JSON (omit for the default spec)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, help="override the spec seed")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a model from a run config")
    p.add_argument("--config", required=True, help="run config JSON")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--lambda", dest="lambda_", type=float,
                   help="override the loss trade-off weight")
    p.add_argument("--epochs", type=int, help="override max epochs")
    p.add_argument("--out", help="override the output directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("score", help="score a series with a trained checkpoint")
    p.add_argument("--config", help="run config JSON")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True, help="series CSV to score")
    p.add_argument("--out-scores", required=True, help="output scores CSV")
    p.add_argument("--criterion", choices=CRITERIA)
    p.add_argument("--norm-stats", help="normalisation stats JSON "
                   "(default: next to the checkpoint)")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("eval", help="evaluate scored series against labels")
    p.add_argument("--config", help="run config JSON")
    p.add_argument("--test-scores", required=True)
    p.add_argument("--val-scores", required=True)
    p.add_argument("--labels", required=True, help="test label CSV")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--criterion", choices=CRITERIA)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("plot", help="render scores (and series) to SVG")
    p.add_argument("--scores", required=True)
    p.add_argument("--labels", help="label CSV for shading")
    p.add_argument("--data", help="series CSV for the top panel")
    p.add_argument("--report", help="report.json to read the threshold from")
    p.add_argument("--delta", type=float, help="threshold line value")
    p.add_argument("--out-svg", required=True)
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ContractError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except CompatibilityError as exc:
        print(f"incompatible inputs: {exc}", file=sys.stderr)
        return EXIT_COMPAT
    except (OSError, AdformerError) as exc:
        print(f"i/o failure: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
