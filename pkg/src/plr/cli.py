"""Command line entry point: `plr <stage> --config <path> [--seeds N] [--out DIR]`.

Stages mirror the pipeline; `full` runs pretrain-source through evaluate in
order. With --seeds N each seed runs under <out>/seed<k> with seed base+k,
then numeric metrics are aggregated as mean +- std into aggregate_<stage>.txt.
Exit status is 0 only when every requested artifact was produced.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .config import ExperimentConfig
from .pipeline import STAGES, StageError, full_pipeline, run_stage, stage_dir
from .plotting import plot_accuracy

__all__ = ["main"]


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plr",
        description="Pseudo-label refinement experiments on digit benchmarks.",
    )
    sub = parser.add_subparsers(dest="stage", required=True, metavar="stage")
    for stage in STAGES + ("full",):
        help_text = "run all pipeline stages in order" if stage == "full" else f"run the {stage} stage"
        p = sub.add_parser(stage, help=help_text)
        p.add_argument("--config", required=True, help="path to a key=value config file")
        p.add_argument("--seeds", type=int, default=1, help="number of seeds (default 1)")
        p.add_argument("--out", default=None, help="override the config's out_dir")
    return parser


def _seed_config(cfg: ExperimentConfig, base_out: str, k: int) -> ExperimentConfig:
    return cfg.replace(seed=cfg.seed + k, out_dir=os.path.join(base_out, f"seed{k}"))


def _run_one(stage: str, cfg: ExperimentConfig) -> dict:
    return full_pipeline(cfg) if stage == "full" else run_stage(stage, cfg)


def _aggregate(per_seed: list[dict], stage: str, base_out: str):
    keys = [k for k in per_seed[0] if all(k in m for m in per_seed)]
    lines = []
    for key in keys:
        vals = np.array([m[key] for m in per_seed], dtype=np.float64)
        lines.append(f"{key}={vals.mean():.4f} +- {vals.std():.4f}")
    if not lines:
        return
    path = os.path.join(base_out, f"aggregate_{stage.replace('-', '_')}.txt")
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")
    print(f"[{stage}] over {len(per_seed)} seeds:")
    for line in lines:
        print(f"  {line}")


def _banded_plot(cfg: ExperimentConfig, base_out: str, seeds: int):
    csvs = []
    for k in range(seeds):
        path = os.path.join(stage_dir(_seed_config(cfg, base_out, k), "plr-train"), "metrics.csv")
        if not os.path.exists(path):
            raise StageError(
                f"missing artifact: {path}; run 'plr plr-train --seeds {seeds}' first"
            )
        csvs.append(path)
    out = os.path.join(base_out, "plot")
    os.makedirs(out, exist_ok=True)
    path = plot_accuracy(
        csvs,
        os.path.join(out, "accuracy.png"),
        title=f"{cfg.source} to {cfg.target} ({cfg.gan_objective}, {seeds} seeds)",
    )
    print(f"[plot] wrote {path}")


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        overrides = {"out_dir": args.out} if args.out else None
        cfg = ExperimentConfig.from_file(args.config, overrides)
        if args.seeds < 1:
            raise StageError("--seeds must be >= 1")

        if args.seeds == 1:
            _run_one(args.stage, cfg)
        elif args.stage == "plot":
            # aggregate band across per-seed metrics written by plr-train
            _banded_plot(cfg, cfg.out_dir, args.seeds)
        else:
            base_out = cfg.out_dir
            per_seed = [
                _run_one(args.stage, _seed_config(cfg, base_out, k)) for k in range(args.seeds)
            ]
            _aggregate(per_seed, args.stage, base_out)
    except (StageError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
