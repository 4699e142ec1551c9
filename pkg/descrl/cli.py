"""
Command-line entry point.

    descrl gen-dataset --n 2000 --mode past --out data/past.jsonl
    descrl pretrain-adgen --dataset data/past.jsonl --out runs/adgen
    descrl train --config cfg.json --pt on --aux desc_past --seed 1
    descrl eval --run runs/desc_past-s1 --episodes 200 --unheard
    descrl rerun --manifest runs/desc_past-s1/eval --out runs/desc_past-s1/eval-again
    descrl sweep --grid grid.json --jobs 4
    descrl describe --records runs/desc_past-s1/eval/records.jsonl --failures-only

Exit codes: 0 success, 2 usage error, 1 runtime failure. Outputs go
under $DESCRL_RUNS (default ./runs) unless a path is given.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Sequence
import argparse
import csv
import json
import logging
import os
import subprocess
import sys

from .core.base import (
    AuxTaskKind, DecodeConfig, DecodeStrategy, DescriptionMode, EvalConfig, TrainConfig,
    apply_overrides, load_config, logger,
)
from .core.checkpoint import load_checkpoint, structure_hash
from .core.seeding import make_rng
from .env.pool import WorldCache
from .exceptions import CheckpointError, DescRLError, ValidationError

RUNS_ENV = "DESCRL_RUNS"
MANIFEST = "manifest.json"


def runs_root() -> str:
    return os.environ.get(RUNS_ENV, "runs")


# ==================== Manifest ====================

def source_revision() -> str:
    """Git revision of the source tree, or the package version outside a checkout."""
    from . import __version__

    here = os.path.dirname(os.path.abspath(__file__))
    try:
        out = subprocess.run(
            ["git", "rev-parse", "--short", "HEAD"], cwd=here,
            capture_output=True, text=True, timeout=5,
        )
    except (OSError, subprocess.SubprocessError):
        out = None
    if out is not None and out.returncode == 0 and out.stdout.strip():
        return out.stdout.strip()
    return f"descrl-{__version__}"


@dataclass
class RunManifest:
    """
    Everything needed to rerun a command; saved before any work starts.

    ``args`` holds the command arguments that are not part of the config,
    so ``descrl rerun`` can replay the command from this file alone.
    """
    command: str
    config: Dict[str, Any]
    seed: int
    revision: str
    out_dir: str
    structure_hash: Optional[str] = None
    checkpoints: Dict[str, str] = field(default_factory=dict)
    args: Dict[str, Any] = field(default_factory=dict)

    def save(self, path: Optional[str] = None) -> str:
        """Write atomically to ``path`` (default <out_dir>/manifest.json)."""
        path = path or os.path.join(self.out_dir, MANIFEST)
        os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
        tmp = path + ".tmp"
        with open(tmp, "w", encoding="utf-8") as f:
            json.dump(asdict(self), f, indent=2, sort_keys=True)
            f.write("\n")
        os.replace(tmp, path)
        return path

    @classmethod
    def load(cls, run_dir: str) -> "RunManifest":
        """
        Read <run_dir>/manifest.json, or run_dir itself when it is a file.

        Raises:
            CheckpointError: If the manifest is missing, corrupt or has unknown keys
        """
        path = run_dir if os.path.isfile(run_dir) else os.path.join(run_dir, MANIFEST)
        try:
            with open(path, "r", encoding="utf-8") as f:
                data = json.load(f)
            return cls(**data)
        except OSError as e:
            raise CheckpointError(f"Cannot read run manifest: {e}", path=path) from e
        except (ValueError, TypeError) as e:
            raise CheckpointError(f"Corrupt run manifest: {e}", path=path) from e

    @property
    def train_config(self) -> TrainConfig:
        return TrainConfig.from_dict(self.config)


def dataset_manifest_path(out_path: str) -> str:
    return out_path + ".manifest.json"


# ==================== Flag handling ====================

def _on_off(value: str) -> bool:
    if value not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected on or off")
    return value == "on"


def _nsd(value: str) -> int:
    n = int(value)
    if not 0 <= n <= 3:
        raise argparse.ArgumentTypeError("N_SD must be in 0..3")
    return n


def _key_value(text: str):
    key, sep, raw = text.partition("=")
    if not sep:
        raise argparse.ArgumentTypeError(f"expected key=value, got '{text}'")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key, value


def train_overrides(args: argparse.Namespace, base: TrainConfig) -> Dict[str, Any]:
    """
    Dotted overrides for the training flags.

    --mode alone also moves a description aux task to that mode.

    Raises:
        ValidationError: On conflicting flags
    """
    overrides: Dict[str, Any] = dict(args.set or [])
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.pt is not None:
        overrides["pretrain"] = args.pt
    if args.te is not None:
        overrides["agent.use_task_embedding"] = args.te
    if args.nsd is not None:
        overrides["agent.n_shared_dec"] = args.nsd
    if args.lam is not None:
        overrides["agent.lam"] = args.lam
    if args.updates is not None:
        overrides["n_updates"] = args.updates
    if args.distill:
        overrides["distill"] = True
    if args.teacher is not None:
        overrides["teacher"] = args.teacher
    if args.adgen_checkpoint is not None:
        overrides["adgen_checkpoint"] = args.adgen_checkpoint

    aux = AuxTaskKind(args.aux) if args.aux is not None else None
    mode = DescriptionMode.parse(args.mode) if args.mode is not None else None
    if aux is not None and mode is not None and aux.is_description and aux.description_mode is not mode:
        raise ValidationError(f"--aux {aux.value} conflicts with --mode {mode.value}", field="aux")
    if mode is not None:
        overrides["agent.description_mode"] = mode.value
        if aux is None and base.aux.is_description:
            aux = AuxTaskKind.for_mode(mode)
    elif aux is not None and aux.is_description:
        overrides["agent.description_mode"] = aux.description_mode.value
    if aux is not None:
        overrides["aux"] = aux.value
    if args.distill and not (aux or base.aux).is_description:
        raise ValidationError("--distill needs a description aux task", field="distill")
    return overrides


def resolve_train_config(args: argparse.Namespace) -> TrainConfig:
    base = load_config(args.config) if args.config else TrainConfig()
    cfg = apply_overrides(base, train_overrides(args, base))
    cfg.validate()
    return cfg


def run_name(cfg: TrainConfig) -> str:
    return f"{cfg.aux.value}-lam{cfg.agent.lam:g}-s{cfg.seed}"


# ==================== Commands ====================

def generate_dataset(cfg: TrainConfig, seed: int, args: Dict[str, Any]) -> str:
    """Write the manifest next to the dataset, then build it."""
    from .language.dataset import build_dataset

    out = args["out"]
    RunManifest(
        "gen-dataset", cfg.to_dict(), seed, source_revision(), os.path.dirname(out) or ".", args=args,
    ).save(dataset_manifest_path(out))
    build_dataset(
        seed, args["n"], DescriptionMode.parse(args["mode"]), args["k"], cfg.world, cfg.env,
        n_worlds=args["n_worlds"] or cfg.n_train_worlds, out_path=out,
        smoothing=args["smoothing"], max_len=cfg.agent.max_desc_len,
    )
    return out


def cmd_gen_dataset(args: argparse.Namespace) -> int:
    cfg = load_config(args.config) if args.config else TrainConfig()
    out = generate_dataset(cfg, args.seed, {
        "n": args.n, "mode": args.mode, "k": args.k, "n_worlds": args.n_worlds,
        "smoothing": args.smoothing, "out": args.out,
    })
    print(f"Wrote {args.n} records to {out}")
    return 0


def pretrain_adgen(cfg: TrainConfig, dataset_path: str, out_dir: str):
    """Write the manifest, then run ADGenerator training on a dataset file."""
    from .language.dataset import load_dataset
    from .training.generator import prepare_samples, train_adgen

    RunManifest(
        "pretrain-adgen", cfg.to_dict(), cfg.adgen.seed, source_revision(), out_dir,
        args={"dataset": os.path.abspath(dataset_path)},
    ).save()
    samples = prepare_samples(load_dataset(dataset_path), cfg.world, cfg.env, cfg.window - 1)
    _, curve = train_adgen(samples, cfg.adgen, cfg.env, out_dir)
    return curve


def cmd_pretrain_adgen(args: argparse.Namespace) -> int:
    cfg = load_config(args.config) if args.config else TrainConfig()
    overrides: Dict[str, Any] = {}
    if args.epochs is not None:
        overrides["adgen.epochs"] = args.epochs
    if args.seed is not None:
        overrides["adgen.seed"] = args.seed
    cfg = apply_overrides(cfg, overrides)
    out_dir = args.out or os.path.join(runs_root(), "adgen")
    curve = pretrain_adgen(cfg, args.dataset, out_dir)
    last = curve[-1] if curve else None
    if last is not None:
        print(f"ADGenerator: train CE {last.train_ce:.4f}, val CE {last.val_ce:.4f} -> {out_dir}")
    return 0


def train_run(cfg: TrainConfig, out_dir: str, dataset_path: Optional[str] = None) -> RunManifest:
    """Write the manifest, train, and record checkpoint paths."""
    from .language.dataset import load_dataset
    from .training.trainer import build_agent, run_training

    agent = build_agent(cfg)
    manifest = RunManifest(
        "train", cfg.to_dict(), cfg.seed, source_revision(), out_dir,
        structure_hash=structure_hash(agent.parameters()),
        args={"dataset": os.path.abspath(dataset_path) if dataset_path else None},
    )
    manifest.save()
    dataset = load_dataset(dataset_path) if dataset_path else None
    run_training(cfg, out_dir, dataset, agent=agent)
    if cfg.pretrain and cfg.aux.is_description:
        manifest.checkpoints["step1"] = os.path.join(out_dir, "step1.ckpt")
    manifest.checkpoints["agent"] = os.path.join(out_dir, "agent.ckpt")
    manifest.save()
    return manifest


def cmd_train(args: argparse.Namespace) -> int:
    cfg = resolve_train_config(args)
    out_dir = args.out or os.path.join(runs_root(), run_name(cfg))
    train_run(cfg, out_dir, args.dataset)
    print(f"Run written to {out_dir}")
    return 0


def _decode_config(args: argparse.Namespace) -> Optional[DecodeConfig]:
    if args.decode is None:
        return None
    return DecodeConfig(
        strategy=DecodeStrategy(args.decode), k=args.top_k, p=args.top_p,
        temperature=args.temperature, seed=args.seed,
    )


def load_run_agent(run_dir: str, checkpoint: Optional[str] = None):
    """
    Agent of a training run with its weights.

    Raises:
        CheckpointError: If the checkpoint does not match the run's structure hash
    """
    from .training.trainer import build_agent

    manifest = RunManifest.load(run_dir)
    cfg = manifest.train_config
    path = checkpoint or manifest.checkpoints.get("agent") or os.path.join(run_dir, "agent.ckpt")
    state = load_checkpoint(path)
    found = structure_hash(state)
    if manifest.structure_hash is not None and found != manifest.structure_hash:
        raise CheckpointError(
            f"Checkpoint structure {found} does not match run manifest {manifest.structure_hash}",
            path=path,
        )
    agent = build_agent(cfg)
    agent.load_state_dict(state)
    return agent, cfg


def evaluate_run(
    run_dir: str,
    episodes: int,
    seed: int,
    unheard: bool = False,
    decode: Optional[DecodeConfig] = None,
    policy_name: str = "descrl",
    out_dir: Optional[str] = None,
    batch: int = 16,
    trajectories: bool = False,
) -> Dict[str, Any]:
    """
    Evaluate a run on the test worlds; writes manifest.json, records.jsonl and metrics.csv.

    Raises:
        ValidationError: If out_dir is the run directory itself
    """
    from .evaluation.metrics import compute_metrics, write_metrics_csv
    from .evaluation.runner import DescRLPolicy, RandomPolicy, ShortestPathPolicy, run_episodes

    out_dir = out_dir or os.path.join(run_dir, "eval")
    if os.path.abspath(out_dir) == os.path.abspath(run_dir):
        raise ValidationError("eval output would overwrite the run manifest", field="out")
    manifest = RunManifest.load(run_dir)
    if policy_name == "descrl":
        agent, cfg = load_run_agent(run_dir)
        policy = DescRLPolicy(agent, decode, make_rng(seed, "decode") if decode else None)
    else:
        cfg = manifest.train_config
        if policy_name == "random":
            policy = RandomPolicy(make_rng(seed, "random_policy"))
        else:
            policy = ShortestPathPolicy()
    RunManifest(
        "eval", cfg.to_dict(), seed, source_revision(), out_dir,
        structure_hash=manifest.structure_hash if policy_name == "descrl" else None,
        args={
            "run": os.path.abspath(run_dir), "episodes": episodes, "unheard": unheard,
            "decode": decode.to_dict() if decode else None, "policy": policy_name,
            "batch": batch, "trajectories": trajectories,
        },
    ).save()
    eval_cfg = EvalConfig(episodes=episodes, seed=seed, unheard=unheard, batch=batch, decode=decode)
    worlds = WorldCache(cfg.world).split("test", cfg.n_eval_worlds)
    traj_path = os.path.join(out_dir, "trajectories.jsonl") if trajectories else None
    if traj_path is not None:
        open(traj_path, "w").close()
    records = run_episodes(
        policy, worlds, episodes, eval_cfg, cfg.env,
        records_path=os.path.join(out_dir, "records.jsonl"), trajectory_path=traj_path,
    )
    row: Dict[str, Any] = {"policy": policy.name, "episodes": episodes, "unheard": unheard}
    row.update(compute_metrics(records))
    write_metrics_csv(os.path.join(out_dir, "metrics.csv"), [row])
    return row


def cmd_eval(args: argparse.Namespace) -> int:
    from .evaluation.metrics import format_table

    row = evaluate_run(
        args.run, args.episodes, args.seed, args.unheard, _decode_config(args),
        args.policy, args.out, args.batch, args.trajectories,
    )
    print(format_table([row]))
    return 0


def rerun(manifest: RunManifest, out: str) -> str:
    """
    Replay the command a manifest records, writing to ``out``.

    Raises:
        ValidationError: If the manifest's command cannot be replayed
    """
    cfg = manifest.train_config
    args = manifest.args
    if manifest.command == "gen-dataset":
        return generate_dataset(cfg, manifest.seed, {**args, "out": out})
    if manifest.command == "pretrain-adgen":
        pretrain_adgen(cfg, args["dataset"], out)
    elif manifest.command == "train":
        train_run(cfg, out, args.get("dataset"))
    elif manifest.command == "eval":
        decode = DecodeConfig.from_dict(args["decode"]) if args.get("decode") else None
        evaluate_run(
            args["run"], args["episodes"], manifest.seed, args["unheard"], decode,
            args["policy"], out, args["batch"], args["trajectories"],
        )
    else:
        raise ValidationError(f"Cannot rerun command '{manifest.command}'", field="command")
    return out


def cmd_rerun(args: argparse.Namespace) -> int:
    path = args.manifest
    out = rerun(RunManifest.load(path), args.out)
    print(f"Reran {path} -> {out}")
    return 0


# ==================== Sweeps ====================

@dataclass
class SweepCell:
    name: str
    seed: int
    config: Dict[str, Any]
    out_dir: str
    episodes: int
    eval_seed: int
    unheard: bool


def load_grid(path: str) -> Dict[str, Any]:
    """
    Grid file:

        {"base": {...} or "base.json", "cells": {"none": {"aux": "none"}, ...},
         "seeds": [0, 1, 2], "episodes": 50, "unheard": false}

    Raises:
        ValidationError: If cells or seeds are missing
    """
    with open(path, "r", encoding="utf-8") as f:
        grid = json.load(f)
    if not grid.get("cells") or not grid.get("seeds"):
        raise ValidationError("grid needs non-empty 'cells' and 'seeds'", field="cells")
    return grid


def sweep_cells(grid: Dict[str, Any], out_root: str) -> List[SweepCell]:
    base = grid.get("base") or {}
    base_cfg = load_config(base) if isinstance(base, str) else TrainConfig.from_dict(base)
    cells = []
    for name, overrides in grid["cells"].items():
        for seed in grid["seeds"]:
            cfg = apply_overrides(base_cfg, {**overrides, "seed": seed})
            cfg.validate()
            cells.append(SweepCell(
                name=name, seed=int(seed), config=cfg.to_dict(),
                out_dir=os.path.join(out_root, name, f"seed{seed}"),
                episodes=int(grid.get("episodes", cfg.eval_episodes)),
                eval_seed=int(grid.get("eval_seed", 0)),
                unheard=bool(grid.get("unheard", False)),
            ))
    return cells


def _cell_done(cell: SweepCell) -> bool:
    metrics = os.path.join(cell.out_dir, "eval", "metrics.csv")
    if not os.path.exists(metrics):
        return False
    try:
        return RunManifest.load(cell.out_dir).config == cell.config
    except DescRLError:
        return False


def run_cell(cell: SweepCell) -> Dict[str, Any]:
    """Train and evaluate one sweep cell, or reuse its finished metrics."""
    from .evaluation.metrics import METRIC_NAMES

    metrics_path = os.path.join(cell.out_dir, "eval", "metrics.csv")
    if _cell_done(cell):
        logger.warning("Skipping finished sweep cell %s/seed%d", cell.name, cell.seed)
    else:
        train_run(TrainConfig.from_dict(cell.config), cell.out_dir)
        evaluate_run(cell.out_dir, cell.episodes, cell.eval_seed, cell.unheard)
    with open(metrics_path, "r", encoding="utf-8", newline="") as f:
        row = next(csv.DictReader(f))
    return {name: float(row[name]) if row.get(name) else None for name in METRIC_NAMES}


def cmd_sweep(args: argparse.Namespace) -> int:
    from .evaluation.metrics import METRIC_NAMES, format_table, summarize, write_metrics_csv

    grid = load_grid(args.grid)
    out_root = args.out or os.path.join(runs_root(), "sweep")
    cells = sweep_cells(grid, out_root)
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(run_cell, cells))
    else:
        results = [run_cell(cell) for cell in cells]

    rows = []
    for name in grid["cells"]:
        per_seed = [r for c, r in zip(cells, results) if c.name == name]
        row: Dict[str, Any] = {"config": name, "seeds": len(per_seed)}
        for metric in METRIC_NAMES:
            row[metric] = summarize([r[metric] for r in per_seed])
        rows.append(row)
    write_metrics_csv(os.path.join(out_root, "comparison.csv"), rows)
    print(format_table(rows))
    return 0


def cmd_describe(args: argparse.Namespace) -> int:
    from .evaluation.metrics import read_records
    from .evaluation.render import render_records

    if args.run:
        cfg = RunManifest.load(args.run).train_config
    else:
        cfg = load_config(args.config) if args.config else TrainConfig()
    cache = WorldCache(cfg.world)
    text = render_records(cache.get, read_records(args.records), args.failures_only)
    if text:
        print(text)
    return 0


# ==================== Parser ====================

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="descrl", description="Descriptive RL on a semantic audio-visual gridworld"
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="Debug logging")
    parser.add_argument("-q", "--quiet", action="store_true", help="Warnings only")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-dataset", help="Build an oracle description dataset")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n", type=int, required=True, help="Number of records")
    p.add_argument("--mode", choices=["past", "future", "pf", "past_future"], default="past")
    p.add_argument("--k", type=int, default=19, help="Window reach in steps")
    p.add_argument("--out", required=True, help="Output JSONL path")
    p.add_argument("--config", help="TrainConfig JSON for world/env settings")
    p.add_argument("--n-worlds", type=int, default=None)
    p.add_argument("--smoothing", type=float, default=None, help="Store soft-target settings")
    p.set_defaults(func=cmd_gen_dataset)

    p = sub.add_parser("pretrain-adgen", help="Phase 1: train the ADGenerator")
    p.add_argument("--dataset", required=True)
    p.add_argument("--config")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", help="Output directory")
    p.set_defaults(func=cmd_pretrain_adgen)

    p = sub.add_parser("train", help="Phase 2: optional ADPredictor pre-training, then joint PPO")
    p.add_argument("--config", help="TrainConfig JSON")
    p.add_argument("--pt", type=_on_off, default=None, metavar="on|off")
    p.add_argument("--te", type=_on_off, default=None, metavar="on|off")
    p.add_argument("--nsd", type=_nsd, default=None, metavar="0..3")
    p.add_argument("--mode", choices=["past", "future", "pf", "past_future"], default=None)
    p.add_argument("--lambda", dest="lam", type=float, default=None)
    p.add_argument("--aux", choices=[k.value for k in AuxTaskKind], default=None)
    p.add_argument("--distill", action="store_true")
    p.add_argument("--teacher", choices=["oracle", "adgen"], default=None)
    p.add_argument("--adgen-checkpoint", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--updates", type=int, default=None)
    p.add_argument("--dataset", help="Pre-training dataset JSONL (built on the fly otherwise)")
    p.add_argument("--set", type=_key_value, action="append", metavar="KEY=VALUE",
                   help="Dotted config override, e.g. ppo.lr=1e-4")
    p.add_argument("--out", help="Run directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="Evaluate a trained run")
    p.add_argument("--run", required=True, help="Run directory with manifest.json")
    p.add_argument("--episodes", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--unheard", action="store_true")
    p.add_argument("--policy", choices=["descrl", "random", "shortest"], default="descrl")
    p.add_argument("--decode", choices=[s.value for s in DecodeStrategy], default=None)
    p.add_argument("--top-k", type=int, default=10)
    p.add_argument("--top-p", type=float, default=0.95)
    p.add_argument("--temperature", type=float, default=None)
    p.add_argument("--batch", type=int, default=16)
    p.add_argument("--trajectories", action="store_true", help="Also write per-step JSONL logs")
    p.add_argument("--out", help="Output directory (default <run>/eval)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("rerun", help="Replay a command from its manifest")
    p.add_argument("--manifest", required=True, help="Run directory or manifest JSON")
    p.add_argument("--out", required=True, help="Output directory (dataset path for gen-dataset)")
    p.set_defaults(func=cmd_rerun)

    p = sub.add_parser("sweep", help="Train and evaluate a grid of configs over seeds")
    p.add_argument("--grid", required=True, help="Grid JSON")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", help="Sweep root directory")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("describe", help="Render evaluation episodes with their descriptions")
    p.add_argument("--records", required=True, help="records.jsonl from eval")
    p.add_argument("--run", help="Run directory (for the world config)")
    p.add_argument("--config")
    p.add_argument("--failures-only", action="store_true")
    p.set_defaults(func=cmd_describe)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ValidationError as e:
        parser.print_usage(sys.stderr)
        print(f"descrl: error: {e}", file=sys.stderr)
        return 2
    except DescRLError as e:
        print(f"descrl: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"descrl: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
