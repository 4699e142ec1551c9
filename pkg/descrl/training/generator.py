"""
Phase-1 training of the ADGenerator on an offline description dataset.
"""

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple
import csv
import os

import numpy as np

from ..core.base import AdgenConfig, DescriptionMode, EnvConfig, WorldConfig, logger
from ..core.checkpoint import load_checkpoint, save_checkpoint
from ..core.optim import Adam
from ..core.seeding import make_rng
from ..core.tensor import backward, no_grad
from ..env.pool import WorldCache
from ..exceptions import ValidationError
from ..language.dataset import DatasetRecord, episode_trajectory, window_inputs
from ..language.oracle import DEFAULT_K
from ..language.vocab import PAD
from ..models.adgen import ADGenerator, pad_tokens, pad_windows


@dataclass
class AdgenSample:
    visual: np.ndarray
    actions: np.ndarray
    tokens: List[int]


@dataclass
class EpochLog:
    epoch: int
    train_ce: float
    val_ce: float


def prepare_samples(
    records: Sequence[DatasetRecord],
    world_cfg: WorldConfig,
    env_cfg: EnvConfig,
    k: int = DEFAULT_K,
) -> List[AdgenSample]:
    """Encoder inputs for each record's window, rebuilt from its episode."""
    cache = WorldCache(world_cfg)
    samples = []
    for record in records:
        world = cache.get(record.world_ref)
        spec = record.spec
        traj = episode_trajectory(world, spec, record.actions)
        visual, actions = window_inputs(
            world, traj, record.t, DescriptionMode.parse(record.mode), k,
            spec.success_radius, env_cfg.patch_half_width,
        )
        samples.append(AdgenSample(visual, actions, list(record.tokens)))
    return samples


def split_samples(samples: Sequence[AdgenSample], val_fraction: float, seed: int) -> Tuple[List[AdgenSample], List[AdgenSample]]:
    """Seeded train/validation partition."""
    order = make_rng(seed, "adgen", "split").permutation(len(samples))
    n_val = int(round(len(samples) * val_fraction))
    val = [samples[int(i)] for i in order[:n_val]]
    train = [samples[int(i)] for i in order[n_val:]]
    return train, val


def batch_loss(gen: ADGenerator, batch: Sequence[AdgenSample]):
    visual, actions, pad = pad_windows([(s.visual, s.actions) for s in batch])
    features, pad = gen.encode_trajectory(visual, actions, pad)
    targets = pad_tokens([s.tokens for s in batch])
    return gen.teacher_forced_loss(features, pad, targets), int((targets != PAD).sum())


def evaluate_ce(gen: ADGenerator, samples: Sequence[AdgenSample], batch_size: int) -> float:
    """Token-weighted mean CE in a fixed order."""
    if not samples:
        return float("nan")
    total, count = 0.0, 0
    with no_grad():
        for start in range(0, len(samples), batch_size):
            loss, tokens = batch_loss(gen, samples[start:start + batch_size])
            total += loss.item() * tokens
            count += tokens
    return total / max(count, 1)


def build_adgen(cfg: AdgenConfig, env_cfg: EnvConfig) -> ADGenerator:
    patch = 2 * env_cfg.patch_half_width + 1
    return ADGenerator(cfg, patch, make_rng(cfg.seed, "adgen", "init"))


def load_adgen(path: str, cfg: AdgenConfig, env_cfg: EnvConfig) -> ADGenerator:
    gen = build_adgen(cfg, env_cfg)
    gen.load_state_dict(load_checkpoint(path))
    return gen


def train_adgen(
    samples: Sequence[AdgenSample],
    cfg: AdgenConfig,
    env_cfg: EnvConfig,
    out_dir: Optional[str] = None,
) -> Tuple[ADGenerator, List[EpochLog]]:
    """
    Teacher-forced training; deterministic for a given cfg.seed.

    After every epoch, train and validation CE are measured in a fixed
    order and a checkpoint is written to ``out_dir``.

    Raises:
        ValidationError: If there are no training samples
    """
    cfg.validate()
    train, val = split_samples(samples, cfg.val_fraction, cfg.seed)
    if not train:
        raise ValidationError("ADGenerator training needs a non-empty dataset", field="dataset")
    gen = build_adgen(cfg, env_cfg)
    optimizer = Adam(gen.parameters(), lr=cfg.lr)
    rng = make_rng(cfg.seed, "adgen", "shuffle")

    curve: List[EpochLog] = []
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(train))
        for start in range(0, len(train), cfg.batch_size):
            batch = [train[int(i)] for i in order[start:start + cfg.batch_size]]
            loss, _ = batch_loss(gen, batch)
            optimizer.step(backward(loss, optimizer.params))
        entry = EpochLog(epoch, evaluate_ce(gen, train, cfg.batch_size), evaluate_ce(gen, val, cfg.batch_size))
        curve.append(entry)
        logger.info("ADGenerator epoch %d: train CE %.4f, val CE %.4f", epoch, entry.train_ce, entry.val_ce)
        if out_dir is not None:
            save_checkpoint(os.path.join(out_dir, f"adgen_epoch{epoch:03d}.ckpt"), gen.parameters())
            write_curve(os.path.join(out_dir, "adgen_curve.csv"), curve)
    if out_dir is not None:
        save_checkpoint(os.path.join(out_dir, "adgen.ckpt"), gen.parameters())
    return gen, curve


def write_curve(path: str, curve: Sequence[EpochLog]) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["epoch", "train_ce", "val_ce"])
        for entry in curve:
            writer.writerow([entry.epoch, f"{entry.train_ce:.6f}", f"{entry.val_ce:.6f}"])
