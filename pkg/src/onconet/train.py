"""Experiment configuration, the training loop, and evaluation.

Config files are plain-text key = value sections (diff-friendly, stdlib
parsing).  One tape per step; all randomness derives from the experiment
seed, so equal seeds reproduce loss histories bitwise.
"""
from __future__ import annotations

import configparser
import csv
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Callable, Iterator

import numpy as np

from . import ops
from .autograd import Tape, backward
from .data import Manifest, ManifestRow, Modality, Sample, iter_epoch, load_sample
from .metrics import MetricsReport, sens_spec
from .nets import (
    ModelConfig,
    ModelVariant,
    SurvivalModel,
    build_model,
    forward,
    load_checkpoint,
    load_state,
    save_checkpoint,
)
from .optim import Adam
from .tensor import Tensor, deterministic, set_deterministic

__all__ = [
    "ExperimentConfig",
    "TrainingError",
    "TrainResult",
    "save_config",
    "load_config",
    "split_manifest",
    "train",
    "evaluate",
    "run_training",
]

CANONICAL_EPOCHS = 100
CANONICAL_BATCH = 8
CANONICAL_LR = 0.0006
CANONICAL_SIZE = 512


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    modality: Modality = Modality.PET_CT
    variant: ModelVariant = ModelVariant.AGGRES_CNN
    use_fcn: bool = True
    epochs: int = CANONICAL_EPOCHS
    batch_size: int = CANONICAL_BATCH
    lr: float = CANONICAL_LR
    seed: int = 0
    input_size: int = CANONICAL_SIZE
    split_policy: str = "manifest"  # manifest | stratified | institution
    eval_fraction: float = 0.25
    holdout_institution: str = ""
    out_dir: str = "run"
    augment: bool = True
    threshold: float = 0.5
    limit_epochs: int = 0  # 0 = no limit; caps executed epochs for smoke runs
    limit_batches: int = 0
    stem_channels: int = 16
    stage_channels: tuple[int, ...] = (32, 64, 128, 256)
    blocks_per_stage: int = 2
    cardinality: int = 32
    fcn_down_channels: tuple[int, ...] = (32, 64, 128, 256)

    @staticmethod
    def paper_regime(**overrides) -> "ExperimentConfig":
        """The canonical training regime: two-channel PET-CT through the
        preprocessor + grouped-residual classifier, lr 0.0006, batch 8,
        100 epochs, 512x512 inputs."""
        cfg = ExperimentConfig(
            modality=Modality.PET_CT,
            variant=ModelVariant.AGGRES_CNN,
            use_fcn=True,
            epochs=CANONICAL_EPOCHS,
            batch_size=CANONICAL_BATCH,
            lr=CANONICAL_LR,
            input_size=CANONICAL_SIZE,
        )
        return replace(cfg, **overrides)

    def model_config(self) -> ModelConfig:
        return ModelConfig(
            variant=self.variant,
            input_channels=self.modality.channels,
            input_size=self.input_size,
            stem_channels=self.stem_channels,
            stage_channels=self.stage_channels,
            blocks_per_stage=self.blocks_per_stage,
            cardinality=self.cardinality,
            use_fcn=self.use_fcn,
            fcn_down_channels=self.fcn_down_channels,
        )


def _format_value(v) -> str:
    if isinstance(v, tuple):
        return ",".join(str(x) for x in v)
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (Modality, ModelVariant)):
        return v.value
    return str(v)


_MODEL_KEYS = {"stem_channels", "stage_channels", "blocks_per_stage", "cardinality", "fcn_down_channels"}


def save_config(cfg: ExperimentConfig, path) -> None:
    parser = configparser.ConfigParser()
    parser["experiment"] = {}
    parser["model"] = {}
    for f in fields(cfg):
        section = "model" if f.name in _MODEL_KEYS else "experiment"
        parser[section][f.name] = _format_value(getattr(cfg, f.name))
    with open(path, "w") as fh:
        parser.write(fh)


def load_config(path) -> ExperimentConfig:
    parser = configparser.ConfigParser()
    if not parser.read(path):
        raise FileNotFoundError(f"config file not found: {path}")
    merged: dict[str, str] = {}
    for section in ("experiment", "model"):
        if parser.has_section(section):
            merged.update(parser[section])
    kwargs = {}
    for f in fields(ExperimentConfig):
        if f.name not in merged:
            continue
        raw = merged[f.name]
        if f.name == "modality":
            kwargs[f.name] = Modality(raw)
        elif f.name == "variant":
            kwargs[f.name] = ModelVariant(raw)
        elif f.type in ("int", int):
            kwargs[f.name] = int(raw)
        elif f.type in ("float", float):
            kwargs[f.name] = float(raw)
        elif f.type in ("bool", bool):
            kwargs[f.name] = raw.lower() in ("1", "true", "yes")
        elif f.name in ("stage_channels", "fcn_down_channels"):
            kwargs[f.name] = tuple(int(x) for x in raw.split(",") if x)
        else:
            kwargs[f.name] = raw
    return ExperimentConfig(**kwargs)


# -- splits --------------------------------------------------------------------------


def split_manifest(manifest: Manifest, cfg: ExperimentConfig) -> tuple[list[ManifestRow], list[ManifestRow]]:
    """Resolve (train_rows, eval_rows) under the configured split policy.

    Policies: "manifest" trusts the split column; "stratified" draws a seeded
    per-class fraction; "institution" holds one site out for evaluation.
    """
    rows = list(manifest.rows)
    if cfg.split_policy == "manifest":
        train = [r for r in rows if r.split == "train"]
        ev = [r for r in rows if r.split == "eval"]
    elif cfg.split_policy == "stratified":
        rng = np.random.default_rng([cfg.seed, 7151])
        train, ev = [], []
        for cls in (0, 1):
            cls_rows = [r for r in rows if r.label == cls]
            k = int(round(len(cls_rows) * cfg.eval_fraction))
            k = min(max(k, 1 if len(cls_rows) >= 2 else 0), max(len(cls_rows) - 1, 0))
            picked = set(rng.permutation(len(cls_rows))[:k].tolist())
            for i, r in enumerate(cls_rows):
                (ev if i in picked else train).append(r)
    elif cfg.split_policy == "institution":
        if not cfg.holdout_institution:
            raise ValueError("institution split requires holdout_institution")
        train = [r for r in rows if r.institution != cfg.holdout_institution]
        ev = [r for r in rows if r.institution == cfg.holdout_institution]
    else:
        raise ValueError(f"unknown split policy {cfg.split_policy!r}")
    return train, ev


# -- training loop ----------------------------------------------------------------------


@dataclass
class TrainResult:
    checkpoint_dir: Path
    history_path: Path
    history: list[tuple[int, int, float]]

    @property
    def final_loss(self) -> float:
        return self.history[-1][2]


def run_training(
    model: SurvivalModel,
    batches_for_epoch: Callable[[int], Iterator[tuple[Tensor, np.ndarray]]],
    epochs: int,
    lr: float,
    limit_batches: int = 0,
    on_step: Callable[[int, int, float], None] | None = None,
    optimizer: Adam | None = None,
) -> list[tuple[int, int, float]]:
    """Forward / loss / backward / Adam over the given batch streams."""
    opt = optimizer if optimizer is not None else Adam(model.named_params(), lr=lr)
    history: list[tuple[int, int, float]] = []
    step = 0
    for epoch in range(epochs):
        for b, (x, y) in enumerate(batches_for_epoch(epoch)):
            if limit_batches and b >= limit_batches:
                break
            with Tape() as tape:
                probs = forward(model, x)
                loss = ops.cross_entropy(probs, y)
                value = loss.item()
                if not np.isfinite(value):
                    raise TrainingError(
                        f"non-finite loss {value} at epoch {epoch} batch {b}"
                    )
                backward(tape, loss)
            opt.step()
            opt.zero_grad()
            history.append((epoch, step, value))
            if on_step is not None:
                on_step(epoch, step, value)
            step += 1
    return history


def train(cfg: ExperimentConfig, manifest: Manifest) -> TrainResult:
    """Train per config over the manifest's training split; write history,
    config, and final weights under cfg.out_dir."""
    if os.environ.get("ONCONET_DETERMINISTIC", "") not in ("", "0"):
        set_deterministic(True)
    train_rows, _ = split_manifest(manifest, cfg)
    if not train_rows:
        raise TrainingError("training split is empty")
    samples = [load_sample(manifest, r) for r in train_rows]
    labels = {s.label for s in samples}
    if labels != {0, 1}:
        raise TrainingError(f"training split needs both classes, found {sorted(labels)}")

    model = build_model(cfg.model_config(), rng=np.random.default_rng(cfg.seed))
    epochs = cfg.epochs if cfg.limit_epochs == 0 else min(cfg.epochs, cfg.limit_epochs)

    def batches(epoch: int):
        rng = np.random.default_rng([cfg.seed, 1 + epoch])
        return iter_epoch(
            samples,
            cfg.modality,
            cfg.batch_size,
            rng,
            augmenting=cfg.augment,
            rebalancing=True,
        )

    optimizer = Adam(model.named_params(), lr=cfg.lr)
    history = run_training(model, batches, epochs, cfg.lr, cfg.limit_batches, optimizer=optimizer)

    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    history_path = out_dir / "history.csv"
    with open(history_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "step", "loss"])
        for epoch, step, value in history:
            writer.writerow([epoch, step, f"{value:.10g}"])
    save_checkpoint(out_dir, model.named_params())
    save_checkpoint(out_dir, optimizer.state_tensors(), stem="optimizer")
    save_config(cfg, out_dir / "config.ini")
    return TrainResult(out_dir, history_path, history)


def _score_rows(model: SurvivalModel, manifest: Manifest, rows, modality: Modality, batch_size: int):
    samples = [load_sample(manifest, r) for r in rows]
    scores: list[float] = []
    labels: list[int] = []
    for x, y in iter_epoch(
        samples, modality, batch_size, np.random.default_rng(0), augmenting=False, rebalancing=False
    ):
        probs = forward(model, x)
        scores.extend(probs.data[:, 1].tolist())
        labels.extend(int(v) for v in y)
    return scores, labels


def score_checkpoint(checkpoint_dir, manifest: Manifest) -> tuple[list[float], list[int], ExperimentConfig]:
    """Death-probability scores and labels for the eval split of a checkpoint."""
    checkpoint_dir = Path(checkpoint_dir)
    cfg = load_config(checkpoint_dir / "config.ini")
    model = build_model(cfg.model_config(), rng=np.random.default_rng(cfg.seed))
    load_state(model, load_checkpoint(checkpoint_dir))
    _, eval_rows = split_manifest(manifest, cfg)
    if not eval_rows:
        raise ValueError("evaluation split is empty")
    scores, labels = _score_rows(model, manifest, eval_rows, cfg.modality, cfg.batch_size)
    return scores, labels, cfg


def evaluate(checkpoint_dir, manifest: Manifest, modality: Modality | None = None, threshold: float | None = None) -> MetricsReport:
    """Score the evaluation split with a trained checkpoint; no augmentation
    or rebalancing is applied."""
    cfg = load_config(Path(checkpoint_dir) / "config.ini")
    if modality is not None and modality != cfg.modality:
        raise ValueError(
            f"checkpoint was trained on modality {cfg.modality.value}, requested {modality.value}"
        )
    scores, labels, cfg = score_checkpoint(checkpoint_dir, manifest)
    return sens_spec(scores, labels, threshold if threshold is not None else cfg.threshold)
