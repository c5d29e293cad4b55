"""Training loop: random resampled, augmented clips with an SGD schedule."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..core import Tape, sgd_step, stack_scalars, zero_grads
from ..encoders import sample_clip
from ..heatmap import LandmarkFrame, LandmarkSequence, build_volume
from .augment import default_mirror_map, random_augment
from .manifest import ExperimentManifest
from .model import ScoreModel
from .report import RunReport, build_report, emit_report
from .synthetic import ClipData, Dataset


class TrainingDivergedError(RuntimeError):
    """Loss became non-finite; message carries epoch/batch coordinates."""


def clip_inputs(frames: np.ndarray, points: np.ndarray, manifest: ExperimentManifest):
    """Cropped frames and landmarks -> (rgb stream input, heatmap stream input)."""
    rgb = frames.astype(np.float64) / 255.0
    t = rgb.shape[0]
    seq = LandmarkSequence(
        frames=[LandmarkFrame(points=points[i], frame_index=i) for i in range(t)],
        width=rgb.shape[3], height=rgb.shape[2])
    volume = build_volume(seq, rgb, manifest.model.heatmap)
    return rgb, volume.data


def training_example(clip: ClipData, manifest: ExperimentManifest, mirror: np.ndarray,
                     rng: np.random.Generator):
    idx = sample_clip(clip.frames.shape[0], manifest.clip_frames, rng)
    frames, points = random_augment(clip.frames[idx], clip.points[idx], rng,
                                    manifest.model.rgb_encoder.input_size, mirror)
    return clip_inputs(frames, points, manifest)


def train_one_model(model: ScoreModel, train_ids: list[str], dataset: Dataset,
                    manifest: ExperimentManifest, rng: np.random.Generator,
                    mirror: np.ndarray) -> list[float]:
    """Run the full schedule over one clip pool; returns per-epoch mean loss."""
    sched = manifest.schedule
    params = model.params()
    iterations = sched.aug_multiplier * math.ceil(len(train_ids) / sched.batch_size)
    curve = []
    for epoch in range(sched.epochs):
        lr = sched.lr_at(epoch)
        epoch_losses = []
        for batch_idx in range(iterations):
            chosen = [train_ids[int(rng.integers(0, len(train_ids)))]
                      for _ in range(sched.batch_size)]
            labels = np.array([dataset.clips[cid].label for cid in chosen])
            with Tape() as tape:
                preds = []
                for cid in chosen:
                    rgb, vol = training_example(dataset.clips[cid], manifest, mirror, rng)
                    preds.append(model.predict_clip(rgb, vol))
                loss = manifest.loss.apply(stack_scalars(preds), labels)
                loss_val = loss.item()
                if not np.isfinite(loss_val):
                    raise TrainingDivergedError(
                        f"non-finite loss {loss_val} at epoch {epoch}, batch {batch_idx}")
                zero_grads(params)
                tape.backward(loss)
            if lr > 0.0:
                # lr == 0 freezes the run: skip the update entirely so neither
                # values nor momentum buffers change a single bit
                sgd_step(params, lr, sched.momentum)
            epoch_losses.append(loss_val)
        curve.append(float(np.mean(epoch_losses)))
    return curve


@dataclass
class TrainOutcome:
    checkpoints: dict[str, Path]
    report: RunReport
    report_path: Path


def training_units(manifest: ExperimentManifest, dataset: Dataset) -> dict[str, list[str]]:
    """Map unit name -> train clip ids (one unit per action, or one pooled unit)."""
    if not manifest.per_action:
        return {"pooled": list(manifest.train_ids)}
    units = {}
    for action in manifest.actions:
        ids = [cid for cid in manifest.train_ids if dataset.clips[cid].action == action]
        if not ids:
            raise ValueError(f"no training clips for action {action!r}")
        units[action] = ids
    return units


def train(manifest: ExperimentManifest, out_dir) -> TrainOutcome:
    from .evaluation import evaluate_with_models  # local import to avoid a cycle

    start = time.perf_counter()
    out = Path(out_dir)
    ckpt_dir = out / "checkpoints"
    ckpt_dir.mkdir(parents=True, exist_ok=True)

    dataset = Dataset(manifest.dataset)
    missing = [cid for cid in (*manifest.train_ids, *manifest.test_ids)
               if cid not in dataset.clips]
    if missing:
        raise ValueError(f"manifest references unknown clips: {missing[:5]}")

    mirror = default_mirror_map()
    units = training_units(manifest, dataset)
    checkpoints: dict[str, Path] = {}
    models: dict[str, ScoreModel] = {}
    loss_curves: dict[str, list[float]] = {}
    for ui, (unit, ids) in enumerate(units.items()):
        model = ScoreModel(manifest.model, seed_key=[manifest.seed, 101, ui])
        rng = np.random.default_rng([manifest.seed, 202, ui])
        loss_curves[unit] = train_one_model(model, ids, dataset, manifest, rng, mirror)
        path = ckpt_dir / f"{unit}.ckpt"
        model.save(path)
        checkpoints[unit] = path
        models[unit] = model

    report = evaluate_with_models(models, manifest, dataset, loss_curves)
    report.wall_clock_seconds = time.perf_counter() - start
    report_path = emit_report(report, out / "report.json", "structured-text")
    return TrainOutcome(checkpoints=checkpoints, report=report, report_path=report_path)
