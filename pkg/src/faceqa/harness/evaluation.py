"""Clip-level inference and per-action evaluation of trained checkpoints."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from ..encoders import sample_clip, sample_uniform
from ..metrics import ConstantInputError, mae, rmse, spearman_rho
from .augment import center_crop
from .manifest import ExperimentManifest
from .model import ScoreModel, load_score_model
from .report import RunReport, build_report
from .synthetic import ClipData, Dataset


def predict_clip_score(model: ScoreModel, clip: ClipData, manifest: ExperimentManifest,
                       clip_key: int) -> float:
    """One score per clip under the configured inference mode (no flip, center crop)."""
    from .training import clip_inputs

    crop_size = manifest.model.rgb_encoder.input_size
    inf = manifest.inference
    if inf.mode == "uniform_once":
        index_sets = [sample_uniform(clip.frames.shape[0], manifest.clip_frames)]
    else:
        rng = np.random.default_rng([manifest.seed, 303, clip_key])
        index_sets = [sample_clip(clip.frames.shape[0], manifest.clip_frames, rng)
                      for _ in range(inf.k)]
    scores = []
    for idx in index_sets:
        frames, points = center_crop(clip.frames[idx], clip.points[idx], crop_size)
        rgb, vol = clip_inputs(frames, points, manifest)
        scores.append(model.predict_clip(rgb, vol).item())
    return float(np.mean(scores))


def evaluate_with_models(models: dict[str, ScoreModel], manifest: ExperimentManifest,
                         dataset: Dataset, loss_curves: dict[str, list[float]] | None = None,
                         prediction_override=None) -> RunReport:
    """Score every test clip and compute per-action rank correlations.

    prediction_override(clip) -> float replaces model inference; used to probe
    degenerate predictor behavior without training a degenerate model.
    """
    per_action_rho: dict[str, float | None] = {}
    rho_errors: dict[str, str] = {}
    all_preds: list[float] = []
    all_labels: list[float] = []

    ordered_test = list(manifest.test_ids)
    clip_keys = {cid: i for i, cid in enumerate(ordered_test)}

    for action in manifest.actions:
        ids = [cid for cid in ordered_test if dataset.clips[cid].action == action]
        if not ids:
            per_action_rho[action] = None
            rho_errors[action] = "no test clips"
            continue
        preds = []
        labels = []
        for cid in ids:
            clip = dataset.clips[cid]
            if prediction_override is not None:
                score = float(prediction_override(clip))
            else:
                model = models[action] if action in models else models["pooled"]
                score = predict_clip_score(model, clip, manifest, clip_keys[cid])
            preds.append(score)
            labels.append(clip.label)
        all_preds.extend(preds)
        all_labels.extend(labels)
        try:
            per_action_rho[action] = 100.0 * spearman_rho(preds, labels)
        except ConstantInputError as e:
            per_action_rho[action] = None
            rho_errors[action] = str(e)

    return build_report(per_action_rho=per_action_rho, rho_errors=rho_errors,
                        mae=mae(all_preds, all_labels), rmse=rmse(all_preds, all_labels),
                        loss_curves=loss_curves or {}, config=manifest.to_dict(),
                        seed=manifest.seed)


def load_unit_models(checkpoint_dir, manifest: ExperimentManifest) -> dict[str, ScoreModel]:
    ckpt_dir = Path(checkpoint_dir)
    units = list(manifest.actions) if manifest.per_action else ["pooled"]
    models = {}
    for unit in units:
        path = ckpt_dir / f"{unit}.ckpt"
        if not path.exists():
            raise FileNotFoundError(f"missing checkpoint for {unit!r}: {path}")
        models[unit] = load_score_model(path, expected=manifest.model)
    return models


def evaluate(checkpoint_dir, manifest: ExperimentManifest) -> RunReport:
    """Evaluate saved checkpoints against the manifest's test split."""
    dataset = Dataset(manifest.dataset)
    models = load_unit_models(checkpoint_dir, manifest)
    return evaluate_with_models(models, manifest, dataset)
