"""Composite scoring model: two subclip encoders plus the fusion decoder."""

from __future__ import annotations

import numpy as np

from ..checkpoint import load_checkpoint, restore_params, save_checkpoint
from ..core import Param, Tensor
from ..encoders import SubclipEncoder
from ..fusion import FusionModel, decode, predict
from .manifest import ModelConfig


class ConfigMismatchError(ValueError):
    """Checkpoint was produced under a different model configuration."""


class ScoreModel:
    def __init__(self, cfg: ModelConfig, seed_key):
        self.cfg = cfg
        rng = np.random.default_rng(seed_key)
        # build order is part of the reproducibility contract
        self.rgb_encoder = SubclipEncoder(cfg.rgb_encoder, rng)
        self.heatmap_encoder = SubclipEncoder(cfg.heatmap_encoder, rng)
        self.fusion = FusionModel(cfg.fusion, rng)

    def named_params(self) -> list[tuple[str, Param]]:
        out = self.rgb_encoder.named_params("rgb_encoder")
        out += self.heatmap_encoder.named_params("heatmap_encoder")
        out += [(f"fusion.{n}", p) for n, p in self.fusion.named_params()]
        return out

    def params(self) -> list[Param]:
        return [p for _, p in self.named_params()]

    def predict_clip(self, rgb_frames: np.ndarray, heat_volume: np.ndarray) -> Tensor:
        """Scalar score for one clip given both stream inputs (T, 3, h, w)."""
        f_rgb = self.rgb_encoder.encode_clip(rgb_frames)
        f_heat = self.heatmap_encoder.encode_clip(heat_volume)
        return predict(decode(f_rgb, f_heat, self.fusion), self.fusion)

    def save(self, path) -> None:
        save_checkpoint(path, self.cfg.to_dict(), self.named_params())


def config_diff(a: dict, b: dict, prefix: str = "") -> list[str]:
    keys = sorted(set(a) | set(b))
    diffs = []
    for k in keys:
        label = f"{prefix}{k}"
        if k not in a or k not in b:
            diffs.append(f"{label}: {'missing' if k not in a else a[k]!r} vs "
                         f"{'missing' if k not in b else b[k]!r}")
        elif isinstance(a[k], dict) and isinstance(b[k], dict):
            diffs.extend(config_diff(a[k], b[k], prefix=f"{label}."))
        elif a[k] != b[k]:
            diffs.append(f"{label}: {a[k]!r} vs {b[k]!r}")
    return diffs


def load_score_model(path, expected: ModelConfig | None = None) -> ScoreModel:
    stored_cfg, tensors = load_checkpoint(path)
    if expected is not None:
        diffs = config_diff(expected.to_dict(), stored_cfg)
        if diffs:
            raise ConfigMismatchError(
                "checkpoint config does not match manifest model config:\n  "
                + "\n  ".join(diffs))
    cfg = ModelConfig.from_dict(stored_cfg)
    model = ScoreModel(cfg, seed_key=0)
    restore_params(model.named_params(), tensors)
    return model
