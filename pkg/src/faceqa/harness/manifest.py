"""Declarative experiment description: dataset, split, model, schedule, loss.

A manifest plus its seed fully determines a run, down to the bytes of the
emitted checkpoints and reports.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

from ..encoders import EncoderConfig, FRAMES_PER_SUBCLIP
from ..fusion import FusionConfig
from ..heatmap import HeatmapConfig
from ..losses import LossConfig

INFERENCE_MODES = ("uniform_once", "random_clips")


@dataclass(frozen=True)
class ScheduleConfig:
    epochs: int = 12
    batch_size: int = 4
    lr: float = 0.05
    lr_decay_every: int = 5
    lr_decay_factor: float = 10.0
    momentum: float = 0.9
    aug_multiplier: int = 5

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.aug_multiplier < 1:
            raise ValueError("epochs, batch_size, and aug_multiplier must be >= 1")
        if self.lr < 0 or not (0 <= self.momentum < 1):
            raise ValueError("need lr >= 0 and 0 <= momentum < 1")
        if self.lr_decay_every < 1 or self.lr_decay_factor <= 0:
            raise ValueError("bad lr decay settings")

    def lr_at(self, epoch: int) -> float:
        return self.lr / (self.lr_decay_factor ** (epoch // self.lr_decay_every))


@dataclass(frozen=True)
class InferenceConfig:
    mode: str = "uniform_once"
    k: int = 10

    def __post_init__(self):
        if self.mode not in INFERENCE_MODES:
            raise ValueError(f"unknown inference mode {self.mode!r}; expected {INFERENCE_MODES}")
        if self.mode == "random_clips" and self.k < 1:
            raise ValueError("random_clips needs k >= 1")


@dataclass(frozen=True)
class ModelConfig:
    fusion: FusionConfig
    rgb_encoder: EncoderConfig
    heatmap_encoder: EncoderConfig
    heatmap: HeatmapConfig

    def __post_init__(self):
        d = self.fusion.feature_dim
        if self.rgb_encoder.feature_dim != d or self.heatmap_encoder.feature_dim != d:
            raise ValueError(
                f"encoder widths ({self.rgb_encoder.feature_dim}, "
                f"{self.heatmap_encoder.feature_dim}) must match fusion width {d}")
        if self.heatmap.out_size != self.heatmap_encoder.input_size:
            raise ValueError(
                f"heatmap volume size {self.heatmap.out_size} must match "
                f"heatmap encoder input {self.heatmap_encoder.input_size}")

    def to_dict(self) -> dict:
        return {"fusion": asdict(self.fusion), "rgb_encoder": asdict(self.rgb_encoder),
                "heatmap_encoder": asdict(self.heatmap_encoder), "heatmap": asdict(self.heatmap)}

    @staticmethod
    def from_dict(d: dict) -> "ModelConfig":
        return ModelConfig(fusion=FusionConfig(**d["fusion"]),
                           rgb_encoder=EncoderConfig(**d["rgb_encoder"]),
                           heatmap_encoder=EncoderConfig(**d["heatmap_encoder"]),
                           heatmap=HeatmapConfig(**d["heatmap"]))


def default_model_config(feature_dim: int = 64) -> ModelConfig:
    return ModelConfig(
        fusion=FusionConfig(feature_dim=feature_dim),
        rgb_encoder=EncoderConfig(input_size=32, patch_grid=16, feature_dim=feature_dim),
        heatmap_encoder=EncoderConfig(input_size=16, patch_grid=8, feature_dim=feature_dim),
        heatmap=HeatmapConfig(out_size=16),
    )


@dataclass(frozen=True)
class ExperimentManifest:
    dataset: str
    actions: tuple[str, ...]
    train_ids: tuple[str, ...]
    test_ids: tuple[str, ...]
    model: ModelConfig
    schedule: ScheduleConfig = ScheduleConfig()
    loss: LossConfig = LossConfig()
    inference: InferenceConfig = InferenceConfig()
    seed: int = 0
    clip_frames: int = 32
    per_action: bool = True

    def __post_init__(self):
        train, test = set(self.train_ids), set(self.test_ids)
        overlap = train & test
        if overlap:
            raise ValueError(f"train/test splits overlap: {sorted(overlap)[:5]}")
        if not self.train_ids or not self.test_ids:
            raise ValueError("both split sides must be non-empty")
        if self.clip_frames % FRAMES_PER_SUBCLIP != 0 or self.clip_frames < FRAMES_PER_SUBCLIP:
            raise ValueError(
                f"clip_frames must be a positive multiple of {FRAMES_PER_SUBCLIP}")
        if self.clip_frames // FRAMES_PER_SUBCLIP > self.model.fusion.max_subclips:
            raise ValueError("clip_frames implies more subclips than the positional table holds")

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "actions": list(self.actions),
            "split": {"train": list(self.train_ids), "test": list(self.test_ids)},
            "model": self.model.to_dict(),
            "schedule": asdict(self.schedule),
            "loss": asdict(self.loss),
            "inference": asdict(self.inference),
            "seed": self.seed,
            "clip_frames": self.clip_frames,
            "per_action": self.per_action,
        }

    @staticmethod
    def from_dict(d: dict) -> "ExperimentManifest":
        return ExperimentManifest(
            dataset=d["dataset"],
            actions=tuple(d["actions"]),
            train_ids=tuple(d["split"]["train"]),
            test_ids=tuple(d["split"]["test"]),
            model=ModelConfig.from_dict(d["model"]),
            schedule=ScheduleConfig(**d["schedule"]),
            loss=LossConfig(**d["loss"]),
            inference=InferenceConfig(**d["inference"]),
            seed=int(d["seed"]),
            clip_frames=int(d["clip_frames"]),
            per_action=bool(d.get("per_action", True)),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n")

    @staticmethod
    def load(path) -> "ExperimentManifest":
        return ExperimentManifest.from_dict(json.loads(Path(path).read_text()))

    def replaced(self, **kwargs) -> "ExperimentManifest":
        """Functional update; nested model fields go through replace_model_field."""
        from dataclasses import replace
        return replace(self, **kwargs)


def default_manifest(dataset_dir, catalog: dict, seed: int = 1,
                     feature_dim: int = 64) -> ExperimentManifest:
    """Manifest for a generated dataset using the scaled-down default setup."""
    train = [c["id"] for c in catalog["clips"] if c["split"] == "train"]
    test = [c["id"] for c in catalog["clips"] if c["split"] == "test"]
    return ExperimentManifest(
        dataset=str(dataset_dir),
        actions=tuple(catalog["actions"]),
        train_ids=tuple(train),
        test_ids=tuple(test),
        model=default_model_config(feature_dim),
        seed=seed,
    )
