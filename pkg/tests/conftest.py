import json
from dataclasses import replace
from pathlib import Path

import pytest

import faceqa.harness as h
from faceqa.encoders import EncoderConfig
from faceqa.fusion import FusionConfig
from faceqa.heatmap import HeatmapConfig
from faceqa.harness.manifest import ModelConfig, ScheduleConfig


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("tiny_ds")
    h.generate_synthetic(h.TINY_SPEC, root)
    return root


@pytest.fixture(scope="session")
def tiny_catalog(tiny_dataset):
    return json.loads((tiny_dataset / "catalog.json").read_text())


def micro_model_config(feature_dim=16):
    return ModelConfig(
        fusion=FusionConfig(feature_dim=feature_dim, heads=2, blocks=1, max_subclips=4),
        rgb_encoder=EncoderConfig(input_size=32, patch_grid=4, feature_dim=feature_dim),
        heatmap_encoder=EncoderConfig(input_size=16, patch_grid=4, feature_dim=feature_dim),
        heatmap=HeatmapConfig(out_size=16),
    )


@pytest.fixture(scope="session")
def micro_manifest(tiny_dataset, tiny_catalog):
    base = h.default_manifest(tiny_dataset, tiny_catalog, seed=11)
    return replace(
        base,
        model=micro_model_config(),
        schedule=ScheduleConfig(epochs=1, batch_size=4, lr=0.001, lr_decay_every=1,
                                lr_decay_factor=10.0, momentum=0.9, aug_multiplier=1),
    )
