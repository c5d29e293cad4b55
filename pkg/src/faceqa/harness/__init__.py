"""Experiment harness: synthetic data, manifests, training, evaluation, sweeps."""

from .ablation import ablate, apply_axis, parse_axis_arg
from .augment import center_crop, crop, default_mirror_map, hflip, load_mirror_map, random_augment
from .evaluation import evaluate, evaluate_with_models, predict_clip_score
from .manifest import (ExperimentManifest, InferenceConfig, ModelConfig, ScheduleConfig,
                       default_manifest, default_model_config)
from .model import ConfigMismatchError, ScoreModel, load_score_model
from .report import RunReport, build_report, emit_report, load_report
from .synthetic import (DEFAULT_ACTIONS, TINY_SPEC, ClipData, Dataset, SyntheticSpec,
                        face_template, generate_synthetic)
from .training import TrainingDivergedError, TrainOutcome, train, train_one_model
