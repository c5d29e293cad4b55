"""Spatial augmentation applied jointly to frames and landmark coordinates.

A horizontal flip mirrors pixels, remaps x coordinates to W-1-x, and
permutes landmark indices with the shipped mirror map so each index keeps
its semantic meaning (left eye points swap with right eye points). Crops
shift both representations identically.
"""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path

import numpy as np


def default_mirror_map() -> np.ndarray:
    text = resources.files("faceqa.data").joinpath("mirror_map_73.json").read_text()
    return _validate_mirror(json.loads(text))


def load_mirror_map(path) -> np.ndarray:
    return _validate_mirror(json.loads(Path(path).read_text()))


def _validate_mirror(raw) -> np.ndarray:
    m = np.asarray(raw, dtype=np.int64)
    n = len(m)
    if m.ndim != 1 or sorted(m.tolist()) != list(range(n)):
        raise ValueError("mirror map must be a permutation of 0..M-1")
    if not np.array_equal(m[m], np.arange(n)):
        raise ValueError("mirror map must be a self-inverse permutation")
    return m


def hflip(frames: np.ndarray, points: np.ndarray, mirror: np.ndarray,
          width: int) -> tuple[np.ndarray, np.ndarray]:
    """Mirror frames left-right and remap/permute landmarks; an involution."""
    flipped = frames[:, :, :, ::-1].copy()
    pts = points[:, mirror, :].copy()
    pts[:, :, 0] = (width - 1) - pts[:, :, 0]
    return flipped, pts


def crop(frames: np.ndarray, points: np.ndarray, x0: int, y0: int,
         size: int) -> tuple[np.ndarray, np.ndarray]:
    h, w = frames.shape[2], frames.shape[3]
    if not (0 <= x0 <= w - size and 0 <= y0 <= h - size):
        raise ValueError(f"crop [{x0}:{x0 + size}, {y0}:{y0 + size}] outside {w}x{h} frame")
    out_frames = frames[:, :, y0:y0 + size, x0:x0 + size].copy()
    out_points = points - np.array([x0, y0], dtype=np.float64)
    return out_frames, out_points


def center_crop(frames: np.ndarray, points: np.ndarray, size: int):
    h, w = frames.shape[2], frames.shape[3]
    return crop(frames, points, (w - size) // 2, (h - size) // 2, size)


def random_augment(frames: np.ndarray, points: np.ndarray, rng: np.random.Generator,
                   crop_size: int, mirror: np.ndarray):
    """Flip with probability 1/2, then crop at a uniform offset."""
    h, w = frames.shape[2], frames.shape[3]
    if rng.random() < 0.5:
        frames, points = hflip(frames, points, mirror, w)
    x0 = int(rng.integers(0, w - crop_size + 1))
    y0 = int(rng.integers(0, h - crop_size + 1))
    return crop(frames, points, x0, y0, crop_size)
