"""Clip sampling, subclip partitioning, and small trainable subclip encoders.

The encoders are deliberately small stand-ins with a fixed pipeline:
per-frame spatial block pooling, a linear projection, a temporal mean,
and a two-layer MLP. Anything producing an n x D feature sequence per
stream can replace them; precomputed features round-trip through a
self-describing binary file.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .core import (Param, ShapeError, Tensor, block_mean_pool, linear,
                   mean_axis0, relu, stack_rows)

FRAMES_PER_SUBCLIP = 16


# ---------------------------------------------------------------------------
# temporal sampling
# ---------------------------------------------------------------------------


def sample_clip(video_len: int, t_frames: int, rng: np.random.Generator) -> np.ndarray:
    """Random-start contiguous frame indices, looping back past the video end."""
    if video_len < 1 or t_frames < 1:
        raise ValueError(f"need video_len >= 1 and frames >= 1, got {video_len}/{t_frames}")
    start = int(rng.integers(0, video_len))
    return (start + np.arange(t_frames)) % video_len


def sample_uniform(video_len: int, t_frames: int) -> np.ndarray:
    """Deterministic evenly spread indices floor(k*video_len/t_frames)."""
    if video_len < 1 or t_frames < 1:
        raise ValueError(f"need video_len >= 1 and frames >= 1, got {video_len}/{t_frames}")
    return (np.arange(t_frames) * video_len) // t_frames


@dataclass(frozen=True)
class SubclipPartition:
    """Contiguous disjoint spans of FRAMES_PER_SUBCLIP frames covering [0, T)."""

    n: int
    t: int
    spans: tuple[tuple[int, int], ...]


def partition(t_frames: int) -> SubclipPartition:
    if t_frames < FRAMES_PER_SUBCLIP or t_frames % FRAMES_PER_SUBCLIP != 0:
        raise ValueError(
            f"clip length must be a positive multiple of {FRAMES_PER_SUBCLIP}, got {t_frames}")
    n = t_frames // FRAMES_PER_SUBCLIP
    spans = tuple((k * FRAMES_PER_SUBCLIP, (k + 1) * FRAMES_PER_SUBCLIP) for k in range(n))
    return SubclipPartition(n=n, t=FRAMES_PER_SUBCLIP, spans=spans)


# ---------------------------------------------------------------------------
# toy encoders
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EncoderConfig:
    input_size: int
    patch_grid: int
    feature_dim: int
    channels: int = 3

    def __post_init__(self):
        if self.input_size < 1 or self.patch_grid < 1:
            raise ValueError("input_size and patch_grid must be positive")
        if self.input_size % self.patch_grid != 0:
            raise ValueError(
                f"input_size {self.input_size} not divisible by patch_grid {self.patch_grid}")
        if self.feature_dim < 1:
            raise ValueError(f"feature_dim must be positive, got {self.feature_dim}")

    @property
    def pooled_dim(self) -> int:
        return self.channels * self.patch_grid * self.patch_grid


class SubclipEncoder:
    """Maps one 16 x C x h x w subclip to a feature vector of width D."""

    def __init__(self, cfg: EncoderConfig, rng: np.random.Generator):
        self.cfg = cfg
        p, d = cfg.pooled_dim, cfg.feature_dim
        self.proj_w = Param.fan_in_uniform(rng, (p, d))
        self.proj_b = Param.zeros(d)
        self.fc1_w = Param.fan_in_uniform(rng, (d, d))
        self.fc1_b = Param.zeros(d)
        self.fc2_w = Param.fan_in_uniform(rng, (d, d))
        self.fc2_b = Param.zeros(d)

    def params(self) -> list[Param]:
        return [self.proj_w, self.proj_b, self.fc1_w, self.fc1_b, self.fc2_w, self.fc2_b]

    def named_params(self, prefix: str) -> list[tuple[str, Param]]:
        names = ("proj_w", "proj_b", "fc1_w", "fc1_b", "fc2_w", "fc2_b")
        return [(f"{prefix}.{n}", p) for n, p in zip(names, self.params())]

    def encode_subclip(self, subclip) -> Tensor:
        """Pool, project, average over time, and refine with a small MLP."""
        arr = subclip.array if isinstance(subclip, Tensor) else np.asarray(subclip, dtype=np.float64)
        expected = (FRAMES_PER_SUBCLIP, self.cfg.channels, self.cfg.input_size, self.cfg.input_size)
        if arr.shape != expected:
            raise ShapeError(f"subclip shape {arr.shape} does not match encoder input {expected}")
        x = subclip if isinstance(subclip, Tensor) else Tensor(arr)
        pooled = block_mean_pool(x, self.cfg.patch_grid)
        projected = linear(pooled, self.proj_w, self.proj_b)
        summary = mean_axis0(projected)
        hidden = relu(linear(summary, self.fc1_w, self.fc1_b))
        return linear(hidden, self.fc2_w, self.fc2_b)

    def encode_clip(self, frames: np.ndarray) -> Tensor:
        """Encode every subclip of a raw T x C x h x w clip into an n x D sequence."""
        arr = np.asarray(frames, dtype=np.float64)
        part = partition(arr.shape[0])
        vectors = [self.encode_subclip(arr[lo:hi]) for lo, hi in part.spans]
        return stack_rows(vectors)


def toy_rgb_encode(subclip, encoder: SubclipEncoder) -> Tensor:
    return encoder.encode_subclip(subclip)


def toy_heatmap_encode(subclip, encoder: SubclipEncoder) -> Tensor:
    return encoder.encode_subclip(subclip)


# ---------------------------------------------------------------------------
# feature file format
# ---------------------------------------------------------------------------

STREAMS = ("rgb", "heatmap")
_FEATURE_MAGIC = b"FSEQ"
_FEATURE_VERSION = 1


@dataclass(frozen=True)
class FeatureSequence:
    """One D-dim vector per subclip, tagged with its source stream."""

    features: np.ndarray
    stream: str

    def __post_init__(self):
        arr = np.asarray(self.features, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError(f"features must be (n, D), got {arr.shape}")
        if self.stream not in STREAMS:
            raise ValueError(f"unknown stream {self.stream!r}; expected one of {STREAMS}")
        object.__setattr__(self, "features", arr)


def write_features(path, seq: FeatureSequence) -> None:
    """Header: magic, u16 version, u8 stream, u32 n, u32 D; payload: n*D little-endian f64."""
    n, d = seq.features.shape
    with open(path, "wb") as fh:
        fh.write(_FEATURE_MAGIC)
        fh.write(struct.pack("<HBII", _FEATURE_VERSION, STREAMS.index(seq.stream), n, d))
        fh.write(seq.features.astype("<f8").tobytes())


def load_features(path) -> FeatureSequence:
    raw = open(path, "rb").read()
    header = struct.calcsize("<HBII")
    if len(raw) < 4 or raw[:4] != _FEATURE_MAGIC:
        raise ValueError(f"{path}: bad magic at byte 0: expected {_FEATURE_MAGIC!r}, got {raw[:4]!r}")
    if len(raw) < 4 + header:
        raise ValueError(f"{path}: truncated header at byte {len(raw)}: need {4 + header} bytes")
    version, stream_idx, n, d = struct.unpack("<HBII", raw[4:4 + header])
    if version != _FEATURE_VERSION:
        raise ValueError(f"{path}: unsupported version {version} at byte 4")
    if stream_idx >= len(STREAMS):
        raise ValueError(f"{path}: unknown stream tag {stream_idx} at byte 6")
    payload = raw[4 + header:]
    expected = n * d * 8
    if len(payload) != expected:
        raise ValueError(
            f"{path}: payload length mismatch at byte {4 + header}: "
            f"expected {expected} bytes ({n}x{d} doubles), got {len(payload)}")
    features = np.frombuffer(payload, dtype="<f8").reshape(n, d)
    return FeatureSequence(features=features.copy(), stream=STREAMS[stream_idx])
