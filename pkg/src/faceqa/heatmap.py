"""Temporal landmark-heatmap volumes.

Per frame, an unnormalized Gaussian kernel is splatted at every landmark
position into a zero-initialized accumulator, the accumulator is softened
with one pass of a 3x3 box filter, min-max normalized into [0, 1], and the
resulting weight grid multiplies the RGB channels pointwise. Weighted
frames are resized and stacked along time into a T x 3 x H' x W' volume.

A positions-only mode replaces the Gaussian machinery with a binary mask
at the rounded landmark pixels, useful for measuring how much the spatial
spread of the weights actually contributes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path

import numpy as np

try:  # optional acceleration; the fallback loop below is bit-identical
    from numba import njit as _njit
except ImportError:  # pragma: no cover
    _njit = None

DEFAULT_LANDMARK_COUNT = 73
FULL_LANDMARK_COUNT = 106


# ---------------------------------------------------------------------------
# landmark containers and files
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LandmarkFrame:
    """Pixel-space landmark coordinates for one frame.

    Points may lie outside the frame; splatting clips to frame bounds.
    """

    points: np.ndarray
    frame_index: int

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ValueError(f"points must be (M, 2), got {pts.shape}")
        if self.frame_index < 0:
            raise ValueError(f"frame_index must be non-negative, got {self.frame_index}")
        object.__setattr__(self, "points", pts)

    @property
    def count(self) -> int:
        return self.points.shape[0]


@dataclass
class LandmarkSequence:
    """Ordered per-frame landmarks for one clip."""

    frames: list[LandmarkFrame]
    width: int
    height: int

    def __post_init__(self):
        if not self.frames:
            raise ValueError("landmark sequence must contain at least one frame")
        idx = [f.frame_index for f in self.frames]
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise ValueError("frame_index must be strictly increasing")
        counts = {f.count for f in self.frames}
        if len(counts) != 1:
            raise ValueError(f"all frames must share one landmark count, got {sorted(counts)}")

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def landmark_count(self) -> int:
        return self.frames[0].count

    def points_array(self) -> np.ndarray:
        """All coordinates as a (T, M, 2) array."""
        return np.stack([f.points for f in self.frames], axis=0)


def save_landmarks(seq: LandmarkSequence, path) -> None:
    """One JSON record per line: {"frame_index": int, "points": [[x, y], ...]}."""
    with open(path, "w") as fh:
        for f in seq.frames:
            fh.write(json.dumps({"frame_index": f.frame_index,
                                 "points": [[float(x), float(y)] for x, y in f.points]}) + "\n")


def load_landmarks(path, width: int, height: int) -> LandmarkSequence:
    frames = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                frames.append(LandmarkFrame(points=np.asarray(rec["points"], dtype=np.float64),
                                            frame_index=int(rec["frame_index"])))
            except (KeyError, ValueError, TypeError) as e:
                raise ValueError(f"{path}:{lineno}: malformed landmark record ({e})") from e
    return LandmarkSequence(frames=frames, width=width, height=height)


def select_landmarks(all_points, subset_spec) -> np.ndarray:
    """Pick the configured subset, in spec order, from a full landmark set."""
    pts = np.asarray(all_points, dtype=np.float64)
    idx = list(subset_spec)
    if len(set(idx)) != len(idx):
        raise ValueError("subset spec contains duplicate indices")
    for i in idx:
        if not (0 <= i < len(pts)):
            raise ValueError(f"subset index {i} out of range for {len(pts)} points")
    return pts[idx]


def default_subset_spec() -> list[int]:
    """Shipped 73-index subset of the 106-point markup (boundary points dropped)."""
    text = resources.files("faceqa.data").joinpath("landmark_subset_73.json").read_text()
    return load_subset_spec_text(text)


def load_subset_spec(path) -> list[int]:
    return load_subset_spec_text(Path(path).read_text())


def load_subset_spec_text(text: str) -> list[int]:
    idx = json.loads(text)
    if not isinstance(idx, list) or not all(isinstance(i, int) for i in idx):
        raise ValueError("subset spec must be a JSON array of integers")
    if len(set(idx)) != len(idx):
        raise ValueError("subset spec contains duplicate indices")
    return idx


# ---------------------------------------------------------------------------
# kernel and per-frame weights
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GaussianKernel:
    """Unnormalized Gaussian weight grid; the center weight is exactly 1."""

    size: int
    sigma: float
    weights: np.ndarray = field(compare=False)

    @property
    def radius(self) -> int:
        return (self.size - 1) // 2


def build_kernel(sigma: float, size: int = 11) -> GaussianKernel:
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    if size < 1 or size % 2 == 0:
        raise ValueError(f"kernel size must be odd and >= 1, got {size}")
    c = (size - 1) / 2.0
    ax = np.arange(size, dtype=np.float64) - c
    sq = ax[:, None] ** 2 + ax[None, :] ** 2
    return GaussianKernel(size=size, sigma=float(sigma),
                          weights=np.exp(-sq / (2.0 * sigma * sigma)))


def _splat_numpy(acc: np.ndarray, centers: np.ndarray, weights: np.ndarray, r: int) -> None:
    height, width = acc.shape
    y0 = np.maximum(centers[:, 1] - r, 0).tolist()
    y1 = np.minimum(centers[:, 1] + r + 1, height).tolist()
    x0 = np.maximum(centers[:, 0] - r, 0).tolist()
    x1 = np.minimum(centers[:, 0] + r + 1, width).tolist()
    cy = centers[:, 1].tolist()
    cx = centers[:, 0].tolist()
    for i in range(len(cy)):
        if y0[i] >= y1[i] or x0[i] >= x1[i]:
            continue
        acc[y0[i]:y1[i], x0[i]:x1[i]] += weights[y0[i] - cy[i] + r:y1[i] - cy[i] + r,
                                                 x0[i] - cx[i] + r:x1[i] - cx[i] + r]


if _njit is not None:
    @_njit(cache=True)
    def _splat_jit(acc, centers, weights, r):  # pragma: no cover (exercised via accumulate)
        height, width = acc.shape
        for i in range(centers.shape[0]):
            cx, cy = centers[i, 0], centers[i, 1]
            y0, y1 = max(cy - r, 0), min(cy + r + 1, height)
            x0, x1 = max(cx - r, 0), min(cx + r + 1, width)
            for yy in range(y0, y1):
                for xx in range(x0, x1):
                    acc[yy, xx] += weights[yy - cy + r, xx - cx + r]
else:  # pragma: no cover
    _splat_jit = None


def accumulate(frame: LandmarkFrame, kernel: GaussianKernel, height: int, width: int) -> np.ndarray:
    """Sum the kernel centered at each landmark into an H x W accumulator.

    Kernel support falling outside the frame is clipped, not renormalized.
    Landmarks splat in canonical coordinate order so float accumulation is
    exactly independent of how they happen to be listed; the jit and numpy
    splat paths perform identical additions in identical order.
    """
    acc = np.zeros((height, width), dtype=np.float64)
    pts = frame.points
    if len(pts) == 0:
        return acc
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    centers = np.floor(pts[order] + 0.5).astype(np.int64)
    if _splat_jit is not None:
        _splat_jit(acc, centers, kernel.weights, kernel.radius)
    else:
        _splat_numpy(acc, centers, kernel.weights, kernel.radius)
    return acc


def positions_mask(frame: LandmarkFrame, height: int, width: int) -> np.ndarray:
    """Binary grid: 1 at rounded landmark pixels, 0 elsewhere."""
    mask = np.zeros((height, width), dtype=np.float64)
    if len(frame.points) == 0:
        return mask
    centers = np.floor(frame.points + 0.5).astype(np.int64)
    keep = ((centers[:, 0] >= 0) & (centers[:, 0] < width)
            & (centers[:, 1] >= 0) & (centers[:, 1] < height))
    mask[centers[keep, 1], centers[keep, 0]] = 1.0
    return mask


def box_filter3(values: np.ndarray) -> np.ndarray:
    """One pass of a 3x3 box filter with edge replication."""
    h, w = values.shape
    padded = np.empty((h + 2, w + 2), dtype=values.dtype)
    padded[1:-1, 1:-1] = values
    padded[0, 1:-1] = values[0]
    padded[-1, 1:-1] = values[-1]
    padded[:, 0] = padded[:, 1]
    padded[:, -1] = padded[:, -2]
    out = np.zeros_like(values)
    for dy in range(3):
        for dx in range(3):
            out += padded[dy:dy + h, dx:dx + w]
    return out / 9.0


def min_max_normalize(values: np.ndarray) -> np.ndarray:
    """Map into [0, 1]; an all-constant grid maps to all zeros."""
    lo = values.min()
    hi = values.max()
    if hi == lo:
        return np.zeros_like(values)
    return (values - lo) / (hi - lo)


def smooth_and_normalize(acc: np.ndarray) -> np.ndarray:
    return min_max_normalize(box_filter3(acc))


def frame_weights(frame: LandmarkFrame, kernel: GaussianKernel, height: int, width: int,
                  mode: str = "gaussian", smooth: bool = True) -> np.ndarray:
    """Pre-resize weight grid for one frame under the chosen mode."""
    if mode == "positions_only":
        return positions_mask(frame, height, width)
    acc = accumulate(frame, kernel, height, width)
    if smooth:
        acc = box_filter3(acc)
    return min_max_normalize(acc)


def weight_rgb(weights: np.ndarray, rgb_frame: np.ndarray) -> np.ndarray:
    """Multiply each channel of a 3 x H x W frame pointwise by the weight grid."""
    rgb = np.asarray(rgb_frame, dtype=np.float64)
    if rgb.ndim != 3 or rgb.shape[0] != 3:
        raise ValueError(f"rgb_frame must be (3, H, W), got {rgb.shape}")
    if rgb.shape[1:] != weights.shape:
        raise ValueError(f"spatial extents differ: weights {weights.shape} vs frame {rgb.shape[1:]}")
    return rgb * weights[None, :, :]


# ---------------------------------------------------------------------------
# resizing and volume assembly
# ---------------------------------------------------------------------------


@lru_cache(maxsize=64)
def _resize_axis_coords(src: int, dst: int):
    # Half-pixel-centered sampling; exact for power-of-two ratios.
    pos = (np.arange(dst, dtype=np.float64) + 0.5) * (src / dst) - 0.5
    lo = np.floor(pos).astype(np.int64)
    frac = pos - lo
    lo_c = np.clip(lo, 0, src - 1)
    hi_c = np.clip(lo + 1, 0, src - 1)
    return lo_c, hi_c, frac


def resize_bilinear(image: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize of an (H, W) or (C, H, W) array."""
    img = np.asarray(image, dtype=np.float64)
    squeeze = img.ndim == 2
    if squeeze:
        img = img[None]
    if img.ndim != 3:
        raise ValueError(f"expected (H, W) or (C, H, W), got {image.shape}")
    _, h, w = img.shape
    ylo, yhi, fy = _resize_axis_coords(h, out_h)
    xlo, xhi, fx = _resize_axis_coords(w, out_w)
    top = img[:, ylo][:, :, xlo] * (1 - fx) + img[:, ylo][:, :, xhi] * fx
    bot = img[:, yhi][:, :, xlo] * (1 - fx) + img[:, yhi][:, :, xhi] * fx
    out = top * (1 - fy)[None, :, None] + bot * fy[None, :, None]
    return out[0] if squeeze else out


MODES = ("gaussian", "positions_only")


@dataclass(frozen=True)
class HeatmapConfig:
    """Weight-grid construction settings plus the output resolution."""

    sigma: float = 1.0
    kernel_size: int = 11
    mode: str = "gaussian"
    out_size: int = 16
    smooth: bool = True

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown heatmap mode {self.mode!r}; expected one of {MODES}")
        if self.out_size < 1:
            raise ValueError(f"out_size must be positive, got {self.out_size}")
        build_kernel(self.sigma, self.kernel_size)  # validates sigma/size

    def kernel(self) -> GaussianKernel:
        return build_kernel(self.sigma, self.kernel_size)


@dataclass(frozen=True)
class HeatmapVolume:
    """Stacked landmark-weighted frames, T x 3 x H' x W'."""

    data: np.ndarray
    mode: str


def build_volume(seq: LandmarkSequence, frames: np.ndarray, cfg: HeatmapConfig) -> HeatmapVolume:
    """Weight each RGB frame by its landmark grid, resize, stack along time."""
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 4 or frames.shape[1] != 3:
        raise ValueError(f"frames must be (T, 3, H, W), got {frames.shape}")
    if frames.shape[0] != len(seq):
        raise ValueError(f"length mismatch: {frames.shape[0]} frames vs {len(seq)} landmark frames")
    t, _, h, w = frames.shape
    kernel = cfg.kernel()
    out = np.empty((t, 3, cfg.out_size, cfg.out_size), dtype=np.float64)
    for i in range(t):
        weights = frame_weights(seq.frames[i], kernel, h, w, mode=cfg.mode, smooth=cfg.smooth)
        out[i] = resize_bilinear(weight_rgb(weights, frames[i]), cfg.out_size, cfg.out_size)
    return HeatmapVolume(data=out, mode=cfg.mode)
