"""Synthetic expression dataset generator.

Each clip animates a fixed 73-point face template: one expression-specific
group of landmarks oscillates with an amplitude that strictly decreases as
the severity label grows (less expressive motion = worse score), plus a
small coordinate jitter. Frames render the landmarks as soft blobs over a
smooth per-clip background texture. Everything, including file bytes, is
reproducible from the spec seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from ..heatmap import LandmarkFrame, LandmarkSequence, save_landmarks, load_landmarks

DEFAULT_ACTIONS = ("brow_raise", "smile", "frown", "eye_close", "jaw_open")


# ---------------------------------------------------------------------------
# face template: 32 mirrored pairs + 9 midline points = 73 landmarks
# ---------------------------------------------------------------------------


def _left_side_layout():
    eye_ring = []
    cx, cy, rx, ry = -0.35, -0.22, 0.16, 0.09
    for k in range(8):
        th = 2.0 * np.pi * k / 8
        eye_ring.append((cx + rx * np.cos(th), cy + ry * np.sin(th)))
    return [
        ("brow", [(-0.62, -0.47), (-0.50, -0.52), (-0.38, -0.54), (-0.26, -0.52), (-0.16, -0.47)]),
        ("eye", eye_ring),
        ("lid", [(-0.47, -0.33), (-0.35, -0.36), (-0.23, -0.33)]),
        ("under_eye", [(-0.47, -0.10), (-0.35, -0.07), (-0.23, -0.10)]),
        ("nose_side", [(-0.14, -0.05), (-0.16, 0.05), (-0.13, 0.13)]),
        ("cheek", [(-0.55, 0.12), (-0.48, 0.30)]),
        ("mouth_outer", [(-0.30, 0.38), (-0.18, 0.33), (-0.08, 0.315),
                         (-0.08, 0.445), (-0.18, 0.43)]),
        ("mouth_inner", [(-0.22, 0.38), (-0.10, 0.355), (-0.10, 0.41)]),
    ]


_MIDLINE = [
    ("mouth_outer_mid", [(0.0, 0.31), (0.0, 0.46)]),
    ("mouth_inner_mid", [(0.0, 0.35), (0.0, 0.42)]),
    ("nose_mid", [(0.0, -0.18), (0.0, -0.06), (0.0, 0.06), (0.0, 0.16)]),
    ("forehead", [(0.0, -0.68)]),
]


def face_template():
    """Landmark layout in [-1, 1]^2 face coordinates (y grows downward).

    Returns (points, mirror, groups): a (73, 2) array, the self-inverse
    left/right permutation, and name -> index-list group labels.
    """
    points: list[tuple[float, float]] = []
    mirror: list[int] = []
    groups: dict[str, list[int]] = {}

    for name, left_pts in _left_side_layout():
        li = []
        ri = []
        for x, y in left_pts:
            li.append(len(points))
            points.append((x, y))
        for x, y in left_pts:
            ri.append(len(points))
            points.append((-x, y))
        mirror.extend([0] * (2 * len(left_pts)))
        for a, b in zip(li, ri):
            mirror[a] = b
            mirror[b] = a
        groups[f"{name}_l"] = li
        groups[f"{name}_r"] = ri

    for name, pts in _MIDLINE:
        idx = []
        for x, y in pts:
            idx.append(len(points))
            points.append((x, y))
            mirror.append(len(points) - 1)
        groups[name] = idx

    pts = np.asarray(points, dtype=np.float64)
    assert pts.shape == (73, 2)
    return pts, np.asarray(mirror, dtype=np.int64), groups


def _action_directions(groups) -> dict[str, np.ndarray]:
    """Unit motion direction per landmark for each expression."""
    pts, _, _ = face_template()
    out = {}

    def build(spec):
        d = np.zeros((73, 2))
        for gname, dx, dy in spec:
            for i in groups[gname]:
                if dx == "out":
                    d[i, 0] = np.sign(pts[i, 0])
                elif dx == "in":
                    d[i, 0] = -np.sign(pts[i, 0])
                else:
                    d[i, 0] = dx
                d[i, 1] = dy
        return d

    out["brow_raise"] = build([("brow_l", 0.0, -1.0), ("brow_r", 0.0, -1.0),
                               ("forehead", 0.0, -0.3)])
    out["smile"] = build([("mouth_outer_l", "out", -0.6), ("mouth_outer_r", "out", -0.6),
                          ("mouth_inner_l", "out", -0.3), ("mouth_inner_r", "out", -0.3),
                          ("cheek_l", 0.0, -0.5), ("cheek_r", 0.0, -0.5)])
    out["frown"] = build([("brow_l", "in", 0.8), ("brow_r", "in", 0.8),
                          ("lid_l", 0.0, 0.3), ("lid_r", 0.0, 0.3)])
    out["eye_close"] = build([("lid_l", 0.0, 0.9), ("lid_r", 0.0, 0.9),
                              ("eye_l", 0.0, 0.5), ("eye_r", 0.0, 0.5),
                              ("under_eye_l", 0.0, -0.4), ("under_eye_r", 0.0, -0.4)])
    out["jaw_open"] = build([("mouth_outer_l", 0.0, 0.8), ("mouth_outer_r", 0.0, 0.8),
                             ("mouth_inner_l", 0.0, 0.6), ("mouth_inner_r", 0.0, 0.6),
                             ("mouth_outer_mid", 0.0, 1.0), ("mouth_inner_mid", 0.0, 0.9)])
    return out


# ---------------------------------------------------------------------------
# spec and generation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SyntheticSpec:
    actions: tuple[str, ...] = DEFAULT_ACTIONS
    n_subjects: int = 8
    train_clips_per_action: int = 40
    test_clips_per_action: int = 15
    width: int = 40
    height: int = 40
    video_len_range: tuple[int, int] = (28, 44)
    amplitudes: tuple[float, ...] = (6.0, 4.4, 3.1, 2.0, 1.0)  # px per severity level
    landmark_noise: float = 0.12
    subject_jitter: float = 0.35
    blob_sigma: float = 1.0
    seed: int = 2024

    def __post_init__(self):
        if any(b >= a for a, b in zip(self.amplitudes, self.amplitudes[1:])):
            raise ValueError("amplitude mapping must strictly decrease with severity")
        if self.video_len_range[0] < 1 or self.video_len_range[1] < self.video_len_range[0]:
            raise ValueError(f"bad video length range {self.video_len_range}")
        unknown = set(self.actions) - set(DEFAULT_ACTIONS)
        if unknown:
            raise ValueError(f"no motion pattern for actions {sorted(unknown)}")

    @property
    def severity_levels(self) -> int:
        return len(self.amplitudes)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["actions"] = list(self.actions)
        d["video_len_range"] = list(self.video_len_range)
        d["amplitudes"] = list(self.amplitudes)
        return d

    @staticmethod
    def from_dict(d: dict) -> "SyntheticSpec":
        d = dict(d)
        for key in ("actions", "video_len_range", "amplitudes"):
            if key in d:
                d[key] = tuple(d[key])
        return SyntheticSpec(**d)


TINY_SPEC = SyntheticSpec(train_clips_per_action=6, test_clips_per_action=3,
                          n_subjects=3, video_len_range=(18, 24), seed=99)


def _render_frames(points_seq: np.ndarray, width: int, height: int, blob_sigma: float,
                   texture: dict) -> np.ndarray:
    """Soft landmark blobs over a smooth background; uint8 (T, 3, H, W)."""
    t, m, _ = points_seq.shape
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    bg = (texture["base"]
          + texture["amp"] * np.sin(2 * np.pi * (texture["fx"] * xx / width + texture["px"]))
          * np.cos(2 * np.pi * (texture["fy"] * yy / height + texture["py"])))
    channel_w = np.array([1.0, 0.8, 0.6])
    radius = int(np.ceil(3.5 * blob_sigma))
    span = 2 * radius + 1
    offs = np.arange(span) - radius
    frames = np.empty((t, 3, height, width), dtype=np.uint8)
    for i in range(t):
        pts = points_seq[i]
        centers = np.floor(pts + 0.5).astype(np.int64)
        # splat onto a padded canvas so every window is full-size, then crop
        wy = (centers[:, 1, None] + offs)[:, :, None] + radius          # (m, span, 1)
        wx = (centers[:, 0, None] + offs)[:, None, :] + radius          # (m, 1, span)
        dy = wy - radius - pts[:, 1, None, None]
        dx = wx - radius - pts[:, 0, None, None]
        vals = np.exp(-(dx * dx + dy * dy) / (2.0 * blob_sigma ** 2))
        keep = ((wy >= 0) & (wy < height + 2 * radius)
                & (wx >= 0) & (wx < width + 2 * radius))
        padded = np.zeros((height + 2 * radius, width + 2 * radius))
        wy_b, wx_b, _ = np.broadcast_arrays(wy, wx, vals)
        np.add.at(padded, (wy_b[keep], wx_b[keep]), vals[keep])
        blob = padded[radius:radius + height, radius:radius + width]
        img = np.clip(bg[None] + 0.55 * channel_w[:, None, None] * blob[None], 0.0, 1.0)
        frames[i] = np.floor(img * 255.0 + 0.5).astype(np.uint8)
    return frames


def _clip_rng(seed: int, action_idx: int, split_idx: int, k: int) -> np.random.Generator:
    return np.random.default_rng([seed, 11, action_idx, split_idx, k])


def _synthesize_clip(spec: SyntheticSpec, action: str, severity: int, subject: int,
                     rng: np.random.Generator):
    base_pts, _, groups = face_template()
    direction = _action_directions(groups)[action]
    scale = 0.33 * min(spec.width, spec.height)
    center = np.array([(spec.width - 1) / 2.0, (spec.height - 1) / 2.0])

    subject_rng = np.random.default_rng([spec.seed, 7, subject])
    template = base_pts * scale + center + subject_rng.normal(0, spec.subject_jitter, (73, 2))

    n_frames = int(rng.integers(spec.video_len_range[0], spec.video_len_range[1] + 1))
    amp = spec.amplitudes[severity]
    cycles = rng.uniform(1.2, 1.8)
    phase = rng.uniform(0, 2 * np.pi)
    tgrid = np.arange(n_frames) / n_frames
    wave = np.sin(2 * np.pi * cycles * tgrid + phase)

    pts = (template[None, :, :]
           + amp * wave[:, None, None] * direction[None, :, :]
           + rng.normal(0, spec.landmark_noise, (n_frames, 73, 2)))

    texture = {"base": rng.uniform(0.35, 0.45), "amp": rng.uniform(0.06, 0.10),
               "fx": rng.uniform(0.5, 1.5), "fy": rng.uniform(0.5, 1.5),
               "px": rng.uniform(0, 1), "py": rng.uniform(0, 1)}
    frames = _render_frames(pts, spec.width, spec.height, spec.blob_sigma, texture)
    return frames, pts


def generate_synthetic(spec: SyntheticSpec, out_dir) -> Path:
    """Write frames, landmark files, and the dataset catalog; returns the catalog path."""
    out = Path(out_dir)
    clips_dir = out / "clips"
    clips_dir.mkdir(parents=True, exist_ok=True)

    catalog = {"width": spec.width, "height": spec.height,
               "actions": list(spec.actions), "severity_levels": spec.severity_levels,
               "spec": spec.to_dict(), "clips": []}
    counts = {"train": spec.train_clips_per_action, "test": spec.test_clips_per_action}
    subject_cursor = 0
    for action_idx, action in enumerate(spec.actions):
        for split_idx, (split, count) in enumerate(counts.items()):
            for k in range(count):
                severity = k % spec.severity_levels
                subject = subject_cursor % spec.n_subjects
                subject_cursor += 1
                rng = _clip_rng(spec.seed, action_idx, split_idx, k)
                frames, pts = _synthesize_clip(spec, action, severity, subject, rng)

                clip_id = f"{action}-{split}-{k:03d}"
                frames_path = clips_dir / f"{clip_id}_frames.npy"
                lm_path = clips_dir / f"{clip_id}_landmarks.jsonl"
                np.save(frames_path, frames)
                seq = LandmarkSequence(
                    frames=[LandmarkFrame(points=pts[i], frame_index=i)
                            for i in range(len(pts))],
                    width=spec.width, height=spec.height)
                save_landmarks(seq, lm_path)
                catalog["clips"].append({
                    "id": clip_id, "action": action, "label": float(severity),
                    "split": split, "n_frames": int(frames.shape[0]),
                    "frames": f"clips/{frames_path.name}",
                    "landmarks": f"clips/{lm_path.name}",
                })

    catalog_path = out / "catalog.json"
    catalog_path.write_text(json.dumps(catalog, sort_keys=True, indent=2) + "\n")
    return catalog_path


# ---------------------------------------------------------------------------
# dataset loading
# ---------------------------------------------------------------------------


@dataclass
class ClipData:
    clip_id: str
    action: str
    label: float
    split: str
    frames: np.ndarray    # uint8 (F, 3, H, W)
    points: np.ndarray    # (F, 73, 2)


class Dataset:
    """In-memory view of a generated dataset directory."""

    def __init__(self, root):
        self.root = Path(root)
        catalog = json.loads((self.root / "catalog.json").read_text())
        self.width = catalog["width"]
        self.height = catalog["height"]
        self.actions = catalog["actions"]
        self.clips: dict[str, ClipData] = {}
        for rec in catalog["clips"]:
            frames = np.load(self.root / rec["frames"])
            seq = load_landmarks(self.root / rec["landmarks"], self.width, self.height)
            self.clips[rec["id"]] = ClipData(
                clip_id=rec["id"], action=rec["action"], label=float(rec["label"]),
                split=rec["split"], frames=frames, points=seq.points_array())

    def ids_for(self, split: str, action: str | None = None) -> list[str]:
        return [cid for cid, c in self.clips.items()
                if c.split == split and (action is None or c.action == action)]
