"""Two-stream feature fusion and the score regression head.

The main path runs both n x D feature sequences through a stack of
cross-fusion blocks. Inside a block each stream is layer-normalized and
attends to the other stream with multi-head cross-attention, followed by
a residual add, a second layer norm, and a per-position MLP with another
residual. Both streams are updated in parallel from the block's inputs.

After the blocks, configurable output heads reduce the sequences to one
512-wide vector: per-stream projection + concatenation with an optional
temporal 1-D convolution, or a single-stream projection. Two non-attention
baselines (elementwise summation, per-subclip concatenation) share the
same 512-wide contract. A 3-layer MLP maps the vector to the score.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (Param, ShapeError, Tensor, add, concat_lastaxis, conv1d_temporal,
                   layer_norm, linear, matmul, mean_axis0, relu, scale, slice_lastaxis,
                   slice_rows, softmax_lastaxis, transpose2d)

VARIANTS = ("cross_fusion", "summation", "concatenation")
OUTPUT_MODES = ("concat_conv1d", "concat_only", "rgb_only", "heatmap_only")

HEAD_INPUT = 512
HEAD_HIDDEN = (256, 128)


@dataclass(frozen=True)
class FusionConfig:
    variant: str = "cross_fusion"
    blocks: int = 3
    heads: int = 8
    feature_dim: int = 512
    output_mode: str = "concat_conv1d"
    conv_kernel: int = 3
    max_subclips: int = 16

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown fusion variant {self.variant!r}; expected one of {VARIANTS}")
        if self.output_mode not in OUTPUT_MODES:
            raise ValueError(
                f"unknown output mode {self.output_mode!r}; expected one of {OUTPUT_MODES}")
        if self.variant == "cross_fusion" and self.blocks < 1:
            raise ValueError(f"cross_fusion needs at least one block, got {self.blocks}")
        if self.heads < 1 or self.feature_dim % self.heads != 0:
            raise ValueError(
                f"feature_dim {self.feature_dim} must be divisible by heads {self.heads}")
        if self.conv_kernel < 1 or self.conv_kernel % 2 == 0:
            raise ValueError(f"conv_kernel must be odd, got {self.conv_kernel}")
        if self.max_subclips < 1:
            raise ValueError(f"max_subclips must be positive, got {self.max_subclips}")

    @property
    def head_dim(self) -> int:
        return self.feature_dim // self.heads


# ---------------------------------------------------------------------------
# parameter bundles
# ---------------------------------------------------------------------------


class LinearParams:
    def __init__(self, rng, din, dout):
        self.w = Param.fan_in_uniform(rng, (din, dout))
        self.b = Param.zeros(dout)

    def params(self):
        return [self.w, self.b]

    def apply(self, x) -> Tensor:
        return linear(x, self.w, self.b)


class LayerNormParams:
    def __init__(self, d):
        self.gain = Param.ones(d)
        self.bias = Param.zeros(d)

    def params(self):
        return [self.gain, self.bias]

    def apply(self, x, eps: float = 1e-5) -> Tensor:
        return layer_norm(x, self.gain, self.bias, eps)


class AttentionParams:
    """Bias-free query/key/value maps plus the output projection, all D x D."""

    def __init__(self, rng, d):
        self.w_q = Param.fan_in_uniform(rng, (d, d))
        self.w_k = Param.fan_in_uniform(rng, (d, d))
        self.w_v = Param.fan_in_uniform(rng, (d, d))
        self.w_o = Param.fan_in_uniform(rng, (d, d))

    def params(self):
        return [self.w_q, self.w_k, self.w_v, self.w_o]


class CrossFusionBlock:
    """Disjoint per-stream parameters for one fusion block."""

    def __init__(self, rng, d):
        self.ln1_rgb = LayerNormParams(d)
        self.ln1_heat = LayerNormParams(d)
        self.attn_rgb = AttentionParams(rng, d)   # rgb queries, heatmap keys/values
        self.attn_heat = AttentionParams(rng, d)  # heatmap queries, rgb keys/values
        self.ln2_rgb = LayerNormParams(d)
        self.ln2_heat = LayerNormParams(d)
        self.mlp_rgb = (LinearParams(rng, d, d), LinearParams(rng, d, d))
        self.mlp_heat = (LinearParams(rng, d, d), LinearParams(rng, d, d))

    def named_params(self, prefix: str):
        out = []
        groups = [
            ("ln1_rgb", self.ln1_rgb, ("gain", "bias")),
            ("ln1_heat", self.ln1_heat, ("gain", "bias")),
            ("attn_rgb", self.attn_rgb, ("w_q", "w_k", "w_v", "w_o")),
            ("attn_heat", self.attn_heat, ("w_q", "w_k", "w_v", "w_o")),
            ("ln2_rgb", self.ln2_rgb, ("gain", "bias")),
            ("ln2_heat", self.ln2_heat, ("gain", "bias")),
        ]
        for gname, bundle, names in groups:
            for n, p in zip(names, bundle.params()):
                out.append((f"{prefix}.{gname}.{n}", p))
        for side, mlp in (("mlp_rgb", self.mlp_rgb), ("mlp_heat", self.mlp_heat)):
            for li, lp in enumerate(mlp, start=1):
                out.append((f"{prefix}.{side}.fc{li}.w", lp.w))
                out.append((f"{prefix}.{side}.fc{li}.b", lp.b))
        return out

    def params(self):
        return [p for _, p in self.named_params("block")]


# ---------------------------------------------------------------------------
# forward operations
# ---------------------------------------------------------------------------


def add_positional(features, table: Param) -> Tensor:
    """Add the first n rows of the positional table to an n x D sequence."""
    ft = features if isinstance(features, Tensor) else Tensor(np.asarray(features, dtype=np.float64))
    if ft.array.ndim != 2:
        raise ShapeError(f"positional add needs an (n, D) sequence, got {ft.shape}")
    n, d = ft.shape
    n_max, d_table = table.shape
    if d != d_table:
        raise ShapeError(f"feature width {d} does not match positional table width {d_table}")
    if n > n_max:
        raise ShapeError(f"sequence length {n} exceeds positional table rows {n_max}")
    return add(ft, slice_rows(table, n))


def mhca(query_stream, kv_stream, attn: AttentionParams, heads: int,
         return_attention: bool = False):
    """Multi-head cross-attention: queries from one stream, keys/values from the other.

    Per head i over column slices of width d = D/heads:
    head_i = softmax(Q_i K_i^T / sqrt(d)) V_i; heads are concatenated and
    output-projected back to width D.
    """
    qt = query_stream if isinstance(query_stream, Tensor) else Tensor(query_stream)
    kt = kv_stream if isinstance(kv_stream, Tensor) else Tensor(kv_stream)
    if qt.array.ndim != 2 or kt.array.ndim != 2 or qt.shape != kt.shape:
        raise ShapeError(f"mhca needs two matching (n, D) streams, got {qt.shape} and {kt.shape}")
    d_model = qt.shape[1]
    if d_model % heads != 0:
        raise ShapeError(f"width {d_model} not divisible by {heads} heads")
    d_head = d_model // heads
    inv_sqrt = 1.0 / math.sqrt(d_head)

    q_full = matmul(qt, attn.w_q)
    k_full = matmul(kt, attn.w_k)
    v_full = matmul(kt, attn.w_v)

    merged = None
    weights_out = []
    for i in range(heads):
        lo, hi = i * d_head, (i + 1) * d_head
        q = slice_lastaxis(q_full, lo, hi)
        k = slice_lastaxis(k_full, lo, hi)
        v = slice_lastaxis(v_full, lo, hi)
        attn_w = softmax_lastaxis(scale(matmul(q, transpose2d(k)), inv_sqrt))
        if return_attention:
            weights_out.append(attn_w.array.copy())
        head = matmul(attn_w, v)
        merged = head if merged is None else concat_lastaxis(merged, head)
    out = matmul(merged, attn.w_o)
    if return_attention:
        return out, weights_out
    return out


def cross_fusion_block(e_rgb, e_heat, block: CrossFusionBlock, heads: int,
                       eps: float = 1e-5) -> tuple[Tensor, Tensor]:
    """One parallel two-stream update; both MHCA applications read the block inputs."""
    n_rgb = block.ln1_rgb.apply(e_rgb, eps)
    n_heat = block.ln1_heat.apply(e_heat, eps)
    rgb_mid = add(mhca(n_rgb, n_heat, block.attn_rgb, heads), _as_t(e_rgb))
    heat_mid = add(mhca(n_heat, n_rgb, block.attn_heat, heads), _as_t(e_heat))

    def mlp(x, pair):
        return pair[1].apply(relu(pair[0].apply(x)))

    rgb_out = add(mlp(block.ln2_rgb.apply(rgb_mid, eps), block.mlp_rgb), rgb_mid)
    heat_out = add(mlp(block.ln2_heat.apply(heat_mid, eps), block.mlp_heat), heat_mid)
    return rgb_out, heat_out


def _as_t(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


# ---------------------------------------------------------------------------
# full fusion model
# ---------------------------------------------------------------------------


class FusionModel:
    """Positional table, fusion blocks, reduction-to-vector params, and the MLP head."""

    def __init__(self, cfg: FusionConfig, rng: np.random.Generator):
        self.cfg = cfg
        d = cfg.feature_dim
        self.positional = Param.uniform(rng, (cfg.max_subclips, d), 0.02)
        self.blocks: list[CrossFusionBlock] = []
        if cfg.variant == "cross_fusion":
            self.blocks = [CrossFusionBlock(rng, d) for _ in range(cfg.blocks)]

        self.proj_rgb = None
        self.proj_heat = None
        self.proj_merge = None
        self.conv_kernel = None
        self.conv_bias = None
        if cfg.variant == "cross_fusion":
            if cfg.output_mode in ("concat_conv1d", "concat_only"):
                half = HEAD_INPUT // 2
                self.proj_rgb = LinearParams(rng, d, half)
                self.proj_heat = LinearParams(rng, d, half)
                if cfg.output_mode == "concat_conv1d":
                    fan_in = cfg.conv_kernel * HEAD_INPUT
                    self.conv_kernel = Param.uniform(
                        rng, (cfg.conv_kernel, HEAD_INPUT, HEAD_INPUT), 1.0 / math.sqrt(fan_in))
                    self.conv_bias = Param.zeros(HEAD_INPUT)
            elif cfg.output_mode == "rgb_only":
                self.proj_rgb = LinearParams(rng, d, HEAD_INPUT)
            else:
                self.proj_heat = LinearParams(rng, d, HEAD_INPUT)
        elif cfg.variant == "summation":
            self.proj_merge = LinearParams(rng, d, HEAD_INPUT)
        else:
            self.proj_merge = LinearParams(rng, 2 * d, HEAD_INPUT)

        self.head = (LinearParams(rng, HEAD_INPUT, HEAD_HIDDEN[0]),
                     LinearParams(rng, HEAD_HIDDEN[0], HEAD_HIDDEN[1]),
                     LinearParams(rng, HEAD_HIDDEN[1], 1))

    def named_params(self) -> list[tuple[str, Param]]:
        out = [("positional", self.positional)]
        for bi, block in enumerate(self.blocks):
            out.extend(block.named_params(f"block{bi}"))
        for name, lp in (("proj_rgb", self.proj_rgb), ("proj_heat", self.proj_heat),
                         ("proj_merge", self.proj_merge)):
            if lp is not None:
                out.append((f"{name}.w", lp.w))
                out.append((f"{name}.b", lp.b))
        if self.conv_kernel is not None:
            out.append(("conv.kernel", self.conv_kernel))
            out.append(("conv.bias", self.conv_bias))
        for li, lp in enumerate(self.head, start=1):
            out.append((f"head.fc{li}.w", lp.w))
            out.append((f"head.fc{li}.b", lp.b))
        return out

    def params(self) -> list[Param]:
        return [p for _, p in self.named_params()]


def decode(f_rgb, f_heat, model: FusionModel) -> Tensor:
    """Fuse two n x D feature sequences into one 512-wide vector."""
    cfg = model.cfg
    rgb = _as_t(f_rgb)
    heat = _as_t(f_heat)
    if rgb.shape != heat.shape or rgb.array.ndim != 2:
        raise ShapeError(f"decode needs matching (n, D) sequences, got {rgb.shape}/{heat.shape}")
    if rgb.shape[1] != cfg.feature_dim:
        raise ShapeError(f"feature width {rgb.shape[1]} does not match config {cfg.feature_dim}")

    if cfg.variant == "summation":
        return model.proj_merge.apply(mean_axis0(add(rgb, heat)))
    if cfg.variant == "concatenation":
        return mean_axis0(model.proj_merge.apply(concat_lastaxis(rgb, heat)))

    e_rgb = add_positional(rgb, model.positional)
    e_heat = heat
    for block in model.blocks:
        e_rgb, e_heat = cross_fusion_block(e_rgb, e_heat, block, cfg.heads)

    if cfg.output_mode == "rgb_only":
        return mean_axis0(model.proj_rgb.apply(e_rgb))
    if cfg.output_mode == "heatmap_only":
        return mean_axis0(model.proj_heat.apply(e_heat))
    merged = concat_lastaxis(model.proj_rgb.apply(e_rgb), model.proj_heat.apply(e_heat))
    if cfg.output_mode == "concat_conv1d":
        merged = conv1d_temporal(merged, model.conv_kernel, model.conv_bias)
    return mean_axis0(merged)


def predict(e_out, model: FusionModel) -> Tensor:
    """3-layer MLP regression head producing a scalar score."""
    x = _as_t(e_out)
    if x.shape != (HEAD_INPUT,):
        raise ShapeError(f"head input must be ({HEAD_INPUT},), got {x.shape}")
    h1, h2, h3 = model.head
    hidden = relu(h1.apply(x))
    hidden = relu(h2.apply(hidden))
    return h3.apply(hidden)
