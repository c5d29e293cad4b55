"""Canned gradient-verification suite shared by the CLI verb and the tests.

Every primitive operation is checked against central finite differences at
1e-6 relative error; composed structures (one cross-fusion block, the full
two-stream pipeline through the batch loss) at 1e-4. Composed checks cover
a representative parameter from every component family so the whole suite
stays well under its time budget.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

import faceqa as fq
from ..fusion import CrossFusionBlock, cross_fusion_block
from ..losses import bmc_loss_op, mse_loss_op
from .manifest import ExperimentManifest, ModelConfig, ScheduleConfig
from ..encoders import EncoderConfig
from ..fusion import FusionConfig
from ..heatmap import HeatmapConfig

PRIMITIVE_TOL = 1e-6
COMPOSED_TOL = 1e-4


@dataclass
class CheckResult:
    name: str
    max_rel_error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance


def _primitive_checks():
    rng = np.random.default_rng(1234)
    checks = []

    def probe_sum(x):  # mixes signs so sum-gradients are not trivially uniform
        return fq.sum_all(x)

    a = fq.Param(rng.normal(size=(3, 4)))
    b = fq.Param(rng.normal(size=(4, 2)))
    checks.append(("matmul", lambda: probe_sum(fq.matmul(a, b)), [a, b]))

    t = fq.Param(rng.normal(size=(3, 5)))
    checks.append(("transpose2d", lambda: probe_sum(fq.transpose2d(t)), [t]))

    s = fq.Param(rng.normal(size=(2, 4)))
    s_probe = fq.constant(rng.normal(size=(2, 4)))
    checks.append(("softmax_lastaxis",
                   lambda: probe_sum(fq.matmul(fq.softmax_lastaxis(s), fq.transpose2d(s_probe))),
                   [s]))

    ln_x = fq.Param(rng.normal(size=(3, 6)))
    ln_g = fq.Param(rng.normal(size=6))
    ln_b = fq.Param(rng.normal(size=6))
    ln_probe = fq.constant(rng.normal(size=(3, 6)))
    checks.append(("layer_norm",
                   lambda: probe_sum(fq.matmul(fq.layer_norm(ln_x, ln_g, ln_b),
                                               fq.transpose2d(ln_probe))),
                   [ln_x, ln_g, ln_b]))

    lx = fq.Param(rng.normal(size=(4, 3)))
    lw = fq.Param(rng.normal(size=(3, 2)))
    lb = fq.Param(rng.normal(size=2))
    checks.append(("linear", lambda: probe_sum(fq.linear(lx, lw, lb)), [lx, lw, lb]))

    # keep relu inputs away from the kink by more than the probe step
    r = fq.Param(np.where(rng.normal(size=6) >= 0, 1.0, -1.0) * rng.uniform(0.5, 1.5, 6))
    checks.append(("relu", lambda: probe_sum(fq.relu(r)), [r]))

    aa = fq.Param(rng.normal(size=(2, 3)))
    ab = fq.Param(rng.normal(size=(2, 3)))
    checks.append(("add", lambda: probe_sum(fq.add(aa, ab)), [aa, ab]))
    checks.append(("scale", lambda: probe_sum(fq.scale(aa, -1.7)), [aa]))

    ca = fq.Param(rng.normal(size=(2, 3)))
    cb = fq.Param(rng.normal(size=(2, 2)))
    cc = fq.constant(rng.normal(size=(5, 2)))
    checks.append(("concat_lastaxis",
                   lambda: probe_sum(fq.matmul(fq.concat_lastaxis(ca, cb), cc)), [ca, cb]))

    sl = fq.Param(rng.normal(size=(3, 6)))
    checks.append(("slice_lastaxis", lambda: probe_sum(fq.slice_lastaxis(sl, 1, 4)), [sl]))
    checks.append(("slice_rows", lambda: probe_sum(fq.slice_rows(sl, 2)), [sl]))

    v1 = fq.Param(rng.normal(size=4))
    v2 = fq.Param(rng.normal(size=4))
    checks.append(("stack_rows", lambda: probe_sum(fq.stack_rows(
        [fq.mean_axis0(fq.stack_rows([v1, v2])), v2])), [v1, v2]))

    sc1 = fq.Param([0.7])
    sc2 = fq.Param([-1.2])
    checks.append(("stack_scalars", lambda: probe_sum(fq.stack_scalars(
        [fq.sum_all(sc1), fq.sum_all(sc2)])), [sc1, sc2]))

    m = fq.Param(rng.normal(size=(4, 3)))
    checks.append(("mean_axis0", lambda: probe_sum(fq.stack_rows([fq.mean_axis0(m)])), [m]))
    checks.append(("sum_all", lambda: fq.sum_all(m), [m]))

    bp = fq.Param(rng.normal(size=(2, 3, 4, 4)))
    checks.append(("block_mean_pool", lambda: probe_sum(fq.block_mean_pool(bp, 2)), [bp]))

    cx = fq.Param(rng.normal(size=(5, 3)))
    ck = fq.Param(rng.normal(size=(3, 3, 2)))
    cbias = fq.Param(rng.normal(size=2))
    checks.append(("conv1d_temporal",
                   lambda: probe_sum(fq.conv1d_temporal(cx, ck, cbias)), [cx, ck, cbias]))

    bmc_p = fq.Param(rng.uniform(0, 4, 5))
    bmc_labels = rng.integers(0, 5, 5).astype(float)
    checks.append(("bmc_loss", lambda: bmc_loss_op(bmc_p, bmc_labels), [bmc_p]))
    mse_p = fq.Param(rng.uniform(0, 4, 4))
    mse_labels = rng.integers(0, 5, 4).astype(float)
    checks.append(("mse_loss", lambda: mse_loss_op(mse_p, mse_labels), [mse_p]))
    return checks


def _tiny_pipeline():
    from .model import ScoreModel

    cfg = ModelConfig(
        fusion=FusionConfig(feature_dim=8, heads=2, blocks=1, max_subclips=4),
        rgb_encoder=EncoderConfig(input_size=8, patch_grid=2, feature_dim=8),
        heatmap_encoder=EncoderConfig(input_size=8, patch_grid=2, feature_dim=8),
        heatmap=HeatmapConfig(out_size=8),
    )
    model = ScoreModel(cfg, seed_key=4321)
    rng = np.random.default_rng(777)
    clips = [(rng.normal(size=(32, 3, 8, 8)), rng.normal(size=(32, 3, 8, 8)))
             for _ in range(2)]
    labels = np.array([1.0, 3.0])

    def forward():
        preds = [model.predict_clip(rgb, vol) for rgb, vol in clips]
        return bmc_loss_op(fq.stack_scalars(preds), labels)

    named = dict(model.named_params())
    representative = [
        "rgb_encoder.proj_w", "rgb_encoder.fc2_b", "heatmap_encoder.proj_b",
        "heatmap_encoder.fc1_w", "fusion.positional",
        "fusion.block0.attn_rgb.w_q", "fusion.block0.attn_heat.w_v",
        "fusion.block0.ln1_heat.gain", "fusion.block0.ln2_rgb.bias",
        "fusion.block0.mlp_rgb.fc1.w", "fusion.block0.mlp_heat.fc2.b",
        "fusion.proj_rgb.b", "fusion.proj_heat.b", "fusion.conv.bias",
        "fusion.head.fc1.b", "fusion.head.fc3.w", "fusion.head.fc3.b",
    ]
    return forward, [(name, named[name]) for name in representative]


def run_gradient_suite() -> list[CheckResult]:
    results = []
    for name, f, params in _primitive_checks():
        err = max(fq.grad_check(f, p) for p in params)
        results.append(CheckResult(name, err, PRIMITIVE_TOL))

    rng = np.random.default_rng(55)
    block = CrossFusionBlock(rng, 8)
    e_rgb = rng.normal(size=(2, 8))
    e_heat = rng.normal(size=(2, 8))
    probe = fq.constant(rng.normal(size=(2, 8)))

    def block_forward():
        out_rgb, out_heat = cross_fusion_block(e_rgb, e_heat, block, heads=2)
        return fq.sum_all(fq.matmul(fq.add(out_rgb, probe), fq.transpose2d(out_heat)))

    err = max(fq.grad_check(block_forward, p) for _, p in block.named_params("b"))
    results.append(CheckResult("cross_fusion_block (all params)", err, COMPOSED_TOL))

    forward, reps = _tiny_pipeline()
    err = max(fq.grad_check(forward, p) for _, p in reps)
    results.append(CheckResult("full pipeline + bmc (representative params)", err, COMPOSED_TOL))
    return results
