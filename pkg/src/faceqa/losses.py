"""Training losses for score regression on imbalanced label distributions.

The balanced Monte-Carlo (BMC) loss treats each prediction as a query
against every label in the batch: softmax cross-entropy over the logits
-(pred - label)^2 / tau, with the element's own label as the target.
Rare labels therefore repel predictions from the common ones instead of
being averaged away. A plain MSE baseline is provided for comparison.

Both losses come in two forms: a pure function returning (loss, grads)
and a taped op that plugs into the autodiff graph.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import Tensor, _active, _as_tensor


@dataclass(frozen=True)
class BmcConfig:
    """Temperature setup; tau is tied to the assumed label noise scale."""

    sigma_noise: float = 1.0

    def __post_init__(self):
        if self.sigma_noise <= 0:
            raise ValueError(f"sigma_noise must be positive, got {self.sigma_noise}")

    @property
    def tau(self) -> float:
        return 2.0 * self.sigma_noise ** 2


@dataclass(frozen=True)
class Batch:
    """Aligned predictions and labels for one loss evaluation."""

    predictions: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "predictions", np.asarray(self.predictions, dtype=np.float64))
        object.__setattr__(self, "labels", np.asarray(self.labels, dtype=np.float64))
        if self.predictions.ndim != 1 or self.labels.ndim != 1:
            raise ValueError("batch predictions and labels must be rank-1 sequences")
        if len(self.predictions) != len(self.labels):
            raise ValueError(
                f"batch length mismatch: {len(self.predictions)} predictions vs {len(self.labels)} labels")
        if len(self.predictions) == 0:
            raise ValueError("empty batch")

    @property
    def size(self) -> int:
        return len(self.predictions)


def _bmc_forward_backward(preds: np.ndarray, labels: np.ndarray, tau: float):
    """Mean softmax cross-entropy over quadratic logits, plus d(loss)/d(pred).

    logits[b, j] = -(preds[b] - labels[j])^2 / tau, target index j = b.
    Stabilized with log-sum-exp; duplicate labels stay as repeated terms.
    """
    b = len(preds)
    diff = preds[:, None] - labels[None, :]          # b x b
    logits = -(diff * diff) / tau
    m = logits.max(axis=1, keepdims=True)
    e = np.exp(logits - m)
    z = e.sum(axis=1, keepdims=True)
    log_probs = logits - m - np.log(z)
    loss = -log_probs[np.arange(b), np.arange(b)].mean()

    probs = e / z
    # d(ce_b)/d(logits[b,j]) = probs - one_hot; chain through the quadratic.
    dlogits = probs.copy()
    dlogits[np.arange(b), np.arange(b)] -= 1.0
    dlogits /= b
    grads = (dlogits * (-2.0 * diff / tau)).sum(axis=1)
    return float(loss), grads


def bmc_loss(batch: Batch, cfg: BmcConfig = BmcConfig()) -> tuple[float, np.ndarray]:
    """Balanced Monte-Carlo loss and its gradient w.r.t. the predictions.

    A single-element batch always scores exactly 0: the numerator and the
    one-term denominator coincide.
    """
    if cfg.tau <= 0:
        raise ValueError(f"tau must be positive, got {cfg.tau}")
    return _bmc_forward_backward(batch.predictions, batch.labels, cfg.tau)


def mse_loss(batch: Batch) -> tuple[float, np.ndarray]:
    """Mean squared error and gradient 2*(pred - label)/B."""
    d = batch.predictions - batch.labels
    return float(np.mean(d * d)), 2.0 * d / batch.size


def _loss_op(pred_tensor, labels, loss_val: float, grads: np.ndarray) -> Tensor:
    out = Tensor(np.asarray(loss_val))
    tape = _active()
    if tape is not None:
        tape.record(out, [pred_tensor], lambda g: (np.asarray(g) * grads,))
    return out


def bmc_loss_op(predictions, labels, cfg: BmcConfig = BmcConfig()) -> Tensor:
    """Taped BMC loss on a rank-1 prediction tensor; labels are constants."""
    pt = _as_tensor(predictions)
    batch = Batch(pt.array, np.asarray(labels, dtype=np.float64))
    loss_val, grads = _bmc_forward_backward(batch.predictions, batch.labels, cfg.tau)
    return _loss_op(pt, batch.labels, loss_val, grads)


def mse_loss_op(predictions, labels) -> Tensor:
    """Taped MSE loss on a rank-1 prediction tensor."""
    pt = _as_tensor(predictions)
    batch = Batch(pt.array, np.asarray(labels, dtype=np.float64))
    loss_val, grads = mse_loss(batch)
    return _loss_op(pt, batch.labels, loss_val, grads)


LOSS_KINDS = ("bmc", "mse")


@dataclass(frozen=True)
class LossConfig:
    """Manifest-level loss selection."""

    kind: str = "bmc"
    sigma_noise: float = 1.0

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise ValueError(f"unknown loss kind {self.kind!r}; expected one of {LOSS_KINDS}")
        if self.sigma_noise <= 0:
            raise ValueError(f"sigma_noise must be positive, got {self.sigma_noise}")

    def apply(self, predictions, labels) -> Tensor:
        if self.kind == "bmc":
            return bmc_loss_op(predictions, labels, BmcConfig(self.sigma_noise))
        return mse_loss_op(predictions, labels)
