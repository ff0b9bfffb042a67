"""Classification metrics plus the affinity/diversity diagnostics.

Affinity measures distribution shift: the loss gap a clean-trained model
sees between augmented and clean validation data, A = E[L(D_v')] - E[L(D_v)]
(nats; larger = stronger shift; can be negative). Diversity measures sample
complexity as the expected final training loss of the run under the policy,
approximated by the mean per-batch loss of the last epoch.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import LabeledExample, PolicyConfig, Variant
from .mixer import pair_dataset
from .policy import augment
from .trainer import TrainedModel, kl_loss, predict, scores_for


@dataclass(frozen=True)
class ConfusionMatrix:
    """counts[i, j] = examples of true class i predicted as class j."""

    counts: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.counts)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise ValueError(f"confusion matrix must be square, got {c.shape}")
        if (c < 0).any():
            raise ValueError("confusion counts must be >= 0")

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True)
class AffinityDiversity:
    affinity: float
    diversity: float
    m: int
    n: int
    variant: Variant


def confusion(model: TrainedModel, examples: list[LabeledExample]) -> ConfusionMatrix:
    """Evaluate on clean one-hot examples; argmax ties go to the lowest index."""
    if not examples:
        raise ValueError("cannot build a confusion matrix from zero examples")
    c = model.model_cfg.classes
    probs = predict(model, [ex.image for ex in examples])
    counts = np.zeros((c, c), dtype=np.int64)
    for ex, p in zip(examples, probs):
        true = int(np.argmax(ex.label))
        pred = int(np.argmax(p))
        counts[true, pred] += 1
    return ConfusionMatrix(counts=counts)


def macro_prf(cm: ConfusionMatrix) -> tuple[float, float, float]:
    """Macro precision/recall/F1; zero-denominator classes contribute 0.

    The macro F1 is the mean of per-class F1 values, not the F1 of the mean
    precision and recall.
    """
    counts = np.asarray(cm.counts, dtype=np.float64)
    tp = np.diag(counts)
    col = counts.sum(axis=0)
    row = counts.sum(axis=1)
    prec = np.divide(tp, col, out=np.zeros_like(tp), where=col > 0)
    rec = np.divide(tp, row, out=np.zeros_like(tp), where=row > 0)
    pr = prec + rec
    f1 = np.divide(2.0 * prec * rec, pr, out=np.zeros_like(tp), where=pr > 0)
    return float(prec.mean()), float(rec.mean()), float(f1.mean())


def _augmented_copy(
    val: list[LabeledExample], policy: PolicyConfig, rng: np.random.Generator
) -> tuple[list[np.ndarray], list[np.ndarray], list[bool]]:
    """One policy draw over the validation set (mixing pairs within val)."""
    if policy.mixes:
        pairs, leftovers = pair_dataset(list(val), rng)
        entries: list = list(pairs) + list(leftovers)
    else:
        entries = list(val)
    images, labels, premixed = [], [], []
    for entry in entries:
        out = augment(entry, policy, rng)
        images.append(out.image)
        labels.append(out.label)
        premixed.append(isinstance(entry, tuple) and policy.variant is Variant.NONLINEAR_MIX)
    return images, labels, premixed


def affinity(
    clean_model: TrainedModel,
    val: list[LabeledExample],
    policy: PolicyConfig,
    rng: np.random.Generator,
    repeats: int = 5,
) -> float:
    """Loss gap E[L(augmented val)] - L(clean val) under a clean model.

    The expectation is approximated with `repeats` independent augmentation
    draws. The model must have been trained without augmentation (variant
    NoAug); anything else is rejected so the shift measurement stays
    uncontaminated.
    """
    if clean_model.policy is None or clean_model.policy.variant is not Variant.NO_AUG:
        got = None if clean_model.policy is None else clean_model.policy.variant.value
        raise ValueError(f"affinity requires a NoAug-trained model, got {got!r}")
    if not val:
        raise ValueError("empty validation set")
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    clean_scores = scores_for(clean_model, [ex.image for ex in val])
    clean_labels = np.stack([ex.label for ex in val])
    clean_loss = kl_loss(clean_scores, clean_labels)
    aug_losses = []
    for _ in range(repeats):
        images, labels, premixed = _augmented_copy(val, policy, rng)
        scores = scores_for(clean_model, images, premixed)
        aug_losses.append(kl_loss(scores, np.stack(labels)))
    return float(np.mean(aug_losses) - clean_loss)


def diversity(train_run: TrainedModel) -> float:
    """Mean training loss of the final epoch run (nats)."""
    if not train_run.loss_history:
        raise ValueError("model has no training history")
    return float(train_run.loss_history[-1])
