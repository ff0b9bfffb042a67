"""Mixed-example generation.

Non-linear mixing treats each image as a zero-mean waveform: the canvas is
split into four regions by a vertical and a horizontal cut, the two pure
corners come straight from each (mean-subtracted) parent, and the two
off-diagonal regions blend the parents with an energy-normalized coefficient
so the mixed signal keeps the parents' intensity energy. A linear mix-up
baseline (plain pixel and label interpolation) is provided for comparison.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import GrayImage, LabeledExample, SoftLabel, hard_class

#: Clamp for the intensity-mixing fraction; the mixing coefficient is
#: undefined at exactly 0 or 1.
LAMBDA3_EPS = 1e-6


@dataclass(frozen=True)
class MixLambdas:
    """Mixing fractions: vertical split, horizontal split, intensity share."""

    lambda1: float
    lambda2: float
    lambda3: float

    def __post_init__(self):
        if not (0.0 <= self.lambda1 <= 1.0 and 0.0 <= self.lambda2 <= 1.0):
            raise ValueError("lambda1 and lambda2 must lie in [0, 1]")
        if not 0.0 < self.lambda3 < 1.0:
            raise ValueError("lambda3 must lie strictly inside (0, 1)")


@dataclass(frozen=True)
class MixedExample:
    """A mixed image (signed, roughly zero-mean), its soft label and parents."""

    image: GrayImage
    label: SoftLabel
    lambdas: MixLambdas
    parents: tuple[str, str]


def sample_lambdas(m: int, rng: np.random.Generator) -> MixLambdas:
    """Draw the three mixing fractions from Beta(m/10, m/10).

    m = 10 gives uniform fractions (heavily interpolated examples); small m
    pushes the fractions towards {0, 1} so mixed examples stay close to one
    parent. lambda3 is clamped away from the endpoints where the mixing
    coefficient is undefined.
    """
    if not 1 <= m <= 10:
        raise ValueError(f"m must be in [1, 10], got {m!r}")
    a = m / 10.0
    l1, l2, l3 = rng.beta(a, a, size=3)
    l3 = min(max(l3, LAMBDA3_EPS), 1.0 - LAMBDA3_EPS)
    return MixLambdas(float(l1), float(l2), float(l3))


def mixing_coefficient(sigma1: float, sigma2: float, lambda3: float) -> tuple[float, float]:
    """Energy-normalized mixing coefficient c and normalization term phi.

    c = 1 / (1 + (sigma1/sigma2) * (1 - lambda3)/lambda3), evaluated in the
    overflow-safe equivalent form c = s2*l3 / (s2*l3 + s1*(1-l3)); phi is
    sqrt(c^2 + (1-c)^2), which makes the blend coefficient vector unit-norm.
    Degenerate inputs follow the limits of the formula: sigma2 = 0 gives
    c = 0, sigma1 = 0 (with sigma2 > 0) gives c = 1, both zero gives
    c = lambda3.
    """
    if not 0.0 < lambda3 < 1.0:
        raise ValueError("lambda3 must lie strictly inside (0, 1)")
    if sigma1 < 0 or sigma2 < 0:
        raise ValueError("standard deviations must be non-negative")
    num = sigma2 * lambda3
    den = num + sigma1 * (1.0 - lambda3)
    c = lambda3 if den == 0.0 else num / den
    phi = math.sqrt(c * c + (1.0 - c) * (1.0 - c))
    return c, phi


def mix_images(x1: GrayImage, x2: GrayImage, lambdas: MixLambdas) -> GrayImage:
    """Four-region non-linear mix of two same-size images.

    Rows above floor(lambda1*H) and columns left of floor(lambda2*W) mark the
    pure x1 corner; the opposite corner is pure x2; the two remaining regions
    blend the mean-subtracted parents with weights c/phi and (1-c)/phi. A
    pixel exactly on a threshold row/column belongs to the lower-index
    region. The output is signed and roughly zero-mean; no re-offset is
    applied.
    """
    if x1.shape != x2.shape:
        raise ValueError(f"shape mismatch: {x1.shape} vs {x2.shape}")
    h, w = x1.shape
    mu1, sigma1 = float(x1.mean()), float(x1.std())
    mu2, sigma2 = float(x2.mean()), float(x2.std())
    c, phi = mixing_coefficient(sigma1, sigma2, lambdas.lambda3)

    z1 = x1.astype(np.float64) - mu1
    z2 = x2.astype(np.float64) - mu2
    r = int(math.floor(lambdas.lambda1 * h))
    s = int(math.floor(lambdas.lambda2 * w))

    out = np.empty((h, w), dtype=np.float64)
    out[:r, :s] = z1[:r, :s]
    out[:r, s:] = (c / phi) * z1[:r, s:] + ((1.0 - c) / phi) * z2[:r, s:]
    out[r:, :s] = ((1.0 - c) / phi) * z1[r:, :s] + (c / phi) * z2[r:, :s]
    out[r:, s:] = z2[r:, s:]
    return out


def mix_labels(y1: SoftLabel, y2: SoftLabel, lambdas: MixLambdas) -> SoftLabel:
    """Label interpolation matching the four-region image mix.

    The weight on y1 is lambda3*lambda1 + (1-lambda3)*lambda2; the weight on
    y2 is the complement, so the output always sums to 1.
    """
    if y1.shape != y2.shape:
        raise ValueError(f"label dimension mismatch: {y1.shape} vs {y2.shape}")
    l1, l2, l3 = lambdas.lambda1, lambdas.lambda2, lambdas.lambda3
    w1 = l3 * l1 + (1.0 - l3) * l2
    w2 = l3 * (1.0 - l1) + (1.0 - l3) * (1.0 - l2)
    return w1 * y1 + w2 * y2


def nonlinear_mix(ex1: LabeledExample, ex2: LabeledExample, lambdas: MixLambdas) -> MixedExample:
    """Assemble a MixedExample from two parents via the non-linear mix."""
    return MixedExample(
        image=mix_images(ex1.image, ex2.image, lambdas),
        label=mix_labels(ex1.label, ex2.label, lambdas),
        lambdas=lambdas,
        parents=(ex1.source_id, ex2.source_id),
    )


def linear_mixup(
    x1: GrayImage,
    x2: GrayImage,
    y1: SoftLabel,
    y2: SoftLabel,
    lambda3: float,
    parents: tuple[str, str] = ("", ""),
) -> MixedExample:
    """Linear mix-up baseline: plain pixel and label interpolation.

    image = lambda3*x1 + (1-lambda3)*x2 with no mean subtraction or energy
    normalization; the label mixes with the same weight.
    """
    if x1.shape != x2.shape:
        raise ValueError(f"shape mismatch: {x1.shape} vs {x2.shape}")
    if y1.shape != y2.shape:
        raise ValueError(f"label dimension mismatch: {y1.shape} vs {y2.shape}")
    lam = MixLambdas(lambda3, lambda3, lambda3)
    return MixedExample(
        image=lambda3 * x1.astype(np.float64) + (1.0 - lambda3) * x2.astype(np.float64),
        label=lambda3 * y1 + (1.0 - lambda3) * y2,
        lambdas=lam,
        parents=parents,
    )


def pair_dataset(
    examples: list[LabeledExample], rng: np.random.Generator
) -> tuple[list[tuple[LabeledExample, LabeledExample]], list[LabeledExample]]:
    """Random maximum cross-class matching of a dataset.

    Every pair joins examples with distinct argmax classes and each example
    lands in at most one pair. Examples that cannot be matched cross-class
    (the class-imbalance remainder) are returned unpaired so callers can pass
    them through the pipeline unmixed.
    """
    buckets: dict[int, list[LabeledExample]] = {}
    for ex in examples:
        buckets.setdefault(hard_class(ex.label), []).append(ex)
    if len(buckets) < 2:
        raise ValueError("pairing requires at least 2 classes")

    for cls in sorted(buckets):
        order = rng.permutation(len(buckets[cls]))
        buckets[cls] = [buckets[cls][i] for i in order]

    pairs: list[tuple[LabeledExample, LabeledExample]] = []
    while True:
        # Pop from the two largest buckets; keeps the matching maximum.
        live = sorted(buckets, key=lambda cls: (-len(buckets[cls]), cls))
        live = [cls for cls in live if buckets[cls]]
        if len(live) < 2:
            break
        a, b = live[0], live[1]
        pairs.append((buckets[a].pop(), buckets[b].pop()))

    leftovers = [ex for cls in sorted(buckets) for ex in buckets[cls]]
    return pairs, leftovers
