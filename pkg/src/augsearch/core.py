"""Domain types, dataset model and the deterministic RNG contract.

Images are plain 2D numpy float arrays (H x W, row-major). Intensities are
nominally in [0, 255] for display, but arbitrary finite reals are legal:
mixed-example generation produces signed, roughly zero-mean images and the
trainer must see them unclipped. Labels are 1D probability vectors.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from enum import Enum

import numpy as np

GrayImage = np.ndarray  # 2D float array, shape (H, W)
SoftLabel = np.ndarray  # 1D float array, shape (C,), non-negative, sums to 1

LABEL_SUM_TOL = 1e-9


class Variant(str, Enum):
    """Augmentation policy variants (ablation columns)."""

    NO_AUG = "NoAug"
    SN_POL = "SNPol"
    RA = "RA"
    RA_SPECKLE = "RAPlusSpeckle"
    RA_DEFORM = "RAPlusDeform"
    EXT_RA = "ExtRA"
    LINEAR_MIX = "LinearMixRA"
    NONLINEAR_MIX = "NonlinearMixRA"


#: Variants that generate mixed examples from image pairs.
MIXING_VARIANTS = frozenset({Variant.LINEAR_MIX, Variant.NONLINEAR_MIX})


def seeded_rng(seed: int, stream_label: str) -> np.random.Generator:
    """Deterministic, order-independent random stream.

    Identical (seed, stream_label) pairs yield identical streams across runs
    and across parallel execution orders; distinct labels yield independent
    streams. The label is hashed so streams can be keyed by structured names
    like ``"cell/ExtRA/m5/n3/fold0"``.
    """
    digest = hashlib.sha256(f"{seed}|{stream_label}".encode("utf-8")).digest()
    words = np.frombuffer(digest, dtype=np.uint32)
    return np.random.default_rng(np.random.SeedSequence(words.tolist()))


def derive_seed(seed: int, stream_label: str) -> int:
    """63-bit integer sub-seed, stable under the same contract as seeded_rng."""
    digest = hashlib.sha256(f"{seed}|{stream_label}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") & (2**63 - 1)


def validate_image(img: GrayImage) -> None:
    if not isinstance(img, np.ndarray) or img.ndim != 2:
        raise ValueError("image must be a 2D numpy array")
    if img.shape[0] < 1 or img.shape[1] < 1:
        raise ValueError("image must have height >= 1 and width >= 1")
    if not np.all(np.isfinite(img)):
        raise ValueError("image contains non-finite pixels")


def image_stats(img: GrayImage) -> tuple[float, float]:
    """Mean and population standard deviation (divisor H*W) of an image."""
    flat = np.asarray(img, dtype=np.float64)
    return float(flat.mean()), float(flat.std())


def one_hot(class_index: int, classes: int) -> SoftLabel:
    """One-hot probability vector for a hard class index."""
    if not 0 <= class_index < classes:
        raise ValueError(f"class index {class_index} out of range for {classes} classes")
    label = np.zeros(classes, dtype=np.float64)
    label[class_index] = 1.0
    return label


def validate_soft_label(label: SoftLabel) -> None:
    if not isinstance(label, np.ndarray) or label.ndim != 1 or label.size < 2:
        raise ValueError("label must be a 1D vector over >= 2 classes")
    if np.any(label < 0):
        raise ValueError("label has negative components")
    if abs(float(label.sum()) - 1.0) > LABEL_SUM_TOL:
        raise ValueError(f"label sums to {label.sum()!r}, expected 1")


def hard_class(label: SoftLabel) -> int:
    """Argmax class of a label; ties broken by lowest index."""
    return int(np.argmax(label))


@dataclass(frozen=True)
class LabeledExample:
    """One image with its (possibly soft) label and a provenance id."""

    image: GrayImage
    label: SoftLabel
    source_id: str

    def __post_init__(self):
        validate_image(self.image)
        validate_soft_label(self.label)


@dataclass(frozen=True)
class DatasetSplit:
    """Train/validation split for one cross-validation fold."""

    train: list[LabeledExample]
    val: list[LabeledExample]
    fold_id: int

    def __post_init__(self):
        train_ids = {e.source_id for e in self.train}
        val_ids = {e.source_id for e in self.val}
        if train_ids & val_ids:
            raise ValueError("train and val overlap by source_id")
        train_classes = {hard_class(e.label) for e in self.train}
        val_classes = {hard_class(e.label) for e in self.val}
        if not train_classes <= val_classes:
            raise ValueError("every class present in train must appear in val")


@dataclass(frozen=True)
class PolicyConfig:
    """Fully determines an augmentation pipeline.

    m is the shared magnitude (1..10; 0 is rejected because the mixing
    fractions are drawn from Beta(m/10, m/10), which has no density at 0).
    n is the number of catalog transforms applied per image (0..10).
    suppress_flips is a test hook that disables the baseline random flips so
    identity properties are assertable.
    """

    variant: Variant
    m: int = 5
    n: int = 3
    seed: int = 0
    suppress_flips: bool = False

    def __post_init__(self):
        if not isinstance(self.m, (int, np.integer)) or not 1 <= self.m <= 10:
            raise ValueError(f"m must be an integer in [1, 10], got {self.m!r}")
        if not isinstance(self.n, (int, np.integer)) or not 0 <= self.n <= 10:
            raise ValueError(f"n must be an integer in [0, 10], got {self.n!r}")

    @property
    def mixes(self) -> bool:
        return self.variant in MIXING_VARIANTS


def class_count(examples: list[LabeledExample]) -> int:
    """Class count of a dataset; rejects inconsistent label dimensions."""
    if not examples:
        raise ValueError("empty dataset")
    c = examples[0].label.size
    for e in examples:
        if e.label.size != c:
            raise ValueError("inconsistent label dimensions across dataset")
    return c
