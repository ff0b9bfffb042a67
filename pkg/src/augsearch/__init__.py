"""Augmentation policy search for grayscale classification.

Non-linear mixed-example augmentation, an extended RandAugment-style
transform catalog (18 transforms, one shared magnitude), soft-label KL
training, affinity/diversity diagnostics, and grid search over (m, n).
"""

from .core import (
    DatasetSplit,
    LabeledExample,
    PolicyConfig,
    Variant,
    derive_seed,
    one_hot,
    seeded_rng,
)
from .mixer import (
    MixLambdas,
    MixedExample,
    linear_mixup,
    mix_images,
    mix_labels,
    mixing_coefficient,
    nonlinear_mix,
    pair_dataset,
    sample_lambdas,
)
from .policy import AugmentationPlan, active_catalog, augment, sample_plan, sn_pol_augment
from .transforms import FULL_CATALOG, TransformDescriptor, apply
from .trainer import (
    ModelConfig,
    TrainConfig,
    TrainedModel,
    TrainingDiverged,
    kl_loss,
    kl_loss_grad,
    load_model,
    predict,
    save_model,
    train,
)
from .metrics import AffinityDiversity, ConfusionMatrix, affinity, confusion, diversity, macro_prf
from .search import (
    AblationEntry,
    AblationReport,
    CellResult,
    SearchConfig,
    ablation_suite,
    make_folds,
    run_grid,
    select_best,
)
from .cli import load_manifest, synth_dataset

__version__ = "0.1.0"

__all__ = [
    "AblationEntry",
    "AblationReport",
    "AffinityDiversity",
    "AugmentationPlan",
    "CellResult",
    "ConfusionMatrix",
    "DatasetSplit",
    "FULL_CATALOG",
    "LabeledExample",
    "MixLambdas",
    "MixedExample",
    "ModelConfig",
    "PolicyConfig",
    "SearchConfig",
    "TrainConfig",
    "TrainedModel",
    "TrainingDiverged",
    "TransformDescriptor",
    "Variant",
    "ablation_suite",
    "active_catalog",
    "affinity",
    "apply",
    "augment",
    "confusion",
    "derive_seed",
    "diversity",
    "kl_loss",
    "kl_loss_grad",
    "linear_mixup",
    "load_manifest",
    "load_model",
    "macro_prf",
    "make_folds",
    "mix_images",
    "mix_labels",
    "mixing_coefficient",
    "nonlinear_mix",
    "one_hot",
    "pair_dataset",
    "predict",
    "run_grid",
    "sample_lambdas",
    "sample_plan",
    "save_model",
    "seeded_rng",
    "select_best",
    "sn_pol_augment",
    "synth_dataset",
    "train",
]
