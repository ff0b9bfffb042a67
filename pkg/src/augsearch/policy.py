"""Policy assembly: turn a PolicyConfig into concrete per-example pipelines.

A policy is defined by its variant plus the two scalars (m, n). Applying it
to one example (or one pair, for the mixing variants) runs: mix -> baseline
flips -> n catalog transforms drawn with replacement at magnitude m. The
flip pair is a fixed baseline in every RA-family policy and is not counted
in n. SNPol is the lone exception with its own fixed five-stage pipeline
and no (m, n) dependence.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .core import (
    GrayImage,
    LabeledExample,
    PolicyConfig,
    Variant,
)
from .mixer import MixLambdas, linear_mixup, nonlinear_mix, sample_lambdas
from .transforms import (
    BASE_CATALOG,
    CATALOG_BY_ID,
    FULL_CATALOG,
    TransformDescriptor,
    _bilinear,
    apply,
    brightness,
    flip,
    rotate,
)


@dataclass(frozen=True)
class AugmentationPlan:
    """One concrete draw of the stochastic pipeline for one example."""

    flip_h: bool
    flip_v: bool
    chosen: tuple[str, ...]
    lambdas: Optional[MixLambdas]


def active_catalog(variant: Variant) -> tuple[TransformDescriptor, ...]:
    """The sub-catalog a variant draws its n transforms from.

    NoAug and SNPol draw nothing: NoAug is flips only, SNPol runs its own
    fixed pipeline.
    """
    if variant in (Variant.NO_AUG, Variant.SN_POL):
        return ()
    if variant is Variant.RA:
        return BASE_CATALOG
    if variant is Variant.RA_SPECKLE:
        return BASE_CATALOG + (CATALOG_BY_ID["speckle_noise"],)
    if variant is Variant.RA_DEFORM:
        return BASE_CATALOG + (
            CATALOG_BY_ID["grid_distortion"],
            CATALOG_BY_ID["elastic_deform"],
        )
    return FULL_CATALOG


def sample_plan(config: PolicyConfig, rng: np.random.Generator) -> AugmentationPlan:
    """Draw one plan. Draw order: flips, lambdas (mixing only), then ids."""
    flip_h = bool(rng.random() < 0.5)
    flip_v = bool(rng.random() < 0.5)
    if config.suppress_flips:
        flip_h = flip_v = False
    lambdas = sample_lambdas(config.m, rng) if config.mixes else None
    catalog = active_catalog(config.variant)
    if catalog and config.n > 0:
        idx = rng.integers(0, len(catalog), size=config.n)
        chosen = tuple(catalog[int(i)].id for i in idx)
    else:
        chosen = ()
    return AugmentationPlan(flip_h=flip_h, flip_v=flip_v, chosen=chosen, lambdas=lambdas)


def _apply_plan(
    img: GrayImage, plan: AugmentationPlan, m: int, rng: np.random.Generator
) -> GrayImage:
    if plan.flip_h:
        img = flip(img, "horizontal")
    if plan.flip_v:
        img = flip(img, "vertical")
    for tid in plan.chosen:
        img = apply(CATALOG_BY_ID[tid], img, m, rng)
    return img


def augment(
    example_or_pair: Union[LabeledExample, tuple[LabeledExample, LabeledExample]],
    config: PolicyConfig,
    rng: np.random.Generator,
) -> LabeledExample:
    """Apply one policy draw to an example (or a pair, for mixing variants).

    Mixing variants accept either form: a pair is mixed first, a lone
    example (the class-imbalance leftover) passes through unmixed with its
    original label. Output dimensions and label dimension are preserved.
    NonlinearMix pair outputs are signed and approximately zero-mean; every
    other output stays in the input intensity range's scale.
    """
    if config.variant is Variant.SN_POL:
        if isinstance(example_or_pair, tuple):
            raise ValueError("SNPol takes single examples, not pairs")
        return sn_pol_augment(example_or_pair, rng)

    is_pair = isinstance(example_or_pair, tuple)
    if is_pair and not config.mixes:
        raise ValueError(f"variant {config.variant.value} takes single examples, not pairs")

    plan = sample_plan(config, rng)
    if is_pair:
        ex1, ex2 = example_or_pair
        assert plan.lambdas is not None
        if config.variant is Variant.NONLINEAR_MIX:
            mixed = nonlinear_mix(ex1, ex2, plan.lambdas)
        else:
            mixed = linear_mixup(
                ex1.image,
                ex2.image,
                ex1.label,
                ex2.label,
                plan.lambdas.lambda3,
                parents=(ex1.source_id, ex2.source_id),
            )
        img, label = mixed.image, mixed.label
        source_id = f"{ex1.source_id}+{ex2.source_id}"
    else:
        img, label = example_or_pair.image, example_or_pair.label
        source_id = example_or_pair.source_id

    img = _apply_plan(img, plan, config.m, rng)
    return LabeledExample(image=img, label=label, source_id=source_id)


# ---------------------------------------------------------------------------
# fixed clinical-practice baseline pipeline


def _rescale_axis(img: GrayImage, factor_y: float, factor_x: float) -> GrayImage:
    """Rescale each axis independently, then center-crop/pad back.

    Implemented as a resample of the original through the inverse scale
    about the image center, which is crop and pad in one step (pad regions
    read edge-replicated source pixels).
    """
    h, w = img.shape
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    ys, xs = np.meshgrid(
        np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij"
    )
    src_y = (ys - cy) / factor_y + cy
    src_x = (xs - cx) / factor_x + cx
    return _bilinear(img, src_y, src_x, border="edge")


def _random_crop_resize(img: GrayImage, area_frac: float, rng: np.random.Generator) -> GrayImage:
    """Crop a window keeping area_frac of the area, resize back bilinearly."""
    h, w = img.shape
    side = float(np.sqrt(area_frac))
    ch = max(1, int(round(side * h)))
    cw = max(1, int(round(side * w)))
    y0 = int(rng.integers(0, h - ch + 1))
    x0 = int(rng.integers(0, w - cw + 1))
    # Map output pixel centers onto the crop window span.
    ys = np.linspace(y0, y0 + ch - 1, h)
    xs = np.linspace(x0, x0 + cw - 1, w)
    gy = np.repeat(ys[:, None], w, axis=1)
    gx = np.repeat(xs[None, :], h, axis=0)
    return _bilinear(img, gy, gx, border="edge")


def sn_pol_apply(
    img: GrayImage,
    do_flip: bool,
    rot_deg: float,
    aspect_dy: float,
    aspect_dx: float,
    bright: float,
    area_frac: float,
    rng: np.random.Generator,
) -> GrayImage:
    """SNPol pipeline with all draws made explicit (rng places the crop)."""
    if do_flip:
        img = flip(img, "horizontal")
    if rot_deg != 0.0:
        img = rotate(img, rot_deg)
    if aspect_dy != 0.0 or aspect_dx != 0.0:
        img = _rescale_axis(img, 1.0 + aspect_dy, 1.0 + aspect_dx)
    if bright != 1.0:
        img = brightness(img, bright)
    if area_frac < 1.0:
        img = _random_crop_resize(img, area_frac, rng)
    return img


def sn_pol_augment(example: LabeledExample, rng: np.random.Generator) -> LabeledExample:
    """Fixed baseline: hflip p=0.5, rotation +-10 deg, per-axis rescale
    +-10%, brightness in [0.75, 1.25], crop keeping 95-100% of area resized
    back. Label unchanged."""
    do_flip = bool(rng.random() < 0.5)
    rot_deg = float(rng.uniform(-10.0, 10.0))
    aspect_dy = float(rng.uniform(-0.1, 0.1))
    aspect_dx = float(rng.uniform(-0.1, 0.1))
    bright = float(rng.uniform(0.75, 1.25))
    area_frac = float(rng.uniform(0.95, 1.0))
    img = sn_pol_apply(
        example.image, do_flip, rot_deg, aspect_dy, aspect_dx, bright, area_frac, rng
    )
    return LabeledExample(image=img, label=example.label, source_id=example.source_id)


# ---------------------------------------------------------------------------
# config file round-trip


def policy_to_text(config: PolicyConfig) -> str:
    lines = [
        f"variant = {config.variant.value}",
        f"m = {config.m}",
        f"n = {config.n}",
        f"seed = {config.seed}",
    ]
    return "\n".join(lines) + "\n"


def policy_from_text(text: str) -> PolicyConfig:
    """Parse `key = value` lines; unknown keys are errors, '#' comments ok."""
    fields: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if key in fields:
            raise ValueError(f"line {lineno}: duplicate key {key!r}")
        fields[key] = value.strip()
    allowed = {"variant", "m", "n", "seed"}
    unknown = set(fields) - allowed
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    if "variant" not in fields:
        raise ValueError("config missing required key 'variant'")
    try:
        variant = Variant(fields["variant"])
    except ValueError:
        raise ValueError(f"unknown variant {fields['variant']!r}") from None
    return PolicyConfig(
        variant=variant,
        m=int(fields.get("m", 5)),
        n=int(fields.get("n", 3)),
        seed=int(fields.get("seed", 0)),
    )
