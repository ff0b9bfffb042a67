"""Command line entry points: dataset ingestion, orchestration, reports.

Subcommands: search (grid search + best-cell selection), ablation (all
eight variants side by side), augment-preview (write augmented samples as
PNGs), affinity-scatter (per-cell affinity/diversity/F1 rows), train-one
(single policy training run).

Reports are written as pretty-printed JSON with canonical key order and
floats at 9 significant digits, so a fixed seed yields byte-identical
output regardless of worker count; flat CSVs next to it feed plotting
pipelines. Exit codes: 0 ok, 1 usage error, 2 data error, 3 training
divergence.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from PIL import Image
from scipy.ndimage import gaussian_filter

from .core import (
    LabeledExample,
    PolicyConfig,
    Variant,
    class_count,
    one_hot,
    seeded_rng,
)
from .mixer import pair_dataset
from .policy import augment
from .search import (
    CellResult,
    SearchConfig,
    ablation_suite,
    run_grid,
    select_best,
)
from .trainer import ModelConfig, TrainConfig, TrainingDiverged

REPORT_VERSION = "1"


class UsageError(Exception):
    """Bad flags or malformed configuration (exit 1)."""


class DataError(Exception):
    """Unreadable or inconsistent dataset inputs (exit 2)."""


# ---------------------------------------------------------------------------
# synthetic dataset

# Shape archetypes cycle per class; pose, scale and intensity vary per
# example so a small training split undersamples the within-class variation.
_SYNTH_BG_LEVEL = 38.0
_SYNTH_BG_CLOUD = 16.0
_SYNTH_SPECKLE = 0.30
_SYNTH_JITTER = 0.18
_SYNTH_SCALE = (0.50, 1.0)
_SYNTH_INTENSITY = (100.0, 180.0)


def _pose_grid(size: int, rng: np.random.Generator):
    """Rotated, shifted, scaled coordinates (u, v) plus the scale radius."""
    yy, xx = np.meshgrid(
        np.arange(size, dtype=np.float64), np.arange(size, dtype=np.float64), indexing="ij"
    )
    cy = (size - 1) / 2.0 + rng.uniform(-_SYNTH_JITTER, _SYNTH_JITTER) * size
    cx = (size - 1) / 2.0 + rng.uniform(-_SYNTH_JITTER, _SYNTH_JITTER) * size
    theta = rng.uniform(0.0, np.pi)
    radius = rng.uniform(*_SYNTH_SCALE) * size * 0.30
    c, s = np.cos(theta), np.sin(theta)
    u = c * (xx - cx) + s * (yy - cy)
    v = -s * (xx - cx) + c * (yy - cy)
    return u, v, radius


def _soft(x: np.ndarray, edge: float) -> np.ndarray:
    """1 inside (x <= 0), 0 outside, linear ramp of width edge."""
    return np.clip(1.0 - x / edge, 0.0, 1.0)


def _shape_mask(archetype: int, tier: int, size: int, rng: np.random.Generator) -> np.ndarray:
    u, v, r = _pose_grid(size, rng)
    edge = 0.06 * size
    thin = 1.0 / (1.0 + 0.35 * tier)
    if archetype == 0:
        re = np.sqrt((u / r) ** 2 + (v / (0.62 * r)) ** 2)
        return _soft(np.abs(re - 1.0) * r - 0.16 * r * thin, edge)
    if archetype == 1:
        period = 0.50 * r
        dv = np.mod(v + 0.5 * period, period) - 0.5 * period
        bands = _soft(np.abs(dv) - 0.13 * r * thin, edge)
        window = _soft(np.maximum(np.abs(u) - r, np.abs(v) - 0.85 * r), edge)
        return bands * window
    if archetype == 2:
        mask = np.zeros((size, size))
        for _ in range(3 + tier):
            au = rng.uniform(-0.75, 0.75) * r
            av = rng.uniform(-0.75, 0.75) * r
            sig = 0.17 * r * rng.uniform(0.8, 1.25)
            mask += np.exp(-(((u - au) ** 2 + (v - av) ** 2) / (2.0 * sig**2)))
        return np.clip(mask, 0.0, 1.0)
    period = 0.55 * r
    du = np.mod(u + 0.5 * period, period) - 0.5 * period
    dv = np.mod(v + 0.5 * period, period) - 0.5 * period
    dots = _soft(np.sqrt(du**2 + dv**2) - 0.15 * r * thin, edge * 0.7)
    window = _soft(np.sqrt(u**2 + v**2) - 1.1 * r, edge * 2.0)
    return dots * window


def synth_dataset(classes: int, per_class: int, size: int, seed: int) -> list[LabeledExample]:
    """Procedural grayscale classes over speckle-textured background.

    Four texture archetypes (ellipse ring, parallel stripes, blob cluster,
    dot lattice) cycle across classes, with a thinner/denser tier every
    fourth class. The archetypes are told apart by local structure (edge
    curvature, parallelism, smoothness, granularity) rather than global
    layout, so partial views of an example remain class-informative. Each
    example draws its own pose, scale, shape intensity and noise, keyed by
    (seed, class, index) so the pixel data is reproducible element-wise.
    """
    if classes < 2:
        raise ValueError("classes must be >= 2")
    if per_class < 1:
        raise ValueError("per_class must be >= 1")
    if size < 8:
        raise ValueError("size must be >= 8")
    examples = []
    for c in range(classes):
        for i in range(per_class):
            rng = seeded_rng(seed, f"synth|class={c}|idx={i}")
            cloud = gaussian_filter(rng.standard_normal((size, size)), sigma=size / 24.0)
            img = _SYNTH_BG_LEVEL + _SYNTH_BG_CLOUD * cloud
            mask = _shape_mask(c % 4, c // 4, size, rng)
            img = img + rng.uniform(*_SYNTH_INTENSITY) * mask
            img = img * (1.0 + _SYNTH_SPECKLE * rng.standard_normal((size, size)))
            img = np.clip(img, 0.0, 255.0)
            examples.append(
                LabeledExample(
                    image=img,
                    label=one_hot(c, classes),
                    source_id=f"synth-c{c}-i{i}",
                )
            )
    return examples


def parse_synth_spec(text: str) -> tuple[int, int, int]:
    """'CxPxS' -> (classes, per_class, size), e.g. '4x50x64'."""
    parts = text.lower().split("x")
    if len(parts) != 3:
        raise UsageError(f"--synth expects CLASSESxPER_CLASSxSIZE, got {text!r}")
    try:
        classes, per_class, size = (int(p) for p in parts)
    except ValueError:
        raise UsageError(f"--synth expects three integers, got {text!r}") from None
    return classes, per_class, size


# ---------------------------------------------------------------------------
# manifest datasets


@dataclass(frozen=True)
class DatasetManifest:
    root: Path
    entries: tuple[tuple[str, str], ...]
    class_names: tuple[str, ...]


def _load_gray_image(path: Path) -> np.ndarray:
    try:
        with Image.open(path) as im:
            arr = np.asarray(im, dtype=np.float64)
    except OSError as exc:
        raise DataError(f"cannot read image {path}: {exc}") from exc
    if arr.ndim == 3:
        arr = arr.mean(axis=2)
    if arr.ndim != 2:
        raise DataError(f"{path}: expected a 2D grayscale image, got shape {arr.shape}")
    return arr


def _area_downscale(arr: np.ndarray, target: tuple[int, int]) -> np.ndarray:
    h, w = target
    if arr.shape == (h, w):
        return arr
    im = Image.fromarray(arr.astype(np.float32), mode="F")
    return np.asarray(im.resize((w, h), Image.Resampling.BOX), dtype=np.float64)


def load_manifest(
    path, input_size: tuple[int, int], class_names: Optional[Sequence[str]] = None
) -> tuple[DatasetManifest, list[LabeledExample]]:
    """Read a `path,class` CSV and decode its images.

    Class indices follow class_names order (sorted unique manifest classes
    when not given explicitly). Images are decoded to grayscale (channel
    average for multi-channel input) and downscaled by area averaging.
    Examples keep manifest row order.
    """
    manifest_path = Path(path)
    if not manifest_path.is_file():
        raise DataError(f"manifest not found: {manifest_path}")
    lines = manifest_path.read_text(encoding="utf-8").splitlines()
    if not lines or lines[0].strip() != "path,class":
        raise DataError(f"{manifest_path}: first line must be the header 'path,class'")
    entries: list[tuple[str, str]] = []
    for lineno, raw in enumerate(lines[1:], start=2):
        if not raw.strip():
            continue
        parts = raw.split(",")
        if len(parts) != 2:
            raise DataError(f"{manifest_path} row {lineno}: expected 'path,class', got {raw!r}")
        entries.append((parts[0].strip(), parts[1].strip()))
    if not entries:
        raise DataError(f"{manifest_path}: no data rows")
    if class_names is None:
        class_names = tuple(sorted({cls for _, cls in entries}))
    else:
        class_names = tuple(class_names)
    index = {name: i for i, name in enumerate(class_names)}
    root = manifest_path.parent
    examples = []
    for lineno, (rel, cls) in enumerate(entries, start=2):
        if cls not in index:
            raise DataError(f"{manifest_path} row {lineno}: unknown class {cls!r}")
        img_path = root / rel
        if not img_path.is_file():
            raise DataError(f"{manifest_path} row {lineno}: image not found: {img_path}")
        arr = _area_downscale(_load_gray_image(img_path), input_size)
        examples.append(
            LabeledExample(
                image=arr,
                label=one_hot(index[cls], len(class_names)),
                source_id=rel,
            )
        )
    manifest = DatasetManifest(root=root, entries=tuple(entries), class_names=class_names)
    return manifest, examples


# ---------------------------------------------------------------------------
# canonical serialization


def fmt9(value: float) -> str:
    """Floats at 9 significant digits; stable under parse/re-format."""
    if isinstance(value, float) and not np.isfinite(value):
        raise ValueError(f"non-finite value in report: {value}")
    return format(value, ".9g")


def canonical_json(obj, indent: int = 0) -> str:
    """Pretty JSON with sorted keys and fmt9 floats; round-trips bytewise."""
    pad = "  " * indent
    inner = "  " * (indent + 1)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        parts = [
            f'{inner}"{key}": {canonical_json(obj[key], indent + 1)}' for key in sorted(obj)
        ]
        return "{\n" + ",\n".join(parts) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        parts = [f"{inner}{canonical_json(item, indent + 1)}" for item in obj]
        return "[\n" + ",\n".join(parts) + "\n" + pad + "]"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return fmt9(float(obj))
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def write_json(path: Path, obj) -> None:
    path.write_text(canonical_json(obj) + "\n", encoding="utf-8", newline="\n")


def write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    def cell(v) -> str:
        if isinstance(v, (float, np.floating)):
            return fmt9(float(v))
        return str(v)

    text = ",".join(header) + "\n"
    for row in rows:
        text += ",".join(cell(v) for v in row) + "\n"
    path.write_text(text, encoding="utf-8", newline="\n")


CELLS_HEADER = (
    "variant",
    "m",
    "n",
    "fold",
    "seed",
    "precision",
    "recall",
    "f1",
    "affinity",
    "diversity",
    "epochs_run",
)

SCATTER_HEADER = ("variant", "m", "n", "affinity", "diversity", "f1")

ABLATION_HEADER = (
    "variant",
    "m",
    "n",
    "precision_mean",
    "precision_std",
    "recall_mean",
    "recall_std",
    "f1_mean",
    "f1_std",
)


def cells_rows(cells: Sequence[CellResult]) -> list[tuple]:
    return [
        (
            c.variant.value, c.m, c.n, c.fold, c.seed,
            c.precision, c.recall, c.f1, c.affinity, c.diversity, c.epochs_run,
        )
        for c in cells
    ]


def scatter_rows(cells: Sequence[CellResult]) -> list[tuple]:
    """One row per (variant, m, n): fold/seed means of affinity, diversity, F1."""
    groups: dict[tuple[Variant, int, int], list[CellResult]] = {}
    for c in cells:
        groups.setdefault((c.variant, c.m, c.n), []).append(c)
    variant_order = {v: i for i, v in enumerate(Variant)}
    rows = []
    for (variant, m, n) in sorted(groups, key=lambda k: (variant_order[k[0]], k[1], k[2])):
        cs = groups[(variant, m, n)]
        rows.append(
            (
                variant.value, m, n,
                float(np.mean([c.affinity for c in cs])),
                float(np.mean([c.diversity for c in cs])),
                float(np.mean([c.f1 for c in cs])),
            )
        )
    return rows


def cell_dict(c: CellResult) -> dict:
    return {
        "variant": c.variant.value,
        "m": c.m,
        "n": c.n,
        "fold": c.fold,
        "seed": c.seed,
        "precision": c.precision,
        "recall": c.recall,
        "f1": c.f1,
        "confusion": [list(row) for row in c.confusion],
        "affinity": c.affinity,
        "diversity": c.diversity,
        "epochs_run": c.epochs_run,
        "wall_time": c.wall_time,
    }


# ---------------------------------------------------------------------------
# configuration


_LIST_KEYS = {"m_values", "n_values", "variants"}
_INT_KEYS = {
    "folds",
    "seeds_per_cell",
    "batch_size",
    "min_epochs",
    "patience",
    "max_epochs",
    "affinity_repeats",
    "input_size",
    "classes",
}
_FLOAT_KEYS = {"learning_rate", "momentum", "weight_decay"}
_STR_KEYS = {"architecture"}
_ALL_KEYS = _LIST_KEYS | _INT_KEYS | _FLOAT_KEYS | _STR_KEYS


def parse_config_file(path) -> dict:
    """`key = value` lines; '#' comments; unknown keys are errors."""
    cfg_path = Path(path)
    if not cfg_path.is_file():
        raise UsageError(f"config file not found: {cfg_path}")
    values: dict = {}
    for lineno, raw in enumerate(cfg_path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{cfg_path} line {lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in _ALL_KEYS:
            raise UsageError(f"{cfg_path} line {lineno}: unknown key {key!r}")
        if key in values:
            raise UsageError(f"{cfg_path} line {lineno}: duplicate key {key!r}")
        try:
            if key in _LIST_KEYS:
                items = [p.strip() for p in value.split(",") if p.strip()]
                if key == "variants":
                    values[key] = tuple(Variant(p) for p in items)
                else:
                    values[key] = tuple(int(p) for p in items)
            elif key in _INT_KEYS:
                values[key] = int(value)
            elif key in _FLOAT_KEYS:
                values[key] = float(value)
            else:
                values[key] = value
        except ValueError as exc:
            raise UsageError(f"{cfg_path} line {lineno}: bad value for {key!r}: {exc}") from None
    return values


def build_search_config(values: dict, classes: int, size: int) -> SearchConfig:
    model = ModelConfig(
        architecture=values.get("architecture", "small-convnet"),
        input_size=(values.get("input_size", size), values.get("input_size", size)),
        classes=values.get("classes", classes),
        init_seed=0,
    )
    trainer = TrainConfig(
        learning_rate=values.get("learning_rate", 1e-3),
        momentum=values.get("momentum", 0.9),
        weight_decay=values.get("weight_decay", 1e-4),
        batch_size=values.get("batch_size", 50),
        min_epochs=values.get("min_epochs", 1),
        patience=values.get("patience", 20),
        max_epochs=values.get("max_epochs", 150),
    )
    kwargs = {}
    for key in ("m_values", "n_values", "folds", "variants", "seeds_per_cell", "affinity_repeats"):
        if key in values:
            kwargs[key] = values[key]
    return SearchConfig(model=model, trainer=trainer, **kwargs)


def _load_dataset(args, values: dict) -> tuple[list[LabeledExample], dict]:
    """Dataset from --synth or --dataset; returns examples + a descriptor."""
    if args.synth and args.dataset:
        raise UsageError("give either --synth or --dataset, not both")
    if args.synth:
        classes, per_class, size = parse_synth_spec(args.synth)
        try:
            examples = synth_dataset(classes, per_class, size, args.seed)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        return examples, {"synth": args.synth, "seed": args.seed}
    if args.dataset:
        size = values.get("input_size", 64)
        _, examples = load_manifest(args.dataset, (size, size))
        return examples, {"manifest": str(args.dataset), "input_size": size}
    raise UsageError("a dataset source is required: --synth SPEC or --dataset PATH")


def _prepare(args) -> tuple[list[LabeledExample], dict, SearchConfig, dict]:
    values = parse_config_file(args.config) if args.config else {}
    examples, descriptor = _load_dataset(args, values)
    classes = class_count(examples)
    size = examples[0].image.shape[0]
    try:
        cfg = build_search_config(values, classes, size)
    except ValueError as exc:
        raise UsageError(f"bad configuration: {exc}") from None
    if examples[0].image.shape != cfg.model.input_size:
        raise UsageError(
            f"dataset images are {examples[0].image.shape}, model expects {cfg.model.input_size}"
        )
    return examples, descriptor, cfg, values


def _config_echo(cfg: SearchConfig) -> dict:
    return {
        "m_values": list(cfg.m_values),
        "n_values": list(cfg.n_values),
        "folds": cfg.folds,
        "variants": [v.value for v in cfg.variants],
        "seeds_per_cell": cfg.seeds_per_cell,
        "affinity_repeats": cfg.affinity_repeats,
        "model": {
            "architecture": cfg.model.architecture,
            "input_size": list(cfg.model.input_size),
            "classes": cfg.model.classes,
        },
        "trainer": {
            "learning_rate": cfg.trainer.learning_rate,
            "momentum": cfg.trainer.momentum,
            "weight_decay": cfg.trainer.weight_decay,
            "batch_size": cfg.trainer.batch_size,
            "min_epochs": cfg.trainer.min_epochs,
            "patience": cfg.trainer.patience,
            "max_epochs": cfg.trainer.max_epochs,
        },
    }


# ---------------------------------------------------------------------------
# subcommands


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _run_grid_checked(cfg, examples, seed, workers) -> list[CellResult]:
    """Fold construction failures are dataset-shape problems, not usage."""
    try:
        return run_grid(cfg, examples, seed, workers=workers)
    except ValueError as exc:
        raise DataError(str(exc)) from None


def cmd_search(args) -> int:
    examples, descriptor, cfg, _ = _prepare(args)
    out = _out_dir(args)
    cells = _run_grid_checked(cfg, examples, args.seed, args.workers)
    best_variant, best_m, best_n = select_best(cells)
    report = {
        "version": REPORT_VERSION,
        "kind": "search",
        "seed": args.seed,
        "dataset": descriptor,
        "config": _config_echo(cfg),
        "cells": [cell_dict(c) for c in cells],
        "best": {"variant": best_variant.value, "m": best_m, "n": best_n},
        "scatter": [
            {
                "variant": r[0], "m": r[1], "n": r[2],
                "affinity": r[3], "diversity": r[4], "f1": r[5],
            }
            for r in scatter_rows(cells)
        ],
    }
    write_json(out / "report.json", report)
    write_csv(out / "cells.csv", CELLS_HEADER, cells_rows(cells))
    write_csv(out / "scatter.csv", SCATTER_HEADER, scatter_rows(cells))
    return 0


def cmd_ablation(args) -> int:
    examples, descriptor, cfg, _ = _prepare(args)
    out = _out_dir(args)
    try:
        report_data = ablation_suite(examples, args.seed, cfg=cfg, workers=args.workers)
    except ValueError as exc:
        raise DataError(str(exc)) from None
    table_rows = [
        (
            e.variant.value, e.m, e.n,
            e.precision_mean, e.precision_std,
            e.recall_mean, e.recall_std,
            e.f1_mean, e.f1_std,
        )
        for e in report_data.entries
    ]
    report = {
        "version": REPORT_VERSION,
        "kind": "ablation",
        "seed": args.seed,
        "dataset": descriptor,
        "config": _config_echo(cfg),
        "ablation": [
            {
                "variant": e.variant.value,
                "m": e.m,
                "n": e.n,
                "precision": {"mean": e.precision_mean, "std": e.precision_std},
                "recall": {"mean": e.recall_mean, "std": e.recall_std},
                "f1": {"mean": e.f1_mean, "std": e.f1_std},
            }
            for e in report_data.entries
        ],
        "cells": [cell_dict(c) for c in report_data.cells],
    }
    write_json(out / "report.json", report)
    write_csv(out / "ablation.csv", ABLATION_HEADER, table_rows)
    write_csv(out / "cells.csv", CELLS_HEADER, cells_rows(report_data.cells))
    return 0


def cmd_preview(args) -> int:
    examples, _, _, _ = _prepare(args)
    out = _out_dir(args)
    try:
        variant = Variant(args.variant)
    except ValueError:
        raise UsageError(f"unknown variant {args.variant!r}") from None
    policy = PolicyConfig(variant=variant, m=args.m, n=args.n, seed=args.seed)
    rng = seeded_rng(args.seed, "preview-pairing")
    if policy.mixes:
        pairs, leftovers = pair_dataset(examples, rng)
        entries: list = list(pairs) + list(leftovers)
    else:
        entries = list(examples)
    count = min(args.count, len(entries))
    for i in range(count):
        item_rng = seeded_rng(args.seed, f"preview|item={i}")
        result = augment(entries[i], policy, item_rng)
        img = result.image
        if isinstance(entries[i], tuple) and variant is Variant.NONLINEAR_MIX:
            img = img + 128.0
        img = np.clip(img, 0.0, 255.0).astype(np.uint8)
        Image.fromarray(img, mode="L").save(out / f"preview_{i:03d}.png")
    return 0


def cmd_scatter(args) -> int:
    examples, _, cfg, _ = _prepare(args)
    out = _out_dir(args)
    cells = _run_grid_checked(cfg, examples, args.seed, args.workers)
    write_csv(out / "scatter.csv", SCATTER_HEADER, scatter_rows(cells))
    return 0


def cmd_train_one(args) -> int:
    examples, descriptor, cfg, _ = _prepare(args)
    out = _out_dir(args)
    try:
        variant = Variant(args.variant)
    except ValueError:
        raise UsageError(f"unknown variant {args.variant!r}") from None
    one_cfg = replace(cfg, variants=(variant,), m_values=(args.m,), n_values=(args.n,))
    cells = _run_grid_checked(one_cfg, examples, args.seed, args.workers)
    report = {
        "version": REPORT_VERSION,
        "kind": "train-one",
        "seed": args.seed,
        "dataset": descriptor,
        "config": _config_echo(one_cfg),
        "cells": [cell_dict(c) for c in cells],
    }
    write_json(out / "report.json", report)
    write_csv(out / "cells.csv", CELLS_HEADER, cells_rows(cells))
    return 0


# ---------------------------------------------------------------------------
# argument parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="augsearch", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key = value configuration file")
        p.add_argument("--dataset", help="manifest CSV (header: path,class)")
        p.add_argument("--synth", help="synthetic dataset spec CLASSESxPER_CLASSxSIZE")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--workers", type=int, default=1, help="parallel training processes")
        p.add_argument("--seed", type=int, default=0, help="master seed")

    p_search = sub.add_parser("search", help="grid search over (m, n)")
    common(p_search)
    p_search.set_defaults(func=cmd_search)

    p_abl = sub.add_parser("ablation", help="all eight variants side by side")
    common(p_abl)
    p_abl.set_defaults(func=cmd_ablation)

    p_prev = sub.add_parser("augment-preview", help="write augmented samples as PNGs")
    common(p_prev)
    p_prev.add_argument("--variant", required=True)
    p_prev.add_argument("--m", type=int, default=5)
    p_prev.add_argument("--n", type=int, default=3)
    p_prev.add_argument("--count", type=int, default=8)
    p_prev.set_defaults(func=cmd_preview)

    p_scat = sub.add_parser("affinity-scatter", help="per-cell affinity/diversity CSV")
    common(p_scat)
    p_scat.set_defaults(func=cmd_scatter)

    p_one = sub.add_parser("train-one", help="train a single (variant, m, n)")
    common(p_one)
    p_one.add_argument("--variant", required=True)
    p_one.add_argument("--m", type=int, default=5)
    p_one.add_argument("--n", type=int, default=3)
    p_one.set_defaults(func=cmd_train_one)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        print(parser.format_usage(), file=sys.stderr, end="")
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except TrainingDiverged as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
