"""Grid search over (m, n) with stratified cross-validation.

Every grid cell (variant, m, n, fold, seed) is an independent training run
whose random streams are derived from the master seed and the cell's
identity alone, never from execution order. Together with single-threaded
BLAS inside each run, this makes results bit-identical whether cells run
serially or across a process pool of any size.

Affinity for every cell in a fold is measured against one clean baseline
model per fold (NoAug with flips suppressed), trained up front and shared.
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from multiprocessing import get_context
from typing import Optional, Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from .core import (
    DatasetSplit,
    LabeledExample,
    PolicyConfig,
    Variant,
    derive_seed,
    seeded_rng,
)
from .metrics import affinity, confusion, diversity, macro_prf
from .trainer import ModelConfig, TrainConfig, TrainedModel, train

#: Variants whose pipeline ignores (m, n); their cells collapse onto one rng key.
GRID_FREE_VARIANTS = frozenset({Variant.NO_AUG, Variant.SN_POL})


@dataclass(frozen=True)
class SearchConfig:
    m_values: tuple[int, ...] = (1, 3, 5, 7, 9)
    n_values: tuple[int, ...] = (1, 3, 5, 7, 9)
    folds: int = 3
    variants: tuple[Variant, ...] = (
        Variant.EXT_RA,
        Variant.LINEAR_MIX,
        Variant.NONLINEAR_MIX,
    )
    seeds_per_cell: int = 1
    model: ModelConfig = field(default_factory=ModelConfig)
    trainer: TrainConfig = field(default_factory=TrainConfig)
    affinity_repeats: int = 5

    def __post_init__(self):
        if not self.m_values or not self.n_values:
            raise ValueError("m_values and n_values must be non-empty")
        if self.folds < 2:
            raise ValueError("folds must be >= 2")
        if not self.variants:
            raise ValueError("variants must be non-empty")
        if self.seeds_per_cell < 1:
            raise ValueError("seeds_per_cell must be >= 1")
        if self.affinity_repeats < 1:
            raise ValueError("affinity_repeats must be >= 1")
        for m in self.m_values:
            if not 1 <= m <= 10:
                raise ValueError(f"m value {m} outside [1, 10]")
        for n in self.n_values:
            if not 0 <= n <= 10:
                raise ValueError(f"n value {n} outside [0, 10]")


@dataclass(frozen=True)
class CellResult:
    variant: Variant
    m: int
    n: int
    fold: int
    seed: int
    precision: float
    recall: float
    f1: float
    confusion: tuple[tuple[int, ...], ...]
    affinity: float
    diversity: float
    epochs_run: int
    wall_time: float


def make_folds(
    dataset: Sequence[LabeledExample], folds: int, master_seed: int
) -> list[DatasetSplit]:
    """Stratified fold assignment, deterministic in master_seed.

    Examples are grouped by argmax class, each group shuffled on its own
    stream and dealt round-robin; split k validates on fold k and trains on
    the rest. Every class needs at least `folds` members so each split sees
    every class on both sides.
    """
    by_class: dict[int, list[int]] = {}
    for i, ex in enumerate(dataset):
        by_class.setdefault(int(np.argmax(ex.label)), []).append(i)
    for cls, members in sorted(by_class.items()):
        if len(members) < folds:
            raise ValueError(
                f"class {cls} has {len(members)} examples, need >= {folds} for {folds} folds"
            )
    assignment: dict[int, int] = {}
    for cls, members in sorted(by_class.items()):
        order = seeded_rng(master_seed, f"fold-assign|class={cls}").permutation(len(members))
        for pos, j in enumerate(order):
            assignment[members[int(j)]] = pos % folds
    splits = []
    for k in range(folds):
        train_ex = tuple(ex for i, ex in enumerate(dataset) if assignment[i] != k)
        val_ex = tuple(ex for i, ex in enumerate(dataset) if assignment[i] == k)
        splits.append(DatasetSplit(train=train_ex, val=val_ex, fold_id=k))
    return splits


def _cell_key(variant: Variant, m: int, n: int) -> tuple[int, int]:
    """(m, n) as seen by rng derivation; grid-free variants collapse to 0,0."""
    return (0, 0) if variant in GRID_FREE_VARIANTS else (m, n)


def _baseline_policy(master_seed: int, fold: int) -> PolicyConfig:
    return PolicyConfig(
        variant=Variant.NO_AUG,
        m=1,
        n=0,
        seed=derive_seed(master_seed, f"baseline|fold={fold}"),
        suppress_flips=True,
    )


def train_fold_baseline(
    cfg: SearchConfig, split: DatasetSplit, master_seed: int
) -> TrainedModel:
    """The fold's clean reference model: no flips, no transforms, no mixing."""
    model_cfg = replace(
        cfg.model, init_seed=derive_seed(master_seed, f"baseline-init|fold={split.fold_id}")
    )
    with threadpool_limits(limits=1):
        return train(model_cfg, cfg.trainer, split, _baseline_policy(master_seed, split.fold_id))


def run_cell(
    cfg: SearchConfig,
    split: DatasetSplit,
    baseline: TrainedModel,
    variant: Variant,
    m: int,
    n: int,
    seed_index: int,
    master_seed: int,
) -> CellResult:
    """Train and evaluate one grid cell; pure given its identity."""
    km, kn = _cell_key(variant, m, n)
    ident = f"variant={variant.value}|m={km}|n={kn}|fold={split.fold_id}|seed={seed_index}"
    policy = PolicyConfig(
        variant=variant, m=m, n=n, seed=derive_seed(master_seed, f"cell|{ident}")
    )
    model_cfg = replace(
        cfg.model,
        init_seed=derive_seed(master_seed, f"init|fold={split.fold_id}|seed={seed_index}"),
    )
    started = time.perf_counter()
    with threadpool_limits(limits=1):
        model = train(model_cfg, cfg.trainer, split, policy)
        cm = confusion(model, list(split.val))
        prec, rec, f1 = macro_prf(cm)
        aff = affinity(
            baseline,
            list(split.val),
            policy,
            seeded_rng(master_seed, f"affinity|{ident}"),
            repeats=cfg.affinity_repeats,
        )
        div = diversity(model)
    return CellResult(
        variant=variant,
        m=m,
        n=n,
        fold=split.fold_id,
        seed=seed_index,
        precision=prec,
        recall=rec,
        f1=f1,
        confusion=tuple(tuple(int(v) for v in row) for row in cm.counts),
        affinity=aff,
        diversity=div,
        epochs_run=model.epochs_run,
        wall_time=time.perf_counter() - started,
    )


# Worker-process state, installed once per worker by _worker_init.
_WORKER_CTX: dict = {}


def _worker_init(cfg: SearchConfig, splits: list[DatasetSplit], baselines: dict, master_seed: int):
    _WORKER_CTX["cfg"] = cfg
    _WORKER_CTX["splits"] = splits
    _WORKER_CTX["baselines"] = baselines
    _WORKER_CTX["master_seed"] = master_seed


def _worker_run(task: tuple) -> CellResult:
    variant, m, n, fold, seed_index = task
    return run_cell(
        _WORKER_CTX["cfg"],
        _WORKER_CTX["splits"][fold],
        _WORKER_CTX["baselines"][fold],
        variant,
        m,
        n,
        seed_index,
        _WORKER_CTX["master_seed"],
    )


def run_grid(
    cfg: SearchConfig,
    dataset: Sequence[LabeledExample],
    master_seed: int,
    workers: int = 1,
    baselines: Optional[dict[int, TrainedModel]] = None,
) -> list[CellResult]:
    """All (variant, m, n, fold, seed) cells, in canonical order.

    Baselines are trained in the parent and shipped to workers once; cells
    run in a spawn-context process pool when workers > 1. Results are
    returned in task-identity order so output never depends on completion
    order. Passing precomputed per-fold baselines skips retraining them
    (they are a pure function of cfg, dataset and master_seed).
    """
    splits = make_folds(dataset, cfg.folds, master_seed)
    if baselines is None:
        baselines = {s.fold_id: train_fold_baseline(cfg, s, master_seed) for s in splits}
    tasks = [
        (variant, m, n, fold, seed_index)
        for variant in cfg.variants
        for m in cfg.m_values
        for n in cfg.n_values
        for fold in range(cfg.folds)
        for seed_index in range(cfg.seeds_per_cell)
    ]
    if workers <= 1:
        results = [
            run_cell(cfg, splits[fold], baselines[fold], variant, m, n, seed_index, master_seed)
            for variant, m, n, fold, seed_index in tasks
        ]
    else:
        ctx = get_context("spawn")
        with ProcessPoolExecutor(
            max_workers=workers,
            mp_context=ctx,
            initializer=_worker_init,
            initargs=(cfg, splits, baselines, master_seed),
        ) as pool:
            results = list(pool.map(_worker_run, tasks, chunksize=1))
    return results


def select_best(results: Sequence[CellResult]) -> tuple[Variant, int, int]:
    """Cell with the highest mean macro F1 across folds/seeds.

    Ties go to the mildest policy: lower n first, then lower m, then
    variant declaration order.
    """
    if not results:
        raise ValueError("select_best needs at least one result")
    groups: dict[tuple[Variant, int, int], list[float]] = {}
    for r in results:
        groups.setdefault((r.variant, r.m, r.n), []).append(r.f1)
    variant_order = {v: i for i, v in enumerate(Variant)}

    def rank(item):
        (variant, m, n), f1s = item
        return (-float(np.mean(f1s)), n, m, variant_order[variant])

    (variant, m, n), _ = min(groups.items(), key=rank)
    return variant, m, n


@dataclass(frozen=True)
class AblationEntry:
    variant: Variant
    m: int
    n: int
    precision_mean: float
    precision_std: float
    recall_mean: float
    recall_std: float
    f1_mean: float
    f1_std: float


@dataclass(frozen=True)
class AblationReport:
    entries: tuple[AblationEntry, ...]
    cells: tuple[CellResult, ...]


def ablation_suite(
    dataset: Sequence[LabeledExample],
    master_seed: int,
    cfg: Optional[SearchConfig] = None,
    workers: int = 1,
) -> AblationReport:
    """All eight policy variants side by side, each at its best (m, n).

    NoAug and SNPol ignore the grid and run as single cells; the six
    RA-family variants are grid-searched and report their best cell. Means
    and population stds are taken across folds (and seeds, if raised).
    """
    if cfg is None:
        cfg = SearchConfig()
    splits = make_folds(dataset, cfg.folds, master_seed)
    baselines = {s.fold_id: train_fold_baseline(cfg, s, master_seed) for s in splits}
    all_cells: list[CellResult] = []
    entries: list[AblationEntry] = []
    fixed_cfg = replace(cfg, variants=(Variant.NO_AUG, Variant.SN_POL), m_values=(1,), n_values=(0,))
    all_cells.extend(run_grid(fixed_cfg, dataset, master_seed, workers=workers, baselines=baselines))
    searched = tuple(v for v in Variant if v not in GRID_FREE_VARIANTS)
    grid_cfg = replace(cfg, variants=searched)
    all_cells.extend(run_grid(grid_cfg, dataset, master_seed, workers=workers, baselines=baselines))
    for variant in Variant:
        cells = [c for c in all_cells if c.variant is variant]
        best_v, best_m, best_n = select_best(cells)
        chosen = [c for c in cells if (c.m, c.n) == (best_m, best_n)]
        prec = np.array([c.precision for c in chosen])
        rec = np.array([c.recall for c in chosen])
        f1 = np.array([c.f1 for c in chosen])
        entries.append(
            AblationEntry(
                variant=variant,
                m=best_m,
                n=best_n,
                precision_mean=float(prec.mean()),
                precision_std=float(prec.std()),
                recall_mean=float(rec.mean()),
                recall_std=float(rec.std()),
                f1_mean=float(f1.mean()),
                f1_std=float(f1.std()),
            )
        )
    return AblationReport(entries=tuple(entries), cells=tuple(all_cells))
