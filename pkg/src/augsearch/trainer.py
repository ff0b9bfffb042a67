"""Desk-scale classifier training on soft labels.

Models are plain numpy parameter dicts (float32) so results are bitwise
reproducible across processes and worker counts; no framework RNG or
threaded kernels are involved beyond single-threaded BLAS gemm. Two
architectures: a zero-initialized linear softmax and a small convnet,
conv(3x3, 16) -> pool(2) -> conv(3x3, 32) -> pool(2) -> dense(C) with ReLU
and He fan-in init.

The objective is the soft-label KL divergence (nats): scores go through a
softmax and L = (1/B) sum_i sum_j y_ij log(y_ij / p_ij), with the 0 log 0
terms dropped. For one-hot targets this reduces to cross-entropy; for mixed
labels it differs by the target entropy. Gradient through the softmax is
(p - y)/B.

Inputs are scaled by 1/255 and centered by the training-split mean.
Mixed-pair images arriving already zero-mean and signed skip the centering
(callers flag them per example); this keeps clean and mixed inputs on a
comparable scale.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import (
    GrayImage,
    LabeledExample,
    DatasetSplit,
    PolicyConfig,
    Variant,
    seeded_rng,
)
from .mixer import pair_dataset
from .policy import augment

ARCH_LINEAR = "linear-softmax"
ARCH_CONVNET = "small-convnet"


class TrainingDiverged(RuntimeError):
    """Raised when the training loss becomes non-finite."""


@dataclass(frozen=True)
class ModelConfig:
    architecture: str = ARCH_CONVNET
    input_size: tuple[int, int] = (64, 64)
    classes: int = 2
    init_seed: int = 0

    def __post_init__(self):
        if self.architecture not in (ARCH_LINEAR, ARCH_CONVNET):
            raise ValueError(f"unknown architecture {self.architecture!r}")
        h, w = self.input_size
        if self.architecture == ARCH_CONVNET and (h % 4 or w % 4):
            raise ValueError("small-convnet needs input_size divisible by 4 (two 2x2 pools)")
        if self.classes < 2:
            raise ValueError("classes must be >= 2")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    momentum: float = 0.9
    weight_decay: float = 1e-4
    batch_size: int = 50
    min_epochs: int = 1
    patience: int = 20
    max_epochs: int = 150

    def __post_init__(self):
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.min_epochs < 1:
            raise ValueError("min_epochs must be >= 1")
        if self.max_epochs < self.min_epochs:
            raise ValueError("max_epochs must be >= min_epochs")
        if self.learning_rate < 0 or self.weight_decay < 0:
            raise ValueError("learning_rate and weight_decay must be >= 0")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")


@dataclass
class TrainedModel:
    params: dict[str, np.ndarray]
    model_cfg: ModelConfig
    train_cfg: Optional[TrainConfig]
    policy: Optional[PolicyConfig]
    input_mean: float
    loss_history: list[float] = field(default_factory=list)
    val_history: list[float] = field(default_factory=list)
    best_epoch: int = 0
    epochs_run: int = 0


# ---------------------------------------------------------------------------
# loss


def kl_loss(scores: np.ndarray, targets: np.ndarray) -> float:
    """Mean per-example KL(target || softmax(scores)), in nats."""
    scores = np.asarray(scores, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if scores.shape != targets.shape:
        raise ValueError(f"shape mismatch: scores {scores.shape} vs targets {targets.shape}")
    if scores.ndim != 2:
        raise ValueError("expected (batch, classes) arrays")
    if not np.all(np.isfinite(scores)):
        raise ValueError("non-finite scores")
    log_p = _log_softmax(scores)
    terms = np.zeros_like(targets)
    pos = targets > 0
    terms[pos] = targets[pos] * (np.log(targets[pos]) - log_p[pos])
    return float(terms.sum() / scores.shape[0])


def kl_loss_grad(scores: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """d kl_loss / d scores = (softmax(scores) - targets) / B.

    Valid because every target row sums to 1.
    """
    scores = np.asarray(scores, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    p = np.exp(_log_softmax(scores))
    return (p - targets) / scores.shape[0]


def _log_softmax(scores: np.ndarray) -> np.ndarray:
    shifted = scores - scores.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def softmax(scores: np.ndarray) -> np.ndarray:
    return np.exp(_log_softmax(np.asarray(scores, dtype=np.float64)))


# ---------------------------------------------------------------------------
# parameter init


def init_params(cfg: ModelConfig) -> dict[str, np.ndarray]:
    h, w = cfg.input_size
    if cfg.architecture == ARCH_LINEAR:
        return {
            "w": np.zeros((h * w, cfg.classes), dtype=np.float32),
            "b": np.zeros(cfg.classes, dtype=np.float32),
        }
    rng = seeded_rng(cfg.init_seed, "model-init")
    feat = 32 * (h // 4) * (w // 4)

    def he(shape, fan):
        return (rng.standard_normal(shape) * np.sqrt(2.0 / fan)).astype(np.float32)

    # Conv kernels live in (offset, in-channel, out-channel) layout so the
    # im2col gemm needs no transposes; offset k runs row-major over the 3x3
    # window.
    return {
        "conv1_w": he((9, 1, 16), 9),
        "conv1_b": np.zeros(16, dtype=np.float32),
        "conv2_w": he((9, 16, 32), 16 * 9),
        "conv2_b": np.zeros(32, dtype=np.float32),
        "dense_w": he((feat, cfg.classes), feat),
        "dense_b": np.zeros(cfg.classes, dtype=np.float32),
    }


# ---------------------------------------------------------------------------
# convnet forward/backward (im2col based, float32, channels-last layout)


def _im2col(x: np.ndarray) -> np.ndarray:
    """(B, H, W, C) -> (B, H, W, 9*C) same-padded 3x3 patches, offset-major."""
    b, h, w, c = x.shape
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    cols = np.empty((b, h, w, 9 * c), dtype=x.dtype)
    k = 0
    for dy in range(3):
        for dx in range(3):
            cols[:, :, :, k * c : (k + 1) * c] = xp[:, dy : dy + h, dx : dx + w, :]
            k += 1
    return cols


def _col2im(dcols: np.ndarray, shape) -> np.ndarray:
    """Adjoint of _im2col: scatter-add the 9 offsets back onto the image."""
    b, h, w, c = shape
    dcols = dcols.reshape(b, h, w, 9 * c)
    dxp = np.zeros((b, h + 2, w + 2, c), dtype=dcols.dtype)
    k = 0
    for dy in range(3):
        for dx in range(3):
            dxp[:, dy : dy + h, dx : dx + w, :] += dcols[:, :, :, k * c : (k + 1) * c]
            k += 1
    return dxp[:, 1 : 1 + h, 1 : 1 + w, :]


def _conv_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    """x: (B, H, W, Cin); w: (9, Cin, Cout). Returns (out, cols)."""
    bsz, h, wd, cin = x.shape
    cout = w.shape[2]
    cols = _im2col(x).reshape(bsz * h * wd, 9 * cin)
    out = cols @ w.reshape(9 * cin, cout) + b
    return out.reshape(bsz, h, wd, cout), cols


def _conv_backward(dout: np.ndarray, cols: np.ndarray, w: np.ndarray, x_shape):
    bsz, h, wd, cin = x_shape
    cout = w.shape[2]
    dflat = dout.reshape(bsz * h * wd, cout)
    dw = (cols.T @ dflat).reshape(9, cin, cout)
    db = dflat.sum(axis=0)
    dcols = dflat @ w.reshape(9 * cin, cout).T
    dx = _col2im(dcols, x_shape)
    return dx, dw, db


def _pool_forward(x: np.ndarray):
    """2x2 max pool, stride 2, on (B, H, W, C).

    Ties resolve to the first cell in row-major window order; the masks
    returned for backward reproduce exactly that winner.
    """
    a = x[:, 0::2, 0::2, :]
    b = x[:, 0::2, 1::2, :]
    c = x[:, 1::2, 0::2, :]
    d = x[:, 1::2, 1::2, :]
    out = np.maximum(np.maximum(a, b), np.maximum(c, d))
    ma = a == out
    mb = (b == out) & ~ma
    mc = (c == out) & ~(ma | mb)
    md = ~(ma | mb | mc)
    return out, (ma, mb, mc, md)


def _pool_backward(dout: np.ndarray, masks, x_shape):
    dx = np.zeros(x_shape, dtype=dout.dtype)
    ma, mb, mc, md = masks
    dx[:, 0::2, 0::2, :] = dout * ma
    dx[:, 0::2, 1::2, :] = dout * mb
    dx[:, 1::2, 0::2, :] = dout * mc
    dx[:, 1::2, 1::2, :] = dout * md
    return dx


def _forward(params: dict, cfg: ModelConfig, x: np.ndarray, keep: bool = False):
    """x: (B, H, W) float32 normalized. Returns (scores f64, cache)."""
    bsz = x.shape[0]
    if cfg.architecture == ARCH_LINEAR:
        flat = x.reshape(bsz, -1)
        scores = flat @ params["w"] + params["b"]
        return scores.astype(np.float64), {"flat": flat} if keep else None
    x4 = x[:, :, :, None]
    a1, cols1 = _conv_forward(x4, params["conv1_w"], params["conv1_b"])
    r1 = np.maximum(a1, 0.0)
    p1, masks1 = _pool_forward(r1)
    a2, cols2 = _conv_forward(p1, params["conv2_w"], params["conv2_b"])
    r2 = np.maximum(a2, 0.0)
    p2, masks2 = _pool_forward(r2)
    flat = p2.reshape(bsz, -1)
    scores = flat @ params["dense_w"] + params["dense_b"]
    cache = None
    if keep:
        cache = {
            "x4": x4, "a1": a1, "cols1": cols1, "masks1": masks1, "p1": p1,
            "a2": a2, "cols2": cols2, "masks2": masks2, "flat": flat,
        }
    return scores.astype(np.float64), cache


def _backward(params: dict, cfg: ModelConfig, cache: dict, dscores: np.ndarray) -> dict:
    ds = dscores.astype(np.float32)
    if cfg.architecture == ARCH_LINEAR:
        flat = cache["flat"]
        return {"w": flat.T @ ds, "b": ds.sum(axis=0)}
    flat = cache["flat"]
    grads = {"dense_w": flat.T @ ds, "dense_b": ds.sum(axis=0)}
    dflat = ds @ params["dense_w"].T
    bsz = flat.shape[0]
    h4, w4 = cfg.input_size[0] // 4, cfg.input_size[1] // 4
    dp2 = dflat.reshape(bsz, h4, w4, 32)
    dr2 = _pool_backward(dp2, cache["masks2"], cache["a2"].shape)
    da2 = dr2 * (cache["a2"] > 0)
    dp1, grads["conv2_w"], grads["conv2_b"] = _conv_backward(
        da2, cache["cols2"], params["conv2_w"], cache["p1"].shape
    )
    dr1 = _pool_backward(dp1, cache["masks1"], cache["a1"].shape)
    da1 = dr1 * (cache["a1"] > 0)
    _, grads["conv1_w"], grads["conv1_b"] = _conv_backward(
        da1, cache["cols1"], params["conv1_w"], cache["x4"].shape
    )
    return grads


# ---------------------------------------------------------------------------
# normalization


def normalize_batch(
    images: Sequence[GrayImage], premixed: Sequence[bool], input_mean: float
) -> np.ndarray:
    """Stack to (B, H, W) float32: x/255 - mean, or x/255 for premixed."""
    out = np.stack([np.asarray(im, dtype=np.float64) for im in images]) / 255.0
    shift = np.where(np.asarray(premixed, dtype=bool), 0.0, input_mean)
    return (out - shift[:, None, None]).astype(np.float32)


# ---------------------------------------------------------------------------
# training


def _sgd_step(params: dict, grads: dict, vel: dict, cfg: TrainConfig) -> None:
    lr = np.float32(cfg.learning_rate)
    mu = np.float32(cfg.momentum)
    wd = np.float32(cfg.weight_decay)
    for k in params:
        g = grads[k] + wd * params[k]
        vel[k] = mu * vel[k] + g
        params[k] -= lr * vel[k]


def _build_epoch_items(
    split: DatasetSplit, policy: PolicyConfig, epoch: int
) -> tuple[list[LabeledExample], list[bool]]:
    """Re-pair (mixing variants only) and re-augment the train split."""
    fold = split.fold_id
    if policy.mixes:
        pair_rng = seeded_rng(policy.seed, f"pair|fold={fold}|epoch={epoch}")
        pairs, leftovers = pair_dataset(list(split.train), pair_rng)
        raw: list = list(pairs) + list(leftovers)
    else:
        raw = list(split.train)
    items: list[LabeledExample] = []
    premixed: list[bool] = []
    for i, entry in enumerate(raw):
        rng = seeded_rng(policy.seed, f"aug|fold={fold}|epoch={epoch}|item={i}")
        items.append(augment(entry, policy, rng))
        premixed.append(
            isinstance(entry, tuple) and policy.variant is Variant.NONLINEAR_MIX
        )
    return items, premixed


def _chunks(total: int, size: int):
    for start in range(0, total, size):
        yield range(start, min(start + size, total))


def train(
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    split: DatasetSplit,
    policy: PolicyConfig,
) -> TrainedModel:
    """Train with per-epoch re-augmentation and early stopping.

    Each epoch rebuilds the augmented training set (fresh pairing for the
    mixing variants), shuffles it, and runs SGD with momentum and weight
    decay on the KL objective. Validation accuracy on the clean split picks
    the retained weights; ties keep the earliest epoch. Halts once
    `patience` epochs pass without improvement (counted from min_epochs at
    the earliest). Non-finite loss aborts.
    """
    h, w = model_cfg.input_size
    for ex in list(split.train) + list(split.val):
        if ex.image.shape != (h, w):
            raise ValueError(
                f"example {ex.source_id!r} has shape {ex.image.shape}, model expects {(h, w)}"
            )
    input_mean = float(
        np.mean([np.asarray(ex.image, dtype=np.float64).mean() for ex in split.train]) / 255.0
    )
    params = init_params(model_cfg)
    vel = {k: np.zeros_like(v) for k, v in params.items()}

    val_x = normalize_batch(
        [ex.image for ex in split.val], [False] * len(split.val), input_mean
    )
    val_true = np.array([int(np.argmax(ex.label)) for ex in split.val])

    loss_history: list[float] = []
    val_history: list[float] = []
    best_acc = -1.0
    best_epoch = 0
    best_params = {k: v.copy() for k, v in params.items()}
    epoch = 0
    for epoch in range(1, train_cfg.max_epochs + 1):
        items, premixed = _build_epoch_items(split, policy, epoch)
        order = seeded_rng(policy.seed, f"shuffle|fold={split.fold_id}|epoch={epoch}").permutation(
            len(items)
        )
        batch_losses: list[float] = []
        for chunk in _chunks(len(items), train_cfg.batch_size):
            sel = order[chunk.start : chunk.stop]
            x = normalize_batch(
                [items[i].image for i in sel], [premixed[i] for i in sel], input_mean
            )
            y = np.stack([items[i].label for i in sel])
            scores, cache = _forward(params, model_cfg, x, keep=True)
            if not np.all(np.isfinite(scores)):
                raise TrainingDiverged(
                    f"non-finite scores at epoch {epoch}, policy {policy.variant.value} "
                    f"m={policy.m} n={policy.n} seed={policy.seed}"
                )
            loss = kl_loss(scores, y)
            if not np.isfinite(loss):
                raise TrainingDiverged(
                    f"non-finite loss {loss} at epoch {epoch}, policy {policy.variant.value} "
                    f"m={policy.m} n={policy.n} seed={policy.seed}"
                )
            batch_losses.append(loss)
            dscores = kl_loss_grad(scores, y)
            grads = _backward(params, model_cfg, cache, dscores)
            _sgd_step(params, grads, vel, train_cfg)
        loss_history.append(float(np.mean(batch_losses)))

        correct = 0
        for chunk in _chunks(len(split.val), train_cfg.batch_size):
            scores, _ = _forward(params, model_cfg, val_x[chunk.start : chunk.stop])
            correct += int((scores.argmax(axis=1) == val_true[chunk.start : chunk.stop]).sum())
        acc = correct / len(split.val)
        val_history.append(acc)
        if acc > best_acc:
            best_acc = acc
            best_epoch = epoch
            best_params = {k: v.copy() for k, v in params.items()}
        if (
            epoch >= train_cfg.min_epochs
            and epoch - max(best_epoch, train_cfg.min_epochs) >= train_cfg.patience
        ):
            break

    return TrainedModel(
        params=best_params,
        model_cfg=model_cfg,
        train_cfg=train_cfg,
        policy=policy,
        input_mean=input_mean,
        loss_history=loss_history,
        val_history=val_history,
        best_epoch=best_epoch,
        epochs_run=epoch,
    )


def predict(
    model: TrainedModel,
    images: Sequence[GrayImage],
    premixed: Optional[Sequence[bool]] = None,
) -> np.ndarray:
    """Class probabilities, one forward pass per example.

    Per-example evaluation makes each output independent of how the caller
    batches, down to the bit.
    """
    if premixed is None:
        premixed = [False] * len(images)
    h, w = model.model_cfg.input_size
    out = np.empty((len(images), model.model_cfg.classes), dtype=np.float64)
    for i, img in enumerate(images):
        if img.shape != (h, w):
            raise ValueError(f"image {i} has shape {img.shape}, model expects {(h, w)}")
        x = normalize_batch([img], [premixed[i]], model.input_mean)
        scores, _ = _forward(model.params, model.model_cfg, x)
        out[i] = softmax(scores)[0]
    return out


def scores_for(
    model: TrainedModel,
    images: Sequence[GrayImage],
    premixed: Optional[Sequence[bool]] = None,
) -> np.ndarray:
    """Raw class scores, per-example, same batching contract as predict."""
    if premixed is None:
        premixed = [False] * len(images)
    out = np.empty((len(images), model.model_cfg.classes), dtype=np.float64)
    for i, img in enumerate(images):
        x = normalize_batch([img], [premixed[i]], model.input_mean)
        s, _ = _forward(model.params, model.model_cfg, x)
        out[i] = s[0]
    return out


# ---------------------------------------------------------------------------
# serialization: magic "AFM1", header, then float32 little-endian weights


_MAGIC = b"AFM1"
_ARCH_CODES = {ARCH_LINEAR: 0, ARCH_CONVNET: 1}
_ARCH_NAMES = {v: k for k, v in _ARCH_CODES.items()}


def save_model(model: TrainedModel, path) -> None:
    with open(path, "wb") as f:
        f.write(_MAGIC)
        cfg = model.model_cfg
        f.write(
            struct.pack(
                "<BIIIqd",
                _ARCH_CODES[cfg.architecture],
                cfg.input_size[0],
                cfg.input_size[1],
                cfg.classes,
                cfg.init_seed,
                model.input_mean,
            )
        )
        names = sorted(model.params)
        f.write(struct.pack("<I", len(names)))
        for name in names:
            arr = np.ascontiguousarray(model.params[name], dtype="<f4")
            enc = name.encode("utf-8")
            f.write(struct.pack("<H", len(enc)))
            f.write(enc)
            f.write(struct.pack("<B", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            f.write(arr.tobytes())


def load_model(path) -> TrainedModel:
    """Restore the inference payload (config, normalization, weights).

    Training histories are not part of the on-disk format.
    """
    with open(path, "rb") as f:
        if f.read(4) != _MAGIC:
            raise ValueError(f"{path}: not a model file (bad magic)")
        arch_code, h, w, classes, init_seed, input_mean = struct.unpack(
            "<BIIIqd", f.read(struct.calcsize("<BIIIqd"))
        )
        if arch_code not in _ARCH_NAMES:
            raise ValueError(f"{path}: unknown architecture code {arch_code}")
        cfg = ModelConfig(
            architecture=_ARCH_NAMES[arch_code],
            input_size=(h, w),
            classes=classes,
            init_seed=init_seed,
        )
        (n_params,) = struct.unpack("<I", f.read(4))
        params: dict[str, np.ndarray] = {}
        for _ in range(n_params):
            (name_len,) = struct.unpack("<H", f.read(2))
            name = f.read(name_len).decode("utf-8")
            (ndim,) = struct.unpack("<B", f.read(1))
            shape = struct.unpack(f"<{ndim}I", f.read(4 * ndim))
            count = int(np.prod(shape)) if ndim else 1
            data = np.frombuffer(f.read(4 * count), dtype="<f4").reshape(shape)
            params[name] = data.astype(np.float32)
    return TrainedModel(
        params=params,
        model_cfg=cfg,
        train_cfg=None,
        policy=None,
        input_mean=input_mean,
    )
