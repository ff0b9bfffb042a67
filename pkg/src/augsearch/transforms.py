"""Shared-magnitude transform catalog.

18 transforms driven by a single integer magnitude m in [1, 10]: the 15
grayscale-applicable staples (affine warps, histogram and point operations,
cutout) plus three additions suited to speckle-textured imagery: grid
distortion, elastic deformation and multiplicative speckle noise. Every
transform maps magnitude 0 to an exact identity, preserves (H, W), and draws
any randomness (signs, noise fields, cutout position) only from the rng it
is handed.

Geometric warps resample bilinearly; affine warps pad by edge replication
and deformations reflect at the border, so no black frame leaks into the
training data as an augmentation watermark.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.ndimage import gaussian_filter

from .core import GrayImage

# ---------------------------------------------------------------------------
# resampling helpers


def _reflect_coords(t: np.ndarray, n: int) -> np.ndarray:
    """Mirror coordinates about the edge pixels (period 2*(n-1))."""
    if n == 1:
        return np.zeros_like(t)
    period = 2.0 * (n - 1)
    t = np.mod(t, period)
    return np.where(t > n - 1, period - t, t)


def _bilinear(img: GrayImage, ys: np.ndarray, xs: np.ndarray, border: str) -> GrayImage:
    """Sample img at float coordinates (ys, xs) with bilinear interpolation."""
    h, w = img.shape
    if border == "edge":
        ys = np.clip(ys, 0.0, h - 1.0)
        xs = np.clip(xs, 0.0, w - 1.0)
    elif border == "reflect":
        ys = _reflect_coords(ys, h)
        xs = _reflect_coords(xs, w)
    else:
        raise ValueError(f"unknown border mode {border!r}")
    y0 = np.floor(ys).astype(np.intp)
    x0 = np.floor(xs).astype(np.intp)
    y0 = np.clip(y0, 0, h - 2) if h > 1 else np.zeros_like(y0)
    x0 = np.clip(x0, 0, w - 2) if w > 1 else np.zeros_like(x0)
    fy = ys - y0
    fx = xs - x0
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    top = img[y0, x0] * (1.0 - fx) + img[y0, x1] * fx
    bot = img[y1, x0] * (1.0 - fx) + img[y1, x1] * fx
    return top * (1.0 - fy) + bot * fy


def _grid(h: int, w: int) -> tuple[np.ndarray, np.ndarray]:
    ys, xs = np.meshgrid(
        np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij"
    )
    return ys, xs


def _warp_affine(img: GrayImage, mat: np.ndarray) -> GrayImage:
    """Warp with a 2x3 output->source affine map acting on centered coords."""
    h, w = img.shape
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    ys, xs = _grid(h, w)
    u = xs - cx
    v = ys - cy
    src_x = mat[0, 0] * u + mat[0, 1] * v + mat[0, 2] + cx
    src_y = mat[1, 0] * u + mat[1, 1] * v + mat[1, 2] + cy
    return _bilinear(img, src_y, src_x, border="edge")


# ---------------------------------------------------------------------------
# geometric transforms


def rotate(img: GrayImage, degrees: float) -> GrayImage:
    """Rotate about the image center, edge-replicated bilinear resampling."""
    if degrees == 0.0:
        return img.copy()
    rad = np.deg2rad(degrees)
    c, s = np.cos(rad), np.sin(rad)
    # Inverse rotation: output pixel pulls from the source rotated by -deg.
    mat = np.array([[c, s, 0.0], [-s, c, 0.0]])
    return _warp_affine(img, mat)


def shear_x(img: GrayImage, k: float) -> GrayImage:
    if k == 0.0:
        return img.copy()
    mat = np.array([[1.0, k, 0.0], [0.0, 1.0, 0.0]])
    return _warp_affine(img, mat)


def shear_y(img: GrayImage, k: float) -> GrayImage:
    if k == 0.0:
        return img.copy()
    mat = np.array([[1.0, 0.0, 0.0], [k, 1.0, 0.0]])
    return _warp_affine(img, mat)


def translate_x(img: GrayImage, pixels: float) -> GrayImage:
    if pixels == 0.0:
        return img.copy()
    mat = np.array([[1.0, 0.0, -pixels], [0.0, 1.0, 0.0]])
    return _warp_affine(img, mat)


def translate_y(img: GrayImage, pixels: float) -> GrayImage:
    if pixels == 0.0:
        return img.copy()
    mat = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, -pixels]])
    return _warp_affine(img, mat)


def flip(img: GrayImage, axis: str) -> GrayImage:
    """Exact mirror along 'horizontal' (left-right) or 'vertical' (up-down)."""
    if axis == "horizontal":
        return img[:, ::-1].copy()
    if axis == "vertical":
        return img[::-1, :].copy()
    raise ValueError(f"axis must be 'horizontal' or 'vertical', got {axis!r}")


# ---------------------------------------------------------------------------
# deformation transforms


def elastic_deform(
    img: GrayImage, alpha: float, sigma: float, rng: np.random.Generator
) -> GrayImage:
    """Warp by a Gaussian-smoothed random displacement field.

    The field is i.i.d. uniform [-1, 1] per pixel, smoothed with a Gaussian
    of scale sigma (pixels) and scaled by alpha (pixels). Resampling is
    bilinear with reflection at the border.
    """
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    if sigma <= 0:
        raise ValueError("sigma must be > 0")
    if alpha == 0.0:
        return img.copy()
    h, w = img.shape
    dy = gaussian_filter(rng.uniform(-1.0, 1.0, size=(h, w)), sigma, mode="reflect") * alpha
    dx = gaussian_filter(rng.uniform(-1.0, 1.0, size=(h, w)), sigma, mode="reflect") * alpha
    ys, xs = _grid(h, w)
    return _bilinear(img, ys + dy, xs + dx, border="reflect")


def _axis_map(n: int, cells: int, limit: float, rng: np.random.Generator) -> np.ndarray:
    """Piecewise-linear source coordinate for each of n output positions."""
    src_nodes = np.linspace(0.0, n - 1.0, cells + 1)
    widths = np.diff(src_nodes) * rng.uniform(1.0 - limit, 1.0 + limit, size=cells)
    dst_nodes = np.concatenate(([0.0], np.cumsum(widths)))
    dst_nodes *= (n - 1.0) / dst_nodes[-1]
    return np.interp(np.arange(n, dtype=np.float64), dst_nodes, src_nodes)


def grid_distortion(
    img: GrayImage, cells: int, limit: float, rng: np.random.Generator
) -> GrayImage:
    """Rescale the cells of a coarse axis-aligned grid independently.

    Each cell edge is stretched by a factor from [1-limit, 1+limit] per axis
    (rows first, then columns) and the cumulative positions are renormalized
    to the image extent, giving a separable piecewise-linear warp.
    """
    if cells < 2:
        raise ValueError("cells must be >= 2")
    if not 0.0 <= limit < 1.0:
        raise ValueError("limit must lie in [0, 1)")
    if limit == 0.0:
        return img.copy()
    h, w = img.shape
    src_y = _axis_map(h, cells, limit, rng)
    src_x = _axis_map(w, cells, limit, rng)
    ys = np.repeat(src_y[:, None], w, axis=1)
    xs = np.repeat(src_x[None, :], h, axis=0)
    return _bilinear(img, ys, xs, border="edge")


# ---------------------------------------------------------------------------
# noise


def speckle(img: GrayImage, variance: float, rng: np.random.Generator) -> GrayImage:
    """Multiplicative speckle: out = img * (1 + eps), eps ~ N(0, variance)."""
    if variance < 0:
        raise ValueError("variance must be >= 0")
    if variance == 0.0:
        return img.copy()
    eps = rng.standard_normal(img.shape) * np.sqrt(variance)
    return img * (1.0 + eps)


def cutout(img: GrayImage, size: int, rng: np.random.Generator) -> GrayImage:
    """Erase a square patch (clipped at the border), filled with the mean."""
    if size <= 0:
        return img.copy()
    h, w = img.shape
    cy = int(rng.integers(0, h))
    cx = int(rng.integers(0, w))
    half = size // 2
    y0, y1 = max(0, cy - half), min(h, cy - half + size)
    x0, x1 = max(0, cx - half), min(w, cx - half + size)
    out = img.copy()
    out[y0:y1, x0:x1] = img.mean()
    return out


# ---------------------------------------------------------------------------
# photometric transforms (pointwise given global image statistics)


def brightness(img: GrayImage, factor: float) -> GrayImage:
    if factor == 1.0:
        return img.copy()
    return img * factor


def contrast(img: GrayImage, factor: float) -> GrayImage:
    if factor == 1.0:
        return img.copy()
    mu = img.mean()
    return mu + factor * (img - mu)


_SMOOTH_KERNEL = np.array([[1.0, 1.0, 1.0], [1.0, 5.0, 1.0], [1.0, 1.0, 1.0]]) / 13.0


def sharpness(img: GrayImage, factor: float) -> GrayImage:
    """Blend away from (factor < 1) or past (factor > 1) a 3x3 smoothing."""
    if factor == 1.0:
        return img.copy()
    padded = np.pad(img, 1, mode="edge")
    smooth = np.zeros_like(img)
    for dy in range(3):
        for dx in range(3):
            smooth += _SMOOTH_KERNEL[dy, dx] * padded[dy : dy + img.shape[0], dx : dx + img.shape[1]]
    return smooth + factor * (img - smooth)


def gamma_adjust(img: GrayImage, gamma: float) -> GrayImage:
    """Power-law intensity remap on the [0, 255]-clamped image."""
    if gamma == 1.0:
        return img.copy()
    clamped = np.clip(img, 0.0, 255.0)
    return 255.0 * np.power(clamped / 255.0, gamma)


def solarize(img: GrayImage, threshold: float) -> GrayImage:
    """Invert [0, 255]-clamped intensities at or above the threshold."""
    clamped = np.clip(img, 0.0, 255.0)
    return np.where(clamped < threshold, img, 255.0 - clamped)


def posterize(img: GrayImage, bits: int) -> GrayImage:
    """Keep the top `bits` bits of the [0, 255]-clamped intensities."""
    if bits >= 8:
        return img.copy()
    if bits < 1:
        raise ValueError("bits must be >= 1")
    mask = 256 - (1 << (8 - bits))
    quantized = np.floor(np.clip(img, 0.0, 255.0)).astype(np.int64) & mask
    return quantized.astype(np.float64)


def autocontrast(img: GrayImage, weight: float) -> GrayImage:
    """Blend towards the full-range linear stretch of the clamped image."""
    if weight == 0.0:
        return img.copy()
    clamped = np.clip(img, 0.0, 255.0)
    lo, hi = float(clamped.min()), float(clamped.max())
    if hi <= lo:
        return img.copy()
    stretched = (clamped - lo) * (255.0 / (hi - lo))
    return img + weight * (stretched - img)


def equalize(img: GrayImage, weight: float) -> GrayImage:
    """Blend towards histogram equalization of the clamped image.

    Equalization of a degenerate (constant) histogram is the identity.
    """
    if weight == 0.0:
        return img.copy()
    levels = np.clip(np.floor(np.clip(img, 0.0, 255.0)), 0, 255).astype(np.int64)
    hist = np.bincount(levels.ravel(), minlength=256)
    nonzero = hist[hist > 0]
    if nonzero.size <= 1:
        return img.copy()
    step = (int(hist.sum()) - int(nonzero[-1])) // 255
    if step == 0:
        return img.copy()
    n = step // 2 + np.concatenate(([0], np.cumsum(hist[:-1])))
    lut = np.minimum(n // step, 255).astype(np.float64)
    equalized = lut[levels]
    return img + weight * (equalized - img)


def identity(img: GrayImage) -> GrayImage:
    return img.copy()


# ---------------------------------------------------------------------------
# catalog


@dataclass(frozen=True)
class TransformDescriptor:
    """One catalog entry: id, kind, magnitude mapping and application fn.

    magnitude_map sends m in [0, 10] to the transform's native parameter;
    it is monotone in distortion strength and maps 0 to the identity
    parameter. `signed` marks directional transforms whose parameter gets a
    uniform random sign per application.
    """

    id: str
    kind: str
    signed: bool
    magnitude_map: Callable[[float], float]
    apply_at: Callable[[GrayImage, float, np.random.Generator], GrayImage]


def _desc(id, kind, signed, mag, fn) -> TransformDescriptor:
    return TransformDescriptor(id=id, kind=kind, signed=signed, magnitude_map=mag, apply_at=fn)


# Magnitude ranges at m = 10: rotate 30 deg, shear 0.3, translate 30% of the
# axis, solarize threshold down to 0, posterize down to 4 bits, point-op
# factors 1 +/- 0.9, gamma in [0.5, 2], cutout 40% of min(H, W), grid limit
# 0.5 over 5 cells, elastic alpha 40 px at sigma 6 px, speckle variance 0.1.
GRID_CELLS = 5
ELASTIC_SIGMA = 6.0

BASE_CATALOG: tuple[TransformDescriptor, ...] = (
    _desc("identity", "photometric", False, lambda m: 0.0, lambda img, p, rng: identity(img)),
    _desc(
        "autocontrast",
        "photometric",
        False,
        lambda m: 0.1 * m,
        lambda img, p, rng: autocontrast(img, p),
    ),
    _desc("equalize", "photometric", False, lambda m: 0.1 * m, lambda img, p, rng: equalize(img, p)),
    _desc("rotate", "geometric", True, lambda m: 3.0 * m, lambda img, p, rng: rotate(img, p)),
    _desc(
        "solarize",
        "photometric",
        False,
        lambda m: 256.0 - 25.6 * m,
        lambda img, p, rng: solarize(img, p),
    ),
    _desc(
        "posterize",
        "photometric",
        False,
        lambda m: 8 - int(round(0.4 * m)),
        lambda img, p, rng: posterize(img, int(p)),
    ),
    _desc(
        "contrast",
        "photometric",
        True,
        lambda m: 0.09 * m,
        lambda img, p, rng: contrast(img, 1.0 + p),
    ),
    _desc(
        "brightness",
        "photometric",
        True,
        lambda m: 0.09 * m,
        lambda img, p, rng: brightness(img, 1.0 + p),
    ),
    _desc(
        "sharpness",
        "photometric",
        True,
        lambda m: 0.09 * m,
        lambda img, p, rng: sharpness(img, 1.0 + p),
    ),
    _desc("shear_x", "geometric", True, lambda m: 0.03 * m, lambda img, p, rng: shear_x(img, p)),
    _desc("shear_y", "geometric", True, lambda m: 0.03 * m, lambda img, p, rng: shear_y(img, p)),
    _desc(
        "translate_x",
        "geometric",
        True,
        lambda m: 0.03 * m,
        lambda img, p, rng: translate_x(img, p * img.shape[1]),
    ),
    _desc(
        "translate_y",
        "geometric",
        True,
        lambda m: 0.03 * m,
        lambda img, p, rng: translate_y(img, p * img.shape[0]),
    ),
    _desc(
        "cutout",
        "noise",
        False,
        lambda m: 0.04 * m,
        lambda img, p, rng: cutout(img, int(round(p * min(img.shape))), rng),
    ),
    _desc(
        "gamma",
        "photometric",
        True,
        lambda m: 0.1 * m,
        lambda img, p, rng: gamma_adjust(img, 2.0**p),
    ),
)

EXTENSION_CATALOG: tuple[TransformDescriptor, ...] = (
    _desc(
        "grid_distortion",
        "deformation",
        False,
        lambda m: 0.05 * m,
        lambda img, p, rng: grid_distortion(img, GRID_CELLS, p, rng),
    ),
    _desc(
        "elastic_deform",
        "deformation",
        False,
        lambda m: 4.0 * m,
        lambda img, p, rng: elastic_deform(img, p, ELASTIC_SIGMA, rng),
    ),
    _desc(
        "speckle_noise",
        "noise",
        False,
        lambda m: 0.01 * m,
        lambda img, p, rng: speckle(img, p, rng),
    ),
)

FULL_CATALOG: tuple[TransformDescriptor, ...] = BASE_CATALOG + EXTENSION_CATALOG

CATALOG_BY_ID: dict[str, TransformDescriptor] = {d.id: d for d in FULL_CATALOG}


def apply(
    desc: TransformDescriptor, img: GrayImage, m: int, rng: np.random.Generator
) -> GrayImage:
    """Apply one catalog transform at integer magnitude m in [1, 10]."""
    if not 1 <= m <= 10:
        raise ValueError(f"magnitude m must be in [1, 10], got {m!r}")
    param = desc.magnitude_map(m)
    if desc.signed:
        param = param * (1.0 if rng.random() < 0.5 else -1.0)
    return desc.apply_at(img, param, rng)
