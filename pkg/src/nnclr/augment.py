"""Stochastic two-view generation for images and plain vectors.

Per-sample randomness is a pure function of (seed, epoch, sample index), so
parallel and serial execution (and the batched fast path) produce identical
view streams. Image modes: "full" = random-resized-crop + flip + color jitter
+ random grayscale, "crop_only" drops the color ops, "none" returns two
bitwise copies. Vectors get additive Gaussian noise + coordinate masking as
the analog ("crop_only" = masking alone).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ImageTooSmall

_LUMA = np.array([0.299, 0.587, 0.114])
_LOG_RATIO = (math.log(3 / 4), math.log(4 / 3))


@dataclass
class AugmentPolicy:
    mode: str = "full"                 # full | crop_only | none
    crop_scale_range: tuple[float, float] = (0.2, 1.0)
    flip_prob: float = 0.5
    brightness: float = 0.4
    contrast: float = 0.4
    saturation: float = 0.2
    grayscale_prob: float = 0.2
    noise_sigma: float = 0.1           # vector analog of color jitter
    mask_prob: float = 0.2             # vector analog of cropping
    out_size: tuple[int, int] = (32, 32)

    def __post_init__(self):
        lo, hi = self.crop_scale_range
        assert 0 < lo <= hi <= 1.0
        for p in (self.flip_prob, self.grayscale_prob, self.mask_prob):
            assert 0.0 <= p <= 1.0
        assert self.mode in ("full", "crop_only", "none")


def view_rng(seed: int, epoch: int, index: int) -> np.random.Generator:
    """Independent RNG substream for one sample's pair of views."""
    return np.random.default_rng(np.random.SeedSequence([seed, 4, epoch, index]))


# ---- parameter sampling (one draw order, shared by all code paths) ----

def _draw_crop(policy: AugmentPolicy, h_img: int, w_img: int, rng) -> tuple[int, int, int, int]:
    lo, hi = policy.crop_scale_range
    area = h_img * w_img
    for _ in range(10):
        target = area * rng.uniform(lo, hi)
        ratio = math.exp(rng.uniform(*_LOG_RATIO))
        w = int(round(math.sqrt(target * ratio)))
        h = int(round(math.sqrt(target / ratio)))
        if 0 < w <= w_img and 0 < h <= h_img:
            top = int(rng.integers(0, h_img - h + 1))
            left = int(rng.integers(0, w_img - w + 1))
            return top, left, h, w
    return 0, 0, h_img, w_img  # fall back to the full frame


def _draw_image_params(policy: AugmentPolicy, h_img: int, w_img: int, rng) -> dict:
    params = {"crop": _draw_crop(policy, h_img, w_img, rng),
              "flip": rng.random() < policy.flip_prob}
    if policy.mode == "full":
        params["brightness"] = rng.uniform(max(0.0, 1 - policy.brightness), 1 + policy.brightness)
        params["contrast"] = rng.uniform(max(0.0, 1 - policy.contrast), 1 + policy.contrast)
        params["saturation"] = rng.uniform(max(0.0, 1 - policy.saturation), 1 + policy.saturation)
        params["grayscale"] = rng.random() < policy.grayscale_prob
    return params


# ---- image transforms (vectorized over the batch) ----

def _crop_resize(images: np.ndarray, crops: list[tuple[int, int, int, int]],
                 out_size: tuple[int, int]) -> np.ndarray:
    """Bilinear resample of per-sample crop boxes to a fixed output size.

    The source grid is top + (i + 0.5) * crop/out - 0.5, which degenerates to
    an exact pixel copy when crop size equals output size.
    """
    b, h_img, w_img, c = images.shape
    oh, ow = out_size
    tops = np.array([box[0] for box in crops], dtype=np.float64)[:, None]
    lefts = np.array([box[1] for box in crops], dtype=np.float64)[:, None]
    chs = np.array([box[2] for box in crops], dtype=np.float64)[:, None]
    cws = np.array([box[3] for box in crops], dtype=np.float64)[:, None]
    ys = tops + (np.arange(oh)[None, :] + 0.5) * chs / oh - 0.5      # (b, oh)
    xs = lefts + (np.arange(ow)[None, :] + 0.5) * cws / ow - 0.5     # (b, ow)
    ys = np.clip(ys, 0, h_img - 1)
    xs = np.clip(xs, 0, w_img - 1)
    y0 = np.floor(ys).astype(np.intp)
    x0 = np.floor(xs).astype(np.intp)
    y1 = np.minimum(y0 + 1, h_img - 1)
    x1 = np.minimum(x0 + 1, w_img - 1)
    # separable bilinear: rows first, then columns, using flat-index takes
    # (much cheaper than one 2-D fancy gather per corner)
    base = (np.arange(b) * h_img)[:, None]
    flat = images.reshape(b * h_img, w_img * c)
    r0 = flat.take((base + y0).ravel(), axis=0).reshape(b, oh, w_img, c)
    r1 = flat.take((base + y1).ravel(), axis=0).reshape(b, oh, w_img, c)
    wy = (ys - y0)[:, :, None, None]
    rows = r0 + (r1 - r0) * wy                                       # (b, oh, w, c)
    basex = (np.arange(b * oh) * w_img).reshape(b, oh, 1)
    flat_rows = rows.reshape(b * oh * w_img, c)
    c0 = flat_rows.take((basex + x0[:, None, :]).ravel(), axis=0).reshape(b, oh, ow, c)
    c1 = flat_rows.take((basex + x1[:, None, :]).ravel(), axis=0).reshape(b, oh, ow, c)
    wx = (xs - x0)[:, None, :, None]
    return c0 + (c1 - c0) * wx


def _apply_image_params(images: np.ndarray, params: list[dict],
                        policy: AugmentPolicy) -> np.ndarray:
    out = _crop_resize(images, [p["crop"] for p in params], policy.out_size)
    flips = np.array([p["flip"] for p in params])
    if flips.any():
        out[flips] = out[flips, :, ::-1]
    if policy.mode == "full":
        # jitter ops run in place to avoid churning 6 MB temporaries per batch
        bright = np.array([p["brightness"] for p in params])[:, None, None, None]
        out *= bright
        np.clip(out, 0.0, 1.0, out=out)
        mean = (out @ _LUMA).mean(axis=(1, 2))[:, None, None, None]
        contrast = np.array([p["contrast"] for p in params])[:, None, None, None]
        out -= mean
        out *= contrast
        out += mean
        np.clip(out, 0.0, 1.0, out=out)
        gray = (out @ _LUMA)[..., None]
        sat = np.array([p["saturation"] for p in params])[:, None, None, None]
        out -= gray
        out *= sat
        out += gray
        np.clip(out, 0.0, 1.0, out=out)
        gray_flags = np.array([p["grayscale"] for p in params])
        if gray_flags.any():
            gray = (out @ _LUMA)[..., None]
            out[gray_flags] = np.broadcast_to(gray, out.shape)[gray_flags]
    np.clip(out, 0.0, 1.0, out=out)
    return out


# ---- vector transforms ----

def _one_vector_view(x: np.ndarray, policy: AugmentPolicy, rng) -> np.ndarray:
    keep = rng.random(x.shape[0]) >= policy.mask_prob
    if policy.mode == "full":
        noise = rng.normal(0.0, policy.noise_sigma, size=x.shape[0])
        return (x + noise) * keep
    return x * keep


# ---- public API ----

def make_views(x: np.ndarray, policy: AugmentPolicy,
               rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Two independent augmented views of one sample (image or vector)."""
    x = np.asarray(x, dtype=np.float64)
    if policy.mode == "none":
        return x.copy(), x.copy()
    if x.ndim == 1:
        return _one_vector_view(x, policy, rng), _one_vector_view(x, policy, rng)
    if x.ndim != 3:
        raise ValueError(f"expected vector or HWC image, got shape {x.shape}")
    h_img, w_img = x.shape[:2]
    oh, ow = policy.out_size
    if h_img < oh or w_img < ow:
        raise ImageTooSmall(f"image {h_img}x{w_img} smaller than output {oh}x{ow}")
    batch = x[None]
    p1 = _draw_image_params(policy, h_img, w_img, rng)
    p2 = _draw_image_params(policy, h_img, w_img, rng)
    v1 = _apply_image_params(batch, [p1], policy)[0]
    v2 = _apply_image_params(batch, [p2], policy)[0]
    return v1, v2


def make_views_batch(samples: np.ndarray, policy: AugmentPolicy, seed: int,
                     epoch: int, indices: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Batched two-view generation; reproduces make_views sample-for-sample.

    `indices` are dataset positions: each sample draws from its own
    (seed, epoch, index) substream regardless of batch composition.
    """
    samples = np.asarray(samples, dtype=np.float64)
    if policy.mode == "none":
        return samples.copy(), samples.copy()
    if samples.ndim == 2:
        v1 = np.empty_like(samples)
        v2 = np.empty_like(samples)
        for row, idx in enumerate(indices):
            rng = view_rng(seed, epoch, int(idx))
            v1[row] = _one_vector_view(samples[row], policy, rng)
            v2[row] = _one_vector_view(samples[row], policy, rng)
        return v1, v2
    h_img, w_img = samples.shape[1:3]
    oh, ow = policy.out_size
    if h_img < oh or w_img < ow:
        raise ImageTooSmall(f"image {h_img}x{w_img} smaller than output {oh}x{ow}")
    params1, params2 = [], []
    for idx in indices:
        rng = view_rng(seed, epoch, int(idx))
        params1.append(_draw_image_params(policy, h_img, w_img, rng))
        params2.append(_draw_image_params(policy, h_img, w_img, rng))
    v1 = _apply_image_params(samples, params1, policy)
    v2 = _apply_image_params(samples, params2, policy)
    return v1, v2
