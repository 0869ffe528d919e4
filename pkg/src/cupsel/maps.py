"""Per-pixel map operations: softmax, prediction masks, entropy, resampling.

Arrays follow a single layout convention throughout the package:

* probability / logit maps: float arrays of shape (height, width, channels)
* binary masks:             uint8 arrays of shape (height, width), values {0, 1}
* uncertainty maps:         float64 arrays of shape (height, width), nats

All functions are pure; inputs are never modified in place, so values are
freely shareable across threads.
"""

from __future__ import annotations

import math

import numpy as np

# Per-pixel channel sums of a probability map must match 1 within this.
PROB_SUM_TOL = 1e-5


def validate_logits(logits: np.ndarray) -> np.ndarray:
    """Check a logit map for shape and finiteness. Returns the array."""
    logits = np.asarray(logits)
    if logits.ndim != 3 or logits.shape[2] < 2:
        raise ValueError(
            f"logit map must have shape (height, width, channels>=2), got {logits.shape}"
        )
    if not np.isfinite(logits).all():
        bad = np.argwhere(~np.isfinite(logits))[0]
        raise ValueError(
            f"non-finite logit at pixel (y={bad[0]}, x={bad[1]}, channel={bad[2]})"
        )
    return logits


def validate_prob(prob: np.ndarray) -> np.ndarray:
    """Check a probability map: shape, value range, per-pixel simplex."""
    prob = np.asarray(prob)
    if prob.ndim != 3 or prob.shape[2] < 2:
        raise ValueError(
            f"probability map must have shape (height, width, channels>=2), got {prob.shape}"
        )
    if not np.isfinite(prob).all():
        raise ValueError("probability map contains non-finite values")
    if prob.min() < 0.0 or prob.max() > 1.0:
        raise ValueError(
            f"probability values outside [0, 1]: min={prob.min()}, max={prob.max()}"
        )
    sums = prob.sum(axis=2, dtype=np.float64)
    err = np.abs(sums - 1.0).max()
    if err > PROB_SUM_TOL:
        bad = np.unravel_index(np.argmax(np.abs(sums - 1.0)), sums.shape)
        raise ValueError(
            f"channel sums deviate from 1 by {err:.3g} (worst pixel y={bad[0]}, x={bad[1]})"
        )
    return prob


def validate_mask(mask: np.ndarray) -> np.ndarray:
    """Check a binary mask: 2-D, values restricted to {0, 1}."""
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise ValueError(f"mask must be 2-D, got shape {mask.shape}")
    if mask.size and not np.isin(mask, (0, 1)).all():
        raise ValueError("mask values must be in {0, 1}")
    return mask


def softmax(logits: np.ndarray) -> np.ndarray:
    """Per-pixel softmax over the channel axis.

    Shift-invariant by construction: the per-pixel maximum is subtracted
    before exponentiation, so adding a constant to all channels of a pixel
    leaves the output unchanged up to float tolerance.
    """
    logits = validate_logits(logits)
    shifted = logits.astype(np.float64) - logits.max(axis=2, keepdims=True)
    e = np.exp(shifted)
    prob = e / e.sum(axis=2, keepdims=True)
    return prob.astype(np.float32)


def argmax_mask(prob: np.ndarray) -> np.ndarray:
    """Binary prediction mask from a two-channel probability map.

    Ties go to background (class 0), so the result is deterministic.
    """
    prob = validate_prob(prob)
    if prob.shape[2] != 2:
        raise ValueError(
            f"prediction masks are defined for the binary task only (channels == 2), "
            f"got {prob.shape[2]} channels"
        )
    return (prob[:, :, 1] > prob[:, :, 0]).astype(np.uint8)


def entropy_map(prob: np.ndarray) -> np.ndarray:
    """Per-pixel Shannon entropy of the class distribution, in nats.

    Uses the natural logarithm with the 0*ln(0) = 0 convention.  Output is
    clipped to the mathematical range [0, ln C] so float rounding can never
    push a value outside it.
    """
    prob = validate_prob(prob)
    p = prob.astype(np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0.0, p * np.log(p), 0.0)
    u = -terms.sum(axis=2)
    return np.clip(u, 0.0, math.log(prob.shape[2]))


def max_entropy(channels: int) -> float:
    """Upper bound ln(C) of the entropy range for a C-class map."""
    return math.log(channels)


def _sample_coords(dst: int, src: int) -> np.ndarray:
    # Half-pixel-center convention: dst pixel i samples source coordinate
    # (i + 0.5) * src/dst - 0.5.
    return (np.arange(dst, dtype=np.float64) + 0.5) * (src / dst) - 0.5


def resample(prob: np.ndarray, target: tuple[int, int], method: str = "bilinear") -> np.ndarray:
    """Resize a probability map to target (width, height).

    ``nearest`` copies source pixels exactly; ``bilinear`` interpolates with
    half-pixel centers and renormalizes each output pixel back onto the
    simplex.  Identity target dims return a bit-identical copy.
    """
    prob = validate_prob(prob)
    tw, th = target
    if tw < 1 or th < 1:
        raise ValueError(f"target dims must be >= 1, got {tw}x{th}")
    if method not in ("nearest", "bilinear"):
        raise ValueError(f"unknown resample method {method!r}")
    sh, sw = prob.shape[:2]
    if (tw, th) == (sw, sh):
        return prob.copy()

    if method == "nearest":
        # Pixel-area mapping: src index = floor((i + 0.5) * src/dst).
        xs = np.minimum(((np.arange(tw) + 0.5) * sw / tw).astype(np.int64), sw - 1)
        ys = np.minimum(((np.arange(th) + 0.5) * sh / th).astype(np.int64), sh - 1)
        return prob[np.ix_(ys, xs)].copy()

    xs = np.clip(_sample_coords(tw, sw), 0.0, sw - 1)
    ys = np.clip(_sample_coords(th, sh), 0.0, sh - 1)
    x0 = np.floor(xs).astype(np.int64)
    y0 = np.floor(ys).astype(np.int64)
    x1 = np.minimum(x0 + 1, sw - 1)
    y1 = np.minimum(y0 + 1, sh - 1)
    fx = (xs - x0)[None, :, None]
    fy = (ys - y0)[:, None, None]

    p = prob.astype(np.float64)
    top = p[np.ix_(y0, x0)] * (1.0 - fx) + p[np.ix_(y0, x1)] * fx
    bot = p[np.ix_(y1, x0)] * (1.0 - fx) + p[np.ix_(y1, x1)] * fx
    out = top * (1.0 - fy) + bot * fy
    out /= out.sum(axis=2, keepdims=True)
    return out.astype(np.float32)
