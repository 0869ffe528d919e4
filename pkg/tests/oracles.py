"""Independent brute-force references the tests check the library against.

Everything here is deliberately naive: pure-Python sorts, double loops,
exact rational arithmetic, and high-precision evaluation.  None of it
shares code with the package.
"""

from __future__ import annotations

import math
from fractions import Fraction

import mpmath
import numpy as np

mpmath.mp.dps = 50


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def stage_k(ratio: float, n: int) -> int:
    return min(n, max(1, round_half_up(ratio * n)))


def cup_select(rows, c1, c2):
    """rows: (image_id, patch_index, ves_u, ves_p). Returns selected key set.

    Materializes the documented total order (stat desc, image_id asc,
    patch_index asc) and takes top-k twice.
    """
    by_u = sorted(rows, key=lambda r: (-r[2], r[0], r[1]))
    stage1 = by_u[: stage_k(c1, len(rows))]
    by_p = sorted(stage1, key=lambda r: (-r[3], r[0], r[1]))
    selected = by_p[: stage_k(c2, len(stage1))]
    return {(r[0], r[1]) for r in selected}


def uncertainty_select(rows, alpha):
    by_u = sorted(rows, key=lambda r: (-r[2], r[0], r[1]))
    return {(r[0], r[1]) for r in by_u[: stage_k(alpha, len(rows))]}


def entropy_highprec(probs) -> float:
    """Entropy in nats at 50 decimal digits."""
    total = mpmath.mpf(0)
    for p in probs:
        p = mpmath.mpf(float(p))
        if p > 0:
            total -= p * mpmath.log(p)
    return float(total)


def softmax_highprec(logits) -> list[float]:
    es = [mpmath.e ** mpmath.mpf(float(z)) for z in logits]
    s = sum(es)
    return [float(e / s) for e in es]


def bilinear_reference(src: np.ndarray, tw: int, th: int) -> np.ndarray:
    """Direct per-pixel bilinear resize, half-pixel centers, clamped edges."""
    sh, sw, c = src.shape
    out = np.zeros((th, tw, c), dtype=np.float64)
    for oy in range(th):
        for ox in range(tw):
            x = min(max((ox + 0.5) * sw / tw - 0.5, 0.0), sw - 1.0)
            y = min(max((oy + 0.5) * sh / th - 0.5, 0.0), sh - 1.0)
            x0, y0 = int(math.floor(x)), int(math.floor(y))
            x1, y1 = min(x0 + 1, sw - 1), min(y0 + 1, sh - 1)
            fx, fy = x - x0, y - y0
            for ch in range(c):
                top = src[y0, x0, ch] * (1 - fx) + src[y0, x1, ch] * fx
                bot = src[y1, x0, ch] * (1 - fx) + src[y1, x1, ch] * fx
                out[oy, ox, ch] = top * (1 - fy) + bot * fy
    return out


def patch_sums(mask: np.ndarray, umap: np.ndarray, pw: int, ph: int, cols: int, rows: int):
    """Naive double-loop per-patch sums; returns {index: (ves_p, ves_u)}."""
    out = {}
    for r in range(rows):
        for c in range(cols):
            p_sum = 0
            u_sum = 0.0
            for y in range(r * ph, (r + 1) * ph):
                for x in range(c * pw, (c + 1) * pw):
                    p_sum += int(mask[y, x])
                    u_sum += float(umap[y, x])
            out[r * cols + c] = (p_sum, u_sum)
    return out


def confusion_loop(pred: np.ndarray, gt: np.ndarray):
    tp = fp = fn = tn = 0
    for y in range(pred.shape[0]):
        for x in range(pred.shape[1]):
            p, g = pred[y, x] != 0, gt[y, x] != 0
            if p and g:
                tp += 1
            elif p and not g:
                fp += 1
            elif not p and g:
                fn += 1
            else:
                tn += 1
    return tp, fp, fn, tn


def dice_formula(tp, fp, fn, tn) -> float:
    if 2 * tp + fp + fn == 0:
        return 1.0
    return float(Fraction(2 * tp, 2 * tp + fp + fn))


def iou_formula(tp, fp, fn, tn) -> float:
    if tp + fp + fn == 0:
        return 1.0
    return float(Fraction(tp, tp + fp + fn))


def mcc_formula(tp, fp, fn, tn) -> float:
    d = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
    if d == 0:
        return 0.0
    return float((mpmath.mpf(tp) * tn - mpmath.mpf(fp) * fn) / mpmath.sqrt(mpmath.mpf(d)))


def bm_formula(tp, fp, fn, tn) -> float:
    sens = Fraction(tp, tp + fn) if tp + fn else Fraction(0)
    spec = Fraction(tn, tn + fp) if tn + fp else Fraction(0)
    return float(sens + spec - 1)
