"""Synthetic vessel-like images with exact ground truth and a controllable
domain shift, for desk-scale end-to-end runs.

Vessels are trees of smooth curves: composite quadratic splines through
seeded random-walk control points, each rasterized by the rule
``mask = 1 iff distance(pixel center, curve) <= width / 2`` with a
per-segment width that tapers toward the tips.  The image is a two-level
field (background / vessel) passed through gamma, Gaussian blur, and
additive Gaussian noise, in that order.

Seeding is hierarchical so outputs are reproducible and tree k does not
depend on how many trees follow it: tree k of image with seed s draws from
``SeedSequence((s, 0, k))``, the noise field from ``SeedSequence((s, 1))``,
and image i of a dataset domain with seed d uses
``s = SeedSequence((d, i)).generate_state(1)[0]``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from . import mapio

VESSEL_LEVEL_STEP = 0.45  # vessel intensity above background, pre-gamma

DATASET_MANIFEST = "dataset.json"
SPLIT_FRACTIONS = {"train": 0.6, "val": 0.2}  # test takes the remainder


@dataclass(frozen=True)
class DomainParams:
    seed: int
    image_dims: tuple[int, int] = (512, 512)
    vessel_count: int = 7
    width_range: tuple[float, float] = (5.0, 13.0)
    contrast_gamma: float = 1.0
    noise_sigma: float = 0.02
    blur_sigma: float = 0.8
    background_level: float = 0.30

    def __post_init__(self):
        w, h = self.image_dims
        wmin, wmax = self.width_range
        if w < 1 or h < 1:
            raise ValueError(f"image dims must be positive, got {w}x{h}")
        if not 0 < wmin <= wmax:
            raise ValueError(f"width range must satisfy 0 < min <= max, got {self.width_range}")
        if min(w, h) < wmax:
            raise ValueError(f"image dims {w}x{h} smaller than max vessel width {wmax}")
        if self.vessel_count < 0:
            raise ValueError("vessel_count must be >= 0")
        if self.contrast_gamma <= 0:
            raise ValueError("contrast_gamma must be > 0")
        if self.noise_sigma < 0 or self.blur_sigma < 0:
            raise ValueError("noise_sigma and blur_sigma must be >= 0")
        if not 0.0 <= self.background_level <= 1.0:
            raise ValueError("background_level must be in [0, 1]")


def _quad_spline(ctrl: np.ndarray, samples_per_seg: int = 14) -> np.ndarray:
    """Composite quadratic Bezier through control points (midpoint scheme).

    Piece i runs between consecutive anchors (endpoints and segment
    midpoints) with ctrl[i] as its Bezier control point, which keeps the
    composite curve tangent-continuous.
    """
    if len(ctrl) < 3:
        return ctrl.astype(np.float64)
    mids = (ctrl[:-1] + ctrl[1:]) / 2.0
    anchors = np.vstack([ctrl[0], mids, ctrl[-1]])
    t = np.linspace(0.0, 1.0, samples_per_seg, endpoint=False)[:, None]
    pieces = []
    for i in range(len(anchors) - 1):
        a, b = anchors[i], anchors[i + 1]
        c = ctrl[i]
        pieces.append((1 - t) ** 2 * a + 2 * (1 - t) * t * c + t**2 * b)
    pieces.append(anchors[-1][None, :])
    return np.vstack(pieces)


def _walk(rng: np.random.Generator, start: np.ndarray, angle: float,
          n_steps: int, step: float, turn: float) -> np.ndarray:
    pts = [start]
    pos = start.astype(np.float64)
    for _ in range(n_steps):
        angle += rng.uniform(-turn, turn)
        pos = pos + step * np.array([math.cos(angle), math.sin(angle)])
        pts.append(pos)
    return np.array(pts)


def _stamp(mask: np.ndarray, a: np.ndarray, b: np.ndarray, radius: float) -> None:
    # Capsule distance test on the segment's padded bounding box.
    h, w = mask.shape
    x0 = max(0, int(math.floor(min(a[0], b[0]) - radius)))
    x1 = min(w - 1, int(math.ceil(max(a[0], b[0]) + radius)))
    y0 = max(0, int(math.floor(min(a[1], b[1]) - radius)))
    y1 = min(h - 1, int(math.ceil(max(a[1], b[1]) + radius)))
    if x0 > x1 or y0 > y1:
        return
    ys, xs = np.mgrid[y0:y1 + 1, x0:x1 + 1]
    px = xs - a[0]
    py = ys - a[1]
    vx, vy = b[0] - a[0], b[1] - a[1]
    seg_len2 = vx * vx + vy * vy
    if seg_len2 == 0.0:
        d2 = px * px + py * py
    else:
        t = np.clip((px * vx + py * vy) / seg_len2, 0.0, 1.0)
        d2 = (px - t * vx) ** 2 + (py - t * vy) ** 2
    mask[y0:y1 + 1, x0:x1 + 1] |= d2 <= radius * radius


def _rasterize(mask: np.ndarray, polyline: np.ndarray, widths: np.ndarray) -> None:
    for i in range(len(polyline) - 1):
        _stamp(mask, polyline[i], polyline[i + 1], widths[i] / 2.0)


def _gen_tree(rng: np.random.Generator, dims: tuple[int, int],
              width_range: tuple[float, float], mask: np.ndarray) -> None:
    w, h = dims
    # Root on a border, heading inward.
    side = rng.integers(4)
    u = rng.uniform(0.1, 0.9)
    start, angle = {
        0: (np.array([u * w, 0.0]), math.pi / 2),
        1: (np.array([u * w, h - 1.0]), -math.pi / 2),
        2: (np.array([0.0, u * h]), 0.0),
        3: (np.array([w - 1.0, u * h]), math.pi),
    }[int(side)]
    angle += rng.uniform(-0.5, 0.5)

    diag = math.hypot(w, h)
    n_ctrl = int(rng.integers(5, 9))
    step = diag * rng.uniform(0.08, 0.14)
    ctrl = _walk(rng, start, angle, n_ctrl, step, turn=0.55)
    trunk = _quad_spline(ctrl)
    w0 = rng.uniform(*width_range)
    n_seg = len(trunk) - 1
    taper = np.linspace(1.0, 0.45, n_seg)
    _rasterize(mask, trunk, w0 * taper)

    for _ in range(int(rng.integers(1, 4))):
        pivot = int(rng.integers(len(trunk) // 4, max(len(trunk) // 4 + 1, len(trunk) - 2)))
        frac = pivot / max(1, n_seg)
        local_w = w0 * (1.0 - 0.55 * frac)
        d = trunk[min(pivot + 1, len(trunk) - 1)] - trunk[pivot]
        base_angle = math.atan2(d[1], d[0])
        base_angle += rng.choice((-1.0, 1.0)) * rng.uniform(0.35, 1.0)
        b_ctrl = _walk(rng, trunk[pivot], base_angle,
                       int(rng.integers(3, 6)), step * 0.7, turn=0.5)
        branch = _quad_spline(b_ctrl)
        b_w = max(width_range[0] * 0.5, local_w * 0.7)
        b_taper = np.linspace(1.0, 0.45, max(1, len(branch) - 1))
        _rasterize(mask, branch, b_w * b_taper)


def gen_vessel_image(params: DomainParams) -> tuple[np.ndarray, np.ndarray]:
    """Generate one (uint8 grayscale image, {0,1} mask) pair.

    With noise_sigma = blur_sigma = 0 and gamma = 1 the image is two-level
    and thresholding at the background level recovers the mask exactly.
    """
    w, h = params.image_dims
    mask = np.zeros((h, w), dtype=bool)
    for k in range(params.vessel_count):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((params.seed, 0, k))))
        _gen_tree(rng, params.image_dims, params.width_range, mask)

    vessel_level = min(1.0, params.background_level + VESSEL_LEVEL_STEP)
    img = np.full((h, w), params.background_level, dtype=np.float64)
    img[mask] = vessel_level
    img = img ** params.contrast_gamma
    if params.blur_sigma > 0:
        img = gaussian_filter(img, params.blur_sigma)
    if params.noise_sigma > 0:
        noise_rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((params.seed, 1))))
        img = img + noise_rng.normal(0.0, params.noise_sigma, size=img.shape)
    img8 = np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)
    return img8, mask.astype(np.uint8)


def image_seed(domain_seed: int, index: int) -> int:
    return int(np.random.SeedSequence((domain_seed, index)).generate_state(1)[0])


def split_counts(n: int) -> dict[str, int]:
    """6:2:2 split with half-up rounding; test takes the remainder."""
    train = int(math.floor(SPLIT_FRACTIONS["train"] * n + 0.5))
    val = int(math.floor(SPLIT_FRACTIONS["val"] * n + 0.5))
    return {"train": train, "val": val, "test": n - train - val}


def gen_dataset(
    source_params: DomainParams,
    target_params: DomainParams,
    counts: int | tuple[int, int],
    out_dir: str | Path,
) -> dict:
    """Write source/ and target/ image+GT trees in 6:2:2 splits.

    Returns the dataset manifest, which is also written to dataset.json.
    """
    if isinstance(counts, int):
        counts = (counts, counts)
    n_source, n_target = counts
    if min(n_source, n_target) < 5:
        raise ValueError(f"need at least 5 images per domain, got {counts}")
    out_dir = Path(out_dir)

    manifest: dict = {
        "version": 1,
        "generator": "PCG64",
        "counts": {"source": n_source, "target": n_target},
        "params": {"source": asdict(source_params), "target": asdict(target_params)},
        "splits": {},
    }
    for domain, params, n in (("source", source_params, n_source),
                              ("target", target_params, n_target)):
        sizes = split_counts(n)
        splits: dict[str, list[str]] = {}
        idx = 0
        for split in ("train", "val", "test"):
            ids = []
            for _ in range(sizes[split]):
                img_id = f"{domain}_{split}_{idx:03d}"
                per_image = replace(params, seed=image_seed(params.seed, idx))
                img, gt = gen_vessel_image(per_image)
                d = out_dir / domain / split
                mapio.write_pgm(d / f"{img_id}.pgm", img)
                mapio.write_mask(d / f"{img_id}.gt.pgm", gt)
                ids.append(img_id)
                idx += 1
            splits[split] = ids
        manifest["splits"][domain] = splits
    manifest = json.loads(json.dumps(manifest))  # canonical JSON types (tuples -> lists)
    mapio.atomic_write_text(out_dir / DATASET_MANIFEST, json.dumps(manifest, indent=2) + "\n")
    return manifest


def simulate_model_output(
    gt_mask: np.ndarray,
    seed: int,
    boundary_blur: float = 1.5,
    error_field_sigma: float = 24.0,
    error_strength: float = 2.0,
    sharpness: float = 6.0,
) -> np.ndarray:
    """Fake segmentation-model probabilities for exercising the pipeline
    without a trained network.

    Blurs the ground truth into a soft foreground score, then perturbs the
    logit with a smooth random field, producing plausible confident/uncertain
    and correct/incorrect regions.  Deterministic given the seed.
    """
    gt = np.asarray(gt_mask).astype(np.float64)
    conf = gaussian_filter(gt, boundary_blur) if boundary_blur > 0 else gt
    logit = sharpness * (conf - 0.5)
    if error_strength > 0:
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, 3))))
        field = gaussian_filter(rng.standard_normal(gt.shape), error_field_sigma)
        std = field.std()
        if std > 0:
            logit = logit + error_strength * field / std
    p1 = 1.0 / (1.0 + np.exp(-logit))
    return np.stack([1.0 - p1, p1], axis=2).astype(np.float32)
