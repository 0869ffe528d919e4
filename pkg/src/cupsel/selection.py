"""Budgeted patch selection: cascade, uncertainty-only, and random.

The cascade strategy ranks patches by summed uncertainty, keeps the top
C1 fraction, re-ranks that set by predicted-vessel pixel count, and keeps
the top C2 fraction of it, so the overall annotation budget is
alpha = C1 * C2.

Every ranking uses one strict total order: statistic descending, then
image_id ascending, then patch_index ascending.  Results are therefore
independent of input ordering and bit-reproducible.  Stage counts round
half-up with a floor of one patch per stage.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from .mapio import atomic_write_text
from .patching import PatchStat

MANIFEST_VERSION = 1
STRATEGIES = ("cup", "uncertainty_only", "random")
SCOPES = ("pooled", "per_image")


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def stage_count(ratio: float, n: int) -> int:
    """Patches kept by one cascade stage over n candidates."""
    k = max(1, round_half_up(ratio * n))
    if k > n:
        warnings.warn(f"stage count {k} exceeds {n} available patches; clamped")
        k = n
    return k


@dataclass(frozen=True)
class SelectionBudget:
    c1_ratio: float
    c2_ratio: float
    alpha: float
    n_total: int
    n_selected: int

    @classmethod
    def from_ratios(cls, c1_ratio: float, c2_ratio: float, n_total: int) -> "SelectionBudget":
        if not 0.0 < c1_ratio <= 1.0 or not 0.0 < c2_ratio <= 1.0:
            raise ValueError(f"ratios must be in (0, 1], got c1={c1_ratio}, c2={c2_ratio}")
        if n_total < 1:
            raise ValueError(f"n_total must be >= 1, got {n_total}")
        k1 = stage_count(c1_ratio, n_total)
        k2 = stage_count(c2_ratio, k1)
        return cls(c1_ratio, c2_ratio, c1_ratio * c2_ratio, n_total, k2)

    @classmethod
    def from_alpha(cls, alpha: float, n_total: int) -> "SelectionBudget":
        # Single-stage budgets are the degenerate cascade with c2 = 1.
        return cls.from_ratios(alpha, 1.0, n_total)


@dataclass(frozen=True)
class SelectionEntry:
    image_id: str
    patch_index: int
    ves_u: float
    ves_p: int
    stage1_rank: int | None
    stage2_rank: int | None


@dataclass(frozen=True)
class SelectionManifest:
    strategy: str
    budget: SelectionBudget
    scope: str
    entries: tuple[SelectionEntry, ...]
    seed: int | None

    def keys(self) -> set[tuple[str, int]]:
        return {(e.image_id, e.patch_index) for e in self.entries}

    def for_image(self, image_id: str) -> list[SelectionEntry]:
        return [e for e in self.entries if e.image_id == image_id]

    def image_ids(self) -> list[str]:
        return sorted({e.image_id for e in self.entries})

    def to_json(self) -> str:
        doc = {
            "version": MANIFEST_VERSION,
            "strategy": self.strategy,
            "scope": self.scope,
            "seed": self.seed,
            "budget": asdict(self.budget),
            "entries": [asdict(e) for e in self.entries],
        }
        return json.dumps(doc, indent=2) + "\n"

    def write(self, path: str | Path) -> Path:
        return atomic_write_text(path, self.to_json())

    @classmethod
    def from_json(cls, text: str) -> "SelectionManifest":
        doc = json.loads(text)
        if doc.get("version") != MANIFEST_VERSION:
            raise ValueError(f"unsupported manifest version {doc.get('version')!r}")
        return cls(
            strategy=doc["strategy"],
            budget=SelectionBudget(**doc["budget"]),
            scope=doc["scope"],
            entries=tuple(SelectionEntry(**e) for e in doc["entries"]),
            seed=doc["seed"],
        )

    @classmethod
    def read(cls, path: str | Path) -> "SelectionManifest":
        return cls.from_json(Path(path).read_text())


def _check_stats(stats: list[PatchStat]) -> None:
    if not stats:
        raise ValueError("cannot select from an empty stats list")
    seen: set[tuple[str, int]] = set()
    for s in stats:
        key = (s.image_id, s.patch_index)
        if key in seen:
            raise ValueError(f"duplicate patch stat for image {s.image_id!r} index {s.patch_index}")
        seen.add(key)


def _ranked(stats: list[PatchStat], values: np.ndarray) -> list[int]:
    """Indices of stats sorted by value desc, then (image_id, patch_index) asc."""
    image_ids = np.array([s.image_id for s in stats])
    patch_idx = np.array([s.patch_index for s in stats], dtype=np.int64)
    return list(np.lexsort((patch_idx, image_ids, -values)))


def _cascade(stats: list[PatchStat], c1_ratio: float, c2_ratio: float):
    """Run both cascade stages; returns entries in final-rank order."""
    u = np.array([s.ves_u for s in stats], dtype=np.float64)
    order1 = _ranked(stats, u)
    k1 = stage_count(c1_ratio, len(stats))
    stage1 = order1[:k1]
    rank1 = {idx: pos + 1 for pos, idx in enumerate(stage1)}

    subset = [stats[i] for i in stage1]
    p = np.array([s.ves_p for s in subset], dtype=np.float64)
    order2 = _ranked(subset, p)
    k2 = stage_count(c2_ratio, k1)

    entries = []
    for pos, sub_idx in enumerate(order2[:k2]):
        s = subset[sub_idx]
        entries.append(
            SelectionEntry(s.image_id, s.patch_index, s.ves_u, s.ves_p,
                           rank1[stage1[sub_idx]], pos + 1)
        )
    return entries


def _by_image(stats: list[PatchStat]) -> dict[str, list[PatchStat]]:
    groups: dict[str, list[PatchStat]] = {}
    for s in stats:
        groups.setdefault(s.image_id, []).append(s)
    return dict(sorted(groups.items()))


def select_cup(stats: list[PatchStat], budget: SelectionBudget, scope: str = "pooled") -> SelectionManifest:
    """Cascade selection: top C1 by ves_u, then top C2 of those by ves_p.

    ``pooled`` ranks all patches of all images together against the single
    alpha * n_total budget; ``per_image`` applies the cascade to each image
    separately, so the total is the sum of per-image budgets.
    """
    _check_stats(stats)
    if scope not in SCOPES:
        raise ValueError(f"scope must be one of {SCOPES}, got {scope!r}")
    if budget.n_total != len(stats):
        raise ValueError(f"budget covers {budget.n_total} patches but {len(stats)} stats given")

    if scope == "pooled":
        entries = _cascade(stats, budget.c1_ratio, budget.c2_ratio)
    else:
        entries = []
        for _, group in _by_image(stats).items():
            entries.extend(_cascade(group, budget.c1_ratio, budget.c2_ratio))
        budget = replace(budget, n_selected=len(entries))
    return SelectionManifest("cup", budget, scope, tuple(entries), None)


def select_uncertainty_only(stats: list[PatchStat], alpha: float, scope: str = "pooled") -> SelectionManifest:
    """Single-stage ablation: top alpha fraction by ves_u alone."""
    _check_stats(stats)
    if scope not in SCOPES:
        raise ValueError(f"scope must be one of {SCOPES}, got {scope!r}")
    budget = SelectionBudget.from_alpha(alpha, len(stats))

    def rank_group(group: list[PatchStat]) -> list[SelectionEntry]:
        u = np.array([s.ves_u for s in group], dtype=np.float64)
        order = _ranked(group, u)
        k = stage_count(alpha, len(group))
        return [
            SelectionEntry(group[i].image_id, group[i].patch_index,
                           group[i].ves_u, group[i].ves_p, pos + 1, None)
            for pos, i in enumerate(order[:k])
        ]

    if scope == "pooled":
        entries = rank_group(stats)
    else:
        entries = []
        for _, group in _by_image(stats).items():
            entries.extend(rank_group(group))
        budget = replace(budget, n_selected=len(entries))
    return SelectionManifest("uncertainty_only", budget, scope, tuple(entries), None)


def select_random(stats: list[PatchStat], alpha: float, seed: int, scope: str = "pooled") -> SelectionManifest:
    """Uniform sample without replacement, deterministic given the seed.

    Draws come from a PCG64 generator; candidates are put in canonical
    (image_id, patch_index) order first, so the result does not depend on
    the ordering of the stats list.
    """
    _check_stats(stats)
    if scope not in SCOPES:
        raise ValueError(f"scope must be one of {SCOPES}, got {scope!r}")
    budget = SelectionBudget.from_alpha(alpha, len(stats))
    rng = np.random.Generator(np.random.PCG64(seed))

    def sample_group(group: list[PatchStat]) -> list[SelectionEntry]:
        group = sorted(group, key=lambda s: (s.image_id, s.patch_index))
        k = stage_count(alpha, len(group))
        chosen = sorted(rng.choice(len(group), size=k, replace=False))
        return [
            SelectionEntry(group[i].image_id, group[i].patch_index,
                           group[i].ves_u, group[i].ves_p, None, None)
            for i in chosen
        ]

    if scope == "pooled":
        entries = sample_group(stats)
    else:
        entries = []
        for _, group in _by_image(stats).items():
            entries.extend(sample_group(group))
        budget = replace(budget, n_selected=len(entries))
    return SelectionManifest("random", budget, scope, tuple(entries), seed)
