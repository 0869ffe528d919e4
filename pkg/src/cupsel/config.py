"""Pipeline configuration: a small versioned JSON schema plus CLI overrides.

Relative paths in a config file are resolved against the file's directory.
Every pipeline run writes the fully resolved config next to its outputs so
an experiment can be reproduced from the output directory alone.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .mapio import atomic_write_text

CONFIG_VERSION = 1

STRATEGY_FLAGS = {"cup": "cup", "random": "random", "uncertainty": "uncertainty_only"}
SCOPE_FLAGS = {"pooled": "pooled", "per-image": "per_image"}


def parse_patch_size(text: str) -> tuple[int, int]:
    """Parse 'WxH' into (width, height)."""
    try:
        w, h = (int(p) for p in text.lower().split("x"))
    except ValueError:
        raise ValueError(f"patch size must look like '64x64', got {text!r}") from None
    if w < 1 or h < 1:
        raise ValueError(f"patch dims must be >= 1, got {text!r}")
    return w, h


@dataclass
class PipelineConfig:
    maps: Path
    out: Path
    gt_masks: Path | None = None
    images: Path | None = None
    annotations: Path | None = None
    patch_size: tuple[int, int] = (64, 64)
    edge_policy: str = "exact"
    strategy: str = "cup"  # manifest strategy name
    scope: str = "pooled"
    c1: float = 0.1
    c2: float = 0.5
    alpha: float | None = None
    seed: int = 0
    oracle_annotate: bool = False
    workers: int = 1
    figures: bool = True

    def validate(self) -> "PipelineConfig":
        if self.strategy not in STRATEGY_FLAGS.values():
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.scope not in SCOPE_FLAGS.values():
            raise ValueError(f"unknown scope {self.scope!r}")
        if self.strategy == "cup" and self.alpha is not None:
            raise ValueError("the cascade strategy takes c1/c2 ratios, not a flat alpha")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.oracle_annotate and self.gt_masks is None:
            raise ValueError("oracle annotation needs paths.gt_masks in the config")
        return self

    @property
    def effective_alpha(self) -> float:
        """Flat budget for single-stage strategies; defaults to c1 * c2."""
        return self.c1 * self.c2 if self.alpha is None else self.alpha

    def to_json(self) -> str:
        doc = {
            "version": CONFIG_VERSION,
            "paths": {
                "maps": str(self.maps),
                "gt_masks": None if self.gt_masks is None else str(self.gt_masks),
                "images": None if self.images is None else str(self.images),
                "annotations": None if self.annotations is None else str(self.annotations),
                "out": str(self.out),
            },
            "grid": {
                "patch_size": f"{self.patch_size[0]}x{self.patch_size[1]}",
                "edge_policy": self.edge_policy,
            },
            "budget": {"c1": self.c1, "c2": self.c2, "alpha": self.alpha},
            "strategy": self.strategy,
            "scope": self.scope,
            "seed": self.seed,
            "oracle_annotate": self.oracle_annotate,
            "workers": self.workers,
            "figures": self.figures,
        }
        return json.dumps(doc, indent=2) + "\n"

    def write_resolved(self, path: str | Path) -> Path:
        return atomic_write_text(path, self.to_json())


def load_config(path: str | Path) -> PipelineConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ValueError(f"{path}: invalid JSON ({e})") from None
    if doc.get("version") != CONFIG_VERSION:
        raise ValueError(f"{path}: unsupported config version {doc.get('version')!r}")

    def resolve(p: str | None) -> Path | None:
        if p is None:
            return None
        q = Path(p)
        return q if q.is_absolute() else (path.parent / q).resolve()

    paths = doc.get("paths", {})
    if "maps" not in paths or "out" not in paths:
        raise ValueError(f"{path}: config needs paths.maps and paths.out")
    grid = doc.get("grid", {})
    budget = doc.get("budget", {})
    cfg = PipelineConfig(
        maps=resolve(paths["maps"]),
        out=resolve(paths["out"]),
        gt_masks=resolve(paths.get("gt_masks")),
        images=resolve(paths.get("images")),
        annotations=resolve(paths.get("annotations")),
        patch_size=parse_patch_size(grid.get("patch_size", "64x64")),
        edge_policy=grid.get("edge_policy", "exact"),
        strategy=doc.get("strategy", "cup"),
        scope=doc.get("scope", "pooled"),
        c1=budget.get("c1", 0.1),
        c2=budget.get("c2", 0.5),
        alpha=budget.get("alpha"),
        seed=doc.get("seed", 0),
        oracle_annotate=bool(doc.get("oracle_annotate", False)),
        workers=int(doc.get("workers", 1)),
        figures=bool(doc.get("figures", True)),
    )
    return cfg.validate()
