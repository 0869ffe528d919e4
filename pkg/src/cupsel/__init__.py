"""Patch-based active selection toolkit for segmentation adaptation.

Turns a source model's per-pixel outputs on an unlabeled target domain into
a small, high-value set of patches to annotate, then splices those
annotations back into the predictions as enhanced labels for fine-tuning.
"""

from .maps import argmax_mask, entropy_map, resample, softmax
from .metrics import ConfusionCounts, MetricReport, aggregate, all_metrics, bm, confusion, dice, iou, mcc
from .patching import PatchGrid, PatchStat, make_grid, patch_bounds, patch_stats
from .pseudolabel import AnnotationSet, EnhancedLabel, export_patches, merge_enhanced, oracle_annotations
from .selection import (
    SelectionBudget,
    SelectionManifest,
    select_cup,
    select_random,
    select_uncertainty_only,
)
from .synth import DomainParams, gen_dataset, gen_vessel_image, simulate_model_output

__version__ = "0.1.0"

__all__ = [
    "softmax", "argmax_mask", "entropy_map", "resample",
    "PatchGrid", "PatchStat", "make_grid", "patch_bounds", "patch_stats",
    "SelectionBudget", "SelectionManifest",
    "select_cup", "select_uncertainty_only", "select_random",
    "AnnotationSet", "EnhancedLabel", "export_patches", "merge_enhanced", "oracle_annotations",
    "ConfusionCounts", "MetricReport", "confusion", "dice", "iou", "mcc", "bm",
    "all_metrics", "aggregate",
    "DomainParams", "gen_vessel_image", "gen_dataset", "simulate_model_output",
    "__version__",
]
