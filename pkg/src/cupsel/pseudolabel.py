"""Export selected patches for annotation and splice annotated patches back
into prediction masks to build enhanced labels.

Patch files are named ``{image_id}_{patch_index}.pgm``; image ids may
contain underscores because the index is split off from the right.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from . import mapio
from .patching import PatchGrid, patch_bounds
from .selection import SelectionManifest

PROVENANCE_PREDICTED = "predicted"
PROVENANCE_ANNOTATED = "annotated"


def patch_filename(image_id: str, patch_index: int) -> str:
    return f"{image_id}_{patch_index}.pgm"


def parse_patch_filename(name: str) -> tuple[str, int]:
    stem = name[:-4] if name.endswith(".pgm") else name
    image_id, _, idx = stem.rpartition("_")
    if not image_id or not idx.isdigit():
        raise ValueError(f"patch filename {name!r} is not '{{image_id}}_{{patch_index}}.pgm'")
    return image_id, int(idx)


@dataclass(frozen=True)
class AnnotationSet:
    """Annotated patch masks keyed by (image_id, patch_index)."""

    grid: PatchGrid
    items: Mapping[tuple[str, int], np.ndarray]

    def __post_init__(self):
        for (image_id, idx), patch in self.items.items():
            if patch.shape != (self.grid.patch_height, self.grid.patch_width):
                raise ValueError(
                    f"annotation {image_id!r}/{idx} has dims "
                    f"{patch.shape[1]}x{patch.shape[0]}, grid patches are "
                    f"{self.grid.patch_width}x{self.grid.patch_height}"
                )


@dataclass(frozen=True)
class EnhancedLabel:
    """Prediction mask with selected patches replaced by annotations."""

    image_id: str
    mask: np.ndarray
    provenance: tuple[str, ...]  # one flag per grid patch, row-major

    def annotated_indices(self) -> list[int]:
        return [i for i, f in enumerate(self.provenance) if f == PROVENANCE_ANNOTATED]


def export_patches(
    images: Mapping[str, np.ndarray],
    manifest: SelectionManifest,
    grid: PatchGrid,
    out_dir: str | Path,
    binary: bool = True,
) -> list[Path]:
    """Crop every manifest patch out of its image and write it as PGM.

    ``binary`` selects mask encoding (0/255); otherwise raw 8-bit grayscale
    values are written, for handing source-image patches to an annotator.
    """
    missing = sorted({e.image_id for e in manifest.entries} - set(images))
    if missing:
        raise ValueError(f"manifest references images with no data: {', '.join(missing)}")
    out_dir = Path(out_dir)
    written = []
    for e in manifest.entries:
        img = np.asarray(images[e.image_id])
        if img.shape[:2] != (grid.image_height, grid.image_width):
            raise ValueError(
                f"image {e.image_id!r} dims {img.shape[1]}x{img.shape[0]} do not match "
                f"grid {grid.image_width}x{grid.image_height}"
            )
        x0, y0, x1, y1 = patch_bounds(grid, e.patch_index)
        patch = img[y0:y1, x0:x1]
        path = out_dir / patch_filename(e.image_id, e.patch_index)
        if binary:
            mapio.write_mask(path, patch)
        else:
            mapio.write_pgm(path, patch)
        written.append(path)
    return written


def load_annotations(
    ann_dir: str | Path,
    manifest: SelectionManifest,
    grid: PatchGrid,
) -> AnnotationSet:
    """Read the annotation directory entries required by a manifest.

    Every manifest patch must have its file; extra files are ignored.
    """
    ann_dir = Path(ann_dir)
    items: dict[tuple[str, int], np.ndarray] = {}
    missing = []
    for e in manifest.entries:
        path = ann_dir / patch_filename(e.image_id, e.patch_index)
        if not path.exists():
            missing.append(path.name)
            continue
        items[(e.image_id, e.patch_index)] = mapio.read_mask(path)
    if missing:
        raise ValueError(f"annotation files missing from {ann_dir}: {', '.join(sorted(missing))}")
    return AnnotationSet(grid, items)


def oracle_annotations(
    gt_masks: Mapping[str, np.ndarray],
    manifest: SelectionManifest,
    grid: PatchGrid,
) -> AnnotationSet:
    """Simulate the annotator by copying ground-truth patches."""
    missing = sorted({e.image_id for e in manifest.entries} - set(gt_masks))
    if missing:
        raise ValueError(f"no ground truth for manifest images: {', '.join(missing)}")
    items = {}
    for e in manifest.entries:
        x0, y0, x1, y1 = patch_bounds(grid, e.patch_index)
        items[(e.image_id, e.patch_index)] = np.asarray(gt_masks[e.image_id])[y0:y1, x0:x1].copy()
    return AnnotationSet(grid, items)


def merge_enhanced(
    pred: np.ndarray,
    annotations: AnnotationSet,
    manifest: SelectionManifest,
    grid: PatchGrid,
    image_id: str,
) -> EnhancedLabel:
    """Replace this image's selected patches in ``pred`` with annotations.

    Pixels outside selected patches are copied from the prediction
    bit-exactly.  A selected patch without an annotation is an error; a
    silent fallback to the prediction would corrupt the annotation budget.
    """
    pred = np.asarray(pred)
    if pred.shape != (grid.image_height, grid.image_width):
        raise ValueError(
            f"prediction dims {pred.shape[1]}x{pred.shape[0]} do not match grid "
            f"{grid.image_width}x{grid.image_height}"
        )
    merged = pred.copy()
    provenance = [PROVENANCE_PREDICTED] * grid.n_patches
    for e in manifest.for_image(image_id):
        key = (e.image_id, e.patch_index)
        if key not in annotations.items:
            raise ValueError(
                f"missing annotation for selected patch {e.image_id!r} index {e.patch_index}"
            )
        x0, y0, x1, y1 = patch_bounds(grid, e.patch_index)
        merged[y0:y1, x0:x1] = annotations.items[key]
        provenance[e.patch_index] = PROVENANCE_ANNOTATED
    return EnhancedLabel(image_id, merged, tuple(provenance))


def write_provenance(path: str | Path, label: EnhancedLabel) -> Path:
    doc = {
        "image_id": label.image_id,
        "annotated_patches": label.annotated_indices(),
        "n_patches": len(label.provenance),
    }
    return mapio.atomic_write_text(path, json.dumps(doc, indent=2) + "\n")
