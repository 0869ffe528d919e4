"""Fixed patch grids over an image domain and per-patch statistics.

Patch indexing is row-major from the top-left corner: ``index = row * cols
+ col``.  The ``exact`` edge policy requires the patch dims to tile the
image exactly; ``crop`` drops the right/bottom residue.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

EDGE_POLICIES = ("exact", "crop")


@dataclass(frozen=True)
class PatchGrid:
    image_width: int
    image_height: int
    patch_width: int
    patch_height: int
    cols: int
    rows: int
    edge_policy: str

    @property
    def n_patches(self) -> int:
        return self.cols * self.rows

    @property
    def patch_area(self) -> int:
        return self.patch_width * self.patch_height


@dataclass(frozen=True)
class PatchStat:
    """Per-patch vessel-pixel count and summed uncertainty (nats)."""

    image_id: str
    patch_index: int
    ves_p: int
    ves_u: float


def make_grid(
    image_dims: tuple[int, int],
    patch_dims: tuple[int, int],
    edge_policy: str = "exact",
) -> PatchGrid:
    """Build a PatchGrid for image (width, height) and patch (width, height)."""
    iw, ih = image_dims
    pw, ph = patch_dims
    if edge_policy not in EDGE_POLICIES:
        raise ValueError(f"edge_policy must be one of {EDGE_POLICIES}, got {edge_policy!r}")
    if pw < 1 or ph < 1:
        raise ValueError(f"patch dims must be >= 1, got {pw}x{ph}")
    if pw > iw or ph > ih:
        raise ValueError(f"patch dims {pw}x{ph} exceed image dims {iw}x{ih}")
    if edge_policy == "exact" and (iw % pw or ih % ph):
        raise ValueError(
            f"image {iw}x{ih} is not tiled exactly by patches {pw}x{ph}; "
            f"use edge_policy='crop' for a {iw // pw}x{ih // ph} grid dropping "
            f"{iw % pw}x{ih % ph} residual pixels"
        )
    return PatchGrid(iw, ih, pw, ph, iw // pw, ih // ph, edge_policy)


def patch_bounds(grid: PatchGrid, patch_index: int) -> tuple[int, int, int, int]:
    """Half-open pixel rectangle (x0, y0, x1, y1) of a patch."""
    if not 0 <= patch_index < grid.n_patches:
        raise IndexError(
            f"patch index {patch_index} out of range [0, {grid.n_patches})"
        )
    row, col = divmod(patch_index, grid.cols)
    x0 = col * grid.patch_width
    y0 = row * grid.patch_height
    return (x0, y0, x0 + grid.patch_width, y0 + grid.patch_height)


def extract_patch(arr: np.ndarray, grid: PatchGrid, patch_index: int) -> np.ndarray:
    """Crop one patch out of an (H, W[, C]) array."""
    x0, y0, x1, y1 = patch_bounds(grid, patch_index)
    return arr[y0:y1, x0:x1]


def _check_dims(arr: np.ndarray, grid: PatchGrid, name: str) -> None:
    if arr.shape[:2] != (grid.image_height, grid.image_width):
        raise ValueError(
            f"{name} dims {arr.shape[1]}x{arr.shape[0]} do not match grid image dims "
            f"{grid.image_width}x{grid.image_height}"
        )


def patch_stats(
    mask: np.ndarray,
    umap: np.ndarray,
    grid: PatchGrid,
    image_id: str,
) -> list[PatchStat]:
    """Per-patch (ves_p, ves_u): vessel-pixel count and uncertainty sum.

    Sums accumulate in float64; a 260x256 patch has 66560 terms, which loses
    precision in 32-bit.
    """
    mask = np.asarray(mask)
    umap = np.asarray(umap)
    _check_dims(mask, grid, "mask")
    _check_dims(umap, grid, "uncertainty map")

    ch = grid.rows * grid.patch_height
    cw = grid.cols * grid.patch_width
    tiles = (grid.rows, grid.patch_height, grid.cols, grid.patch_width)
    p = mask[:ch, :cw].astype(np.int64).reshape(tiles).sum(axis=(1, 3))
    u = umap[:ch, :cw].astype(np.float64).reshape(tiles).sum(axis=(1, 3))

    return [
        PatchStat(image_id, row * grid.cols + col, int(p[row, col]), float(u[row, col]))
        for row in range(grid.rows)
        for col in range(grid.cols)
    ]
