"""Command-line pipeline: uncertainty | stats | select | export | merge |
eval | synth | pipeline.

Each subcommand validates its inputs up front, writes all outputs
atomically, and is idempotent: identical inputs produce byte-identical
outputs.  Failures name the offending file or entry and exit nonzero
without leaving partial files behind.
"""

from __future__ import annotations

import argparse
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import maps as maps_mod
from . import mapio, metrics, pseudolabel, report, selection, synth
from .config import (
    SCOPE_FLAGS,
    STRATEGY_FLAGS,
    PipelineConfig,
    load_config,
    parse_patch_size,
)
from .mapio import FileFormatError, atomic_write_text
from .patching import PatchGrid, PatchStat, make_grid, patch_stats

MASKS_SUBDIR = "masks"
UMAPS_SUBDIR = "uncertainty"
ENHANCED_SUBDIR = "enhanced"
ANNOTATIONS_SUBDIR = "annotations"
STATS_FILENAME = "patch_stats.tsv"
MANIFEST_FILENAME = "manifest.json"
RESOLVED_CONFIG_FILENAME = "resolved_config.json"


def _list_maps(maps_dir: Path) -> list[Path]:
    files = sorted(maps_dir.glob("*" + mapio.MAP_SUFFIX))
    if not files:
        raise ValueError(f"no {mapio.MAP_SUFFIX} files found in {maps_dir}")
    return files


def _list_masks(mask_dir: Path) -> list[Path]:
    files = sorted(p for p in mask_dir.glob("*.pgm") if not p.name.endswith(".gt.pgm"))
    if not files:
        raise ValueError(f"no .pgm mask files found in {mask_dir}")
    return files


def _find_gt(gt_dir: Path, image_id: str) -> Path:
    # Synth split directories store ground truth as {id}.gt.pgm next to the
    # image; plain mask directories store {id}.pgm.
    for name in (f"{image_id}.gt.pgm", f"{image_id}.pgm"):
        p = gt_dir / name
        if p.exists():
            return p
    raise ValueError(f"no ground truth for image {image_id!r} in {gt_dir}")


def _grid_for_images(dims_by_id: dict[str, tuple[int, int]],
                     patch_size: tuple[int, int], edge_policy: str) -> PatchGrid:
    sizes = set(dims_by_id.values())
    if len(sizes) > 1:
        detail = ", ".join(f"{k}={v[0]}x{v[1]}" for k, v in sorted(dims_by_id.items())[:4])
        raise ValueError(f"images disagree on dims ({detail}, ...); one grid geometry required")
    (iw, ih), = sizes
    return make_grid((iw, ih), patch_size, edge_policy)


# ---------------------------------------------------------------- commands


def run_uncertainty(maps_dir: Path, out_dir: Path, workers: int = 1) -> list[str]:
    """Prediction masks and entropy maps for every float map in a directory."""
    files = _list_maps(maps_dir)

    def process(path: Path):
        arr, kind = mapio.read_map(path)
        if kind == "logit":
            prob = maps_mod.softmax(arr)
        elif kind == "prob":
            prob = maps_mod.validate_prob(arr)
        else:
            raise ValueError(
                f"{path}: needs a sidecar kind of 'prob' or 'logit', got {kind!r}"
            )
        return path.stem, maps_mod.argmax_mask(prob), maps_mod.entropy_map(prob)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(process, files))
    else:
        results = [process(p) for p in files]

    ids = []
    for stem, mask, umap in results:
        mapio.write_mask(out_dir / MASKS_SUBDIR / f"{stem}.pgm", mask)
        mapio.write_map(out_dir / UMAPS_SUBDIR / f"{stem}{mapio.MAP_SUFFIX}",
                        umap.astype(np.float32), kind="uncertainty")
        ids.append(stem)
    return ids


def cmd_uncertainty(args) -> int:
    ids = run_uncertainty(Path(args.maps), Path(args.out), args.workers)
    print(f"wrote masks and uncertainty maps for {len(ids)} images under {args.out}")
    return 0


def stats_tsv(stats: list[PatchStat]) -> str:
    lines = ["image_id\tpatch_index\tves_p\tves_u"]
    lines += [f"{s.image_id}\t{s.patch_index}\t{s.ves_p}\t{s.ves_u!r}" for s in stats]
    return "\n".join(lines) + "\n"


def read_stats_tsv(path: str | Path) -> list[PatchStat]:
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines or lines[0].split("\t") != ["image_id", "patch_index", "ves_p", "ves_u"]:
        raise ValueError(f"{path}: not a patch-stats table (bad header)")
    out = []
    for n, line in enumerate(lines[1:], start=2):
        try:
            image_id, idx, p, u = line.split("\t")
            out.append(PatchStat(image_id, int(idx), int(p), float(u)))
        except ValueError:
            raise ValueError(f"{path}:{n}: malformed stats row {line!r}") from None
    if not out:
        raise ValueError(f"{path}: empty stats table")
    return out


def run_stats(mask_dir: Path, umap_dir: Path, patch_size: tuple[int, int],
              edge_policy: str, out_file: Path) -> tuple[list[PatchStat], PatchGrid]:
    mask_files = _list_masks(mask_dir)
    masks = {p.stem: mapio.read_mask(p) for p in mask_files}
    dims = {k: (m.shape[1], m.shape[0]) for k, m in masks.items()}
    grid = _grid_for_images(dims, patch_size, edge_policy)

    all_stats: list[PatchStat] = []
    for image_id in sorted(masks):
        upath = umap_dir / f"{image_id}{mapio.MAP_SUFFIX}"
        if not upath.exists():
            raise ValueError(f"no uncertainty map for image {image_id!r} (expected {upath})")
        umap = mapio.load_uncertainty(upath)
        if umap.shape != masks[image_id].shape:
            raise ValueError(
                f"{upath}: dims {umap.shape[1]}x{umap.shape[0]} do not match mask "
                f"{dims[image_id][0]}x{dims[image_id][1]}"
            )
        all_stats.extend(patch_stats(masks[image_id], umap, grid, image_id))
    atomic_write_text(out_file, stats_tsv(all_stats))
    return all_stats, grid


def cmd_stats(args) -> int:
    stats, grid = run_stats(Path(args.masks), Path(args.umaps),
                            parse_patch_size(args.patch_size), args.edge_policy,
                            Path(args.out))
    print(f"{len(stats)} patch rows ({grid.cols}x{grid.rows} grid) -> {args.out}")
    return 0


def run_select(stats: list[PatchStat], strategy: str, scope: str,
               c1: float, c2: float, alpha: float, seed: int) -> selection.SelectionManifest:
    if strategy == "cup":
        budget = selection.SelectionBudget.from_ratios(c1, c2, len(stats))
        return selection.select_cup(stats, budget, scope)
    if strategy == "uncertainty_only":
        return selection.select_uncertainty_only(stats, alpha, scope)
    if strategy == "random":
        return selection.select_random(stats, alpha, seed, scope)
    raise ValueError(f"unknown strategy {strategy!r}")


def cmd_select(args) -> int:
    stats = read_stats_tsv(args.stats)
    strategy = STRATEGY_FLAGS[args.strategy]
    scope = SCOPE_FLAGS[args.scope]
    alpha = args.alpha if args.alpha is not None else args.c1 * args.c2
    if strategy == "cup" and args.alpha is not None:
        raise ValueError("the cup strategy takes --c1/--c2, not --alpha")
    manifest = run_select(stats, strategy, scope, args.c1, args.c2, alpha, args.seed)
    manifest.write(args.out)
    if args.figure:
        report.selection_figure(stats, manifest, args.figure)
    b = manifest.budget
    print(f"{manifest.strategy}/{manifest.scope}: selected {b.n_selected} of "
          f"{b.n_total} patches -> {args.out}")
    return 0


def cmd_export(args) -> int:
    manifest = selection.SelectionManifest.read(args.manifest)
    images_dir = Path(args.images)
    binary = not args.gray
    images = {}
    for image_id in manifest.image_ids():
        path = _find_gt(images_dir, image_id) if binary else images_dir / f"{image_id}.pgm"
        if not path.exists():
            raise ValueError(f"no image file for manifest entry {image_id!r} (expected {path})")
        images[image_id] = mapio.read_mask(path) if binary else mapio.read_pgm(path)
    dims = {k: (v.shape[1], v.shape[0]) for k, v in images.items()}
    grid = _grid_for_images(dims, parse_patch_size(args.patch_size), args.edge_policy)
    written = pseudolabel.export_patches(images, manifest, grid, Path(args.out), binary=binary)
    print(f"exported {len(written)} patches to {args.out}")
    return 0


def run_merge(manifest: selection.SelectionManifest, pred_dir: Path,
              ann_dir: Path, patch_size: tuple[int, int], edge_policy: str,
              out_dir: Path) -> list[str]:
    """Enhanced labels for every prediction mask; provenance sits alongside."""
    preds = {p.stem: mapio.read_mask(p) for p in _list_masks(pred_dir)}
    missing = sorted(set(manifest.image_ids()) - set(preds))
    if missing:
        raise ValueError(f"manifest references images with no prediction: {', '.join(missing)}")
    dims = {k: (m.shape[1], m.shape[0]) for k, m in preds.items()}
    grid = _grid_for_images(dims, patch_size, edge_policy)
    annotations = pseudolabel.load_annotations(ann_dir, manifest, grid)

    ids = []
    for image_id in sorted(preds):
        label = pseudolabel.merge_enhanced(preds[image_id], annotations, manifest,
                                           grid, image_id)
        mapio.write_mask(out_dir / f"{image_id}.pgm", label.mask)
        pseudolabel.write_provenance(out_dir / f"{image_id}.provenance.json", label)
        ids.append(image_id)
    return ids


def cmd_merge(args) -> int:
    manifest = selection.SelectionManifest.read(args.manifest)
    ids = run_merge(manifest, Path(args.pred), Path(args.annotations),
                    parse_patch_size(args.patch_size), args.edge_policy, Path(args.out))
    print(f"wrote {len(ids)} enhanced labels to {args.out}")
    return 0


def cmd_eval(args) -> int:
    pred_dir, gt_dir = Path(args.pred), Path(args.gt)
    rows = []
    for p in _list_masks(pred_dir):
        pred = mapio.read_mask(p)
        gt = mapio.read_mask(_find_gt(gt_dir, p.stem))
        if pred.shape != gt.shape:
            raise ValueError(f"{p}: dims {pred.shape} do not match ground truth {gt.shape}")
        rows.append(metrics.evaluate_image(p.stem, pred, gt))
    rep = metrics.aggregate(rows)
    report.write_metrics_report(rep, Path(args.out), figures=not args.no_figures)
    print(report.metrics_table(rep), end="")
    print(f"report written to {args.out}")
    return 0


def cmd_synth(args) -> int:
    dims = parse_patch_size(args.dims)
    wmin, wmax = (float(x) for x in args.width_range.split(","))
    source = synth.DomainParams(
        seed=args.seed, image_dims=dims, vessel_count=args.vessels,
        width_range=(wmin, wmax), contrast_gamma=args.source_gamma,
        noise_sigma=args.source_noise, blur_sigma=args.source_blur,
        background_level=args.source_bg,
    )
    target = replace(
        source, seed=args.seed + args.target_seed_offset,
        contrast_gamma=args.target_gamma, noise_sigma=args.target_noise,
        blur_sigma=args.target_blur, background_level=args.target_bg,
    )
    counts = (args.count, args.target_count or args.count)
    manifest = synth.gen_dataset(source, target, counts, Path(args.out))
    n = sum(len(v) for d in manifest["splits"].values() for v in d.values())
    print(f"generated {n} images under {args.out}")
    return 0


def cmd_pipeline(args) -> int:
    cfg = load_config(args.config)
    cfg = _apply_overrides(cfg, args).validate()
    out = cfg.out

    cfg.write_resolved(out / RESOLVED_CONFIG_FILENAME)
    ids = run_uncertainty(cfg.maps, out, cfg.workers)
    stats, grid = run_stats(out / MASKS_SUBDIR, out / UMAPS_SUBDIR, cfg.patch_size,
                            cfg.edge_policy, out / STATS_FILENAME)
    manifest = run_select(stats, cfg.strategy, cfg.scope, cfg.c1, cfg.c2,
                          cfg.effective_alpha, cfg.seed)
    manifest.write(out / MANIFEST_FILENAME)

    if cfg.oracle_annotate:
        gt = {i: mapio.read_mask(_find_gt(cfg.gt_masks, i)) for i in manifest.image_ids()}
        ann_dir = out / ANNOTATIONS_SUBDIR
        pseudolabel.export_patches(gt, manifest, grid, ann_dir, binary=True)
    elif cfg.annotations is not None:
        ann_dir = cfg.annotations
    else:
        if cfg.images is None:
            raise ValueError(
                "no annotation source: set oracle_annotate, paths.annotations, "
                "or paths.images for annotator export"
            )
        images = {i: mapio.read_pgm(cfg.images / f"{i}.pgm") for i in manifest.image_ids()}
        patch_dir = out / "patches_for_annotation"
        pseudolabel.export_patches(images, manifest, grid, patch_dir, binary=False)
        print(f"selected {len(manifest.entries)} patches exported to {patch_dir}; "
              f"annotate them and re-run with paths.annotations set")
        return 0

    merged = run_merge(manifest, out / MASKS_SUBDIR, ann_dir, cfg.patch_size,
                       cfg.edge_policy, out / ENHANCED_SUBDIR)
    print(f"pipeline complete: {len(ids)} images, {len(manifest.entries)} patches "
          f"selected, {len(merged)} enhanced labels under {out}")
    return 0


def _apply_overrides(cfg: PipelineConfig, args) -> PipelineConfig:
    if args.out is not None:
        cfg.out = Path(args.out)
    if args.patch_size is not None:
        cfg.patch_size = parse_patch_size(args.patch_size)
    if args.edge_policy is not None:
        cfg.edge_policy = args.edge_policy
    if args.strategy is not None:
        cfg.strategy = STRATEGY_FLAGS[args.strategy]
    if args.scope is not None:
        cfg.scope = SCOPE_FLAGS[args.scope]
    if args.c1 is not None:
        cfg.c1 = args.c1
    if args.c2 is not None:
        cfg.c2 = args.c2
    if args.alpha is not None:
        cfg.alpha = args.alpha
    if args.seed is not None:
        cfg.seed = args.seed
    if args.workers is not None:
        cfg.workers = args.workers
    if args.oracle_annotate:
        cfg.oracle_annotate = True
    return cfg


# ---------------------------------------------------------------- parser


def _add_grid_flags(p: argparse.ArgumentParser, required: bool = False) -> None:
    p.add_argument("--patch-size", required=required, default=None if required else "64x64",
                   metavar="WxH", help="patch dims, e.g. 260x256")
    p.add_argument("--edge-policy", choices=("exact", "crop"), default="exact")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cupsel",
        description="Patch-based active selection pipeline for segmentation adaptation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("uncertainty", help="prediction masks + entropy maps from float maps")
    p.add_argument("--maps", required=True, help="directory of .fmap logit/probability files")
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_uncertainty)

    p = sub.add_parser("stats", help="per-patch (ves_p, ves_u) table")
    p.add_argument("--masks", required=True, help="directory of prediction masks")
    p.add_argument("--umaps", required=True, help="directory of uncertainty maps")
    _add_grid_flags(p, required=True)
    p.add_argument("--out", required=True, help="output TSV path")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("select", help="pick annotation patches under a budget")
    p.add_argument("--stats", required=True, help="patch-stats TSV")
    p.add_argument("--strategy", choices=tuple(STRATEGY_FLAGS), default="cup")
    p.add_argument("--scope", choices=tuple(SCOPE_FLAGS), default="pooled")
    p.add_argument("--c1", type=float, default=0.1, help="stage-1 uncertainty ratio")
    p.add_argument("--c2", type=float, default=0.5, help="stage-2 predominance ratio")
    p.add_argument("--alpha", type=float, default=None,
                   help="flat budget for uncertainty/random (default c1*c2)")
    p.add_argument("--seed", type=int, default=0, help="PRNG seed (random strategy)")
    p.add_argument("--figure", default=None, help="optional selection scatter PNG")
    p.add_argument("--out", required=True, help="manifest JSON path")
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("export", help="crop selected patches to PGM files")
    p.add_argument("--manifest", required=True)
    p.add_argument("--images", required=True,
                   help="directory of masks (or grayscale images with --gray)")
    p.add_argument("--gray", action="store_true",
                   help="export raw grayscale patches instead of binary masks")
    _add_grid_flags(p, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("merge", help="splice annotated patches into predictions")
    p.add_argument("--manifest", required=True)
    p.add_argument("--pred", required=True, help="directory of prediction masks")
    p.add_argument("--annotations", required=True, help="directory of annotated patches")
    _add_grid_flags(p, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_merge)

    p = sub.add_parser("eval", help="Dice/IoU/MCC/BM report with figures")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", help="generate a synthetic source/target dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, required=True, help="images per domain")
    p.add_argument("--target-count", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--target-seed-offset", type=int, default=1000)
    p.add_argument("--dims", default="512x512", metavar="WxH")
    p.add_argument("--vessels", type=int, default=7)
    p.add_argument("--width-range", default="5,13", metavar="MIN,MAX")
    p.add_argument("--source-gamma", type=float, default=1.0)
    p.add_argument("--source-noise", type=float, default=0.02)
    p.add_argument("--source-blur", type=float, default=0.8)
    p.add_argument("--source-bg", type=float, default=0.30)
    p.add_argument("--target-gamma", type=float, default=1.7)
    p.add_argument("--target-noise", type=float, default=0.06)
    p.add_argument("--target-blur", type=float, default=1.3)
    p.add_argument("--target-bg", type=float, default=0.22)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("pipeline", help="uncertainty -> stats -> select -> annotate -> merge")
    p.add_argument("--config", required=True, help="pipeline config JSON")
    p.add_argument("--out", default=None)
    p.add_argument("--patch-size", default=None, metavar="WxH")
    p.add_argument("--edge-policy", choices=("exact", "crop"), default=None)
    p.add_argument("--strategy", choices=tuple(STRATEGY_FLAGS), default=None)
    p.add_argument("--scope", choices=tuple(SCOPE_FLAGS), default=None)
    p.add_argument("--c1", type=float, default=None)
    p.add_argument("--c2", type=float, default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--oracle-annotate", action="store_true")
    p.set_defaults(func=cmd_pipeline)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FileFormatError, FileNotFoundError, NotADirectoryError, IndexError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
