import numpy as np
import pytest

from cupsel import mapio, pseudolabel
from cupsel.patching import PatchStat, make_grid, patch_bounds
from cupsel.selection import SelectionBudget, select_cup, select_random


def make_manifest(grid, n_selected, image_id="img", seed=0):
    stats = [PatchStat(image_id, i, 0, 0.0) for i in range(grid.n_patches)]
    return select_random(stats, n_selected / grid.n_patches, seed=seed)


class TestFilenames:
    def test_round_trip(self):
        name = pseudolabel.patch_filename("target_train_003", 17)
        assert name == "target_train_003_17.pgm"
        assert pseudolabel.parse_patch_filename(name) == ("target_train_003", 17)

    def test_rejects_garbage(self):
        with pytest.raises(ValueError):
            pseudolabel.parse_patch_filename("nounderscore.pgm")


class TestExportPatches:
    def test_empty_manifest_writes_nothing(self, tmp_path):
        grid = make_grid((8, 8), (4, 4))
        stats = [PatchStat("a", i, 0, 0.0) for i in range(4)]
        man = select_random(stats, 0.25, seed=1)
        man = man.__class__(man.strategy, man.budget, man.scope, (), man.seed)
        out = pseudolabel.export_patches({"a": np.zeros((8, 8), np.uint8)}, man, grid, tmp_path)
        assert out == []
        assert list(tmp_path.iterdir()) == []

    def test_files_have_patch_dims(self, tmp_path):
        rng = np.random.default_rng(0)
        grid = make_grid((12, 8), (4, 4))
        mask = (rng.random((8, 12)) < 0.5).astype(np.uint8)
        man = make_manifest(grid, 3, "a")
        files = pseudolabel.export_patches({"a": mask}, man, grid, tmp_path)
        assert len(files) == 3
        for f in files:
            patch = mapio.read_mask(f)
            assert patch.shape == (4, 4)

    def test_restitched_patches_reproduce_source(self, tmp_path):
        rng = np.random.default_rng(1)
        grid = make_grid((16, 12), (4, 4))
        mask = (rng.random((12, 16)) < 0.5).astype(np.uint8)
        man = make_manifest(grid, 6, "a", seed=3)
        pseudolabel.export_patches({"a": mask}, man, grid, tmp_path)
        rebuilt = np.zeros_like(mask)
        covered = np.zeros_like(mask, dtype=bool)
        for f in tmp_path.glob("*.pgm"):
            image_id, idx = pseudolabel.parse_patch_filename(f.name)
            x0, y0, x1, y1 = patch_bounds(grid, idx)
            rebuilt[y0:y1, x0:x1] = mapio.read_mask(f)
            covered[y0:y1, x0:x1] = True
        np.testing.assert_array_equal(rebuilt[covered], mask[covered])

    def test_missing_image_rejected(self, tmp_path):
        grid = make_grid((8, 8), (4, 4))
        man = make_manifest(grid, 2, "ghost")
        with pytest.raises(ValueError, match="ghost"):
            pseudolabel.export_patches({}, man, grid, tmp_path)


class TestMergeEnhanced:
    def _setup(self, seed=0, dims=(16, 12), patch=(4, 4)):
        rng = np.random.default_rng(seed)
        grid = make_grid(dims, patch)
        w, h = dims
        pred = (rng.random((h, w)) < 0.5).astype(np.uint8)
        gt = (rng.random((h, w)) < 0.5).astype(np.uint8)
        return grid, pred, gt

    def test_empty_manifest_is_identity(self):
        grid, pred, gt = self._setup()
        man = make_manifest(grid, 1, "a")
        empty = man.__class__(man.strategy, man.budget, man.scope, (), man.seed)
        ann = pseudolabel.AnnotationSet(grid, {})
        out = pseudolabel.merge_enhanced(pred, ann, empty, grid, "a")
        assert out.mask.tobytes() == pred.tobytes()
        assert set(out.provenance) == {"predicted"}

    def test_full_manifest_with_gt_reproduces_gt(self):
        grid, pred, gt = self._setup(seed=2)
        stats = [PatchStat("a", i, 0, 0.0) for i in range(grid.n_patches)]
        man = select_cup(stats, SelectionBudget.from_ratios(1.0, 1.0, grid.n_patches))
        ann = pseudolabel.oracle_annotations({"a": gt}, man, grid)
        out = pseudolabel.merge_enhanced(pred, ann, man, grid, "a")
        assert out.mask.tobytes() == gt.tobytes()
        assert set(out.provenance) == {"annotated"}

    def test_single_patch_pixel_count(self):
        grid = make_grid((12, 12), (4, 4))
        pred = np.zeros((12, 12), dtype=np.uint8)
        man = make_manifest(grid, 1, "a", seed=9)
        (entry,) = man.entries
        ann = pseudolabel.AnnotationSet(
            grid, {(entry.image_id, entry.patch_index): np.ones((4, 4), np.uint8)}
        )
        out = pseudolabel.merge_enhanced(pred, ann, man, grid, "a")
        assert int(out.mask.sum()) == 16
        x0, y0, x1, y1 = patch_bounds(grid, entry.patch_index)
        assert out.mask[y0:y1, x0:x1].all()

    def test_locality_property(self):
        for seed in range(25):
            grid, pred, gt = self._setup(seed=seed)
            k = 1 + seed % 5
            man = make_manifest(grid, k, "a", seed=seed)
            ann = pseudolabel.oracle_annotations({"a": gt}, man, grid)
            out = pseudolabel.merge_enhanced(pred, ann, man, grid, "a")
            inside = np.zeros_like(pred, dtype=bool)
            for e in man.entries:
                x0, y0, x1, y1 = patch_bounds(grid, e.patch_index)
                inside[y0:y1, x0:x1] = True
            np.testing.assert_array_equal(out.mask[~inside], pred[~inside])
            np.testing.assert_array_equal(out.mask[inside], gt[inside])

    def test_idempotent(self):
        grid, pred, gt = self._setup(seed=6)
        man = make_manifest(grid, 4, "a", seed=6)
        ann = pseudolabel.oracle_annotations({"a": gt}, man, grid)
        once = pseudolabel.merge_enhanced(pred, ann, man, grid, "a")
        twice = pseudolabel.merge_enhanced(once.mask, ann, man, grid, "a")
        assert once.mask.tobytes() == twice.mask.tobytes()

    def test_selected_patches_become_perfect(self):
        # inside annotated patches the confusion restricted there is exact
        from cupsel.metrics import confusion

        grid, pred, gt = self._setup(seed=8)
        man = make_manifest(grid, 5, "a", seed=8)
        ann = pseudolabel.oracle_annotations({"a": gt}, man, grid)
        out = pseudolabel.merge_enhanced(pred, ann, man, grid, "a")
        for e in man.entries:
            x0, y0, x1, y1 = patch_bounds(grid, e.patch_index)
            c = confusion(out.mask[y0:y1, x0:x1], gt[y0:y1, x0:x1])
            assert c.fp == 0 and c.fn == 0

    def test_missing_annotation_is_hard_error(self):
        grid, pred, gt = self._setup(seed=3)
        man = make_manifest(grid, 2, "a", seed=3)
        ann = pseudolabel.AnnotationSet(grid, {})
        with pytest.raises(ValueError, match="missing annotation"):
            pseudolabel.merge_enhanced(pred, ann, man, grid, "a")

    def test_provenance_marks_exactly_selected(self):
        grid, pred, gt = self._setup(seed=12)
        man = make_manifest(grid, 3, "a", seed=12)
        ann = pseudolabel.oracle_annotations({"a": gt}, man, grid)
        out = pseudolabel.merge_enhanced(pred, ann, man, grid, "a")
        assert set(out.annotated_indices()) == {e.patch_index for e in man.entries}


class TestLoadAnnotations:
    def test_round_trip_via_directory(self, tmp_path):
        rng = np.random.default_rng(4)
        grid = make_grid((8, 8), (4, 4))
        gt = (rng.random((8, 8)) < 0.5).astype(np.uint8)
        man = make_manifest(grid, 2, "a", seed=4)
        pseudolabel.export_patches({"a": gt}, man, grid, tmp_path)
        ann = pseudolabel.load_annotations(tmp_path, man, grid)
        ref = pseudolabel.oracle_annotations({"a": gt}, man, grid)
        for key, patch in ref.items.items():
            np.testing.assert_array_equal(ann.items[key], patch)

    def test_missing_file_listed(self, tmp_path):
        grid = make_grid((8, 8), (4, 4))
        man = make_manifest(grid, 2, "a", seed=5)
        with pytest.raises(ValueError, match="missing"):
            pseudolabel.load_annotations(tmp_path, man, grid)

    def test_wrong_dims_rejected(self):
        grid = make_grid((8, 8), (4, 4))
        with pytest.raises(ValueError, match="dims"):
            pseudolabel.AnnotationSet(grid, {("a", 0): np.zeros((3, 4), np.uint8)})
