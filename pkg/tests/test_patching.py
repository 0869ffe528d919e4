import numpy as np
import pytest

import oracles
from cupsel import patching


class TestMakeGrid:
    def test_paper_scale_dims(self):
        grid = patching.make_grid((3900, 3072), (260, 256), "exact")
        assert (grid.cols, grid.rows) == (15, 12)
        assert grid.n_patches == 180

    def test_single_patch(self):
        grid = patching.make_grid((100, 100), (100, 100), "exact")
        assert grid.n_patches == 1

    def test_crop_drops_residue(self):
        grid = patching.make_grid((1030, 1030), (256, 256), "crop")
        assert (grid.cols, grid.rows) == (4, 4)
        assert grid.n_patches == 16

    def test_exact_rejects_nondivisible_with_suggestion(self):
        with pytest.raises(ValueError, match="crop.*4x4"):
            patching.make_grid((1030, 1030), (256, 256), "exact")

    def test_rejects_oversized_patch(self):
        with pytest.raises(ValueError, match="exceed"):
            patching.make_grid((64, 64), (65, 64))

    def test_rejects_bad_policy(self):
        with pytest.raises(ValueError, match="edge_policy"):
            patching.make_grid((64, 64), (32, 32), "pad")


class TestPatchBounds:
    def test_first_patch(self):
        grid = patching.make_grid((3900, 3072), (260, 256))
        assert patching.patch_bounds(grid, 0) == (0, 0, 260, 256)

    def test_last_patch_is_bottom_right(self):
        grid = patching.make_grid((3900, 3072), (260, 256))
        assert patching.patch_bounds(grid, 179) == (3900 - 260, 3072 - 256, 3900, 3072)

    def test_row_major_arithmetic(self):
        # index 16 on a 15-column grid sits at row 1, col 1
        grid = patching.make_grid((3900, 3072), (260, 256))
        assert patching.patch_bounds(grid, 16) == (260, 256, 520, 512)

    def test_out_of_range(self):
        grid = patching.make_grid((64, 64), (32, 32))
        with pytest.raises(IndexError):
            patching.patch_bounds(grid, 4)

    def test_rectangles_partition_image(self):
        grid = patching.make_grid((96, 64), (32, 32))
        cover = np.zeros((64, 96), dtype=int)
        for i in range(grid.n_patches):
            x0, y0, x1, y1 = patching.patch_bounds(grid, i)
            cover[y0:y1, x0:x1] += 1
        assert (cover == 1).all()


class TestPatchStats:
    def test_all_zero(self):
        grid = patching.make_grid((8, 8), (4, 4))
        stats = patching.patch_stats(np.zeros((8, 8), np.uint8), np.zeros((8, 8)), grid, "a")
        assert all(s.ves_p == 0 and s.ves_u == 0.0 for s in stats)

    def test_all_one_counts_patch_area(self):
        grid = patching.make_grid((520, 512), (260, 256))
        mask = np.ones((512, 520), dtype=np.uint8)
        stats = patching.patch_stats(mask, np.zeros((512, 520)), grid, "a")
        assert all(s.ves_p == 66560 for s in stats)

    def test_matches_double_loop_oracle(self):
        rng = np.random.default_rng(11)
        grid = patching.make_grid((10, 6), (5, 3))
        mask = (rng.random((6, 10)) < 0.5).astype(np.uint8)
        umap = rng.random((6, 10)) * 0.69
        stats = patching.patch_stats(mask, umap, grid, "img")
        ref = oracles.patch_sums(mask, umap, 5, 3, 2, 2)
        for s in stats:
            assert s.ves_p == ref[s.patch_index][0]
            assert s.ves_u == pytest.approx(ref[s.patch_index][1], rel=1e-12)

    def test_sums_are_conserved(self):
        rng = np.random.default_rng(5)
        grid = patching.make_grid((64, 64), (16, 16))
        mask = (rng.random((64, 64)) < 0.3).astype(np.uint8)
        umap = rng.random((64, 64)) * 0.6
        stats = patching.patch_stats(mask, umap, grid, "x")
        assert sum(s.ves_p for s in stats) == int(mask.sum())
        assert sum(s.ves_u for s in stats) == pytest.approx(float(umap.sum()), rel=1e-6)

    def test_crop_policy_excludes_residue(self):
        grid = patching.make_grid((10, 10), (4, 4), "crop")
        mask = np.zeros((10, 10), dtype=np.uint8)
        mask[8:, :] = 1  # residue rows only
        mask[:, 8:] = 1
        stats = patching.patch_stats(mask, np.zeros((10, 10)), grid, "x")
        assert sum(s.ves_p for s in stats) == 0

    def test_dims_mismatch_rejected(self):
        grid = patching.make_grid((8, 8), (4, 4))
        with pytest.raises(ValueError, match="do not match grid"):
            patching.patch_stats(np.zeros((9, 8), np.uint8), np.zeros((9, 8)), grid, "x")

    def test_stat_order_independent_of_content(self):
        # stats are a pure function of pixel content keyed by index
        rng = np.random.default_rng(2)
        grid = patching.make_grid((8, 8), (4, 4))
        mask = (rng.random((8, 8)) < 0.5).astype(np.uint8)
        umap = rng.random((8, 8))
        a = patching.patch_stats(mask, umap, grid, "x")
        b = patching.patch_stats(mask.copy(), umap.copy(), grid, "x")
        assert a == b
