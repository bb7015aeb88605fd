import numpy as np
import pytest
from scipy import stats

from mcrise import maskgen
from mcrise.errors import ConfigError
from mcrise.imaging import read_grid_bin
from mcrise.maskgen import (
    ColorMaskSample,
    RunConfig,
    apply_binary_mask,
    apply_color_mask,
    binary_mask,
    color_mask,
    nonmasked_map,
    sample_binary_lowres,
    sample_color_lowres,
    sample_stream,
    upsample_and_shift,
)

RGB2 = ((1.0, 0.0, 0.0), (0.0, 1.0, 0.0))
RGB3 = RGB2 + ((0.0, 0.0, 1.0),)


def oracle_cfg(**kw) -> RunConfig:
    base = dict(num_masks=10, p_mask=0.5, cell_grid=(2, 2), color_set=(),
                seed=0, interpolate=False, shift=False)
    base.update(kw)
    return RunConfig(**base)


class TestRunConfig:
    def test_defaults_are_valid(self):
        cfg = RunConfig().validate()
        assert cfg.num_masks == 8000
        assert cfg.p_mask == 0.5
        assert cfg.num_colors == 5

    @pytest.mark.parametrize("p", [0.0, 1.0, -0.1, 1.5])
    def test_degenerate_mask_probability_rejected(self, p):
        with pytest.raises(ConfigError):
            RunConfig(p_mask=p).validate()

    def test_zero_masks_rejected(self):
        with pytest.raises(ConfigError):
            RunConfig(num_masks=0).validate()

    def test_duplicate_colors_rejected(self):
        with pytest.raises(ConfigError):
            RunConfig(color_set=((1.0, 0.0, 0.0), (1.0, 0.0, 0.0))).validate()

    def test_out_of_range_color_rejected(self):
        with pytest.raises(ConfigError):
            RunConfig(color_set=((2.0, 0.0, 0.0),)).validate()

    def test_cell_grid_must_fit_image(self):
        with pytest.raises(ConfigError):
            RunConfig(cell_grid=(9, 9)).check_fits(8, 32)


class TestBinarySampling:
    def test_same_seed_same_masks(self):
        cfg = oracle_cfg(seed=123)
        first = sample_binary_lowres(cfg, sample_stream(cfg.seed, 0))
        second = sample_binary_lowres(cfg, sample_stream(cfg.seed, 0))
        assert np.array_equal(first, second)

    def test_distinct_indices_are_independent_draws(self):
        cfg = oracle_cfg(seed=123, cell_grid=(8, 8))
        grids = [sample_binary_lowres(cfg, sample_stream(cfg.seed, i)) for i in range(9)]
        assert any(not np.array_equal(grids[0], g) for g in grids[1:])

    def test_retain_rate_within_three_sigma(self):
        # 10^5 cells; binomial bound |rate - p| <= 3 sqrt(p(1-p)/n)
        cfg = oracle_cfg(seed=7, p_mask=0.3, cell_grid=(10, 10))
        cells = np.concatenate(
            [sample_binary_lowres(cfg, sample_stream(cfg.seed, i)).ravel()
             for i in range(1000)]
        )
        bound = 3 * np.sqrt(0.3 * 0.7 / cells.size)
        assert abs(cells.mean() - 0.3) <= bound

    def test_values_are_exactly_binary(self):
        cfg = oracle_cfg(seed=3)
        grid = sample_binary_lowres(cfg, sample_stream(cfg.seed, 0))
        assert np.isin(grid, (0.0, 1.0)).all()


class TestColorSampling:
    def test_masked_cell_is_one_hot(self):
        cfg = oracle_cfg(seed=5, cell_grid=(6, 6), color_set=RGB3)
        channels = sample_color_lowres(cfg, sample_stream(cfg.seed, 0))
        sums = channels.sum(axis=0)
        assert np.isin(channels, (0.0, 1.0)).all()
        assert np.isin(sums, (0.0, 1.0)).all()
        assert sums.max() == 1.0  # some cell is masked at p=0.5 on 36 cells

    def test_per_color_rate_within_three_sigma(self):
        cfg = oracle_cfg(seed=11, p_mask=0.5, cell_grid=(10, 10), color_set=RGB2)
        per_color = np.zeros(2)
        n_cells = 100 * 1000
        for i in range(1000):
            channels = sample_color_lowres(cfg, sample_stream(cfg.seed, i))
            per_color += channels.sum(axis=(1, 2))
        target = cfg.p_mask / cfg.num_colors
        bound = 3 * np.sqrt(target * (1 - target) / n_cells)
        for rate in per_color / n_cells:
            assert abs(rate - target) <= bound

    def test_five_color_default_palette(self):
        assert RunConfig().color_set == maskgen.DEFAULT_COLORS
        assert maskgen.DEFAULT_COLORS[0] == (1.0, 0.0, 0.0)
        assert len(maskgen.DEFAULT_COLORS) == 5


class TestUpsampleAndShift:
    def test_nearest_mode_makes_constant_blocks(self):
        cfg = oracle_cfg()
        lowres = np.array([[1.0, 0.0], [0.0, 1.0]])
        out = upsample_and_shift(lowres, 4, 4, sample_stream(0, 0), cfg)[0]
        for y in range(2):
            for x in range(2):
                block = out[2 * y : 2 * y + 2, 2 * x : 2 * x + 2]
                assert (block == lowres[y, x]).all()

    def test_channel_sum_stays_below_one(self):
        cfg = oracle_cfg(interpolate=True, shift=True, color_set=RGB3, cell_grid=(3, 3))
        for index in range(50):
            rng = sample_stream(17, index)
            lowres = sample_color_lowres(cfg, rng)
            up = upsample_and_shift(lowres, 13, 19, rng, cfg, kind="color")
            assert up.min() >= 0.0 and up.max() <= 1.0
            assert up.sum(axis=0).max() <= 1.0 + 1e-9

    def test_crop_offsets_uniform_chi_square(self):
        # one-hot cell (0,0); with nearest upsampling the visible top-left
        # block has size (cell-off) per axis, which recovers the offset
        cfg = oracle_cfg(p_mask=0.5, cell_grid=(2, 2), interpolate=False, shift=True)
        delta = np.zeros((2, 2))
        delta[0, 0] = 1.0
        cell = 4  # 8 // 2
        counts = np.zeros((cell, cell))
        for index in range(10_000):
            out = upsample_and_shift(delta, 8, 8, sample_stream(29, index), cfg)[0]
            off_y = cell - int(out[:cell, 0].sum())
            off_x = cell - int(out[0, :cell].sum())
            counts[off_y, off_x] += 1
        result = stats.chisquare(counts.ravel())
        assert result.pvalue > 0.001

    def test_offsets_shared_across_channels(self):
        cfg = oracle_cfg(color_set=RGB3, interpolate=False, shift=True, cell_grid=(2, 2))
        # all cells masked with some color: union of channels must stay a
        # partition after the shared crop
        rng = sample_stream(31, 4)
        lowres = np.zeros((3, 2, 2))
        lowres[0] = [[1, 0], [0, 0]]
        lowres[1] = [[0, 1], [1, 0]]
        lowres[2] = [[0, 0], [0, 1]]
        up = upsample_and_shift(lowres, 8, 8, rng, cfg, kind="color")
        assert np.isin(up.sum(axis=0), (0.0, 1.0)).all()

    def test_grid_larger_than_image_rejected(self):
        cfg = oracle_cfg(cell_grid=(4, 4))
        with pytest.raises(ConfigError):
            upsample_and_shift(np.zeros((4, 4)), 2, 8, sample_stream(0, 0), cfg)


class TestNonmaskedMap:
    def test_fully_masked_pixel_is_zero(self):
        channels = np.zeros((2, 1, 1))
        channels[1, 0, 0] = 1.0
        assert nonmasked_map(channels)[0, 0] == 0.0

    def test_unmasked_pixel_is_one(self):
        assert nonmasked_map(np.zeros((3, 2, 2)))[0, 0] == 1.0

    def test_soft_pixel(self):
        channels = np.full((1, 1, 1), 0.25)
        assert nonmasked_map(channels)[0, 0] == 0.75

    def test_oversum_rejected(self):
        channels = np.full((2, 1, 1), 0.6)
        with pytest.raises(ValueError, match="sum"):
            nonmasked_map(channels)


class TestApplyMasks:
    def test_all_ones_mask_is_identity(self):
        rng = np.random.default_rng(0)
        image = rng.random((3, 4, 3))
        assert np.array_equal(apply_binary_mask(image, np.ones((3, 4))), image)

    def test_all_zeros_mask_blacks_out(self):
        image = np.random.default_rng(0).random((3, 4, 3))
        assert (apply_binary_mask(image, np.zeros((3, 4))) == 0).all()

    def test_soft_mask_scales_channels(self):
        image = np.array([[[0.8, 0.4, 0.2]]])
        out = apply_binary_mask(image, np.full((1, 1), 0.5))
        assert np.allclose(out[0, 0], [0.4, 0.2, 0.1], atol=1e-15)

    def test_mask_shape_mismatch(self):
        with pytest.raises(ValueError):
            apply_binary_mask(np.zeros((2, 2, 3)), np.zeros((3, 3)))

    def test_color_blend_arithmetic(self):
        image = np.full((1, 1, 3), 0.2)
        sample = ColorMaskSample(
            channels=np.full((1, 1, 1), 0.5), nonmasked=np.full((1, 1), 0.5)
        )
        out = apply_color_mask(image, sample, ((1.0, 0.0, 0.0),))
        assert np.allclose(out[0, 0], [0.6, 0.1, 0.1], atol=1e-15)

    def test_nonmasked_everywhere_is_identity(self):
        image = np.random.default_rng(1).random((2, 2, 3))
        sample = ColorMaskSample(
            channels=np.zeros((2, 2, 2)), nonmasked=np.ones((2, 2))
        )
        assert np.array_equal(apply_color_mask(image, sample, RGB2), image)

    def test_fully_masked_pixel_is_exactly_the_color(self):
        image = np.random.default_rng(2).random((1, 1, 3))
        channels = np.zeros((2, 1, 1))
        channels[1, 0, 0] = 1.0
        sample = ColorMaskSample(channels=channels, nonmasked=np.zeros((1, 1)))
        out = apply_color_mask(image, sample, RGB2)
        assert out[0, 0].tolist() == [0.0, 1.0, 0.0]

    def test_palette_size_mismatch(self):
        sample = ColorMaskSample(channels=np.zeros((2, 1, 1)), nonmasked=np.ones((1, 1)))
        with pytest.raises(ValueError):
            apply_color_mask(np.zeros((1, 1, 3)), sample, ((1.0, 0.0, 0.0),))


class TestFullPipeline:
    def test_partition_of_unity_with_interpolation_and_shift(self):
        cfg = RunConfig(num_masks=200, p_mask=0.4, cell_grid=(3, 4), color_set=RGB3,
                        seed=2, interpolate=True, shift=True)
        for index in range(200):
            sample = color_mask(cfg, 21, 17, index)
            total = sample.nonmasked + sample.channels.sum(axis=0)
            assert np.abs(total - 1.0).max() <= 1e-9

    def test_binary_mode_exact_zero_one(self):
        cfg = oracle_cfg(seed=9, cell_grid=(3, 3))
        for index in range(20):
            mask = binary_mask(cfg, 9, 9, index)
            assert np.isin(mask, (0.0, 1.0)).all()

    def test_interpolated_masks_stay_in_unit_range(self):
        cfg = RunConfig(num_masks=50, cell_grid=(4, 4), seed=13, color_set=())
        for index in range(50):
            mask = binary_mask(cfg, 30, 30, index)
            assert mask.min() >= 0.0 and mask.max() <= 1.0

    def test_full_color_sample_deterministic(self):
        cfg = RunConfig(num_masks=5, cell_grid=(3, 3), color_set=RGB2, seed=21)
        one = color_mask(cfg, 15, 15, 3)
        two = color_mask(cfg, 15, 15, 3)
        assert np.array_equal(one.channels, two.channels)
        assert np.array_equal(one.nonmasked, two.nonmasked)

    def test_mask_dump_layout(self, tmp_path):
        cfg = RunConfig(num_masks=1, cell_grid=(2, 2), color_set=RGB2, seed=0)
        sample = color_mask(cfg, 8, 8, 7)
        path = maskgen.dump_sample(tmp_path, 7, sample.channels, sample.nonmasked)
        assert path.name == "mask_000007.bin"
        stored = read_grid_bin(path)
        assert stored.shape == (3, 8, 8)  # K channels + m0 last
        assert np.allclose(stored[2], sample.nonmasked, atol=1e-7)
