import hashlib
import io
import itertools

import numpy as np
import pytest
from PIL import Image

from taxoseg.constants import ARRAY_ALIGN
from taxoseg.exceptions import GridFormatError
from taxoseg.exceptions import ScaleError
from taxoseg.exceptions import TilingError
from taxoseg.gridio import GsdSpec
from taxoseg.gridio import LabelMask
from taxoseg.gridio import ProbMap
from taxoseg.gridio import cut_tiles
from taxoseg.gridio import decode_float_grid
from taxoseg.gridio import encode_float_grid
from taxoseg.gridio import load_label_mask
from taxoseg.gridio import load_prob_map
from taxoseg.gridio import plan_tiles
from taxoseg.gridio import read_label_mask
from taxoseg.gridio import read_prob_map
from taxoseg.gridio import rescale_to_gsd
from taxoseg.gridio import scaled_shape
from taxoseg.gridio import stitch_maps
from taxoseg.gridio import store_label_mask
from taxoseg.gridio import store_prob_map
from taxoseg.gridio import write_label_mask
from taxoseg.gridio import write_prob_map
from taxoseg.synthfield import make_rng


def _random_map(rng, height, width, channels):
    data = rng.uniform(size=(height, width, channels))
    return ProbMap(data / data.sum(axis=2, keepdims=True))


def _png_bytes(array):
    buffer = io.BytesIO()
    Image.fromarray(array).save(buffer, format='PNG')
    return buffer.getvalue()


class TestGrids:
    def test_prob_map_needs_three_dims(self):
        with pytest.raises(GridFormatError):
            ProbMap(np.zeros((4, 4)))

    def test_prob_map_check(self):
        assert _random_map(make_rng(0), 4, 5, 3).check() == []
        problems = ProbMap(np.full((2, 2, 2), 0.7)).check()
        assert len(problems) == 1 and 'sums' in problems[0]
        assert ProbMap(np.full((1, 1, 2), np.nan)).check() == ["contains non-finite values"]

    def test_label_mask_values(self):
        with pytest.raises(GridFormatError):
            LabelMask(np.array([[0, 256]]))
        mask = LabelMask(np.array([[0, 255], [3, 1]]))
        assert mask.data.dtype == np.uint8
        assert mask.valid.tolist() == [[True, False], [True, True]]
        assert mask.check(4) == []
        assert mask.check(3) == ["class values [3] are not below 3"]

    def test_gsd_spec_positive(self):
        with pytest.raises(ScaleError):
            GsdSpec(0.0, 1.0)
        with pytest.raises(ScaleError):
            GsdSpec(1.0, float('nan'))
        assert GsdSpec(1.5, 0.75).scale == 2.0


class TestFloatGridCodec:
    def test_round_trip_is_bit_exact(self):
        rng = make_rng(3)
        for height, width, channels in [(1, 1, 1), (7, 5, 3), (16, 9, 18)]:
            data = rng.uniform(size=(height, width, channels)).astype(np.float32)
            encoded = encode_float_grid(data)
            decoded = decode_float_grid(encoded)
            assert hashlib.sha256(decoded.tobytes()).hexdigest() == hashlib.sha256(data.tobytes()).hexdigest()
            assert encode_float_grid(decoded) == encoded

    def test_header_is_aligned(self):
        encoded = encode_float_grid(np.zeros((3, 4, 5), dtype=np.float32))
        header_len = int.from_bytes(encoded[8:10], 'little')
        assert (10 + header_len) % ARRAY_ALIGN == 0
        assert encoded[10 + header_len - 1:10 + header_len] == b'\n'

    def test_numpy_reads_encoded_grids(self):
        data = make_rng(4).uniform(size=(3, 4, 2)).astype(np.float32)
        np.testing.assert_array_equal(np.load(io.BytesIO(encode_float_grid(data))), data)

    def test_decodes_numpy_output(self):
        data = make_rng(5).uniform(size=(6, 2, 3)).astype('<f4')
        buffer = io.BytesIO()
        np.save(buffer, data)
        np.testing.assert_array_equal(decode_float_grid(buffer.getvalue()), data)

    @pytest.mark.parametrize('array', [
        np.zeros((2, 2, 2), dtype='<f8'),
        np.zeros((2, 2), dtype='<f4'),
        np.zeros((2, 2, 2), dtype='>f4'),
        np.asfortranarray(np.zeros((2, 3, 2), dtype='<f4')),
    ])
    def test_rejects_other_arrays(self, array):
        buffer = io.BytesIO()
        np.save(buffer, array)
        with pytest.raises(GridFormatError):
            decode_float_grid(buffer.getvalue())

    def test_rejects_bad_magic(self):
        with pytest.raises(GridFormatError):
            decode_float_grid(b'PNG not an array')

    def test_rejects_truncated_and_trailing_payloads(self):
        encoded = encode_float_grid(np.ones((2, 2, 2), dtype=np.float32))
        with pytest.raises(GridFormatError, match='Truncated'):
            decode_float_grid(encoded[:-1])
        with pytest.raises(GridFormatError, match='trailing'):
            decode_float_grid(encoded + b'\x00')

    def test_file_round_trip(self, tmp_path):
        prob_map = _random_map(make_rng(6), 5, 4, 3)
        write_prob_map(tmp_path / 'map.npy', prob_map)
        np.testing.assert_array_equal(read_prob_map(tmp_path / 'map.npy').data, prob_map.data)

    def test_stored_bytes_are_stable(self):
        stored = store_prob_map(_random_map(make_rng(8), 3, 3, 4))
        assert load_prob_map(stored).shape == (3, 3, 4)
        assert store_prob_map(load_prob_map(stored)) == stored

    def test_read_error_names_file(self, tmp_path):
        (tmp_path / 'bad.npy').write_bytes(b'garbage')
        with pytest.raises(GridFormatError, match='bad.npy'):
            read_prob_map(tmp_path / 'bad.npy')


class TestLabelMaskCodec:
    def test_round_trip_is_bit_exact(self, tmp_path):
        rng = make_rng(8)
        for shape in [(1, 1), (13, 7), (64, 48)]:
            labels = rng.integers(0, 256, size=shape).astype(np.uint8)
            write_label_mask(tmp_path / 'mask.png', LabelMask(labels))
            again = read_label_mask(tmp_path / 'mask.png')
            assert hashlib.sha256(again.data.tobytes()).digest() == hashlib.sha256(labels.tobytes()).digest()

    def test_palette_images_are_raw_indices(self):
        labels = np.array([[0, 1], [2, 255]], dtype=np.uint8)
        image = Image.frombytes('P', (2, 2), labels.tobytes())
        image.putpalette([v for i in range(256) for v in (255 - i, i, 0)])
        buffer = io.BytesIO()
        image.save(buffer, format='PNG')
        np.testing.assert_array_equal(load_label_mask(buffer.getvalue()).data, labels)

    def test_rejects_multichannel(self):
        with pytest.raises(GridFormatError, match='single-channel'):
            load_label_mask(_png_bytes(np.zeros((2, 2, 3), dtype=np.uint8)))

    def test_rejects_16_bit(self):
        with pytest.raises(GridFormatError, match='8-bit'):
            load_label_mask(_png_bytes(np.zeros((2, 2), dtype=np.uint16)))

    def test_rejects_garbage(self):
        with pytest.raises(GridFormatError):
            load_label_mask(b'\x89PNG but not really')

    def test_store_is_deterministic(self):
        mask = LabelMask(np.arange(12, dtype=np.uint8).reshape(3, 4))
        assert store_label_mask(mask) == store_label_mask(LabelMask(mask.data.copy()))


class TestRescale:
    def test_scaled_shape_rounds_half_up(self):
        assert scaled_shape(10, 20, GsdSpec(1.0, 1.0)) == (10, 20)
        assert scaled_shape(5, 3, GsdSpec(1.0, 2.0)) == (3, 2)
        assert scaled_shape(100, 50, GsdSpec(0.5, 0.7543)) == (66, 33)

    def test_empty_result(self):
        with pytest.raises(ScaleError):
            scaled_shape(1, 1, GsdSpec(1.0, 4.0))

    def test_same_gsd_is_exact_copy(self):
        prob_map = _random_map(make_rng(9), 6, 5, 4)
        again = rescale_to_gsd(prob_map, GsdSpec(0.7543, 0.7543))
        np.testing.assert_array_equal(again.data, prob_map.data)
        assert again.data is not prob_map.data

    def test_prob_map_shape_and_mass(self):
        prob_map = _random_map(make_rng(10), 20, 30, 3)
        coarse = rescale_to_gsd(prob_map, GsdSpec(1.0, 2.0))
        assert coarse.shape == (10, 15, 3)
        # bilinear weights sum to one, so channel sums stay at one
        np.testing.assert_allclose(coarse.data.sum(axis=2), 1.0, atol=1e-5)

    def test_label_mask_keeps_classes(self):
        labels = np.zeros((12, 12), dtype=np.uint8)
        labels[:, 6:] = 3
        labels[0, 0] = 255
        fine = rescale_to_gsd(LabelMask(labels), GsdSpec(1.0, 0.5))
        assert fine.shape == (24, 24)
        assert set(np.unique(fine.data)) <= {0, 3, 255}

    def test_image_grid(self):
        image = make_rng(11).uniform(size=(8, 8)).astype(np.float32)
        assert rescale_to_gsd(image, GsdSpec(1.0, 2.0)).shape == (4, 4)
        with pytest.raises(ScaleError):
            rescale_to_gsd(np.zeros(5), GsdSpec(1.0, 2.0))


class TestTiling:
    def test_clamped_plan(self):
        plan = plan_tiles(100, 100, 64, 16)
        assert sorted({row for row, _ in plan.origins}) == [0, 36]
        assert sorted({col for _, col in plan.origins}) == [0, 36]
        assert len(plan) == 4

    def test_exact_fit(self):
        plan = plan_tiles(96, 48, 48, 0)
        assert plan.origins == ((0, 0), (48, 0))

    @pytest.mark.parametrize('args', [(10, 10, 0, 0), (10, 10, 4, 4), (10, 10, 4, -1), (10, 10, 11, 0), (0, 5, 2, 0)])
    def test_bad_plans(self, args):
        with pytest.raises(TilingError):
            plan_tiles(*args)

    def test_cut_stitch_identity(self):
        rng = make_rng(12)
        for _ in range(20):
            height, width = (int(v) for v in rng.integers(8, 80, size=2))
            tile_size = int(rng.integers(1, min(height, width) + 1))
            overlap = int(rng.integers(0, tile_size))
            plan = plan_tiles(height, width, tile_size, overlap)

            hits = np.zeros((height, width), dtype=int)
            for origin in plan.origins:
                hits[plan.window(origin)] += 1
            assert hits.min() >= 1

            prob_map = _random_map(rng, height, width, 3)
            tiles = cut_tiles(prob_map, plan)
            stitched = stitch_maps(reversed(tiles), height, width)
            np.testing.assert_allclose(stitched.data, prob_map.data, atol=1e-6)

    def test_stitch_uncovered_pixel(self):
        tile = ProbMap(np.full((2, 2, 1), 1.0))
        with pytest.raises(TilingError, match='not covered'):
            stitch_maps([((0, 0), tile)], 3, 2)

    def test_stitch_out_of_bounds(self):
        tile = ProbMap(np.full((2, 2, 1), 1.0))
        with pytest.raises(TilingError, match='outside'):
            stitch_maps([((0, 0), tile), ((1, 1), tile)], 2, 2)

    def test_stitch_channel_mismatch(self):
        with pytest.raises(TilingError, match='channels'):
            stitch_maps([((0, 0), ProbMap(np.ones((2, 2, 1)))), ((0, 0), ProbMap(np.ones((2, 2, 2))))], 2, 2)

    def test_stitch_averages_overlap(self):
        left = ProbMap(np.zeros((1, 2, 1)))
        right = ProbMap(np.ones((1, 2, 1)))
        stitched = stitch_maps([((0, 1), right), ((0, 0), left)], 1, 3)
        np.testing.assert_allclose(stitched.data[0, :, 0], [0.0, 0.5, 1.0])

    def test_cut_tiles_shape_mismatch(self):
        with pytest.raises(TilingError):
            cut_tiles(ProbMap(np.ones((5, 5, 1))), plan_tiles(6, 6, 3, 0))


def test_all_origins_unique():
    plan = plan_tiles(70, 130, 32, 8)
    assert len(set(plan.origins)) == len(plan.origins)
    assert list(plan.origins) == sorted(plan.origins)
    assert set(plan.origins) == set(itertools.product(sorted({r for r, _ in plan.origins}),
                                                     sorted({c for _, c in plan.origins})))
