import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from octseg.volume import (
    FACE_NEIGHBORS,
    Band,
    Surface,
    Volume,
    band_indices,
    extract_band,
    max_intensity_depth,
    neighborhood_features,
)


class TestVolumeModel:
    def test_shape_and_accessors(self):
        data = np.arange(2 * 5 * 3).reshape(2, 5, 3).astype(np.int32)
        vol = Volume(data)
        assert (vol.slices, vol.depth, vol.width) == (2, 5, 3)
        assert vol.bscan(1).shape == (5, 3)

    def test_rejects_negative_intensities(self):
        data = np.zeros((1, 4, 4), dtype=np.int32)
        data[0, 1, 2] = -3
        with pytest.raises(ValueError):
            Volume(data)

    def test_rejects_wrong_rank(self):
        with pytest.raises(ValueError):
            Volume(np.zeros((4, 4), dtype=np.int32))

    def test_bit_max_raises_to_data_max(self):
        data = np.full((1, 2, 2), 300, dtype=np.int32)
        assert Volume(data).bit_max >= 300

    def test_face_neighbors_is_six_connected(self):
        assert len(FACE_NEIGHBORS) == 6
        assert all(sum(abs(c) for c in n) == 1 for n in FACE_NEIGHBORS)


class TestSurface:
    def test_defined_mask_and_fraction(self):
        d = np.array([[1.0, np.nan], [2.0, 3.0]])
        s = Surface(d)
        assert s.defined_mask().tolist() == [[True, False], [True, True]]
        assert s.defined_fraction() == pytest.approx(0.75)


class TestMaxIntensityDepth:
    def test_constant_volume_all_zero(self):
        vol = Volume(np.full((2, 6, 4), 10, dtype=np.int32))
        assert (max_intensity_depth(vol).depth == 0).all()

    def test_single_bright_plane(self):
        data = np.full((2, 200, 4), 20, dtype=np.int32)
        data[:, 150, :] = 200
        assert (max_intensity_depth(Volume(data)).depth == 150).all()

    def test_matches_bruteforce_scan(self, rng):
        data = rng.integers(0, 255, size=(8, 8, 4)).astype(np.int32)
        got = max_intensity_depth(Volume(data)).depth
        for y in range(8):
            for x in range(4):
                col = data[y, :, x]
                best = 0
                for z in range(1, 8):
                    if col[z] > col[best]:
                        best = z
                assert got[y, x] == best

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 10_000), scale=st.integers(2, 9), offset=st.integers(0, 50))
    def test_invariant_under_monotone_remap(self, seed, scale, offset):
        data = np.random.default_rng(seed).integers(0, 100, size=(3, 12, 5)).astype(np.int32)
        base = max_intensity_depth(Volume(data)).depth
        affine = max_intensity_depth(Volume(data * scale + offset)).depth
        squared = max_intensity_depth(Volume(data.astype(np.int64) ** 2)).depth
        assert (base == affine).all()
        assert (base == squared).all()


class TestNeighborhoodFeatures:
    def test_constant_volume(self):
        vol = Volume(np.full((3, 3, 3), 7, dtype=np.int32))
        f = neighborhood_features(vol, (1, 1, 1))
        assert f.mean == 7.0
        assert f.variance == 0.0
        assert np.allclose(f.gradient, 0.0)

    def test_axial_ramp(self):
        z = np.arange(9, dtype=np.int32)
        data = np.broadcast_to(z[None, :, None], (3, 9, 3)).copy()
        f = neighborhood_features(Volume(data), (1, 1, 4))
        # neighbor values are {z-1, z+1, z, z, z, z}: mean z, variance 2/6
        assert f.mean == pytest.approx(4.0)
        assert f.variance == pytest.approx(1.0 / 3.0)
        assert np.allclose(f.gradient, (0.0, 0.0, 1.0))

    def test_linear_field_gradient_exact(self):
        w, n, m = 5, 5, 7
        x = np.arange(w)
        y = np.arange(n)
        z = np.arange(m)
        data = (2 * x[None, None, :] + 3 * y[:, None, None] + 5 * z[None, :, None]).astype(np.int32)
        vol = Volume(data)
        for pos in [(1, 1, 1), (2, 3, 4), (3, 2, 5)]:
            f = neighborhood_features(vol, pos)
            assert np.allclose(f.gradient, (2.0, 3.0, 5.0))

    def test_random_center_matches_direct_formulas(self, rng):
        data = rng.integers(0, 255, size=(3, 3, 3)).astype(np.int32)
        vol = Volume(data)
        f = neighborhood_features(vol, (1, 1, 1))
        vals = [
            float(data[1, 1, 0]), float(data[1, 1, 2]),
            float(data[0, 1, 1]), float(data[2, 1, 1]),
            float(data[1, 0, 1]), float(data[1, 2, 1]),
        ]
        mean = sum(vals) / 6
        var = sum((v - mean) ** 2 for v in vals) / 6
        assert f.mean == pytest.approx(mean)
        assert f.variance == pytest.approx(var)

        def grad(x, y, z):
            d = data.astype(float)
            gx = (d[y, z, min(x + 1, 2)] - d[y, z, max(x - 1, 0)]) / (min(x + 1, 2) - max(x - 1, 0))
            gy = (d[min(y + 1, 2), z, x] - d[max(y - 1, 0), z, x]) / (min(y + 1, 2) - max(y - 1, 0))
            gz = (d[y, min(z + 1, 2), x] - d[y, max(z - 1, 0), x]) / (min(z + 1, 2) - max(z - 1, 0))
            return np.array([gx, gy, gz])

        total = grad(1, 1, 1)
        for dx, dy, dz in FACE_NEIGHBORS:
            total = total + grad(1 + dx, 1 + dy, 1 + dz)
        assert np.allclose(f.gradient, total / 7)

    def test_out_of_bounds_rejected(self):
        vol = Volume(np.zeros((2, 2, 2), dtype=np.int32))
        with pytest.raises(ValueError):
            neighborhood_features(vol, (0, 0, 5))


class TestExtractBand:
    def test_flat_surface_window(self):
        data = np.zeros((2, 300, 4), dtype=np.int32)
        vol = Volume(data)
        band = extract_band(vol, Surface(np.full((2, 4), 100.0)), above=10, below=20)
        assert band.zindex.shape == (2, 31, 4)
        assert band.zindex[0, 0, 0] == 90
        assert band.zindex[0, -1, 0] == 120
        assert (band.sample_counts() == 31).all()

    def test_face_clipping_keeps_slot_count(self):
        vol = Volume(np.zeros((1, 40, 2), dtype=np.int32))
        band = extract_band(vol, Surface(np.zeros((1, 2))), above=5, below=7)
        assert band.zindex.shape[1] == 13  # 5 + 7 + 1 slots survive clipping
        col = band.zindex[0, :, 0]
        assert (col[:5] == -1).all()
        assert col[5] == 0
        assert (band.sample_counts() == 8).all()

    def test_round_trip_coordinates(self, rng):
        data = rng.integers(0, 255, size=(8, 32, 8)).astype(np.int32)
        vol = Volume(data)
        surf = Surface(rng.uniform(0, 31, size=(8, 8)))
        band = extract_band(vol, surf, above=4, below=6)
        for y in range(8):
            for x in range(8):
                for k in range(11):
                    z = band.zindex[y, k, x]
                    if z >= 0:
                        assert band.values[y, k, x] == data[y, z, x]

    def test_half_to_even_rounding(self):
        vol = Volume(np.zeros((1, 10, 2), dtype=np.int32))
        zi = band_indices(Surface(np.array([[2.5, 3.5]])), 0, 0, 10)
        assert zi[0, 0, 0] == 2
        assert zi[0, 0, 1] == 4

    def test_undefined_surface_rejected(self):
        vol = Volume(np.zeros((1, 40, 2), dtype=np.int32))
        s = np.zeros((1, 2))
        s[0, 1] = np.nan
        with pytest.raises(ValueError, match="x=1"):
            extract_band(vol, Surface(s), 1, 1)
