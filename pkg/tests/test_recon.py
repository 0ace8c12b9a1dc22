import numpy as np
import pytest

from phaseless import phantom as ph
from phaseless.errors import ValidationError
from phaseless.geometry import make_chord, slice_geometry
from phaseless.radon import Sinogram, SliceImage, angle_grid, offset_grid, sample_truth, sinogram
from phaseless.recon import (Volume, extract_limit, metrics, reconstruct_slice, reconstruct_volume,
                             sinogram_from_data)
from phaseless.scatter import FrequencyLadder, PhaselessDataset, synthesize_dataset, usc_series
from phaseless.timedomain import QuadratureSpec, kernel_trace

LADDER = FrequencyLadder.geometric()


class TestExtractLimit:
    def test_pure_inverse(self):
        k = LADDER.k_values
        est = extract_limit(0.37 / k, LADDER)
        assert est.value == pytest.approx(0.37, abs=1e-15)
        assert est.residual < 1e-15

    def test_two_term_model(self):
        k = LADDER.k_values
        est = extract_limit(0.37 / k + 2.5 / k**2, LADDER)
        assert est.value == pytest.approx(0.37, abs=1e-13)
        assert est.slope == pytest.approx(2.5, abs=1e-10)

    def test_batched(self, rng):
        k = LADDER.k_values
        A, B = rng.uniform(0, 1, (5, 7)), rng.uniform(-3, 3, (5, 7))
        est = extract_limit((A[..., None] + B[..., None] / k) / k, LADDER)
        assert est.value.shape == (5, 7)
        assert np.allclose(est.value, A, atol=1e-13)

    def test_inverse_square_basis(self):
        k = LADDER.k_values
        est = extract_limit((0.2 - 30.0 / k**2) / k, LADDER, "inverse-square")
        assert est.value == pytest.approx(0.2, abs=1e-14)

    def test_series_chord(self, q_std, eq_slice):
        c = make_chord(eq_slice, 0.3, 0.25)
        tr = kernel_trace(q_std, c.x, c.x0, n_t=256, spec=QuadratureSpec(16, 16, 8), n_max=2)
        f = np.abs(usc_series(q_std, c.x, c.x0, LADDER.k_values, trace=tr))
        A = extract_limit(f, LADDER).value
        radon = ph.chord_integral(q_std, c, 16)
        assert 8 * np.pi * c.length * A == pytest.approx(radon, rel=0.02)

    def test_series_chord_inverse_square(self, q_std, eq_slice):
        c = make_chord(eq_slice, 0.3, 0.25)
        tr = kernel_trace(q_std, c.x, c.x0, n_t=256, spec=QuadratureSpec(16, 16, 8), n_max=2)
        f = np.abs(usc_series(q_std, c.x, c.x0, LADDER.k_values, trace=tr))
        A = extract_limit(f, LADDER, "inverse-square").value
        assert 8 * np.pi * c.length * A == pytest.approx(ph.chord_integral(q_std, c, 16), rel=0.002)

    def test_too_few_frequencies(self):
        with pytest.raises(ValidationError):
            extract_limit([1.0, 0.5], [10.0, 40.0])

    def test_narrow_span(self):
        with pytest.raises(ValidationError):
            extract_limit([1.0, 0.5, 0.3], [10.0, 20.0, 30.0])

    def test_non_finite(self):
        with pytest.raises(ValidationError):
            extract_limit([1.0, np.nan, 0.3], [10.0, 20.0, 40.0])

    def test_unknown_basis(self):
        with pytest.raises(ValidationError):
            extract_limit([1.0, 0.5, 0.3], [10.0, 20.0, 40.0], "log")


class TestSinogramFromData:
    def test_zero(self, q_zero, eq_slice):
        ds = synthesize_dataset(q_zero, eq_slice, 8, 8, LADDER)
        assert np.all(sinogram_from_data(ds).values == 0)

    def test_asymptotic_matches_forward(self, q_two, eq_slice):
        ds = synthesize_dataset(q_two, eq_slice, 36, 24, LADDER)
        sg, ref = sinogram_from_data(ds), sinogram(q_two, eq_slice, 36, 24)
        assert np.max(np.abs(sg.values - ref.values)) <= 1e-10 * np.max(ref.values)

    def test_layout_check(self, q_std, eq_slice):
        ds = synthesize_dataset(q_std, eq_slice, 8, 8, LADDER)
        with pytest.raises(ValidationError):
            sinogram_from_data(ds, sinogram_like=sinogram(q_std, eq_slice, 8, 10))

    def test_clamp(self, q_std, eq_slice):
        ds = synthesize_dataset(q_std, eq_slice, 8, 8, LADDER, noise_seed=1, noise_level=0.3)
        k = LADDER.k_values
        f = ds.f_values.copy()
        f[0, 0] = (0.5 / k - 0.001) / k   # positive samples, limit -0.001
        noisy = PhaselessDataset(ds.slice, ds.alphas, ds.offsets, ds.s_max, ds.ladder, f, "asymptotic")
        assert sinogram_from_data(noisy).values[0, 0] < 0
        assert sinogram_from_data(noisy, clamp=True).values[0, 0] == 0

    def test_series_dataset(self, q_std, eq_slice):
        ds = synthesize_dataset(q_std, eq_slice, 16, 16, LADDER, "series", spec=QuadratureSpec(16, 16, 8), n_max=1)
        sg, ref = sinogram_from_data(ds), sinogram(q_std, eq_slice, 16, 16)
        assert np.linalg.norm(sg.values - ref.values) <= 0.02 * np.linalg.norm(ref.values)


class TestReconstruct:
    def test_zero(self, eq_slice):
        sg = Sinogram(eq_slice, angle_grid(8), offset_grid(0.98, 8), np.zeros((8, 8)), 0.98)
        assert np.all(reconstruct_slice(sg, 16).values == 0)

    def test_asymptotic_end_to_end(self, q_std, eq_slice):
        ds = synthesize_dataset(q_std, eq_slice, 360, 256, LADDER)
        assert metrics(reconstruct_slice(sinogram_from_data(ds), 128), q_std)["rel_L2"] <= 0.06


class TestVolume:
    def test_single_slice(self, q_std, eq_slice):
        vol = reconstruct_volume([synthesize_dataset(q_std, eq_slice, 16, 16, LADDER)], 16)
        assert len(vol) == 1 and vol.heights[0] == 0.0

    def test_duplicate_heights(self, q_std, eq_slice):
        ds = synthesize_dataset(q_std, eq_slice, 8, 8, LADDER)
        with pytest.raises(ValidationError):
            reconstruct_volume([ds, ds], 8)

    def test_order_and_validation(self, eq_slice):
        img = SliceImage(eq_slice, np.zeros((4, 4)))
        with pytest.raises(ValidationError):
            Volume(1.0, ((0.2, img), (0.1, img)))

    def test_symmetric_slices(self):
        q = ph.Potential(1.0, (ph.Bump((0, 0, 0), 0.6, 1.0),))
        ds = [synthesize_dataset(q, slice_geometry(1.0, a), 180, 128, LADDER) for a in (-0.3, 0.3)]
        vol = reconstruct_volume(ds, 64)
        (_, lo), (_, hi) = vol.slices
        single = metrics(hi, q)["rel_L2"]
        assert np.linalg.norm(lo.values - hi.values) / np.linalg.norm(hi.values) <= 2 * single

    def test_empty_slice(self, q_std):
        g = slice_geometry(1.0, 0.7)   # the bump reaches |x3| <= 0.5 only
        vol = reconstruct_volume([synthesize_dataset(q_std, g, 90, 64, LADDER)], 64)
        assert np.max(np.abs(vol.slices[0][1].values)) <= 0.05 * ph.norms(q_std)[0]

    def test_no_cross_slice_leakage(self, q_two):
        gs = [slice_geometry(1.0, a) for a in (-0.2, 0.0, 0.2)]
        ds = [synthesize_dataset(q_two, g, 36, 24, LADDER) for g in gs]
        base = reconstruct_volume(ds, 32)
        d = ds[1]
        bumped = PhaselessDataset(d.slice, d.alphas, d.offsets, d.s_max, d.ladder, d.f_values * 1.5, d.model_tag)
        other = reconstruct_volume([ds[0], bumped, ds[2]], 32)
        for i in (0, 2):
            assert base.slices[i][1].values.tobytes() == other.slices[i][1].values.tobytes()
        assert not np.array_equal(base.slices[1][1].values, other.slices[1][1].values)

    def test_threaded_matches_serial(self, q_two):
        ds = [synthesize_dataset(q_two, slice_geometry(1.0, a), 36, 24, LADDER) for a in (-0.1, 0.1)]
        a, b = reconstruct_volume(ds, 32), reconstruct_volume(ds, 32, workers=2)
        assert all(x[1].values.tobytes() == y[1].values.tobytes() for x, y in zip(a, b))


class TestMetrics:
    def test_exact(self, q_std, eq_slice):
        img = SliceImage(eq_slice, sample_truth(q_std, eq_slice, 32))
        assert metrics(img, q_std) == {"rel_L2": 0.0, "rel_Linf": 0.0, "max_abs": 0.0}

    def test_zero_recon(self, q_std, eq_slice):
        assert metrics(SliceImage(eq_slice, np.zeros((32, 32))), q_std)["rel_L2"] == pytest.approx(1.0)

    def test_scaled(self, q_std, eq_slice):
        img = SliceImage(eq_slice, 1.1 * sample_truth(q_std, eq_slice, 32))
        assert metrics(img, q_std)["rel_Linf"] == pytest.approx(0.1)

    def test_geometry_mismatch(self, q_std):
        img = SliceImage(slice_geometry(2.0, 0.0), np.zeros((8, 8)))
        with pytest.raises(ValidationError):
            metrics(img, q_std)

    def test_volume(self, q_std, eq_slice):
        img = SliceImage(eq_slice, sample_truth(q_std, eq_slice, 16))
        m = metrics(Volume(1.0, ((0.0, img),)), q_std)
        assert m["volume"]["rel_L2"] == 0.0 and m["slices"][0]["a"] == 0.0
