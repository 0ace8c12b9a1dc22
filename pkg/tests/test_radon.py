import numpy as np
import pytest

from phaseless import phantom as ph
from phaseless.errors import ValidationError
from phaseless.geometry import slice_geometry
from phaseless.radon import (Sinogram, angle_grid, fbp_invert, radon_forward, sample_truth, sinogram)


def rel_l2(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


def roundtrip(q, g, n_alpha, n_s, n_image):
    img = fbp_invert(sinogram(q, g, n_alpha, n_s), n_image)
    return rel_l2(img.values, sample_truth(q, g, n_image)), img


@pytest.fixture(scope="module")
def reference(q_std, eq_slice):
    return roundtrip(q_std, eq_slice, 360, 256, 128)


class TestForward:
    def test_zero(self, eq_slice):
        a = np.linspace(0.1, 6.2, 5)
        assert np.all(radon_forward(ph.zero_phantom(), eq_slice, a, 0.3) == 0)

    def test_unit_bump_diameter(self, eq_slice):
        q = ph.Potential(1.0, (ph.Bump((0, 0, 0), 1.0, 1.0),))
        assert radon_forward(q, eq_slice, 1.234, 0.0) == pytest.approx(512 / 693, abs=1e-14)

    def test_rotation_invariance_of_radial(self, eq_slice):
        q = ph.Potential(1.0, (ph.Bump((0, 0, 0), 0.6, 1.0),))
        vals = radon_forward(q, eq_slice, np.linspace(0.01, 2 * np.pi, 17), 0.25)
        assert np.ptp(vals) < 1e-10

    def test_closed_form_offset(self, eq_slice):
        # (1 - (d^2 + u^2)/R^2)^5 integrated over u: R h^11 512/693 with h^2 = 1 - d^2/R^2
        R, d = 0.6, 0.25
        q = ph.Potential(1.0, (ph.Bump((0, 0, 0), R, 0.7),))
        h = np.sqrt(1 - d * d / R**2)
        assert radon_forward(q, eq_slice, 0.9, d) == pytest.approx(0.7 * R * h**11 * 512 / 693, rel=1e-13)

    def test_tangent_rejected(self, q_std, eq_slice):
        with pytest.raises(ValidationError):
            radon_forward(q_std, eq_slice, 1.0, 1.0)


class TestSinogram:
    def test_zero(self, eq_slice):
        assert np.all(sinogram(ph.zero_phantom(), eq_slice, 8, 8).values == 0)

    def test_grid_validation(self, q_std, eq_slice):
        with pytest.raises(ValidationError):
            sinogram(q_std, eq_slice, 3, 16)

    def test_mass_consistency(self, eq_slice):
        # the slice through a bump centred in the plane integrates to pi R^2 / 6
        R = 0.5
        q = ph.Potential(1.0, (ph.Bump((0.2, 0, 0), R, 1.0),))
        sg = sinogram(q, eq_slice, 16, 256)
        mass = sg.values.sum(axis=1) * sg.ds
        assert np.allclose(mass, np.pi * R * R / 6, rtol=0.01)

    def test_mass_against_2d_quadrature(self, q_two):
        g = slice_geometry(1.0, 0.05)
        sg = sinogram(q_two, g, 12, 256)
        n = 800
        c = -g.B_a + (np.arange(n) + 0.5) * 2 * g.B_a / n
        y1, y2 = np.meshgrid(c, c)
        ref = q_two(np.stack([y1, y2, np.full_like(y1, g.a)], -1)).sum() * (2 * g.B_a / n) ** 2
        assert np.allclose(sg.values.sum(axis=1) * sg.ds, ref, rtol=0.01)

    def test_evenness(self, q_two, eq_slice):
        sg = sinogram(q_two, eq_slice, 64, 50)
        flipped = np.roll(sg.values, -32, axis=0)[:, ::-1]
        assert np.allclose(sg.values, flipped, atol=1e-13)

    def test_angle_grid(self):
        a = angle_grid(4)
        assert a[-1] == 2 * np.pi and a[0] > 0


class TestFBP:
    def test_zero(self, eq_slice):
        sg = sinogram(ph.zero_phantom(), eq_slice, 16, 16)
        assert np.all(fbp_invert(sg, 16).values == 0)

    def test_roundtrip_reference(self, reference):
        err, _ = reference
        assert err <= 0.05

    def test_overshoot(self, reference):
        _, img = reference
        assert img.values.min() >= -0.05 * img.values.max()

    def test_linearity(self, q_std, q_two, eq_slice):
        s1, s2 = sinogram(q_std, eq_slice, 60, 40), sinogram(q_two, eq_slice, 60, 40)
        lhs = fbp_invert(s1.with_values(s1.values + s2.values), 32).values
        rhs = fbp_invert(s1, 32).values + fbp_invert(s2, 32).values
        assert np.max(np.abs(lhs - rhs)) <= 1e-10

    def test_rotation_equivariance(self, eq_slice):
        # rotating the phantom by m angle steps shifts the sinogram by m rows
        m, n_alpha = 5, 60
        d = 2 * np.pi * m / n_alpha
        c = np.array([0.3, 0.1, 0.0])
        rot = np.array([[np.cos(d), -np.sin(d), 0], [np.sin(d), np.cos(d), 0], [0, 0, 1]])
        q = ph.Potential(1.0, (ph.Bump(c, 0.4, 1.0),))
        q_rot = ph.Potential(1.0, (ph.Bump(rot @ c, 0.4, 1.0),))
        a = sinogram(q, eq_slice, n_alpha, 48).values
        b = sinogram(q_rot, eq_slice, n_alpha, 48).values
        assert np.allclose(np.roll(a, m, axis=0), b, atol=1e-12)

    def test_error_decreases_with_resolution(self, q_std, eq_slice, reference):
        errs = [roundtrip(q_std, eq_slice, *r)[0] for r in ((90, 64, 32), (180, 128, 64))] + [reference[0]]
        assert errs[1] <= errs[0] * 1.1 and errs[2] <= errs[1] * 1.1

    def test_rejects_non_finite(self, q_std, eq_slice):
        sg = sinogram(q_std, eq_slice, 8, 8)
        bad = sg.values.copy()
        bad[0, 0] = np.nan
        with pytest.raises(ValidationError):
            fbp_invert(sg.with_values(bad), 8)

    def test_rejects_degenerate_grid(self, eq_slice):
        sg = Sinogram(eq_slice, angle_grid(4), np.array([-0.1, 0.1]), np.zeros((4, 2)), 0.9)
        with pytest.raises(ValidationError):
            fbp_invert(sg, 8)

    def test_unknown_apodization(self, q_std, eq_slice):
        with pytest.raises(ValidationError):
            fbp_invert(sinogram(q_std, eq_slice, 8, 8), 8, apodization="cosine")
