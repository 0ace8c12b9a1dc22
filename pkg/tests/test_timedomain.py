import numpy as np
import pytest

from phaseless import phantom as ph
from phaseless.errors import ValidationError
from phaseless.geometry import ellipsoid_frame, make_chord, slice_geometry
from phaseless.timedomain import (NORM_INFLATION, KernelChain, QuadratureSpec, chord_boundary_value,
                                  graded_time_grid, kernel_trace, tail_bound, term_bound, terms_needed, w1, wn,
                                  wtilde)

from conftest import gauss_chord_integral

SPEC = QuadratureSpec(24, 24, 12)
COARSE = QuadratureSpec(16, 16, 8)


@pytest.fixture(scope="module")
def chord(eq_slice):
    return make_chord(eq_slice, 0.3, 0.25)


@pytest.fixture(scope="module")
def frame(chord):
    return ellipsoid_frame(chord.x, chord.x0)


@pytest.fixture(scope="module")
def q0(q_std):
    return ph.norms(q_std)[0] * NORM_INFLATION


class TestQuadratureSpec:
    def test_validation(self):
        with pytest.raises(ValidationError):
            QuadratureSpec(1, 4, 4)
        with pytest.raises(ValidationError):
            QuadratureSpec(4, 5, 4)

    def test_rules_integrate_constants(self):
        z, wz = SPEC.z_rule()
        phi, wphi = SPEC.phi_rule()
        assert wz.sum() == pytest.approx(1.0) and wphi * len(phi) == pytest.approx(2 * np.pi)


class TestFirstTerm:
    def test_zero(self, frame):
        assert w1(ph.zero_phantom(), frame, frame.rho + 0.3, SPEC) == 0.0

    def test_bound(self, q_std, frame, q0):
        for dt in np.linspace(1e-6, 2.0, 25):
            assert abs(w1(q_std, frame, frame.rho + dt, SPEC)) <= q0 / 2

    def test_cone_limit(self, q_std, chord, frame):
        t = frame.rho * (1 + 1e-6)
        oracle = -gauss_chord_integral(q_std, chord.x, chord.x0, 4000) / (2 * frame.rho)
        assert w1(q_std, frame, t, SPEC) == pytest.approx(oracle, rel=1e-4)

    def test_swap_symmetry(self, q_two, rng):
        g = slice_geometry(1.0, 0.1)
        for _ in range(5):
            c = make_chord(g, rng.uniform(0, 2 * np.pi), rng.uniform(-0.8, 0.8))
            f, b = ellipsoid_frame(c.x, c.x0), ellipsoid_frame(c.x0, c.x)
            t = f.rho + rng.uniform(0.01, 0.5)
            assert w1(q_two, f, t, SPEC) == pytest.approx(w1(q_two, b, t, SPEC), rel=1e-10, abs=1e-15)

    def test_quadrature_convergence(self, q_std, frame):
        # reference rule: 96 nodes in z and phi
        ref, fine = QuadratureSpec(96, 96, 2), QuadratureSpec(192, 192, 2)
        for t in (frame.rho * (1 + 1e-6), frame.rho + 0.05, frame.rho + 0.1):
            a, b = w1(q_std, frame, t, ref), w1(q_std, frame, t, fine)
            assert abs(a - b) < 1e-8 * abs(a)

    def test_inside_cone_rejected(self, q_std, frame):
        with pytest.raises(ValidationError):
            w1(q_std, frame, frame.rho, SPEC)


class TestSeriesTerms:
    def test_zero(self, frame):
        assert wn(ph.zero_phantom(), frame, frame.rho + 0.5, 2, spec=COARSE) == 0.0

    def test_second_term_bound(self, q_std, frame, q0):
        T = 4.0
        for dt in (0.05, 0.2, 0.5, 1.0, 1.5):
            v = wn(q_std, frame, frame.rho + dt, 2, spec=SPEC)
            assert abs(v) <= T * q0**2 / 4 * dt

    def test_second_term_vanishes_at_cone(self, q_std, frame):
        vals = [abs(wn(q_std, frame, frame.rho + d, 2, spec=SPEC)) for d in (1e-2, 1e-4, frame.rho * 1e-6)]
        assert vals[1] < vals[0] and vals[2] < vals[1]
        # vanishes at least linearly in t - rho
        assert vals[2] / (frame.rho * 1e-6) <= 2 * vals[0] / 1e-2

    def test_second_term_against_volume_integral(self, q_std, chord, frame):
        # w2 = -(1/4pi) int q(xi) w1(xi, x0, t - |x - xi|) / |x - xi| dxi over the ball of the bump
        from phaseless.timedomain import W1Kernel
        h = 0.02
        gr = np.arange(-0.5 + h / 2, 0.5, h)
        P = np.stack(np.meshgrid(gr, gr, gr, indexing="ij"), -1).reshape(-1, 3)
        P = P[np.sum(P**2, 1) < 0.25] + np.array([0.2, 0.0, 0.0])
        k1 = W1Kernel(q_std, chord.x0, QuadratureSpec(24, 24, 2))
        qv, dist = q_std(P), np.linalg.norm(chord.x - P, axis=1)
        r = np.linalg.norm(P - chord.x0, axis=1)
        t = frame.rho + 0.2
        live = t - dist > r
        w = np.zeros(len(P))
        w[live] = k1(P[live], (t - dist)[live])
        vol = -np.sum(qv * w / dist) * h**3 / (4 * np.pi)
        assert wn(q_std, frame, t, 2, spec=QuadratureSpec(24, 24, 16)) == pytest.approx(vol, rel=5e-3)

    def test_order_validation(self, q_std, frame):
        with pytest.raises(ValidationError):
            wn(q_std, frame, frame.rho + 0.1, 1)

    def test_lattice_chain_bound(self, q_std, chord, q0, rng):
        T = 4.0
        chain = KernelChain(q_std, chord.x0, COARSE, n_max=3, sigma_max=1.0)
        g = slice_geometry(1.0, 0.0)
        xs = g.point_at(rng.uniform(0, 2 * np.pi, 40))
        dt = rng.uniform(0.01, 1.0, 40)
        t = np.linalg.norm(xs - chord.x0, axis=1) + dt
        for n in (2, 3):
            assert np.all(np.abs(chain.term(n, xs, t)) <= term_bound(q0, T, dt, n))


class TestTruncation:
    def test_term_bound_values(self):
        assert term_bound(1.0, 4.0, 0.5, 1) == 0.5
        assert term_bound(1.0, 4.0, 0.5, 3) == pytest.approx(4**2 * 0.25 / 8)

    def test_tail_matches_series(self):
        q0, T, dt = 0.9, 3.0, 0.4
        direct = sum(term_bound(q0, T, dt, n) for n in range(4, 60))
        assert tail_bound(q0, T, dt, 3) == pytest.approx(direct, rel=1e-12)

    def test_truncation_order_grows_with_tolerance(self):
        n_loose, _ = terms_needed(1.0, 4.0, 0.5, 1e-1, n_max=40)
        n_tight, b = terms_needed(1.0, 4.0, 0.5, 1e-8, n_max=40)
        assert n_tight > n_loose and b < 1e-8

    def test_four_terms_reach_tolerance_at_desk_scale(self):
        # q0 = 1, T = 4, t - rho = 0.5, tol = 1e-8
        n, bound = terms_needed(1.0, 4.0, 0.5, 1e-8, n_max=4)
        assert n <= 4 and bound < 1e-8

    def test_wtilde_zero(self, frame):
        assert wtilde(ph.zero_phantom(), frame, frame.rho + 0.5) == (0.0, 1, 0.0)

    def test_wtilde_at_cone(self, q_std, chord, frame):
        t = frame.rho * (1 + 1e-6)
        value, n, bound = wtilde(q_std, frame, t, 1e-8, SPEC)
        z, w = np.polynomial.legendre.leggauss(64)
        oracle = -0.5 * gauss_chord_integral(q_std, chord.x, chord.x0, 4000) / chord.length
        assert value == pytest.approx(oracle, rel=1e-4)
        assert bound < 1e-8

    def test_wtilde_reports_capped_bound(self, q_std, frame):
        value, n, bound = wtilde(q_std, frame, frame.rho + 0.5, 1e-8, COARSE, T=4.0, n_max=2)
        assert n == 2 and bound == pytest.approx(tail_bound(ph.norms(q_std)[0] * NORM_INFLATION, 4.0, 0.5, 2))

    def test_zero_before_ellipsoid_meets_support(self):
        q = ph.Potential(3.0, (ph.Bump((0, 0, 0), 0.5, 1.0),))
        c = make_chord(slice_geometry(3.0, 0.0), 1.0, 2.0)
        d = np.random.default_rng(0).normal(size=(20000, 3))
        shell = 0.5 * d / np.linalg.norm(d, axis=1)[:, None]
        reach = np.min(np.linalg.norm(shell - c.x, axis=1) + np.linalg.norm(shell - c.x0, axis=1))
        fr = ellipsoid_frame(c.x, c.x0)
        assert reach > fr.rho
        for t in np.linspace(fr.rho * 1.001, reach * 0.99, 5):
            assert wtilde(q, fr, t, 1e-8, COARSE, n_max=2)[0] == 0.0


class TestTrace:
    def test_zero(self, chord):
        tr = kernel_trace(ph.zero_phantom(), chord.x, chord.x0, n_t=32)
        assert np.all(tr.wtilde_values == 0)

    def test_first_value(self, q_std, chord):
        tr = kernel_trace(q_std, chord.x, chord.x0, n_t=64, spec=COARSE, n_max=1)
        oracle = -0.5 * gauss_chord_integral(q_std, chord.x, chord.x0, 4000) / chord.length
        assert tr.wtilde_values[0] == pytest.approx(oracle, rel=1e-10)
        assert tr.wtilde_values[0] == pytest.approx(chord_boundary_value(q_std, chord.x, chord.x0), rel=1e-12)

    def test_first_value_matches_quadrature_limit(self, q_std, chord):
        tr = kernel_trace(q_std, chord.x, chord.x0, n_t=64, spec=SPEC, n_max=1)
        assert tr.wtilde_values[1] == pytest.approx(tr.wtilde_values[0], rel=0.05)

    def test_continuity_refinement(self, q_std, chord):
        jumps = []
        for n_t in (64, 128, 256):
            tr = kernel_trace(q_std, chord.x, chord.x0, n_t=n_t, spec=SPEC, n_max=1)
            jumps.append(np.max(np.abs(np.diff(tr.wtilde_values))))
        assert jumps[1] < jumps[0] and jumps[2] < jumps[1]

    def test_graded_grid(self):
        t = graded_time_grid(1.0, 3.0, 100)
        assert t[0] == 1.0 and t[-1] == pytest.approx(3.0)
        h = np.diff(t)
        assert np.all(h > 0)
        assert np.allclose(h[1:12] / h[:11], 1.3)

    def test_terms_within_bound(self, q_std, chord, q0):
        tr = kernel_trace(q_std, chord.x, chord.x0, n_t=64, spec=COARSE, n_max=2)
        T = tr.t_grid[-1]
        dt = tr.t_grid - tr.rho
        assert np.all(np.abs(tr.term_values[1]) <= term_bound(q0, T, dt, 2) + 1e-300)

    def test_csv(self, q_std, chord, tmp_path):
        tr = kernel_trace(q_std, chord.x, chord.x0, n_t=32, spec=COARSE, n_max=2)
        tr.to_csv(tmp_path / "trace.csv")
        data = np.loadtxt(tmp_path / "trace.csv", delimiter=",", skiprows=1)
        assert data.shape == (len(tr.t_grid), 4)
        assert (tmp_path / "trace.csv").read_text().startswith("t,wtilde,w1,w2")
