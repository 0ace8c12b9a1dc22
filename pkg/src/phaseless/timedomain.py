"""Regular part of the fundamental solution of ``w_tt = Lap w - q w + 4 pi delta``.

Above the light cone ``t > rho = |x - x0|`` the regular part is the series
``w1 + w2 + ...``.  ``w1`` averages ``q`` over the ellipsoid
``|x - xi| + |x0 - xi| = t`` and each further term integrates
``r q(xi) w_{n-1}(xi, x0, t - tau + r)`` over the family of ellipsoids with
``rho < tau < t``.  All integrals use the ``(z, phi)`` parametrization in
which ``r = (tau - rho + 2 z rho) / 2``: Gauss-Legendre in ``z`` and ``tau``,
the periodic trapezoid rule in ``phi``.

The inner kernel ``w_{n-1}(., x0, .)`` always shares the source ``x0``.
Terms of order two and higher are therefore tabulated once per source on a
lattice over ``supp q`` times the cone offset ``sigma = t - |xi - x0|`` and
interpolated multilinearly (:class:`LatticeCache`).
"""

from __future__ import annotations

import logging
import math
import threading
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy.special import gammainc

from .errors import ValidationError
from .geometry import EllipsoidFrame, ellipsoid_cos_theta, rotation_matrix, spherical_angles
from .phantom import Potential, norms

log = logging.getLogger(__name__)

FOUR_PI = 4.0 * np.pi
N_MAX = 4
NORM_INFLATION = 1.05


@dataclass(frozen=True)
class QuadratureSpec:
    n_z: int = 24
    n_phi: int = 24
    n_tau: int = 12

    def __post_init__(self):
        if min(self.n_z, self.n_phi, self.n_tau) < 2:
            raise ValidationError("quadrature node counts must all be >= 2")
        if self.n_phi % 2:
            raise ValidationError("n_phi must be even")

    def z_rule(self):
        x, w = np.polynomial.legendre.leggauss(self.n_z)
        return 0.5 * (x + 1.0), 0.5 * w

    def tau_rule(self):
        x, w = np.polynomial.legendre.leggauss(self.n_tau)
        return 0.5 * (x + 1.0), 0.5 * w

    def phi_rule(self):
        phi = 2.0 * np.pi * np.arange(self.n_phi) / self.n_phi
        return phi, 2.0 * np.pi / self.n_phi


# bound on the series terms ------------------------------------------------

def term_bound(q0: float, T: float, dt, n: int):
    """Analytic bound ``q0^n T^(n-1) dt^(n-1) / (4 (n-1)!)`` on ``|w_n|``."""
    if n == 1:
        return 0.5 * q0 * np.ones_like(np.asarray(dt, dtype=float))
    return q0**n * T ** (n - 1) * np.asarray(dt, dtype=float) ** (n - 1) / (4.0 * math.factorial(n - 1))


def tail_bound(q0: float, T: float, dt: float, n_terms: int) -> float:
    """Bound on ``sum_{n > n_terms} |w_n|`` implied by :func:`term_bound`."""
    if q0 == 0.0 or dt <= 0.0:
        return 0.0
    x = q0 * T * dt
    # sum_{m >= N} x^m / m! = e^x P(N, x)
    return float(0.25 * q0 * np.exp(x) * gammainc(n_terms, x))


def terms_needed(q0: float, T: float, dt: float, tol: float, n_max: int = N_MAX):
    """Smallest truncation order whose analytic tail is below ``tol``.

    Returns ``(n_terms, bound)``; the order is capped at ``n_max`` and the
    bound then reports the tail actually left out.
    """
    n = 1
    bound = tail_bound(q0, T, dt, n)
    while bound >= tol and n < n_max:
        n += 1
        bound = tail_bound(q0, T, dt, n)
    return n, bound


# ellipsoid quadrature kernels ---------------------------------------------

@numba.njit(cache=True, nogil=True)
def _q_at(g0, g1, g2, centers, radii2, amps):
    qv = 0.0
    for k in range(centers.shape[0]):
        e0 = g0 - centers[k, 0]
        e1 = g1 - centers[k, 1]
        e2 = g2 - centers[k, 2]
        u = 1.0 - (e0 * e0 + e1 * e1 + e2 * e2) / radii2[k]
        if u > 0.0:
            qv += amps[k] * u * u * u * u * u
    return qv


@numba.njit(cache=True, nogil=True)
def _frame(d0, d1, d2, rho):
    """Rows of ``A(vartheta, psi)`` for the direction ``d / rho``."""
    planar = math.sqrt(d0 * d0 + d1 * d1)
    cv = d2 / rho
    sv = planar / rho
    if planar > 0.0:
        cp = d0 / planar
        sp = d1 / planar
    else:
        cp = 1.0
        sp = 0.0
    return -cv * cp, -cv * sp, sv, sp, -cp, sv * cp, sv * sp, cv


@numba.njit(cache=True, nogil=True)
def _ellipsoid_sum(x, x0, t, centers, radii2, amps, zn, zw, cphi, sphi, wphi):
    """``int int q(xi) dphi dz`` over the ellipsoid of one (x, t)."""
    d0 = x[0] - x0[0]
    d1 = x[1] - x0[1]
    d2 = x[2] - x0[2]
    rho = math.sqrt(d0 * d0 + d1 * d1 + d2 * d2)
    if rho <= 0.0:
        return 0.0
    t = max(t, rho)
    a00, a01, a02, a10, a11, a20, a21, a22 = _frame(d0, d1, d2, rho)
    acc = 0.0
    for iz in range(zn.shape[0]):
        den = t - rho + 2.0 * zn[iz] * rho
        r = 0.5 * den
        ct = min(1.0, max(-1.0, (rho - t + 2.0 * zn[iz] * t) / den))
        st = math.sqrt(1.0 - ct * ct)
        row = 0.0
        for ip in range(cphi.shape[0]):
            l0 = st * cphi[ip]
            l1 = st * sphi[ip]
            row += _q_at(x0[0] + r * (l0 * a00 + l1 * a10 + ct * a20),
                         x0[1] + r * (l0 * a01 + l1 * a11 + ct * a21),
                         x0[2] + r * (l0 * a02 + ct * a22), centers, radii2, amps)
        acc += zw[iz] * row
    return acc * wphi


@numba.njit(cache=True, nogil=True)
def _ellipsoid_w1_sum(x, x0, tau, t, centers, radii2, amps, zn, zw, cphi, sphi, wphi,
                      izn, izw, icphi, isphi, iwphi):
    """``int int r q(xi) w1(xi, x0, t - tau + r) dphi dz`` over one ellipsoid.

    The inner ``w1`` uses the second quadrature rule.
    """
    d0 = x[0] - x0[0]
    d1 = x[1] - x0[1]
    d2 = x[2] - x0[2]
    rho = math.sqrt(d0 * d0 + d1 * d1 + d2 * d2)
    a00, a01, a02, a10, a11, a20, a21, a22 = _frame(d0, d1, d2, rho)
    xi = np.empty(3)
    acc = 0.0
    for iz in range(zn.shape[0]):
        den = tau - rho + 2.0 * zn[iz] * rho
        r = 0.5 * den
        ct = min(1.0, max(-1.0, (rho - tau + 2.0 * zn[iz] * tau) / den))
        st = math.sqrt(1.0 - ct * ct)
        row = 0.0
        for ip in range(cphi.shape[0]):
            l0 = st * cphi[ip]
            l1 = st * sphi[ip]
            xi[0] = x0[0] + r * (l0 * a00 + l1 * a10 + ct * a20)
            xi[1] = x0[1] + r * (l0 * a01 + l1 * a11 + ct * a21)
            xi[2] = x0[2] + r * (l0 * a02 + ct * a22)
            qv = _q_at(xi[0], xi[1], xi[2], centers, radii2, amps)
            if qv > 0.0:
                w1 = -_ellipsoid_sum(xi, x0, t - tau + r, centers, radii2, amps,
                                     izn, izw, icphi, isphi, iwphi) / (4.0 * math.pi)
                row += r * qv * w1
        acc += zw[iz] * row
    return acc * wphi


@numba.njit(cache=True, nogil=True)
def _ellipsoid_q_integral(xs, x0, ts, centers, radii2, amps, zn, zw, cphi, sphi, wphi):
    """``int_0^1 int_0^2pi q(xi) dphi dz`` on the ellipsoid of each (x, t)."""
    out = np.zeros(xs.shape[0])
    for p in range(xs.shape[0]):
        out[p] = _ellipsoid_sum(xs[p], x0, ts[p], centers, radii2, amps, zn, zw, cphi, sphi, wphi)
    return out


@numba.njit(cache=True, nogil=True)
def _second_term(xs, x0, ts, centers, radii2, amps, un, uw, zn, zw, cphi, sphi, wphi,
                 izn, izw, icphi, isphi, iwphi):
    """``w2`` at each (x, t) with the exact ``w1`` kernel inside."""
    out = np.zeros(xs.shape[0])
    for p in range(xs.shape[0]):
        d0 = xs[p, 0] - x0[0]
        d1 = xs[p, 1] - x0[1]
        d2 = xs[p, 2] - x0[2]
        rho = math.sqrt(d0 * d0 + d1 * d1 + d2 * d2)
        span = ts[p] - rho
        if span <= 0.0:
            continue
        acc = 0.0
        for iu in range(un.shape[0]):
            tau = rho + span * un[iu]
            acc += uw[iu] * _ellipsoid_w1_sum(xs[p], x0, tau, ts[p], centers, radii2, amps, zn, zw, cphi, sphi,
                                              wphi, izn, izw, icphi, isphi, iwphi)
        out[p] = -acc * span / (4.0 * math.pi)
    return out


def ellipsoid_nodes(xs, x0, ts, z, phi):
    """Ellipsoid points for a batch of ``(x, t)`` pairs sharing source ``x0``.

    Returns ``xi`` of shape ``(P, len(z), len(phi), 3)`` and the focal radii
    ``r`` of shape ``(P, len(z))``.
    """
    rho, vartheta, psi = spherical_angles(xs - x0)
    A = rotation_matrix(vartheta, psi)                            # (P, 3, 3)
    r = 0.5 * (ts[:, None] - rho[:, None] + 2.0 * z * rho[:, None])
    ct = ellipsoid_cos_theta(ts[:, None], rho[:, None], z)
    st = np.sqrt(1.0 - ct * ct)
    local = np.stack(np.broadcast_arrays(
        st[:, :, None] * np.cos(phi), st[:, :, None] * np.sin(phi), ct[:, :, None]), axis=-1)
    xi = x0 + r[:, :, None, None] * np.einsum("pzfk,pkj->pzfj", local, A)
    return xi, r


class W1Kernel:
    """``w1(., x0, .)`` for a fixed source, evaluated by direct quadrature."""

    order = 1

    def __init__(self, q: Potential, x0, spec: QuadratureSpec):
        self.q = q
        self.x0 = np.asarray(x0, dtype=float)
        self.spec = spec
        self._zn, self._zw = spec.z_rule()
        phi, self._wphi = spec.phi_rule()
        self._cphi, self._sphi = np.cos(phi), np.sin(phi)

    def __call__(self, points, times):
        points = np.ascontiguousarray(points, dtype=float).reshape(-1, 3)
        times = np.ascontiguousarray(times, dtype=float).reshape(-1)
        if not self.q.terms:
            return np.zeros(len(times))
        r2 = self.q.radii ** 2
        val = _ellipsoid_q_integral(points, self.x0, times, self.q.centers, r2, self.q.amplitudes,
                                    self._zn, self._zw, self._cphi, self._sphi, self._wphi)
        return -val / FOUR_PI


class SeriesTermKernel:
    """``w_n(., x0, .)`` for ``n >= 2`` from a kernel for ``w_{n-1}``."""

    def __init__(self, q: Potential, x0, n: int, prev, spec: QuadratureSpec, chunk_nodes: int = 400_000):
        if n < 2:
            raise ValidationError("series recursion needs n >= 2")
        self.q = q
        self.x0 = np.asarray(x0, dtype=float)
        self.order = n
        self.prev = prev
        self.spec = spec
        self.chunk_nodes = chunk_nodes

    def __call__(self, points, times):
        points = np.asarray(points, dtype=float).reshape(-1, 3)
        times = np.asarray(times, dtype=float).reshape(-1)
        out = np.zeros(len(times))
        if self.q.is_zero:
            return out
        s = self.spec
        per_point = s.n_tau * s.n_z * s.n_phi
        step = max(1, self.chunk_nodes // per_point)
        for start in range(0, len(times), step):
            sl = slice(start, start + step)
            out[sl] = self._batch(points[sl], times[sl])
        return out

    def _batch(self, xs, ts):
        if isinstance(self.prev, W1Kernel):
            return self._second(xs, ts)
        s = self.spec
        rho = np.linalg.norm(xs - self.x0, axis=-1)
        live = ts > rho
        out = np.zeros(len(ts))
        if not np.any(live):
            return out
        xs, ts, rho = xs[live], ts[live], rho[live]
        u, wu = s.tau_rule()
        z, wz = s.z_rule()
        phi, wphi = s.phi_rule()
        span = ts - rho
        tau = rho[:, None] + span[:, None] * u                      # (P, n_tau)
        P = len(ts)
        xs_rep = np.repeat(xs, s.n_tau, axis=0)
        xi, r = ellipsoid_nodes(xs_rep, self.x0, tau.reshape(-1), z, phi)
        xi = xi.reshape(P, s.n_tau, s.n_z, s.n_phi, 3)
        r = r.reshape(P, s.n_tau, s.n_z)
        qv = self.q(xi)
        inner = np.zeros_like(qv)
        mask = qv > 0.0
        if np.any(mask):
            t_inner = (ts[:, None, None] - tau[:, :, None] + r)[..., None]
            t_inner = np.broadcast_to(t_inner, qv.shape)
            inner[mask] = self.prev(xi[mask], t_inner[mask])
        integrand = (r[..., None] * qv * inner).sum(axis=-1) * wphi     # (P, n_tau, n_z)
        integrand = integrand @ wz                                       # (P, n_tau)
        out[live] = -(integrand @ wu) * span / FOUR_PI
        return out


    def _second(self, xs, ts):
        s, inner = self.spec, self.prev
        un, uw = s.tau_rule()
        zn, zw = s.z_rule()
        phi, wphi = s.phi_rule()
        q = self.q
        return _second_term(np.ascontiguousarray(xs), self.x0, np.ascontiguousarray(ts), q.centers, q.radii ** 2,
                            q.amplitudes, un, uw, zn, zw, np.cos(phi), np.sin(phi), wphi,
                            inner._zn, inner._zw, inner._cphi, inner._sphi, inner._wphi)


class LatticeCache:
    """Memoized kernel on a lattice keyed by quantized ``(xi, sigma)``.

    ``sigma = t - |xi - x0|`` is the offset above the cone of ``xi``.  Lattice
    values are computed on demand, in batches, from the wrapped kernel and
    never recomputed; queries interpolate multilinearly between the 16
    surrounding nodes.  Concurrent readers are fine; inserts take a lock.
    """

    def __init__(self, kernel, box_lo, box_hi, h: float, dsigma: float, sigma_max: float):
        self.kernel = kernel
        self.order = kernel.order
        self.x0 = kernel.x0
        self.h = float(h)
        self.dsigma = float(dsigma)
        self.lo = np.asarray(box_lo, dtype=float) - self.h
        hi = np.asarray(box_hi, dtype=float) + self.h
        self.shape_xyz = tuple(int(np.ceil((hi[k] - self.lo[k]) / self.h)) + 1 for k in range(3))
        n_sigma = int(np.ceil(sigma_max / self.dsigma)) + 2
        self.values = np.full(self.shape_xyz + (n_sigma,), np.nan)
        self._lock = threading.Lock()
        self.evaluations = 0

    def _ensure_sigma(self, n_needed):
        if n_needed > self.values.shape[3]:
            extra = np.full(self.shape_xyz + (n_needed - self.values.shape[3],), np.nan)
            self.values = np.concatenate([self.values, extra], axis=3)

    def __call__(self, points, times):
        points = np.asarray(points, dtype=float).reshape(-1, 3)
        times = np.asarray(times, dtype=float).reshape(-1)
        sigma = np.maximum(times - np.linalg.norm(points - self.x0, axis=-1), 0.0)
        pos = (points - self.lo) / self.h
        base = np.floor(pos).astype(np.int64)
        upper = np.array(self.shape_xyz) - 2
        if np.any(base < 0) or np.any(base > upper):
            raise ValidationError("lattice cache queried outside the support box of q")
        frac = pos - base
        spos = sigma / self.dsigma
        sbase = np.floor(spos).astype(np.int64)
        sfrac = spos - sbase

        corners = np.array([[i, j, k, l] for i in (0, 1) for j in (0, 1) for k in (0, 1) for l in (0, 1)])
        idx = np.concatenate([base, sbase[:, None]], axis=1)[:, None, :] + corners   # (M, 16, 4)
        with self._lock:
            self._ensure_sigma(int(idx[..., 3].max()) + 1 if len(idx) else 0)
            flat = np.ravel_multi_index(tuple(idx.reshape(-1, 4).T), self.values.shape)
            missing = np.unique(flat[np.isnan(self.values.reshape(-1)[flat])])
            if len(missing):
                self._fill(missing)
            vals = self.values.reshape(-1)[flat].reshape(-1, 16)

        wx = np.stack([1.0 - frac, frac], axis=-1)                      # (M, 3, 2)
        ws = np.stack([1.0 - sfrac, sfrac], axis=-1)                    # (M, 2)
        weights = (wx[:, 0, corners[:, 0]] * wx[:, 1, corners[:, 1]]
                   * wx[:, 2, corners[:, 2]] * ws[:, corners[:, 3]])
        return np.sum(weights * vals, axis=1)

    def _fill(self, flat_idx):
        i, j, k, l = np.unravel_index(flat_idx, self.values.shape)
        nodes = self.lo + self.h * np.stack([i, j, k], axis=-1)
        t = np.linalg.norm(nodes - self.x0, axis=-1) + l * self.dsigma
        self.values.reshape(-1)[flat_idx] = self.kernel(nodes, t)
        self.evaluations += len(flat_idx)


@dataclass
class KernelChain:
    """Kernels for ``w_1 .. w_n_max`` sharing one source ``x0``.

    ``direct[n]`` evaluates ``w_n`` by quadrature at arbitrary points;
    ``inner[n]`` is what ``w_{n+1}`` integrates against (exact for ``n = 1``,
    lattice-cached above).
    """

    q: Potential
    x0: np.ndarray
    spec: QuadratureSpec
    n_max: int = N_MAX
    cache_h: float = 0.1
    cache_dsigma: float = 0.1
    sigma_max: float = 4.0
    direct: dict = field(default_factory=dict)
    inner: dict = field(default_factory=dict)

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, dtype=float)
        self.direct[1] = self.inner[1] = W1Kernel(self.q, self.x0, self.spec)
        box = self.q.bounding_box()
        for n in range(2, self.n_max + 1):
            self.direct[n] = SeriesTermKernel(self.q, self.x0, n, self.inner[n - 1], self.spec)
            if box is None:
                self.inner[n] = self.direct[n]
            else:
                self.inner[n] = LatticeCache(self.direct[n], box[0], box[1], self.cache_h,
                                             self.cache_dsigma, self.sigma_max)

    def term(self, n, points, times):
        return self.direct[n](points, times)


# public operations ----------------------------------------------------------

def _check_cone(fr: EllipsoidFrame, t: float):
    if not t > fr.rho:
        raise ValidationError(f"t={t} must exceed rho={fr.rho}")


def w1(q: Potential, fr: EllipsoidFrame, t: float, spec: QuadratureSpec = QuadratureSpec()) -> float:
    """First series term ``-(1/4pi) int int q(xi) dphi dz``."""
    _check_cone(fr, t)
    return float(W1Kernel(q, fr.x0, spec)(fr.x[None], [t])[0])


def wn(q: Potential, fr: EllipsoidFrame, t: float, n: int, prev=None,
       spec: QuadratureSpec = QuadratureSpec()) -> float:
    """Series term of order ``n >= 2``.

    ``prev`` evaluates ``w_{n-1}(points, x0, times)``; by default the exact
    ``w1`` kernel is used for ``n = 2`` and a cached chain otherwise.
    """
    _check_cone(fr, t)
    if n < 2:
        raise ValidationError("wn needs n >= 2; use w1 for the first term")
    if prev is None:
        chain = KernelChain(q, fr.x0, spec, n_max=n, sigma_max=t - fr.rho)
        prev = chain.inner[n - 1]
    return float(SeriesTermKernel(q, fr.x0, n, prev, spec)(fr.x[None], [t])[0])


def wtilde(q: Potential, fr: EllipsoidFrame, t: float, tol: float = 1e-8,
           spec: QuadratureSpec = QuadratureSpec(), T: float | None = None, n_max: int = N_MAX,
           chain: KernelChain | None = None):
    """Truncated series value with its analytic tail bound.

    Returns ``(value, n_used, remainder_bound)``.  ``T`` is the time
    horizon entering the bound (defaults to ``t``).
    """
    _check_cone(fr, t)
    if not tol > 0:
        raise ValidationError("tol must be positive")
    q0 = norms(q)[0] * NORM_INFLATION if q.terms else 0.0
    T = t if T is None else T
    n_used, bound = terms_needed(q0, T, t - fr.rho, tol, n_max)
    if q0 == 0.0:
        return 0.0, 1, 0.0
    if chain is None:
        chain = KernelChain(q, fr.x0, spec, n_max=n_used, sigma_max=t - fr.rho)
    value = sum(float(chain.term(n, fr.x[None], [t])[0]) for n in range(1, n_used + 1))
    if bound >= tol:
        log.info("series truncated at n=%d with tail bound %.3g >= tol %.3g", n_used, bound, tol)
    return value, n_used, bound


def chord_boundary_value(q: Potential, x, x0, n_quad: int = 16) -> float:
    """Limit of the regular part at ``t -> rho+``: ``-(1/2) int_0^1 q dz``."""
    from .phantom import line_integral

    rho = float(np.linalg.norm(np.subtract(x, x0)))
    return -0.5 * line_integral(q, x, x0, n_quad) / rho


@dataclass(frozen=True)
class KernelEvaluation:
    x: np.ndarray
    x0: np.ndarray
    rho: float
    t_grid: np.ndarray
    wtilde_values: np.ndarray
    n_terms: int
    remainder_bound: float
    term_values: np.ndarray | None = None

    def to_csv(self, path):
        header = "t,wtilde" + "".join(f",w{n}" for n in range(1, self.n_terms + 1))
        cols = [self.t_grid, self.wtilde_values]
        if self.term_values is not None:
            cols += list(self.term_values)
        np.savetxt(path, np.column_stack(cols), delimiter=",", header=header, comments="")


def graded_time_grid(rho: float, T: float, n_t: int, ratio: float = 1.3, n_graded: int = 12):
    """``rho`` followed by geometrically growing steps, then a uniform mesh.

    ``n_t`` uniform intervals cover ``[rho, T]``; the first one is replaced
    by ``n_graded`` steps growing by ``ratio`` towards the uniform step.
    """
    if not T > rho:
        raise ValidationError(f"trace horizon T={T} must exceed rho={rho}")
    h = (T - rho) / n_t
    steps = h * ratio ** -np.arange(n_graded, 0, -1)
    head = rho + np.cumsum(steps) * (h / steps.sum())
    return np.concatenate([[rho], head, rho + h * np.arange(2, n_t + 1)])


def support_horizon(q: Potential, x, x0, n_terms: int) -> float:
    """Time after which the truncated series vanishes identically.

    ``w_n`` is carried by paths ``x0 -> supp q -> ... -> x`` with ``n``
    scattering points, so it is zero once ``t`` exceeds the longest such
    path.
    """
    live = [b for b in q.terms if b.amplitude > 0]
    if not live:
        return float(np.linalg.norm(np.subtract(x, x0)))
    single = max(float(np.linalg.norm(np.subtract(x, b.center)) + np.linalg.norm(np.subtract(x0, b.center)))
                 + 2.0 * b.radius for b in live)
    return single + (n_terms - 1) * q.support_diameter()


def kernel_trace(q: Potential, x, x0, T: float | None = None, n_t: int = 256,
                 spec: QuadratureSpec = QuadratureSpec(), tol: float = 1e-8, n_max: int = N_MAX,
                 cache_h: float = 0.1, cache_dsigma: float = 0.1) -> KernelEvaluation:
    """Tabulate the regular part on a graded time grid over ``[rho, T]``.

    The first sample is the exact boundary value ``-(1/2) int_0^1 q dz``.
    ``T`` defaults to the support horizon of the truncated series (with a
    floor of ``rho + 2 B``).
    """
    x = np.asarray(x, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    rho = float(np.linalg.norm(x - x0))
    if rho <= 0:
        raise ValidationError("kernel trace needs x != x0")
    q0 = norms(q)[0] * NORM_INFLATION if q.terms else 0.0
    if T is None:
        n_guess, _ = terms_needed(q0, rho + 2 * q.B, 2 * q.B, tol, n_max)
        T = max(support_horizon(q, x, x0, n_guess), rho + 2.0 * q.B)
    if not T > rho:
        raise ValidationError(f"T={T} must exceed rho={rho}")
    t_grid = graded_time_grid(rho, T, n_t)
    if q0 == 0.0:
        zeros = np.zeros_like(t_grid)
        return KernelEvaluation(x, x0, rho, t_grid, zeros, 1, 0.0, zeros[None])
    n_used, bound = terms_needed(q0, T, T - rho, tol, n_max)
    chain = KernelChain(q, x0, spec, n_max=n_used, cache_h=cache_h, cache_dsigma=cache_dsigma,
                        sigma_max=T - rho)
    terms = np.zeros((n_used, len(t_grid)))
    pts = np.broadcast_to(x, (len(t_grid) - 1, 3))
    for n in range(1, n_used + 1):
        terms[n - 1, 1:] = chain.term(n, pts, t_grid[1:])
    terms[0, 0] = chord_boundary_value(q, x, x0)
    return KernelEvaluation(x, x0, rho, t_grid, terms.sum(axis=0), n_used, bound, terms)
