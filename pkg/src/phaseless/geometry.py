"""Slice-plane acquisition geometry.

Sources and detectors sit on the circle ``S_a`` cut from the sphere
``|x| = B`` by the plane ``x3 = a``.  An ordered pair ``(x, x0)`` of points on
that circle is identified with the Radon line parameters ``(alpha, s)``:
``n(alpha) = (cos alpha, sin alpha)`` is the unit normal of the chord and
``s`` its signed distance from the slice centre ``0_a = (0, 0, a)``.

Orientation convention
----------------------
Write the angular positions of the endpoints as ``alpha + beta`` and
``alpha - beta`` with ``cos(beta) = s / B_a`` and ``beta`` in ``(0, pi)``.
The detector ``x`` is the endpoint at ``alpha + beta`` and the source ``x0``
the one at ``alpha - beta`` (the larger counter-clockwise offset from
``n(alpha)``).  With this convention ``(alpha, s)`` and ``(alpha + pi, -s)``
describe the same line traversed in opposite directions, so ordered pairs
and ``(alpha, s)`` in ``(0, 2 pi] x (-B_a, B_a)`` are in bijection.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

TWO_PI = 2.0 * np.pi
ON_CIRCLE_TOL = 1e-9


def _wrap_alpha(alpha):
    """Map angles into (0, 2 pi]."""
    a = np.mod(alpha, TWO_PI)
    return np.where(a <= 0.0, TWO_PI, a) if np.ndim(a) else (TWO_PI if a <= 0.0 else float(a))


@dataclass(frozen=True)
class SliceGeometry:
    """Cross-section of the ball ``|x| < B`` at height ``a``."""

    B: float
    a: float

    @property
    def B_a(self) -> float:
        return float(np.sqrt(self.B * self.B - self.a * self.a))

    @property
    def center(self) -> np.ndarray:
        return np.array([0.0, 0.0, self.a])

    def point_at(self, angle):
        """Point(s) of ``S_a`` at the given angular position(s)."""
        angle = np.asarray(angle, dtype=float)
        out = np.empty(angle.shape + (3,))
        out[..., 0] = self.B_a * np.cos(angle)
        out[..., 1] = self.B_a * np.sin(angle)
        out[..., 2] = self.a
        return out


def slice_geometry(B: float, a: float) -> SliceGeometry:
    if not B > 0:
        raise ValidationError(f"sphere radius must be positive, got B={B}")
    if abs(a) >= B:
        raise ValidationError(f"slice height |a|={abs(a)} must be < B={B}; the cross-section is empty")
    return SliceGeometry(float(B), float(a))


@dataclass(frozen=True)
class Chord:
    """One source/detector pair on ``S_a`` and its Radon parameters."""

    geometry: SliceGeometry
    alpha: float
    s: float
    x: np.ndarray
    x0: np.ndarray

    @property
    def length(self) -> float:
        return float(2.0 * np.sqrt(max(self.geometry.B_a**2 - self.s**2, 0.0)))

    @property
    def normal(self) -> np.ndarray:
        return np.array([np.cos(self.alpha), np.sin(self.alpha), 0.0])

    @property
    def midpoint(self) -> np.ndarray:
        return self.geometry.center + self.s * self.normal


def _check_on_circle(g: SliceGeometry, p: np.ndarray, name: str) -> None:
    tol = ON_CIRCLE_TOL * g.B
    radial = np.hypot(p[0], p[1])
    if abs(p[2] - g.a) > tol or abs(radial - g.B_a) > tol:
        raise ValidationError(f"{name}={p.tolist()} is not on the circle S_a (B={g.B}, a={g.a})")


def chord_from_pair(x, x0, geometry: SliceGeometry | None = None) -> Chord:
    """Radon parameters of the ordered pair (detector ``x``, source ``x0``).

    When ``geometry`` is omitted it is inferred from ``x`` (``a = x3``,
    ``B = |x|``).  For chords through the centre (``s = 0``) the angle is
    reported in ``(0, pi]``; the pair is then recovered by
    :func:`pair_from_chord` as a set, possibly with swapped roles.
    """
    x = np.asarray(x, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    if geometry is None:
        geometry = slice_geometry(float(np.linalg.norm(x)), float(x[2]))
    _check_on_circle(geometry, x, "x")
    _check_on_circle(geometry, x0, "x0")
    if np.linalg.norm(x - x0) <= ON_CIRCLE_TOL * geometry.B:
        raise ValidationError("zero-length chord: x and x0 coincide")

    phi_x = np.arctan2(x[1], x[0])
    phi_0 = np.arctan2(x0[1], x0[0])
    beta = 0.5 * np.mod(phi_x - phi_0, TWO_PI)
    alpha = phi_0 + beta
    # midpoint projection; B_a*cos(beta) loses digits near beta = pi/2
    n = np.array([np.cos(alpha), np.sin(alpha)])
    s = 0.5 * float(np.dot(x[:2] + x0[:2], n))
    if abs(s) <= 1e-14 * geometry.B:
        s = 0.0
        alpha = np.mod(alpha, np.pi)
        if alpha <= 0.0:
            alpha = np.pi
    return Chord(geometry, float(_wrap_alpha(alpha)), float(s), x.copy(), x0.copy())


def pair_from_chord(g: SliceGeometry, alpha, s):
    """Endpoints ``(x, x0)`` of the chord with parameters ``(alpha, s)``.

    Vectorized: ``alpha`` and ``s`` broadcast, and the result arrays carry a
    trailing axis of length 3.
    """
    alpha = np.asarray(alpha, dtype=float)
    s = np.asarray(s, dtype=float)
    if np.any(np.abs(s) >= g.B_a):
        raise ValidationError(f"|s| must be < B_a={g.B_a}; the line misses or is tangent to S_a")
    beta = np.arccos(s / g.B_a)
    x = g.point_at(alpha + beta)
    x0 = g.point_at(alpha - beta)
    return x, x0


def make_chord(g: SliceGeometry, alpha: float, s: float) -> Chord:
    x, x0 = pair_from_chord(g, alpha, s)
    return Chord(g, float(_wrap_alpha(alpha)), float(s), x, x0)


def chord_point(c: Chord, z):
    """Affine chord parametrization ``x0 + z (x - x0)``, ``z`` in [0, 1]."""
    z = np.asarray(z, dtype=float)
    return c.x0 + z[..., None] * (c.x - c.x0)


def nu(theta, phi):
    """Unit vector with polar angle ``theta`` and azimuth ``phi``."""
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    st = np.sin(theta)
    return np.stack(np.broadcast_arrays(st * np.cos(phi), st * np.sin(phi), np.cos(theta)), axis=-1)


def rotation_matrix(vartheta, psi):
    """Matrix ``A(vartheta, psi)`` taking the local frame to the global one.

    Row vectors are multiplied from the left: ``nu(theta, phi) @ A``.  The
    third row is ``nu(vartheta, psi)``, so the local pole maps onto the
    direction ``x - x0``.
    """
    vartheta = np.asarray(vartheta, dtype=float)
    psi = np.asarray(psi, dtype=float)
    cv, sv = np.cos(vartheta), np.sin(vartheta)
    cp, sp = np.cos(psi), np.sin(psi)
    cv, sv, cp, sp = np.broadcast_arrays(cv, sv, cp, sp)
    zero = np.zeros_like(cv)
    rows = [
        np.stack([-cv * cp, -cv * sp, sv], axis=-1),
        np.stack([sp, -cp, zero], axis=-1),
        np.stack([sv * cp, sv * sp, cv], axis=-1),
    ]
    return np.stack(rows, axis=-2)


@dataclass(frozen=True)
class EllipsoidFrame:
    """Spherical description of ``x - x0`` used to parametrize ellipsoids."""

    x: np.ndarray
    x0: np.ndarray
    rho: float
    vartheta: float
    psi: float
    A: np.ndarray


def spherical_angles(d):
    """Polar angle in [0, pi] and azimuth in [0, 2 pi) of vector(s) ``d``."""
    d = np.asarray(d, dtype=float)
    rho = np.linalg.norm(d, axis=-1)
    vartheta = np.arccos(np.clip(d[..., 2] / np.where(rho > 0, rho, 1.0), -1.0, 1.0))
    psi = np.mod(np.arctan2(d[..., 1], d[..., 0]), TWO_PI)
    return rho, vartheta, psi


def ellipsoid_frame(x, x0) -> EllipsoidFrame:
    x = np.asarray(x, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    rho, vartheta, psi = spherical_angles(x - x0)
    if not rho > 0:
        raise ValidationError("ellipsoid frame needs distinct points x != x0")
    return EllipsoidFrame(x.copy(), x0.copy(), float(rho), float(vartheta), float(psi),
                          rotation_matrix(vartheta, psi))


def ellipsoid_radius(t, rho, z):
    """Focal radius ``r = |xi - x0|`` at fractional position ``z``."""
    return 0.5 * (t - rho + 2.0 * z * rho)


def ellipsoid_cos_theta(t, rho, z):
    """Cosine of the local polar angle; clamped against rounding."""
    num = rho - t + 2.0 * z * t
    den = t - rho + 2.0 * z * rho
    return np.clip(num / den, -1.0, 1.0)


def radius_from_theta(t, rho, theta):
    return (t * t - rho * rho) / (2.0 * (t - rho * np.cos(theta)))


def theta_from_radius(t, rho, r):
    return np.arccos(np.clip((2.0 * t * r - t * t + rho * rho) / (2.0 * r * rho), -1.0, 1.0))


def ellipsoid_point(fr: EllipsoidFrame, t, z, phi):
    """Point on ``|x - xi| + |x0 - xi| = t`` at parameters ``(z, phi)``.

    ``z`` and ``phi`` broadcast against each other; ``t`` must exceed
    ``fr.rho``.
    """
    t = float(t)
    if not t > fr.rho:
        raise ValidationError(f"t={t} must exceed rho={fr.rho} (inside the light cone)")
    z = np.asarray(z, dtype=float)
    phi = np.asarray(phi, dtype=float)
    r = ellipsoid_radius(t, fr.rho, z)
    theta = np.arccos(ellipsoid_cos_theta(t, fr.rho, z))
    local = nu(theta, phi)
    return fr.x0 + np.asarray(r)[..., None] * (local @ fr.A)
