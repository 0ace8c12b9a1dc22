"""Compactly supported, nonnegative C^4 potentials built from radial bumps.

Each term contributes ``amplitude * (1 - |x - c|^2 / R^2)^5`` inside its ball
and nothing outside.  The fifth power makes the profile vanish to order five
at the rim, which gives global C^4 smoothness while keeping every line
integral a polynomial integral that Gauss-Legendre rules integrate exactly.
"""

from __future__ import annotations

import hashlib
import itertools
import json
from dataclasses import dataclass, field
from functools import lru_cache
from math import comb, factorial
from pathlib import Path

import numpy as np
from numpy.polynomial import polynomial as P

from .errors import FormatError, ValidationError

PHANTOM_FORMAT = "phantom/1"
EXPONENT = 5


@dataclass(frozen=True)
class Bump:
    center: tuple
    radius: float
    amplitude: float

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if len(self.center) != 3:
            raise ValidationError("bump center must have three coordinates")
        if not self.radius > 0:
            raise ValidationError(f"bump radius must be positive, got {self.radius}")
        if self.amplitude < 0:
            raise ValidationError(f"bump amplitude must be >= 0 (q >= 0 in the ball), got {self.amplitude}")


@dataclass(frozen=True)
class Potential:
    """Sum of bump terms supported in the ball ``|x| < B``."""

    B: float
    terms: tuple = ()
    _norm_cache: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        if not self.B > 0:
            raise ValidationError(f"support radius B must be positive, got {self.B}")
        for i, t in enumerate(self.terms):
            reach = float(np.linalg.norm(t.center)) + t.radius
            if reach > self.B * (1 + 1e-12):
                raise ValidationError(
                    f"term {i} reaches |x| = {reach:.6g} > B = {self.B}: q must vanish outside the ball")

    # vectorized views used by the quadrature kernels
    @property
    def centers(self) -> np.ndarray:
        return np.array([t.center for t in self.terms], dtype=float).reshape(-1, 3)

    @property
    def radii(self) -> np.ndarray:
        return np.array([t.radius for t in self.terms], dtype=float)

    @property
    def amplitudes(self) -> np.ndarray:
        return np.array([t.amplitude for t in self.terms], dtype=float)

    @property
    def is_zero(self) -> bool:
        return all(t.amplitude == 0 for t in self.terms)

    def __call__(self, x):
        return evaluate(self, x)

    def scaled(self, factor: float) -> "Potential":
        return Potential(self.B, tuple(Bump(t.center, t.radius, t.amplitude * factor) for t in self.terms))

    def support_diameter(self) -> float:
        """Upper bound on the diameter of ``supp q``."""
        live = [t for t in self.terms if t.amplitude > 0]
        best = 0.0
        for a, b in itertools.product(live, repeat=2):
            best = max(best, float(np.linalg.norm(np.subtract(a.center, b.center))) + a.radius + b.radius)
        return best

    def bounding_box(self):
        live = [t for t in self.terms if t.amplitude > 0]
        if not live:
            return None
        lo = np.min([np.subtract(t.center, t.radius) for t in live], axis=0)
        hi = np.max([np.add(t.center, t.radius) for t in live], axis=0)
        return lo, hi

    def to_dict(self) -> dict:
        return {
            "format": PHANTOM_FORMAT,
            "B": self.B,
            "terms": [{"center": list(t.center), "radius": t.radius, "amplitude": t.amplitude}
                      for t in self.terms],
        }

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()


def evaluate(q: Potential, x):
    """``q`` at point(s) ``x`` (trailing axis of length 3)."""
    x = np.asarray(x, dtype=float)
    out = np.zeros(x.shape[:-1])
    for t in q.terms:
        u = np.sum((x - np.asarray(t.center)) ** 2, axis=-1) / (t.radius * t.radius)
        out += t.amplitude * np.maximum(1.0 - u, 0.0) ** EXPONENT
    return out


@lru_cache(maxsize=None)
def _unit_bump_coefficients():
    """Coefficients of (1 - y1^2 - y2^2 - y3^2)^5 as a 3-D power-series array."""
    deg = 2 * EXPONENT
    c = np.zeros((deg + 1,) * 3)
    for m in range(EXPONENT + 1):
        sign = (-1) ** m * comb(EXPONENT, m)
        for i in range(m + 1):
            for j in range(m + 1 - i):
                k = m - i - j
                c[2 * i, 2 * j, 2 * k] += sign * factorial(m) / (factorial(i) * factorial(j) * factorial(k))
    return c


def _multi_indices(order):
    return [b for b in itertools.product(range(order + 1), repeat=3) if sum(b) == order]


def derivative(q: Potential, x, beta):
    """Partial derivative ``d^beta q`` at ``x`` for a multi-index ``beta``.

    Computed exactly from the polynomial form of each bump on its ball.
    """
    x = np.asarray(x, dtype=float)
    coef = _unit_bump_coefficients()
    for axis, n in enumerate(beta):
        if n:
            coef = P.polyder(coef, n, axis=axis)
    n1, n2, n3 = coef.shape
    flat = x.reshape(-1, 3)
    out = np.zeros(len(flat))
    for t in q.terms:
        y = (flat - np.asarray(t.center)) / t.radius
        inside = np.flatnonzero(np.sum(y * y, axis=-1) < 1.0)
        if not len(inside):
            continue
        y = y[inside]
        inner = (y[:, 2, None] ** np.arange(n3)) @ coef.reshape(n1 * n2, n3).T     # (m, n1*n2)
        inner = np.einsum("mij,mj->mi", inner.reshape(-1, n1, n2), y[:, 1, None] ** np.arange(n2))
        vals = np.einsum("mi,mi->m", inner, y[:, 0, None] ** np.arange(n1))
        out[inside] += t.amplitude * vals / t.radius ** sum(beta)
    return out.reshape(x.shape[:-1])


def norms(q: Potential, grid_n: int = 33):
    """Grid estimates of ``(q0, q2, q4)``, the C^0, C^2 and C^4 norms.

    The C^k norm is taken as the largest sup of ``|d^beta q|`` over
    ``|beta| <= k``.  Sampling on a ``grid_n^3`` lattice over the ball
    gives lower bounds on the true values.
    """
    if grid_n < 32:
        raise ValidationError("norm estimation needs grid_n >= 32 per axis")
    key = int(grid_n)
    if key in q._norm_cache:
        return q._norm_cache[key]
    if not q.terms:
        return (0.0, 0.0, 0.0)
    g = np.linspace(-q.B, q.B, grid_n)
    pts = np.stack(np.meshgrid(g, g, g, indexing="ij"), axis=-1).reshape(-1, 3)
    pts = pts[np.sum(pts * pts, axis=1) <= q.B * q.B]
    sups = []
    for order in range(5):
        sups.append(max(float(np.max(np.abs(derivative(q, pts, b)))) for b in _multi_indices(order)))
    result = (sups[0], max(sups[:3]), max(sups))
    q._norm_cache[key] = result
    return result


def _term_intervals(q: Potential, x0, d):
    """Entry/exit parameters of the segment ``x0 + z d`` through each bump.

    Returns arrays ``(z_lo, z_hi)`` of shape ``(..., n_terms)`` clipped to
    [0, 1]; empty intervals have ``z_lo >= z_hi``.
    """
    dd = np.sum(d * d, axis=-1)[..., None]
    rel = x0[..., None, :] - q.centers
    b = np.einsum("...k,...tk->...t", d, rel)
    c = np.sum(rel * rel, axis=-1) - q.radii ** 2
    disc = b * b - dd * c
    root = np.sqrt(np.maximum(disc, 0.0))
    lo = np.clip((-b - root) / dd, 0.0, 1.0)
    hi = np.clip((-b + root) / dd, 0.0, 1.0)
    hi = np.where(disc > 0, hi, lo)
    return lo, hi


def line_integral(q: Potential, x, x0, n_quad: int = 8):
    """Arc-length integral of ``q`` along the segment from ``x0`` to ``x``.

    Each bump is integrated separately over the part of the segment inside
    its ball, so the rule is exact for ``n_quad >= 6``.  ``x`` and ``x0`` may
    carry leading batch axes.
    """
    if n_quad < 2:
        raise ValidationError("line integral needs n_quad >= 2")
    x = np.asarray(x, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    x, x0 = np.broadcast_arrays(x, x0)
    d = x - x0
    length = np.linalg.norm(d, axis=-1)
    if not q.terms:
        return np.zeros(length.shape) if length.ndim else 0.0
    nodes, weights = np.polynomial.legendre.leggauss(n_quad)
    lo, hi = _term_intervals(q, x0, d)
    half = 0.5 * (hi - lo)
    z = (lo + half)[..., None] + half[..., None] * nodes          # (..., terms, n)
    pts = x0[..., None, None, :] + z[..., None] * d[..., None, None, :]
    rel = pts - q.centers[:, None, :]
    u = np.sum(rel * rel, axis=-1) / (q.radii ** 2)[:, None]
    prof = np.maximum(1.0 - u, 0.0) ** EXPONENT
    per_term = np.sum(prof * weights, axis=-1) * half * q.amplitudes
    total = np.sum(per_term, axis=-1) * length
    return float(total) if np.ndim(total) == 0 else total


def chord_integral(q: Potential, chord, n_quad: int = 8) -> float:
    return line_integral(q, chord.x, chord.x0, n_quad)


# presets ------------------------------------------------------------------

def standard_phantom() -> Potential:
    return Potential(1.0, (Bump((0.2, 0.0, 0.0), 0.5, 1.0),))


def two_bumps_phantom() -> Potential:
    return Potential(1.0, (
        Bump((-0.3, 0.2, 0.1), 0.35, 1.0),
        Bump((0.35, -0.25, -0.05), 0.3, 0.6),
    ))


def zero_phantom(B: float = 1.0) -> Potential:
    return Potential(B, ())


PRESETS = {"standard": standard_phantom, "two-bumps": two_bumps_phantom, "zero": zero_phantom}


# serialization ------------------------------------------------------------

def from_dict(doc: dict) -> Potential:
    if doc.get("format") != PHANTOM_FORMAT:
        raise ValidationError(f"unsupported phantom format {doc.get('format')!r}; expected {PHANTOM_FORMAT!r}")
    try:
        terms = tuple(Bump(tuple(t["center"]), float(t["radius"]), float(t["amplitude"])) for t in doc["terms"])
        return Potential(float(doc["B"]), terms)
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"malformed phantom document: {exc}") from exc


def save(q: Potential, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(q.to_dict(), indent=2) + "\n")
    return path


def load(path) -> Potential:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise FormatError(path, "phantom file not found") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(path, f"not valid JSON ({exc})") from exc
    return from_dict(doc)
