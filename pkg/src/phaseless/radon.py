"""Slice-plane Radon transform and filtered back-projection."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .geometry import TWO_PI, SliceGeometry, pair_from_chord
from .phantom import Potential, line_integral

DEFAULT_EPS_EDGE = 0.02


@dataclass(frozen=True)
class Sinogram:
    """Radon values on a uniform ``(alpha, s)`` grid for one slice.

    ``values[i, j]`` belongs to ``alphas[i]`` and ``offsets[j]``.
    """

    slice: SliceGeometry
    alphas: np.ndarray
    offsets: np.ndarray
    values: np.ndarray
    s_max: float

    @property
    def shape(self):
        return self.values.shape

    @property
    def ds(self) -> float:
        return float(self.offsets[1] - self.offsets[0])

    def with_values(self, values) -> "Sinogram":
        return Sinogram(self.slice, self.alphas, self.offsets, np.asarray(values, dtype=float), self.s_max)


@dataclass(frozen=True)
class SliceImage:
    """Square image of ``q(y1, y2, a)`` centred at ``0_a``.

    ``values[i, j]`` is the pixel at ``y2 = coords[i]``, ``y1 = coords[j]``.
    """

    slice: SliceGeometry
    values: np.ndarray

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def coords(self) -> np.ndarray:
        return pixel_centers(self.slice.B_a, self.n)

    def points(self) -> np.ndarray:
        c = self.coords
        y1, y2 = np.meshgrid(c, c)
        return np.stack([y1, y2, np.full_like(y1, self.slice.a)], axis=-1)


def pixel_centers(half_width: float, n: int) -> np.ndarray:
    h = 2.0 * half_width / n
    return -half_width + h * (np.arange(n) + 0.5)


def angle_grid(n_alpha: int) -> np.ndarray:
    """``n_alpha`` equispaced angles in (0, 2 pi]."""
    return TWO_PI * np.arange(1, n_alpha + 1) / n_alpha


def offset_grid(s_max: float, n_s: int) -> np.ndarray:
    """``n_s`` cell-centred offsets inside (-s_max, s_max)."""
    return pixel_centers(s_max, n_s)


def chord_grid(g: SliceGeometry, n_alpha: int, n_s: int, eps_edge: float = DEFAULT_EPS_EDGE):
    if n_alpha < 4 or n_s < 4:
        raise ValidationError(f"sinogram grid needs n_alpha >= 4 and n_s >= 4, got ({n_alpha}, {n_s})")
    if not 0 < eps_edge < 1:
        raise ValidationError(f"eps_edge must lie in (0, 1), got {eps_edge}")
    s_max = (1.0 - eps_edge) * g.B_a
    return angle_grid(n_alpha), offset_grid(s_max, n_s), s_max


def radon_forward(q: Potential, g: SliceGeometry, alpha, s, n_quad: int = 8):
    """Line integral of ``q`` over the chord(s) ``(alpha, s)`` of slice ``g``."""
    x, x0 = pair_from_chord(g, alpha, s)
    return line_integral(q, x, x0, n_quad)


def sinogram(q: Potential, g: SliceGeometry, n_alpha: int, n_s: int, n_quad: int = 8,
             eps_edge: float = DEFAULT_EPS_EDGE) -> Sinogram:
    alphas, offsets, s_max = chord_grid(g, n_alpha, n_s, eps_edge)
    values = radon_forward(q, g, alphas[:, None], offsets[None, :], n_quad)
    return Sinogram(g, alphas, offsets, np.asarray(values, dtype=float).reshape(n_alpha, n_s), s_max)


def ramp_filter(n_s: int, ds: float, apodization: str = "hann"):
    """Frequency response of the band-limited ramp filter.

    Built from the sampled Ram-Lak kernel, so the zero-frequency response is
    exact for zero-padded data.  Returns ``(H, n_pad)``.
    """
    n_pad = int(2 ** np.ceil(np.log2(max(2 * n_s, 64))))
    k = np.fft.fftfreq(n_pad, d=1.0 / n_pad).astype(int)
    h = np.zeros(n_pad)
    h[0] = 0.25 / ds**2
    odd = k % 2 == 1
    h[odd] = -1.0 / (np.pi * k[odd] * ds) ** 2
    H = ds * np.real(np.fft.fft(h))
    if apodization == "hann":
        omega = np.fft.fftfreq(n_pad, d=ds)
        H *= 0.5 * (1.0 + np.cos(np.pi * omega * 2.0 * ds))
    elif apodization not in (None, "none", "ram-lak"):
        raise ValidationError(f"unknown apodization {apodization!r}")
    return H, n_pad


def filter_projections(values, ds: float, apodization: str = "hann"):
    values = np.asarray(values, dtype=float)
    n_s = values.shape[-1]
    H, n_pad = ramp_filter(n_s, ds, apodization)
    spec = np.fft.fft(values, n=n_pad, axis=-1)
    return np.real(np.fft.ifft(spec * H, axis=-1))[..., :n_s]


def backproject(filtered, alphas, offsets, coords, chunk: int = 32):
    """Sum filtered profiles over angles with linear interpolation in ``s``."""
    y1, y2 = np.meshgrid(coords, coords)
    image = np.zeros_like(y1)
    lo, hi = offsets[0], offsets[-1]
    ds = offsets[1] - offsets[0]
    n_s = len(offsets)
    for start in range(0, len(alphas), chunk):
        al = alphas[start:start + chunk]
        prof = filtered[start:start + chunk]
        t = np.cos(al)[:, None, None] * y1 + np.sin(al)[:, None, None] * y2
        pos = (t - lo) / ds
        i0 = np.clip(np.floor(pos).astype(int), 0, n_s - 2)
        frac = pos - i0
        rows = np.arange(len(al))[:, None, None]
        vals = (1.0 - frac) * prof[rows, i0] + frac * prof[rows, i0 + 1]
        vals = np.where((t >= lo) & (t <= hi), vals, 0.0)
        image += vals.sum(axis=0)
    return image


def fbp_invert(sg: Sinogram, n_image: int, apodization: str = "hann") -> SliceImage:
    """Filtered back-projection of a full-circle (0, 2 pi] sinogram."""
    values = np.asarray(sg.values, dtype=float)
    n_alpha, n_s = values.shape
    if n_s < 4 or n_alpha < 2:
        raise ValidationError(f"sinogram grid too small for inversion: {values.shape}")
    if not np.all(np.isfinite(values)):
        raise ValidationError("sinogram contains non-finite values")
    if n_image < 2:
        raise ValidationError("n_image must be >= 2")
    filtered = filter_projections(values, sg.ds, apodization)
    coords = pixel_centers(sg.slice.B_a, n_image)
    image = backproject(filtered, sg.alphas, sg.offsets, coords) * (np.pi / n_alpha)
    # pixels beyond s_max are crossed by unmeasured lines only
    y1, y2 = np.meshgrid(coords, coords)
    image[np.hypot(y1, y2) > sg.s_max] = 0.0
    return SliceImage(sg.slice, image)


def sample_truth(q: Potential, g: SliceGeometry, n_image: int) -> np.ndarray:
    """Phantom values on the pixel grid of an ``n_image`` reconstruction."""
    return q(SliceImage(g, np.zeros((n_image, n_image))).points())
