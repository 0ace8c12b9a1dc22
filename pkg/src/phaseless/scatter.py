"""Frequency-domain scattered fields and modulus-only data.

Two routes to ``u_sc(x, x0, k)``:

* ``series``: the time-to-frequency transform
  ``(1/4pi) int_rho^T wtilde(t) exp(-ikt) dt`` of a tabulated kernel trace,
  integrated exactly for the piecewise-linear interpolant of the trace
  (Filon-type rule), so no time derivative of the kernel is needed;
* ``asymptotic``: the leading high-frequency term
  ``i exp(-ik rho) / (8 pi rho k) * int_L q``.

Only moduli ``f = |u_sc|`` enter a :class:`PhaselessDataset`.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import BudgetExceeded, ValidationError
from .geometry import SliceGeometry, pair_from_chord
from .phantom import Potential, line_integral
from .radon import DEFAULT_EPS_EDGE, chord_grid
from .timedomain import N_MAX, KernelEvaluation, QuadratureSpec, kernel_trace

log = logging.getLogger(__name__)

MODELS = ("series", "asymptotic")
DEFAULT_SERIES_BUDGET = 200_000


@dataclass(frozen=True)
class FrequencyLadder:
    k_values: np.ndarray

    def __post_init__(self):
        k = np.asarray(self.k_values, dtype=float).reshape(-1)
        if len(k) == 0 or not np.all(k > 0) or np.any(np.diff(k) <= 0):
            raise ValidationError("frequency ladder must be strictly increasing and positive")
        object.__setattr__(self, "k_values", k)

    @classmethod
    def geometric(cls, k_min: float = 20.0, k_max: float = 160.0, n: int = 8) -> "FrequencyLadder":
        return cls(np.geomspace(k_min, k_max, n))

    def __len__(self):
        return len(self.k_values)


@dataclass(frozen=True)
class PhaselessDataset:
    """``f = |u_sc|`` on an ``(alpha, s)`` chord grid times a frequency ladder.

    ``f_values[i, j, m]`` belongs to ``alphas[i]``, ``offsets[j]`` and
    ``ladder.k_values[m]``.
    """

    slice: SliceGeometry
    alphas: np.ndarray
    offsets: np.ndarray
    s_max: float
    ladder: FrequencyLadder
    f_values: np.ndarray
    model_tag: str
    noise_level: float = 0.0
    seed: int | None = None
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def n_chords(self) -> int:
        return len(self.alphas) * len(self.offsets)

    def chord_table(self) -> np.ndarray:
        a, s = np.meshgrid(self.alphas, self.offsets, indexing="ij")
        return np.stack([a.reshape(-1), s.reshape(-1)], axis=-1)

    def endpoints(self):
        return pair_from_chord(self.slice, self.alphas[:, None], self.offsets[None, :])


def free_field(x, x0, k):
    """Outgoing point-source field ``exp(-ik|x - x0|) / (4 pi |x - x0|)``."""
    rho = np.linalg.norm(np.subtract(x, x0), axis=-1)
    if np.any(rho <= 0):
        raise ValidationError("free field is singular at x = x0")
    return np.exp(-1j * np.asarray(k) * rho) / (4.0 * np.pi * rho)


def usc_asymptotic(q: Potential, x, x0, k, n_quad: int = 8):
    """Leading high-frequency term of the scattered field."""
    x = np.asarray(x, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    rho = np.linalg.norm(x - x0, axis=-1)
    if np.any(rho <= 0):
        raise ValidationError("asymptotic field needs x != x0")
    k = np.asarray(k, dtype=float)
    if np.any(k <= 0):
        raise ValidationError("frequencies must be positive")
    radon = np.asarray(line_integral(q, x, x0, n_quad))
    rho = rho[..., None] if k.ndim and rho.ndim else rho
    radon = radon[..., None] if k.ndim and radon.ndim else radon
    return 1j * np.exp(-1j * k * rho) / (8.0 * np.pi * rho * k) * radon


def phaseless(u):
    """Modulus of a complex field; the phase is discarded."""
    return np.abs(u)


def _segment_moments(h, k):
    """``int_0^h exp(-iks) ds`` and ``int_0^h s exp(-iks) ds / h``."""
    kh = k * h
    small = np.abs(kh) < 1e-2
    safe_k = np.where(small, 1.0, k)
    e = np.exp(-1j * kh)
    m0 = np.where(small, h * (1 - 1j * kh / 2 - kh**2 / 6 + 1j * kh**3 / 24),
                  (1 - e) / (1j * safe_k))
    m1 = np.where(small, h * (0.5 - 1j * kh / 3 - kh**2 / 8 + 1j * kh**3 / 30),
                  (e * (1 + 1j * kh) - 1) / (safe_k**2 * np.where(small, 1.0, h)))
    return m0, m1


def filon_transform(t_grid, values, k):
    """``int f(t) exp(-ikt) dt`` for the piecewise-linear interpolant of ``f``.

    Exact for any ``k`` given the interpolant; ``k`` may be an array.
    """
    t = np.asarray(t_grid, dtype=float)
    f = np.asarray(values, dtype=float)
    k = np.atleast_1d(np.asarray(k, dtype=float))
    h = np.diff(t)[None, :]
    kk = k[:, None]
    m0, m1 = _segment_moments(h, kk)
    df = np.diff(f)[None, :]
    seg = np.exp(-1j * kk * t[None, :-1]) * (f[None, :-1] * m0 + df * m1)
    return seg.sum(axis=1)


@dataclass(frozen=True)
class SeriesField:
    values: np.ndarray
    k: np.ndarray
    truncation_bound: float
    quadrature_error: np.ndarray
    n_terms: int


def usc_series(q: Potential, x, x0, k, T_max: float | None = None, trace: KernelEvaluation | None = None,
               spec: QuadratureSpec = QuadratureSpec(), n_t: int = 256, tol: float = 1e-8,
               n_max: int = N_MAX, return_info: bool = False):
    """Scattered field from the Fourier transform of the regular kernel.

    The kernel trace is computed unless supplied.  With ``return_info`` a
    :class:`SeriesField` carries the series tail bound (scaled to the
    field) and a quadrature error estimate from halving the time grid.
    """
    x = np.asarray(x, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    k_arr = np.atleast_1d(np.asarray(k, dtype=float))
    rho = float(np.linalg.norm(x - x0))
    if T_max is not None and not T_max > rho:
        raise ValidationError(f"T_max={T_max} must exceed rho={rho}")
    if trace is None:
        trace = kernel_trace(q, x, x0, T_max, n_t, spec, tol, n_max)
    elif not (np.allclose(trace.x, x) and np.allclose(trace.x0, x0)):
        raise ValidationError("kernel trace was computed for different endpoints")
    t, w = trace.t_grid, trace.wtilde_values
    if T_max is not None and T_max < t[-1]:
        keep = t <= T_max
        t, w = t[keep], w[keep]
    values = filon_transform(t, w, k_arr) / (4.0 * np.pi)
    if np.ndim(k) == 0:
        values = values[0]
    if not return_info:
        return values
    coarse = np.concatenate([t[:1], t[2::2]]) if len(t) > 4 else t
    coarse_w = np.concatenate([w[:1], w[2::2]]) if len(t) > 4 else w
    # the coarse grid's interpolation error is ~4x the fine one
    qerr = np.abs(filon_transform(coarse, coarse_w, k_arr) / (4.0 * np.pi) - np.atleast_1d(values)) / 3.0
    span = t[-1] - t[0]
    return SeriesField(np.atleast_1d(values), k_arr, trace.remainder_bound * span / (4.0 * np.pi), qerr,
                       trace.n_terms)


def synthesize_dataset(q: Potential, g: SliceGeometry, n_alpha: int, n_s: int, ladder: FrequencyLadder,
                       model: str = "asymptotic", noise_seed: int | None = None, noise_level: float = 0.0,
                       eps_edge: float = DEFAULT_EPS_EDGE, spec: QuadratureSpec = QuadratureSpec(),
                       n_t: int = 256, tol: float = 1e-8, n_max: int = N_MAX,
                       budget: int = DEFAULT_SERIES_BUDGET, phase_offsets=None, workers: int = 1,
                       progress=None) -> PhaselessDataset:
    """Modulus-only data for one slice.

    ``phase_offsets`` optionally rotates every complex sample by a phase
    (array broadcastable to ``(n_alpha, n_s, n_k)`` or a callable returning
    one); since fields are held in polar form the stored moduli are
    unaffected bit for bit.  Multiplicative noise ``f (1 + sigma xi)`` uses
    a generator seeded from ``noise_seed`` and the slice height.
    """
    if model not in MODELS:
        raise ValidationError(f"unknown model tag {model!r}; expected one of {MODELS}")
    if noise_level < 0:
        raise ValidationError("noise level must be >= 0")
    alphas, offsets, s_max = chord_grid(g, n_alpha, n_s, eps_edge)
    k = ladder.k_values
    n_samples = n_alpha * n_s * len(k)
    if model == "series" and n_samples > budget:
        raise BudgetExceeded(f"series model needs {n_samples} samples, budget is {budget}")
    x, x0 = pair_from_chord(g, alphas[:, None], offsets[None, :])

    if model == "asymptotic":
        modulus, phase = _polar(usc_asymptotic(q, x, x0, k))
    else:
        modulus = np.zeros((n_alpha, n_s, len(k)))
        phase = np.zeros_like(modulus)
        jobs = [(i, j) for i in range(n_alpha) for j in range(n_s)]

        def run(job):
            i, j = job
            u = usc_series(q, x[i, j], x0[i, j], k, spec=spec, n_t=n_t, tol=tol, n_max=n_max)
            return job, u

        for done, ((i, j), u) in enumerate(_map(run, jobs, workers), 1):
            modulus[i, j], phase[i, j] = _polar(u)
            if progress is not None:
                progress(done, len(jobs))

    if phase_offsets is not None:
        extra = phase_offsets(modulus.shape) if callable(phase_offsets) else phase_offsets
        phase = phase + np.broadcast_to(extra, modulus.shape)
    f = phaseless_polar(modulus, phase)
    if noise_level > 0:
        rng = np.random.default_rng(_slice_seed(noise_seed, g.a))
        f = f * (1.0 + noise_level * rng.standard_normal(f.shape))
        f = np.abs(f)
    return PhaselessDataset(g, alphas, offsets, s_max, ladder, f, model, float(noise_level), noise_seed)


def _polar(u):
    return np.abs(u), np.angle(u)


def phaseless_polar(modulus, phase):
    """Modulus of a field held as ``(modulus, phase)``; ignores ``phase``."""
    del phase
    return np.array(modulus, dtype=float, copy=True)


def _slice_seed(seed, a):
    entropy = [0 if seed is None else int(seed), int(np.round(a * 1e9)) & 0xFFFFFFFF]
    return np.random.SeedSequence(entropy)


def _map(fn, jobs, workers):
    if workers <= 1:
        yield from map(fn, jobs)
        return
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=workers) as pool:
        yield from pool.map(fn, jobs)
