"""Slice-wise reconstruction from modulus-only data.

For every chord the high-frequency limit ``lim k f`` is extrapolated from a
finite frequency ladder, scaled by ``8 pi |x - x0|`` into a Radon value, and
the resulting sinogram is inverted by filtered back-projection.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .geometry import SliceGeometry
from .phantom import Potential
from .radon import Sinogram, SliceImage, fbp_invert, sample_truth
from .scatter import FrequencyLadder, PhaselessDataset


@dataclass(frozen=True)
class LimitEstimate:
    """Extrapolated ``lim k f`` for one chord (or a batch of chords)."""

    value: np.ndarray
    slope: np.ndarray
    residual: np.ndarray
    k_range: tuple


def _check_ladder(k):
    if len(k) < 3:
        raise ValidationError(f"limit extraction needs >= 3 frequencies, got {len(k)}")
    if k[-1] / k[0] < 4.0:
        raise ValidationError(f"frequency ladder must span a factor >= 4, got {k[-1] / k[0]:.3g}")


FIT_BASES = {"inverse": 1, "inverse-square": 2}


def extract_limit(f_samples, ladder, basis: str = "inverse") -> LimitEstimate:
    """Fit ``k f(k) = A + B/k`` by least squares with weights ``k^2``.

    ``f_samples`` has the frequency axis last; leading axes are treated as
    independent chords.  Returns ``A``, ``B`` and the weighted RMS residual.
    ``basis="inverse-square"`` fits ``A + B/k^2`` instead, which matches the
    leading correction of a modulus when the ``1/k`` term is in quadrature.
    """
    if basis not in FIT_BASES:
        raise ValidationError(f"unknown fit basis {basis!r}; expected one of {sorted(FIT_BASES)}")
    k = ladder.k_values if isinstance(ladder, FrequencyLadder) else np.asarray(ladder, dtype=float)
    _check_ladder(k)
    f = np.asarray(f_samples, dtype=float)
    if f.shape[-1] != len(k):
        raise ValidationError(f"sample axis has length {f.shape[-1]}, ladder has {len(k)}")
    if not np.all(np.isfinite(f)):
        raise ValidationError("non-finite samples in limit extraction")
    y = (f * k).reshape(-1, len(k)).T                      # (n_k, n_chords)
    sw = k                                                 # sqrt of the k^2 weights
    design = np.stack([np.ones_like(k), k ** -FIT_BASES[basis]], axis=1) * sw[:, None]
    coef, *_ = np.linalg.lstsq(design, y * sw[:, None], rcond=None)
    resid = design @ coef - y * sw[:, None]
    rms = np.sqrt(np.mean(resid**2, axis=0)) / np.sqrt(np.mean(sw**2))
    shape = f.shape[:-1]
    return LimitEstimate(coef[0].reshape(shape), coef[1].reshape(shape), rms.reshape(shape),
                         (float(k[0]), float(k[-1])))


def sinogram_from_data(ds: PhaselessDataset, clamp: bool = False, sinogram_like: Sinogram | None = None,
                       basis: str = "inverse") -> Sinogram:
    """Radon values ``8 pi |x - x0| lim k f`` on the dataset's chord grid.

    With ``clamp`` negative limit estimates are set to zero.  Passing
    ``sinogram_like`` checks that the dataset grid matches that layout.
    """
    if sinogram_like is not None:
        same = (sinogram_like.values.shape == ds.f_values.shape[:2]
                and np.allclose(sinogram_like.alphas, ds.alphas) and np.allclose(sinogram_like.offsets, ds.offsets))
        if not same:
            raise ValidationError("dataset chords do not match the requested sinogram layout")
    est = extract_limit(ds.f_values, ds.ladder, basis)
    values = np.array(est.value, dtype=float)
    if clamp:
        values = np.maximum(values, 0.0)
    x, x0 = ds.endpoints()
    rho = np.linalg.norm(x - x0, axis=-1)
    values = 8.0 * np.pi * rho * values
    # chords beyond the edge band are never measured
    values[:, np.abs(ds.offsets) >= ds.s_max] = 0.0
    return Sinogram(ds.slice, ds.alphas, ds.offsets, values, ds.s_max)


def reconstruct_slice(sg: Sinogram, n_image: int, apodization: str = "hann") -> SliceImage:
    return fbp_invert(sg, n_image, apodization)


@dataclass(frozen=True)
class Volume:
    """Slice images stacked by height."""

    B: float
    slices: tuple

    def __post_init__(self):
        heights = [a for a, _ in self.slices]
        if any(b <= a for a, b in zip(heights, heights[1:])):
            raise ValidationError("volume slice heights must be strictly increasing")
        if any(abs(a) >= self.B for a in heights):
            raise ValidationError("volume slice heights must lie in (-B, B)")

    @property
    def heights(self):
        return np.array([a for a, _ in self.slices])

    def __len__(self):
        return len(self.slices)

    def __iter__(self):
        return iter(self.slices)


def reconstruct_volume(datasets, n_image: int, apodization: str = "hann", clamp: bool = False,
                       workers: int = 1, basis: str = "inverse") -> Volume:
    """Independent per-slice reconstructions stacked into a :class:`Volume`."""
    datasets = list(datasets)
    if not datasets:
        raise ValidationError("no datasets to reconstruct")
    heights = [ds.slice.a for ds in datasets]
    if len(set(heights)) != len(heights):
        raise ValidationError(f"duplicate slice heights in {heights}")
    Bs = {ds.slice.B for ds in datasets}
    if len(Bs) != 1:
        raise ValidationError("datasets disagree on the sphere radius B")

    def run(ds):
        return ds.slice.a, reconstruct_slice(sinogram_from_data(ds, clamp, basis=basis), n_image, apodization)

    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=workers) as pool:
            out = list(pool.map(run, datasets))
    else:
        out = [run(ds) for ds in datasets]
    return Volume(Bs.pop(), tuple(sorted(out, key=lambda item: item[0])))


def image_metrics(values, truth) -> dict:
    values = np.asarray(values, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if values.shape != truth.shape:
        raise ValidationError(f"grid mismatch: {values.shape} vs {truth.shape}")
    diff = values - truth
    l2 = float(np.linalg.norm(truth))
    linf = float(np.max(np.abs(truth))) if truth.size else 0.0
    err2 = float(np.linalg.norm(diff))
    errinf = float(np.max(np.abs(diff))) if diff.size else 0.0
    return {
        "rel_L2": err2 / l2 if l2 > 0 else err2,
        "rel_Linf": errinf / linf if linf > 0 else errinf,
        "max_abs": errinf,
    }


def metrics(recon, truth: Potential):
    """Error norms against direct evaluation of ``truth`` on the image grid.

    With a zero truth the absolute norms are reported in place of relative
    ones.  A :class:`Volume` gives one dict per slice plus a pooled entry
    under the key ``"volume"``.
    """
    if isinstance(recon, SliceImage):
        _check_geometry(recon.slice, truth)
        return image_metrics(recon.values, sample_truth(truth, recon.slice, recon.n))
    if isinstance(recon, Volume):
        if not np.isclose(recon.B, truth.B):
            raise ValidationError(f"volume B={recon.B} differs from phantom B={truth.B}")
        rows, stack_r, stack_t = [], [], []
        for a, img in recon:
            t = sample_truth(truth, img.slice, img.n)
            rows.append({"a": a, **image_metrics(img.values, t)})
            stack_r.append(img.values.ravel())
            stack_t.append(t.ravel())
        pooled = image_metrics(np.concatenate(stack_r), np.concatenate(stack_t))
        return {"slices": rows, "volume": pooled}
    raise ValidationError(f"cannot compute metrics for {type(recon).__name__}")


def _check_geometry(g: SliceGeometry, truth: Potential):
    if not np.isclose(g.B, truth.B):
        raise ValidationError(f"slice geometry B={g.B} differs from phantom B={truth.B}")
