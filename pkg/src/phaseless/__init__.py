"""Slice-wise recovery of a Schrödinger potential from phaseless scattering data."""

__version__ = "0.1.0"

from .errors import BudgetExceeded, FormatError, PhaselessError, ValidationError
from .geometry import (Chord, EllipsoidFrame, SliceGeometry, chord_from_pair, chord_point, ellipsoid_frame,
                       ellipsoid_point, make_chord, pair_from_chord, slice_geometry)
from .phantom import Bump, Potential, line_integral, norms, standard_phantom, two_bumps_phantom, zero_phantom
from .radon import Sinogram, SliceImage, fbp_invert, radon_forward, sinogram
from .timedomain import KernelEvaluation, QuadratureSpec, kernel_trace, w1, wn, wtilde
from .scatter import (FrequencyLadder, PhaselessDataset, free_field, phaseless, synthesize_dataset,
                      usc_asymptotic, usc_series)
from .recon import LimitEstimate, Volume, extract_limit, metrics, reconstruct_slice, reconstruct_volume, \
    sinogram_from_data

__all__ = [
    "BudgetExceeded", "FormatError", "PhaselessError", "ValidationError",
    "Chord", "EllipsoidFrame", "SliceGeometry", "chord_from_pair", "chord_point", "ellipsoid_frame",
    "ellipsoid_point", "make_chord", "pair_from_chord", "slice_geometry",
    "Bump", "Potential", "line_integral", "norms", "standard_phantom", "two_bumps_phantom", "zero_phantom",
    "Sinogram", "SliceImage", "fbp_invert", "radon_forward", "sinogram",
    "KernelEvaluation", "QuadratureSpec", "kernel_trace", "w1", "wn", "wtilde",
    "FrequencyLadder", "PhaselessDataset", "free_field", "phaseless", "synthesize_dataset",
    "usc_asymptotic", "usc_series",
    "LimitEstimate", "Volume", "extract_limit", "metrics", "reconstruct_slice", "reconstruct_volume",
    "sinogram_from_data",
]
