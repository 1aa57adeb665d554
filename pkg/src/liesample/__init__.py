"""Sampling, frames and atomic decompositions for reproducing kernel spaces
on the real line and the affine group."""

from . import bandlimited, grid, group, reconstruct, sampling, wavelet
from .grid import GridFunction, HaarGrid, Kernel, convolve, involution, kernel_idempotency_residual, lp_norm, translate
from .group import GroupElement, adjoint_coeffs, bch_swap, exp_coords, haar_density, inverse, multiply
from .reports import DivergedError, ReconstructionReport
from .sampling import BUPU, SampleSet, SequenceCoefficients, build_bupu, bseq_norm, generate_separated_set
from .wavelet import MotherWavelet, PaulWavelet, Signal, cwt, duflo_moore_normalize

__version__ = "0.1.0"
