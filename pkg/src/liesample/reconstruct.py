"""Discretization of the reproducing-kernel subspace: frames and atoms.

All operators close over a fixed triple (sample set, partition of unity,
reproducing kernel):

- ``T1 f = (sum_i f(x_i) psi_i) * phi`` rebuilds from point samples and
  projects back through the kernel,
- ``T2 f = sum_i (integral f psi_i) l_{x_i} phi`` synthesizes from local
  averages with translated kernel atoms,
- ``T3 f = sum_i c_i f(x_i) l_{x_i} phi`` does the same from weighted point
  samples, ``c_i`` the mass of psi_i.

At small enough neighborhood size each operator is a perturbation of the
identity on the reproducing subspace; the measured contraction
``||f - T f|| / ||f||`` drives Neumann-series inversion, reconstruction
from samples, and atomic decompositions.  Suite membership in the subspace
is enforced by one pre-projection ``f <- f * phi`` because discretization
drifts functions slightly off the reproducing range.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grid import ConvolutionPlan, GridFunction, HaarGrid, Kernel, lp_norm
from .reports import DivergedError, ReconstructionReport
from .sampling import BUPU, SampleSet, SequenceCoefficients, bseq_norm

__all__ = [
    "FrameBounds",
    "SamplingOperator",
    "estimate_frame_bounds",
    "apply_T1",
    "apply_T2",
    "apply_T3",
    "synthesize_atoms",
    "neumann_invert",
    "atomic_decompose",
    "pre_project",
    "membership_residual",
]


@dataclass
class FrameBounds:
    """Empirical extremes of ||{f(x_i)}||_seq / ||f|| over a test suite."""

    A_hat: float
    B_hat: float
    suite_size: int
    eps: float
    p: float = 2.0

    def __post_init__(self):
        if not (0 < self.A_hat <= self.B_hat):
            raise ValueError("frame bounds must satisfy 0 < A_hat <= B_hat")

    @property
    def conditioning(self) -> float:
        return self.B_hat / self.A_hat


def membership_residual(F: GridFunction, plan: ConvolutionPlan, p=None) -> float:
    """||F * phi - F|| / ||F||, the reproducing-subspace membership check."""
    nrm = lp_norm(F, p)
    if nrm == 0.0:
        raise ValueError("membership residual undefined for the zero function")
    return lp_norm(plan.apply(F) - F, p) / nrm


def pre_project(F: GridFunction, plan: ConvolutionPlan) -> GridFunction:
    """One kernel convolution pass, pinning F to the discrete reproducing range."""
    out = plan.apply(F)
    out.p = F.p
    return out


def sample_values(F: GridFunction, ss: SampleSet) -> np.ndarray:
    """Interpolated point evaluations f(x_i), shared with synthesis."""
    return F.at_points(ss.a, ss.b)


def estimate_frame_bounds(ss: SampleSet, kernel: Kernel, suite, p=2.0, membership_tol=1e-2, plan=None) -> FrameBounds:
    """Extremal sequence-norm/function-norm ratios over a suite.

    Every suite member must pass the reproducing membership pre-check at
    ``membership_tol``; offenders are reported with their residuals.
    """
    suite = list(suite)
    if not suite:
        raise ValueError("empty suite")
    plan = plan or ConvolutionPlan(ss.grid, kernel)
    rejected = []
    ratios = []
    for idx, F in enumerate(suite):
        resid = membership_residual(F, plan, p)
        if resid >= membership_tol:
            rejected.append((idx, resid))
            continue
        lam = SequenceCoefficients(sample_values(F, ss), ss, p)
        ratios.append(bseq_norm(lam) / lp_norm(F, p))
    if rejected:
        raise ValueError(f"suite members failed the membership pre-check (index, residual): {rejected}")
    return FrameBounds(min(ratios), max(ratios), len(ratios), ss.eps, p)


class SamplingOperator:
    """One of the three sampling operators with its closed-over triple."""

    def __init__(self, kind: str, bupu: BUPU, kernel: Kernel, plan: ConvolutionPlan = None, atom_engine=None):
        if kind not in ("T1", "T2", "T3"):
            raise ValueError(f"operator kind must be T1, T2 or T3, got {kind!r}")
        self.kind = kind
        self.bupu = bupu
        self.kernel = kernel
        self.sample_set = bupu.sample_set
        self.grid = bupu.grid
        if kind == "T1":
            self.plan = plan or ConvolutionPlan(self.grid, kernel)
        else:
            self.atom_engine = atom_engine or AtomSynthesis(self.sample_set, kernel)

    def apply(self, F: GridFunction) -> GridFunction:
        ss = self.sample_set
        if self.kind == "T1":
            pieces = self.bupu.assemble(sample_values(F, ss))
            out = self.plan.apply(pieces)
        elif self.kind == "T2":
            lam = self.bupu.integrate_against(F)
            out = self.atom_engine.combine(lam)
        else:
            lam = self.bupu.mass * sample_values(F, ss)
            out = self.atom_engine.combine(lam)
        out.p = F.p
        return out

    def data_term(self, point_values) -> GridFunction:
        """The operator output formed from point samples alone (T1/T3)."""
        point_values = np.asarray(point_values, dtype=complex)
        if self.kind == "T1":
            return self.plan.apply(self.bupu.assemble(point_values))
        if self.kind == "T3":
            return self.atom_engine.combine(self.bupu.mass * point_values)
        raise ValueError("T2 needs local averages, not point samples")

    def contraction(self, F: GridFunction) -> float:
        return lp_norm(F - self.apply(F), F.p) / lp_norm(F)


class AtomSynthesis:
    """Evaluates sums of left-translated kernel atoms on the grid."""

    def __init__(self, ss: SampleSet, kernel: Kernel):
        self.ss = ss
        self.kernel = kernel
        self.grid = ss.grid

    def combine(self, lam) -> GridFunction:
        """sum_i lam_i * kernel(x_i^{-1} y) over all grid nodes y."""
        lam = np.asarray(lam, dtype=complex)
        g = self.grid
        out = np.zeros(g.shape, dtype=complex)
        nz = np.nonzero(lam)[0]
        a_i, b_i = self.ss.a, self.ss.b
        # per output scale row: x_i^{-1} y = (a_y / a_i, (b_y - b_i) / a_i)
        for r, a_row in enumerate(g.a):
            ratios = a_row / a_i[nz]
            offs = (g.b[None, :] - b_i[nz, None]) / a_i[nz, None]
            vals = self.kernel.fn(ratios[:, None], offs)
            out[r] = lam[nz] @ vals
        return GridFunction(g, out)


def apply_T1(F: GridFunction, P: BUPU, kernel: Kernel) -> GridFunction:
    return SamplingOperator("T1", P, kernel).apply(F)


def apply_T2(F: GridFunction, P: BUPU, kernel: Kernel) -> GridFunction:
    return SamplingOperator("T2", P, kernel).apply(F)


def apply_T3(F: GridFunction, P: BUPU, kernel: Kernel) -> GridFunction:
    return SamplingOperator("T3", P, kernel).apply(F)


def synthesize_atoms(lam: SequenceCoefficients, kernel: Kernel) -> GridFunction:
    """The atom sum sum_i lam_i l_{x_i} phi, with its synthesis norm ratio.

    The result carries ``synthesis_constant``, the measured quotient of the
    output norm by the sequence norm of the coefficients.
    """
    out = AtomSynthesis(lam.sample_set, kernel).combine(lam.values)
    out.p = lam.p
    seq = bseq_norm(lam)
    out.synthesis_constant = lp_norm(out) / seq if seq > 0 else 0.0
    return out


def neumann_invert(T: SamplingOperator, y: GridFunction, tol=1e-10, maxiter=60, probe: GridFunction = None):
    """Neumann-series solution of T f = y with divergence detection.

    Sums ``(I - T)^k y`` until the increment norm falls below
    ``tol * ||y||``.  A probe function (default y) must show contraction
    below one before the series starts.
    """
    q_probe = T.contraction(probe if probe is not None else y)
    if not q_probe < 1.0:
        raise ValueError(f"empirical contraction {q_probe:.3f} is not below one")
    report = ReconstructionReport(operator=T.kind, eps=T.sample_set.eps, p=y.p)
    y_norm = lp_norm(y)
    total = y.copy()
    term = y
    grow = 0
    for _ in range(maxiter):
        term = term - T.apply(term)
        inc = lp_norm(term)
        report.residuals.append(inc)
        if len(report.residuals) >= 2 and inc > report.residuals[-2]:
            grow += 1
            if grow >= 3:
                report.finish()
                raise DivergedError(report)
        else:
            grow = 0
        total = total + term
        if inc <= tol * y_norm:
            report.converged = True
            break
    report.finish()
    return total, report


def atomic_decompose(F: GridFunction, P: BUPU, kernel: Kernel, tol=1e-10, maxiter=60):
    """Coefficients lambda_i(T2^{-1} F) whose atom sum rebuilds F.

    Returns (SequenceCoefficients, report); the report carries the relative
    synthesis residual of the rebuilt function as ``final_error``.
    """
    T2 = SamplingOperator("T2", P, kernel)
    f_norm = lp_norm(F)
    if f_norm == 0.0:
        lam = SequenceCoefficients(np.zeros(len(P.sample_set), dtype=complex), P.sample_set, F.p)
        report = ReconstructionReport(operator="T2", eps=P.sample_set.eps, p=F.p, converged=True)
        report.residuals = [0.0]
        report.final_error = 0.0
        report.finish()
        report.converged = True
        return lam, report
    g, report = neumann_invert(T2, F, tol=tol, maxiter=maxiter)
    lam = SequenceCoefficients(P.integrate_against(g), P.sample_set, F.p)
    rebuilt = synthesize_atoms(lam, kernel)
    report.final_error = lp_norm(rebuilt - F) / f_norm
    return lam, report
