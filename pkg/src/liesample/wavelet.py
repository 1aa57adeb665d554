"""Continuous wavelet analysis on the affine group.

Analyzing wavelets are progressive: their spectral profile lives on the
positive frequency axis.  The built-in family is the Paul/Cauchy family
``u_hat(w) = c * w^m * exp(-w)`` and everything it generates under the
representation's differential operators, which stays inside the class of
polynomial-times-exponential profiles.  For those profiles the wavelet
transform of a translated/dilated atom has a closed form, which the
quadrature (FFT) transform path is tested against.

Frequencies are measured in cycles per unit (the plane-wave kernel is
``exp(2*pi*i*b*w)``).  With that convention the scale normalization
``integral |u_hat(w)|^2 / w dw = 1`` makes the transform an isometry onto
its range and makes the reproducing convolution identity
``W(f) * W(u) = W(f)`` hold, so one constant serves both purposes.

Representation conventions:

- ``pi(a, b) f(x) = a^{-1/2} f((x - b)/a)``, spectrally
  ``sqrt(a) * exp(-2*pi*i*b*w) * f_hat(a*w)``.
- scaling direction: ``pi(X1) u = -u/2 - x u'``, spectrally
  ``u_hat/2 + w * d(u_hat)/dw``.
- shift direction: ``pi(X2) u = -u'``, spectrally ``-2*pi*i*w*u_hat``.
- multi-indices compose as pi(X_{a(k)}) ... pi(X_{a(1)}), i.e. the first
  entry acts first, matching the right-derivative operators on transforms.
"""

from __future__ import annotations

import json
import math

import numpy as np
from scipy import fft as sfft

from .grid import ConvolutionPlan, GridFunction, HaarGrid, Kernel, convolve, fft_workers, lp_norm

__all__ = [
    "MotherWavelet",
    "PaulWavelet",
    "NumericWavelet",
    "GardingWindow",
    "Signal",
    "WaveletTransform",
    "NonAdmissibleError",
    "duflo_moore_constant",
    "duflo_moore_normalize",
    "derived_wavelet",
    "reproducing_kernel",
    "cross_kernel",
    "cwt",
    "cwt_eval",
    "intertwining_residual",
    "reproducing_residual",
    "convolution_intertwining_fit",
    "garding_smooth",
    "garding_kernel_identity_residual",
    "synthesize",
    "signal_frequency_step",
]

_TWO_PI = 2.0 * np.pi


class NonAdmissibleError(ValueError):
    """Raised when the admissibility integral diverges or vanishes."""


def signal_frequency_step(grid: HaarGrid, n_fft: int = 4096) -> float:
    """Frequency spacing commensurate with the grid's b axis.

    With ``d_nu * d_b * n_fft = 1`` the spectral transform path reduces to
    length-``n_fft`` FFTs per scale row.
    """
    return 1.0 / (n_fft * grid.d_b)


class MotherWavelet:
    """Common interface of progressive analyzing wavelets."""

    def evaluate(self, w):
        raise NotImplementedError

    def admissibility_constant(self) -> float:
        raise NotImplementedError

    def norm_sq(self) -> float:
        raise NotImplementedError

    def scaled(self, c):
        raise NotImplementedError

    def normalized(self):
        """Scale so the admissibility integral is 1; returns (wavelet, c)."""
        c = self.admissibility_constant()
        if not np.isfinite(c) or c <= 0:
            raise NonAdmissibleError(f"admissibility constant {c} is not usable")
        return self.scaled(1.0 / math.sqrt(c)), c


class PaulWavelet(MotherWavelet):
    """Spectral profile sum_j c_j w^j exp(-w) on w > 0 (progressive).

    ``coeffs[j]`` is the coefficient of ``w^j``; admissibility requires
    ``coeffs[0] == 0``.  The family is closed under the representation's
    differential operators and under the closed-form kernel algebra.
    """

    def __init__(self, coeffs):
        self.coeffs = np.atleast_1d(np.asarray(coeffs, dtype=complex))

    @classmethod
    def paul(cls, m: int = 1, amplitude: complex = 1.0) -> "PaulWavelet":
        if m < 1:
            raise NonAdmissibleError("Paul order must be >= 1 for admissibility")
        c = np.zeros(m + 1, dtype=complex)
        c[m] = amplitude
        return cls(c)

    def evaluate(self, w):
        w = np.asarray(w, dtype=float)
        val = np.zeros(w.shape, dtype=complex)
        pos = w > 0
        wp = w[pos]
        acc = np.zeros(wp.shape, dtype=complex)
        pw = np.ones_like(wp)
        for c in self.coeffs:
            if c != 0:
                acc = acc + c * pw
            pw = pw * wp
        val[pos] = acc * np.exp(-wp)
        return val

    def _pair_moments(self, shift: int) -> float:
        """sum_{j,k} c_j conj(c_k) (j + k + shift)! / 2^{j + k + shift + 1}."""
        tot = 0.0 + 0.0j
        for j, cj in enumerate(self.coeffs):
            if cj == 0:
                continue
            for k, ck in enumerate(self.coeffs):
                if ck == 0:
                    continue
                n = j + k + shift
                tot += cj * np.conj(ck) * math.factorial(n) / 2.0 ** (n + 1)
        return float(tot.real)

    def admissibility_constant(self) -> float:
        if self.coeffs[0] != 0:
            raise NonAdmissibleError("profile does not vanish at zero frequency")
        return self._pair_moments(-1)

    def norm_sq(self) -> float:
        return self._pair_moments(0)

    def scaled(self, c) -> "PaulWavelet":
        return PaulWavelet(self.coeffs * c)

    def derived_once(self, k: int) -> "PaulWavelet":
        c = self.coeffs
        out = np.zeros(c.size + 1, dtype=complex)
        if k == 1:
            for j, cj in enumerate(c):
                out[j] += (j + 0.5) * cj
                out[j + 1] -= cj
        elif k == 2:
            out[1:] = -1j * _TWO_PI * c
        else:
            raise ValueError(f"basis index must be 1 or 2, got {k}")
        return PaulWavelet(out)

    def derived(self, alpha) -> "PaulWavelet":
        u = self
        for k in alpha:
            u = u.derived_once(k)
        return u

    def to_json(self, path=None):
        desc = {
            "family": "paul",
            "coeffs_re": [float(c.real) for c in self.coeffs],
            "coeffs_im": [float(c.imag) for c in self.coeffs],
        }
        if path is not None:
            with open(path, "w") as fh:
                json.dump(desc, fh, indent=2, sort_keys=True)
        return desc

    @classmethod
    def from_json(cls, desc):
        return cls(np.asarray(desc["coeffs_re"]) + 1j * np.asarray(desc["coeffs_im"]))


class NumericWavelet(MotherWavelet):
    """Progressive profile tabulated on the uniform frequency lattice j*d_nu."""

    def __init__(self, d_nu, values):
        self.d_nu = float(d_nu)
        self.values = np.asarray(values, dtype=complex)

    @property
    def freqs(self):
        return (np.arange(self.values.size) + 1.0) * self.d_nu

    def evaluate(self, w):
        w = np.asarray(w, dtype=float)
        re = np.interp(w, self.freqs, self.values.real, left=0.0, right=0.0)
        im = np.interp(w, self.freqs, self.values.imag, left=0.0, right=0.0)
        return re + 1j * im

    def admissibility_constant(self) -> float:
        c = float(np.sum(np.abs(self.values) ** 2 / self.freqs) * self.d_nu)
        if c == 0.0:
            raise NonAdmissibleError("profile is numerically zero")
        return c

    def norm_sq(self) -> float:
        return float(np.sum(np.abs(self.values) ** 2) * self.d_nu)

    def scaled(self, c) -> "NumericWavelet":
        return NumericWavelet(self.d_nu, self.values * c)


def duflo_moore_constant(u: MotherWavelet) -> float:
    """The admissibility integral of |u_hat|^2 / w over positive frequencies."""
    return u.admissibility_constant()


def duflo_moore_normalize(u: MotherWavelet) -> MotherWavelet:
    """Rescale u so the reproducing identity W(f) * W(u) = W(f) holds."""
    return u.normalized()[0]


def derived_wavelet(u, alpha):
    """The wavelet pi(X_{alpha(k)}) ... pi(X_{alpha(1)}) u, |alpha| <= 2."""
    alpha = tuple(alpha)
    if len(alpha) > 2:
        raise ValueError("derived wavelets are provided up to order 2")
    return u.derived(alpha)


def cross_kernel(analyzing, analyzed, idempotent_intended=False) -> Kernel:
    """Closed-form transform of one Paul-family profile against another.

    Returns the kernel ``(a, b) -> sqrt(a) * integral v_hat(w)
    conj(u_hat(a*w)) exp(2*pi*i*b*w) dw`` where ``u`` is the analyzing and
    ``v`` the analyzed profile.  For profiles ``sum c_j w^j e^-w`` the
    integral is a rational function of ``(1 + a) - 2*pi*i*b``.
    """
    if not isinstance(analyzing, PaulWavelet) or not isinstance(analyzed, PaulWavelet):
        raise TypeError("closed-form kernels require Paul-family profiles")
    pairs = []
    for j, vj in enumerate(analyzed.coeffs):
        if vj == 0:
            continue
        for k, wk in enumerate(analyzing.coeffs):
            if wk == 0:
                continue
            pairs.append((j, k, vj * np.conj(wk) * math.factorial(j + k)))
    max_n = max((j + k for j, k, _ in pairs), default=0)

    def fn(a, b):
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        s_inv = 1.0 / ((1.0 + a) - 1j * _TWO_PI * b)
        powers = [None] * (max_n + 2)
        powers[1] = s_inv
        for n in range(2, max_n + 2):
            powers[n] = powers[n - 1] * s_inv
        out = np.zeros(np.broadcast(a, b).shape, dtype=complex)
        for j, k, coef in pairs:
            out += coef * np.asarray(a, dtype=float) ** k * powers[j + k + 1]
        return np.sqrt(a) * out

    return Kernel(fn, idempotent_intended=idempotent_intended, label="paul-cross")


def reproducing_kernel(u: PaulWavelet) -> Kernel:
    """The kernel W_u(u); idempotent when u is Duflo-Moore normalized."""
    return cross_kernel(u, u, idempotent_intended=True)


class Signal:
    """A positive-frequency signal, stored spectrally on the lattice j*d_nu.

    Optionally carries an exact atomic description
    ``f = sum_l gamma_l pi(a_l, b_l) u0`` with a Paul-family base profile,
    which makes the wavelet transform and off-lattice spectrum evaluations
    closed form.
    """

    def __init__(self, d_nu, values, atoms=None, label="signal"):
        self.d_nu = float(d_nu)
        self.values = np.asarray(values, dtype=complex)
        self.atoms = atoms
        self.label = label

    @property
    def freqs(self):
        return (np.arange(self.values.size) + 1.0) * self.d_nu

    @classmethod
    def from_atoms(cls, base: PaulWavelet, gammas, positions, d_nu, nu_max, label="signal"):
        """Superposition of translated/dilated copies of ``base``.

        ``positions`` is a sequence of (a, b) pairs; ``gammas`` the complex
        coefficients.
        """
        gammas = np.asarray(gammas, dtype=complex)
        pos = np.asarray(positions, dtype=float).reshape(-1, 2)
        n = int(np.ceil(nu_max / d_nu))
        w = (np.arange(n) + 1.0) * d_nu
        vals = np.zeros(n, dtype=complex)
        for g, (aa, bb) in zip(gammas, pos):
            vals += g * np.sqrt(aa) * np.exp(-1j * _TWO_PI * bb * w) * base.evaluate(aa * w)
        sig = cls(d_nu, vals, atoms=(base, gammas, pos), label=label)
        return sig

    @classmethod
    def from_wavelet(cls, u: PaulWavelet, d_nu, nu_max, label="wavelet-as-signal"):
        return cls.from_atoms(u, [1.0], [(1.0, 0.0)], d_nu, nu_max, label=label)

    def evaluate_spectrum(self, w):
        if self.atoms is not None:
            base, gammas, pos = self.atoms
            w = np.asarray(w, dtype=float)
            out = np.zeros(w.shape, dtype=complex)
            for g, (aa, bb) in zip(gammas, pos):
                out += g * np.sqrt(aa) * np.exp(-1j * _TWO_PI * bb * w) * base.evaluate(aa * w)
            return out
        re = np.interp(w, self.freqs, self.values.real, left=0.0, right=0.0)
        im = np.interp(w, self.freqs, self.values.imag, left=0.0, right=0.0)
        return re + 1j * im

    def norm_sq(self) -> float:
        return float(np.sum(np.abs(self.values) ** 2) * self.d_nu)

    def norm(self) -> float:
        return math.sqrt(self.norm_sq())

    def scaled(self, c) -> "Signal":
        atoms = None
        if self.atoms is not None:
            base, gammas, pos = self.atoms
            atoms = (base, gammas * c, pos)
        return Signal(self.d_nu, self.values * c, atoms, self.label)

    def __add__(self, other):
        if self.d_nu != other.d_nu or self.values.size != other.values.size:
            raise ValueError("signals live on different frequency lattices")
        atoms = None
        if self.atoms is not None and other.atoms is not None and self.atoms[0] is other.atoms[0]:
            atoms = (
                self.atoms[0],
                np.concatenate([self.atoms[1], other.atoms[1]]),
                np.vstack([self.atoms[2], other.atoms[2]]),
            )
        return Signal(self.d_nu, self.values + other.values, atoms, self.label)


class WaveletTransform(GridFunction):
    """Wavelet coefficients on an affine HaarGrid, tagged with provenance."""

    def __init__(self, grid, values, p=2.0, wavelet_label="", signal_label=""):
        super().__init__(grid, values, p)
        self.wavelet_label = wavelet_label
        self.signal_label = signal_label


def _fold_fft_length(d_nu: float, d_b: float):
    n = 1.0 / (d_nu * d_b)
    n_int = int(round(n))
    if n_int > 0 and abs(n - n_int) < 1e-8:
        return n_int
    return None


def cwt(f: Signal, u: MotherWavelet, grid: HaarGrid, method="auto") -> WaveletTransform:
    """Wavelet coefficients <f, pi(a,b) u> on the grid.

    ``method="spectral"`` integrates the spectral product per scale row by
    FFT quadrature on f's frequency lattice, ``method="closed"`` uses the
    exact Paul-family kernel algebra (atomic signals only), and ``"auto"``
    prefers the closed form when available.
    """
    if grid.is_real_line:
        raise ValueError("wavelet transforms live on affine grids")
    closed_ok = isinstance(u, PaulWavelet) and f.atoms is not None
    if method == "auto":
        method = "closed" if closed_ok else "spectral"
    if method == "closed":
        if not closed_ok:
            raise ValueError("closed-form transform needs an atomic signal and Paul profile")
        base, gammas, pos = f.atoms
        ker = cross_kernel(u, base)
        a, b = grid.meshgrid()
        vals = np.zeros(grid.shape, dtype=complex)
        for g, (aa, bb) in zip(gammas, pos):
            vals += g * ker.fn(a / aa, (b - bb) / aa)
        return WaveletTransform(grid, vals, 2.0, getattr(u, "label", "paul"), f.label)
    if method != "spectral":
        raise ValueError(f"unknown method {method!r}")

    freqs = f.freqs
    n_b = grid.b.size
    N = _fold_fft_length(f.d_nu, grid.d_b)
    phase0 = np.exp(1j * _TWO_PI * grid.b[0] * freqs)
    out = np.empty(grid.shape, dtype=complex)
    if N is not None:
        j_max = freqs.size
        n_blocks = (j_max + 1 + N - 1) // N
        buf = np.zeros(n_blocks * N, dtype=complex)
        for i, a in enumerate(grid.a):
            h = f.d_nu * math.sqrt(a) * f.values * np.conj(u.evaluate(a * freqs)) * phase0
            buf[:] = 0.0
            buf[1 : j_max + 1] = h
            H = buf.reshape(n_blocks, N).sum(axis=0)
            row = sfft.ifft(H, workers=fft_workers()) * N
            out[i] = row[:n_b]
    else:
        E = np.exp(1j * _TWO_PI * np.outer(grid.b - grid.b[0], freqs))
        for i, a in enumerate(grid.a):
            h = f.d_nu * math.sqrt(a) * f.values * np.conj(u.evaluate(a * freqs)) * phase0
            out[i] = E @ h
    return WaveletTransform(grid, out, 2.0, getattr(u, "label", "wavelet"), f.label)


def cwt_eval(f: Signal, u: MotherWavelet, a, b):
    """Pointwise transform values at arbitrary group elements (a, b)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if f.atoms is not None and isinstance(u, PaulWavelet):
        base, gammas, pos = f.atoms
        ker = cross_kernel(u, base)
        out = np.zeros(np.broadcast(a, b).shape, dtype=complex)
        for g, (aa, bb) in zip(gammas, pos):
            out += g * ker.fn(a / aa, (b - bb) / aa)
        return out
    freqs = f.freqs
    flat_a = np.ravel(a)
    flat_b = np.ravel(b)
    vals = np.empty(flat_a.size, dtype=complex)
    for i in range(flat_a.size):
        h = f.values * np.conj(u.evaluate(flat_a[i] * freqs))
        vals[i] = math.sqrt(flat_a[i]) * f.d_nu * np.sum(h * np.exp(1j * _TWO_PI * flat_b[i] * freqs))
    return vals.reshape(np.broadcast(a, b).shape)


def synthesize(W: GridFunction, u: MotherWavelet, d_nu: float, nu_max: float) -> Signal:
    """Adjoint-quadrature synthesis f = integral W(a,b) pi(a,b) u dmu(a,b)."""
    grid = W.grid
    freqs = (np.arange(int(np.ceil(nu_max / d_nu))) + 1.0) * d_nu
    j = np.arange(1, freqs.size + 1)
    N = _fold_fft_length(d_nu, grid.d_b)
    fhat = np.zeros(freqs.size, dtype=complex)
    phase0 = np.exp(-1j * _TWO_PI * grid.b[0] * freqs)
    w_row = grid.weight_a * grid.d_b
    if N is not None:
        idx = j % N
        for i, a in enumerate(grid.a):
            row_fft = sfft.fft(W.values[i], n=N, workers=fft_workers())
            fhat += w_row[i] * math.sqrt(a) * u.evaluate(a * freqs) * phase0 * row_fft[idx]
    else:
        E = np.exp(-1j * _TWO_PI * np.outer(freqs, grid.b))
        for i, a in enumerate(grid.a):
            fhat += w_row[i] * math.sqrt(a) * u.evaluate(a * freqs) * (E @ W.values[i])
    return Signal(d_nu, fhat, label="synthesized")


def intertwining_residual(f: Signal, u: PaulWavelet, alpha, grid: HaarGrid, h: float = 1e-3) -> float:
    """Relative gap between derivative-of-transform and transform-of-derivative.

    The left side applies central finite differences along one-parameter
    subgroups to the exact transform evaluator; the right side is the
    transform against the derived wavelet.
    """
    from .sampling import right_derivatives

    alpha = tuple(alpha)
    target = cwt(f, derived_wavelet(u, alpha), grid)
    nrm = lp_norm(target, 2.0)
    if nrm == 0.0:
        return 0.0
    derivs = right_derivatives(lambda a, b: cwt_eval(f, u, a, b), grid, order=len(alpha), h=h, which=[alpha])
    fd = derivs[alpha]
    return lp_norm(fd - target, 2.0) / nrm


def reproducing_residual(f: Signal, u: PaulWavelet, grid: HaarGrid, method="fast") -> float:
    """Relative grid residual of W(f) * W(u) = W(f)."""
    W = cwt(f, u, grid)
    nrm = lp_norm(W, 2.0)
    if nrm == 0.0:
        raise ValueError("transform vanishes; residual undefined")
    K = reproducing_kernel(u)
    return lp_norm(convolve(W, K, method=method) - W, 2.0) / nrm


def convolution_intertwining_fit(f: Signal, u: PaulWavelet, alpha, grid: HaarGrid):
    """Least-squares constant c and residual in W_u(f) * W_{u_a}(u) = c W_{u_a}(f).

    Returns ``(c, relative_residual)`` with the residual measured after the
    fit, relative to the convolution side.
    """
    u_a = derived_wavelet(u, alpha)
    lhs = convolve(cwt(f, u, grid), cross_kernel(u_a, u))
    target = cwt(f, u_a, grid)
    w = grid.node_weights
    denom = np.sum(w * np.abs(target.values) ** 2)
    if denom == 0.0:
        raise ValueError("target transform vanishes")
    c = np.sum(w * lhs.values * np.conj(target.values)) / denom
    resid = lp_norm(lhs - GridFunction(grid, c * target.values), 2.0) / lp_norm(lhs, 2.0)
    return complex(c), float(resid)


class GardingWindow:
    """Smooth compactly supported window on the group, a tensor bump in (log a, b).

    ``g(a, b) = c * beta(log(a)/r1) * beta(b/r2)`` with
    ``beta(s) = exp(-s^2 / (1 - s^2))`` on ``|s| < 1``.  Closed-form left
    derivatives up to order 2 are provided for smoothing the analyzing
    wavelet.  ``c`` defaults to 1; :meth:`normalized_on` fixes unit Haar
    integral on a grid.
    """

    def __init__(self, radius_log_a=0.5, radius_b=0.5, center=(1.0, 0.0), amplitude=1.0):
        self.r1 = float(radius_log_a)
        self.r2 = float(radius_b)
        self.center = (float(center[0]), float(center[1]))
        self.amplitude = float(amplitude)

    @staticmethod
    def _beta(s):
        out = np.zeros_like(s)
        inside = np.abs(s) < 1.0
        si = s[inside]
        out[inside] = np.exp(-(si**2) / (1.0 - si**2))
        return out

    @staticmethod
    def _beta_d(s):
        # beta' = beta * w, w = -2 s / (1 - s^2)^2
        out = np.zeros_like(s)
        inside = np.abs(s) < 1.0
        si = s[inside]
        beta = np.exp(-(si**2) / (1.0 - si**2))
        out[inside] = beta * (-2.0 * si / (1.0 - si**2) ** 2)
        return out

    @staticmethod
    def _beta_dd(s):
        # beta'' = beta * (w^2 + w'), w' = -2 (1 + 3 s^2) / (1 - s^2)^3
        out = np.zeros_like(s)
        inside = np.abs(s) < 1.0
        si = s[inside]
        q = 1.0 - si**2
        beta = np.exp(-(si**2) / q)
        wfac = -2.0 * si / q**2
        wprime = -2.0 * (1.0 + 3.0 * si**2) / q**3
        out[inside] = beta * (wfac**2 + wprime)
        return out

    def _coords(self, a, b):
        la0 = math.log(self.center[0])
        s1 = (np.log(np.asarray(a, dtype=float)) - la0) / self.r1
        s2 = (np.asarray(b, dtype=float) - self.center[1]) / self.r2
        return s1, s2

    def __call__(self, a, b):
        s1, s2 = self._coords(a, b)
        return self.amplitude * self._beta(s1) * self._beta(s2)

    # partial derivatives in (log a, b)
    def _d(self, a, b, n_la, n_b):
        s1, s2 = self._coords(a, b)
        f1 = {0: self._beta, 1: self._beta_d, 2: self._beta_dd}[n_la](s1) / self.r1**n_la
        f2 = {0: self._beta, 1: self._beta_d, 2: self._beta_dd}[n_b](s2) / self.r2**n_b
        return self.amplitude * f1 * f2

    def left_derivative(self, alpha):
        """Closed-form L^alpha g as a callable of (a, b), |alpha| <= 2.

        On the affine group ``L(X1) g = d_la g + b d_b g`` and
        ``L(X2) g = d_b g``; order-2 compositions are expanded by the
        product rule.
        """
        alpha = tuple(alpha)

        def g_la(a, b):
            return self._d(a, b, 1, 0)

        def g_b(a, b):
            return self._d(a, b, 0, 1)

        def g_lala(a, b):
            return self._d(a, b, 2, 0)

        def g_lab(a, b):
            return self._d(a, b, 1, 1)

        def g_bb(a, b):
            return self._d(a, b, 0, 2)

        if alpha == ():
            return self.__call__
        if alpha == (1,):
            return lambda a, b: g_la(a, b) + np.asarray(b) * g_b(a, b)
        if alpha == (2,):
            return g_b
        if alpha == (2, 2):
            return g_bb
        if alpha == (1, 2):
            # L(X2) applied to L(X1) g
            return lambda a, b: g_lab(a, b) + g_b(a, b) + np.asarray(b) * g_bb(a, b)
        if alpha == (2, 1):
            # L(X1) applied to L(X2) g
            return lambda a, b: g_lab(a, b) + np.asarray(b) * g_bb(a, b)
        if alpha == (1, 1):
            return lambda a, b: (
                g_lala(a, b)
                + 2.0 * np.asarray(b) * g_lab(a, b)
                + np.asarray(b) * g_b(a, b)
                + np.asarray(b) ** 2 * g_bb(a, b)
            )
        raise ValueError(f"unsupported multi-index {alpha}")

    def support_nodes(self, grid: HaarGrid):
        a, b = grid.meshgrid()
        mask = self.__call__(a, b) != 0.0
        return a[mask], b[mask], grid.node_weights[np.broadcast_to(mask, grid.shape)], mask

    def normalized_on(self, grid: HaarGrid) -> "GardingWindow":
        total = float(np.sum(grid.node_weights * self.__call__(*grid.meshgrid())))
        if total <= 0:
            raise ValueError("window vanishes on the grid")
        return GardingWindow(self.r1, self.r2, self.center, self.amplitude / total)

    def as_grid_function(self, grid: HaarGrid, p=2.0) -> GridFunction:
        a, b = grid.meshgrid()
        return GridFunction(grid, self.__call__(a, b), p)

    def involution_kernel(self) -> Kernel:
        def fn(a, b):
            a = np.asarray(a, dtype=float)
            return self.__call__(1.0 / a, -b / a) + 0.0j

        return Kernel(fn, label="window-inv")

    def as_kernel(self) -> Kernel:
        return Kernel(lambda a, b: self.__call__(a, b) + 0.0j, label="window")


class GardingWavelet(NumericWavelet):
    """Wavelet smoothed through a window: u~ = integral g(x) pi(x) u dmu(x).

    Derived profiles up to order 2 come from moving the derivatives onto the
    window, ``pi(R^alpha) u~ = (-1)^{|alpha|} pi(L^alpha g) u``, so no
    numeric spectral differentiation is involved.
    """

    def __init__(self, d_nu, values, derived_values):
        super().__init__(d_nu, values)
        self._derived = derived_values

    def derived(self, alpha):
        alpha = tuple(alpha)
        if alpha == ():
            return self
        return NumericWavelet(self.d_nu, self._derived[alpha])

    def scaled(self, c) -> "GardingWavelet":
        return GardingWavelet(self.d_nu, self.values * c, {k: v * c for k, v in self._derived.items()})


def _window_quadrature_profile(u: MotherWavelet, weights_fn, a_sup, b_sup, w_sup, freqs):
    """sum_x w_x weight(x) sqrt(a_x) exp(-2 pi i b_x nu) u_hat(a_x nu)."""
    vals = np.zeros(freqs.size, dtype=complex)
    coef = w_sup * weights_fn(a_sup, b_sup)
    for coef_x, ax, bx in zip(coef, a_sup, b_sup):
        if coef_x == 0.0:
            continue
        vals += coef_x * math.sqrt(ax) * np.exp(-1j * _TWO_PI * bx * freqs) * u.evaluate(ax * freqs)
    return vals


def garding_smooth(u: MotherWavelet, g: GardingWindow, grid: HaarGrid, d_nu: float, nu_max: float, normalize=True):
    """Smooth u through the window by Haar quadrature; optionally renormalize.

    Returns ``(wavelet, admissibility_constant_before_normalization)``.
    """
    a_sup, b_sup, w_sup, _ = g.support_nodes(grid)
    if a_sup.size == 0:
        raise ValueError("window support misses the grid")
    freqs = (np.arange(int(np.ceil(nu_max / d_nu))) + 1.0) * d_nu
    values = _window_quadrature_profile(u, g.left_derivative(()), a_sup, b_sup, w_sup, freqs)
    derived = {}
    for alpha in [(1,), (2,), (1, 1), (1, 2), (2, 1), (2, 2)]:
        sign = (-1.0) ** len(alpha)
        lg = g.left_derivative(alpha)
        derived[alpha] = sign * _window_quadrature_profile(u, lg, a_sup, b_sup, w_sup, freqs)
    wav = GardingWavelet(d_nu, values, derived)
    c = wav.admissibility_constant()
    if normalize:
        wav = wav.scaled(1.0 / math.sqrt(c))
    return wav, c


def smoothed_signal(f: Signal, g: GardingWindow, grid: HaarGrid) -> Signal:
    """The signal pi(g) f = integral g(x) pi(x) f dmu(x), by Haar quadrature."""
    a_sup, b_sup, w_sup, _ = g.support_nodes(grid)
    freqs = f.freqs
    vals = np.zeros(freqs.size, dtype=complex)
    coef = w_sup * g(a_sup, b_sup)
    for coef_x, ax, bx in zip(coef, a_sup, b_sup):
        vals += coef_x * math.sqrt(ax) * np.exp(-1j * _TWO_PI * bx * freqs) * f.evaluate_spectrum(ax * freqs)
    return Signal(f.d_nu, vals, label=f"{f.label}~smoothed")


def garding_kernel_identity_residual(u: PaulWavelet, g: GardingWindow, grid: HaarGrid, f: Signal = None, method="fast") -> float:
    """Residual of the smoothing identity W_{pi(g)u}(pi(g)f) = g * W_u(f) * g~.

    ``g~`` is the involution of the (real) window.  ``f`` defaults to the
    wavelet itself.  Both sides are formed on the grid; the returned value
    is the relative L2 gap.
    """
    if f is None:
        f = Signal.from_wavelet(u, signal_frequency_step(grid), 40.0 / min(1.0, grid.bounds[0] * 4))
    u_raw, _ = garding_smooth(u, g, grid, f.d_nu, f.freqs[-1], normalize=False)
    h = smoothed_signal(f, g, grid)
    lhs = cwt(h, u_raw, grid, method="spectral")

    if f.atoms is not None:
        base, gammas, pos = f.atoms
        ker = cross_kernel(u, base)

        def wf_fn(a, b):
            out = np.zeros(np.broadcast(a, b).shape, dtype=complex)
            for gm, (aa, bb) in zip(gammas, pos):
                out += gm * ker.fn(np.asarray(a) / aa, (np.asarray(b) - bb) / aa)
            return out

        wf_kernel = Kernel(wf_fn, label="transform-kernel")
    else:
        wf_kernel = Kernel.from_grid_function(cwt(f, u, grid, method="spectral"))
    g_gf = g.as_grid_function(grid)
    rhs = convolve(convolve(g_gf, wf_kernel, method=method), g.involution_kernel(), method=method)
    denom = lp_norm(rhs, 2.0)
    if denom == 0.0:
        raise ValueError("reference side vanishes")
    return lp_norm(lhs - rhs, 2.0) / denom
