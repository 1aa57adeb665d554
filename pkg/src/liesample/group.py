"""Coordinate arithmetic for the affine (ax+b) group and its real-line sub-case.

An element is stored as a pair ``(a, b)`` with scale ``a > 0`` and shift
``b``; composition is ``(a1, b1)(a2, b2) = (a1*a2, a1*b2 + b1)``, i.e. the
product of the upper triangular matrices ``[[a, b], [0, 1]]``.  The real
line embeds as the sub-case ``a == 1`` where composition is addition in
``b``.  All functions accept scalars or numpy arrays and broadcast.

The Lie algebra basis is fixed as ``X1`` (scaling) and ``X2`` (shift),
with ``exp(t*X1) = (e^t, 0)`` and ``exp(t*X2) = (1, t)``.  Neighborhoods
of the identity are parameterized in the product order
``exp(t1*X1) * exp(t2*X2)`` throughout the package; where the reversed
order is needed, :func:`bch_swap` converts between the two.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "GroupElement",
    "LieDirection",
    "EpsNeighborhood",
    "InvalidElementError",
    "IDENTITY",
    "multiply",
    "inverse",
    "exp_coords",
    "log_coords",
    "bch_swap",
    "adjoint_coeffs",
    "haar_density",
]


class InvalidElementError(ValueError):
    """Raised when coordinates do not describe a group element (scale <= 0)."""


def _check_scale(a):
    if not np.all(np.asarray(a) > 0):
        raise InvalidElementError("scale coordinate must be positive")


@dataclass(frozen=True)
class GroupElement:
    """A point (a, b) of the affine group; a == 1 on the real-line sub-case."""

    a: float
    b: float

    def __post_init__(self):
        _check_scale(self.a)

    def __mul__(self, other: "GroupElement") -> "GroupElement":
        aa, bb = multiply(self.a, self.b, other.a, other.b)
        return GroupElement(float(aa), float(bb))

    def inv(self) -> "GroupElement":
        aa, bb = inverse(self.a, self.b)
        return GroupElement(float(aa), float(bb))


@dataclass(frozen=True)
class LieDirection:
    """A tangent direction s*X1 + t*X2 at the identity."""

    s: float
    t: float


@dataclass(frozen=True)
class EpsNeighborhood:
    """The coordinate box {exp(t1*X1) exp(t2*X2) : |t1|, |t2| <= eps}.

    In (a, b) coordinates the set is exactly
    ``{(a, b) : |log a| <= eps and |b| <= eps * a}``; left translates
    ``x*U_eps`` shift ``log a`` by ``log a_x`` and ``b`` by ``b_x`` while the
    slice halfwidth ``eps * a`` follows the running scale coordinate.
    """

    eps: float

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("eps must be positive")

    def contains(self, a, b):
        """Membership test for U_eps, vectorized over (a, b)."""
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        return (np.abs(np.log(a)) <= self.eps) & (np.abs(b) <= self.eps * a)

    @property
    def haar_measure(self) -> float:
        # integral of (2*eps*a) * da/a^2 over a in [e^-eps, e^eps]
        return 4.0 * self.eps**2


IDENTITY = GroupElement(1.0, 0.0)


def multiply(a1, b1, a2, b2):
    """Group product in coordinates: (a1*a2, a1*b2 + b1)."""
    _check_scale(a1)
    _check_scale(a2)
    return a1 * a2, a1 * b2 + b1


def inverse(a, b):
    """Group inverse in coordinates: (1/a, -b/a)."""
    _check_scale(a)
    return 1.0 / a, -b / a


def exp_coords(t1, t2):
    """The element exp(t1*X1) * exp(t2*X2) = (e^t1, e^t1 * t2)."""
    t1 = np.asarray(t1, dtype=float) if not np.isscalar(t1) else t1
    a = np.exp(t1)
    return a, a * t2


def log_coords(a, b):
    """Inverse of :func:`exp_coords`: (t1, t2) with x = exp(t1 X1) exp(t2 X2)."""
    _check_scale(a)
    return np.log(a), b / a


def bch_swap(t1, t2):
    """Reorder exp(t2*X2) * exp(t1*X1) into the canonical product order.

    Returns (t1, t2') with t2' = t2 * e^(-t1), so that
    exp(t2*X2) exp(t1*X1) = exp(t1*X1) exp(t2'*X2) exactly.
    """
    return t1, t2 * np.exp(-t1)


def adjoint_coeffs(a, b, k: int):
    """Coefficients (c1, c2) of Ad_{y^(-1)}(X_k) in the basis (X1, X2).

    For y = (a, b): Ad_{y^(-1)}(X1) = X1 + (b/a) X2 and
    Ad_{y^(-1)}(X2) = (1/a) X2.
    """
    _check_scale(a)
    if k == 1:
        return np.ones_like(np.asarray(a, dtype=float)), np.asarray(b / a)
    if k == 2:
        z = np.zeros_like(np.asarray(a, dtype=float))
        return z, np.asarray(1.0 / a)
    raise ValueError(f"basis index must be 1 or 2, got {k}")


def haar_density(a, b=None):
    """Left Haar density 1/a^2 with respect to da db (1 on the real line)."""
    _check_scale(a)
    return 1.0 / np.asarray(a, dtype=float) ** 2
