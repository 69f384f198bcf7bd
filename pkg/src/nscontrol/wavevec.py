"""Integer wavevectors on the 3-torus and perpendicular-plane bases."""

from __future__ import annotations

import math
from fractions import Fraction
from typing import NamedTuple


class InvalidWaveVector(ValueError):
    pass


def check_wavevector(ell):
    """Validate an integer triple and return it as a tuple.

    Raises InvalidWaveVector for the zero vector or non-integer entries.
    """
    ell = tuple(ell)
    if len(ell) != 3 or not all(isinstance(c, int) and not isinstance(c, bool) for c in ell):
        raise InvalidWaveVector(f"wavevector must be an integer triple, got {ell!r}")
    if ell == (0, 0, 0):
        raise InvalidWaveVector("wavevector must be nonzero")
    return ell


def is_canonical(ell):
    """True when the first nonzero component of ell is positive."""
    for c in ell:
        if c != 0:
            return c > 0
    return False


def canonicalize(ell):
    """Return (canonical representative, sign) with sign * canonical == ell."""
    ell = check_wavevector(ell)
    if is_canonical(ell):
        return ell, 1
    return (-ell[0], -ell[1], -ell[2]), -1


def negate(ell):
    return (-ell[0], -ell[1], -ell[2])


def add(l1, l2):
    return (l1[0] + l2[0], l1[1] + l2[1], l1[2] + l2[2])


def sub(l1, l2):
    return (l1[0] - l2[0], l1[1] - l2[1], l1[2] - l2[2])


def dot(u, v):
    return u[0] * v[0] + u[1] * v[1] + u[2] * v[2]


def cross(u, v):
    return (
        u[1] * v[2] - u[2] * v[1],
        u[2] * v[0] - u[0] * v[2],
        u[0] * v[1] - u[1] * v[0],
    )


def norm_sq(ell):
    return ell[0] * ell[0] + ell[1] * ell[1] + ell[2] * ell[2]


def norm_inf(ell):
    return max(abs(ell[0]), abs(ell[1]), abs(ell[2]))


def mode_sort_key(ell):
    """Fixed total order on wavevectors used for ambient column layouts."""
    return (norm_inf(ell), norm_sq(ell), ell)


def parallel(l1, l2):
    return cross(l1, l2) == (0, 0, 0)


def perp_basis_int(ell):
    """Integer basis (u1, u2) of the plane orthogonal to ell.

    u1 = e x ell for the first of (0,0,1), (0,1,0) not parallel to ell,
    and u2 = ell x u1.  Not normalised, so usable in exact arithmetic.
    """
    ell = check_wavevector(ell)
    for e in ((0, 0, 1), (0, 1, 0)):
        u1 = cross(e, ell)
        if u1 != (0, 0, 0):
            return u1, cross(ell, u1)
    raise InvalidWaveVector(f"no perpendicular axis found for {ell!r}")  # pragma: no cover


class PolarizationBasis(NamedTuple):
    """Deterministic orthonormal pair spanning the plane orthogonal to a mode.

    The basis is attached to the canonical representative, so +ell and -ell
    share one pair: l(ell) = l_plus, l(-ell) = l_minus.
    """

    wavevector: tuple
    l_plus: tuple
    l_minus: tuple


def polarization_basis(ell):
    """Orthonormal basis of ell-perp: l_plus = (e x ell)/|.|, l_minus = (ell x l_plus)/|.|."""
    canon, _ = canonicalize(ell)
    u1, u2 = perp_basis_int(canon)
    n1 = math.sqrt(norm_sq(u1))
    n2 = math.sqrt(norm_sq(u2))
    l_plus = (u1[0] / n1, u1[1] / n1, u1[2] / n1)
    l_minus = (u2[0] / n2, u2[1] / n2, u2[2] / n2)
    return PolarizationBasis(canon, l_plus, l_minus)


def unit_polarization(ell):
    """The vector l(ell): l_plus for canonical ell, l_minus for its negative."""
    canon, sign = canonicalize(ell)
    basis = polarization_basis(canon)
    return basis.l_plus if sign > 0 else basis.l_minus


def leray_project(a, ell):
    """Project a onto the plane orthogonal to ell: a - (<a,ell>/|ell|^2) ell.

    Exact when `a` has Fraction entries, float otherwise.
    """
    ell = check_wavevector(ell)
    s = dot(a, ell)
    if not s:
        return tuple(a)
    n2 = norm_sq(ell)
    f = s / n2 if isinstance(s, float) else Fraction(s, n2)
    return (a[0] - f * ell[0], a[1] - f * ell[1], a[2] - f * ell[2])
