"""Divergence-free trigonometric vector fields with finite Fourier support.

A field is a finite map from canonical wavevectors ``l`` to coefficient
pairs ``(a_l, b_l)`` representing ``a_l cos<l,x> + b_l sin<l,x>`` with
both vectors in the plane orthogonal to ``l``.  Coefficients are either
exact fractions (subspace computations) or floats (time integration);
conversion is one-way, rational to float.

Norm convention used throughout the package:

    ||u||_k^2 = sum_l |l|^(2k) (|a_l|^2 + |b_l|^2),

i.e. the torus volume factor is normalised to one.  For |l| = 1 modes all
Sobolev orders agree, and order 0 is the L2 norm under the same constant.
"""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np

from . import wavevec
from .wavevec import check_wavevector, mode_sort_key, unit_polarization

#: relative threshold below which float coefficients are treated as zero
FLOAT_PRUNE_REL = 1e-14

#: relative tolerance for the divergence constraint in float mode
DIV_TOL_REL = 1e-12

_ZERO3 = (0, 0, 0)


def _is_floatlike(x):
    return isinstance(x, (float, np.floating))


def _vec_kind(vec):
    return any(_is_floatlike(c) for c in vec)


def _as_exact(vec):
    return tuple(c if isinstance(c, Fraction) else Fraction(c) for c in vec)


def _as_float(vec):
    return tuple(float(c) for c in vec)


def _vec_abs_max(vec):
    return max(abs(c) for c in vec)


class TrigField:
    """Immutable divergence-free trigonometric polynomial on the torus.

    Construct from a mapping ``{l: (a, b)}``; non-canonical keys are folded
    onto their canonical representative (cos is even in l, sin is odd) and
    zero pairs are pruned, so equal fields have equal coefficient tables.
    """

    __slots__ = ("_coeffs", "exact")

    def __init__(self, coeffs=None, validate=True):
        folded = {}
        exact = True
        if coeffs:
            for ell, (a, b) in coeffs.items():
                if _vec_kind(a) or _vec_kind(b):
                    exact = False
                canon, sign = wavevec.canonicalize(ell)
                ca, cb = folded.get(canon, (_ZERO3, _ZERO3))
                if sign > 0:
                    ca = tuple(x + y for x, y in zip(ca, a))
                    cb = tuple(x + y for x, y in zip(cb, b))
                else:
                    ca = tuple(x + y for x, y in zip(ca, a))
                    cb = tuple(x - y for x, y in zip(cb, b))
                folded[canon] = (ca, cb)
        norm = _as_float if not exact else _as_exact
        folded = {ell: (norm(a), norm(b)) for ell, (a, b) in folded.items()}
        folded = _prune(folded, exact)
        if validate:
            _check_divergence(folded, exact)
        object.__setattr__(self, "_coeffs", folded)
        object.__setattr__(self, "exact", exact)

    # -- construction helpers ------------------------------------------------

    @classmethod
    def zero(cls, exact=False):
        f = cls()
        object.__setattr__(f, "exact", bool(exact))
        return f

    @classmethod
    def single_cos(cls, ell, a):
        return cls({check_wavevector(ell): (tuple(a), _ZERO3)})

    @classmethod
    def single_sin(cls, ell, b):
        return cls({check_wavevector(ell): (_ZERO3, tuple(b))})

    # -- queries -------------------------------------------------------------

    def items(self):
        """Coefficient pairs sorted in the fixed mode order."""
        return tuple(sorted(self._coeffs.items(), key=lambda kv: mode_sort_key(kv[0])))

    def support(self):
        return frozenset(self._coeffs)

    def coeff(self, ell):
        """Coefficient pair at ell; non-canonical queries are folded views."""
        canon, sign = wavevec.canonicalize(ell)
        a, b = self._coeffs.get(canon, (_ZERO3, _ZERO3))
        if sign < 0:
            b = tuple(-c for c in b)
        return a, b

    @property
    def is_zero(self):
        return not self._coeffs

    def max_wavenumber(self):
        if not self._coeffs:
            return 0
        return max(wavevec.norm_inf(ell) for ell in self._coeffs)

    def __eq__(self, other):
        if not isinstance(other, TrigField):
            return NotImplemented
        return self._coeffs == other._coeffs

    def __hash__(self):
        return hash(self.items())

    def __repr__(self):
        kind = "exact" if self.exact else "float"
        return f"TrigField({kind}, {len(self._coeffs)} modes)"

    # -- arithmetic ----------------------------------------------------------

    def __add__(self, other):
        if not isinstance(other, TrigField):
            return NotImplemented
        merged = {}
        for ell in set(self._coeffs) | set(other._coeffs):
            a1, b1 = self._coeffs.get(ell, (_ZERO3, _ZERO3))
            a2, b2 = other._coeffs.get(ell, (_ZERO3, _ZERO3))
            merged[ell] = (
                tuple(x + y for x, y in zip(a1, a2)),
                tuple(x + y for x, y in zip(b1, b2)),
            )
        return TrigField(merged, validate=False)

    def __sub__(self, other):
        return self + (-other)

    def __neg__(self):
        return self.scale(-1)

    def scale(self, s):
        if _is_floatlike(s):
            s = float(s)
        scaled = {
            ell: (tuple(s * c for c in a), tuple(s * c for c in b))
            for ell, (a, b) in self._coeffs.items()
        }
        return TrigField(scaled, validate=False)

    def __mul__(self, s):
        return self.scale(s)

    __rmul__ = __mul__

    def to_float(self):
        """Explicit rational-to-float conversion (the only direction offered)."""
        if not self.exact:
            return self
        coeffs = {
            ell: (_as_float(a), _as_float(b)) for ell, (a, b) in self._coeffs.items()
        }
        return TrigField(coeffs, validate=False)


def _prune(coeffs, exact):
    if exact:
        return {
            ell: (a, b)
            for ell, (a, b) in coeffs.items()
            if any(a) or any(b)
        }
    peak = 0.0
    for a, b in coeffs.values():
        peak = max(peak, _vec_abs_max(a), _vec_abs_max(b))
    if peak == 0.0:
        return {}
    cut = FLOAT_PRUNE_REL * peak
    out = {}
    for ell, (a, b) in coeffs.items():
        if _vec_abs_max(a) > cut or _vec_abs_max(b) > cut:
            out[ell] = (a, b)
    return out


def _check_divergence(coeffs, exact):
    for ell, (a, b) in coeffs.items():
        da = wavevec.dot(a, ell)
        db = wavevec.dot(b, ell)
        if exact:
            if da != 0 or db != 0:
                raise ValueError(f"coefficients at {ell} are not orthogonal to the mode")
        else:
            scale = max(_vec_abs_max(a), _vec_abs_max(b)) * math.sqrt(wavevec.norm_sq(ell))
            if abs(da) > DIV_TOL_REL * scale or abs(db) > DIV_TOL_REL * scale:
                raise ValueError(
                    f"divergence residual at {ell} exceeds {DIV_TOL_REL:g} relative"
                )


# -- norms and inner products ----------------------------------------------


def sobolev_norm(u, k):
    """Spectral Sobolev norm of order k >= 0 (see module docstring)."""
    if k < 0:
        raise ValueError("Sobolev order must be non-negative")
    total = 0.0
    for ell, (a, b) in u._coeffs.items():
        w = float(wavevec.norm_sq(ell)) ** k
        total += w * (sum(float(c) ** 2 for c in a) + sum(float(c) ** 2 for c in b))
    return math.sqrt(total)


def l2_inner(u, v):
    """L2 pairing under the unit volume normalisation."""
    total = 0.0
    for ell in u.support() & v.support():
        a1, b1 = u.coeff(ell)
        a2, b2 = v.coeff(ell)
        total += sum(float(x) * float(y) for x, y in zip(a1, a2))
        total += sum(float(x) * float(y) for x, y in zip(b1, b2))
    return total


def stokes_apply(u):
    """Apply -Laplace mode-wise: each pair at l is scaled by |l|^2, exactly."""
    coeffs = {
        ell: (
            tuple(wavevec.norm_sq(ell) * c for c in a),
            tuple(wavevec.norm_sq(ell) * c for c in b),
        )
        for ell, (a, b) in u._coeffs.items()
    }
    return TrigField(coeffs, validate=False)


def unit_cos_mode(ell):
    """Unit-polarization cosine mode l(ell) cos<ell,x> (float coefficients)."""
    return TrigField.single_cos(ell, unit_polarization(ell))


def unit_sin_mode(ell):
    """Unit-polarization sine mode l(ell) sin<ell,x> (float coefficients)."""
    return TrigField.single_sin(ell, unit_polarization(ell))


def random_solenoidal(rng, modes, decay_order, amplitude=1.0):
    """Seeded random field with coefficients shrinking like |l|^(-decay_order).

    Coefficient pairs are Gaussian in the polarization plane of every listed
    canonical mode, so the draw is divergence-free by construction.
    """
    coeffs = {}
    for ell in sorted(modes, key=mode_sort_key):
        basis = wavevec.polarization_basis(ell)
        w = amplitude * float(wavevec.norm_sq(ell)) ** (-decay_order / 2.0)
        g = rng.standard_normal(4)
        a = tuple(w * (g[0] * p + g[1] * q) for p, q in zip(basis.l_plus, basis.l_minus))
        b = tuple(w * (g[2] * p + g[3] * q) for p, q in zip(basis.l_plus, basis.l_minus))
        coeffs[basis.wavevector] = (a, b)
    return TrigField(coeffs, validate=False)


# -- text serialization ------------------------------------------------------


def _format_scalar(c):
    if isinstance(c, Fraction):
        return str(c)
    return repr(float(c))


def _parse_scalar(tok):
    if "/" in tok:
        return Fraction(tok)
    if "." in tok or "e" in tok or "E" in tok or tok in ("inf", "-inf", "nan"):
        return float(tok)
    return Fraction(int(tok))


def to_text(u):
    """One line per canonical mode: ``l1 l2 l3  a1 a2 a3  b1 b2 b3``.

    Rationals are written as p/q, floats as shortest round-trip decimals.
    """
    lines = []
    for ell, (a, b) in u.items():
        toks = [str(c) for c in ell]
        toks += [_format_scalar(c) for c in a]
        toks += [_format_scalar(c) for c in b]
        lines.append(" ".join(toks))
    return "\n".join(lines) + ("\n" if lines else "")


def from_text(text):
    coeffs = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        toks = line.split()
        if len(toks) != 9:
            raise ValueError(f"expected 9 columns per field line, got {len(toks)}: {raw!r}")
        ell = tuple(int(t) for t in toks[:3])
        a = tuple(_parse_scalar(t) for t in toks[3:6])
        b = tuple(_parse_scalar(t) for t in toks[6:9])
        coeffs[ell] = (a, b)
    return TrigField(coeffs)
