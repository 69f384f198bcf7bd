"""Exact subspace recursion for finite symmetric mode sets.

Starting from the span of the cosine/sine modes of a finite symmetric set
K, repeated symmetrised convection against that span produces a
non-decreasing chain of subspaces.  This module computes the chain in
exact arithmetic, decides whether the integer lattice generated by K is
all of Z^3, certifies coverage of cube truncations, and produces the
constructive single-mode witnesses that drive the coverage argument.

Rank and membership decisions are taken over the rationals only: rows are
stored as integer vectors with cleared denominators, reduced without
division, and lifted to arbitrary-precision integers if 64-bit bounds
would be exceeded.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import reduce as _functools_reduce

import numpy as np

from . import wavevec
from .bilinear import bilinear_Q
from .fields import TrigField
from .wavevec import (
    add,
    canonicalize,
    check_wavevector,
    cross,
    dot,
    mode_sort_key,
    norm_inf,
    norm_sq,
    parallel,
    perp_basis_int,
)


class DegeneratePairError(ValueError):
    pass


_INT64_SAFE = 2**62
_CONTENT_TRIGGER = 2**31


# ---------------------------------------------------------------------------
# mode sets


class ModeSet:
    """Finite symmetric subset of the nonzero integer lattice."""

    def __init__(self, vectors, auto_symmetrize=False):
        vecs = {check_wavevector(v) for v in vectors}
        missing = {wavevec.negate(v) for v in vecs} - vecs
        self.symmetrized = bool(missing)
        if missing and not auto_symmetrize:
            raise ValueError(f"mode set is not symmetric; missing {sorted(missing)}")
        self.vectors = frozenset(vecs | missing)

    def canonical(self):
        """Canonical representatives, one per +-pair, in the fixed mode order."""
        reps = {canonicalize(v)[0] for v in self.vectors}
        return sorted(reps, key=mode_sort_key)

    def signed(self):
        return sorted(self.vectors, key=lambda v: (mode_sort_key(canonicalize(v)[0]), not wavevec.is_canonical(v)))

    def __len__(self):
        return len(self.vectors)

    def __contains__(self, v):
        return tuple(v) in self.vectors

    def __eq__(self, other):
        return isinstance(other, ModeSet) and self.vectors == other.vectors

    def __hash__(self):
        return hash(self.vectors)

    def __repr__(self):
        return f"ModeSet({sorted(self.vectors)})"

    @classmethod
    def from_text(cls, text, auto_symmetrize=True):
        vecs = []
        for raw in text.splitlines():
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.replace(",", " ").split()
            if len(parts) != 3:
                raise ValueError(f"expected an integer triple per line, got {raw!r}")
            vecs.append(tuple(int(p) for p in parts))
        return cls(vecs, auto_symmetrize=auto_symmetrize)


def axes_modeset():
    """The six signed unit axis vectors."""
    return ModeSet([(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)])


# ---------------------------------------------------------------------------
# integer staircase over stacked (a, b) coefficient columns


def _content_int64(v):
    g = int(np.gcd.reduce(np.abs(v)))
    return g


def _content_object(v):
    return _functools_reduce(math.gcd, (abs(int(x)) for x in v), 0)


class _Staircase:
    """Growing integer row staircase with exact reduction and membership.

    Rows are integer coordinate vectors over 6 columns per ambient mode
    (cosine vector then sine vector).  Each row's leading entry sits in a
    column no other row leads; rows are never mutated after insertion, so
    earlier rows stay valid generators for the incremental recursion.
    """

    def __init__(self):
        self.modes = []
        self.col_of = {}
        self.ncols = 0
        self.rows = []
        self.pivots = []
        self.row_by_pivot = {}

    def copy(self):
        other = _Staircase.__new__(_Staircase)
        other.modes = list(self.modes)
        other.col_of = dict(self.col_of)
        other.ncols = self.ncols
        other.rows = [r.copy() for r in self.rows]
        other.pivots = list(self.pivots)
        other.row_by_pivot = dict(self.row_by_pivot)
        return other

    @property
    def rank(self):
        return len(self.rows)

    def extend_modes(self, new_modes):
        fresh = sorted(set(new_modes) - set(self.modes), key=mode_sort_key)
        if not fresh:
            return
        merged = sorted(set(self.modes) | set(fresh), key=mode_sort_key)
        col_of = {m: 6 * i for i, m in enumerate(merged)}
        ncols = 6 * len(merged)
        if self.rows:
            perm = np.empty(self.ncols, dtype=np.int64)
            for m in self.modes:
                old = self.col_of[m]
                perm[old:old + 6] = np.arange(col_of[m], col_of[m] + 6)
            for i, row in enumerate(self.rows):
                fresh_row = np.zeros(ncols, dtype=row.dtype)
                fresh_row[perm] = row
                self.rows[i] = fresh_row
            self.pivots = [int(perm[p]) for p in self.pivots]
            self.row_by_pivot = {p: i for i, p in enumerate(self.pivots)}
        self.modes = merged
        self.col_of = col_of
        self.ncols = ncols

    def field_to_row(self, f):
        """Clear denominators and embed; returns None when the support leaves
        the ambient (such a field cannot be in the span)."""
        if not f.exact:
            raise TypeError("staircase rows require exact coefficients")
        denom = 1
        for _ell, (a, b) in f.items():
            for c in a + b:
                denom = denom * c.denominator // math.gcd(denom, c.denominator)
        entries = {}
        big = False
        for ell, (a, b) in f.items():
            base = self.col_of.get(ell)
            if base is None:
                return None
            for j, c in enumerate(a + b):
                val = int(c * denom)
                if abs(val) >= _INT64_SAFE:
                    big = True
                entries[base + j] = val
        v = np.zeros(self.ncols, dtype=object if big else np.int64)
        for col, val in entries.items():
            v[col] = val
        return v

    def row_to_field(self, i):
        row = self.rows[i]
        coeffs = {}
        nz = np.nonzero(row)[0]
        touched = sorted({int(c) // 6 for c in nz})
        for mi in touched:
            m = self.modes[mi]
            base = 6 * mi
            vals = [Fraction(int(row[base + j])) for j in range(6)]
            coeffs[m] = (tuple(vals[:3]), tuple(vals[3:]))
        return TrigField(coeffs, validate=False)

    def _combine(self, v, p, row, c):
        p, c = int(p), int(c)
        if v.dtype == object or row.dtype == object:
            return v.astype(object) * p - row.astype(object) * c
        mv = int(np.abs(v).max(initial=0))
        mr = int(np.abs(row).max(initial=0))
        if mv * abs(p) + mr * abs(c) >= _INT64_SAFE:
            return v.astype(object) * p - row.astype(object) * c
        return v * p - row * c

    def _normalize(self, v):
        if v.dtype == object:
            g = _content_object(v)
            if g > 1:
                v = v // g
            m = max((abs(int(x)) for x in v), default=0)
            if m < _INT64_SAFE:
                v = v.astype(np.int64)
        else:
            if int(np.abs(v).max(initial=0)) >= _CONTENT_TRIGGER:
                g = _content_int64(v)
                if g > 1:
                    v = v // g
        return v

    def reduce(self, v):
        """Eliminate v against the staircase; the zero vector means membership."""
        while True:
            nz = np.nonzero(v)[0]
            if len(nz) == 0:
                return v
            lead = int(nz[0])
            r = self.row_by_pivot.get(lead)
            if r is None:
                return v
            row = self.rows[r]
            v = self._combine(v, row[lead], row, v[lead])
            v = self._normalize(v)

    def insert(self, f):
        """Add a field's row if it enlarges the span; True when rank grew."""
        v = self.field_to_row(f)
        if v is None:
            raise ValueError("field support outside ambient; extend_modes first")
        v = self.reduce(v)
        nz = np.nonzero(v)[0]
        if len(nz) == 0:
            return False
        if v.dtype == object:
            g = _content_object(v)
        else:
            g = _content_int64(v)
        if g > 1:
            v = v // g
        if v[int(nz[0])] < 0:
            v = -v
        if v.dtype == object:
            m = max(abs(int(x)) for x in v)
            if m < _INT64_SAFE:
                v = v.astype(np.int64)
        pivot = int(nz[0])
        self.rows.append(v)
        self.pivots.append(pivot)
        self.row_by_pivot[pivot] = len(self.rows) - 1
        return True

    def contains_field(self, f):
        v = self.field_to_row(f)
        if v is None:
            return False
        v = self.reduce(v)
        return not np.any(v)

    def support_modes(self):
        mask = np.zeros(self.ncols, dtype=bool)
        for row in self.rows:
            if row.dtype == object:
                mask |= np.array([bool(x) for x in row])
            else:
                mask |= row != 0
        return [self.modes[i] for i in sorted({c // 6 for c in np.nonzero(mask)[0]})]

    def rref(self):
        """Canonical reduced echelon basis over the rationals.

        Unique given the span and the fixed column order, hence usable for
        equality tests.  Quadratic in the rank; meant for modest subspaces.
        """
        order = sorted(range(len(self.rows)), key=lambda i: self.pivots[i])
        rows = [[Fraction(int(x)) for x in self.rows[i]] for i in order]
        pivots = [self.pivots[i] for i in order]
        for i in range(len(rows)):
            p = pivots[i]
            inv = rows[i][p]
            rows[i] = [x / inv for x in rows[i]]
            for j in range(i):
                c = rows[j][p]
                if c:
                    rows[j] = [xj - c * xi for xj, xi in zip(rows[j], rows[i])]
        return [tuple(r) for r in rows]


# ---------------------------------------------------------------------------
# public subspace wrapper


def h0_generator_fields(K):
    """Exact spanning fields of the level-zero span: for every canonical
    pair, cosine and sine modes carrying both integer perpendicular
    directions (4 fields per pair)."""
    out = []
    for ell in K.canonical():
        u1, u2 = perp_basis_int(ell)
        out.append(TrigField.single_cos(ell, u1))
        out.append(TrigField.single_cos(ell, u2))
        out.append(TrigField.single_sin(ell, u1))
        out.append(TrigField.single_sin(ell, u2))
    return out


class RationalSubspace:
    """Exact-arithmetic span of trigonometric fields with rational coefficients."""

    def __init__(self, staircase=None):
        self._st = staircase if staircase is not None else _Staircase()
        self._rref = None

    @property
    def ambient_modes(self):
        return tuple(self._st.modes)

    @property
    def rank(self):
        return self._st.rank

    dim = rank

    @property
    def basis(self):
        """Reduced-echelon rational coordinate rows over the ambient columns."""
        if self._rref is None:
            self._rref = self._st.rref()
        return self._rref

    def basis_fields(self):
        return [self._st.row_to_field(i) for i in range(self._st.rank)]

    def contains(self, f):
        if not f.exact:
            raise TypeError("membership queries require exact coefficients")
        return self._st.contains_field(f)

    def contains_subspace(self, other):
        return all(self.contains(f) for f in other.basis_fields())

    def support_modes(self):
        return self._st.support_modes()

    def max_wavenumber(self):
        support = self.support_modes()
        return max((norm_inf(m) for m in support), default=0)

    def __eq__(self, other):
        if not isinstance(other, RationalSubspace):
            return NotImplemented
        if self.rank != other.rank:
            return False
        return self.contains_subspace(other) and other.contains_subspace(self)

    def __repr__(self):
        return f"RationalSubspace(dim={self.rank}, modes={len(self.ambient_modes)})"


def _insert_fields(st, fields):
    supports = set()
    for f in fields:
        supports |= f.support()
    st.extend_modes(supports)
    added = []
    for f in fields:
        before = st.rank
        if st.insert(f):
            added.append(before)
    return added


def h0_subspace(K):
    """Span of all fields supported on K: dimension 4 per canonical pair."""
    if not isinstance(K, ModeSet):
        K = ModeSet(K)
    st = _Staircase()
    _insert_fields(st, h0_generator_fields(K))
    return RationalSubspace(st)


def next_subspace(prev, h0):
    """One recursion step: the previous span plus all symmetrised convections
    of its basis against the level-zero basis."""
    st = prev._st.copy()
    products = []
    for f in prev.basis_fields():
        for g in h0.basis_fields():
            products.append(bilinear_Q(f, g))
    _insert_fields(st, products)
    return RationalSubspace(st)


# ---------------------------------------------------------------------------
# generator test


def _lattice_index(vectors):
    """Index of the integer lattice generated by the vectors in Z^3.

    Returns 0 when the rank is deficient; 1 exactly for generating sets.
    """
    basis = {}
    for vec in sorted(vectors):
        v = list(vec)
        for c in range(3):
            if v[c] == 0:
                continue
            if c not in basis:
                if v[c] < 0:
                    v = [-x for x in v]
                basis[c] = v
                v = None
                break
            r = basis[c]
            while v[c] != 0:
                q = r[c] // v[c]
                r = [x - q * y for x, y in zip(r, v)]
                r, v = v, r
            if r[c] < 0:
                r = [-x for x in r]
            basis[c] = r
        # any residual v is now zero or was stored
    if len(basis) < 3:
        return 0
    idx = 1
    for c in range(3):
        idx *= abs(basis[c][c])
    return idx


def is_generator(K):
    """True when integer combinations of K reach every point of Z^3."""
    if not isinstance(K, ModeSet):
        K = ModeSet(K, auto_symmetrize=True)
    return _lattice_index(K.canonical()) == 1


# ---------------------------------------------------------------------------
# saturation certification


def truncation_target_fields(M):
    """Per canonical mode of the cube |l|_inf <= M, the four integer fields
    whose joint membership is equivalent to containing every divergence-free
    field supported on that mode."""
    targets = []
    rng = range(-M, M + 1)
    for ell in itertools.product(rng, rng, rng):
        if ell == (0, 0, 0) or not wavevec.is_canonical(ell):
            continue
        u1, u2 = perp_basis_int(ell)
        targets.append((ell, (
            TrigField.single_cos(ell, u1),
            TrigField.single_cos(ell, u2),
            TrigField.single_sin(ell, u1),
            TrigField.single_sin(ell, u2),
        )))
    return sorted(targets, key=lambda t: mode_sort_key(t[0]))


@dataclass
class LevelRecord:
    level: int
    dim: int
    max_wavenumber: int
    covered: dict
    coverage_count: dict


@dataclass
class SaturationLedger:
    mode_set: ModeSet
    cutoffs: tuple
    levels: list = field(default_factory=list)
    covered_level: dict = field(default_factory=dict)
    stopped: str = ""
    final_subspace: RationalSubspace | None = None

    @property
    def dims(self):
        return [rec.dim for rec in self.levels]

    def covered(self, M):
        return self.covered_level.get(M) is not None

    def to_csv(self):
        cols = ["level", "dim", "max_wavenumber"]
        cols += [f"covered_M{M}" for M in self.cutoffs]
        lines = [",".join(cols)]
        for rec in self.levels:
            row = [str(rec.level), str(rec.dim), str(rec.max_wavenumber)]
            row += ["1" if rec.covered[M] else "0" for M in self.cutoffs]
            lines.append(",".join(row))
        return "\n".join(lines) + "\n"


def certify_saturation(K, cutoffs, max_level=8):
    """Iterate the subspace recursion until every divergence-free field on
    the requested cube truncations is contained, or the chain stops growing,
    or ``max_level`` is reached.  Never raises on non-coverage: the ledger
    records what happened and callers decide.
    """
    if not isinstance(K, ModeSet):
        K = ModeSet(K, auto_symmetrize=True)
    if isinstance(cutoffs, int):
        cutoffs = (cutoffs,)
    cutoffs = tuple(sorted(set(int(M) for M in cutoffs)))
    if any(M < 1 for M in cutoffs):
        raise ValueError("cutoffs must be >= 1")

    targets = {M: truncation_target_fields(M) for M in cutoffs}
    remaining = {M: {ell: list(fields) for ell, fields in targets[M]} for M in cutoffs}
    ledger = SaturationLedger(K, cutoffs)

    st = _Staircase()
    gens = h0_generator_fields(K)
    new_rows = _insert_fields(st, gens)

    def snapshot(level):
        covered = {}
        count = {}
        for M in cutoffs:
            rem = remaining[M]
            for ell in list(rem):
                rem[ell] = [f for f in rem[ell] if not st.contains_field(f)]
                if not rem[ell]:
                    del rem[ell]
            total = 4 * len(targets[M])
            outstanding = sum(len(v) for v in rem.values())
            count[M] = total - outstanding
            covered[M] = not rem
            if covered[M] and M not in ledger.covered_level:
                ledger.covered_level[M] = level
        support = st.support_modes()
        maxwav = max((norm_inf(m) for m in support), default=0)
        ledger.levels.append(LevelRecord(level, st.rank, maxwav, covered, count))
        return all(covered[M] for M in cutoffs)

    done = snapshot(0)
    level = 0
    while not done and level < max_level:
        level += 1
        prev_fields = [st.row_to_field(i) for i in new_rows]
        products = []
        for f in prev_fields:
            for g in gens:
                q = bilinear_Q(f, g)
                if not q.is_zero:
                    products.append(q)
        new_rows = _insert_fields(st, products)
        done = snapshot(level)
        if not new_rows:
            ledger.stopped = "fixed_point"
            break
    if done:
        ledger.stopped = "covered"
    elif not ledger.stopped:
        ledger.stopped = "max_level"
    ledger.final_subspace = RationalSubspace(st)
    return ledger


# ---------------------------------------------------------------------------
# constructive witnesses


def common_perp(l1, l2):
    """Unit vector orthogonal to both wavevectors, sign fixed by making the
    first nonzero component of the integer cross product positive."""
    c = _signed_cross(l1, l2)
    n = math.sqrt(norm_sq(c))
    return (c[0] / n, c[1] / n, c[2] / n)


def _signed_cross(l1, l2):
    l1, l2 = check_wavevector(l1), check_wavevector(l2)
    c = cross(l1, l2)
    if c == (0, 0, 0):
        raise DegeneratePairError(f"wavevectors {l1} and {l2} are parallel")
    for comp in c:
        if comp != 0:
            if comp < 0:
                c = (-c[0], -c[1], -c[2])
            break
    return c


@dataclass(frozen=True)
class WitnessCombination:
    """Explicit convection combination evaluating to a named single mode."""

    terms: tuple  # (coefficient, left field, right field)
    claimed: TrigField

    def evaluate(self):
        total = TrigField()
        for coef, fu, fv in self.terms:
            total = total + bilinear_Q(fu, fv).scale(coef)
        return total

    def is_sound(self):
        return self.evaluate() == self.claimed


def witness_sum_mode(l1, l2):
    """Convection combinations producing exactly the cosine and sine modes at
    l1 + l2 with the common-perpendicular direction as coefficient.

    With a the integer cross product of the pair and b rational in the plane
    orthogonal to l2 normalised so <b, l1> = 1, the difference-mode terms of
    the product identities cancel and the sum mode survives alone:

        Q(a cos<l1>, b sin<l2>) + Q(b cos<l2>, a sin<l1>) = a cos<l1+l2>
        Q(a sin<l1>, b sin<l2>) - Q(a cos<l1>, b cos<l2>) = a sin<l1+l2>

    Returns the (cosine, sine) pair of witness combinations; everything is
    exact rational data.
    """
    a = _signed_cross(l1, l2)
    b0 = cross(l2, a)
    scale = dot(b0, l1)
    assert scale != 0
    b = tuple(Fraction(x, scale) for x in b0)
    a_frac = tuple(Fraction(x) for x in a)

    lsum = add(l1, l2)
    cos_claimed = TrigField.single_cos(lsum, a_frac)
    sin_claimed = TrigField.single_sin(lsum, a_frac)

    cos_terms = (
        (1, TrigField.single_cos(l1, a_frac), TrigField.single_sin(l2, b)),
        (1, TrigField.single_cos(l2, b), TrigField.single_sin(l1, a_frac)),
    )
    sin_terms = (
        (1, TrigField.single_sin(l1, a_frac), TrigField.single_sin(l2, b)),
        (-1, TrigField.single_cos(l1, a_frac), TrigField.single_cos(l2, b)),
    )
    return (
        WitnessCombination(cos_terms, cos_claimed),
        WitnessCombination(sin_terms, sin_claimed),
    )
