"""Projected convection forms on trigonometric fields.

Three independent routes to the same bilinear objects live here:

* ``bilinear_B`` expands ``Pi(<u,grad>v)`` mode pair by mode pair through
  the four product-to-sum rules for cos/sin products;
* ``q_closed_form`` writes the symmetrised form of two single modes
  directly from the closed projection identities;
* ``Q_oracle`` evaluates the convection terms pointwise on a uniform grid
  and projects in discrete Fourier space.  It exists purely for testing.

All routes stay inside the rationals when fed exact fields: the only
divisions are by 2 and by integer squared norms.
"""

from __future__ import annotations

import itertools
from fractions import Fraction

import numpy as np

from . import wavevec
from .fields import TrigField
from .wavevec import add, dot, leray_project, norm_inf, sub


class AliasingError(ValueError):
    pass


_COS, _SIN = 0, 1


def _half(s):
    return s / 2 if isinstance(s, float) else Fraction(s, 2)


def _advection_terms(fu, lu, a, fv, lv, b):
    """Terms of <u,grad>v for u = a tr_fu<lu,x>, v = b tr_fv<lv,x>.

    Yields (flavor, wavevector, scalar) with the convention that the term
    is scalar * b * tr_flavor<wavevector, x>, before projection.
    """
    s = _half(dot(a, lv))
    if not s:
        return
    lp, lm = add(lu, lv), sub(lu, lv)
    if fu == _COS and fv == _COS:
        # cos A * (-sin B) -> -1/2 [sin(A+B) - sin(A-B)]
        yield _SIN, lp, -s
        yield _SIN, lm, s
    elif fu == _COS and fv == _SIN:
        # cos A * cos B -> 1/2 [cos(A-B) + cos(A+B)]
        yield _COS, lm, s
        yield _COS, lp, s
    elif fu == _SIN and fv == _COS:
        # sin A * (-sin B) -> -1/2 [cos(A-B) - cos(A+B)]
        yield _COS, lm, -s
        yield _COS, lp, s
    else:
        # sin A * cos B -> 1/2 [sin(A+B) + sin(A-B)]
        yield _SIN, lp, s
        yield _SIN, lm, s


def _accumulate(acc, flavor, ell, vec):
    """Fold a raw (flavor, mode, vector) term into canonical storage."""
    if ell == (0, 0, 0):
        return  # projected away with the mean
    vec = leray_project(vec, ell)
    canon, sign = wavevec.canonicalize(ell)
    if flavor == _SIN and sign < 0:
        vec = tuple(-c for c in vec)
    a, b = acc.get(canon, ((0, 0, 0), (0, 0, 0)))
    if flavor == _COS:
        a = tuple(x + y for x, y in zip(a, vec))
    else:
        b = tuple(x + y for x, y in zip(b, vec))
    acc[canon] = (a, b)


def bilinear_B(u, v):
    """Projected convection Pi(<u,grad>v) of two finite-support fields."""
    acc = {}
    for lu, (au, bu) in u.items():
        for lv, (av, bv) in v.items():
            for fu, cu in ((_COS, au), (_SIN, bu)):
                if not any(cu):
                    continue
                for fv, cv in ((_COS, av), (_SIN, bv)):
                    if not any(cv):
                        continue
                    for flavor, ell, s in _advection_terms(fu, lu, cu, fv, lv, cv):
                        _accumulate(acc, flavor, ell, tuple(s * c for c in cv))
    return TrigField(acc, validate=False)


def bilinear_Q(v, w):
    """Symmetrised convection B(v,w) + B(w,v)."""
    return bilinear_B(v, w) + bilinear_B(w, v)


def q_closed_form(flavor1, l1, a, flavor2, l2, b):
    """Symmetrised convection of two single modes from the closed identities.

    Mode one is ``a tr_flavor1<l1,x>`` and mode two ``b tr_flavor2<l2,x>``
    with a, b orthogonal to their wavevectors.  The four flavor cases are

        2Q(a cos, b sin) =  cos<l1-l2> P-(d-) + cos<l1+l2> P+(d+)
        2Q(a cos, b cos) =  sin<l1-l2> P-(d-) - sin<l1+l2> P+(d+)
        2Q(a sin, b sin) =  sin<l1-l2> P-(d-) + sin<l1+l2> P+(d+)

    where d- = <a,l2>b - <b,l1>a, d+ = <a,l2>b + <b,l1>a and P+- projects
    onto the plane orthogonal to l1 +- l2.  The sin/cos case follows by
    symmetry of Q from the cos/sin case with the arguments swapped.
    """
    if flavor1 == _SIN and flavor2 == _COS:
        return q_closed_form(_COS, l2, b, _SIN, l1, a)
    sa = dot(a, l2)
    sb = dot(b, l1)
    d_minus = tuple(_half(sa * y - sb * x) for x, y in zip(a, b))
    d_plus = tuple(_half(sa * y + sb * x) for x, y in zip(a, b))
    lm, lp = sub(l1, l2), add(l1, l2)
    acc = {}
    if (flavor1, flavor2) == (_COS, _SIN):
        _accumulate_nonzero(acc, _COS, lm, d_minus)
        _accumulate_nonzero(acc, _COS, lp, d_plus)
    elif (flavor1, flavor2) == (_COS, _COS):
        _accumulate_nonzero(acc, _SIN, lm, d_minus)
        _accumulate_nonzero(acc, _SIN, lp, tuple(-c for c in d_plus))
    else:  # sin, sin
        _accumulate_nonzero(acc, _SIN, lm, d_minus)
        _accumulate_nonzero(acc, _SIN, lp, d_plus)
    return TrigField(acc, validate=False)


def _accumulate_nonzero(acc, flavor, ell, vec):
    if ell != (0, 0, 0) and any(vec):
        _accumulate(acc, flavor, ell, vec)


# -- grid oracle -------------------------------------------------------------


def _required_grid(u, v):
    ku = max((norm_inf(l) for l in u.support()), default=0)
    kv = max((norm_inf(l) for l in v.support()), default=0)
    return 2 * (ku + kv) + 2


def _eval_on_grid(field, n):
    """Values and spatial gradient of a field on the uniform n^3 grid."""
    idx = np.arange(n) * (2.0 * np.pi / n)
    x, y, z = np.meshgrid(idx, idx, idx, indexing="ij")
    vals = np.zeros((3, n, n, n))
    grad = np.zeros((3, 3, n, n, n))  # grad[i, j] = d_j u_i
    for ell, (a, b) in field.items():
        phase = ell[0] * x + ell[1] * y + ell[2] * z
        c, s = np.cos(phase), np.sin(phase)
        af = [float(t) for t in a]
        bf = [float(t) for t in b]
        for i in range(3):
            vals[i] += af[i] * c + bf[i] * s
            for j in range(3):
                grad[i, j] += (-af[i] * s + bf[i] * c) * ell[j]
    return vals, grad


def Q_oracle(v, w, grid_size=None):
    """Grid-based evaluation of the symmetrised convection, as a test oracle.

    Computes <v,grad>w + <w,grad>v pointwise on a uniform grid fine enough
    to be alias-free, then applies the Leray projection in discrete Fourier
    space and reads the surviving modes back off.
    """
    need = _required_grid(v, w)
    if grid_size is None:
        grid_size = need
    elif grid_size < need:
        raise AliasingError(f"grid size {grid_size} < {need} needed for alias-free output")
    n = grid_size
    vv, gv = _eval_on_grid(v, n)
    wv, gw = _eval_on_grid(w, n)
    conv = np.zeros((3, n, n, n))
    for i in range(3):
        for j in range(3):
            conv[i] += vv[j] * gw[i, j] + wv[j] * gv[i, j]
    hat = [np.fft.fftn(conv[i]) / n**3 for i in range(3)]
    kmax = (max((norm_inf(l) for l in v.support()), default=0)
            + max((norm_inf(l) for l in w.support()), default=0))
    projected = {}
    peak = 0.0
    rng = range(-kmax, kmax + 1)
    for ell in itertools.product(rng, rng, rng):
        if ell == (0, 0, 0) or not wavevec.is_canonical(ell):
            continue
        c = np.array([hat[i][ell[0] % n, ell[1] % n, ell[2] % n] for i in range(3)])
        a = leray_project(tuple(2.0 * c.real), ell)
        b = leray_project(tuple(-2.0 * c.imag), ell)
        projected[ell] = (a, b)
        peak = max(peak, max(map(abs, a + b)))
    cut = 1e-13 * max(peak, 1.0)
    coeffs = {
        ell: ab for ell, ab in projected.items()
        if max(map(abs, ab[0] + ab[1])) >= cut
    }
    return TrigField(coeffs, validate=False)


# -- consistency suite (shared by tests and the CLI) --------------------------


class IdentityReport:
    """Outcome of the closed-form / expansion / grid-oracle comparison."""

    def __init__(self):
        self.checks = []  # (name, worst_residual, tolerance, passed)
        self.warnings = []

    def add(self, name, worst, tol):
        self.checks.append((name, worst, tol, worst <= tol))

    @property
    def passed(self):
        return all(ok for (_, _, _, ok) in self.checks)

    def lines(self):
        out = []
        for name, worst, tol, ok in self.checks:
            status = "PASS" if ok else "FAIL"
            out.append(f"{status} {name}: worst residual {worst:.3e} (tol {tol:.1e})")
        out.extend(f"WARN {w}" for w in self.warnings)
        return out


def _field_diff_rel(f, g):
    num = 0.0
    den = 0.0
    for ell in f.support() | g.support():
        for cf, cg in zip(sum(f.coeff(ell), ()), sum(g.coeff(ell), ())):
            num = max(num, abs(float(cf) - float(cg)))
            den = max(den, abs(float(cf)), abs(float(cg)))
    return num if den == 0.0 else num / den


def _exact_perp_vectors(ell):
    return wavevec.perp_basis_int(ell)


def run_identity_suite(max_wavenumber_exact=2, n_random=100, max_wavenumber_random=4,
                       seed=0, q_impl=None, oracle_rel_tol=1e-10):
    """Cross-check the bilinear form implementations against each other.

    Exact part: for every canonical mode pair with sup-norm up to
    ``max_wavenumber_exact`` and every flavor/polarization combination,
    ``bilinear_Q`` must reproduce ``q_closed_form`` exactly in rational
    arithmetic.  Sampled part: seeded random pairs are compared with the
    grid oracle in floats.  Pass ``q_impl`` to audit an alternative
    implementation (used by the mutation check).
    """
    from .fields import l2_inner, random_solenoidal, sobolev_norm

    q = q_impl if q_impl is not None else bilinear_Q
    report = IdentityReport()

    modes = [
        ell
        for ell in itertools.product(*[range(-max_wavenumber_exact, max_wavenumber_exact + 1)] * 3)
        if ell != (0, 0, 0) and wavevec.is_canonical(ell)
    ]
    if not modes:
        report.warnings.append("empty mode range; exact identity check is vacuous")
        report.add("single-mode closed-form identity (exact)", 0.0, 0.0)
    else:
        worst = 0.0
        exact_ok = True
        for l1, l2 in itertools.product(modes, repeat=2):
            u1, u2 = _exact_perp_vectors(l1)
            v1, v2 = _exact_perp_vectors(l2)
            for f1, f2 in itertools.product((_COS, _SIN), repeat=2):
                for a, b in ((u1, v1), (u1, v2), (u2, v1)):
                    m1 = TrigField.single_cos(l1, a) if f1 == _COS else TrigField.single_sin(l1, a)
                    m2 = TrigField.single_cos(l2, b) if f2 == _COS else TrigField.single_sin(l2, b)
                    got = q(m1, m2)
                    want = q_closed_form(f1, l1, a, f2, l2, b)
                    if got != want:
                        exact_ok = False
                        worst = max(worst, _field_diff_rel(got, want))
        report.add("single-mode closed-form identity (exact)", worst if not exact_ok else 0.0, 0.0)

    rng = np.random.default_rng(seed)
    worst = 0.0
    span = max_wavenumber_random
    for _ in range(n_random):
        pair = []
        for _ in range(2):
            while True:
                ell = tuple(int(c) for c in rng.integers(-span, span + 1, size=3))
                if ell != (0, 0, 0):
                    break
            canon, _sign = wavevec.canonicalize(ell)
            u1, u2 = _exact_perp_vectors(canon)
            g = rng.standard_normal(4)
            a = tuple(g[0] * p + g[1] * q2 for p, q2 in zip(u1, u2))
            b = tuple(g[2] * p + g[3] * q2 for p, q2 in zip(u1, u2))
            flavor = int(rng.integers(0, 2))
            pair.append(
                TrigField.single_cos(canon, a) if flavor == _COS
                else TrigField.single_sin(canon, b)
            )
        got = q(pair[0], pair[1])
        want = Q_oracle(pair[0], pair[1])
        worst = max(worst, _field_diff_rel(got, want))
    report.add(f"grid oracle agreement ({n_random} random pairs)", worst, oracle_rel_tol)

    worst = 0.0
    for _ in range(50):
        modeset = set()
        while len(modeset) < 3:
            ell = tuple(int(c) for c in rng.integers(-2, 3, size=3))
            if ell != (0, 0, 0):
                modeset.add(wavevec.canonicalize(ell)[0])
        u = random_solenoidal(rng, modeset, 0, 1.0)
        v = random_solenoidal(rng, modeset, 0, 1.0)
        bound = sobolev_norm(u, 1) * sobolev_norm(v, 0) * sobolev_norm(v, 1)
        if bound > 0:
            worst = max(worst, abs(l2_inner(bilinear_B(u, v), v)) / bound)
    report.add("energy orthogonality <B(u,v),v> = 0", worst, 1e-11)

    return report
