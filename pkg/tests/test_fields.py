import math
from fractions import Fraction

import numpy as np
import pytest

from nscontrol import wavevec
from nscontrol.fields import (
    TrigField,
    from_text,
    l2_inner,
    random_solenoidal,
    sobolev_norm,
    stokes_apply,
    to_text,
    unit_cos_mode,
)
from nscontrol.wavevec import (
    InvalidWaveVector,
    leray_project,
    polarization_basis,
    unit_polarization,
)


class TestWaveVectors:
    def test_zero_rejected(self):
        with pytest.raises(InvalidWaveVector):
            wavevec.check_wavevector((0, 0, 0))
        with pytest.raises(InvalidWaveVector):
            polarization_basis((0, 0, 0))

    def test_canonicalization(self):
        assert wavevec.canonicalize((0, -1, 2)) == ((0, 1, -2), -1)
        assert wavevec.canonicalize((3, 0, 0)) == ((3, 0, 0), 1)
        assert wavevec.is_canonical((0, 0, 1))
        assert not wavevec.is_canonical((0, 0, -1))

    def test_axis_polarization_convention(self):
        basis = polarization_basis((0, 0, 1))
        assert basis.l_plus == (1.0, 0.0, 0.0)
        assert basis.l_minus == (0.0, 1.0, 0.0)

    def test_polarization_invariants(self):
        for ell in [(1, 0, 0), (1, 2, 2), (0, 1, -3), (2, -1, 5)]:
            basis = polarization_basis(ell)
            lp, lm = basis.l_plus, basis.l_minus
            canon = basis.wavevector
            assert abs(sum(p * c for p, c in zip(lp, canon))) < 1e-15 * wavevec.norm_sq(canon)
            assert abs(sum(p * c for p, c in zip(lm, canon))) < 1e-15 * wavevec.norm_sq(canon)
            assert abs(sum(p * q for p, q in zip(lp, lm))) < 1e-15
            assert abs(math.hypot(*lp) - 1.0) < 1e-15
            assert abs(math.hypot(*lm) - 1.0) < 1e-15

    def test_polarization_deterministic_and_shared(self):
        assert polarization_basis((1, 2, 2)) == polarization_basis((-1, -2, -2))
        assert unit_polarization((1, 0, 0)) != unit_polarization((-1, 0, 0))

    def test_leray_project(self):
        assert leray_project((1, 0, 0), (0, 0, 1)) == (1, 0, 0)
        assert leray_project((0, 0, 1), (0, 0, 1)) == (0, 0, 0)
        assert leray_project((1, 1, 0), (1, 1, 0)) == (0, 0, 0)
        assert leray_project((1, -1, 3), (1, 1, 0)) == (1, -1, 3)
        # residual a - Pa is parallel to ell and Pa is orthogonal to ell
        a, ell = (Fraction(2), Fraction(5), Fraction(-1)), (1, 2, 3)
        p = leray_project(a, ell)
        assert wavevec.dot(p, ell) == 0
        resid = tuple(x - y for x, y in zip(a, p))
        assert wavevec.cross(resid, ell) == (0, 0, 0)


class TestTrigField:
    def test_folding_and_normal_form(self):
        # cos is even, sin is odd in the wavevector
        f = TrigField({(0, 0, -1): ((1, 0, 0), (0, 1, 0))})
        a, b = f.coeff((0, 0, 1))
        assert a == (1, 0, 0)
        assert b == (0, -1, 0)
        g = TrigField({(0, 0, 1): ((1, 0, 0), (0, -1, 0))})
        assert f == g

    def test_zero_pairs_pruned(self):
        f = TrigField({(1, 0, 0): ((0, 0, 0), (0, 0, 0)), (0, 1, 0): ((0, 0, 1), (0, 0, 0))})
        assert f.support() == frozenset({(0, 1, 0)})

    def test_divergence_validation(self):
        with pytest.raises(ValueError):
            TrigField({(1, 0, 0): ((1, 0, 0), (0, 0, 0))})
        TrigField({(1, 0, 0): ((0, 1, 0), (0, 0, 0))})  # fine

    def test_arithmetic_cancellation(self):
        f = TrigField({(1, 0, 0): ((0, Fraction(1, 3), 0), (0, 0, Fraction(2)))})
        g = f + f.scale(-1)
        assert g.is_zero
        assert (f + f) == f.scale(2)

    def test_exactness_tracking(self):
        f = TrigField({(1, 0, 0): ((0, Fraction(1, 3), 0), (0, 0, 0))})
        assert f.exact
        assert not f.to_float().exact
        mixed = f + TrigField({(0, 1, 0): ((0.5, 0, 0), (0, 0, 0))})
        assert not mixed.exact

    def test_float_pruning(self):
        f = TrigField({(1, 0, 0): ((0.0, 1.0, 0.0), (0, 0, 0)),
                       (0, 1, 0): ((1e-16, 0, 0), (0, 0, 0))})
        assert f.support() == frozenset({(1, 0, 0)})


class TestNorms:
    def test_unit_mode_all_orders_agree(self):
        u = unit_cos_mode((1, 0, 0))
        vals = [sobolev_norm(u, k) for k in range(5)]
        assert all(abs(v - vals[0]) < 1e-15 for v in vals)

    def test_zero_field(self):
        assert sobolev_norm(TrigField(), 3) == 0.0

    def test_monotone_in_order(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            u = random_solenoidal(rng, [(1, 0, 0), (1, 2, 0), (0, 1, 3)], 2)
            assert sobolev_norm(u, 3) >= sobolev_norm(u, 0) - 1e-12

    def test_stokes_eigenrelation(self):
        for ell in [(1, 0, 0), (1, 2, 2), (3, -4, 8), (8, 8, 8)]:
            canon, _ = wavevec.canonicalize(ell)
            u1, _u2 = wavevec.perp_basis_int(canon)
            u = TrigField.single_cos(canon, u1)
            assert stokes_apply(u) == u.scale(wavevec.norm_sq(canon))
        assert stokes_apply(TrigField()).is_zero

    def test_stokes_unit_eigenvalue(self):
        u = unit_cos_mode((1, 0, 0))
        v = stokes_apply(u)
        assert v == u


class TestSerialization:
    def test_round_trip_exact(self):
        f = TrigField({(1, 2, 0): ((Fraction(2, 3), Fraction(-1, 3), 5), (0, 0, 0)),
                       (0, 0, 1): ((1, 1, 0), (Fraction(7, 2), -2, 0))})
        assert from_text(to_text(f)) == f

    def test_round_trip_float(self):
        rng = np.random.default_rng(3)
        f = random_solenoidal(rng, [(1, 0, 0), (2, 1, -1)], 3, amplitude=0.37)
        assert from_text(to_text(f)) == f

    def test_bad_line(self):
        with pytest.raises(ValueError):
            from_text("1 2 3 4\n")


def test_l2_inner_matches_norm():
    rng = np.random.default_rng(11)
    u = random_solenoidal(rng, [(1, 0, 0), (0, 1, 1)], 1)
    assert abs(l2_inner(u, u) - sobolev_norm(u, 0) ** 2) < 1e-12
