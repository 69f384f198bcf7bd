from collections import deque
from fractions import Fraction

import numpy as np
import pytest

from nscontrol import wavevec
from nscontrol.fields import TrigField
from nscontrol.saturation import (
    DegeneratePairError,
    ModeSet,
    axes_modeset,
    certify_saturation,
    common_perp,
    h0_subspace,
    is_generator,
    next_subspace,
    truncation_target_fields,
    witness_sum_mode,
)

EVEN_AXES = ModeSet([(2, 0, 0), (0, 2, 0), (0, 0, 2)], auto_symmetrize=True)

# canonical halves; symmetry is completed on construction
GENERATORS = [
    [(1, 0, 0), (0, 1, 0), (0, 0, 1)],
    [(1, 0, 0), (0, 1, 0), (0, 0, 1), (1, 1, 0)],
    [(1, 0, 0), (0, 1, 0), (0, 0, 1), (1, 1, 1)],
    [(1, 0, 0), (0, 1, 0), (1, 1, 1)],
    [(1, 1, 0), (0, 1, 1), (0, 0, 1)],
    [(1, 1, 1), (1, 1, 0), (1, 0, 0)],
    [(2, 1, 0), (1, 1, 0), (0, 0, 1)],
    [(1, 0, 0), (0, 2, 1), (0, 1, 1)],
    [(1, 1, 0), (0, 1, 0), (0, 1, 1)],
    [(1, 1, 0), (0, 1, 0), (0, 0, 1)],
]
NON_GENERATORS = [
    [(2, 0, 0), (0, 2, 0), (0, 0, 2)],
    [(1, 1, 0), (0, 1, 1), (1, 0, 1)],
    [(1, 0, 0), (2, 0, 0)],
    [(1, 0, 0), (0, 1, 0)],
    [(2, 0, 0), (0, 2, 0), (0, 0, 2), (1, 1, 1)],
]


def bfs_generator_oracle(vectors, box=8):
    """Breadth-first closure of integer combinations inside a box; a set
    generates Z^3 iff it reaches the three unit vectors."""
    vs = sorted({tuple(v) for v in vectors} | {wavevec.negate(v) for v in vectors})
    reach = {(0, 0, 0)}
    dq = deque(reach)
    while dq:
        p = dq.popleft()
        for v in vs:
            q = (p[0] + v[0], p[1] + v[1], p[2] + v[2])
            if max(abs(c) for c in q) <= box and q not in reach:
                reach.add(q)
                dq.append(q)
    return all(e in reach for e in ((1, 0, 0), (0, 1, 0), (0, 0, 1)))


def sympy_generator_oracle(vectors):
    from sympy import Matrix
    from sympy.matrices.normalforms import smith_normal_form

    m = smith_normal_form(Matrix([list(v) for v in vectors]))
    diag = [m[i, i] for i in range(min(m.shape))]
    return len(diag) == 3 and all(abs(d) == 1 for d in diag)


class TestModeSet:
    def test_symmetry_enforced(self):
        with pytest.raises(ValueError):
            ModeSet([(1, 0, 0)])
        ms = ModeSet([(1, 0, 0)], auto_symmetrize=True)
        assert ms.symmetrized
        assert (-1, 0, 0) in ms

    def test_from_text(self):
        ms = ModeSet.from_text("1 0 0\n0,1,0\n# comment\n")
        assert ms.canonical() == [(0, 1, 0), (1, 0, 0)]

    def test_zero_rejected(self):
        with pytest.raises(ValueError):
            ModeSet([(0, 0, 0)])


class TestH0:
    def test_axes_dimension(self):
        assert h0_subspace(axes_modeset()).rank == 12

    def test_single_pair(self):
        assert h0_subspace(ModeSet([(1, 0, 0), (-1, 0, 0)])).rank == 4

    def test_empty(self):
        assert h0_subspace(ModeSet([])).rank == 0

    def test_basis_rows_satisfy_divergence(self):
        H0 = h0_subspace(axes_modeset())
        for f in H0.basis_fields():
            for ell, (a, b) in f.items():
                assert wavevec.dot(a, ell) == 0
                assert wavevec.dot(b, ell) == 0


class TestRecursion:
    def test_first_level_dims_frozen(self):
        # computed once by this engine and pinned; the delta-direction-only
        # structure of the first level is what the witness calculus predicts
        K = axes_modeset()
        H0 = h0_subspace(K)
        H1 = next_subspace(H0, H0)
        assert H1.rank == 24
        H2 = next_subspace(H1, H0)
        assert H2.rank == 64

    def test_h1_inside_radius_two_ball(self):
        K = axes_modeset()
        H1 = next_subspace(h0_subspace(K), h0_subspace(K))
        assert all(wavevec.norm_sq(m) <= 4 for m in H1.support_modes())

    def test_next_of_zero_is_zero(self):
        K = axes_modeset()
        zero = h0_subspace(ModeSet([]))
        assert next_subspace(zero, h0_subspace(K)).rank == 0

    def test_determinism_under_permuted_insertion(self):
        K = axes_modeset()
        H0a = h0_subspace(K)
        # build the same span from reversed, rescaled generators
        from nscontrol.saturation import RationalSubspace, _Staircase, h0_generator_fields

        st = _Staircase()
        fields = [f.scale(Fraction(3, 7)) for f in reversed(h0_generator_fields(K))]
        for f in fields:
            st.extend_modes(f.support())
        for f in fields:
            st.insert(f)
        H0b = RationalSubspace(st)
        assert H0a == H0b
        H1a = next_subspace(H0a, H0a)
        H1b = next_subspace(H0b, H0b)
        assert H1a.rank == H1b.rank
        assert H1a == H1b
        assert H1a.basis == H1b.basis  # canonical echelon rows agree

    def test_monotone_contains_previous(self):
        K = axes_modeset()
        H0 = h0_subspace(K)
        H1 = next_subspace(H0, H0)
        assert H1.contains_subspace(H0)


class TestGenerator:
    def test_examples(self):
        assert is_generator(axes_modeset())
        assert not is_generator(EVEN_AXES)
        assert not is_generator(ModeSet([(1, 1, 0), (0, 1, 1), (1, 0, 1)], auto_symmetrize=True))

    def test_fixed_lists(self):
        for halves in GENERATORS:
            assert is_generator(ModeSet(halves, auto_symmetrize=True)), halves
        for halves in NON_GENERATORS:
            assert not is_generator(ModeSet(halves, auto_symmetrize=True)), halves

    def test_against_oracles_random(self):
        rng = np.random.default_rng(314)
        for _ in range(50):
            n = int(rng.integers(2, 5))
            vecs = set()
            while len(vecs) < n:
                v = tuple(int(c) for c in rng.integers(-3, 4, size=3))
                if v != (0, 0, 0):
                    vecs.add(v)
            ms = ModeSet(vecs, auto_symmetrize=True)
            got = is_generator(ms)
            assert got == bfs_generator_oracle(vecs)
            assert got == sympy_generator_oracle(sorted(ms.vectors))


class TestCertification:
    def test_axes_covers_both_cutoffs(self):
        led = certify_saturation(axes_modeset(), (1, 2), max_level=8)
        assert led.stopped == "covered"
        assert led.covered_level == {1: 3, 2: 5}
        dims = led.dims
        assert dims == sorted(dims)
        assert all(d2 > d1 for d1, d2 in zip(dims, dims[1:]))

    def test_even_sublattice_never_covers(self):
        led = certify_saturation(EVEN_AXES, (1,), max_level=3)
        assert not led.covered(1)
        assert all(rec.coverage_count[1] == 0 for rec in led.levels)
        support = led.final_subspace.support_modes()
        assert all(all(c % 2 == 0 for c in m) for m in support)

    def test_collinear_set_hits_fixed_point(self):
        led = certify_saturation(ModeSet([(1, 0, 0), (2, 0, 0)], auto_symmetrize=True),
                                 (1,), max_level=6)
        assert led.stopped == "fixed_point"
        assert led.dims[-1] == led.dims[-2] == 8
        assert not led.covered(1)

    def test_generator_list_covers_m1(self):
        for halves in GENERATORS:
            led = certify_saturation(ModeSet(halves, auto_symmetrize=True), (1,), max_level=8)
            assert led.stopped == "covered", (halves, led.dims)

    def test_non_generator_list_never_covers_m1(self):
        for halves in NON_GENERATORS:
            led = certify_saturation(ModeSet(halves, auto_symmetrize=True), (1,), max_level=3)
            assert not led.covered(1), halves

    def test_coverage_matches_enumeration(self):
        # dimension of the M=1 target family: 4 per canonical mode of the cube
        targets = truncation_target_fields(1)
        assert len(targets) == 13
        led = certify_saturation(axes_modeset(), (1,), max_level=4)
        H = led.final_subspace
        for _ell, fields in targets:
            for f in fields:
                assert H.contains(f)

    def test_incremental_engine_matches_public_recursion(self):
        K = axes_modeset()
        led = certify_saturation(K, (1,), max_level=2)
        H0 = h0_subspace(K)
        H1 = next_subspace(H0, H0)
        H2 = next_subspace(H1, H0)
        assert [H0.rank, H1.rank, H2.rank] == led.dims[:3]
        assert led.final_subspace.contains_subspace(H2)
        assert H2.contains_subspace(led.final_subspace)

    def test_inclusion_chain_instance(self):
        # one sum-step of the mode set costs at most three recursion levels
        K = axes_modeset()
        H0 = h0_subspace(K)
        H = H0
        for _ in range(3):
            H = next_subspace(H, H0)
        K1 = set(K.vectors)
        for a in K.vectors:
            for b in K.vectors:
                if not wavevec.parallel(a, b):
                    K1.add(wavevec.add(a, b))
        assert H.contains_subspace(h0_subspace(ModeSet(K1)))


class TestWitnesses:
    def test_common_perp_examples(self):
        assert common_perp((1, 0, 0), (0, 1, 0)) == (0.0, 0.0, 1.0)
        v = common_perp((1, 1, 0), (0, 1, 1))
        s = 3 ** -0.5
        assert max(abs(a - b) for a, b in zip(v, (s, -s, s))) < 1e-15
        with pytest.raises(DegeneratePairError):
            common_perp((1, 0, 0), (1, 0, 0))
        with pytest.raises(DegeneratePairError):
            common_perp((1, 2, 0), (-2, -4, 0))

    def test_axis_witness_exact_value(self):
        cw, sw = witness_sum_mode((1, 0, 0), (0, 1, 0))
        assert cw.evaluate() == TrigField.single_cos((1, 1, 0), (0, 0, Fraction(1)))
        assert sw.evaluate() == TrigField.single_sin((1, 1, 0), (0, 0, Fraction(1)))

    def test_witness_support_is_single_sum_mode(self):
        rng = np.random.default_rng(99)
        for _ in range(20):
            while True:
                l1 = tuple(int(c) for c in rng.integers(-3, 4, size=3))
                l2 = tuple(int(c) for c in rng.integers(-2, 3, size=3))
                if l1 != (0, 0, 0) and l2 != (0, 0, 0) and not wavevec.parallel(l1, l2):
                    break
            cw, sw = witness_sum_mode(l1, l2)
            assert cw.is_sound() and sw.is_sound()
            target = wavevec.canonicalize(wavevec.add(l1, l2))[0]
            assert cw.evaluate().support() == frozenset({target})

    def test_parallel_rejected(self):
        with pytest.raises(DegeneratePairError):
            witness_sum_mode((1, 0, 0), (2, 0, 0))
