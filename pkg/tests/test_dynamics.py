import math

import numpy as np
import pytest

from nscontrol.dynamics import (
    BlowUpError,
    ForcingSpec,
    SimConfig,
    Trajectory,
    get_basis,
    remainder_diagnostic,
    solve_linearised_euler,
    solve_ns,
    step_ns,
)
from nscontrol.fields import TrigField, random_solenoidal, sobolev_norm, unit_cos_mode
from nscontrol.signals import ConstantSignal, PiecewiseConstantSignal, as_signal
from nscontrol.spectral import SpectralBasis


def cube_modes(M):
    return get_basis(M).canonical


class TestSpectralBasis:
    def test_encode_decode_round_trip(self):
        basis = get_basis(2)
        rng = np.random.default_rng(0)
        u = random_solenoidal(rng, cube_modes(2), 2, 0.7)
        v = basis.decode(basis.encode(u))
        assert sobolev_norm(u - v, 0) < 1e-14 * sobolev_norm(u, 0)

    def test_coords_round_trip_and_norm(self):
        basis = get_basis(2)
        rng = np.random.default_rng(1)
        u = random_solenoidal(rng, cube_modes(2), 1, 1.3)
        hat = basis.encode(u)
        x = basis.coords(hat)
        assert np.allclose(basis.coords(basis.from_coords(x)), x, atol=1e-14)
        for k in (0, 3):
            w = basis.sobolev_weights(k)
            assert abs(np.linalg.norm(w * x) - sobolev_norm(u, k)) < 1e-12 * (
                1 + sobolev_norm(u, k))
            assert abs(basis.norm_k(hat, k) - sobolev_norm(u, k)) < 1e-12

    def test_convect_matches_mode_expansion(self):
        from nscontrol.bilinear import bilinear_Q

        basis = get_basis(2)
        rng = np.random.default_rng(2)
        u = random_solenoidal(rng, [(1, 0, 0), (0, 1, 1)], 1)
        v = random_solenoidal(rng, [(0, 1, 0), (1, -1, 0)], 1)
        got = basis.decode(basis.q_form(basis.encode(u), basis.encode(v)))
        want = bilinear_Q(u, v)
        # the basis drops products outside the cube; restrict the expansion
        kept = {m: want.coeff(m) for m in want.support() if m in basis.index}
        want_proj = TrigField(kept, validate=False)
        assert sobolev_norm(got - want_proj, 0) < 1e-13 * max(1.0, sobolev_norm(want_proj, 0))

    def test_convection_matrix_consistent(self):
        basis = get_basis(1)
        rng = np.random.default_rng(3)
        w = random_solenoidal(rng, [(1, 0, 0), (0, 0, 1)], 1)
        w_hat = basis.encode(w)
        mat = basis.convection_matrix(w_hat)
        v = random_solenoidal(rng, cube_modes(1), 1)
        x = basis.field_coords(v)
        direct = basis.coords(basis.q_form(basis.encode(v), w_hat))
        assert np.allclose(mat @ x, direct, atol=1e-12)


class TestConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            SimConfig(nu=-0.1, horizon=1.0)
        with pytest.raises(ValueError):
            SimConfig(nu=0.1, horizon=0.0)
        with pytest.raises(ValueError):
            SimConfig(nu=0.1, horizon=1.0, k=2)
        SimConfig(nu=0.0, horizon=1.0)  # inviscid allowed


class TestViscousRuns:
    def test_single_eigenmode_exact_decay(self):
        # convection degenerates on one mode, so the decay is pure
        nu = 0.37
        ell = (1, 2, 2)
        u0 = unit_cos_mode(ell)
        cfg = SimConfig(nu=nu, horizon=1.0, cutoff=2, num_steps=100)
        traj = solve_ns(u0, cfg)
        expected = math.exp(-nu * 9.0 * 1.0)
        got = sobolev_norm(traj.endpoint, 0)
        assert abs(got - expected) < 1e-10

    def test_heat_decay_with_convection_suppressed(self):
        cfg = SimConfig(nu=1.0, horizon=1.0, cutoff=2, num_steps=100, nonlinearity=False)
        rng = np.random.default_rng(4)
        u0 = random_solenoidal(rng, cube_modes(2), 2, 0.5)
        traj = solve_ns(u0, cfg)
        basis = cfg.basis()
        hat = basis.encode(u0) * np.exp(-basis.lam)[:, None]
        assert basis.norm_k(traj.endpoint_hat - hat, 0) < 1e-10

    def test_zero_stays_zero(self):
        cfg = SimConfig(nu=0.1, horizon=0.5, cutoff=1, num_steps=20)
        traj = solve_ns(TrigField(), cfg)
        assert sobolev_norm(traj.endpoint, 3) == 0.0

    def test_inviscid_energy_conservation(self):
        cfg = SimConfig(nu=0.0, horizon=1.0, cutoff=2, num_steps=100)
        rng = np.random.default_rng(5)
        u0 = random_solenoidal(rng, cube_modes(2), 2, 0.5)
        traj = solve_ns(u0, cfg)
        series = traj.sobolev_series(0)
        assert np.max(np.abs(series - series[0])) < 1e-8

    def test_blowup_guard(self):
        cfg = SimConfig(nu=0.1, horizon=1.0, cutoff=1, num_steps=10,
                        blowup_threshold=1e-6)
        u0 = unit_cos_mode((1, 0, 0))
        with pytest.raises(BlowUpError) as err:
            solve_ns(u0, cfg)
        assert err.value.time <= 1.0

    def test_step_halving_order(self):
        # Richardson self-convergence on a smooth forced run: order 4
        rng = np.random.default_rng(6)
        u0 = random_solenoidal(rng, cube_modes(2), 2, 0.4)
        h = random_solenoidal(rng, cube_modes(2), 2, 0.3)
        runs = {}
        for n in (25, 50, 100):
            cfg = SimConfig(nu=0.2, horizon=1.0, cutoff=2, num_steps=n)
            runs[n] = solve_ns(u0, cfg, ForcingSpec(h=h)).endpoint_hat
        basis = get_basis(2)
        e1 = basis.norm_k(runs[25] - runs[50], 3)
        e2 = basis.norm_k(runs[50] - runs[100], 3)
        ratio = e1 / e2
        assert 16 * 0.7 < ratio < 16 * 1.4

    def test_adaptive_grid_runs(self):
        cfg = SimConfig(nu=0.1, horizon=0.3, cutoff=2, num_steps=None, dt_max=0.02)
        rng = np.random.default_rng(7)
        u0 = random_solenoidal(rng, cube_modes(2), 2, 0.5)
        traj = solve_ns(u0, cfg)
        assert traj.times[0] == 0.0
        assert abs(traj.times[-1] - 0.3) < 1e-12
        assert np.all(np.diff(traj.times) > 0)

    def test_piecewise_forcing_breakpoints_in_grid(self):
        basis = get_basis(1)
        f1 = unit_cos_mode((1, 0, 0)).scale(0.3)
        f2 = unit_cos_mode((0, 1, 0)).scale(-0.2)
        sig = PiecewiseConstantSignal([0.0, 0.13, 0.5], [f1, f2])
        cfg = SimConfig(nu=0.1, horizon=0.5, cutoff=1, num_steps=16)
        traj = solve_ns(TrigField(), cfg, ForcingSpec(eta=sig))
        assert np.any(np.abs(traj.times - 0.13) < 1e-12)

    def test_step_ns_matches_solver_single_step(self):
        rng = np.random.default_rng(8)
        u0 = random_solenoidal(rng, cube_modes(1), 2, 0.4)
        cfg = SimConfig(nu=0.2, horizon=0.01, cutoff=1, num_steps=1)
        via_solver = solve_ns(u0, cfg).endpoint
        via_step = step_ns(u0, 0.0, 0.01, cfg)
        assert sobolev_norm(via_solver - via_step, 0) < 1e-13


def _zero_trajectory(basis, horizon):
    z = np.zeros((basis.n_signed, 3), dtype=complex)
    return Trajectory(np.array([0.0, horizon]), [z, z], basis)


class TestLinearised:
    def test_zero_reference_zero_control_is_constant(self):
        basis = get_basis(1)
        rng = np.random.default_rng(9)
        v0 = random_solenoidal(rng, cube_modes(1), 2, 0.5)
        cfg = SimConfig(nu=0.0, horizon=1.0, cutoff=1, num_steps=30)
        traj = solve_linearised_euler(v0, _zero_trajectory(basis, 1.0), None, cfg)
        assert sobolev_norm(traj.endpoint - v0, 3) < 1e-12

    def test_linearity_and_superposition(self):
        basis = get_basis(1)
        rng = np.random.default_rng(10)
        w_states = [random_solenoidal(rng, cube_modes(1), 2, 0.6) for _ in range(4)]
        times = np.linspace(0.0, 1.0, 4)
        w_path = Trajectory(times, [basis.encode(w) for w in w_states], basis)
        cfg = SimConfig(nu=0.0, horizon=1.0, cutoff=1, num_steps=40)
        v0 = random_solenoidal(rng, cube_modes(1), 3, 0.4)
        g1 = ConstantSignal(random_solenoidal(rng, cube_modes(1), 3, 0.2))
        g2 = ConstantSignal(random_solenoidal(rng, cube_modes(1), 3, 0.3))

        sol = lambda v, g: solve_linearised_euler(v, w_path, g, cfg).endpoint_hat
        a = 1.7
        scaled = sol(v0.scale(a), g1.scaled(a))
        base = sol(v0, g1)
        assert basis.norm_k(scaled - a * base, 3) < 1e-10 * max(1.0, basis.norm_k(base, 3))

        both = sol(v0, g1 + g2)
        split = sol(v0, g1) + sol(TrigField(), g2)
        assert basis.norm_k(both - split, 3) < 1e-10

    def test_horizon_mismatch_rejected(self):
        basis = get_basis(1)
        cfg = SimConfig(nu=0.0, horizon=2.0, cutoff=1, num_steps=10)
        with pytest.raises(ValueError):
            solve_linearised_euler(TrigField(), _zero_trajectory(basis, 1.0), None, cfg)


class TestRemainder:
    def test_synthetic_ansatz_gives_zero(self):
        # u constructed exactly as v_delta + w_delta / ... shifted
        basis = get_basis(1)
        rng = np.random.default_rng(11)
        delta = 0.25
        times_u = np.linspace(0.0, delta, 6)
        v_states = [random_solenoidal(rng, cube_modes(1), 2, 0.5) for _ in range(6)]
        w_states = [random_solenoidal(rng, cube_modes(1), 2, 0.5) for _ in range(6)]
        v_hats = [basis.encode(f) for f in v_states]
        w_hats = [basis.encode(f) for f in w_states]
        u_hats = [v + w / delta for v, w in zip(v_hats, w_hats)]
        cfgk = SimConfig(nu=0.1, horizon=delta, cutoff=1, k=3)
        u_path = Trajectory(times_u, u_hats, basis, cfgk)
        v_path = Trajectory(times_u / delta, v_hats, basis)
        w_path = Trajectory(times_u / delta, w_hats, basis)
        ts, vals = remainder_diagnostic(u_path, v_path, w_path, delta)
        assert np.max(vals) < 1e-12

    def test_zero_at_origin_when_ansatz_matches(self):
        basis = get_basis(1)
        rng = np.random.default_rng(12)
        u0 = random_solenoidal(rng, cube_modes(1), 2, 0.5)
        delta = 0.5
        u_path = Trajectory(np.array([0.0, delta]),
                            [basis.encode(u0), basis.encode(u0)], basis,
                            SimConfig(nu=0.1, horizon=delta, cutoff=1))
        v_path = Trajectory(np.array([0.0, 1.0]),
                            [basis.encode(u0), basis.encode(u0)], basis)
        w_path = _zero_trajectory(basis, 1.0)
        ts, vals = remainder_diagnostic(u_path, v_path, w_path, delta)
        assert vals[0] < 1e-13
