"""Time integration of the truncated flow equations.

Three systems share one integrating-factor Runge-Kutta core:

* the viscous system  u' + nu L u + B(u) = h + eta   (nu > 0),
* the inviscid system (nu = 0), reached by the same scheme since the
  integrating factor degenerates to the identity,
* the inviscid linearisation  v' + Q(v, w(t)) = g  around a given path.

The linear part is integrated exactly through exp(-nu |l|^2 dt) factors;
convection and forcing get the classical fourth-order explicit treatment.
Grids include every breakpoint of the forcing signals, and one-sided
evaluation at stage endpoints keeps each step's integrand smooth, so the
scheme retains its design order for the piecewise controls used here.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fields import TrigField, sobolev_norm
from .signals import Signal, ZeroSignal, as_signal
from .spectral import SpectralBasis

_BASIS_CACHE = {}


def get_basis(cutoff):
    basis = _BASIS_CACHE.get(cutoff)
    if basis is None:
        basis = SpectralBasis(cutoff)
        _BASIS_CACHE[cutoff] = basis
    return basis


class BlowUpError(RuntimeError):
    """The guarded Sobolev norm exceeded the blow-up threshold.

    At the continuous level a solution can only stop existing if this norm
    diverges at the critical time, so the guard doubles as a finite-time
    blow-up alarm for the truncated runs.
    """

    def __init__(self, time, norm, threshold):
        super().__init__(
            f"H^k norm {norm:.3e} exceeded the blow-up guard {threshold:.1e} "
            f"at t={time:.6g}; last valid time {time:.6g}"
        )
        self.time = time
        self.norm = norm


@dataclass(frozen=True)
class TruncationSpec:
    cutoff: int

    def __post_init__(self):
        if self.cutoff < 1:
            raise ValueError("truncation cutoff must be >= 1")


@dataclass
class SimConfig:
    """Run parameters for the truncated systems.

    nu = 0 selects the inviscid equations.  ``num_steps`` fixes a uniform
    base grid; when omitted, the step comes from the convective bound
    dt = min(dt_max, 0.25 / (nu M^2 + ||u||_1 M)) recomputed each step.
    """

    nu: float
    horizon: float
    cutoff: int = 2
    k: int = 3
    num_steps: int | None = None
    dt_max: float = 0.01
    blowup_threshold: float = 1e8
    nonlinearity: bool = True

    def __post_init__(self):
        if isinstance(self.cutoff, TruncationSpec):
            self.cutoff = self.cutoff.cutoff
        if self.nu < 0:
            raise ValueError("viscosity must be non-negative")
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")
        if self.k < 3:
            raise ValueError("Sobolev order k must be at least 3")
        if self.cutoff < 1:
            raise ValueError("truncation cutoff must be >= 1")

    def basis(self):
        return get_basis(self.cutoff)


@dataclass
class ForcingSpec:
    """Deterministic part plus control part of the right-hand side."""

    h: Signal | TrigField | None = None
    eta: Signal | TrigField | None = None

    def signals(self):
        return as_signal(self.h), as_signal(self.eta)


class Trajectory:
    """Sampled path of a truncated run, one state per accepted grid point."""

    def __init__(self, times, hats, basis, config=None, metadata=None):
        self.times = np.asarray(times, dtype=float)
        self.hats = hats
        self.basis = basis
        self.config = config
        self.metadata = metadata or {}
        self._states = None

    @property
    def states(self):
        if self._states is None:
            self._states = [self.basis.decode(h) for h in self.hats]
        return self._states

    def __len__(self):
        return len(self.times)

    @property
    def endpoint_hat(self):
        return self.hats[-1]

    @property
    def endpoint(self):
        return self.basis.decode(self.hats[-1])

    def hat_at(self, t):
        """Linear interpolation in coefficient space (diagnostics only)."""
        ts = self.times
        if t <= ts[0]:
            return self.hats[0]
        if t >= ts[-1]:
            return self.hats[-1]
        i = int(np.searchsorted(ts, t, side="right")) - 1
        w = (t - ts[i]) / (ts[i + 1] - ts[i])
        return (1.0 - w) * self.hats[i] + w * self.hats[i + 1]

    def state_at(self, t):
        return self.basis.decode(self.hat_at(t))

    def sobolev_series(self, k):
        return np.array([self.basis.norm_k(h, k) for h in self.hats])

    def norm_at(self, t, k):
        return self.basis.norm_k(self.hat_at(t), k)


def _merge_grid(t0, t1, num_steps, breakpoints):
    base = np.linspace(t0, t1, num_steps + 1)
    pts = np.concatenate([base, np.asarray(breakpoints, dtype=float)])
    pts = pts[(pts >= t0) & (pts <= t1)]
    pts = np.unique(pts)
    keep = [pts[0]]
    tol = 1e-12 * max(abs(t0), abs(t1), t1 - t0)
    for p in pts[1:]:
        if p - keep[-1] > tol:
            keep.append(p)
    keep[-1] = t1
    return np.asarray(keep)


def _ifrk4_step(hat, t, dt, nu, lam, rhs):
    """One integrating-factor RK4 step of  u' = -nu L u + N(t, u)."""
    if nu > 0:
        e_half = np.exp(-nu * lam * (dt / 2.0))[:, None]
        e_full = e_half * e_half
    else:
        e_half = e_full = 1.0
    k1 = rhs(t, hat, 1)
    k2 = rhs(t + dt / 2.0, e_half * (hat + (dt / 2.0) * k1), 0)
    k3 = rhs(t + dt / 2.0, e_half * hat + (dt / 2.0) * k2, 0)
    k4 = rhs(t + dt, e_full * hat + dt * (e_half * k3), -1)
    return e_full * hat + (dt / 6.0) * (e_full * k1 + 2.0 * e_half * (k2 + k3) + k4)


def _integrate(basis, hat0, t0, horizon, nu, rhs, cfg, breakpoints, u1norm=None):
    """March the semilinear system across [t0, t0 + horizon].

    Returns (times, hats).  Raises BlowUpError with the last valid time when
    the guarded norm passes the threshold.
    """
    t_end = t0 + horizon
    lam = basis.lam
    times = [t0]
    hats = [hat0]
    if cfg.num_steps is not None:
        grid = _merge_grid(t0, t_end, cfg.num_steps, breakpoints)
        for i in range(len(grid) - 1):
            t, dt = grid[i], grid[i + 1] - grid[i]
            nxt = _ifrk4_step(hats[-1], t, dt, nu, lam, rhs)
            guard = basis.norm_k(nxt, cfg.k)
            if not np.isfinite(guard) or guard > cfg.blowup_threshold:
                raise BlowUpError(float(t), guard, cfg.blowup_threshold)
            times.append(grid[i + 1])
            hats.append(nxt)
        return np.asarray(times), hats

    # adaptive convective bound
    bp = sorted(p for p in breakpoints if t0 < p < t_end)
    t = t0
    hat = hat0
    M = float(cfg.cutoff)
    while t < t_end - 1e-12 * max(1.0, abs(t_end)):
        n1 = basis.norm_k(hat, 1)
        dt = min(cfg.dt_max, 0.25 / (nu * M**2 + n1 * M + 1e-12))
        while bp and bp[0] <= t + 1e-14:
            bp.pop(0)
        if bp:
            dt = min(dt, bp[0] - t)
        dt = min(dt, t_end - t)
        nxt = _ifrk4_step(hat, t, dt, nu, lam, rhs)
        guard = basis.norm_k(nxt, cfg.k)
        if not np.isfinite(guard) or guard > cfg.blowup_threshold:
            raise BlowUpError(float(t), guard, cfg.blowup_threshold)
        t = t + dt
        hat = nxt
        times.append(t)
        hats.append(hat)
    return np.asarray(times), hats


def _ns_rhs(basis, cfg, h_sig, eta_sig):
    def rhs(t, hat, side):
        out = h_sig.hat_at(basis, t, side) + eta_sig.hat_at(basis, t, side)
        if cfg.nonlinearity:
            out = out - basis.convect(hat, hat)
        return out

    return rhs


def step_ns(state, t, dt, cfg, forcing=None):
    """Advance the viscous truncated system by one step (field in, field out)."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    basis = cfg.basis()
    forcing = forcing or ForcingSpec()
    h_sig, eta_sig = forcing.signals()
    hat = basis.encode(state)
    nxt = _ifrk4_step(hat, t, dt, cfg.nu, basis.lam, _ns_rhs(basis, cfg, h_sig, eta_sig))
    guard = basis.norm_k(nxt, cfg.k)
    if not np.isfinite(guard) or guard > cfg.blowup_threshold:
        raise BlowUpError(float(t), guard, cfg.blowup_threshold)
    return basis.decode(nxt)


def solve_ns(u0, cfg, forcing=None, t0=0.0):
    """Integrate the truncated viscous system over the configured horizon.

    The initial state must live inside the truncation; forcing signals are
    projected onto it.  Sample grid includes both endpoints and every
    forcing breakpoint.
    """
    basis = cfg.basis()
    forcing = forcing or ForcingSpec()
    h_sig, eta_sig = forcing.signals()
    hat0 = basis.encode(u0)
    bps = list(h_sig.breakpoints(t0, t0 + cfg.horizon))
    bps += list(eta_sig.breakpoints(t0, t0 + cfg.horizon))
    times, hats = _integrate(
        basis, hat0, t0, cfg.horizon, cfg.nu, _ns_rhs(basis, cfg, h_sig, eta_sig),
        cfg, bps,
    )
    return Trajectory(times, hats, basis, cfg, {"kind": "ns", "t0": t0})


def _reference_rhs(basis, w_path, g_sig):
    """RHS for the linearisation around a path exposing a matrix protocol."""
    mats = w_path.convection_matrices(basis)

    def rhs(t, hat, side):
        x = basis.coords(hat)
        ax = mats(t, side) @ x
        return g_sig.hat_at(basis, t, side) - basis.from_coords(ax)

    return rhs


def _sampled_rhs(basis, w_path, g_sig):
    def rhs(t, hat, side):
        w_hat = w_path.hat_at(t)
        return g_sig.hat_at(basis, t, side) - basis.q_form(hat, w_hat)

    return rhs


def solve_linearised_euler(v0, w_path, g, cfg, t0=0.0):
    """Integrate  v' + Q(v, w(t)) = g  with v(t0) = v0 on the truncation.

    ``w_path`` is either a reference path exposing exact evaluation (the
    product rule matrices) or a sampled Trajectory, interpolated linearly.
    The solution is linear in (v0, g); there is no dissipative term.
    """
    basis = cfg.basis()
    g_sig = as_signal(g)
    if hasattr(w_path, "convection_matrices"):
        if w_path.horizon < cfg.horizon - 1e-12:
            raise ValueError("reference path does not cover the requested horizon")
        rhs = _reference_rhs(basis, w_path, g_sig)
        wbps = list(w_path.breakpoints(t0, t0 + cfg.horizon))
    else:
        if w_path.times[-1] < t0 + cfg.horizon - 1e-9:
            raise ValueError("sampled reference path does not cover the requested horizon")
        if w_path.basis.cutoff != cfg.cutoff:
            raise ValueError("sampled reference path lives on a different truncation")
        rhs = _sampled_rhs(basis, w_path, g_sig)
        wbps = []
    hat0 = basis.encode(v0)
    bps = wbps + list(g_sig.breakpoints(t0, t0 + cfg.horizon))
    times, hats = _integrate(basis, hat0, t0, cfg.horizon, 0.0, rhs, cfg, bps)
    return Trajectory(times, hats, basis, cfg, {"kind": "linearised", "t0": t0})


def remainder_diagnostic(u_path, v_path, w_path, delta, k=None):
    """Deviation of a run from its rescaled linear-plus-reference ansatz.

    Evaluates t -> || u(t) - v(t/delta) - delta^(-1) w(t/delta) ||_k on the
    grid of ``u_path``.  At the far endpoint the reference vanishes, so the
    value there equals || u(T delta) - v(T) ||_k.
    """
    basis = u_path.basis
    if k is None:
        k = u_path.config.k if u_path.config else 3
    t0 = float(u_path.times[0])
    vals = np.empty(len(u_path.times))
    for i, t in enumerate(u_path.times):
        s = (t - t0) / delta
        diff = u_path.hats[i] - v_path.hat_at(s)
        if hasattr(w_path, "w_hat_at"):
            w_hat = w_path.w_hat_at(basis, s)
        else:
            w_hat = w_path.hat_at(s)
        diff = diff - w_hat / delta
        vals[i] = basis.norm_k(diff, k)
    return np.asarray(u_path.times), vals
