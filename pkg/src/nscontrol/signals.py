"""Time-parameterized field signals used as forcing and controls.

Signals are evaluated at arbitrary times with one-sided semantics: the
``side`` argument selects the right (+1) or left (-1) limit at a jump,
which lets the integrators treat a piecewise-defined control as smooth on
every step of a jump-aligned grid.  ``breakpoints`` lists the times a
grid must contain for that to work.
"""

from __future__ import annotations

import numpy as np

from .fields import TrigField, sobolev_norm


class Signal:
    def at(self, t, side=1):
        raise NotImplementedError

    def hat_at(self, basis, t, side=1):
        return basis.encode(self.at(t, side), strict=False)

    def breakpoints(self, t0, t1):
        return ()

    def l2_norm(self, t0, t1, n=1024):
        """L2-in-time norm of the signal's L2 spatial norms (quadrature)."""
        ts = np.linspace(t0, t1, n + 1)
        vals = np.array([sobolev_norm(self.at(t), 0) ** 2 for t in ts])
        return float(np.sqrt(np.trapezoid(vals, ts)))

    def __add__(self, other):
        if isinstance(other, Signal):
            return SumSignal((self, other))
        return NotImplemented

    def scaled(self, factor):
        return ScaledSignal(self, factor)


class ZeroSignal(Signal):
    def at(self, t, side=1):
        return TrigField()

    def hat_at(self, basis, t, side=1):
        return np.zeros((basis.n_signed, 3), dtype=complex)

    def l2_norm(self, t0, t1, n=1024):
        return 0.0


class ConstantSignal(Signal):
    def __init__(self, field):
        self.field = field if not field.exact else field.to_float()

    def at(self, t, side=1):
        return self.field

    def hat_at(self, basis, t, side=1):
        return basis.encode(self.field, strict=False)

    def l2_norm(self, t0, t1, n=0):
        return sobolev_norm(self.field, 0) * (t1 - t0) ** 0.5


class SumSignal(Signal):
    def __init__(self, parts):
        self.parts = tuple(parts)

    def at(self, t, side=1):
        total = TrigField()
        for p in self.parts:
            total = total + p.at(t, side)
        return total

    def hat_at(self, basis, t, side=1):
        return sum(p.hat_at(basis, t, side) for p in self.parts)

    def breakpoints(self, t0, t1):
        pts = []
        for p in self.parts:
            pts.extend(p.breakpoints(t0, t1))
        return tuple(sorted(set(pts)))


class ScaledSignal(Signal):
    def __init__(self, inner, factor):
        self.inner = inner
        self.factor = float(factor)

    def at(self, t, side=1):
        return self.inner.at(t, side).scale(self.factor)

    def hat_at(self, basis, t, side=1):
        return self.factor * self.inner.hat_at(basis, t, side)

    def breakpoints(self, t0, t1):
        return self.inner.breakpoints(t0, t1)

    def l2_norm(self, t0, t1, n=1024):
        return abs(self.factor) * self.inner.l2_norm(t0, t1, n)


class TimeRescaledSignal(Signal):
    """delta^power * inner(t / delta): the workhorse of small-time controls."""

    def __init__(self, inner, delta, power):
        self.inner = inner
        self.delta = float(delta)
        self.power = int(power)
        self._factor = self.delta**self.power

    def at(self, t, side=1):
        return self.inner.at(t / self.delta, side).scale(self._factor)

    def hat_at(self, basis, t, side=1):
        return self._factor * self.inner.hat_at(basis, t / self.delta, side)

    def breakpoints(self, t0, t1):
        inner_pts = self.inner.breakpoints(t0 / self.delta, t1 / self.delta)
        return tuple(self.delta * p for p in inner_pts)

    def l2_norm(self, t0, t1, n=1024):
        # || d^p f(t/d) ||_{L2(t0,t1)} = d^(p + 1/2) ||f||_{L2(t0/d, t1/d)}
        return self.delta ** (self.power + 0.5) * self.inner.l2_norm(
            t0 / self.delta, t1 / self.delta, n
        )


class PiecewiseConstantSignal(Signal):
    """Right-continuous step signal over a fixed partition of an interval.

    Zero outside the partition.  The left limit at an interior edge is the
    value of the preceding segment.
    """

    def __init__(self, edges, values):
        edges = np.asarray(edges, dtype=float)
        if len(values) != len(edges) - 1:
            raise ValueError("need one value per segment")
        if np.any(np.diff(edges) <= 0):
            raise ValueError("edges must be strictly increasing")
        self.edges = edges
        self.values = [v if not v.exact else v.to_float() for v in values]
        self._hat_cache = {}

    def _segment(self, t, side):
        kind = "left" if side < 0 else "right"
        i = int(np.searchsorted(self.edges, t, side=kind)) - 1
        if i < 0 or i >= len(self.values):
            return None
        if t < self.edges[0] or t > self.edges[-1]:
            return None
        return i

    def at(self, t, side=1):
        i = self._segment(t, side)
        return TrigField() if i is None else self.values[i]

    def hat_at(self, basis, t, side=1):
        stack = self._hat_cache.get(id(basis))
        if stack is None:
            stack = np.array([basis.encode(v, strict=False) for v in self.values])
            self._hat_cache[id(basis)] = stack
        i = self._segment(t, side)
        if i is None:
            return np.zeros((basis.n_signed, 3), dtype=complex)
        return stack[i]

    def breakpoints(self, t0, t1):
        pts = self.edges[(self.edges >= t0) & (self.edges <= t1)]
        return tuple(float(p) for p in pts)

    def l2_norm(self, t0=None, t1=None, n=0):
        t0 = self.edges[0] if t0 is None else t0
        t1 = self.edges[-1] if t1 is None else t1
        total = 0.0
        for i, v in enumerate(self.values):
            lo = max(t0, float(self.edges[i]))
            hi = min(t1, float(self.edges[i + 1]))
            if hi > lo:
                total += (hi - lo) * sobolev_norm(v, 0) ** 2
        return float(np.sqrt(total))


def as_signal(obj):
    """Wrap None or a fixed field; pass signals through."""
    if obj is None:
        return ZeroSignal()
    if isinstance(obj, Signal):
        return obj
    if isinstance(obj, TrigField):
        return ConstantSignal(obj)
    raise TypeError(f"cannot interpret {type(obj).__name__} as a signal")
