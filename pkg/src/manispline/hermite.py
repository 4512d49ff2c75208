"""Piecewise C1 interpolation of points-with-velocities on a manifold.

Given samples ``(t_i, p_i, v_i)`` the scheme builds, per interval, a
cubic blended curve whose control points are reached by retracting a
third of the scaled velocities.  Construction is split into an offline
phase (per-segment anchor point and two anchored tangents, computed
once) and an online phase that evaluates any parameter value with a
fixed budget of 7 retractions and 5 inverse retractions.

Two cheaper comparison schemes are provided: a piecewise "linear"
scheme that connects consecutive samples by endpoint curves, and a
naive variant of the cubic construction that anchors every stage at its
left endpoint and therefore fails to be differentiable across segment
junctions.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass

import numpy as np

from .manifold import RetractionDomain, endpoint_curve, decasteljau_variant, _relabel

__all__ = [
    "OutOfRange",
    "TangentSample",
    "SegmentCache",
    "Interpolant",
    "offline",
    "hermite_segment",
    "linear_scheme",
    "naive_hermite",
    "max_derivative_estimate",
]

SCHEMES = ("rh", "rhstar", "linear", "naive")
FD_STEP = 1e-5


class OutOfRange(ValueError):
    """Evaluation parameter outside the sample range."""


@dataclass(frozen=True, eq=False)
class TangentSample:
    """Interpolation datum: parameter value, point, velocity at that point."""

    t: float
    point: object
    velocity: object


@dataclass(frozen=True, eq=False)
class SegmentCache:
    """Precomputed quantities for one interval.

    ``anchor`` is the midpoint-style anchor of the middle stage;
    ``w_plus`` and ``w_minus`` are the anchored tangents pointing to the
    interval's inner control points.
    """

    h: float
    anchor: object
    w_plus: object
    w_minus: object


def _control_points(geom, h, sample0, sample1):
    p_plus = geom.retract(sample0.point, geom.tangent_axpy(h / 3.0, sample0.velocity))
    p_minus = geom.retract(sample1.point, geom.tangent_axpy(-h / 3.0, sample1.velocity))
    return p_plus, p_minus


def offline(geom, samples, r1=0.5):
    """Precompute the per-segment caches for the cubic scheme.

    For anchor fractions 0 and 1 the anchor coincides with a control
    point and the corresponding anchored tangent is exactly zero.
    """
    caches = []
    for i in range(len(samples) - 1):
        s0, s1 = samples[i], samples[i + 1]
        h = s1.t - s0.t
        try:
            p_plus, p_minus = _control_points(geom, h, s0, s1)
            if r1 == 0.0:
                anchor = p_plus
                w_plus = geom.zero_tangent(anchor)
                w_minus = geom.inv_retract(anchor, p_minus)
            elif r1 == 1.0:
                anchor = p_minus
                w_plus = geom.inv_retract(anchor, p_plus)
                w_minus = geom.zero_tangent(anchor)
            else:
                step = geom.tangent_axpy(r1, geom.inv_retract(p_plus, p_minus))
                anchor = geom.retract(p_plus, step)
                w_plus = geom.inv_retract(anchor, p_plus)
                w_minus = geom.inv_retract(anchor, p_minus)
        except RetractionDomain as err:
            err.segment = i
            raise _relabel(err, "offline")
        caches.append(SegmentCache(h, anchor, w_plus, w_minus))
    return tuple(caches)


def _endpoint_full(geom, r, t, x, y):
    # Generic-anchor endpoint curve without the r = 0/1 short circuits;
    # keeps the online operation count constant for every tau.
    step = geom.tangent_axpy(r, geom.inv_retract(x, y))
    q = geom.retract(x, step)
    v = geom.tangent_axpy(1.0 - t, geom.inv_retract(q, x), t, geom.inv_retract(q, y))
    return geom.retract(q, v)


def hermite_segment(geom, t, p0, v0, p1, v1, r1=0.5):
    """Unit-interval segment matching points and velocities at both ends.

    Control points are ``p0`` retracted along ``v0/3`` and ``p1``
    retracted along ``-v1/3``; the cubic blended recursion then
    reproduces ``p0, v0`` at ``t = 0`` and ``p1, v1`` at ``t = 1``.
    """
    p_plus = geom.retract(p0, geom.tangent_axpy(1.0 / 3.0, v0))
    p_minus = geom.retract(p1, geom.tangent_axpy(-1.0 / 3.0, v1))
    return decasteljau_variant(geom, t, p0, p_plus, p_minus, p1, r1=r1)


def _segment_index(times, t):
    if t < times[0] or t > times[-1]:
        raise OutOfRange(f"t = {t} outside [{times[0]}, {times[-1]}]")
    i = bisect.bisect_right(times, t) - 1
    return min(max(i, 0), len(times) - 2)


def linear_scheme(geom, samples, t):
    """Piecewise endpoint-curve interpolant of the points alone."""
    times = [s.t for s in samples]
    i = _segment_index(times, t)
    tau = (t - times[i]) / (times[i + 1] - times[i])
    return endpoint_curve(geom, 0.0, tau, samples[i].point, samples[i + 1].point)


def naive_hermite(geom, samples, t):
    """Cubic construction using only left-anchored endpoint curves.

    Shares the control points of the full scheme but anchors every
    recursion stage at its left endpoint, so the right-end derivative
    of each segment is not matched and junctions are generally not
    differentiable.
    """
    times = [s.t for s in samples]
    i = _segment_index(times, t)
    s0, s1 = samples[i], samples[i + 1]
    h = s1.t - s0.t
    tau = (t - s0.t) / h
    p_plus, p_minus = _control_points(geom, h, s0, s1)
    c0 = lambda a, b: endpoint_curve(geom, 0.0, tau, a, b)
    beta0 = c0(s0.point, p_plus)
    beta1 = c0(p_plus, p_minus)
    beta2 = c0(p_minus, s1.point)
    return c0(c0(beta0, beta1), c0(beta1, beta2))


class Interpolant:
    """Immutable piecewise interpolant over ordered tangent samples.

    ``scheme`` is one of ``"rh"`` (the C1 cubic scheme), ``"rhstar"``
    (same construction with a configurable middle anchor ``r1``),
    ``"linear"`` or ``"naive"``.  ``"rh"`` is exactly ``"rhstar"`` with
    ``r1 = 0.5``; both share one code path.
    """

    def __init__(self, geom, samples, scheme="rh", r1=0.5):
        if scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {scheme!r}")
        if len(samples) < 2:
            raise ValueError("need at least two samples")
        times = [float(s.t) for s in samples]
        if not all(a < b for a, b in zip(times, times[1:])):
            raise ValueError("sample parameters must be strictly increasing")
        if not all(np.isfinite(times)):
            raise ValueError("sample parameters must be finite")
        for s in samples:
            if s.velocity.base is not s.point:
                raise ValueError("sample velocity must be based at the sample point")
        self.geom = geom
        self.samples = tuple(samples)
        self.scheme = scheme
        self.r1 = 0.5 if scheme == "rh" else r1
        self.times = times
        if scheme in ("rh", "rhstar"):
            self.caches = offline(geom, self.samples, self.r1)
        else:
            self.caches = None

    @property
    def t_min(self):
        return self.times[0]

    @property
    def t_max(self):
        return self.times[-1]

    def eval(self, t):
        """Point on the interpolant at parameter ``t``."""
        if self.scheme == "linear":
            return linear_scheme(self.geom, self.samples, t)
        if self.scheme == "naive":
            return naive_hermite(self.geom, self.samples, t)
        return self._eval_cached(t)

    def _eval_cached(self, t):
        # Fixed budget: 7 retractions and 5 inverse retractions, for
        # every tau and every geometry.
        geom = self.geom
        i = _segment_index(self.times, t)
        s0, s1 = self.samples[i], self.samples[i + 1]
        cache = self.caches[i]
        h = cache.h
        tau = (t - s0.t) / h
        try:
            beta0 = geom.retract(
                s0.point, geom.tangent_axpy(tau * h / 3.0, s0.velocity)
            )
            beta1 = geom.retract(
                cache.anchor, geom.tangent_axpy(1.0 - tau, cache.w_plus, tau, cache.w_minus)
            )
            beta2 = geom.retract(
                s1.point, geom.tangent_axpy(-(1.0 - tau) * h / 3.0, s1.velocity)
            )
            beta01 = endpoint_curve(geom, 0.0, tau, beta0, beta1)
            beta12 = endpoint_curve(geom, 1.0, tau, beta1, beta2)
            return _endpoint_full(geom, tau, tau, beta01, beta12)
        except RetractionDomain as err:
            err.segment = i
            raise _relabel(err, "online")

    def derivative(self, t, dt=FD_STEP):
        """Tangent vector at ``eval(t)`` estimated by finite differences.

        Strictly inside a segment a centered difference is used, with
        the step shrunk when the stencil would otherwise straddle a
        junction; the one-sided behavior of non-differentiable schemes
        is thereby measured honestly.  At a node the one-sided
        second-order slopes of the adjacent segments are averaged,
        which reproduces the velocity of a C1 scheme to O(dt^2).
        """
        times = self.times
        if t < times[0] or t > times[-1]:
            raise OutOfRange(f"t = {t} outside [{times[0]}, {times[-1]}]")
        geom = self.geom
        base = self.eval(t)
        node = bisect.bisect_left(times, t)
        if node < len(times) and times[node] == t:
            stencils = []
            if node > 0:
                d = min(dt, (times[node] - times[node - 1]) / 4.0)
                stencils.append(((0.0, -d, -2.0 * d), (3.0, -4.0, 1.0), 2.0 * d))
            if node < len(times) - 1:
                d = min(dt, (times[node + 1] - times[node]) / 4.0)
                stencils.append(((0.0, d, 2.0 * d), (-3.0, 4.0, -1.0), 2.0 * d))
            points, coeffs = [], []
            for offsets, weights, denom in stencils:
                scale = 1.0 / (denom * len(stencils))
                for off, w in zip(offsets, weights):
                    points.append(base if off == 0.0 else self.eval(t + off))
                    coeffs.append(w * scale)
            operand = geom.point_combo(points, coeffs)
        else:
            i = _segment_index(times, t)
            gap = min(t - times[i], times[i + 1] - t)
            d = dt if gap >= dt else 0.4 * gap
            operand = geom.point_combo(
                (self.eval(t + d), self.eval(t - d)), (0.5 / d, -0.5 / d)
            )
        return geom.project_tangent(base, operand)


# Central difference stencils on uniform offsets of a step d:
# order -> (offsets in units of d, weights, power of d in the divisor).
_FD_STENCILS = {
    2: ((-1, 0, 1), (1.0, -2.0, 1.0), 1.0),
    3: ((-2, -1, 1, 2), (-0.5, 1.0, -1.0, 0.5), 1.0),
    4: ((-2, -1, 0, 1, 2), (1.0, -4.0, 6.0, -4.0, 1.0), 1.0),
}


def max_derivative_estimate(interp, order, grid):
    """Largest projected finite-difference derivative of the given order.

    Scans a uniform grid strictly inside every segment, forms the
    central difference of the interpolant in ambient coordinates,
    projects it onto the tangent space at the evaluation point and
    takes the Frobenius norm.  This is a diagnostic for derivative
    growth as the sampling step shrinks; the growth trend, not the
    absolute value, is the meaningful output.
    """
    if order not in _FD_STENCILS:
        raise ValueError(f"order must be one of {sorted(_FD_STENCILS)}, got {order}")
    if grid < 1:
        raise ValueError("grid must be positive")
    geom = interp.geom
    offsets, weights, _ = _FD_STENCILS[order]
    best = 0.0
    times = interp.times
    for i in range(len(times) - 1):
        h = times[i + 1] - times[i]
        step = 1e-3 if order == 2 else 1e-2 * h
        margin = (abs(offsets[0]) + 0.5) * step
        if 2.0 * margin >= h:
            raise OutOfRange(
                f"segment of width {h:.3e} too short for the order-{order} stencil"
            )
        ts = np.linspace(times[i] + margin, times[i + 1] - margin, grid)
        coeffs = [w / step**order for w in weights]
        for t in ts:
            points = [interp.eval(t + off * step) for off in offsets]
            center = points[offsets.index(0)] if 0 in offsets else interp.eval(t)
            v = geom.project_tangent(center, geom.point_combo(points, coeffs))
            best = max(best, geom.tangent_norm(v))
    return best
