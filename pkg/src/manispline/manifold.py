"""Geometry-independent curve machinery.

A :class:`Manifold` bundles a retraction / inverse-retraction pair with
tangent-space plumbing.  On top of that contract this module builds the
anchored endpoint curves and the cubic blended recursion used by the
Hermite interpolation scheme.  Everything is pure: points and tangents
are value objects, and instrumentation is scoped through a context
variable so concurrent callers never share counters.
"""

from __future__ import annotations

import abc
import contextlib
import contextvars
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "RetractionDomain",
    "EvalCounters",
    "count_operations",
    "Manifold",
    "endpoint_curve",
    "endpoint_symmetry_check",
    "decasteljau",
    "decasteljau_variant",
]

# Finite-difference step defaults, balancing truncation against roundoff
# at 64-bit precision.
FD_STEP_FIRST = 1e-6
FD_STEP_SECOND = 1e-4


class RetractionDomain(RuntimeError):
    """A retraction or inverse retraction left its invertibility domain.

    Carries the construction stage (and, for piecewise curves, the
    segment index) where the failure surfaced.
    """

    def __init__(self, message, stage=None, segment=None):
        super().__init__(message)
        self.stage = stage
        self.segment = segment


@dataclass
class EvalCounters:
    """Tally of geometry operations inside a :func:`count_operations` scope."""

    retraction_count: int = 0
    inverse_retraction_count: int = 0


_ACTIVE_COUNTERS: contextvars.ContextVar[EvalCounters | None] = contextvars.ContextVar(
    "manispline_counters", default=None
)


@contextlib.contextmanager
def count_operations():
    """Count retraction calls made while the context is active.

    The counter is scoped to the current execution context, so parallel
    evaluations each see their own tally.
    """
    counters = EvalCounters()
    token = _ACTIVE_COUNTERS.set(counters)
    try:
        yield counters
    finally:
        _ACTIVE_COUNTERS.reset(token)


class Manifold(abc.ABC):
    """Behavioral contract shared by all geometries.

    Concrete geometries supply the retraction pair plus tangent-space
    plumbing.  Ambient quantities cross the interface as *operands*: a
    geometry-specific lightweight representation of an ambient matrix
    (dense for small embedded geometries, factored for the low-rank one)
    that never forces a large dense allocation.
    """

    @property
    @abc.abstractmethod
    def dim(self):
        """Manifold dimension."""

    def retract(self, x, v):
        """Map the tangent vector ``v`` at ``x`` onto the manifold.

        ``retract(x, zero) == x`` holds exactly: the zero tangent short
        circuits before any factorization, which keeps node evaluation
        of interpolants bitwise faithful.  The call is counted even when
        it short circuits.
        """
        counters = _ACTIVE_COUNTERS.get()
        if counters is not None:
            counters.retraction_count += 1
        if self._is_zero_tangent(v):
            return x
        return self._retract(x, v)

    def inv_retract(self, x, y):
        """Tangent vector at ``x`` that retracts onto ``y``."""
        counters = _ACTIVE_COUNTERS.get()
        if counters is not None:
            counters.inverse_retraction_count += 1
        return self._inv_retract(x, y)

    @abc.abstractmethod
    def _retract(self, x, v):
        ...

    @abc.abstractmethod
    def _inv_retract(self, x, y):
        ...

    @abc.abstractmethod
    def project_tangent(self, x, operand):
        """Orthogonal projection of an ambient operand onto T_x."""

    @abc.abstractmethod
    def tangent_axpy(self, a, v, b=0.0, w=None):
        """Return ``a*v + b*w`` for tangents at a common base point."""

    @abc.abstractmethod
    def zero_tangent(self, x):
        ...

    @abc.abstractmethod
    def tangent_norm(self, v):
        ...

    @abc.abstractmethod
    def check_point(self, x, tol=None):
        """Raise ``ValueError`` if ``x`` violates the feasibility check."""

    @abc.abstractmethod
    def check_tangent(self, v, tol=None):
        """Raise ``ValueError`` if ``v`` is not tangent at its base."""

    @abc.abstractmethod
    def random_point(self, seed):
        ...

    @abc.abstractmethod
    def random_tangent(self, x, seed, norm=1.0):
        ...

    # -- ambient operand plumbing -------------------------------------

    @abc.abstractmethod
    def point_combo(self, points, coeffs):
        """Ambient linear combination ``sum(c_i * emb(p_i))`` as an operand."""

    @abc.abstractmethod
    def operand_norm(self, operand):
        """Frobenius norm of an ambient operand."""

    @abc.abstractmethod
    def tangent_ambient_distance(self, v, w):
        """Frobenius distance between two tangents in ambient coordinates.

        The tangents may be based at different points.
        """

    def ambient_distance(self, x, y):
        """Frobenius distance between two points in the embedding space."""
        return self.operand_norm(self.point_combo((x, y), (1.0, -1.0)))

    # -- dense views, for tests and serialization only ----------------

    @abc.abstractmethod
    def embed(self, x):
        """Dense ambient matrix of a point (materializes; small scale only)."""

    @abc.abstractmethod
    def embed_tangent(self, v):
        """Dense ambient matrix of a tangent (materializes; small scale only)."""

    @abc.abstractmethod
    def _is_zero_tangent(self, v):
        ...

    @staticmethod
    def _require_same_base(v, w):
        if v.base is not w.base and not _points_equal(v.base, w.base):
            raise ValueError("tangent vectors are based at different points")


def _points_equal(p, q):
    fields_p = [getattr(p, name) for name in p.__dataclass_fields__]
    fields_q = [getattr(q, name) for name in q.__dataclass_fields__]
    return all(np.array_equal(a, b) for a, b in zip(fields_p, fields_q))


def _relabel(err, stage):
    err.stage = stage if err.stage is None else f"{stage}:{err.stage}"
    return err


def endpoint_curve(geom, r, t, x, y):
    """Anchored endpoint curve joining ``x`` (t=0) and ``y`` (t=1).

    The anchor point sits a fraction ``r`` along the retraction segment
    from ``x`` toward ``y``; the curve retracts the straight line drawn
    between the two inverse-retraction images in the anchor's tangent
    space.  The extreme anchors ``r = 0`` and ``r = 1`` short circuit to
    the endpoints themselves, which is both exact (local rigidity) and
    cheaper: one retraction and one inverse retraction instead of two
    and three.
    """
    if not 0.0 <= r <= 1.0:
        raise ValueError(f"anchor fraction must lie in [0, 1], got {r}")
    try:
        if r == 0.0:
            q = x
            v = geom.tangent_axpy(t, geom.inv_retract(q, y))
        elif r == 1.0:
            q = y
            v = geom.tangent_axpy(1.0 - t, geom.inv_retract(q, x))
        else:
            step = geom.tangent_axpy(r, geom.inv_retract(x, y))
            q = geom.retract(x, step)
            v = geom.tangent_axpy(
                1.0 - t, geom.inv_retract(q, x), t, geom.inv_retract(q, y)
            )
        return geom.retract(q, v)
    except RetractionDomain as err:
        raise _relabel(err, "endpoint-curve")


def endpoint_symmetry_check(geom, x, y, t):
    """Distance between the two reversed extreme endpoint curves.

    The curve anchored at ``x`` traversed forward and the curve anchored
    at ``y`` traversed backward describe the same path, so the returned
    ambient distance should vanish to roundoff for valid inputs.
    """
    forward = endpoint_curve(geom, 0.0, t, x, y)
    backward = endpoint_curve(geom, 1.0, 1.0 - t, y, x)
    return geom.ambient_distance(forward, backward)


_STAGE_LABELS = ("b0-b1", "b1-b2", "b2-b3", "blend-left", "blend-right", "blend-final")


def decasteljau_variant(geom, t, b0, b1, b2, b3, r1=0.5):
    """Cubic blended recursion over four control points.

    Each stage of the classical corner-cutting construction is replaced
    by an endpoint curve; the outer stages are anchored at their moving
    endpoints while the middle stage uses the fixed anchor fraction
    ``r1``.  Failures carry the label of the stage that left the
    retraction domain.
    """
    stages = iter(_STAGE_LABELS)

    def stage(r, s, p, q):
        label = next(stages)
        try:
            return endpoint_curve(geom, r, s, p, q)
        except RetractionDomain as err:
            raise _relabel(err, label)

    beta0 = stage(0.0, t, b0, b1)
    beta1 = stage(r1, t, b1, b2)
    beta2 = stage(1.0, t, b2, b3)
    beta01 = stage(0.0, t, beta0, beta1)
    beta12 = stage(1.0, t, beta1, beta2)
    return stage(t, t, beta01, beta12)


def decasteljau(geom, t, b0, b1, b2, b3):
    """Cubic blended recursion with the midpoint anchor for the middle stage.

    This is the variant that keeps all derivatives of the resulting
    curve bounded as control points coalesce; see
    :func:`decasteljau_variant` for the general middle anchor.
    """
    return decasteljau_variant(geom, t, b0, b1, b2, b3, r1=0.5)
