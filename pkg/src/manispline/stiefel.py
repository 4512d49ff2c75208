"""The manifold of matrices with orthonormal columns.

Embedded submanifold geometry with the standard trace inner product on
each tangent space.  Two retraction pairs are available, selected once
at construction and never mixed within a curve:

* ``"qfactor"`` -- thin QR with positive diagonal; the inverse solves a
  triangular linear matrix equation.
* ``"pfactor"`` -- polar factor; the inverse solves a small symmetric
  (Lyapunov-type) matrix equation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import linalg
from .manifold import Manifold, RetractionDomain

__all__ = ["StiefelPoint", "StiefelTangent", "Stiefel", "write_point", "read_point"]

POINT_TOL = 1e-10  # looser than the linalg residuals to absorb curve-stage accumulation


@dataclass(frozen=True, eq=False)
class StiefelPoint:
    """Point with orthonormal columns, ``x.T @ x = I``."""

    x: np.ndarray

    @property
    def shape(self):
        return self.x.shape


@dataclass(frozen=True, eq=False)
class StiefelTangent:
    """Tangent vector at ``base``; ``base.x.T @ v`` is skew-symmetric."""

    v: np.ndarray
    base: StiefelPoint


def _sym(m):
    return 0.5 * (m + m.T)


class Stiefel(Manifold):
    """St(n, k) with a configurable retraction pair."""

    RETRACTIONS = ("qfactor", "pfactor")

    def __init__(self, n, k, retraction="qfactor"):
        if n < k or k < 1:
            raise ValueError(f"need n >= k >= 1, got ({n}, {k})")
        if retraction not in self.RETRACTIONS:
            raise ValueError(f"unknown retraction {retraction!r}")
        self.n = n
        self.k = k
        self.retraction = retraction

    def __repr__(self):
        return f"Stiefel({self.n}, {self.k}, retraction={self.retraction!r})"

    @property
    def dim(self):
        return self.n * self.k - self.k * (self.k + 1) // 2

    # -- retraction pair ----------------------------------------------

    def _retract(self, x, v):
        if self.retraction == "qfactor":
            return self.retract_q(x, v)
        return self.retract_p(x, v)

    def _inv_retract(self, x, y):
        if self.retraction == "qfactor":
            return self.inv_retract_q(x, y)
        return self.inv_retract_p(x, y)

    def retract_q(self, x, v):
        """QR-based retraction: the orthonormal factor of ``x + v``."""
        q, _ = linalg.qr_posdiag(x.x + v.v)
        return StiefelPoint(q)

    def inv_retract_q(self, x, y):
        """Inverse of :meth:`retract_q`.

        Solves ``a @ r + r.T @ a.T = 2 I`` with ``a = x.T @ y`` for the
        upper triangular ``r`` with positive diagonal, then the tangent
        is ``y @ r - x``.
        """
        a = x.x.T @ y.x
        try:
            r = linalg.solve_sym_part_triangular(a)
        except (linalg.SingularBlock, linalg.NegativeDiagonal) as err:
            raise RetractionDomain(
                f"QR-factor inverse retraction undefined: {err}"
            ) from err
        return StiefelTangent(y.x @ r - x.x, x)

    def retract_p(self, x, v):
        """Polar-based retraction: the orthonormal polar factor of ``x + v``."""
        return StiefelPoint(linalg.polar(x.x + v.v))

    def inv_retract_p(self, x, y):
        """Inverse of :meth:`retract_p`.

        Solves ``a @ s + s @ a.T = 2 I`` with ``a = x.T @ y`` for
        symmetric ``s``; the tangent is ``y @ s - x``.
        """
        a = x.x.T @ y.x
        try:
            s = linalg.solve_lyapunov(a)
        except linalg.SingularSystem as err:
            raise RetractionDomain(
                f"polar-factor inverse retraction undefined: {err}"
            ) from err
        return StiefelTangent(y.x @ s - x.x, x)

    # -- tangent space -------------------------------------------------

    def project_tangent(self, x, operand):
        z = np.asarray(operand, dtype=float)
        if z.shape != (self.n, self.k):
            raise linalg.ShapeMismatch(
                f"expected operand of shape {(self.n, self.k)}, got {z.shape}"
            )
        return StiefelTangent(z - x.x @ _sym(x.x.T @ z), x)

    def tangent_axpy(self, a, v, b=0.0, w=None):
        if w is None:
            return StiefelTangent(a * v.v, v.base)
        self._require_same_base(v, w)
        return StiefelTangent(a * v.v + b * w.v, v.base)

    def zero_tangent(self, x):
        return StiefelTangent(np.zeros((self.n, self.k)), x)

    def tangent_norm(self, v):
        return float(np.linalg.norm(v.v))

    def _is_zero_tangent(self, v):
        return not v.v.any()

    # -- checks ----------------------------------------------------------

    def check_point(self, x, tol=None):
        tol = POINT_TOL if tol is None else tol
        if x.x.shape != (self.n, self.k):
            raise ValueError(f"point shape {x.x.shape} != {(self.n, self.k)}")
        defect = np.linalg.norm(x.x.T @ x.x - np.eye(self.k))
        if defect >= tol:
            raise ValueError(f"columns not orthonormal: defect {defect:.3e} >= {tol:.1e}")

    def check_tangent(self, v, tol=None):
        tol = POINT_TOL if tol is None else tol
        if v.v.shape != (self.n, self.k):
            raise ValueError(f"tangent shape {v.v.shape} != {(self.n, self.k)}")
        x = v.base.x
        defect = np.linalg.norm(x.T @ v.v + v.v.T @ x)
        if defect >= tol:
            raise ValueError(f"not tangent at base: defect {defect:.3e} >= {tol:.1e}")

    # -- randomness ------------------------------------------------------

    def random_point(self, seed):
        rng = np.random.default_rng(seed)
        while True:
            try:
                q, _ = linalg.qr_posdiag(rng.standard_normal((self.n, self.k)))
                return StiefelPoint(q)
            except linalg.RankDeficient:  # pragma: no cover - probability zero
                continue

    def random_tangent(self, x, seed, norm=1.0):
        rng = np.random.default_rng(seed)
        v = self.project_tangent(x, rng.standard_normal((self.n, self.k)))
        scale = self.tangent_norm(v)
        if scale == 0.0:  # pragma: no cover - probability zero
            return v
        return self.tangent_axpy(norm / scale, v)

    # -- ambient plumbing --------------------------------------------

    def point_combo(self, points, coeffs):
        out = np.zeros((self.n, self.k))
        for p, c in zip(points, coeffs):
            out += c * p.x
        return out

    def operand_norm(self, operand):
        return float(np.linalg.norm(operand))

    def tangent_ambient_distance(self, v, w):
        return float(np.linalg.norm(v.v - w.v))

    def embed(self, x):
        return x.x.copy()

    def embed_tangent(self, v):
        return v.v.copy()


def write_point(path, p):
    """Serialize a point in the plain-text matrix format."""
    linalg.write_matrix(path, p.x)


def read_point(path, geom=None):
    """Load a point written by :func:`write_point`; validates if a geometry is given."""
    p = StiefelPoint(linalg.read_matrix(path))
    if geom is not None:
        geom.check_point(p)
    return p
