"""The manifold of m-by-n matrices of fixed rank k, in factored form.

Points are stored as ``u @ s @ v.T`` with orthonormal side factors and a
general invertible k-by-k core; tangents use the standard factored
parametrization ``u @ m @ v.T + up @ v.T + u @ vp.T`` with ``up`` and
``vp`` orthogonal to the corresponding side factor.

The retraction perturbs the point in the ambient space and projects
back along the base point's normal space; its inverse is simply the
tangent projection of the difference.  Ambient quantities are handled
as factored pairs ``(a, b)`` standing for ``a @ b.T`` throughout, so no
operation allocates an m-by-n dense matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import linalg
from .manifold import Manifold, RetractionDomain

__all__ = [
    "FixedRankPoint",
    "FixedRankTangent",
    "FixedRank",
    "CoreSingular",
    "RankTooSmall",
    "truncate_to_rank",
    "normalize_svd",
    "write_point",
    "read_point",
]

POINT_TOL = 1e-10
CORE_RTOL = 1e-12


class CoreSingular(RetractionDomain):
    """The perturbed core became numerically singular; the retraction leaves
    the rank-k manifold."""


class RankTooSmall(linalg.LinalgError):
    """Requested rank exceeds the numerical rank of the input."""


@dataclass(frozen=True, eq=False)
class FixedRankPoint:
    """Factored point ``u @ s @ v.T``; ``u``, ``v`` have orthonormal columns."""

    u: np.ndarray
    s: np.ndarray
    v: np.ndarray

    @property
    def shape(self):
        return (self.u.shape[0], self.v.shape[0])

    @property
    def rank(self):
        return self.s.shape[0]


@dataclass(frozen=True, eq=False)
class FixedRankTangent:
    """Factored tangent at ``base``: ``u @ m @ v.T + up @ v.T + u @ vp.T``."""

    m: np.ndarray
    up: np.ndarray
    vp: np.ndarray
    base: FixedRankPoint


def _factored_norm(a, b):
    # ||a @ b.T||_F without forming the product: reduce both factors by QR
    # first so the cancellation happens once, inside a small matrix.
    ra = np.linalg.qr(a, mode="r")
    rb = np.linalg.qr(b, mode="r")
    return float(np.linalg.norm(ra @ rb.T))


def _tangent_factors(w):
    x = w.base
    return np.hstack([x.u @ w.m + w.up, x.u]), np.hstack([x.v, w.vp])


class FixedRank(Manifold):
    """Rank-k matrices of size m-by-n with the orthographic retraction."""

    def __init__(self, m, n, k):
        if k < 1 or k > min(m, n):
            raise ValueError(f"need 1 <= k <= min(m, n), got k={k} for ({m}, {n})")
        self.m = m
        self.n = n
        self.k = k

    def __repr__(self):
        return f"FixedRank({self.m}, {self.n}, {self.k})"

    @property
    def dim(self):
        return (self.m + self.n - self.k) * self.k

    # -- retraction pair ----------------------------------------------

    def _retract(self, x, w):
        return self.retract_ortho(x, w)

    def _inv_retract(self, x, y):
        return self.inv_retract_ortho(x, y)

    def retract_ortho(self, x, w):
        """Orthographic retraction.

        With ``core = s + m`` the retracted point is
        ``(u @ core + up) @ core^{-1} @ (v @ core.T + vp).T``; both side
        factors are re-orthonormalized by positive-diagonal QR and the
        small triangular remainders are absorbed into the new core.
        """
        core = x.s + w.m
        sigma = np.linalg.svd(core, compute_uv=False)
        if sigma[0] == 0.0 or sigma[-1] <= CORE_RTOL * sigma[0]:
            raise CoreSingular(
                f"perturbed core is numerically singular (sigma ratio "
                f"{sigma[-1] / max(sigma[0], 1e-300):.2e})"
            )
        a = x.u @ core + w.up
        b = x.v @ core.T + w.vp
        qa, ra = linalg.qr_posdiag(a)
        qb, rb = linalg.qr_posdiag(b)
        try:
            s_new = ra @ np.linalg.solve(core, rb.T)
        except np.linalg.LinAlgError as err:  # pragma: no cover - guarded above
            raise CoreSingular(str(err)) from err
        return FixedRankPoint(qa, s_new, qb)

    def inv_retract_ortho(self, x, y):
        """Inverse orthographic retraction: tangent projection of ``y - x``."""
        diff = (
            np.hstack([y.u @ y.s, -(x.u @ x.s)]),
            np.hstack([y.v, x.v]),
        )
        return self.project_tangent(x, diff)

    # -- tangent space -------------------------------------------------

    def project_tangent(self, x, operand):
        """Project an ambient operand (dense or factored pair) onto T_x."""
        a, b = self._as_operand(operand)
        bv = b.T @ x.v  # (j, k)
        au = a.T @ x.u  # (j, k)
        m = (x.u.T @ a) @ bv
        up = a @ bv - x.u @ m
        vp = b @ au - x.v @ m.T
        return FixedRankTangent(m, up, vp, x)

    def _as_operand(self, operand):
        if isinstance(operand, tuple):
            a, b = operand
            a = np.asarray(a, dtype=float)
            b = np.asarray(b, dtype=float)
            if a.shape[0] != self.m or b.shape[0] != self.n or a.shape[1] != b.shape[1]:
                raise linalg.ShapeMismatch(
                    f"factored operand shapes {a.shape}, {b.shape} do not fit "
                    f"({self.m}, {self.n})"
                )
            return a, b
        z = np.asarray(operand, dtype=float)
        if z.shape != (self.m, self.n):
            raise linalg.ShapeMismatch(
                f"expected operand of shape {(self.m, self.n)}, got {z.shape}"
            )
        return z, np.eye(self.n)

    def tangent_axpy(self, a, v, b=0.0, w=None):
        if w is None:
            return FixedRankTangent(a * v.m, a * v.up, a * v.vp, v.base)
        self._require_same_base(v, w)
        return FixedRankTangent(
            a * v.m + b * w.m, a * v.up + b * w.up, a * v.vp + b * w.vp, v.base
        )

    def zero_tangent(self, x):
        return FixedRankTangent(
            np.zeros((self.k, self.k)),
            np.zeros((self.m, self.k)),
            np.zeros((self.n, self.k)),
            x,
        )

    def tangent_norm(self, v):
        # The three blocks embed into mutually orthogonal ambient subspaces.
        return float(
            np.sqrt(
                np.linalg.norm(v.m) ** 2
                + np.linalg.norm(v.up) ** 2
                + np.linalg.norm(v.vp) ** 2
            )
        )

    def _is_zero_tangent(self, v):
        return not (v.m.any() or v.up.any() or v.vp.any())

    # -- checks ----------------------------------------------------------

    def check_point(self, x, tol=None):
        tol = POINT_TOL if tol is None else tol
        if x.u.shape != (self.m, self.k) or x.v.shape != (self.n, self.k):
            raise ValueError(f"point factor shapes do not fit {self!r}")
        if x.s.shape != (self.k, self.k):
            raise ValueError(f"core shape {x.s.shape} != {(self.k, self.k)}")
        for name, f in (("u", x.u), ("v", x.v)):
            defect = np.linalg.norm(f.T @ f - np.eye(self.k))
            if defect >= tol:
                raise ValueError(f"{name} not orthonormal: defect {defect:.3e}")
        sigma = np.linalg.svd(x.s, compute_uv=False)
        if sigma[0] == 0.0 or sigma[-1] <= CORE_RTOL * sigma[0]:
            raise ValueError("core is numerically singular")

    def check_tangent(self, v, tol=None):
        tol = POINT_TOL if tol is None else tol
        x = v.base
        if v.m.shape != (self.k, self.k):
            raise ValueError(f"tangent core shape {v.m.shape}")
        if v.up.shape != (self.m, self.k) or v.vp.shape != (self.n, self.k):
            raise ValueError("tangent factor shapes do not fit")
        for name, defect in (
            ("up", np.linalg.norm(x.u.T @ v.up)),
            ("vp", np.linalg.norm(x.v.T @ v.vp)),
        ):
            if defect >= tol:
                raise ValueError(f"{name} not orthogonal to base factor: {defect:.3e}")

    # -- randomness ------------------------------------------------------

    def random_point(self, seed):
        rng = np.random.default_rng(seed)
        u, _ = linalg.qr_posdiag(rng.standard_normal((self.m, self.k)))
        v, _ = linalg.qr_posdiag(rng.standard_normal((self.n, self.k)))
        # Core with controlled spectrum so the point is safely non-degenerate.
        qs, _ = linalg.qr_posdiag(rng.standard_normal((self.k, self.k)))
        qt, _ = linalg.qr_posdiag(rng.standard_normal((self.k, self.k)))
        sigma = np.sort(rng.uniform(0.5, 1.5, self.k))[::-1]
        return FixedRankPoint(u, qs @ np.diag(sigma) @ qt.T, v)

    def random_tangent(self, x, seed, norm=1.0):
        rng = np.random.default_rng(seed)
        w = self.project_tangent(
            x,
            (
                rng.standard_normal((self.m, self.k)),
                rng.standard_normal((self.n, self.k)),
            ),
        )
        scale = self.tangent_norm(w)
        if scale == 0.0:  # pragma: no cover - probability zero
            return w
        return self.tangent_axpy(norm / scale, w)

    # -- ambient plumbing --------------------------------------------

    def point_combo(self, points, coeffs):
        lefts = [c * (p.u @ p.s) for p, c in zip(points, coeffs)]
        rights = [p.v for p in points]
        return np.hstack(lefts), np.hstack(rights)

    def operand_norm(self, operand):
        a, b = self._as_operand(operand)
        return _factored_norm(a, b)

    def tangent_ambient_distance(self, v, w):
        av, bv = _tangent_factors(v)
        aw, bw = _tangent_factors(w)
        return _factored_norm(np.hstack([av, -aw]), np.hstack([bv, bw]))

    def embed(self, x):
        return (x.u @ x.s) @ x.v.T

    def embed_tangent(self, v):
        a, b = _tangent_factors(v)
        return a @ b.T


def truncate_to_rank(operand, k):
    """Best rank-k approximation as a factored point.

    ``operand`` is either a dense matrix or a factored pair ``(a, b)``
    standing for ``a @ b.T``.  The core of the result is the diagonal of
    the leading singular values.
    """
    if isinstance(operand, tuple):
        a, b = (np.asarray(f, dtype=float) for f in operand)
        qa, ra = np.linalg.qr(a, mode="reduced")
        qb, rb = np.linalg.qr(b, mode="reduced")
        uc, sigma, vc = linalg.svd_thin(ra @ rb.T)
        u, v = qa @ uc, qb @ vc
    else:
        u, sigma, v = linalg.svd_thin(np.asarray(operand, dtype=float))
    if len(sigma) < k or sigma[k - 1] <= 1e-12 * sigma[0]:
        raise RankTooSmall(f"numerical rank below requested k = {k}")
    return FixedRankPoint(u[:, :k], np.diag(sigma[:k]), v[:, :k])


def normalize_svd(x):
    """Rotate a factored point so its core is diagonal (display helper).

    The returned point represents the same matrix; the diagonal entries
    may be negative when the factor path was sign-aligned for
    continuity.
    """
    uc, sigma, vc = linalg.svd_thin(x.s)
    return FixedRankPoint(x.u @ uc, np.diag(sigma), x.v @ vc)


def write_point(path, p):
    """Serialize a factored point as three labeled matrix blocks."""
    with open(path, "w", encoding="ascii") as fh:
        for label, block in (("U", p.u), ("S", p.s), ("V", p.v)):
            fh.write(label + "\n")
            linalg._write_matrix_block(fh, block)


def read_point(path, geom=None):
    """Load a factored point written by :func:`write_point`."""
    blocks = {}
    with open(path, "r", encoding="ascii") as fh:
        for expected in ("U", "S", "V"):
            label = fh.readline().strip()
            if label != expected:
                raise linalg.ShapeMismatch(f"expected block {expected!r}, got {label!r}")
            blocks[expected] = linalg._read_matrix_block(fh)
    p = FixedRankPoint(blocks["U"], blocks["S"], blocks["V"])
    if geom is not None:
        geom.check_point(p)
    return p
