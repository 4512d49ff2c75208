"""Dense matrix kernels backing the manifold geometries.

Everything here works on plain float64 ``numpy`` arrays in row-major
layout.  The two structured solvers (:func:`solve_sym_part_triangular`
and :func:`solve_lyapunov`) provide the linear-algebra core of the
inverse retractions on the orthonormal-frame manifold; the
factorizations wrap LAPACK through numpy behind fixed sign and
ordering conventions.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "LinalgError",
    "RankDeficient",
    "NoConvergence",
    "SingularBlock",
    "NegativeDiagonal",
    "SingularSystem",
    "DimensionTooLarge",
    "ShapeMismatch",
    "qr_posdiag",
    "polar",
    "svd_thin",
    "solve_sym_part_triangular",
    "solve_lyapunov",
    "write_matrix",
    "read_matrix",
]

# Tolerances sit ~100x above unit roundoff for the matrix sizes in play.
# They are shared configuration, not per-call-site literals.
RANK_RTOL = 1e-12        # relative floor under which a factor counts as rank deficient
RESIDUAL_TOL = 1e-10     # defining-equation residual for the structured solvers
CONDITION_MAX = 1e12     # conditioning guard for the vectorized Lyapunov system
LYAPUNOV_MAX_DIM = 64    # the k^2 x k^2 dense solve is only sane for small k


class LinalgError(RuntimeError):
    """Base class for kernel failures."""


class RankDeficient(LinalgError):
    """Input matrix is numerically rank deficient."""


class NoConvergence(LinalgError):
    """Iterative factorization failed to converge."""


class SingularBlock(LinalgError):
    """A leading principal block of the triangular solve is singular."""


class NegativeDiagonal(LinalgError):
    """The triangular solve produced a non-positive diagonal entry.

    This is the numerical signature of endpoints lying outside the
    invertibility domain of the QR-based retraction.
    """


class SingularSystem(LinalgError):
    """The vectorized symmetric solve is numerically singular."""


class DimensionTooLarge(LinalgError):
    """Structured solver called beyond its supported size."""


class ShapeMismatch(LinalgError):
    """Operands have incompatible shapes."""


def _as_matrix(a, name="A"):
    a = np.asarray(a, dtype=float)
    if a.ndim != 2:
        raise ShapeMismatch(f"{name} must be 2-D, got shape {a.shape}")
    return a


def qr_posdiag(a):
    """Thin QR factorization with a strictly positive diagonal of R.

    Parameters
    ----------
    a : (m, k) array_like, m >= k
        Full-column-rank matrix.

    Returns
    -------
    q : (m, k) ndarray with orthonormal columns
    r : (k, k) ndarray, upper triangular, diag(r) > 0

    Raises
    ------
    RankDeficient
        If the smallest diagonal magnitude of R falls below
        ``RANK_RTOL * ||a||_F``.
    """
    a = _as_matrix(a)
    m, k = a.shape
    if m < k:
        raise ShapeMismatch(f"need m >= k, got {a.shape}")
    q, r = np.linalg.qr(a, mode="reduced")
    # Flip signs so every diagonal entry of R is positive; this pins the
    # unique smooth branch of the factorization.
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    q = q * signs
    r = signs[:, None] * r
    scale = np.linalg.norm(a)
    if scale == 0.0 or np.min(np.diag(r)) <= RANK_RTOL * scale:
        raise RankDeficient(
            f"matrix of shape {a.shape} is numerically rank deficient"
        )
    return q, r


def svd_thin(a):
    """Thin singular value decomposition ``a = u @ diag(s) @ v.T``.

    Returns ``(u, s, v)`` with singular values sorted non-increasing and
    ``v`` returned column-style (``n x r``), not transposed.
    """
    a = _as_matrix(a)
    if not np.all(np.isfinite(a)):
        raise ShapeMismatch("matrix entries must be finite")
    try:
        u, s, vt = np.linalg.svd(a, full_matrices=False)
    except np.linalg.LinAlgError as err:  # pragma: no cover - LAPACK cap
        raise NoConvergence(str(err)) from err
    return u, s, vt.T


def polar(a):
    """Orthonormal polar factor of a full-column-rank matrix.

    Computed from the thin SVD ``a = u s v^T`` as ``p = u v^T``; the
    product ``p.T @ a`` is then symmetric positive definite.
    """
    a = _as_matrix(a)
    m, k = a.shape
    if m < k:
        raise ShapeMismatch(f"need m >= k, got {a.shape}")
    u, s, v = svd_thin(a)
    if s[0] == 0.0 or s[-1] <= RANK_RTOL * s[0]:
        raise RankDeficient(
            f"matrix of shape {a.shape} is numerically rank deficient"
        )
    return u @ v.T


def solve_sym_part_triangular(a):
    """Solve ``a @ r + r.T @ a.T = 2 I`` for upper triangular r, diag(r) > 0.

    The unknown columns are recovered left to right: writing
    ``b = a @ r``, the defining equation forces ``sym(b) = I``, so column
    j of r satisfies the j-by-j leading system

        ``a[:j, :j] @ r[:j, j] = c``,  ``c[i] = -b[j, i]`` for i < j,
        ``c[j-1] = 1``,

    where the right-hand side entries ``b[j, i]`` are known from the
    previously solved columns.

    Raises
    ------
    SingularBlock
        If a leading principal block is numerically singular.
    NegativeDiagonal
        If the solved diagonal entry is not strictly positive (endpoints
        outside the retraction's invertibility domain).
    """
    a = _as_matrix(a)
    k, k2 = a.shape
    if k != k2:
        raise ShapeMismatch(f"need a square matrix, got {a.shape}")
    if k > LYAPUNOV_MAX_DIM:
        raise DimensionTooLarge(f"k = {k} exceeds supported maximum {LYAPUNOV_MAX_DIM}")
    r = np.zeros((k, k))
    b = np.zeros((k, k))  # running product a @ r
    for j in range(k):
        c = np.empty(j + 1)
        c[:j] = -b[j, :j]
        c[j] = 1.0
        block = a[: j + 1, : j + 1]
        try:
            col = np.linalg.solve(block, c)
        except np.linalg.LinAlgError as err:
            raise SingularBlock(f"leading {j + 1}x{j + 1} block is singular") from err
        if not np.all(np.isfinite(col)):
            raise SingularBlock(f"leading {j + 1}x{j + 1} block is ill-conditioned")
        r[: j + 1, j] = col
        if r[j, j] <= 0.0:
            raise NegativeDiagonal(
                f"diagonal entry {j} solved to {r[j, j]:.3e} <= 0"
            )
        b[:, j : j + 1] = a[:, : j + 1] @ col[:, None]
    return r


def solve_lyapunov(a):
    """Solve ``a @ s + s @ a.T = 2 I`` for symmetric s.

    Vectorizes into a dense k^2-by-k^2 system; this is deliberate, the
    solver only ever sees small cores (``k <= LYAPUNOV_MAX_DIM``).  A
    sufficient condition for unique solvability is ``a + a.T`` positive
    definite; the implementation detects failure through the conditioning
    of the vectorized system rather than checking definiteness up front.
    """
    a = _as_matrix(a)
    k, k2 = a.shape
    if k != k2:
        raise ShapeMismatch(f"need a square matrix, got {a.shape}")
    if k > LYAPUNOV_MAX_DIM:
        raise DimensionTooLarge(f"k = {k} exceeds supported maximum {LYAPUNOV_MAX_DIM}")
    eye = np.eye(k)
    system = np.kron(eye, a) + np.kron(a, eye)  # column-major vec convention
    rhs = 2.0 * eye.flatten(order="F")
    if np.linalg.cond(system) > CONDITION_MAX:
        raise SingularSystem("vectorized system is numerically singular")
    try:
        vec = np.linalg.solve(system, rhs)
    except np.linalg.LinAlgError as err:
        raise SingularSystem(str(err)) from err
    s = vec.reshape((k, k), order="F")
    return 0.5 * (s + s.T)


def write_matrix(path, a):
    """Write a matrix in the plain-text fixture format.

    First line is ``rows cols``; the remaining lines hold row-major
    whitespace-separated entries at 17 significant digits.
    """
    a = _as_matrix(a)
    with open(path, "w", encoding="ascii") as fh:
        _write_matrix_block(fh, a)


def _write_matrix_block(fh, a):
    fh.write(f"{a.shape[0]} {a.shape[1]}\n")
    for row in a:
        fh.write(" ".join(f"{x:.17g}" for x in row) + "\n")


def read_matrix(path):
    """Read a matrix written by :func:`write_matrix`."""
    with open(path, "r", encoding="ascii") as fh:
        return _read_matrix_block(fh)


def _read_matrix_block(fh):
    header = fh.readline().split()
    if len(header) != 2:
        raise ShapeMismatch(f"bad matrix header: {header!r}")
    rows, cols = int(header[0]), int(header[1])
    entries = []
    while len(entries) < rows * cols:
        line = fh.readline()
        if not line:
            raise ShapeMismatch("truncated matrix file")
        entries.extend(float(tok) for tok in line.split())
    if len(entries) != rows * cols:
        raise ShapeMismatch("matrix file has trailing entries")
    return np.array(entries).reshape(rows, cols)
