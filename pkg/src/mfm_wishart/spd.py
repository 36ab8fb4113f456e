"""Symmetric positive-definite matrices.

The :class:`SpdMatrix` value type plus the handful of factorizations,
distances and random variates the model needs.  Everything is dense
numpy; dimensions beyond a few dozen are not a design target.
"""

import numpy as np
from scipy import linalg as sla

from .errors import (DimMismatch, InvalidDof, LengthMismatch,
                     NotPositiveDefinite, NotSymmetric, ZeroDiagonal)

SYMMETRY_RTOL = 1e-8
# squared Cholesky pivots below this fraction of the largest diagonal entry
# are treated as zero (numerically singular input)
_PIVOT_RTOL = 64 * np.finfo(float).eps


def _as_square(a):
    a = np.array(a, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimMismatch(f"expected a square matrix, got shape {a.shape}")
    return a


def _asymmetry(a):
    scale = np.max(np.abs(a))
    if scale == 0.0:
        return 0.0
    return float(np.max(np.abs(a - a.T)) / scale)


def _symmetrized(a, rtol=SYMMETRY_RTOL):
    asym = _asymmetry(a)
    if not asym <= rtol:
        raise NotSymmetric(asym)
    return 0.5 * (a + a.T)


def _find_pivot(a):
    """Index of the first non-positive pivot of an unpivoted Cholesky."""
    p = a.shape[0]
    L = np.zeros_like(a)
    floor = _PIVOT_RTOL * max(np.max(np.abs(np.diag(a))), np.finfo(float).tiny)
    for j in range(p):
        d = a[j, j] - L[j, :j] @ L[j, :j]
        if not d > floor:
            return j
        L[j, j] = np.sqrt(d)
        L[j + 1:, j] = (a[j + 1:, j] - L[j + 1:, :j] @ L[j, :j]) / L[j, j]
    return None


def _factor(a):
    if not np.all(np.isfinite(a)):
        raise NotPositiveDefinite(0, "matrix has non-finite entries")
    try:
        L = np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        pivot = _find_pivot(a)
        raise NotPositiveDefinite(0 if pivot is None else pivot) from None
    d2 = np.diag(L) ** 2
    floor = _PIVOT_RTOL * np.max(np.diag(a))
    small = np.flatnonzero(~(d2 > floor))
    if small.size:
        raise NotPositiveDefinite(
            int(small[0]),
            f"matrix is numerically singular (pivot {int(small[0])} squared = {d2[small[0]]:.3g})")
    return L


class SpdMatrix:
    """An immutable symmetric positive-definite matrix.

    The input is checked for symmetry to a relative tolerance of 1e-8,
    symmetrized, and factored immediately; the lower Cholesky factor is
    kept alongside the entries.

    Parameters
    ----------
    entries : array_like, shape (p, p)
    """

    __slots__ = ("_entries", "_chol")

    def __init__(self, entries):
        if isinstance(entries, SpdMatrix):
            self._entries, self._chol = entries._entries, entries._chol
            return
        a = _symmetrized(_as_square(entries))
        L = _factor(a)
        a.setflags(write=False)
        L.setflags(write=False)
        self._entries = a
        self._chol = L

    @classmethod
    def identity(cls, p):
        return cls(np.eye(p))

    @property
    def dim(self):
        return self._entries.shape[0]

    @property
    def entries(self):
        return self._entries

    @property
    def chol(self):
        return self._chol

    def __eq__(self, other):
        return isinstance(other, SpdMatrix) and np.array_equal(self._entries, other._entries)

    def __hash__(self):
        return hash(self._entries.tobytes())

    def log_det(self):
        return 2.0 * float(np.sum(np.log(np.diag(self._chol))))

    def inverse(self):
        return SpdMatrix(sla.cho_solve((self._chol, True), np.eye(self.dim)))

    def __array__(self, dtype=None, copy=None):
        out = self._entries if dtype is None else self._entries.astype(dtype)
        return out.copy() if copy else out

    def __repr__(self):
        return f"SpdMatrix({self._entries.tolist()!r})"


def as_spd(a):
    return a if isinstance(a, SpdMatrix) else SpdMatrix(a)


def cholesky(a):
    """Lower Cholesky factor ``L`` with ``L @ L.T == a``.

    Raises
    ------
    NotSymmetric
        If ``a`` is asymmetric beyond a relative 1e-8.
    NotPositiveDefinite
        With the index of the first failing pivot.
    """
    if isinstance(a, SpdMatrix):
        return a.chol.copy()
    return _factor(_symmetrized(_as_square(a)))


def log_det(a):
    return as_spd(a).log_det()


def trace_product(a, b):
    """``tr(a @ b)`` for symmetric ``a`` and ``b``, as an elementwise sum."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise DimMismatch(f"trace_product: shapes {a.shape} and {b.shape} differ")
    return float(np.sum(a * b))


def solve_spd(a, rhs):
    a = as_spd(a)
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape[0] != a.dim:
        raise DimMismatch(f"solve_spd: matrix is {a.dim}x{a.dim}, rhs has {rhs.shape[0]} rows")
    return sla.cho_solve((a.chol, True), rhs)


# -- half-vectorization -------------------------------------------------------

def _vech_index(p):
    # column-major over the lower triangle: (0,0), (1,0), ..., (p-1,0), (1,1), ...
    cols, rows = np.triu_indices(p)
    return rows, cols


def vech(a):
    """Stack the lower triangle of ``a`` column by column."""
    a = _as_square(np.asarray(a))
    rows, cols = _vech_index(a.shape[0])
    return a[rows, cols].copy()


def vech_dim(m):
    """Matrix dimension ``p`` for a half-vector of length ``m``."""
    p = int(round((np.sqrt(8 * m + 1) - 1) / 2))
    if p < 1 or p * (p + 1) // 2 != m:
        raise LengthMismatch(f"length {m} is not a triangular number p(p+1)/2")
    return p


def vech_inverse(v):
    v = np.asarray(v, dtype=float).ravel()
    p = vech_dim(v.size)
    rows, cols = _vech_index(p)
    a = np.zeros((p, p))
    a[rows, cols] = v
    a[cols, rows] = v
    return a


def duplication_matrix(p):
    """``D_p`` with ``vec(S) = D_p @ vech(S)`` for symmetric ``S``."""
    rows, cols = _vech_index(p)
    d = np.zeros((p * p, rows.size))
    k = np.arange(rows.size)
    # vec stacks columns: entry (i, j) sits at j * p + i
    d[cols * p + rows, k] = 1.0
    d[rows * p + cols, k] = 1.0
    return d


# -- distances -----------------------------------------------------------------

def riemannian_distance(a, b, metric="affine"):
    """Distance between two SPD matrices.

    ``metric="affine"`` is the affine-invariant metric
    ``||log(A^{-1/2} B A^{-1/2})||_F``, evaluated through the generalized
    eigenvalues of ``(B, A)``.  ``metric="log-euclidean"`` gives
    ``||log A - log B||_F``.
    """
    a, b = as_spd(a), as_spd(b)
    if a.dim != b.dim:
        raise DimMismatch(f"riemannian_distance: dims {a.dim} and {b.dim} differ")
    if metric not in ("affine", "log-euclidean"):
        raise ValueError(f"unknown metric {metric!r}")
    if np.array_equal(a.entries, b.entries):
        return 0.0
    if metric == "affine":
        lam = sla.eigh(b.entries, a.entries, eigvals_only=True)
        return float(np.sqrt(np.sum(np.log(lam) ** 2)))
    return float(np.linalg.norm(_logm_spd(a.entries) - _logm_spd(b.entries)))


def _logm_spd(a):
    w, v = np.linalg.eigh(a)
    return (v * np.log(w)) @ v.T


# -- random variates ----------------------------------------------------------

def _check_dof(nu, p, what="nu"):
    if not nu > p - 1:
        raise InvalidDof(f"{what} = {nu} must exceed p - 1 = {p - 1}")


def _bartlett(nu, p, rng, size):
    """Lower-triangular Bartlett factors with ``A @ A.T ~ W_p(I, nu)``."""
    A = np.zeros((size, p, p))
    rows, cols = np.tril_indices(p, -1)
    A[:, rows, cols] = rng.standard_normal((size, rows.size))
    diag = np.arange(p)
    # chi-square with non-integer degrees of freedom is fine here
    A[:, diag, diag] = np.sqrt(rng.chisquare(nu - diag, size=(size, p)))
    return A


def sample_wishart_array(scale, nu, rng, size):
    """``size`` Wishart draws as an array of shape ``(size, p, p)``."""
    scale = as_spd(scale)
    p = scale.dim
    _check_dof(nu, p)
    LA = scale.chol @ _bartlett(nu, p, rng, size)
    W = LA @ LA.transpose(0, 2, 1)
    return 0.5 * (W + W.transpose(0, 2, 1))


def sample_wishart(scale, nu, rng):
    """One draw from ``W_p(scale, nu)`` by Bartlett decomposition."""
    return SpdMatrix(sample_wishart_array(scale, nu, rng, 1)[0])


def sample_inverse_wishart_array(psi, kappa, rng, size):
    """``size`` inverse-Wishart draws, shape ``(size, p, p)``.

    Uses ``Sigma^{-1} ~ W_p(psi^{-1}, kappa)``: with ``psi = C C^T`` and a
    Bartlett factor ``A``, ``Sigma = (C A^{-T})(C A^{-T})^T``.
    """
    psi = as_spd(psi)
    p = psi.dim
    _check_dof(kappa, p, "kappa")
    A = _bartlett(kappa, p, rng, size)
    B = psi.chol @ np.linalg.inv(A).transpose(0, 2, 1)
    S = B @ B.transpose(0, 2, 1)
    return 0.5 * (S + S.transpose(0, 2, 1))


def sample_inverse_wishart(psi, kappa, rng):
    return SpdMatrix(sample_inverse_wishart_array(psi, kappa, rng, 1)[0])


def standardize_to_correlation(a):
    """``D^{-1/2} a D^{-1/2}`` with ``D = diag(a)``; returns an :class:`SpdMatrix`."""
    a = _symmetrized(_as_square(np.asarray(a, dtype=float)))
    d = np.diag(a)
    if np.any(~(d > 0)):
        bad = int(np.flatnonzero(~(d > 0))[0])
        raise ZeroDiagonal(f"diagonal entry {bad} is {d[bad]}; cannot standardize")
    s = 1.0 / np.sqrt(d)
    r = a * s[:, None] * s[None, :]
    np.fill_diagonal(r, 1.0)
    return SpdMatrix(np.clip(r, -1.0, 1.0))
