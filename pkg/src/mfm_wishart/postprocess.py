"""Summaries of a fitted chain and the metrics used to score clusterings."""

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .errors import DegenerateMargins, EmptyTrace, LengthMismatch, TooShort


def _label_rows(trace):
    labels = getattr(trace, "labels", trace)
    labels = np.asarray(labels)
    if labels.ndim == 1:
        labels = labels[None, :]
    if labels.shape[0] == 0:
        raise EmptyTrace("the trace holds no retained draws")
    return labels


def _comembership(z):
    return (z[:, None] == z[None, :]).astype(float)


@dataclass(frozen=True)
class PartitionEstimate:
    """Dahl point estimate.

    ``draw_index`` is 0-based: the first retained draw has index 0.
    ``k_plus_hist`` maps each observed ``K+`` to its posterior mass.
    """

    labels: np.ndarray
    draw_index: int
    k_plus_hist: dict

    @property
    def k_hat(self):
        return int(np.unique(self.labels).size)


def coclustering_matrix(trace):
    """Posterior mean co-membership ``A_bar``, the fraction of draws pairing ``i`` and ``j``."""
    z = _label_rows(trace)
    acc = np.zeros((z.shape[1], z.shape[1]))
    for row in z:
        acc += _comembership(row)
    return acc / z.shape[0]


def dahl_partition(trace):
    """Draw minimizing ``sum_ij (A_ij - A_bar_ij)^2``, earliest draw on ties.

    Two passes over the draws: one to accumulate ``A_bar``, one for the
    distances.  Full matrices are compared, diagonal included.
    """
    z = _label_rows(trace)
    a_bar = coclustering_matrix(z)
    dist = np.array([np.sum((_comembership(row) - a_bar) ** 2) for row in z])
    best = int(np.argmin(dist))  # argmin returns the first minimizer
    return PartitionEstimate(_canonical(z[best]), best, k_plus_posterior(z))


def _canonical(z):
    _, first, inv = np.unique(z, return_index=True, return_inverse=True)
    rank = np.empty(first.size, dtype=np.int64)
    rank[np.argsort(first, kind="stable")] = np.arange(first.size)
    return rank[inv.ravel()]


def k_plus_posterior(trace):
    """Posterior mass of each number of occupied clusters, as ``{k: mass}``."""
    z = _label_rows(trace)
    ks = np.array([np.unique(row).size for row in z])
    vals, cnt = np.unique(ks, return_counts=True)
    return {int(k): c / ks.size for k, c in zip(vals, cnt)}


def modal_k(hist):
    """Most probable ``K+``; the smaller value wins a tie."""
    return min(hist, key=lambda k: (-hist[k], k))


# -- agreement metrics -------------------------------------------------------------

def _comb2(x):
    x = np.asarray(x, dtype=float)
    return x * (x - 1.0) / 2.0


def adjusted_rand_index(a, b):
    """Adjusted Rand index between two labelings of the same items.

    When both partitions are all singletons or both one block, the
    chance correction is 0/0; the value is then 1.0 (they are identical).
    """
    a = np.asarray(a).ravel()
    b = np.asarray(b).ravel()
    if a.size != b.size:
        raise LengthMismatch(f"label vectors have lengths {a.size} and {b.size}")
    if a.size < 2:
        raise LengthMismatch("at least two items are needed")
    _, ia = np.unique(a, return_inverse=True)
    _, ib = np.unique(b, return_inverse=True)
    table = np.zeros((ia.max() + 1, ib.max() + 1))
    np.add.at(table, (ia, ib), 1.0)
    index = _comb2(table).sum()
    sa = _comb2(table.sum(axis=1)).sum()
    sb = _comb2(table.sum(axis=0)).sum()
    expected = sa * sb / _comb2(a.size)
    top = 0.5 * (sa + sb)
    if top == expected:
        return 1.0
    return float((index - expected) / (top - expected))


def k_recovery_accuracy(estimates, k0):
    est = np.asarray(estimates)
    if est.size == 0:
        raise EmptyTrace("no estimates given")
    return float(np.mean(est == k0))


# -- chain diagnostics --------------------------------------------------------------

def _autocorr(x):
    n = x.size
    x = x - x.mean()
    m = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, m)
    acov = np.fft.irfft(f * np.conj(f), m)[:n] / n
    return acov / acov[0]


def ess(series):
    """Effective sample size with Geyer's initial positive sequence.

    ``tau = -1 + 2 sum_k (rho_2k + rho_2k+1)``, summed while the paired
    autocorrelations stay positive; ``ESS = n / tau`` capped at ``n``.
    A constant series has ESS ``n`` by convention.
    """
    x = np.asarray(series, dtype=float).ravel()
    n = x.size
    if n < 10:
        raise TooShort(f"ESS needs at least 10 values, got {n}")
    if np.all(x == x[0]):
        return float(n)
    rho = _autocorr(x)
    pairs = rho[: 2 * (n // 2)].reshape(-1, 2).sum(axis=1)
    neg = np.flatnonzero(pairs <= 0)
    stop = neg[0] if neg.size else pairs.size
    tau = -1.0 + 2.0 * pairs[:stop].sum()
    return float(min(n, n / tau)) if tau > 0 else float(n)


def credible_interval(series, level=0.95, method="linear"):
    """Equal-tailed interval from sample quantiles.

    ``method`` is passed to :func:`numpy.quantile`; the default
    ``"linear"`` is the type-7 rule.  ``level = 0`` gives the median twice.
    """
    x = np.asarray(series, dtype=float).ravel()
    if x.size == 0:
        raise EmptyTrace("empty series")
    if not 0.0 <= level < 1.0:
        raise ValueError(f"level must lie in [0, 1), got {level}")
    lo, hi = np.quantile(x, [0.5 * (1 - level), 0.5 * (1 + level)], method=method)
    return float(lo), float(hi)


# -- Fisher's exact test ------------------------------------------------------------

_REL = 1e-7


def _hypergeom_logpmf(x, row1, col1, n):
    row2 = n - row1
    return (gammaln(row1 + 1) - gammaln(x + 1) - gammaln(row1 - x + 1)
            + gammaln(row2 + 1) - gammaln(col1 - x + 1) - gammaln(row2 - col1 + x + 1)
            - gammaln(n + 1) + gammaln(col1 + 1) + gammaln(n - col1 + 1))


def fisher_exact_2x2(table):
    """Two-sided Fisher exact p-value for a 2x2 table of counts.

    Sums the hypergeometric probabilities (fixed margins) of every table
    no more likely than the observed one, with a relative slack of 1e-7
    so that ties in exact arithmetic are not lost to rounding.
    """
    t = np.asarray(table)
    if t.shape != (2, 2):
        raise ValueError(f"expected a 2x2 table, got shape {t.shape}")
    if np.any(t < 0) or np.any(t != np.round(t)):
        raise ValueError("cells must be nonnegative integers")
    t = t.astype(np.int64)
    rows, cols = t.sum(axis=1), t.sum(axis=0)
    if np.any(rows == 0) or np.any(cols == 0):
        raise DegenerateMargins(f"table {t.tolist()} has a zero margin")
    n = int(t.sum())
    row1, col1 = int(rows[0]), int(cols[0])
    support = np.arange(max(0, col1 - (n - row1)), min(row1, col1) + 1)
    logp = _hypergeom_logpmf(support, row1, col1, n)
    obs = _hypergeom_logpmf(t[0, 0], row1, col1, n)
    keep = logp <= obs + np.log1p(_REL)
    p = np.exp(logp[keep] - logp.max()).sum() / np.exp(logp - logp.max()).sum()
    return float(min(1.0, p))
