"""Distance-based comparison methods on a precomputed Riemannian distance matrix."""

import numpy as np

from .errors import BadK, DimMismatch, HeterogeneousDims
from .spd import as_spd, riemannian_distance

PAM_MAX_ITER = 200


def pairwise_riemannian(data, metric="affine"):
    """Symmetric ``(n, n)`` matrix of Riemannian distances with a zero diagonal."""
    mats = [as_spd(w) for w in data]
    if len({m.dim for m in mats}) > 1:
        raise HeterogeneousDims("observations have differing dimensions")
    n = len(mats)
    d = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            d[i, j] = d[j, i] = riemannian_distance(mats[i], mats[j], metric)
    return d


def _check(d, k):
    d = np.asarray(d, dtype=float)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise DimMismatch(f"distance matrix must be square, got shape {d.shape}")
    n = d.shape[0]
    if not 1 <= k <= n:
        raise BadK(f"k must lie in 1..{n}, got {k}")
    return d, n


def _relabel(z):
    _, first, inv = np.unique(z, return_index=True, return_inverse=True)
    rank = np.empty(first.size, dtype=np.int64)
    rank[np.argsort(first, kind="stable")] = np.arange(first.size)
    return rank[inv.ravel()]


def hierarchical_ward(d, k, variant="ward.D2"):
    """Agglomerative Ward clustering cut at ``k`` clusters.

    ``"ward.D2"`` runs the Lance-Williams Ward recurrence on squared
    dissimilarities (Euclidean Ward when ``d`` is Euclidean);
    ``"ward.D"`` applies the same recurrence to ``d`` itself.  Ties in
    the closest pair go to the lowest index pair.
    """
    d, n = _check(d, k)
    if variant == "ward.D2":
        m = d ** 2
    elif variant == "ward.D":
        m = d.copy()
    else:
        raise ValueError(f"unknown Ward variant {variant!r}")
    m = m.astype(float)
    np.fill_diagonal(m, np.inf)
    size = np.ones(n)
    alive = np.ones(n, dtype=bool)
    members = np.arange(n)
    for _ in range(n - k):
        sub = np.where(alive[:, None] & alive[None, :], m, np.inf)
        flat = int(np.argmin(sub))
        a, b = divmod(flat, n)
        a, b = min(a, b), max(a, b)
        dab = m[a, b]
        ni, nj = size[a], size[b]
        nk = size
        upd = ((ni + nk) * m[a] + (nj + nk) * m[b] - nk * dab) / (ni + nj + nk)
        m[a, :] = upd
        m[:, a] = upd
        m[a, a] = np.inf
        m[b, :] = np.inf
        m[:, b] = np.inf
        size[a] += size[b]
        alive[b] = False
        members[members == b] = a
    return _relabel(members)


def _pam_cost(d, medoids):
    return float(d[:, medoids].min(axis=1).sum())


def pam(d, k, return_medoids=False, trace=None):
    """Partitioning around medoids: greedy BUILD, then best-improvement SWAP.

    Deterministic: BUILD picks the lowest-index point among equals and
    SWAP applies the single best improving (medoid, non-medoid) exchange
    per iteration until none improves, or 200 iterations.  ``trace``,
    when a list, receives the total cost after BUILD and each swap.
    """
    d, n = _check(d, k)
    # BUILD
    medoids = [int(np.argmin(d.sum(axis=1)))]
    nearest = d[:, medoids[0]].copy()
    for _ in range(1, k):
        gain = np.maximum(nearest[:, None] - d, 0.0).sum(axis=0)
        gain[medoids] = -np.inf
        c = int(np.argmax(gain))
        medoids.append(c)
        nearest = np.minimum(nearest, d[:, c])
    medoids = np.array(medoids)
    cost = _pam_cost(d, medoids)
    if trace is not None:
        trace.append(cost)
    # SWAP
    for _ in range(PAM_MAX_ITER):
        best = (cost, None, None)
        others = np.setdiff1d(np.arange(n), medoids)
        for mi in range(k):
            rest = np.delete(medoids, mi)
            base = d[:, rest].min(axis=1) if rest.size else np.full(n, np.inf)
            for h in others:
                c = float(np.minimum(base, d[:, h]).sum())
                if c < best[0] - 1e-12 * max(1.0, abs(cost)):
                    best = (c, mi, h)
        if best[1] is None:
            break
        medoids[best[1]] = best[2]
        cost = best[0]
        if trace is not None:
            trace.append(cost)
    labels = np.argmin(d[:, medoids], axis=1)
    labels[medoids] = np.arange(k)
    out = _relabel(labels)
    return (out, medoids.copy()) if return_medoids else out
