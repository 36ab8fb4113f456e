"""Partition priors: mixture of finite mixtures (MFM) and the Dirichlet process.

For the MFM, the prior full conditional of one label needs the
coefficients ``V_n(t) = sum_k k_(t) / (gamma k)^(n) p_K(k)``, which are
tabulated once per sample size in log space.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .errors import DomainError, NonConvergence, TableMissing

MAX_K = 10 ** 6
_CHUNK = 512
_RUN = 30


@dataclass(frozen=True)
class MfmPriorSpec:
    """``K - 1 ~ Poisson(lam)`` and symmetric ``Dirichlet(gamma)`` weights.

    ``log_pk`` may replace the shifted Poisson with any log-pmf on
    ``k = 1, 2, ...`` that accepts integer arrays.
    """

    gamma: float = 1.0
    lam: float = 1.0
    log_pk: object = None

    def __post_init__(self):
        if not self.gamma > 0:
            raise DomainError(f"gamma must be positive, got {self.gamma}")
        if self.log_pk is None and not self.lam > 0:
            raise DomainError(f"lambda must be positive, got {self.lam}")

    def log_mass(self, k):
        if self.log_pk is not None:
            return self.log_pk(np.asarray(k))
        return log_pk(self, k)

    def to_dict(self):
        if self.log_pk is not None:
            raise ValueError("a custom p_K cannot be serialized")
        return {"kind": "mfm", "gamma": float(self.gamma), "lambda": float(self.lam)}


@dataclass(frozen=True)
class DpmPriorSpec:
    alpha: float = 1.0

    def __post_init__(self):
        if not self.alpha > 0:
            raise DomainError(f"alpha must be positive, got {self.alpha}")

    def to_dict(self):
        return {"kind": "dpm", "alpha": float(self.alpha)}


def prior_spec_from_dict(d):
    kind = d.get("kind", "mfm")
    if kind == "mfm":
        return MfmPriorSpec(float(d.get("gamma", 1.0)), float(d.get("lambda", 1.0)))
    if kind == "dpm":
        return DpmPriorSpec(float(d.get("alpha", 1.0)))
    raise ValueError(f"unknown partition prior {kind!r}")


def log_pk(spec, k):
    """Shifted-Poisson log-pmf ``-lam + (k-1) log lam - log (k-1)!``."""
    k = np.asarray(k)
    if np.any(k < 1):
        raise DomainError(f"p_K is supported on k >= 1, got {k}")
    lam = spec.lam
    out = -lam + (k - 1) * np.log(lam) - gammaln(k)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class LogVnTable:
    """``log V_n(t)`` for ``t = 1 .. n + 1``.

    ``truncation_k[t - 1]`` is the last ``k`` summed for ``t``;
    ``tail_bound`` is the largest relative size of the final 30 retained
    terms over all ``t``, a heuristic gauge of the neglected tail.
    """

    n: int
    gamma: float
    values: np.ndarray
    truncation_k: np.ndarray
    tail_bound: float

    def log_vn(self, t):
        if not 1 <= t <= self.n + 1:
            raise TableMissing(f"V_n(t) tabulated for t = 1..{self.n + 1}, requested t = {t}")
        return float(self.values[t - 1])

    def to_dict(self):
        return {"n": self.n, "gamma": self.gamma, "log_vn": self.values.tolist(),
                "truncation_k": self.truncation_k.tolist(), "tail_bound": self.tail_bound}


def _log_vn_single(n, t, gamma, log_mass, tol):
    log_tol = np.log(tol)
    acc = -np.inf
    run = 0
    k0 = max(t, 1)
    while k0 <= MAX_K:
        k = np.arange(k0, k0 + _CHUNK)
        terms = (gammaln(k + 1.0) - gammaln(k - t + 1.0)
                 - gammaln(gamma * k + n) + gammaln(gamma * k) + log_mass(k))
        cum = np.logaddexp.accumulate(np.concatenate(([acc], terms)))[1:]
        small = terms - cum < log_tol
        for j in range(k.size):
            run = run + 1 if small[j] else 0
            if run >= _RUN:
                rel = terms[j - _RUN + 1:j + 1] - cum[j]
                return float(cum[j]), int(k[j]), float(np.exp(rel.max()))
        acc = cum[-1]
        k0 += _CHUNK
    raise NonConvergence(f"V_{n}({t}) did not converge before k = {MAX_K}")


def compute_log_vn(n, gamma=1.0, pk=None, tol=1e-12):
    """Tabulate ``log V_n(t)`` for ``t = 1 .. n + 1``.

    Each series is accumulated by log-sum-exp over ``k = t, t + 1, ...``
    and stopped once 30 consecutive terms each contribute less than
    ``tol`` relative to the running sum.

    Parameters
    ----------
    n : int
        Sample size.
    gamma : float
        Dirichlet concentration.
    pk : MfmPriorSpec or callable, optional
        Prior on the number of components.  A callable is taken to be a
        vectorized log-pmf.  Defaults to ``K - 1 ~ Poisson(1)``.
    tol : float
        Relative truncation tolerance.
    """
    if int(n) != n or n < 1:
        raise DomainError(f"n must be a positive integer, got {n}")
    n = int(n)
    if pk is None:
        pk = MfmPriorSpec(gamma=gamma)
    log_mass = pk.log_mass if isinstance(pk, MfmPriorSpec) else pk
    vals = np.empty(n + 1)
    trunc = np.empty(n + 1, dtype=int)
    tail = 0.0
    for t in range(1, n + 2):
        vals[t - 1], trunc[t - 1], rel = _log_vn_single(n, t, gamma, log_mass, tol)
        tail = max(tail, rel)
    vals.setflags(write=False)
    return LogVnTable(n, float(gamma), vals, trunc, tail)


def mfm_label_weights(existing_sizes, k_star, spec, table):
    """Unnormalized log prior weights for one label under the MFM.

    Returns ``log(n_c + gamma)`` for each existing cluster followed by
    ``log gamma + log V_n(K* + 1) - log V_n(K*)`` for a new cluster.  With
    no other cluster (``K* = 0``) the single option gets ``log gamma``.
    """
    sizes = np.asarray(existing_sizes, dtype=float)
    if sizes.size != k_star:
        raise ValueError(f"k_star = {k_star} but {sizes.size} cluster sizes given")
    g = spec.gamma
    if k_star == 0:
        new = np.log(g)
    else:
        if k_star + 1 > table.n + 1:
            raise TableMissing(f"need V_n({k_star + 1}) but table stops at t = {table.n + 1}")
        new = np.log(g) + table.values[k_star] - table.values[k_star - 1]
    return np.append(np.log(sizes + g), new)


def dpm_label_weights(existing_sizes, spec):
    """Unnormalized log CRP weights: ``log n_c`` per cluster, ``log alpha`` for new."""
    sizes = np.asarray(existing_sizes, dtype=float)
    return np.append(np.log(sizes), np.log(spec.alpha))


def log_partition_prior(sizes, spec, table):
    """MFM probability of one specific set partition with the given block sizes.

    ``log V_n(t) + sum_c log gamma^(|c|)`` with ``gamma^(m)`` the rising factorial.
    """
    sizes = np.asarray(sizes, dtype=float)
    g = spec.gamma
    return table.log_vn(sizes.size) + float(np.sum(gammaln(g + sizes) - gammaln(g)))


class MfmWeights:
    """Label-weight rule for the MFM with a precomputed ``V_n`` table.

    Returns the same values as :func:`mfm_label_weights` from lookup
    tables indexed by cluster size and by ``K*``.
    """

    def __init__(self, spec, n, tol=1e-12):
        self.spec = spec
        self.table = compute_log_vn(n, spec.gamma, spec, tol)
        g = spec.gamma
        self._log_size = np.log(np.arange(n + 1) + g)
        vals = self.table.values
        self._log_new = np.log(g) + np.concatenate(([0.0], vals[1:] - vals[:-1]))

    def __call__(self, sizes, k_star):
        out = np.empty(k_star + 1)
        out[:-1] = self._log_size[sizes]
        out[-1] = self._log_new[k_star]
        return out


class DpmWeights:
    """Label-weight rule for the Dirichlet process mixture."""

    def __init__(self, spec):
        self.spec = spec

    def __call__(self, sizes, k_star):
        return dpm_label_weights(sizes, self.spec)


def make_weight_rule(spec, n):
    if isinstance(spec, MfmPriorSpec):
        return MfmWeights(spec, n)
    if isinstance(spec, DpmPriorSpec):
        return DpmWeights(spec)
    raise TypeError(f"unsupported partition prior {spec!r}")
