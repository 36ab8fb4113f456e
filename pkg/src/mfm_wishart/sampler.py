"""Collapsed Metropolis-Hastings-within-Gibbs sampler for Wishart mixtures.

Each iteration sweeps the labels with their collapsed full conditionals
(cluster scales and mixing weights integrated out) and then moves the
shared degrees of freedom ``nu`` with one Gaussian random-walk
Metropolis step.  The partition prior enters only through a *weight rule*
(MFM or DPM), so both models share every other line of code.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, HeterogeneousDims, NonSpdObservation
from .mfm_prior import DpmPriorSpec, MfmPriorSpec, make_weight_rule, prior_spec_from_dict
from .spd import SpdMatrix, sample_inverse_wishart
from .special import log_multigamma
from .wishart import ClusterSuffStat, PriorHyper, nu_log_full_conditional_arrays


# -- configuration ---------------------------------------------------------------

@dataclass(frozen=True)
class Singletons:
    """Start with every observation in its own cluster."""


@dataclass(frozen=True)
class KClusters:
    """Start from ``k`` clusters with uniformly random assignment."""

    k: int


@dataclass(frozen=True)
class GivenLabels:
    labels: tuple


def _init_to_dict(init):
    if isinstance(init, Singletons):
        return {"kind": "singletons"}
    if isinstance(init, KClusters):
        return {"kind": "k_clusters", "k": int(init.k)}
    return {"kind": "given", "labels": [int(x) for x in init.labels]}


def _init_from_dict(d):
    kind = d.get("kind", "singletons")
    if kind == "singletons":
        return Singletons()
    if kind == "k_clusters":
        return KClusters(int(d["k"]))
    if kind == "given":
        return GivenLabels(tuple(int(x) for x in d["labels"]))
    raise ConfigError(f"unknown init kind {kind!r}")


@dataclass(frozen=True)
class SamplerConfig:
    """Everything that determines a chain, given the data.

    ``scan`` is ``"fixed"`` (observations in index order, the default) or
    ``"random"`` (a fresh permutation every sweep).  ``scan_order`` pins
    an explicit visiting order instead.  ``fix_nu`` freezes ``nu`` at
    its initial value.
    """

    iterations: int
    burn_in: int
    prior: PriorHyper
    model: object = field(default_factory=MfmPriorSpec)
    seed: int = 0
    thin: int = 1
    proposal_sd: float = 1.0
    init: object = field(default_factory=Singletons)
    nu_init: float = None
    fix_nu: bool = False
    scan: str = "fixed"
    scan_order: tuple = None
    audit_every: int = 0

    def __post_init__(self):
        if self.iterations < 1:
            raise ConfigError(f"iterations must be >= 1, got {self.iterations}")
        if not 0 <= self.burn_in < self.iterations:
            raise ConfigError(f"burn_in must lie in [0, iterations), got {self.burn_in}")
        if self.thin < 1:
            raise ConfigError(f"thin must be >= 1, got {self.thin}")
        if not self.proposal_sd > 0:
            raise ConfigError(f"proposal_sd must be positive, got {self.proposal_sd}")
        if self.scan not in ("fixed", "random"):
            raise ConfigError(f"scan must be 'fixed' or 'random', got {self.scan!r}")

    @classmethod
    def default(cls, p, **overrides):
        """Simulation-study settings: 10,000 iterations, 4,000 burn-in, sd 1.0."""
        kw = dict(iterations=10_000, burn_in=4_000, prior=PriorHyper.default(p))
        kw.update(overrides)
        return cls(**kw)

    def to_dict(self):
        return {
            "iterations": int(self.iterations), "burn_in": int(self.burn_in),
            "thin": int(self.thin), "proposal_sd": float(self.proposal_sd),
            "seed": int(self.seed), "prior": self.prior.to_dict(),
            "model": self.model.to_dict(), "init": _init_to_dict(self.init),
            "nu_init": None if self.nu_init is None else float(self.nu_init),
            "fix_nu": bool(self.fix_nu), "scan": self.scan,
            "scan_order": None if self.scan_order is None else [int(i) for i in self.scan_order],
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            iterations=int(d["iterations"]), burn_in=int(d["burn_in"]),
            thin=int(d.get("thin", 1)), proposal_sd=float(d.get("proposal_sd", 1.0)),
            seed=int(d["seed"]), prior=PriorHyper.from_dict(d["prior"]),
            model=prior_spec_from_dict(d.get("model", {})),
            init=_init_from_dict(d.get("init", {})),
            nu_init=d.get("nu_init"), fix_nu=bool(d.get("fix_nu", False)),
            scan=d.get("scan", "fixed"),
            scan_order=None if d.get("scan_order") is None else tuple(d["scan_order"]),
        )


# -- likelihood kernel ------------------------------------------------------------------

class CollapsedWishartKernel:
    """Collapsed predictive log-densities for one observation against all clusters.

    Holds per-observation log-determinants and a per-``nu`` table of
    ``log Gamma_p((kappa0 + m nu) / 2)`` for ``m = 0..n + 1``, so a call
    is plain array arithmetic.  The caller supplies ``log|Psi0 + S_c|``
    and ``log|Psi0 + S_c + W_i|`` for the existing clusters.
    """

    def __init__(self, data, hyper):
        self.hyper = hyper
        self.p = hyper.dim
        self.n = data.shape[0]
        self.logdet_w = _batch_logdet(data)
        self.logdet_w_psi0 = _batch_logdet(data + hyper.psi0.entries)
        self.nu = None

    def set_nu(self, nu):
        if nu == self.nu:
            return
        self.nu = nu
        m = np.arange(self.n + 2)
        self._lmg = log_multigamma(self.p, 0.5 * (self.hyper.kappa0 + m * nu))
        self._lmg_half = log_multigamma(self.p, 0.5 * nu)

    def __call__(self, i, counts, logdet_post, logdet_post_w):
        """Log predictives for each existing cluster, then for a new one."""
        nu, k0 = self.nu, self.hyper.kappa0
        a_old = 0.5 * (k0 + counts * nu)
        base = 0.5 * (nu - self.p - 1) * self.logdet_w[i] - self._lmg_half
        out = np.empty(counts.size + 1)
        out[:-1] = (self._lmg[counts + 1] - self._lmg[counts] + base
                    + a_old * logdet_post - (a_old + 0.5 * nu) * logdet_post_w)
        out[-1] = (self._lmg[1] - self._lmg[0] + base
                   + 0.5 * k0 * self.hyper.logdet_psi0
                   - 0.5 * (k0 + nu) * self.logdet_w_psi0[i])
        return out


def _batch_logdet(a):
    L = np.linalg.cholesky(a)
    return 2.0 * np.log(np.diagonal(L, axis1=-2, axis2=-1)).sum(axis=-1)


# -- state ---------------------------------------------------------------------------------

class ClusterState:
    """Labels, per-cluster sufficient statistics and the shared ``nu``.

    Clusters live in numbered slots (at most ``n``); a new cluster takes
    the lowest free slot, and label weights are always listed in slot
    order.  :attr:`clusters` exposes the live slots as
    :class:`~mfm_wishart.wishart.ClusterSuffStat` objects.
    """

    def __init__(self, data, hyper, labels, nu, weight_rule, kernel):
        n, p = data.shape[0], data.shape[1]
        self.data = data
        self.hyper = hyper
        self.psi0 = hyper.psi0.entries
        self.n, self.p = n, p
        self.weight_rule = weight_rule
        self.kernel = kernel
        self.labels = np.asarray(labels, dtype=np.int64).copy()
        self.counts = np.bincount(self.labels, minlength=n).astype(np.int64)
        self.scatters = np.zeros((n, p, p))
        np.add.at(self.scatters, self.labels, data)
        self.logdet_post = _batch_logdet(self.scatters + hyper.psi0.entries)
        self.logdet_w = _batch_logdet(data)
        self.logdet_w_psi0 = _batch_logdet(data + hyper.psi0.entries)
        self.sum_logdet_w = float(self.logdet_w.sum())
        self.nu = float(nu)
        kernel.set_nu(self.nu)

    @property
    def k_plus(self):
        return int(np.count_nonzero(self.counts))

    @property
    def clusters(self):
        out = {}
        for c in np.flatnonzero(self.counts):
            st = ClusterSuffStat(int(self.counts[c]), self.scatters[c], self.hyper.psi0.entries)
            out[int(c)] = st
        return out

    def canonical_labels(self):
        return canonicalize(self.labels)

    def audit(self):
        """Largest relative discrepancy between cached and recomputed statistics."""
        counts = np.bincount(self.labels, minlength=self.n)
        if not np.array_equal(counts, self.counts):
            return np.inf
        scat = np.zeros_like(self.scatters)
        np.add.at(scat, self.labels, self.data)
        scale = max(np.max(np.abs(scat)), 1.0)
        err = np.max(np.abs(scat - self.scatters)) / scale
        ld = _batch_logdet(scat + self.psi0)
        err_ld = np.max(np.abs(ld - self.logdet_post) / np.maximum(np.abs(ld), 1.0))
        return float(max(err, err_ld))


def canonicalize(labels):
    """Renumber labels by order of first appearance: ``(5, 5, 2, 7) -> (0, 0, 1, 2)``."""
    labels = np.asarray(labels)
    _, first, inv = np.unique(labels, return_index=True, return_inverse=True)
    rank = np.empty(first.size, dtype=np.int64)
    rank[np.argsort(first, kind="stable")] = np.arange(first.size)
    return rank[inv.ravel()]


def _as_data(data):
    if isinstance(data, np.ndarray) and data.ndim == 3:
        items = list(data)
    else:
        items = list(data)
    if not items:
        raise HeterogeneousDims("no observations")
    shapes = {np.shape(np.asarray(w)) for w in items}
    if len(shapes) != 1:
        raise HeterogeneousDims(f"observations have differing shapes {sorted(shapes)}")
    out = []
    for idx, w in enumerate(items):
        try:
            out.append(np.array(SpdMatrix(w).entries))
        except ValueError as exc:
            raise NonSpdObservation(idx, str(exc)) from None
    return np.stack(out)


def _scan_order(config, n):
    if config.scan_order is not None:
        order = np.asarray(config.scan_order, dtype=np.int64)
        if sorted(order.tolist()) != list(range(n)):
            raise ConfigError("scan_order must be a permutation of 0..n-1")
        return order
    return np.arange(n)


def init_state(data, config, rng=None, weight_rule=None, kernel=None):
    """Build the initial :class:`ClusterState`.

    ``weight_rule`` and ``kernel`` default to the ones implied by
    ``config``; passing them explicitly lets tests swap either piece.
    """
    data = _as_data(data)
    n, p = data.shape[0], data.shape[1]
    hyper = config.prior
    if hyper.dim != p:
        raise HeterogeneousDims(f"prior is {hyper.dim}x{hyper.dim} but data are {p}x{p}")
    if rng is None:
        rng = np.random.default_rng(config.seed)
    init = config.init
    if isinstance(init, Singletons):
        labels = np.empty(n, dtype=np.int64)
        labels[_scan_order(config, n)] = np.arange(n)
    elif isinstance(init, KClusters):
        if not 1 <= init.k <= n:
            raise ConfigError(f"initial cluster count must lie in 1..{n}, got {init.k}")
        labels = canonicalize(rng.integers(0, init.k, size=n))
    else:
        if len(init.labels) != n:
            raise ConfigError(f"{len(init.labels)} initial labels for {n} observations")
        labels = canonicalize(init.labels)
    nu = config.nu_init
    if nu is None:
        nu = 0.5 * (hyper.nu_lo + hyper.nu_hi)
    if not hyper.nu_lo <= nu <= hyper.nu_hi:
        raise ConfigError(f"nu_init = {nu} outside [{hyper.nu_lo}, {hyper.nu_hi}]")
    if weight_rule is None:
        weight_rule = make_weight_rule(config.model, n)
    if kernel is None:
        kernel = CollapsedWishartKernel(data, hyper)
    return ClusterState(data, hyper, labels, nu, weight_rule, kernel)


def update_label(state, i, rng):
    """Resample the label of observation ``i`` from its collapsed full conditional.

    Consumes exactly one uniform from ``rng``.  Returns the new slot.
    """
    w_i = state.data[i]
    c_old = state.labels[i]
    # log|Psi0 + S_c + W_i| for the old cluster is its current cached value
    ld_old = state.logdet_post[c_old]
    state.counts[c_old] -= 1
    if state.counts[c_old] == 0:
        state.scatters[c_old] = 0.0
    else:
        state.scatters[c_old] -= w_i
    active = np.flatnonzero(state.counts)
    counts = state.counts[active]
    mats = state.scatters[active] + state.psi0
    pos = int(np.searchsorted(active, c_old))
    kept = pos < active.size and active[pos] == c_old
    mats += w_i
    if kept:
        mats[pos] -= w_i
    ld_w = _batch_logdet(mats)
    if kept:
        state.logdet_post[c_old] = ld_w[pos]
        ld_w[pos] = ld_old
    else:
        state.logdet_post[c_old] = state.hyper.logdet_psi0
    logw = state.weight_rule(counts, active.size)
    logw += state.kernel(i, counts, state.logdet_post[active], ld_w)
    w = np.exp(logw - logw.max())
    cdf = np.cumsum(w)
    j = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    if j >= active.size:
        # lowest free slot; one exists because observation i is out
        c = int(np.flatnonzero(state.counts == 0)[0])
        ld_new = state.logdet_w_psi0[i]
    else:
        c = int(active[j])
        ld_new = ld_w[j]
    state.labels[i] = c
    state.counts[c] += 1
    state.scatters[c] += w_i
    state.logdet_post[c] = ld_new
    return c


def update_nu(state, config, rng):
    """One random-walk Metropolis step on ``nu``; returns whether it was accepted.

    Always consumes one normal and one uniform draw.  Proposals outside
    ``[nu_lo, nu_hi]`` have zero target density and are rejected.
    """
    proposal = state.nu + config.proposal_sd * rng.standard_normal()
    u = rng.random()
    active = np.flatnonzero(state.counts)
    counts, logdets = state.counts[active], state.logdet_post[active]
    target_new = nu_log_full_conditional_arrays(
        proposal, counts, logdets, state.sum_logdet_w, state.hyper)
    if not np.isfinite(target_new):
        return False
    target_old = nu_log_full_conditional_arrays(
        state.nu, counts, logdets, state.sum_logdet_w, state.hyper)
    if np.log(u) < target_new - target_old:
        state.nu = float(proposal)
        state.kernel.set_nu(state.nu)
        return True
    return False


def draw_sigma_posteriors(state, rng):
    """One ``IW(Psi0 + S_c, kappa0 + n_c nu)`` draw per live cluster, keyed by slot."""
    psi0 = state.hyper.psi0.entries
    out = {}
    for c in np.flatnonzero(state.counts):
        out[int(c)] = sample_inverse_wishart(
            psi0 + state.scatters[c], state.hyper.kappa0 + state.counts[c] * state.nu, rng)
    return out


@dataclass
class McmcTrace:
    """Retained draws of a chain.

    ``labels`` is ``(draws, n)`` and canonicalized per draw.
    ``seconds`` and ``iteration_seconds`` are wall-clock and are excluded
    from equality and from the persisted trace file.
    """

    labels: np.ndarray
    nu: np.ndarray
    k_plus: np.ndarray
    nu_accepted: int
    nu_proposed: int
    config: dict
    seconds: float = field(default=0.0, compare=False)
    iteration_seconds: np.ndarray = field(default=None, compare=False, repr=False)

    def __len__(self):
        return self.nu.size

    @property
    def acceptance_rate(self):
        return self.nu_accepted / self.nu_proposed if self.nu_proposed else float("nan")

    def __eq__(self, other):
        return (isinstance(other, McmcTrace)
                and np.array_equal(self.labels, other.labels)
                and np.array_equal(self.nu, other.nu)
                and np.array_equal(self.k_plus, other.k_plus)
                and self.nu_accepted == other.nu_accepted
                and self.nu_proposed == other.nu_proposed
                and self.config == other.config)


def run(data, config, weight_rule=None, kernel=None, callback=None):
    """Run the chain and return the retained draws.

    Iteration ``l`` (1-based) sweeps every label, then updates ``nu``;
    draws with ``l > burn_in`` and ``(l - burn_in) % thin == 0`` are kept.

    Parameters
    ----------
    data : sequence of (p, p) SPD arrays or SpdMatrix
    config : SamplerConfig
    weight_rule, kernel : callable, optional
        Override the partition-prior weights or the likelihood.
    callback : callable, optional
        Called as ``callback(l, state)`` after every iteration.
    """
    rng = np.random.default_rng(config.seed)
    state = init_state(data, config, rng, weight_rule, kernel)
    n = state.n
    order = _scan_order(config, n)
    kept = (config.iterations - config.burn_in) // config.thin
    labels = np.empty((kept, n), dtype=np.int32)
    nus = np.empty(kept)
    kps = np.empty(kept, dtype=np.int32)
    accepted = proposed = 0
    it_secs = np.empty(config.iterations)
    start = time.perf_counter()
    r = 0
    for it in range(1, config.iterations + 1):
        t0 = time.perf_counter()
        sweep = rng.permutation(n) if config.scan == "random" else order
        for i in sweep:
            update_label(state, i, rng)
        if not config.fix_nu:
            proposed += 1
            accepted += update_nu(state, config, rng)
        if config.audit_every and it % config.audit_every == 0:
            err = state.audit()
            if not err <= 1e-9:
                raise AssertionError(f"sufficient statistics drifted by {err:.3g} at iteration {it}")
        if it > config.burn_in and (it - config.burn_in) % config.thin == 0:
            labels[r] = state.canonical_labels()
            nus[r] = state.nu
            kps[r] = state.k_plus
            r += 1
        it_secs[it - 1] = time.perf_counter() - t0
        if callback is not None:
            callback(it, state)
    return McmcTrace(labels, nus, kps, accepted, proposed, config.to_dict(),
                     seconds=time.perf_counter() - start, iteration_seconds=it_secs)


def is_mfm(config):
    return isinstance(config.model, MfmPriorSpec)


def is_dpm(config):
    return isinstance(config.model, DpmPriorSpec)
