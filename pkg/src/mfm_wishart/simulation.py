"""Synthetic data: Wishart mixtures, the 12x12 block design, and VAR(1) scatter matrices."""

import json
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .errors import DomainError, IndexOutOfRange, MissingScaleConfig, TooShortSeries
from .spd import SpdMatrix, as_spd, sample_wishart_array, standardize_to_correlation


# -- cluster sizes -------------------------------------------------------------------

def balanced_sizes(n, k):
    """Split ``n`` as evenly as possible; the first ``n % k`` clusters get one extra."""
    if k < 1 or n < k:
        raise DomainError(f"cannot split n = {n} into k = {k} non-empty clusters")
    base, extra = divmod(n, k)
    return tuple(base + (j < extra) for j in range(k))


def proportion_sizes(n, proportions):
    """Largest-remainder rounding of ``n * proportions``; ties go to the lower index."""
    props = np.asarray(proportions, dtype=float)
    if np.any(props < 0) or not np.isclose(props.sum(), 1.0):
        raise DomainError(f"proportions must be nonnegative and sum to 1, got {props.tolist()}")
    raw = n * props
    sizes = np.floor(raw + 1e-9).astype(int)
    short = n - sizes.sum()
    order = np.lexsort((np.arange(props.size), -(raw - sizes)))
    sizes[order[:short]] += 1
    return tuple(int(s) for s in sizes)


# -- Wishart mixtures -------------------------------------------------------------------

@dataclass(frozen=True)
class MixtureSpec:
    """Planted Wishart mixture.  ``proportions=None`` means balanced sizes."""

    scales: tuple
    nu: float
    n: int
    proportions: tuple = None

    def __post_init__(self):
        scales = tuple(as_spd(s) for s in self.scales)
        if not scales:
            raise DomainError("at least one component is required")
        if len({s.dim for s in scales}) != 1:
            raise DomainError("component scales have differing dimensions")
        object.__setattr__(self, "scales", scales)
        if self.proportions is not None and len(self.proportions) != len(scales):
            raise DomainError(f"{len(self.proportions)} proportions for {len(scales)} components")

    @property
    def k0(self):
        return len(self.scales)

    def sizes(self):
        if self.proportions is None:
            return balanced_sizes(self.n, self.k0)
        return proportion_sizes(self.n, self.proportions)


def generate_wishart_mixture(spec, rng):
    """Draw ``W_i ~ W_p(Sigma_{z_i}, nu)`` with deterministic cluster sizes.

    Returns ``(data, labels)`` with data of shape ``(n, p, p)``; labels
    run ``0, 0, ..., 1, 1, ...`` in component order.
    """
    sizes = spec.sizes()
    blocks = [sample_wishart_array(s, spec.nu, rng, m)
              for s, m in zip(spec.scales, sizes) if m > 0]
    labels = np.repeat(np.arange(spec.k0), sizes)
    return np.concatenate(blocks), labels


def load_scales(setting, k0=3):
    """Bundled reconstructed scale matrices.

    ``setting`` is ``"small"`` (3x3) or ``"medium"`` (6x6) with ``k0`` in
    {3, 5}, or ``"large"`` for the two fixed 12x12 block matrices.
    """
    with resources.files(__package__).joinpath("data/scales.json").open() as fh:
        table = json.load(fh)
    try:
        mats = table[setting]["fixed"] if setting == "large" else table[setting][str(k0)]
    except KeyError:
        raise MissingScaleConfig(f"no bundled scales for setting {setting!r}, k0 = {k0}") from None
    return tuple(SpdMatrix(m) for m in mats)


def default_nu(k0):
    """Shared degrees of freedom of the small and medium designs."""
    return {3: 10.0, 5: 30.0}[k0]


def generate_large_setting(n, rng, fixed_scales=None, nu=15.0):
    """Three balanced 12x12 clusters: two fixed block scales and one random correlation.

    The third scale is redrawn on every call by standardizing a
    ``W_12(I, 24)`` draw.  Returns ``(data, labels, scales)``.
    """
    if n < 3:
        raise DomainError(f"need n >= 3, got {n}")
    if fixed_scales is None:
        fixed_scales = load_scales("large")
    fixed_scales = tuple(as_spd(s) for s in fixed_scales)
    if len(fixed_scales) != 2 or any(s.dim != 12 for s in fixed_scales):
        raise MissingScaleConfig("the large setting needs two fixed 12x12 scale matrices")
    sigma3 = standardize_to_correlation(sample_wishart_array(np.eye(12), 24, rng, 1)[0])
    scales = fixed_scales + (sigma3,)
    data, labels = generate_wishart_mixture(MixtureSpec(scales, nu, n), rng)
    return data, labels, scales


# -- VAR(1) misspecification ------------------------------------------------------------

def _check_phi(phi):
    if not -1.0 < phi < 1.0:
        raise DomainError(f"phi must lie in (-1, 1), got {phi}")


@dataclass(frozen=True)
class Var1Spec:
    """One cluster's stationary VAR(1) with marginal covariance ``scale``."""

    phi: float
    scale: SpdMatrix
    T: int
    nu0: float

    def __post_init__(self):
        _check_phi(self.phi)
        object.__setattr__(self, "scale", as_spd(self.scale))
        if self.T < 2:
            raise DomainError(f"T must be at least 2, got {self.T}")


def effective_nu(T, phi):
    """``T / (1 + 2 sum_{h=1}^{T-1} (1 - h/T) phi^(2h))``."""
    _check_phi(phi)
    if T < 1 or int(T) != T:
        raise DomainError(f"T must be a positive integer, got {T}")
    h = np.arange(1, int(T))
    return float(T / (1.0 + 2.0 * np.sum((1.0 - h / T) * phi ** (2 * h))))


def choose_T_for_target_nu(nu0, phi, max_T=10 ** 6):
    """Series length whose effective sample size is nearest ``nu0``.

    Scans ``T = 1, 2, ...`` up to the first ``T`` with
    ``effective_nu(T, phi) >= nu0`` and keeps whichever of it and its
    predecessor lies closer to ``nu0``; an exact tie goes to the longer
    series.
    """
    _check_phi(phi)
    if not nu0 >= 1:
        raise DomainError(f"nu0 must be at least 1, got {nu0}")
    prev = None
    for T in range(1, max_T + 1):
        v = effective_nu(T, phi)
        if v >= nu0:
            if prev is not None and nu0 - prev < v - nu0:
                return T - 1
            return T
        prev = v
    raise DomainError(f"no T <= {max_T} reaches nu0 = {nu0} at phi = {phi}")


def simulate_var1(spec, m, rng):
    """``m`` independent series of shape ``(T, p)`` from a stationary VAR(1)."""
    L = spec.scale.chol
    p = spec.scale.dim
    z = rng.standard_normal((m, spec.T, p)) @ L.T
    x = np.empty_like(z)
    x[:, 0] = z[:, 0]
    s = np.sqrt(1.0 - spec.phi ** 2)
    for t in range(1, spec.T):
        x[:, t] = spec.phi * x[:, t - 1] + s * z[:, t]
    return x


def generate_var1_dataset(specs, sizes, rng):
    """Rescaled scatter matrices ``W = (nu0 / T) sum_t x_t x_t^T`` per cluster.

    Returns ``(data, labels)``; ``E(W) = nu0 * Sigma_k`` for every ``phi``.
    """
    if len(specs) != len(sizes):
        raise DomainError(f"{len(specs)} specs for {len(sizes)} cluster sizes")
    blocks, labels = [], []
    for k, (spec, m) in enumerate(zip(specs, sizes)):
        if spec.T < spec.scale.dim:
            raise TooShortSeries(f"T = {spec.T} < p = {spec.scale.dim} gives a singular scatter")
        x = simulate_var1(spec, m, rng)
        w = (spec.nu0 / spec.T) * np.einsum("mti,mtj->mij", x, x)
        blocks.append(0.5 * (w + w.transpose(0, 2, 1)))
        labels.append(np.full(m, k))
    return np.concatenate(blocks), np.concatenate(labels)


def sample_cov_cov_oracle(sigma, phi, T, idx):
    """``Cov(S_ij, S_rs)`` for ``S = (1/T) sum_t x_t x_t^T`` under the VAR(1).

    Sums ``(T - |h|) {G_ir(h) G_js(h) + G_is(h) G_jr(h)} / T^2`` over
    lags ``|h| < T`` with ``G(h) = phi^|h| Sigma``.
    """
    sigma = as_spd(sigma).entries
    _check_phi(phi)
    p = sigma.shape[0]
    i, j, r, s = idx
    if any(not 0 <= a < p for a in idx):
        raise IndexOutOfRange(f"indices {tuple(idx)} out of range for p = {p}")
    h = np.arange(-(T - 1), T)
    g = phi ** np.abs(h)
    pair = sigma[i, r] * sigma[j, s] + sigma[i, s] * sigma[j, r]
    return float(np.sum((T - np.abs(h)) * g * g) * pair / T ** 2)
