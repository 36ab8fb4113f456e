"""Wishart / inverse-Wishart densities and the collapsed conjugate algebra.

Sampler-side functions take the scale matrix ``Sigma``; the calculus
functions at the bottom use the precision ``Lambda = Sigma^{-1}`` and its
half-vectorization ``eta``.  The two parameterizations are never mixed
inside one function.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DimMismatch, DomainError, InvalidDof
from .spd import SpdMatrix, as_spd, duplication_matrix, vech, vech_inverse
from .special import log_multigamma, multidigamma, multitrigamma

_LOG2 = np.log(2.0)


@dataclass(frozen=True)
class PriorHyper:
    """Inverse-Wishart prior on the cluster scales and uniform prior on nu."""

    psi0: SpdMatrix
    kappa0: float
    nu_lo: float
    nu_hi: float
    logdet_psi0: float = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        psi0 = as_spd(self.psi0)
        object.__setattr__(self, "psi0", psi0)
        p = psi0.dim
        if not self.kappa0 > p - 1:
            raise InvalidDof(f"kappa0 = {self.kappa0} must exceed p - 1 = {p - 1}")
        if not self.nu_lo > p - 1:
            raise InvalidDof(f"nu_lo = {self.nu_lo} must exceed p - 1 = {p - 1}")
        if not self.nu_hi > self.nu_lo:
            raise InvalidDof(f"nu_hi = {self.nu_hi} must exceed nu_lo = {self.nu_lo}")
        object.__setattr__(self, "logdet_psi0", psi0.log_det())

    @property
    def dim(self):
        return self.psi0.dim

    @classmethod
    def default(cls, p):
        """Psi0 = I, kappa0 = p + 2 (prior mean I), nu ~ U[p + 2, 50]."""
        return cls(SpdMatrix.identity(p), p + 2.0, p + 2.0, 50.0)

    def to_dict(self):
        return {"psi0": self.psi0.entries.tolist(), "kappa0": float(self.kappa0),
                "nu_lo": float(self.nu_lo), "nu_hi": float(self.nu_hi)}

    @classmethod
    def from_dict(cls, d):
        return cls(SpdMatrix(d["psi0"]), float(d["kappa0"]), float(d["nu_lo"]),
                   float(d["nu_hi"]))


def _logdet_chol(a):
    """Log-determinant of one SPD matrix or a stack of them by Cholesky."""
    L = np.linalg.cholesky(a)
    return 2.0 * np.log(np.diagonal(L, axis1=-2, axis2=-1)).sum(axis=-1)


@dataclass
class ClusterSuffStat:
    """Member count, scatter ``S_c`` and cached ``log|Psi0 + S_c|``.

    The cache is refreshed by a full Cholesky on every mutation.
    """

    count: int
    scatter: np.ndarray
    psi0: np.ndarray = field(repr=False)
    logdet_post: float = field(init=False)

    def __post_init__(self):
        self.scatter = np.array(self.scatter, dtype=float)
        self.psi0 = np.asarray(self.psi0, dtype=float)
        self._refresh()

    def _refresh(self):
        self.logdet_post = float(_logdet_chol(self.psi0 + self.scatter))

    @classmethod
    def empty(cls, hyper):
        p = hyper.dim
        return cls(0, np.zeros((p, p)), hyper.psi0.entries)

    @classmethod
    def from_matrices(cls, mats, hyper):
        mats = [np.asarray(m, dtype=float) for m in mats]
        p = hyper.dim
        scatter = np.sum(mats, axis=0) if mats else np.zeros((p, p))
        return cls(len(mats), scatter, hyper.psi0.entries)

    def add(self, w):
        self.count += 1
        self.scatter += w
        self._refresh()

    def remove(self, w):
        self.count -= 1
        if self.count == 0:
            self.scatter[:] = 0.0
        else:
            self.scatter -= w
        self._refresh()


def _check_nu(nu, p):
    if not nu > p - 1:
        raise InvalidDof(f"nu = {nu} must exceed p - 1 = {p - 1}")


def _same_dim(*mats):
    dims = {m.dim for m in mats}
    if len(dims) != 1:
        raise DimMismatch(f"matrix dimensions differ: {sorted(dims)}")
    return dims.pop()


# -- densities -----------------------------------------------------------------

def wishart_log_density(w, sigma, nu):
    """``log W_p(w | sigma, nu)`` with ``E(w) = nu * sigma``."""
    w, sigma = as_spd(w), as_spd(sigma)
    p = _same_dim(w, sigma)
    _check_nu(nu, p)
    tr = np.trace(np.linalg.solve(sigma.entries, w.entries))
    return float(-0.5 * nu * p * _LOG2 - 0.5 * nu * sigma.log_det()
                 - log_multigamma(p, 0.5 * nu)
                 + 0.5 * (nu - p - 1) * w.log_det() - 0.5 * tr)


def inverse_wishart_log_density(sigma, psi, kappa):
    """``log IW_p(sigma | psi, kappa)`` with ``E(sigma) = psi / (kappa - p - 1)``."""
    sigma, psi = as_spd(sigma), as_spd(psi)
    p = _same_dim(sigma, psi)
    if not kappa > p - 1:
        raise InvalidDof(f"kappa = {kappa} must exceed p - 1 = {p - 1}")
    tr = np.trace(np.linalg.solve(sigma.entries, psi.entries))
    return float(0.5 * kappa * psi.log_det() - 0.5 * kappa * p * _LOG2
                 - log_multigamma(p, 0.5 * kappa)
                 - 0.5 * (kappa + p + 1) * sigma.log_det() - 0.5 * tr)


# -- collapsed predictive / marginal densities -------------------------------------

def log_prior_predictive(w, nu, hyper):
    """``log m(W | nu)``: the Wishart likelihood integrated against the IW prior."""
    w = as_spd(w)
    p = _same_dim(w, hyper.psi0)
    _check_nu(nu, p)
    logdet_wpsi = float(_logdet_chol(w.entries + hyper.psi0.entries))
    return float(prior_predictive_from_logdets(nu, w.log_det(), logdet_wpsi, hyper))


def prior_predictive_from_logdets(nu, logdet_w, logdet_w_psi0, hyper):
    """Vectorized :func:`log_prior_predictive` given ``log|W|`` and ``log|W + Psi0|``."""
    p, k0 = hyper.dim, hyper.kappa0
    return (log_multigamma(p, 0.5 * (nu + k0)) - log_multigamma(p, 0.5 * nu)
            - log_multigamma(p, 0.5 * k0)
            + 0.5 * (nu - p - 1) * np.asarray(logdet_w)
            + 0.5 * k0 * hyper.logdet_psi0
            - 0.5 * (nu + k0) * np.asarray(logdet_w_psi0))


def posterior_predictive_from_logdets(nu, counts, logdet_post, logdet_post_w, logdet_w, hyper):
    """Collapsed posterior predictive of one observation for many clusters at once.

    Parameters
    ----------
    counts : array of int
        Cluster sizes with the observation removed; all must be >= 1.
    logdet_post : array
        ``log|Psi0 + S_c|`` for each cluster.
    logdet_post_w : array
        ``log|Psi0 + S_c + W|`` for each cluster.
    logdet_w : float
        ``log|W|``.
    """
    p, k0 = hyper.dim, hyper.kappa0
    counts = np.asarray(counts, dtype=float)
    a_old = 0.5 * (k0 + counts * nu)
    a_new = a_old + 0.5 * nu
    return (log_multigamma(p, a_new) - log_multigamma(p, a_old)
            - log_multigamma(p, 0.5 * nu)
            + 0.5 * (nu - p - 1) * logdet_w
            + a_old * np.asarray(logdet_post) - a_new * np.asarray(logdet_post_w))


def log_posterior_predictive(w, stat, nu, hyper):
    """``log p(W | cluster c, nu, members of c)`` for a cluster summarized by ``stat``.

    An empty cluster routes to :func:`log_prior_predictive`.
    """
    if stat.count == 0:
        return log_prior_predictive(w, nu, hyper)
    w = as_spd(w)
    p = _same_dim(w, hyper.psi0)
    _check_nu(nu, p)
    ld_post_w = float(_logdet_chol(hyper.psi0.entries + stat.scatter + w.entries))
    return float(posterior_predictive_from_logdets(
        nu, stat.count, stat.logdet_post, ld_post_w, w.log_det(), hyper))


def log_collapsed_cluster_marginal(stat, sum_log_det_members, nu, hyper):
    """``log m({W_i : i in c} | nu)`` with the cluster scale integrated out."""
    n = stat.count
    if n == 0:
        return 0.0
    p, k0 = hyper.dim, hyper.kappa0
    _check_nu(nu, p)
    a = 0.5 * (k0 + n * nu)
    return float(log_multigamma(p, a) - log_multigamma(p, 0.5 * k0)
                 - n * log_multigamma(p, 0.5 * nu)
                 + 0.5 * k0 * hyper.logdet_psi0
                 + 0.5 * (nu - p - 1) * sum_log_det_members
                 - a * stat.logdet_post)


def posterior_iw_params(stat, nu, hyper):
    """``(Psi0 + S_c, kappa0 + n_c * nu)``: the conditional IW posterior of ``Sigma_c``."""
    return (SpdMatrix(hyper.psi0.entries + stat.scatter),
            float(hyper.kappa0 + stat.count * nu))


def nu_log_full_conditional_arrays(nu, counts, logdet_post, sum_log_det_all, hyper):
    if not hyper.nu_lo <= nu <= hyper.nu_hi:
        return -np.inf
    p, k0 = hyper.dim, hyper.kappa0
    counts = np.asarray(counts, dtype=float)
    n = counts.sum()
    return float(np.sum(log_multigamma(p, 0.5 * (k0 + counts * nu)))
                 - n * log_multigamma(p, 0.5 * nu)
                 + 0.5 * nu * (sum_log_det_all - np.dot(counts, logdet_post)))


def nu_log_full_conditional(nu, clusters, sum_log_det_all, hyper):
    """Unnormalized log density of ``nu`` given the labels.

    ``-inf`` outside ``[nu_lo, nu_hi]``.  Terms constant in ``nu`` are dropped.
    """
    counts = [c.count for c in clusters]
    logdets = [c.logdet_post for c in clusters]
    return nu_log_full_conditional_arrays(nu, counts, logdets, sum_log_det_all, hyper)


# -- precision-parameter calculus -------------------------------------------------

@dataclass(frozen=True)
class ThetaPoint:
    """``theta = (vech(Lambda), nu)`` with ``Lambda`` the precision matrix."""

    eta: np.ndarray
    nu: float

    @classmethod
    def from_precision(cls, precision, nu):
        return cls(vech(np.asarray(precision, dtype=float)), float(nu))

    @property
    def precision(self):
        return vech_inverse(self.eta)

    @property
    def dim(self):
        return self.precision.shape[0]

    def as_vector(self):
        return np.append(self.eta, self.nu)

    @classmethod
    def from_vector(cls, v):
        v = np.asarray(v, dtype=float)
        return cls(v[:-1].copy(), float(v[-1]))


def _interior(theta):
    lam = theta.precision
    p = lam.shape[0]
    if not theta.nu > p + 1:
        raise DomainError(f"nu = {theta.nu} must exceed p + 1 = {p + 1}")
    try:
        lam_spd = SpdMatrix(lam)
    except ValueError as exc:
        raise DomainError(f"precision matrix is not SPD: {exc}") from None
    return lam_spd, p


def log_density_precision(theta, w):
    """Wishart log-density in the ``(eta, nu)`` parameterization."""
    lam, p = _interior(theta)
    w = as_spd(w)
    nu = theta.nu
    return float(0.5 * nu * lam.log_det() - 0.5 * nu * p * _LOG2
                 - log_multigamma(p, 0.5 * nu) + 0.5 * (nu - p - 1) * w.log_det()
                 - 0.5 * np.sum(lam.entries * w.entries))


def _pieces(theta, w):
    lam, p = _interior(theta)
    w = np.asarray(as_spd(w).entries)
    nu = theta.nu
    lam_inv = np.linalg.inv(lam.entries)
    lam_inv = 0.5 * (lam_inv + lam_inv.T)
    D = duplication_matrix(p)
    g = 0.5 * (nu * lam_inv - w).reshape(-1, order="F")
    l_nu = (0.5 * lam.log_det() - 0.5 * p * _LOG2 - 0.5 * multidigamma(p, 0.5 * nu)
            + 0.5 * np.linalg.slogdet(w)[1])
    return p, nu, lam_inv, D, g, float(l_nu)


def grad_log_density(theta, w):
    """Gradient ``(d l / d eta, d l / d nu)`` of the Wishart log-density."""
    _, _, _, D, g, l_nu = _pieces(theta, w)
    return np.append(D.T @ g, l_nu)


def hessian_log_density_blocks(theta, w):
    """Blocks ``(H_eta_eta, H_eta_nu, H_nu_nu)`` of the log-density Hessian."""
    p, nu, lam_inv, D, _, _ = _pieces(theta, w)
    h_ee = -0.5 * nu * D.T @ np.kron(lam_inv, lam_inv) @ D
    h_en = 0.5 * D.T @ lam_inv.reshape(-1, order="F")
    h_nn = -0.25 * multitrigamma(p, 0.5 * nu)
    return h_ee, h_en, float(h_nn)


def hessian_density_blocks(theta, w):
    """Blocks of the density Hessian, from ``f * (H_l + grad_l grad_l^T)``."""
    p, nu, lam_inv, D, g, l_nu = _pieces(theta, w)
    f = np.exp(log_density_precision(theta, w))
    kron = np.kron(lam_inv, lam_inv)
    h_ee = f * D.T @ (np.outer(g, g) - 0.5 * nu * kron) @ D
    h_en = f * D.T @ (l_nu * g + 0.5 * lam_inv.reshape(-1, order="F"))
    h_nn = f * (l_nu ** 2 - 0.25 * multitrigamma(p, 0.5 * nu))
    return h_ee, h_en, float(h_nn)


def assemble_hessian(blocks):
    h_ee, h_en, h_nn = blocks
    d = h_ee.shape[0]
    H = np.empty((d + 1, d + 1))
    H[:d, :d] = h_ee
    H[:d, d] = h_en
    H[d, :d] = h_en
    H[d, d] = h_nn
    return H
