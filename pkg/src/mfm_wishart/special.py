"""Gamma-family special functions, scalar and multivariate.

The scalar functions are thin domain-checked wrappers over
:mod:`scipy.special`; the multivariate versions are assembled here.
All functions accept scalars or numpy arrays.
"""

import numpy as np
from scipy import special as _sp

from .errors import DomainError

_LOG_PI = np.log(np.pi)


def _positive(x, name):
    x = np.asarray(x, dtype=float)
    if np.any(~(x > 0)):
        raise DomainError(f"{name} requires x > 0, got {x}")
    return x


def _out(v):
    return float(v) if np.ndim(v) == 0 else v


def log_gamma(x):
    return _out(_sp.gammaln(_positive(x, "log_gamma")))


def digamma(x):
    return _out(_sp.digamma(_positive(x, "digamma")))


def trigamma(x):
    return _out(_sp.polygamma(1, _positive(x, "trigamma")))


def _multi_args(p, a, name):
    if int(p) != p or p < 1:
        raise DomainError(f"{name}: dimension must be a positive integer, got {p}")
    p = int(p)
    a = np.asarray(a, dtype=float)
    if np.any(~(a > (p - 1) / 2.0)):
        raise DomainError(f"{name}: argument must exceed (p-1)/2 = {(p - 1) / 2}, got {a}")
    # shape (..., p): a - (i-1)/2 for i = 1..p
    return p, a[..., None] - 0.5 * np.arange(p)


def log_multigamma(p, a):
    """Log of the multivariate gamma function.

    ``log Gamma_p(a) = p(p-1)/4 log(pi) + sum_{i=1}^p log Gamma(a - (i-1)/2)``,
    defined for ``a > (p-1)/2``.
    """
    p, args = _multi_args(p, a, "log_multigamma")
    return _out(0.25 * p * (p - 1) * _LOG_PI + _sp.gammaln(args).sum(axis=-1))


def multidigamma(p, x):
    """Derivative of :func:`log_multigamma` in its argument."""
    p, args = _multi_args(p, x, "multidigamma")
    return _out(_sp.digamma(args).sum(axis=-1))


def multitrigamma(p, x):
    """Second derivative of :func:`log_multigamma` in its argument."""
    p, args = _multi_args(p, x, "multitrigamma")
    return _out(_sp.polygamma(1, args).sum(axis=-1))
