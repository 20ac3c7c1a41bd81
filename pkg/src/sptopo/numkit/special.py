"""Special functions used by the count likelihood."""
import numpy as np
from scipy import special as _sp

from ..errors import DomainError


def log_gamma(x):
    """Natural log of the gamma function for x > 0 (scalar or array)."""
    arr = np.asarray(x, dtype=np.float64)
    if np.any(~(arr > 0)):
        raise DomainError(f"log_gamma requires x > 0, got min {arr.min()!r}")
    out = _sp.gammaln(arr)
    return float(out) if out.ndim == 0 else out


def digamma(x):
    arr = np.asarray(x, dtype=np.float64)
    if np.any(~(arr > 0)):
        raise DomainError(f"digamma requires x > 0, got min {arr.min()!r}")
    out = _sp.digamma(arr)
    return float(out) if out.ndim == 0 else out


def normal_cdf(z):
    return _sp.ndtr(z)
