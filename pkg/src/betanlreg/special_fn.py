"""Polygamma kernels psi, psi', psi'' on the positive half line.

These three functions are the only transcendental ingredients the
likelihood, information matrix and bias formulas consume.  They are backed
by scipy.special, with strict domain checking: arguments that are
nonpositive, non-finite, or small enough to signal a numerically
degenerate fit (below ``TINY``) raise :class:`~betanlreg.errors.DomainError`
instead of silently returning garbage.
"""

import numpy as np
from scipy import special as _sp

from .errors import DomainError

# Arguments like (1 - mu) * phi can underflow toward 0 when a fitted mean
# approaches 1; below this threshold we refuse to evaluate rather than mask
# a degenerate fit.
TINY = 1e-300

VALID_ORDERS = (0, 1, 2)


def _checked(x):
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError("polygamma argument must be finite")
    if np.any(arr <= 0.0):
        raise DomainError("polygamma argument must be positive")
    if np.any(arr < TINY):
        raise DomainError(f"polygamma argument below {TINY:g}; fit is numerically degenerate")
    return arr


def digamma(x):
    """psi(x) for x > 0. Accepts scalars or arrays."""
    out = _sp.digamma(_checked(x))
    return float(out) if np.isscalar(x) or np.ndim(x) == 0 else out


def trigamma(x):
    """psi'(x) for x > 0. Strictly positive."""
    out = _sp.polygamma(1, _checked(x))
    return float(out) if np.isscalar(x) or np.ndim(x) == 0 else out


def tetragamma(x):
    """psi''(x) for x > 0. Strictly negative."""
    out = _sp.polygamma(2, _checked(x))
    return float(out) if np.isscalar(x) or np.ndim(x) == 0 else out


def polygamma(order, x):
    """psi^(order)(x) for order in {0, 1, 2} and x > 0."""
    if order not in VALID_ORDERS:
        raise DomainError(f"polygamma order must be one of {VALID_ORDERS}, got {order!r}")
    return (digamma, trigamma, tetragamma)[order](x)
