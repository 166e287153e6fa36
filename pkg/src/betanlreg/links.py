"""Link functions for the mean and for the precision parameter.

Each link carries its inverse and the first and second derivatives of the
inverse with respect to the linear predictor.  Two published-table entries
are corrected here (see the notes on ``cloglog`` and ``sqrt``): in both
cases the implemented expression is the unique one consistent with finite
differences of the inverse link.
"""

import numpy as np
from scipy import special as _sp

from .errors import LinkDomainError

# Beyond this the exponentials inside logit/cloglog overflow; the fit has
# wandered irrecoverably out of the link's useful range.
ETA_SATURATION = 700.0

_SQRT_2PI = np.sqrt(2.0 * np.pi)


def _as_float_array(x):
    return np.asarray(x, dtype=float)


def _maybe_scalar(out, x):
    return float(out) if np.ndim(x) == 0 else out


class MeanLink:
    """Mean link g1: (0,1) -> R. ``kind`` is one of logit, probit, cloglog."""

    KINDS = ("logit", "probit", "cloglog")

    def __init__(self, kind):
        if kind not in self.KINDS:
            raise LinkDomainError(f"unknown mean link {kind!r}; expected one of {self.KINDS}")
        self.kind = kind

    def __repr__(self):
        return f"MeanLink({self.kind!r})"

    def __eq__(self, other):
        return isinstance(other, MeanLink) and other.kind == self.kind

    def link(self, mu):
        """g1(mu)."""
        m = self._check_mu(mu)
        if self.kind == "logit":
            out = np.log(m / (1.0 - m))
        elif self.kind == "probit":
            out = _sp.ndtri(m)
        else:
            out = np.log(-np.log(1.0 - m))
        return _maybe_scalar(out, mu)

    def inverse(self, eta):
        """mu = g1^{-1}(eta), guaranteed strictly inside (0, 1)."""
        e = _as_float_array(eta)
        if not np.all(np.isfinite(e)):
            raise LinkDomainError("mean predictor is not finite")
        if np.any(np.abs(e) > ETA_SATURATION):
            raise LinkDomainError(f"mean predictor beyond +/-{ETA_SATURATION:g}; link saturated")
        if self.kind == "logit":
            out = _sp.expit(e)
        elif self.kind == "probit":
            out = _sp.ndtr(e)
        else:
            out = -np.expm1(-np.exp(e))
        if np.any(out <= 0.0) or np.any(out >= 1.0):
            raise LinkDomainError("inverse mean link saturated to the boundary of (0,1)")
        return _maybe_scalar(out, eta)

    def dmu_deta(self, mu):
        """First derivative of the inverse link, as a function of mu."""
        m = self._check_mu(mu)
        if self.kind == "logit":
            out = m * (1.0 - m)
        elif self.kind == "probit":
            x = _sp.ndtri(m)
            out = np.exp(-0.5 * x * x) / _SQRT_2PI
        else:
            # Table entry -log(1-mu)/(1-mu) is inconsistent with its own
            # second derivative; the calculus gives -(1-mu) log(1-mu).
            out = -(1.0 - m) * np.log(1.0 - m)
        return _maybe_scalar(out, mu)

    def d2mu_deta2(self, mu):
        """Second derivative of the inverse link, as a function of mu."""
        m = self._check_mu(mu)
        if self.kind == "logit":
            out = m * (1.0 - m) * (1.0 - 2.0 * m)
        elif self.kind == "probit":
            x = _sp.ndtri(m)
            out = -x * np.exp(-0.5 * x * x) / _SQRT_2PI
        else:
            lg = np.log(1.0 - m)
            out = -(1.0 - m) * lg * (1.0 + lg)
        return _maybe_scalar(out, mu)

    @staticmethod
    def _check_mu(mu):
        m = _as_float_array(mu)
        if np.any(m <= 0.0) or np.any(m >= 1.0) or not np.all(np.isfinite(m)):
            raise LinkDomainError("mean must lie strictly inside (0, 1)")
        return m


class PrecisionLink:
    """Precision link g2: (0,inf) -> R. ``kind`` is one of identity, log, sqrt."""

    KINDS = ("identity", "log", "sqrt")

    def __init__(self, kind):
        if kind not in self.KINDS:
            raise LinkDomainError(f"unknown precision link {kind!r}; expected one of {self.KINDS}")
        self.kind = kind

    def __repr__(self):
        return f"PrecisionLink({self.kind!r})"

    def __eq__(self, other):
        return isinstance(other, PrecisionLink) and other.kind == self.kind

    def link(self, phi):
        p = self._check_phi(phi)
        if self.kind == "identity":
            out = p
        elif self.kind == "log":
            out = np.log(p)
        else:
            out = np.sqrt(p)
        return _maybe_scalar(out, phi)

    def inverse(self, eta):
        """phi = g2^{-1}(eta) > 0.

        identity and sqrt require a positive predictor; violating that is a
        positivity error, not a silent clamp.
        """
        e = _as_float_array(eta)
        if not np.all(np.isfinite(e)):
            raise LinkDomainError("precision predictor is not finite")
        if self.kind == "identity":
            if np.any(e <= 0.0):
                raise LinkDomainError("identity precision link needs a positive predictor")
            out = e + 0.0
        elif self.kind == "log":
            if np.any(np.abs(e) > ETA_SATURATION):
                raise LinkDomainError(f"precision predictor beyond +/-{ETA_SATURATION:g}")
            out = np.exp(e)
        else:
            if np.any(e <= 0.0):
                raise LinkDomainError("sqrt precision link needs a positive predictor")
            out = e * e
        if np.any(out <= 0.0) or not np.all(np.isfinite(out)):
            raise LinkDomainError("inverse precision link left (0, inf)")
        return _maybe_scalar(out, eta)

    def dphi_deta(self, phi):
        p = self._check_phi(phi)
        if self.kind == "identity":
            out = np.ones_like(p)
        elif self.kind == "log":
            out = p + 0.0
        else:
            # Table entry 2*phi conflicts with phi = eta^2, whose derivative
            # is 2*eta = 2*sqrt(phi); finite differences agree with the latter.
            out = 2.0 * np.sqrt(p)
        return _maybe_scalar(out, phi)

    def d2phi_deta2(self, phi):
        p = self._check_phi(phi)
        if self.kind == "identity":
            out = np.zeros_like(p)
        elif self.kind == "log":
            out = p + 0.0
        else:
            out = np.full_like(p, 2.0)
        return _maybe_scalar(out, phi)

    @staticmethod
    def _check_phi(phi):
        p = _as_float_array(phi)
        if np.any(p <= 0.0) or not np.all(np.isfinite(p)):
            raise LinkDomainError("precision must be strictly positive and finite")
        return p


def mean_link(name):
    """Look a mean link up by its lowercase config name."""
    return MeanLink(name)


def precision_link(name):
    """Look a precision link up by its lowercase config name."""
    return PrecisionLink(name)
