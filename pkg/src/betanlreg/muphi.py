"""Second-order bias correction of the fitted means and precisions.

Correcting the regression parameters does not automatically correct the
fitted values: the inverse links and the predictors are nonlinear, so
mu and phi carry their own O(1/n) biases.  The Taylor-based formulas
here combine a parameter-level bias estimate (analytic, penalized-score,
or bootstrap) with curvature terms, and two direct schemes instead use
bootstrap replicate means of the fitted values themselves.

Corrected values are reported exactly as ``estimate - bias`` — they may
leave (0, 1) or (0, inf) in small samples and are flagged, never
clamped.
"""

from dataclasses import dataclass

import numpy as np

from .bias import cox_snell_bias, ingredients
from .errors import MissingPrerequisiteError

SCHEMES = ("analytic", "preventive", "boot-parametric", "boot-nonparametric",
           "boot-parametric-direct", "boot-nonparametric-direct")


@dataclass
class MuPhiCorrection:
    """Fitted values, their bias estimates and the corrected versions."""

    scheme: str
    mu_hat: np.ndarray
    phi_hat: np.ndarray
    mu_bias: np.ndarray
    phi_bias: np.ndarray

    @property
    def mu_corrected(self):
        return self.mu_hat - self.mu_bias

    @property
    def phi_corrected(self):
        return self.phi_hat - self.phi_bias

    @property
    def mu_out_of_range(self):
        m = self.mu_corrected
        return (m <= 0.0) | (m >= 1.0)

    @property
    def phi_out_of_range(self):
        return self.phi_corrected <= 0.0


def eta_bias(ctx, zeta_bias, ing=None):
    """O(1/n) biases of the two predictors given a parameter bias vector."""
    if ing is None:
        ing = ingredients(ctx)
    k = ctx.spec.k
    zeta_bias = np.asarray(zeta_bias, dtype=float)
    b_eta1 = ctx.Xt @ zeta_bias[:k] + 0.5 * ing.F
    b_eta2 = ctx.Zt @ zeta_bias[k:] + 0.5 * ing.G
    return b_eta1, b_eta2


def mu_phi_bias(ctx, zeta_bias, ing=None):
    """O(1/n) biases of mu and phi given a parameter bias vector.

    Adds the inverse-link curvature terms driven by the predictor
    variances to the first-order propagation of the parameter bias.
    """
    if ing is None:
        ing = ingredients(ctx)
    b_eta1, b_eta2 = eta_bias(ctx, zeta_bias, ing)
    b_mu = ctx.T1 * b_eta1 + 0.5 * ctx.S1 * ing.p_bb
    b_phi = ctx.T2 * b_eta2 + 0.5 * ctx.S2 * ing.p_tt
    return b_mu, b_phi


def corrected_mu_phi(fit, scheme, firth_fit=None, boot=None):
    """Bias-corrected fitted means and precisions under one scheme.

    Parameters
    ----------
    fit : FitResult
        The maximum likelihood fit.
    scheme : str
        One of ``analytic`` (plug-in bias formula), ``preventive``
        (parameter bias taken as MLE minus penalized-score estimate,
        needs ``firth_fit``), ``boot-parametric`` / ``boot-nonparametric``
        (bootstrap parameter bias through the Taylor formula, need
        ``boot``), or ``boot-parametric-direct`` /
        ``boot-nonparametric-direct`` (replicate means of the fitted
        values themselves, need ``boot``).
    """
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
    ctx = fit.context(order=2)
    mu_hat, phi_hat = ctx.mu, ctx.phi

    if scheme.endswith("-direct"):
        want = scheme[len("boot-"):-len("-direct")]
        _require_boot(scheme, boot, want)
        return MuPhiCorrection(scheme=scheme, mu_hat=mu_hat, phi_hat=phi_hat,
                               mu_bias=boot.mu_bias, phi_bias=boot.phi_bias)

    ing = ingredients(ctx)
    if scheme == "analytic":
        zeta_bias = cox_snell_bias(ctx, ing)
    elif scheme == "preventive":
        if firth_fit is None:
            raise MissingPrerequisiteError(scheme, "firth_fit")
        zeta_bias = fit.zeta - firth_fit.zeta
    else:
        want = scheme[len("boot-"):]
        _require_boot(scheme, boot, want)
        zeta_bias = boot.zeta_bias
    b_mu, b_phi = mu_phi_bias(ctx, zeta_bias, ing)
    return MuPhiCorrection(scheme=scheme, mu_hat=mu_hat, phi_hat=phi_hat,
                           mu_bias=b_mu, phi_bias=b_phi)


def _require_boot(scheme, boot, want):
    if boot is None:
        raise MissingPrerequisiteError(scheme, f"a {want} bootstrap result")
    if boot.kind != want:
        raise MissingPrerequisiteError(
            scheme, f"a {want} bootstrap result (got {boot.kind})")
