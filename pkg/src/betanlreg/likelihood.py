"""Beta regression model with nonlinear mean and precision predictors.

The response is beta-distributed with mean ``mu`` and precision ``phi``
(shape parameters ``mu*phi`` and ``(1-mu)*phi``), and

    g1(mu_i)  = f1(x_i; beta)      k mean parameters
    g2(phi_i) = f2(z_i; theta)     h precision parameters

where f1, f2 are :class:`~betanlreg.formula.Formula` objects and g1, g2
come from :mod:`betanlreg.links`.  This module evaluates the
log-likelihood, the score vector and the expected (Fisher) information,
all in terms of a cached :class:`EvalContext`.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from . import formula as fm
from .errors import DomainError, SingularInformationError
from .links import MeanLink, PrecisionLink, mean_link, precision_link
from .special_fn import digamma, trigamma


@dataclass(frozen=True)
class ModelSpec:
    """Mean and precision submodels.

    Parameters of the two formulas are disjoint; the joint parameter
    vector is ``zeta = (beta, theta)`` in formula order.
    """

    mean_formula: fm.Formula
    precision_formula: fm.Formula
    mean_link: MeanLink
    precision_link: PrecisionLink

    def __post_init__(self):
        shared = set(self.mean_formula.params) & set(self.precision_formula.params)
        if shared:
            raise ValueError(f"parameters {sorted(shared)} appear in both submodels")

    @property
    def k(self):
        return self.mean_formula.n_params

    @property
    def h(self):
        return self.precision_formula.n_params

    @property
    def n_params(self):
        return self.k + self.h

    @property
    def param_names(self):
        return list(self.mean_formula.params) + list(self.precision_formula.params)

    def split(self, zeta):
        zeta = np.asarray(zeta, dtype=float)
        return zeta[: self.k], zeta[self.k:]


def model_spec(mean_src, mean_params, precision_src, precision_params, covs,
               mean_link_name="logit", precision_link_name="log"):
    """Build a :class:`ModelSpec` from formula text."""
    f1 = fm.parse(mean_src, mean_params, covs)
    f2 = fm.parse(precision_src, precision_params, covs)
    return ModelSpec(mean_formula=f1, precision_formula=f2,
                     mean_link=mean_link(mean_link_name),
                     precision_link=precision_link(precision_link_name))


@dataclass(frozen=True)
class Dataset:
    """Responses in (0,1) plus named covariate columns."""

    y: np.ndarray
    columns: dict

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        if y.ndim != 1 or len(y) == 0:
            raise ValueError("y must be a nonempty 1-d array")
        if np.any(~np.isfinite(y)) or np.any(y <= 0.0) or np.any(y >= 1.0):
            raise DomainError("responses must lie strictly inside (0, 1)")
        object.__setattr__(self, "y", y)
        cols = {}
        for name, col in self.columns.items():
            col = np.asarray(col, dtype=float)
            if col.shape != y.shape:
                raise ValueError(f"column {name!r} has shape {col.shape}, expected {y.shape}")
            if np.any(~np.isfinite(col)):
                raise DomainError(f"column {name!r} contains non-finite values")
            cols[name] = col
        object.__setattr__(self, "columns", cols)

    @property
    def n(self):
        return len(self.y)


@dataclass
class EvalContext:
    """Everything the score / information / bias formulas consume at one zeta.

    Diagonal matrices are stored as (n,) vectors; the local design
    matrices ``Xt = d eta1 / d beta`` and ``Zt = d eta2 / d theta`` are
    (n, k) and (n, h).  ``Xhess`` / ``Zhess`` (second parameter
    derivatives of the predictors) are only populated at order 2.
    """

    spec: ModelSpec
    data: Dataset
    zeta: np.ndarray
    order: int
    eta1: np.ndarray
    eta2: np.ndarray
    mu: np.ndarray
    phi: np.ndarray
    Xt: np.ndarray = None
    Zt: np.ndarray = None
    Xhess: np.ndarray = None
    Zhess: np.ndarray = None
    T1: np.ndarray = None
    T2: np.ndarray = None
    S1: np.ndarray = None
    S2: np.ndarray = None
    _cache: dict = field(default_factory=dict)

    # lazily computed pieces shared by the score, information and bias code
    def _get(self, key, builder):
        if key not in self._cache:
            self._cache[key] = builder()
        return self._cache[key]

    @property
    def ystar(self):
        y = self.data.y
        return self._get("ystar", lambda: np.log(y / (1.0 - y)))

    @property
    def mustar(self):
        return self._get("mustar",
                         lambda: digamma(self.mu * self.phi) - digamma((1.0 - self.mu) * self.phi))

    @property
    def psi1_p(self):
        """trigamma(mu*phi)"""
        return self._get("psi1_p", lambda: trigamma(self.mu * self.phi))

    @property
    def psi1_q(self):
        """trigamma((1-mu)*phi)"""
        return self._get("psi1_q", lambda: trigamma((1.0 - self.mu) * self.phi))

    @property
    def a(self):
        return self._get("a", lambda: self.psi1_q + self.psi1_p)

    @property
    def b(self):
        def build():
            omu = 1.0 - self.mu
            return (self.psi1_q * omu ** 2 + self.psi1_p * self.mu ** 2
                    - trigamma(self.phi))
        return self._get("b", build)

    @property
    def v(self):
        def build():
            y = self.data.y
            return (self.mu * (self.ystar - self.mustar)
                    + digamma(self.phi) - digamma((1.0 - self.mu) * self.phi)
                    + np.log(1.0 - y))
        return self._get("v", build)

    @property
    def w_bb(self):
        return self._get("w_bb", lambda: self.phi ** 2 * self.a * self.T1 ** 2)

    @property
    def w_bt(self):
        return self._get(
            "w_bt",
            lambda: self.phi * (self.mu * self.a - self.psi1_q) * self.T1 * self.T2)

    @property
    def w_tt(self):
        return self._get("w_tt", lambda: self.b * self.T2 ** 2)


def build_context(spec, zeta, data, order=1):
    """Evaluate both predictors and link transforms at ``zeta``.

    order 0: eta/mu/phi only; order 1 adds the local design matrices and
    T1/T2; order 2 adds predictor Hessians and S1/S2 (needed by the bias
    terms).
    """
    zeta = np.asarray(zeta, dtype=float)
    if zeta.shape != (spec.n_params,):
        raise ValueError(f"zeta must have shape ({spec.n_params},), got {zeta.shape}")
    beta, theta = spec.split(zeta)
    cols = data.columns
    eta1, gx, hx = fm.evaluate(spec.mean_formula, beta, cols, order=order)
    eta2, gz, hz = fm.evaluate(spec.precision_formula, theta, cols, order=order)
    mu = spec.mean_link.inverse(eta1)
    phi = spec.precision_link.inverse(eta2)
    ctx = EvalContext(spec=spec, data=data, zeta=zeta.copy(), order=order,
                      eta1=eta1, eta2=eta2, mu=mu, phi=phi,
                      Xt=gx, Zt=gz, Xhess=hx, Zhess=hz)
    if order >= 1:
        ctx.T1 = spec.mean_link.dmu_deta(mu)
        ctx.T2 = spec.precision_link.dphi_deta(phi)
    if order >= 2:
        ctx.S1 = spec.mean_link.d2mu_deta2(mu)
        ctx.S2 = spec.precision_link.d2phi_deta2(phi)
    return ctx


def loglik(ctx):
    """Total log-likelihood at the context's parameter point."""
    y = ctx.data.y
    mu, phi = ctx.mu, ctx.phi
    p, q = mu * phi, (1.0 - mu) * phi
    terms = (gammaln(phi) - gammaln(p) - gammaln(q)
             + (p - 1.0) * np.log(y) + (q - 1.0) * np.log(1.0 - y))
    return float(np.sum(terms))


def loglik_terms(ctx):
    """Per-observation log-likelihood contributions."""
    y = ctx.data.y
    mu, phi = ctx.mu, ctx.phi
    p, q = mu * phi, (1.0 - mu) * phi
    return (gammaln(phi) - gammaln(p) - gammaln(q)
            + (p - 1.0) * np.log(y) + (q - 1.0) * np.log(1.0 - y))


def score(ctx):
    """Score vector U(zeta) = (U_beta, U_theta)."""
    if ctx.order < 1:
        raise ValueError("score needs a context built with order >= 1")
    r1 = ctx.phi * ctx.T1 * (ctx.ystar - ctx.mustar)
    u_beta = ctx.Xt.T @ r1
    u_theta = ctx.Zt.T @ (ctx.T2 * ctx.v)
    return np.concatenate([u_beta, u_theta])


def information(ctx):
    """Expected information K(zeta), a (k+h, k+h) symmetric matrix."""
    if ctx.order < 1:
        raise ValueError("information needs a context built with order >= 1")
    X, Z = ctx.Xt, ctx.Zt
    k_bb = X.T @ (ctx.w_bb[:, None] * X)
    k_bt = X.T @ (ctx.w_bt[:, None] * Z)
    k_tt = Z.T @ (ctx.w_tt[:, None] * Z)
    top = np.hstack([k_bb, k_bt])
    bottom = np.hstack([k_bt.T, k_tt])
    return np.vstack([top, bottom])


def information_inverse(ctx):
    """Inverse of the expected information, raising on ill-conditioning."""
    K = information(ctx)
    cond = np.linalg.cond(K)
    if not np.isfinite(cond) or cond > 1e12:
        raise SingularInformationError(
            "expected information is numerically singular", cond)
    return np.linalg.inv(K)


def observed_hessian(ctx):
    """Hessian of the log-likelihood at the context's parameter point.

    Needs an order-2 context.  Unlike the expected information this uses
    the realized responses, which gives Newton iteration its quadratic
    local convergence on designs where Fisher scoring contracts slowly.
    """
    if ctx.order < 2:
        raise ValueError("observed hessian needs a context built with order >= 2")
    mu, phi = ctx.mu, ctx.phi
    omu = 1.0 - mu
    T1, T2, S1, S2 = ctx.T1, ctx.T2, ctx.S1, ctx.S2
    res = ctx.ystar - ctx.mustar
    # d(mustar)/dphi at fixed mu, and dv/dphi
    dmustar_dphi = ctx.psi1_p * mu - ctx.psi1_q * omu
    l11 = -phi ** 2 * ctx.a * T1 ** 2 + phi * res * S1
    l12 = T1 * T2 * (res - phi * dmustar_dphi)
    dv_dphi = (-mu * dmustar_dphi + trigamma(phi) - ctx.psi1_q * omu)
    l22 = dv_dphi * T2 ** 2 + ctx.v * S2
    X, Z = ctx.Xt, ctx.Zt
    h_bb = X.T @ (l11[:, None] * X) + np.einsum("i,irs->rs", phi * res * T1,
                                                ctx.Xhess)
    h_bt = X.T @ (l12[:, None] * Z)
    h_tt = Z.T @ (l22[:, None] * Z) + np.einsum("i,irs->rs", ctx.v * T2,
                                                ctx.Zhess)
    top = np.hstack([h_bb, h_bt])
    bottom = np.hstack([h_bt.T, h_tt])
    return np.vstack([top, bottom])


def observed_loglik(spec, zeta, data):
    """Log-likelihood without caching, for optimizers and tests."""
    return loglik(build_context(spec, zeta, data, order=0))
