"""Bootstrap bias estimation for the regression parameters and the
fitted means / precisions.

Two resampling schemes:

* fixed-x parametric — responses are redrawn from the fitted beta
  distributions at the original covariate rows;
* random-x nonparametric — whole rows (response plus covariates) are
  resampled with replacement.

Both produce constant-bias-correcting (CBC) estimates: the bias estimate
is the mean of the bootstrap replicates minus the original estimate, and
the corrected estimate is twice the original minus the replicate mean.
Fitted means and precisions are always evaluated at the *original*
covariate rows so that replicate averages are comparable across schemes.
"""

from dataclasses import dataclass

import numpy as np

from .errors import BetaRegError, BootstrapFailureError
from .fit import default_start, fit_mle
from .likelihood import Dataset, build_context

_BOUNDARY_NUDGE = 1e-12


@dataclass
class BootstrapResult:
    """Replicate summaries from one bootstrap run.

    ``zeta_bias`` etc. are CBC bias estimates (replicate mean minus the
    original fit); ``*_corrected`` are the CBC-corrected estimates.
    """

    kind: str
    n_boot: int
    n_ok: int
    n_failed: int
    zeta_hat: np.ndarray
    zeta_mean: np.ndarray
    mu_hat: np.ndarray
    mu_mean: np.ndarray
    phi_hat: np.ndarray
    phi_mean: np.ndarray
    replicates: np.ndarray

    @property
    def zeta_bias(self):
        return self.zeta_mean - self.zeta_hat

    @property
    def zeta_corrected(self):
        return 2.0 * self.zeta_hat - self.zeta_mean

    @property
    def mu_bias(self):
        return self.mu_mean - self.mu_hat

    @property
    def mu_corrected(self):
        return 2.0 * self.mu_hat - self.mu_mean

    @property
    def phi_bias(self):
        return self.phi_mean - self.phi_hat

    @property
    def phi_corrected(self):
        return 2.0 * self.phi_hat - self.phi_mean


def _replicate_rng(seed, b):
    if np.isscalar(seed):
        key = [int(seed), int(b)]
    else:
        key = [int(s) for s in seed] + [int(b)]
    return np.random.default_rng(key)


def _fit_replicate(spec, data, warm):
    """Warm-started refit with one cold-start retry."""
    try:
        return fit_mle(spec, data, start=warm)
    except BetaRegError:
        return fit_mle(spec, data, start=default_start(spec, data))


def _run(kind, fit, n_boot, seed, max_failure_frac, draw):
    spec, data = fit.spec, fit.data
    p = spec.n_params
    ctx = build_context(spec, fit.zeta, data, order=0)
    mu_hat, phi_hat = ctx.mu, ctx.phi
    reps = np.empty((n_boot, p))
    mu_acc = np.zeros(data.n)
    phi_acc = np.zeros(data.n)
    n_ok = 0
    n_failed = 0
    for b in range(n_boot):
        rng = _replicate_rng(seed, b)
        try:
            boot_data = draw(rng)
            boot_fit = _fit_replicate(spec, boot_data, fit.zeta)
        except BetaRegError:
            n_failed += 1
            continue
        reps[n_ok] = boot_fit.zeta
        # fitted values at the original covariate rows
        boot_ctx = build_context(spec, boot_fit.zeta, data, order=0)
        mu_acc += boot_ctx.mu
        phi_acc += boot_ctx.phi
        n_ok += 1
    if n_boot > 0 and n_failed > max_failure_frac * n_boot:
        raise BootstrapFailureError(
            f"{n_failed} of {n_boot} bootstrap refits failed "
            f"(cap {max_failure_frac:.0%})")
    if n_ok == 0:
        raise BootstrapFailureError("all bootstrap refits failed")
    reps = reps[:n_ok]
    return BootstrapResult(kind=kind, n_boot=n_boot, n_ok=n_ok, n_failed=n_failed,
                           zeta_hat=fit.zeta.copy(), zeta_mean=reps.mean(axis=0),
                           mu_hat=mu_hat, mu_mean=mu_acc / n_ok,
                           phi_hat=phi_hat, phi_mean=phi_acc / n_ok,
                           replicates=reps)


def parametric_bootstrap(fit, n_boot, seed, max_failure_frac=0.05):
    """Fixed-x parametric bootstrap around a fitted model."""
    spec, data = fit.spec, fit.data
    ctx = build_context(spec, fit.zeta, data, order=0)
    p_shape = ctx.mu * ctx.phi
    q_shape = (1.0 - ctx.mu) * ctx.phi

    def draw(rng):
        y = rng.beta(p_shape, q_shape)
        # extreme shape pairs can round to the boundary in floating point
        y = np.clip(y, _BOUNDARY_NUDGE, 1.0 - _BOUNDARY_NUDGE)
        return Dataset(y=y, columns=data.columns)

    return _run("parametric", fit, n_boot, seed, max_failure_frac, draw)


def nonparametric_bootstrap(fit, n_boot, seed, max_failure_frac=0.05):
    """Random-x nonparametric bootstrap: joint resampling of rows."""
    spec, data = fit.spec, fit.data
    n = data.n

    def draw(rng):
        idx = rng.integers(0, n, size=n)
        cols = {name: col[idx] for name, col in data.columns.items()}
        return Dataset(y=data.y[idx], columns=cols)

    return _run("nonparametric", fit, n_boot, seed, max_failure_frac, draw)
