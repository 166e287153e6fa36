"""Beta regression with nonlinear mean and precision submodels, with
second-order bias-corrected estimation."""

from .bias import (brute_force_bias, cox_snell_bias, ingredients,
                   modified_score, omega_vectors)
from .bootstrap import (BootstrapResult, nonparametric_bootstrap,
                        parametric_bootstrap)
from .errors import (BetaRegError, BootstrapFailureError, ConfigError,
                     DomainError, EvalDomainError, FormulaSyntaxError,
                     LinkDomainError, MissingPrerequisiteError,
                     NonConvergenceError, SingularInformationError,
                     UnknownIdentifierError)
from .fit import (FitResult, corrected_fit, default_start, fit_firth, fit_mle,
                  lrt, score_test, wald_ci)
from .formula import Formula, eval_with_derivs
from .formula import parse as parse_formula
from .likelihood import (Dataset, ModelSpec, build_context, information,
                         loglik, model_spec, score)
from .links import mean_link, precision_link
from .muphi import MuPhiCorrection, corrected_mu_phi, mu_phi_bias

__version__ = "1.0.0"

__all__ = [
    "BetaRegError", "BootstrapFailureError", "BootstrapResult", "ConfigError",
    "Dataset", "DomainError", "EvalDomainError", "FitResult", "Formula",
    "FormulaSyntaxError", "LinkDomainError", "MissingPrerequisiteError",
    "ModelSpec", "MuPhiCorrection", "NonConvergenceError",
    "SingularInformationError", "UnknownIdentifierError", "brute_force_bias",
    "build_context", "corrected_fit", "corrected_mu_phi", "cox_snell_bias",
    "default_start", "eval_with_derivs", "fit_firth", "fit_mle",
    "information", "ingredients", "loglik", "lrt", "mean_link", "model_spec",
    "modified_score", "mu_phi_bias", "nonparametric_bootstrap",
    "omega_vectors", "parametric_bootstrap", "parse_formula",
    "precision_link", "score", "score_test", "wald_ci",
]
