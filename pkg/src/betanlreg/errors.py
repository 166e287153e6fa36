"""Exception hierarchy shared by the whole package."""


class BetaRegError(Exception):
    """Base class for every error raised by this package."""


class DomainError(BetaRegError, ValueError):
    """An argument fell outside the mathematical domain of a function."""


class LinkDomainError(DomainError):
    """A link function was evaluated outside its admissible range."""


class FormulaSyntaxError(BetaRegError, ValueError):
    """Malformed predictor formula text.

    Attributes
    ----------
    offset : int
        Byte offset into the source text where parsing failed.
    """

    def __init__(self, message, offset):
        super().__init__(f"{message} (at offset {offset})")
        self.offset = offset


class UnknownIdentifierError(BetaRegError, ValueError):
    """A formula referenced a name that is neither a parameter nor a covariate."""

    def __init__(self, name, offset):
        super().__init__(f"unknown identifier {name!r} (at offset {offset})")
        self.name = name
        self.offset = offset


class EvalDomainError(DomainError):
    """A formula subexpression was evaluated outside its domain."""

    def __init__(self, message, fragment):
        super().__init__(f"{message} in subexpression {fragment!r}")
        self.fragment = fragment


class SingularInformationError(BetaRegError, ArithmeticError):
    """The Fisher information (or a weighted normal system) is numerically singular."""

    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition


class NonConvergenceError(BetaRegError, RuntimeError):
    """An iterative fit exhausted its iteration budget."""


class MissingPrerequisiteError(BetaRegError, ValueError):
    """A correction scheme was requested without its required inputs."""

    def __init__(self, scheme, needed):
        super().__init__(f"scheme {scheme!r} requires {needed}")
        self.scheme = scheme


class BootstrapFailureError(BetaRegError, RuntimeError):
    """Too many bootstrap replicates failed to refit."""


class ConfigError(BetaRegError, ValueError):
    """Invalid run configuration or data file."""
