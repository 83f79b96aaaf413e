"""Exception and warning types raised across the package."""


class PliableError(Exception):
    """Base class; ``kind`` is the short machine-readable reason used by the CLI."""

    kind = "error"


class InvalidParameterError(PliableError, ValueError):
    kind = "invalid-parameter"


class InvalidTargetError(PliableError, ValueError):
    kind = "invalid-target"


class InsufficientMassError(PliableError):
    """Empirical mass too small for the slab radius (m_hat <= 5 r)."""

    kind = "insufficient-mass"


class DegenerateProposalError(PliableError):
    kind = "degenerate-proposal"


class DegenerateTargetError(PliableError):
    kind = "degenerate-target"


class EstimationFailedError(PliableError):
    kind = "estimation-failed"


class BudgetExhaustedError(PliableError):
    kind = "budget-exhausted"


class InsufficientDataError(PliableError, ValueError):
    kind = "insufficient-data"


class SparseCellsError(PliableError, ValueError):
    kind = "sparse-cells"


class ConfigParseError(PliableError, ValueError):
    kind = "parse-error"


class ConfigValidationError(PliableError, ValueError):
    kind = "validation-error"


class DegenerateTargetWarning(UserWarning):
    pass


class MassConditionWarning(UserWarning):
    """The stronger 8 r <= m condition is not met although m_hat > 5 r."""


class TuningFallbackWarning(UserWarning):
    pass
