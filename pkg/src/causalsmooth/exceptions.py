"""Exception hierarchy.

Every error carries the process exit code the CLI maps it to.
"""


class CausalSmoothError(Exception):
    exit_code = 1


class ConfigurationError(CausalSmoothError, ValueError):
    exit_code = 2


class DataError(CausalSmoothError, ValueError):
    """Malformed, missing or inconsistent input data."""

    exit_code = 3


class SchemaError(DataError):
    pass


class InputError(DataError):
    """Argument shapes or values that violate an operation's precondition."""


class NumericError(CausalSmoothError, ArithmeticError):
    exit_code = 4


class EstimationError(NumericError):
    pass


class WeakInstrumentError(EstimationError):
    pass


class StratumError(EstimationError):
    pass


class IdentificationError(EstimationError):
    pass


class SingularDesignError(EstimationError):
    pass


class AteLookupError(EstimationError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class RefutationError(EstimationError):
    pass


class TrainingError(NumericError):
    pass


class OutcomeLeakageError(CausalSmoothError, RuntimeError):
    """The outcome column was read by a stage that must not see it."""

    exit_code = 4


class ReportIOError(CausalSmoothError, OSError):
    exit_code = 5


class PipelineStageError(CausalSmoothError):
    """Wraps the error that aborted a pipeline stage, with the partial report."""

    def __init__(self, stage, cause, fragment=None):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
        self.fragment = fragment if fragment is not None else {}

    @property
    def exit_code(self):
        return getattr(self.cause, "exit_code", 1)
