class LabError(Exception):
    """Base class for every error raised by the laboratory."""


class ContractViolation(LabError):
    pass


class MissingContextError(LabError):
    def __init__(self, context, step_index=None):
        self.context = context
        self.step_index = step_index
        where = f" at step {step_index}" if step_index is not None else ""
        super().__init__(f"kernel table has no law for context {context}{where}")


class ValidationError(LabError):
    pass


class ConditionViolation(LabError):
    """A kernel fails one of Conditions B, C, C+ or E; `context` names where."""

    def __init__(self, condition: str, message: str, context=None):
        self.condition = condition
        self.context = context
        super().__init__(f"Condition {condition} violated: {message}")


class InvalidEnvironmentError(LabError):
    pass


class InsufficientDataError(LabError):
    pass


class ConfigError(LabError):
    pass


class MissingInputError(LabError):
    def __init__(self, missing):
        self.missing = list(missing)
        listing = ", ".join(str(path) for path in self.missing)
        super().__init__(f"missing input files: {listing}")
