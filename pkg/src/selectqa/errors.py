"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Raised when an input violates a documented contract."""


class ModelCoverageError(ValidationError):
    """Raised when a table model has no distribution for a reachable state."""


class TemplateParseError(ValidationError):
    """Raised when a calibration output template cannot be parsed."""


class RecordValidationError(ValidationError):
    """A prediction-log file failed schema validation.

    ``violations`` holds every problem found, one ``line N: field: message``
    string per violation, so producers can fix a whole file in one pass.
    """

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("\n".join(self.violations))
