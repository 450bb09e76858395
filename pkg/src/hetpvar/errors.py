"""Exception hierarchy shared by every stage of the toolkit."""


class PanelVarError(Exception):
    """Base class for all toolkit errors."""


class ParseError(PanelVarError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ValidationError(PanelVarError):
    pass


class UnknownCountryError(PanelVarError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else "unknown country"


class DomainError(PanelVarError, ValueError):
    pass


class SingularityError(DomainError):
    """Steady-state formula evaluated at g + delta <= 0."""


class InsufficientDataError(PanelVarError):
    pass


class CoverageError(PanelVarError):
    def __init__(self, message, years=()):
        self.years = list(years)
        super().__init__(message)


class SampleSizeError(InsufficientDataError):
    pass


class CollinearityError(PanelVarError):
    def __init__(self, message, columns=()):
        self.columns = list(columns)
        super().__init__(message)


class FactorizationError(PanelVarError):
    def __init__(self, message, min_eigenvalue=None):
        self.min_eigenvalue = min_eigenvalue
        super().__init__(message)


class DiagnosticError(PanelVarError):
    pass


class DegenerateError(PanelVarError):
    pass


class ContractError(PanelVarError, ValueError):
    pass


class BootstrapError(PanelVarError):
    pass


class StageError(PanelVarError):
    """Wraps a failure with the pipeline stage in which it occurred."""

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
