"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid scenario or material configuration. CLI exit code 2."""


class DataFormatError(ValueError):
    """Malformed data file. Carries file name and line number when known."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        prefix = ""
        if path is not None:
            prefix = f"{path}:"
            if line is not None:
                prefix += f"{line}:"
            prefix += " "
        super().__init__(prefix + message)


class FitError(ValueError):
    """Material fit cannot proceed (for example, underdetermined data)."""


class SolverError(RuntimeError):
    """Newton or time integration failure. CLI exit code 3.

    `residual_report` holds the scaled residual snapshot at failure, when
    available, to aid diagnosis.
    """

    def __init__(self, message, residual_report=None):
        self.residual_report = residual_report
        super().__init__(message)
