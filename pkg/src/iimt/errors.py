"""Exception hierarchy shared across the package.

Each class carries the process exit code the CLI maps it to.
"""


class IIMTError(Exception):
    exit_code = 1


class InputError(IIMTError, ValueError):
    exit_code = 2


class ConfigError(InputError):
    """Invalid or inconsistent configuration (exit code 2)."""


class DoesNotFitError(InputError):
    """Rendered text would overflow the strip."""

    def __init__(self, text, max_chars):
        self.text = text
        self.max_chars = max_chars
        super().__init__(
            f"text of {len(text)} characters does not fit; max is {max_chars}"
        )


class DependencyError(IIMTError):
    exit_code = 3


class BundleError(DependencyError):
    """Pipeline components were trained under incompatible settings."""


class NumericalError(IIMTError, ArithmeticError):
    exit_code = 4
