"""Exception types shared across the package.

Each class maps onto one exit code of the command line tool.
"""


class MvsdeError(Exception):
    exit_code = 1


class ParameterError(MvsdeError, ValueError):
    """A scalar parameter is outside its admissible range."""

    exit_code = 2


class InputError(MvsdeError, ValueError):
    """Inputs are inconsistent (dimension mismatch, point outside a domain...)."""

    exit_code = 2


class ConfigError(MvsdeError, ValueError):
    """Invalid experiment configuration; ``path`` names the offending JSON key."""

    exit_code = 2

    def __init__(self, path, message):
        self.path = path
        super().__init__(f"{path}: {message}")


class CapabilityError(MvsdeError):
    """The request exceeds what an exact routine supports."""

    exit_code = 2


class CertificationError(MvsdeError):
    """A sampled certification found a violating witness."""

    exit_code = 3

    def __init__(self, message, witness=None, report=None):
        self.witness = witness
        self.report = report
        super().__init__(message)


class SimulationInstability(MvsdeError, RuntimeError):
    """A non-finite state appeared during time stepping."""

    exit_code = 4

    def __init__(self, step, message="non-finite state detected"):
        self.step = step
        super().__init__(f"{message} at step {step}")
