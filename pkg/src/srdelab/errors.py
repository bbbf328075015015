class SrdeError(Exception):
    """Base class for errors raised by this package."""


class InvalidArgument(SrdeError, ValueError):
    pass


class AssumptionViolation(SrdeError, ValueError):
    """A structural hypothesis fails; ``value`` carries the offending number."""

    def __init__(self, message, value=None):
        super().__init__(message)
        self.value = value


class ContractViolation(SrdeError, RuntimeError):
    """Caller broke a sequencing contract (e.g. time went backwards)."""


class ConfigError(SrdeError, ValueError):
    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class SweepIOError(SrdeError, OSError):
    """Persisting sweep output failed; completed cells are kept on disk.

    ``resume_token`` is the index of the first cell that was not written.
    """

    def __init__(self, message, resume_token):
        super().__init__(message)
        self.resume_token = resume_token
