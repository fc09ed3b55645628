class CapabilityError(RuntimeError):
    """Input is valid but larger than a configured capacity limit."""


class ConfigurationError(ValueError):
    pass


class SolverStall(RuntimeError):
    """Cutting-plane loop hit its iteration cap.

    ``best`` holds the best feasible distribution found so far.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best
