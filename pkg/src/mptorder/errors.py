class MptError(Exception):
    """Base class for domain errors (mapped to exit code 1 by the CLI)."""


class ModelError(MptError):
    pass


class ParamError(MptError):
    pass


class OrderError(MptError):
    pass


class PatternError(OrderError):
    pass


class InfeasibleError(MptError):
    pass


class FitError(MptError):
    pass
