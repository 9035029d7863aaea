"""Exception types shared across the package."""


class PlantedCutError(Exception):
    """Base class for all package errors."""


class ConfigError(PlantedCutError, ValueError):
    """Parameters violate an operation's precondition."""


class IntegralityViolation(ConfigError):
    pass


class ParityViolation(ConfigError):
    pass


class ProbabilityOutOfRange(ConfigError):
    pass


class EmptyGraph(ConfigError):
    pass


class TooLarge(ConfigError):
    pass


class NonzeroConstantTerm(ConfigError):
    pass


class NumericalError(PlantedCutError, ArithmeticError):
    """A numerical routine failed to reach its stated accuracy."""


class RetryExhausted(NumericalError):
    pass


class NonConvergence(NumericalError):
    pass


class DegenerateMessage(NumericalError):
    pass


class RankDeficientSamples(NumericalError):
    pass


class MemoryGuard(ConfigError):
    pass
