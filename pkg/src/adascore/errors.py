"""Exception hierarchy shared by all modules."""


class AdaScoreError(Exception):
    """Base class for errors raised by this package."""


class CycleDetected(AdaScoreError):
    pass


class InvalidConditioningSet(AdaScoreError, ValueError):
    pass


class NotAncestralGraph(AdaScoreError, ValueError):
    pass


class InconsistentSepset(AdaScoreError):
    pass


class DegenerateColumn(AdaScoreError, ValueError):
    pass


class DegenerateData(AdaScoreError, ValueError):
    pass


class NoValidHiding(AdaScoreError):
    pass


class SingularSystem(AdaScoreError, ArithmeticError):
    pass


class InsufficientSamples(AdaScoreError, ValueError):
    pass


class TooFewSamples(AdaScoreError, ValueError):
    pass


class NodeCountMismatch(AdaScoreError, ValueError):
    pass


class ConfigError(AdaScoreError, ValueError):
    pass
