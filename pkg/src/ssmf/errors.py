"""Exception hierarchy.

Input problems derive from :class:`ValidationError` (CLI exit code 2);
numeric guards derive from :class:`NumericGuard` (CLI exit code 3).
"""


class SsmfError(Exception):
    pass


class ValidationError(SsmfError, ValueError):
    pass


class NumericGuard(SsmfError, ArithmeticError):
    pass


class DuplicateRatio(ValidationError):
    pass


class BadProbability(ValidationError):
    pass


class TrivialIfs(ValidationError):
    pass


class BoundsViolated(ValidationError):
    pass


class NotNormalized(ValidationError):
    pass


class BadCoordinate(ValidationError):
    pass


class BadK(ValidationError):
    pass


class Cond2Violated(ValidationError):
    pass


class PathTooShort(ValidationError):
    pass


class InsufficientSamples(ValidationError):
    pass


class TooLarge(NumericGuard):
    pass


class TolTooSmall(NumericGuard):
    pass


class DegenerateFit(NumericGuard):
    pass


class NoFeasibleK(NumericGuard):
    pass
