"""Exception hierarchy shared by all weylscope modules."""


class WeylscopeError(Exception):
    """Base class for every error raised by the package."""


# jet / expression evaluation
class DivisionNearZero(WeylscopeError, ZeroDivisionError):
    pass


class DomainError(WeylscopeError, ValueError):
    pass


class UnknownSymbol(WeylscopeError, NameError):
    pass


# metric text format
class ParseError(WeylscopeError, ValueError):
    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f" (line {line}" + (f", column {column}" if column is not None else "") + ")"
        super().__init__(message + where)


class SymmetryError(ParseError):
    pass


class ArityError(ParseError):
    pass


class NotPositiveDefinite(WeylscopeError, ValueError):
    pass


# tensor algebra
class ShapeMismatch(WeylscopeError, ValueError):
    pass


class DimensionTooSmall(WeylscopeError, ValueError):
    pass


# field-level numerics
class StencilOutOfDomain(WeylscopeError, ValueError):
    pass


class GaugeInstability(WeylscopeError, ArithmeticError):
    pass


class RankDrift(WeylscopeError, ArithmeticError):
    pass


class RankNotOne(WeylscopeError, ValueError):
    pass


class OddDimensionRequired(WeylscopeError, ValueError):
    pass


class EvenDimension(OddDimensionRequired):
    pass


class KernelEscape(WeylscopeError, ArithmeticError):
    pass


# detection
class NoAdmissiblePair(WeylscopeError, ArithmeticError):
    pass


class RankZeroOmega(WeylscopeError, ArithmeticError):
    pass


# generators
class BadParams(WeylscopeError, ValueError):
    pass


class BadKind(WeylscopeError, ValueError):
    pass
