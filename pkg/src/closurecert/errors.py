"""Exception hierarchy shared by all closurecert modules."""


class ClosureCertError(Exception):
    """Base class for every error raised by this package."""


class ExprSyntaxError(ClosureCertError):
    def __init__(self, message, position):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class UnknownVariable(ClosureCertError):
    def __init__(self, name):
        super().__init__(f"unknown variable {name!r}")
        self.name = name


class UnknownRegion(ClosureCertError):
    def __init__(self, name):
        super().__init__(f"unknown region {name!r}")
        self.name = name


class NegativeExponent(ClosureCertError):
    pass


class MissingAssignment(ClosureCertError):
    def __init__(self, name):
        super().__init__(f"no value assigned to {name!r}")
        self.name = name


class DimensionMismatch(ClosureCertError):
    pass


class FormatError(ClosureCertError):
    pass


class PartitionViolation(ClosureCertError):
    def __init__(self, message, witness):
        super().__init__(f"{message}: witness {witness}")
        self.witness = witness


class EmptyRegionBudgetExceeded(ClosureCertError):
    pass


class UnsupportedFeature(ClosureCertError):
    def __init__(self, name):
        super().__init__(f"unsupported HOA feature: {name}")
        self.name = name


class HoaSyntaxError(ClosureCertError):
    def __init__(self, message, line):
        super().__init__(f"{message} (line {line})")
        self.line = line


class NoLetterForState(ClosureCertError):
    pass


class PathExplosion(ClosureCertError):
    pass


class PathTooShort(ClosureCertError):
    pass


class ArityMismatch(ClosureCertError):
    pass


class UnboundedTemplate(ClosureCertError):
    pass


class MissingPiece(ClosureCertError):
    def __init__(self, i, j):
        super().__init__(f"certificate has no piece for automaton pair ({i}, {j})")
        self.pair = (i, j)


class UncutPath(ClosureCertError):
    def __init__(self, path):
        super().__init__(f"path {path} has no cut triplet")
        self.path = path


class NumericalBreakdown(ClosureCertError):
    pass


class BudgetConfigInvalid(ClosureCertError):
    pass


class TemplateNotLinearInCoefficients(ClosureCertError):
    pass


class EmptyLabelRegion(ClosureCertError):
    def __init__(self, letter):
        super().__init__(f"letter {sorted(letter)} labels no state")
        self.letter = letter
