"""Exception hierarchy shared by all riskmdp modules."""


class RiskMdpError(Exception):
    """Base class for every error raised by this package."""


class DistributionError(RiskMdpError):
    """A finite distribution violates its invariants (mass, signs, finiteness)."""


class ParameterError(RiskMdpError):
    """A risk or solver parameter is outside its admissible range."""


class UnsupportedUtilityError(RiskMdpError):
    """The requested operation is undefined for this utility kind."""


class ModelFormatError(RiskMdpError):
    """A model file does not match the JSON schema.

    ``pointer`` locates the offending element (JSON-pointer syntax).
    """

    def __init__(self, message, pointer=""):
        super().__init__(f"{message} (at {pointer or '/'})")
        self.pointer = pointer


class ModelValidationError(RiskMdpError):
    """A structurally well-formed model violates semantic invariants."""

    def __init__(self, violations):
        super().__init__("model validation failed:\n  " + "\n  ".join(violations))
        self.violations = list(violations)


class PolicyError(RiskMdpError):
    """A policy picks an action outside the admissible set of some state."""


class ChainStructureError(RiskMdpError):
    """A solver precondition on induced-chain structure fails (reducibility)."""


class EnumerationCapError(RiskMdpError):
    """Exhaustive policy enumeration would exceed the configured cap."""

    def __init__(self, count, cap):
        super().__init__(
            f"stationary policy space has {count} elements, exceeding the cap {cap}; "
            "pass a sample budget to spot-check instead"
        )
        self.count = count
        self.cap = cap


class IterationLimitError(RiskMdpError):
    """An iterative solver hit its sweep budget before reaching tolerance."""

    def __init__(self, message, residual=None, iterations=None):
        if residual is not None:
            message = f"{message} (residual {residual:.3e} after {iterations} iterations)"
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations
