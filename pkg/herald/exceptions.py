# herald/exceptions.py
"""
Error types raised by the simulator library.

All of them derive from ``HeraldSimError`` so callers (the CLI in particular)
can separate simulation failures from programming errors.
"""

REGISTRY_MISMATCH_ERROR_MSG = "States belong to different mode registries."
ZERO_STATE_ERROR_MSG = "Cannot normalize the zero state."
OCCUPATION_OVERFLOW_ERROR_MSG = "Occupation {occupation} of {mode} exceeds the cap {cap}."
EXPANSION_BUDGET_ERROR_MSG = "Expansion of order {order} needs {count} monomials, budget is {budget}."
MODE_SUPPORT_ERROR_MSG = "Mode support mismatch: {detail}"


class HeraldSimError(Exception):
    """Base class for every simulator error."""


class RegistryMismatchError(HeraldSimError):
    pass


class OccupationOverflowError(HeraldSimError):
    pass


class ZeroStateError(HeraldSimError):
    """The state has no amplitude left; upstream this is an impossible herald."""


class ExpansionBudgetError(HeraldSimError):
    pass


class ModeSupportError(HeraldSimError):
    pass


class InvalidCircuitError(HeraldSimError):
    pass


class InvalidPatternError(HeraldSimError):
    pass


class DegenerateFitError(HeraldSimError):
    pass


class ExactRingError(HeraldSimError):
    """A value left the exact coefficient ring (e.g. a float leaked in)."""
