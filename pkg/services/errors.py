class DimensionError(ValueError):
    """Antenna or block counts that cannot describe a channel"""


class DomainError(ValueError):
    """Argument outside the domain an operation is defined on"""


class NumericError(ArithmeticError):
    """Non-finite values reached a numeric routine"""


class FitError(RuntimeError):
    """Not enough usable points for a diversity regression"""


class GridError(ValueError):
    """Brute-force grid too large, or too coarse for its stated tolerance"""


class ConfigError(ValueError):
    """Run configuration rejected before any sampling starts"""
