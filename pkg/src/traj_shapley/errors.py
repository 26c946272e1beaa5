"""Exception hierarchy.

Everything raised on bad data or a bad model derives from :class:`TrajShapleyError`
so the CLI can map it to exit code 2.
"""


class TrajShapleyError(Exception):
    """Base class for data and model errors."""


class MalformedLine(TrajShapleyError):
    def __init__(self, line_number: int, reason: str):
        super().__init__(f"line {line_number}: {reason}")
        self.line_number = line_number
        self.reason = reason


class TooManyAgents(TrajShapleyError):
    pass


class EmptyInput(TrajShapleyError):
    pass


class LengthMismatch(TrajShapleyError):
    pass


class NonFiniteLoss(TrajShapleyError):
    pass


class TooManyFeatures(TrajShapleyError):
    pass


class InsufficientPool(TrajShapleyError):
    pass
