"""Exceptions raised by the spectral-tail modules.

Everything derives from SpectralTailError so the CLI can report any library
failure as machine-readable JSON; input problems also subclass ValueError.
"""

from pathlib import Path
from typing import Optional


class SpectralTailError(Exception):
    """Base class for all library errors."""


class NoExceedances(SpectralTailError, ValueError):
    """No core observation exceeds the threshold (for the chosen conditioning)."""


class DegenerateLogs(SpectralTailError, ValueError):
    """The Hill denominator sum of log-excesses is not positive."""


class InvalidAlpha(SpectralTailError, ValueError):
    pass


class InvalidParams(SpectralTailError, ValueError):
    """Model parameters violate the constraints of the model."""


class ZeroDenominator(SpectralTailError, ValueError):
    """A weighted bootstrap denominator is zero or negative."""


class TooFewReplicates(SpectralTailError, ValueError):
    pass


class InvalidRatio(SpectralTailError, ValueError):
    pass


class TooManyDiscarded(SpectralTailError):
    """Too many bootstrap replicates were degenerate; the threshold is likely too high."""


class ParseError(SpectralTailError, ValueError):
    def __init__(self, path: Path, row: int, column: str, value: Optional[str], reason: str = "cannot parse"):
        self.path = Path(path)
        self.row = row
        # +1 for the header line
        self.line = row + 1
        self.column = column
        self.value = value
        super().__init__(f"{self.path}: row {row} (line {self.line}), column '{column}': {reason} {value!r}")


class TooShort(SpectralTailError, ValueError):
    pass


class NoConvergence(SpectralTailError):
    pass


class DegenerateData(SpectralTailError, ValueError):
    pass


class InsufficientData(SpectralTailError, ValueError):
    pass
