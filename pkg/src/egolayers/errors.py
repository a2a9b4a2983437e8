"""Exception hierarchy for egolayers.

Every failure the pipeline can report to a caller derives from EgoLayersError,
so the CLI can turn it into a machine-readable error record and exit code.
Errors about bad values also derive from ValueError.
"""

from pathlib import Path


class EgoLayersError(Exception):
    """Base class for all errors raised by egolayers."""

    exit_code = 2

    def to_record(self) -> dict:
        """Machine-readable description of the error."""
        return {"error": str(self), "type": type(self).__name__}


class ConfigError(EgoLayersError, ValueError):
    """Invalid or incomplete pipeline configuration."""


class ParseError(EgoLayersError, ValueError):
    """Malformed input row or file."""

    def __init__(self, message: str, *, path: str | Path | None = None, line: int | None = None):
        self.path = str(path) if path is not None else None
        self.line = line
        location = ""
        if self.path:
            location = f"{self.path}"
            if line is not None:
                location += f":{line}"
            location += ": "
        elif line is not None:
            location = f"line {line}: "
        super().__init__(f"{location}{message}")

    def to_record(self) -> dict:
        record = super().to_record()
        if self.path:
            record["path"] = self.path
        if self.line is not None:
            record["line"] = self.line
        return record


class UnknownKindError(ParseError):
    """Event log row with an interaction kind we do not know."""


class ValidationError(ParseError):
    """Row is well-formed but violates a domain invariant."""


class NonMonotoneCountsError(ValidationError):
    """Window counts that are not nested (n1 <= n2 <= n3 <= n4)."""


class InactiveLinkError(EgoLayersError, ValueError):
    """Operation needs an active link (n4 > 0)."""


class NoLinkError(EgoLayersError, LookupError):
    """No mention or reply was ever exchanged between the pair."""


class DegenerateEgoError(EgoLayersError, ValueError):
    """Ego network with no positive contact frequency."""


class CalibrationRangeError(EgoLayersError, ValueError):
    """Calibration target outside the open class window, or no usable sample."""


class ArityError(EgoLayersError, ValueError):
    """Number of clusters out of range for the data."""


class EgoExcludedError(EgoLayersError):
    """Ego cannot take part in a given analysis (no replies, no retweets, too few ties)."""


class UndefinedCorrelationError(EgoLayersError, ValueError):
    """Correlation or fit undefined because a variable has zero variance."""


class InsufficientDataError(EgoLayersError, ValueError):
    """Fewer observations than the statistic needs."""


class OracleGuardError(EgoLayersError, ValueError):
    """Input too large for an exhaustive oracle."""


class SpecError(EgoLayersError, ValueError):
    """Invalid synthetic layer or diffusion specification."""


class NoEligibleEgosError(EgoLayersError):
    """The eligibility filters removed every ego."""

    def __init__(self, message: str = "no eligible egos"):
        super().__init__(message)
