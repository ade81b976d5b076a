"""Exception types raised across the package."""


class ProcnextError(Exception):
    """Base class for all errors raised by procnext."""


class ParseError(ProcnextError):
    """Malformed XES/CSV/PNML input."""


class ReplayError(ProcnextError):
    """Token replay could not proceed (disabled firing, unmatched activity)."""


class CompatibilityError(ProcnextError):
    """Artifacts do not belong together (vocabulary hash mismatch, mixed batches)."""


class TrainingError(ProcnextError):
    """Optimization failed (non-finite loss, too few traces)."""
