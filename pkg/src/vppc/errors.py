"""Exceptions shared across the package."""
from __future__ import annotations

__all__ = ["ConfigError", "IntegrationError"]


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration (CLI exit code 2)."""


class IntegrationError(RuntimeError):
    """Non-finite state encountered while integrating (CLI exit code 3).

    Carries which body went bad so the failure is attributable: ``kind`` is
    "particle" or "charge", ``index`` the offending row, ``time`` the time of
    the failed substep.  ``records`` holds the diagnostics collected before
    the failure.
    """

    def __init__(self, kind: str, index: int, time: float, records=None):
        self.kind = kind
        self.index = int(index)
        self.time = float(time)
        self.records = records if records is not None else []
        super().__init__(f"non-finite {kind} {index} at t={time:.6g}")
