"""Shared error types.

Every rejected command raises :class:`CommandError` with a stable
machine-readable ``code`` (the API maps codes to HTTP statuses, the CLI to
exit messages). Codes are plain strings rather than an enum so drivers and
future modules can add their own without touching this file.
"""

from __future__ import annotations


class CommandError(Exception):
    """A command was rejected; the store was not modified."""

    def __init__(self, code: str, message: str, details: object = None):
        super().__init__(message)
        self.code = code
        self.message = message
        self.details = details

    def to_doc(self) -> dict:
        doc = {"code": self.code, "message": self.message}
        if self.details is not None:
            doc["details"] = self.details
        return doc


class DriverUnreachable(Exception):
    """Raised by a driver whose endpoint is down; the broker retries next tick."""


class CorruptLog(Exception):
    """Event log failed the gapless-sequence or per-line CRC check."""
