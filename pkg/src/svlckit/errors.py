"""Exception types shared across the toolkit."""

from __future__ import annotations


class ServiceError(RuntimeError):
    """A remote generation/embedding service failed after retries.

    Recoverable at the record level: pipelines catch this, count the
    failure, and move on to the next record.
    """


class FormatError(ValueError):
    """Input data violates its declared format beyond the skip threshold."""
