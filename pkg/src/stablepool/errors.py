"""Exception hierarchy.

Every error carries a short machine-readable ``category`` string; the CLI
reports it on failure so callers can branch without parsing messages.
"""

from __future__ import annotations


class StablepoolError(Exception):
    category = "error"


class DomainError(StablepoolError, ValueError):
    category = "domain"


class ExponentOverflowError(StablepoolError, OverflowError):
    category = "overflow"


class UnderflowError(StablepoolError, ArithmeticError):
    category = "underflow"


class NotFoundError(StablepoolError, LookupError):
    category = "not_found"


class CurrencyMismatchError(StablepoolError, TypeError):
    category = "currency_mismatch"


# pool protocol


class PoolError(StablepoolError):
    category = "pool"


class WrongPhaseError(PoolError):
    category = "wrong_phase"


class DuplicateCommitError(PoolError):
    category = "duplicate_commit"


class EmptyPoolError(PoolError):
    category = "empty_pool"


class UnknownInvestorError(PoolError, LookupError):
    category = "unknown_investor"


class DigestMismatchError(PoolError):
    """A reveal did not hash to the stored digest.

    The offending commitment is voided. Because pool states are immutable,
    the voided state travels on the exception as ``state``.
    """

    category = "digest_mismatch"

    def __init__(self, message: str, state=None):
        super().__init__(message)
        self.state = state


class BelowMinFillError(PoolError):
    category = "below_min_fill"


class OverfillError(PoolError):
    category = "overfill"


class NoRevealsError(PoolError):
    category = "no_reveals"


# ledger


class LedgerError(StablepoolError):
    category = "ledger"


class InactivePoolError(LedgerError):
    category = "inactive_pool"


class InsufficientBackingError(LedgerError):
    category = "insufficient_backing"


class DustError(LedgerError):
    category = "dust"


class UnknownBatchError(LedgerError, LookupError):
    category = "unknown_batch"


class RedeemedBatchError(LedgerError):
    category = "already_redeemed"


# market / harness


class HorizonExceededError(StablepoolError, IndexError):
    category = "horizon_exceeded"


class ScenarioError(StablepoolError, ValueError):
    category = "scenario"


class NoSweepError(StablepoolError):
    category = "no_sweep"


class EpisodeError(StablepoolError):
    """Wraps a module error with the episode step where it happened."""

    category = "episode"

    def __init__(self, step: str, cause: Exception):
        super().__init__(f"episode step {step!r} failed: {cause}")
        self.step = step
        self.cause = cause
        self.category = getattr(cause, "category", "error")


class ReportIOError(StablepoolError, OSError):
    category = "io"
