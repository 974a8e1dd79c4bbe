"""Service error hierarchy.

Every error carries a stable ``code`` string that the HTTP layer maps to a
structured body, so callers never have to parse free text.
"""

from __future__ import annotations


class SocError(Exception):
    """Base class for all service errors."""

    code = "error"
    http_status = 500

    def __init__(self, message: str = "", **details):
        super().__init__(message or self.code)
        self.details = details


# --- domain-model ---------------------------------------------------------

class UnknownTimezone(SocError):
    code = "unknown_timezone"
    http_status = 422


# --- auth -----------------------------------------------------------------

class HandleTaken(SocError):
    code = "handle_taken"
    http_status = 409


class InvalidHandle(SocError):
    code = "invalid_handle"
    http_status = 422


class WeakPassword(SocError):
    code = "weak_password"
    http_status = 422


class Forbidden(SocError):
    code = "forbidden"
    http_status = 403


class BadCredentials(SocError):
    code = "bad_credentials"
    http_status = 401


class Throttled(SocError):
    code = "throttled"
    http_status = 429


class InvalidToken(SocError):
    code = "invalid_token"
    http_status = 401


class Expired(SocError):
    code = "token_expired"
    http_status = 401


# --- usage-policy ---------------------------------------------------------

class UnknownStudent(SocError):
    code = "unknown_student"
    http_status = 404


class UnknownReservation(SocError):
    code = "unknown_reservation"
    http_status = 404


class AlreadyFinal(SocError):
    code = "reservation_already_final"
    http_status = 409


# --- rag-index ------------------------------------------------------------

class EmptyIndex(SocError):
    code = "empty_index"
    http_status = 503


class EmptyText(SocError):
    code = "empty_text"
    http_status = 422


class EmptyDocument(SocError):
    code = "empty_document"
    http_status = 422


class DimensionMismatch(SocError):
    code = "dimension_mismatch"
    http_status = 422


class ProviderUnavailable(SocError):
    code = "embedding_provider_unavailable"
    http_status = 503


# --- dialogue-engine ------------------------------------------------------

class StageViolation(SocError):
    code = "stage_violation"
    http_status = 409


class TooShort(SocError):
    code = "too_short"
    http_status = 422


class BudgetTooSmall(SocError):
    code = "budget_too_small"
    http_status = 422


class GatewayError(SocError):
    code = "gateway_error"
    http_status = 502


class GatewayTimeout(GatewayError):
    code = "gateway_timeout"
    http_status = 502


class UnknownConversation(SocError):
    code = "unknown_conversation"
    http_status = 404


# --- reflection-escalation -------------------------------------------------

class AllFieldsEmpty(SocError):
    code = "all_fields_empty"
    http_status = 422


class NoReflectionYet(SocError):
    code = "no_reflection_yet"
    http_status = 409


class AlreadyEscalated(SocError):
    code = "already_escalated"
    http_status = 409


class AlreadyClaimed(SocError):
    code = "already_claimed"
    http_status = 409


class UnknownEscalation(SocError):
    code = "unknown_escalation"
    http_status = 404


# --- persistence ----------------------------------------------------------

class CorruptJournal(SocError):
    code = "corrupt_journal"


class SerializationError(SocError):
    code = "serialization_error"
    http_status = 422


class StorageFull(SocError):
    code = "storage_full"
    http_status = 507


# --- observability ---------------------------------------------------------

class UnknownMetric(SocError):
    code = "unknown_metric"


class NegativeDelta(SocError):
    code = "negative_delta"


# --- adversarial-harness ---------------------------------------------------

class CorpusParseError(SocError):
    code = "corpus_parse_error"
    http_status = 422
