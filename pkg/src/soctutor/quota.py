"""Daily query quota with reserve/commit/refund semantics.

A reservation provisionally consumes one unit the moment it is granted, so
concurrent submissions can never oversubscribe a day; gate-rejected or
gateway-failed queries refund their unit. Only queries that actually reach
model feedback stay spent.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import events as ev
from .errors import AlreadyFinal, UnknownReservation, UnknownStudent
from .ids import local_day, new_id
from .store import ledger_key

REFUND_GATE_REJECT = "gate_reject"
REFUND_GATEWAY_ERROR = "gateway_error"


@dataclass(frozen=True)
class QuotaDecision:
    allowed: bool
    remaining_after: int
    reservation_id: str | None = None


class QuotaService:
    def __init__(self, store, clock, limit: int = 8, tz: str = "UTC"):
        self.store = store
        self.clock = clock
        self.limit = limit
        self.tz = tz

    def _day(self, now_ms: int) -> str:
        return local_day(now_ms, self.tz).isoformat()

    def _require_student(self, student_id: str) -> None:
        if student_id not in self.store.state.users:
            raise UnknownStudent(f"no account {student_id}")

    def reserve(self, student_id: str, now_ms: int | None = None) -> QuotaDecision:
        self._require_student(student_id)
        at = self.clock.now_ms() if now_ms is None else now_ms
        day = self._day(at)
        with self.store.lock():
            ledger = self.store.state.ledgers.get(ledger_key(student_id, day), {"consumed": 0})
            consumed = ledger["consumed"]
            if consumed >= self.limit:
                self.store.commit(
                    ev.QUOTA_DENIED, {"student_id": student_id, "day": day}, at
                )
                return QuotaDecision(allowed=False, remaining_after=self.limit - consumed)
            reservation_id = new_id(at)
            self.store.commit(
                ev.QUOTA_RESERVED,
                {"reservation_id": reservation_id, "student_id": student_id, "day": day},
                at,
            )
            return QuotaDecision(
                allowed=True,
                remaining_after=self.limit - (consumed + 1),
                reservation_id=reservation_id,
            )

    def _reservation(self, reservation_id: str) -> dict:
        res = self.store.state.reservations.get(reservation_id)
        if res is None:
            raise UnknownReservation(f"no reservation {reservation_id}")
        return res

    def commit(self, reservation_id: str) -> None:
        with self.store.lock():
            res = self._reservation(reservation_id)
            if res["status"] != "provisional":
                raise AlreadyFinal(f"reservation is {res['status']}")
            self.store.commit(
                ev.QUOTA_COMMITTED, {"reservation_id": reservation_id}, self.clock.now_ms()
            )

    def refund(self, reservation_id: str, reason: str = REFUND_GATE_REJECT) -> None:
        with self.store.lock():
            res = self._reservation(reservation_id)
            if res["status"] != "provisional":
                raise AlreadyFinal(f"reservation is {res['status']}")
            self.store.commit(
                ev.QUOTA_REFUNDED,
                {"reservation_id": reservation_id, "reason": reason},
                self.clock.now_ms(),
            )

    def remaining(self, student_id: str, now_ms: int | None = None) -> int:
        self._require_student(student_id)
        at = self.clock.now_ms() if now_ms is None else now_ms
        ledger = self.store.state.ledgers.get(
            ledger_key(student_id, self._day(at)), {"consumed": 0}
        )
        return max(0, self.limit - ledger["consumed"])
