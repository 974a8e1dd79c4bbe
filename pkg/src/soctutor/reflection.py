"""Post-feedback reflection scoring and instructor escalation.

Reflections are scored by three auditable binary features (length, overlap
with the conversation, a forward-looking marker); the mean is the score and
two of three makes it substantive. Escalations snapshot the full
conversation so instructors get context even if state later changes.
"""

from __future__ import annotations

import json
import re

from . import events as ev
from .errors import (
    AllFieldsEmpty,
    AlreadyClaimed,
    AlreadyEscalated,
    NoReflectionYet,
    StageViolation,
    UnknownEscalation,
)
from .ids import new_id
from .store import STAGE_CLOSED, STAGE_ESCALATED, STAGE_FEEDBACK, STAGE_REFLECTION

_TOKEN_RE = re.compile(r"[a-z0-9]+")

MIN_COMBINED_WORDS = 25
CONTENT_TOKEN_LEN = 4
SUBSTANTIVE_FEATURES = 2  # of 3

ESC_OPEN = "open"
ESC_CLAIMED = "claimed"
ESC_RESOLVED = "resolved"


def load_stopwords(path: str) -> frozenset[str]:
    with open(path, encoding="utf-8") as fh:
        return frozenset(w.strip() for w in fh if w.strip())


def content_tokens(text: str, stopwords: frozenset[str]) -> set[str]:
    return {
        t
        for t in _TOKEN_RE.findall(text.lower())
        if len(t) >= CONTENT_TOKEN_LEN and t not in stopwords
    }


def score_reflection(
    learned: str,
    unclear: str,
    next_steps: str,
    conversation_texts: list[str],
    markers: list[str],
    stopwords: frozenset[str],
) -> tuple[float, bool, dict]:
    """Score = mean of three binary features; substantive at two or more.

    f_length: the combined fields carry at least 25 words.
    f_overlap: some content token (4+ chars, not a stopword) also appears in
    the conversation. f_forward: a forward-looking/uncertainty marker occurs.
    """
    combined = " ".join((learned, unclear, next_steps))
    words = combined.split()
    f_length = len(words) >= MIN_COMBINED_WORDS

    own_tokens = content_tokens(combined, stopwords)
    conv_tokens: set[str] = set()
    for text in conversation_texts:
        conv_tokens |= content_tokens(text, stopwords)
    f_overlap = bool(own_tokens & conv_tokens)

    marker_set = {m.lower() for m in markers}
    f_forward = bool(set(_TOKEN_RE.findall(combined.lower())) & marker_set)

    fired = int(f_length) + int(f_overlap) + int(f_forward)
    score = fired / 3
    return (
        score,
        fired >= SUBSTANTIVE_FEATURES,
        {"length": f_length, "overlap": f_overlap, "forward": f_forward},
    )


class ReflectionOps:
    def __init__(self, store, clock, template, stopwords: frozenset[str]):
        self.store = store
        self.clock = clock
        self.template = template
        self.stopwords = stopwords

    def prompt_reflection(self, conv: dict) -> list[str]:
        """Return the reflection prompts, advancing feedback -> reflection.

        Idempotent once in the reflection stage.
        """
        stage = conv["stage"]
        if stage == STAGE_REFLECTION:
            return list(self.template.reflection_prompts)
        tutor_turns = [t for t in conv["turns"] if t["author"] == "tutor"]
        if stage != STAGE_FEEDBACK or not tutor_turns:
            raise StageViolation("reflection prompts come after tutor feedback")
        at = self.clock.now_ms()
        self.store.commit(
            ev.STAGE_ADVANCED,
            {"conversation_id": conv["id"], "stage_after": STAGE_REFLECTION},
            at,
        )
        return list(self.template.reflection_prompts)

    def submit_reflection(
        self, conv: dict, learned: str, unclear: str, next_steps: str
    ) -> dict:
        if conv["stage"] != STAGE_REFLECTION:
            raise StageViolation(f"cannot submit a reflection in stage {conv['stage']!r}")
        if not any(s.strip() for s in (learned, unclear, next_steps)):
            raise AllFieldsEmpty("at least one reflection field must be filled in")
        score, substantive, features = score_reflection(
            learned,
            unclear,
            next_steps,
            [t["text"] for t in conv["turns"] if t.get("text")],
            self.template.forward_markers,
            self.stopwords,
        )
        at = self.clock.now_ms()
        reflection = {
            "id": new_id(at),
            "conversation_id": conv["id"],
            "learned": learned,
            "unclear": unclear,
            "next_steps": next_steps,
            "score": score,
            "substantive": substantive,
            "at": at,
        }
        self.store.commit(
            ev.REFLECTION_STORED,
            {"reflection": reflection, "stage_after": STAGE_CLOSED, "features": features},
            at,
        )
        return reflection

    def escalate(self, conv: dict, student_note: str = "") -> dict:
        if conv["stage"] == STAGE_ESCALATED:
            raise AlreadyEscalated("conversation already escalated")
        if conv["stage"] not in (STAGE_REFLECTION, STAGE_CLOSED):
            raise StageViolation(f"cannot escalate from stage {conv['stage']!r}")
        reflection = self.store.state.reflections.get(conv.get("reflection_id", ""))
        if reflection is None:
            raise NoReflectionYet("a reflection must be submitted before escalating")
        at = self.clock.now_ms()
        # deep copy through JSON so later state changes can't reach the package
        package = json.loads(
            json.dumps(
                {
                    "turns": [t for t in conv["turns"]],
                    "reflection": reflection,
                    "citations": conv["citations"],
                    "gate_flags": conv["gate_flags"],
                }
            )
        )
        escalation = {
            "id": new_id(at),
            "conversation_id": conv["id"],
            "student_id": conv["student_id"],
            "student_note": student_note,
            "package": package,
            "status": ESC_OPEN,
            "opened_at": at,
        }
        self.store.commit(ev.ESCALATION_OPENED, {"escalation": escalation}, at)
        return escalation

    def _escalation(self, escalation_id: str) -> dict:
        esc = self.store.state.escalations.get(escalation_id)
        if esc is None:
            raise UnknownEscalation(f"no escalation {escalation_id}")
        return esc

    def queue(self, status_filter: str | None = None) -> list[dict]:
        """Open/claimed escalations by default, oldest first."""
        wanted = (
            {status_filter}
            if status_filter
            else {ESC_OPEN, ESC_CLAIMED}
        )
        rows = [
            esc
            for esc in self.store.state.escalations.values()
            if esc["status"] in wanted
        ]
        rows.sort(key=lambda e: (e["opened_at"], e["id"]))
        return rows

    def claim(self, escalation_id: str, instructor_id: str) -> dict:
        with self.store.lock():
            esc = self._escalation(escalation_id)
            if esc["status"] != ESC_OPEN:
                raise AlreadyClaimed(f"escalation is {esc['status']}")
            self.store.commit(
                ev.ESCALATION_STATUS_CHANGED,
                {
                    "escalation_id": escalation_id,
                    "status": ESC_CLAIMED,
                    "actor_id": instructor_id,
                },
                self.clock.now_ms(),
            )
            return self._escalation(escalation_id)

    def resolve(self, escalation_id: str, instructor_id: str) -> dict:
        with self.store.lock():
            esc = self._escalation(escalation_id)
            if esc["status"] != ESC_CLAIMED:
                raise StageViolation(f"only a claimed escalation can be resolved, not {esc['status']}")
            self.store.commit(
                ev.ESCALATION_STATUS_CHANGED,
                {
                    "escalation_id": escalation_id,
                    "status": ESC_RESOLVED,
                    "actor_id": instructor_id,
                },
                self.clock.now_ms(),
            )
            return self._escalation(escalation_id)
