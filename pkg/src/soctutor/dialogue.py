"""Staged Socratic dialogue: intake state machine, prompt assembly, gateways.

A conversation walks intake_approach -> intake_attempts -> intake_concept ->
feedback -> reflection -> closed/escalated and never skips forward. Prompt
assembly is budget-aware: the system preamble and the current query are never
cut; history is compacted first, then grounding, then exemplars.
"""

from __future__ import annotations

import json
import re
import time
from dataclasses import dataclass, field

from . import events as ev
from .errors import (
    BudgetTooSmall,
    GatewayError,
    GatewayTimeout,
    StageViolation,
    TooShort,
    UnknownConversation,
)
from .gate import StructuredQuery, normalize_spaced
from .ids import new_id
from .rag import GroundingBlock, estimate_tokens
from .store import (
    INTAKE_STAGES,
    STAGE_FEEDBACK,
    STAGE_INTAKE_APPROACH,
    STAGE_INTAKE_ATTEMPTS,
    STAGE_INTAKE_CONCEPT,
)

AUTHOR_STUDENT = "student"
AUTHOR_TUTOR = "tutor"
AUTHOR_SYSTEM = "system"

_NEXT_STAGE = {
    STAGE_INTAKE_APPROACH: STAGE_INTAKE_ATTEMPTS,
    STAGE_INTAKE_ATTEMPTS: STAGE_INTAKE_CONCEPT,
    STAGE_INTAKE_CONCEPT: STAGE_FEEDBACK,
}

_STAGE_FIELD = {
    STAGE_INTAKE_APPROACH: "approach",
    STAGE_INTAKE_ATTEMPTS: "attempts",
    STAGE_INTAKE_CONCEPT: "concept",
}

_SUMMARY_WORDS = 12

MIN_FIELD_CHARS = 40
MIN_FIELD_WORDS = 8


@dataclass
class PromptTemplate:
    system_preamble: str
    exemplars: list[tuple[str, str]]
    version: str
    reflection_prompts: list[str]
    forward_markers: list[str]

    @classmethod
    def load(cls, path: str) -> "PromptTemplate":
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        exemplars = [tuple(pair) for pair in raw["exemplars"]]
        if len(exemplars) < 2:
            raise ValueError("prompt template needs at least two exemplars")
        return cls(
            system_preamble=raw["system_preamble"],
            exemplars=exemplars,
            version=raw["version"],
            reflection_prompts=list(raw["reflection_prompts"]),
            forward_markers=list(raw["forward_markers"]),
        )


@dataclass
class GatewayRequest:
    model: str
    messages: list[dict]
    temperature: float = 0.3
    max_output_tokens: int = 700
    template_version: str = ""

    def token_estimate(self) -> int:
        return sum(estimate_tokens(m["content"]) for m in self.messages)

    def full_text(self) -> str:
        return "\n".join(m["content"] for m in self.messages)


@dataclass
class GatewayResponse:
    text: str
    finish_reason: str = "stop"
    usage: dict = field(default_factory=dict)


def new_turn(author: str, text: str, at: int, stage: str | None = None) -> dict:
    turn = {
        "id": new_id(at),
        "author": author,
        "text": text,
        "token_estimate": estimate_tokens(text),
        "at": at,
    }
    if stage is not None:
        turn["stage"] = stage
    return turn


def check_intake_text(text: str) -> None:
    normalized = normalize_spaced(text)
    if len(normalized) < MIN_FIELD_CHARS or len(normalized.split()) < MIN_FIELD_WORDS:
        raise TooShort(
            f"intake text needs at least {MIN_FIELD_CHARS} characters and "
            f"{MIN_FIELD_WORDS} words"
        )


def format_query(q: StructuredQuery) -> str:
    parts = [
        f"Current approach and confusion:\n{q.approach}",
        f"Prior attempts:\n{q.attempts}",
        f"Concept needing clarification:\n{q.concept}",
    ]
    if q.code_excerpt:
        parts.append(f"Code excerpt:\n```\n{q.code_excerpt}\n```")
    return "\n\n".join(parts)


def _first_words(text: str, count: int = _SUMMARY_WORDS) -> str:
    return " ".join(text.split()[:count])


def compact_history(turns: list[dict], budget_share: int) -> list[dict]:
    """Shrink history under a token budget, oldest content first.

    While over budget, the oldest adjacent (student, tutor) pair collapses
    into one deterministic system summary; if no pair remains, the oldest
    turn is dropped outright. Chronological order is preserved.
    """
    result = [dict(t) for t in turns]

    def total() -> int:
        return sum(t["token_estimate"] for t in result)

    while result and total() > budget_share:
        pair_at = None
        for i in range(len(result) - 1):
            if (
                result[i]["author"] == AUTHOR_STUDENT
                and result[i + 1]["author"] == AUTHOR_TUTOR
            ):
                pair_at = i
                break
        if pair_at is None:
            result.pop(0)
            continue
        student, tutor = result[pair_at], result[pair_at + 1]
        summary_text = (
            f"Earlier: student asked about {_first_words(student['text'])}; "
            f"tutor responded regarding {_first_words(tutor['text'])}"
        )
        summary = {
            "id": student["id"],
            "author": AUTHOR_SYSTEM,
            "text": summary_text,
            "token_estimate": estimate_tokens(summary_text),
            "at": student["at"],
        }
        result[pair_at : pair_at + 2] = [summary]
    return result


def assemble_prompt(
    template: PromptTemplate,
    grounding: GroundingBlock,
    query: StructuredQuery,
    history: list[dict],
    budget: int,
    model: str = "tutor-default",
    temperature: float = 0.3,
    max_output_tokens: int = 700,
) -> GatewayRequest:
    """Build the gateway request under the context budget.

    Message order: system preamble, few-shot exemplars, grounding block,
    compacted history, current query. The preamble and query are never
    truncated; everything else absorbs the cuts, history first.
    """
    query_text = format_query(query)
    fixed = estimate_tokens(template.system_preamble) + estimate_tokens(query_text)
    if fixed > budget:
        raise BudgetTooSmall(
            f"budget {budget} cannot fit preamble and query ({fixed} tokens)"
        )
    remaining = budget - fixed

    exemplar_msgs: list[dict] = []
    for student_text, tutor_text in template.exemplars:
        exemplar_msgs.append({"role": "user", "content": student_text})
        exemplar_msgs.append({"role": "assistant", "content": tutor_text})
    exemplar_cost = sum(estimate_tokens(m["content"]) for m in exemplar_msgs)
    while exemplar_msgs and exemplar_cost > remaining:
        exemplar_msgs = exemplar_msgs[:-2]
        exemplar_cost = sum(estimate_tokens(m["content"]) for m in exemplar_msgs)
    remaining -= exemplar_cost

    grounding_entries = list(grounding.entries)
    grounding_msg = None
    grounding_cost = 0
    while grounding_entries:
        text = "\n\n".join(e["text"] for e in grounding_entries)
        grounding_cost = estimate_tokens(text)
        if grounding_cost <= remaining:
            grounding_msg = {"role": "system", "content": text}
            break
        grounding_entries = grounding_entries[:-1]
        grounding_cost = 0
    remaining -= grounding_cost

    role_map = {AUTHOR_STUDENT: "user", AUTHOR_TUTOR: "assistant", AUTHOR_SYSTEM: "system"}
    history_msgs = [
        {"role": role_map[t["author"]], "content": t["text"]}
        for t in compact_history(history, remaining)
    ]

    messages = [{"role": "system", "content": template.system_preamble}]
    messages.extend(exemplar_msgs)
    if grounding_msg is not None:
        messages.append(grounding_msg)
    messages.extend(history_msgs)
    messages.append({"role": "user", "content": query_text})
    request = GatewayRequest(
        model=model,
        messages=messages,
        temperature=temperature,
        max_output_tokens=max_output_tokens,
        template_version=template.version,
    )
    assert request.token_estimate() <= budget
    return request


# --- gateways ---------------------------------------------------------------

_CONCEPT_RE = re.compile(r"Concept needing clarification:\n(.+?)(?:\n\n|$)", re.S)


class MockGateway:
    """Deterministic offline gateway; records every request for assertions."""

    def __init__(self):
        self.requests: list[GatewayRequest] = []
        self.fail_next = 0  # scripted transient failures

    def complete(self, request: GatewayRequest) -> GatewayResponse:
        self.requests.append(request)
        if self.fail_next > 0:
            self.fail_next -= 1
            raise GatewayError("scripted transport failure", transient=True)
        concept = "that idea"
        match = _CONCEPT_RE.search(request.messages[-1]["content"])
        if match:
            concept = " ".join(match.group(1).split())
        text = (
            f'You said the sticking point is "{concept}". Before we go further, '
            f"walk through the smallest input you can think of by hand. "
            f"At which exact step does what you expect stop matching what happens?"
        )
        return GatewayResponse(
            text=text,
            finish_reason="stop",
            usage={
                "prompt_tokens": request.token_estimate(),
                "completion_tokens": estimate_tokens(text),
            },
        )


class LiveGateway:
    """JSON-over-HTTP chat-completion client."""

    def __init__(self, url: str, api_key: str = "", timeout_s: float = 60.0, client=None):
        import httpx

        self.url = url
        self.timeout_s = timeout_s
        self._headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        self._client = client or httpx.Client(timeout=timeout_s)

    def complete(self, request: GatewayRequest) -> GatewayResponse:
        import httpx

        body = {
            "model": request.model,
            "messages": request.messages,
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        }
        try:
            response = self._client.post(self.url, json=body, headers=self._headers)
        except httpx.TimeoutException as exc:
            raise GatewayTimeout(str(exc), transient=True) from exc
        except httpx.HTTPError as exc:
            raise GatewayError(str(exc), transient=True) from exc
        if response.status_code >= 500:
            raise GatewayError(f"gateway returned {response.status_code}", transient=True)
        if response.status_code >= 400:
            raise GatewayError(f"gateway returned {response.status_code}", transient=False)
        try:
            data = response.json()
            choice = data["choices"][0]
            return GatewayResponse(
                text=choice["message"]["content"],
                finish_reason=choice.get("finish_reason", "stop"),
                usage=data.get("usage", {}),
            )
        except (KeyError, IndexError, ValueError) as exc:
            raise GatewayError(f"malformed gateway response: {exc}", transient=False) from exc


def call_with_retry(gateway, request: GatewayRequest, observe=None) -> GatewayResponse:
    """One automatic retry on transient failure, then the error propagates."""
    attempts = 0
    while True:
        attempts += 1
        started = time.monotonic()
        try:
            response = gateway.complete(request)
            if observe is not None:
                observe(time.monotonic() - started)
            return response
        except GatewayError as exc:
            if observe is not None:
                observe(time.monotonic() - started)
            if attempts >= 2 or not exc.details.get("transient"):
                raise


# --- conversation operations -------------------------------------------------


class ConversationOps:
    """Intake state machine over the event store."""

    def __init__(self, store, clock):
        self.store = store
        self.clock = clock

    def get(self, conversation_id: str) -> dict:
        conv = self.store.state.conversations.get(conversation_id)
        if conv is None:
            raise UnknownConversation(f"no conversation {conversation_id}")
        return conv

    def start(self, student_id: str) -> dict:
        at = self.clock.now_ms()
        conv_id = new_id(at)
        self.store.commit(
            ev.CONVERSATION_STARTED,
            {
                "conversation": {
                    "id": conv_id,
                    "student_id": student_id,
                    "stage": STAGE_INTAKE_APPROACH,
                    "created_at": at,
                    "turns": [],
                    "citations": [],
                    "gate_flags": [],
                }
            },
            at,
        )
        return self.get(conv_id)

    def submit_intake(self, conversation_id: str, text: str) -> dict:
        at = self.clock.now_ms()
        with self.store.lock():
            conv = self.get(conversation_id)
            stage = conv["stage"]
            if stage not in INTAKE_STAGES:
                raise StageViolation(f"cannot submit intake in stage {stage!r}")
            check_intake_text(text)
            turn = new_turn(AUTHOR_STUDENT, text, at, stage=stage)
            self.store.commit(
                ev.TURN_APPENDED,
                {
                    "conversation_id": conversation_id,
                    "turn": turn,
                    "stage_after": _NEXT_STAGE[stage],
                },
                at,
            )
            return self.get(conversation_id)

    def assembled_intake_query(self, conv: dict) -> StructuredQuery:
        """The three intake turns, assembled into one structured query."""
        fields = {}
        for turn in conv["turns"]:
            stage = turn.get("stage")
            if stage in _STAGE_FIELD:
                fields[_STAGE_FIELD[stage]] = turn["text"]
        missing = [f for f in ("approach", "attempts", "concept") if f not in fields]
        if missing:
            raise StageViolation(f"intake incomplete, missing {missing}")
        return StructuredQuery(**fields)
