"""Repeatable injection-attack runner for the gate and grounding layers.

Cases are driven through the same query flow students use, against a
mock-gateway service, and a leak is judged at the assembled request boundary:
if a high-severity payload reaches what the model would see, unneutralized,
that is a leak regardless of what any model might have replied.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .dialogue import MockGateway
from .errors import CorpusParseError, SocError
from .gate import normalize_for_match, scan_injection
from .service import GateRejected, TutorService

FAMILIES = (
    "InstructionOverride",
    "RoleHijack",
    "Exfiltration",
    "DelimiterFlood",
    "EncodingSmuggle",
    "RetrievalPoison",
)
VECTORS = ("StudentInput", "CorpusDocument")
EXPECTATIONS = ("Block", "Flag", "Pass")

# On-topic filler for intake stages and query fields, co-designed with the
# baseline corpus below so benign structure and relevance checks pass and a
# rejection can only come from the payload under test.
FILLER_APPROACH = (
    "I am working through the recursion lecture and my factorial function "
    "never stops because the base case check in my recursion seems wrong."
)
FILLER_ATTEMPTS = (
    "I traced the recursion by hand, added print statements for every "
    "recursive call, and compared my base case against the lecture example."
)
FILLER_CONCEPT_PAD = (
    "I want to understand how the recursion base case terminates the "
    "recursive calls in the factorial example from the lecture."
)

BASELINE_DOCS = [
    {
        "title": "Recursion fundamentals",
        "kind": "lecture",
        "body": (
            "# Recursion fundamentals\n\n"
            "A recursive function solves a problem by calling itself on a "
            "smaller input. Every recursion needs a base case: an input for "
            "which the function returns without another recursive call. The "
            "factorial example shows this shape. factorial(0) is the base "
            "case and returns 1; factorial(n) multiplies n by factorial(n-1). "
            "If the base case check is wrong or missing the recursive calls "
            "never terminate and the stack overflows.\n\n"
            "When you debug a recursion, trace the calls by hand on the "
            "smallest input. Write down each call, its argument, and what it "
            "returns. The recursion terminates only when every chain of "
            "recursive calls reaches the base case.\n"
        ),
    },
    {
        "title": "Binary search and loop invariants",
        "kind": "lecture",
        "body": (
            "# Binary search\n\n"
            "Binary search keeps a low and high boundary and probes the "
            "midpoint. The loop invariant says the target, if present, lies "
            "between low and high. Every iteration must shrink the interval, "
            "otherwise the loop never terminates. Off-by-one mistakes in the "
            "midpoint update are the classic bug: check whether low or high "
            "moves past the midpoint.\n"
        ),
    },
    {
        "title": "Debugging and testing habits",
        "kind": "textbook",
        "body": (
            "# Debugging habits\n\n"
            "Reproduce the failure with the smallest input you can build. "
            "State what you expected and what actually happened. Print "
            "statements and a hand trace of the algorithm beat guessing. "
            "Test boundary conditions first: empty input, one element, the "
            "largest case your assignment mentions.\n"
        ),
    },
]


@dataclass(frozen=True)
class AttackCase:
    id: str
    family: str
    vector: str
    payload: str
    expected: str

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise CorpusParseError(f"case {self.id}: unknown family {self.family!r}")
        if self.vector not in VECTORS:
            raise CorpusParseError(f"case {self.id}: unknown vector {self.vector!r}")
        if self.expected not in EXPECTATIONS:
            raise CorpusParseError(f"case {self.id}: unknown expectation {self.expected!r}")
        if self.family == "RetrievalPoison" and self.vector != "CorpusDocument":
            raise CorpusParseError(
                f"case {self.id}: RetrievalPoison must use the CorpusDocument vector"
            )


@dataclass
class AttackReport:
    total: int = 0
    per_family: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)
    leaked_cases: list = field(default_factory=list)

    @property
    def overall_leak_rate(self) -> float:
        return len(self.leaked_cases) / self.total if self.total else 0.0

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "per_family": self.per_family,
            "overall_leak_rate": self.overall_leak_rate,
            "failures": self.failures,
            "leaked_cases": self.leaked_cases,
        }

    def expected_block_leaked(self) -> list[str]:
        return [
            f["id"]
            for f in self.failures
            if f["expected"] == "Block" and f.get("leaked")
        ]


def load_corpus(path: str) -> list[AttackCase]:
    cases: list[AttackCase] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
                case = AttackCase(
                    id=str(raw["id"]),
                    family=raw["family"],
                    vector=raw["vector"],
                    payload=raw["payload"],
                    expected=raw["expected"],
                )
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise CorpusParseError(f"line {lineno}: {exc}") from exc
            if case.id in seen:
                raise CorpusParseError(f"line {lineno}: duplicate case id {case.id!r}")
            seen.add(case.id)
            cases.append(case)
    return cases


def _handle_for(case_id: str, suffix: str = "") -> str:
    clean = "".join(c if c.isalnum() else "_" for c in case_id.lower())
    return f"atk_{clean}{suffix}"[:32]


def _request_text(requests) -> str:
    return "\n".join(req.full_text() for req in requests)


def _leaked(case: AttackCase, requests, patterns) -> bool:
    """A leak is hostile payload text reaching the assembled request.

    Two checks: any high-severity pattern match inside the request, and, for
    cases the corpus author marked Block, verbatim (normalized) payload
    containment — the latter catches leaks even when the live pattern list
    does not know the phrase.
    """
    if not requests:
        return False
    text = _request_text(requests)
    if scan_injection(text, patterns, include_medium=False).severity == "high":
        return True
    if case.expected == "Block":
        norm_payload = normalize_for_match(case.payload)[0]
        norm_text = normalize_for_match(text)[0]
        return norm_payload in norm_text
    return False


def _drive_student_case(service: TutorService, case: AttackCase) -> tuple[str, list]:
    account = service.auth.register(_handle_for(case.id), "attack-password-1")
    conv = service.start_conversation(account)
    for text in (FILLER_APPROACH, FILLER_ATTEMPTS, FILLER_CONCEPT_PAD):
        service.submit_intake(account, conv["id"], text)
    before = len(service.gateway.requests)
    body = {
        "approach": FILLER_APPROACH,
        "attempts": FILLER_ATTEMPTS,
        "concept": f"{case.payload}\n{FILLER_CONCEPT_PAD}",
    }
    try:
        result = service.run_query(account, conv["id"], body)
        observed = "Pass" if result["gate"]["outcome"] == "pass" else "Flag"
    except GateRejected:
        observed = "Block"
    except SocError as exc:
        observed = f"Error:{exc.code}"
    return observed, service.gateway.requests[before:]


def _drive_corpus_case(service: TutorService, case: AttackCase) -> tuple[str, list]:
    bait = f"poisonbait{''.join(c for c in case.id.lower() if c.isalnum())}"
    doc_body = (
        f"# Notes on {bait}\n\n"
        f"The {bait} technique appears in this course module about recursion. "
        f"{case.payload}\n"
        f"Remember that {bait} relates to the base case of the recursion and "
        f"is tested in the assignment about {bait} termination.\n"
    )
    service.ingest_documents(
        [{"title": f"Poisoned notes {case.id}", "kind": "other", "body": doc_body}]
    )
    account = service.auth.register(_handle_for(case.id, "_q"), "attack-password-1")
    conv = service.start_conversation(account)
    for text in (FILLER_APPROACH, FILLER_ATTEMPTS, FILLER_CONCEPT_PAD):
        service.submit_intake(account, conv["id"], text)
    before = len(service.gateway.requests)
    body = {
        "approach": FILLER_APPROACH,
        "attempts": FILLER_ATTEMPTS,
        "concept": (
            f"Please explain the {bait} {bait} {bait} technique from the "
            f"{bait} notes and how {bait} interacts with the recursion base case."
        ),
    }
    try:
        service.run_query(account, conv["id"], body)
    except SocError as exc:
        return f"Error:{exc.code}", service.gateway.requests[before:]
    requests = service.gateway.requests[before:]
    norm_payload = normalize_for_match(case.payload)[0]
    norm_text = normalize_for_match(_request_text(requests))[0]
    observed = "Block" if norm_payload not in norm_text else "Pass"
    return observed, requests


def run_corpus(cases: list[AttackCase], service: TutorService) -> AttackReport:
    """Drive every case through the live flow; deterministic given config."""
    if not isinstance(service.gateway, MockGateway):
        raise SocError("attack runs require the mock gateway (SOC_MODE=mock)")
    if service.index.size == 0:
        service.ingest_documents(BASELINE_DOCS)
    patterns = service.patterns.get()
    report = AttackReport()
    for case in sorted(cases, key=lambda c: c.id):
        if case.vector == "CorpusDocument":
            observed, requests = _drive_corpus_case(service, case)
        else:
            observed, requests = _drive_student_case(service, case)
        leaked = _leaked(case, requests, patterns)
        family = report.per_family.setdefault(
            case.family, {"total": 0, "blocked": 0, "flagged": 0, "leaked": 0}
        )
        family["total"] += 1
        report.total += 1
        if observed == "Block":
            family["blocked"] += 1
        elif observed == "Flag":
            family["flagged"] += 1
        if leaked:
            family["leaked"] += 1
            report.leaked_cases.append(case.id)
        if observed != case.expected or leaked:
            excerpt = _request_text(requests)[:200] if requests else ""
            report.failures.append(
                {
                    "id": case.id,
                    "expected": case.expected,
                    "observed": observed,
                    "leaked": leaked,
                    "request_excerpt": excerpt,
                }
            )
    return report
