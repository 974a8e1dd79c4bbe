"""Query gate: structure, relevance, solution-seeking, and injection checks.

Nothing a student types reaches the model without passing here first. The
injection scanner matches on a normalization of the input (NFKC, casefold,
homoglyphs folded, whitespace and zero-width characters dropped) while
keeping a map back to original offsets, so "i g n o r e previous
instructions" is caught and flagged spans can be stripped from the original
text exactly.
"""

from __future__ import annotations

import os
import re
import unicodedata
from dataclasses import dataclass, field, replace

from .errors import EmptyIndex

# Verdict reason codes.
MISSING_FIELD = "MissingField"
TOO_SHORT = "TooShort"
CODE_TOO_LONG = "CodeTooLong"
OFF_TOPIC = "OffTopic"
SOLUTION_SEEKING = "SolutionSeeking"
INJECTION_HIGH = "InjectionHigh"
INJECTION_MEDIUM = "InjectionMedium"

REJECT_CODES = frozenset(
    {MISSING_FIELD, TOO_SHORT, CODE_TOO_LONG, OFF_TOPIC, SOLUTION_SEEKING, INJECTION_HIGH}
)

PASS = "pass"
REJECT = "reject"
FLAG_AND_STRIP = "flag_and_strip"

MANDATORY_FIELDS = ("approach", "attempts", "concept")

# Request verbs that, combined with a hollow attempts field, mark an intake
# as solution-seeking even without a listed phrase.
IMPERATIVE_VERBS = frozenset(
    {"write", "give", "solve", "provide", "make", "send", "complete", "finish", "answer", "fix"}
)

ZERO_WIDTH = frozenset(
    "​‌‍‎‏⁠­﻿᠎"
    "‪‫‬‭‮⁦⁧⁨⁩"
)

# Common confusable substitutions for ASCII letters (Cyrillic/Greek).
HOMOGLYPHS = {
    "а": "a", "е": "e", "о": "o", "р": "p", "с": "c", "у": "y", "х": "x",
    "і": "i", "ј": "j", "ѕ": "s", "ԁ": "d", "һ": "h", "ԛ": "q", "ԝ": "w",
    "α": "a", "ο": "o", "ι": "i", "ν": "v", "ρ": "p", "τ": "t", "υ": "u",
    "ε": "e", "κ": "k", "η": "n",
}

_FENCE_RE = re.compile(r"```")
_LONG_RUN_RE = re.compile(r"[A-Za-z0-9]{200,}")

SEVERITY_NONE = "none"
SEVERITY_MEDIUM = "medium"
SEVERITY_HIGH = "high"

_SEVERITY_RANK = {SEVERITY_NONE: 0, SEVERITY_MEDIUM: 1, SEVERITY_HIGH: 2}


@dataclass(frozen=True)
class StructuredQuery:
    approach: str
    attempts: str
    concept: str
    code_excerpt: str | None = None
    assignment_tag: str | None = None

    def mandatory(self) -> dict[str, str]:
        return {"approach": self.approach, "attempts": self.attempts, "concept": self.concept}

    def combined_text(self) -> str:
        return " ".join((self.approach, self.attempts, self.concept))


@dataclass(frozen=True)
class PatternMatch:
    family: str
    severity: str
    start: int
    end: int


@dataclass
class InjectionReport:
    severity: str = SEVERITY_NONE
    matches: list[PatternMatch] = field(default_factory=list)

    @property
    def matched_patterns(self) -> list[str]:
        seen: list[str] = []
        for m in self.matches:
            if m.family not in seen:
                seen.append(m.family)
        return seen

    @property
    def spans(self) -> list[tuple[int, int]]:
        return [(m.start, m.end) for m in self.matches]

    def spans_at(self, severity: str) -> list[tuple[int, int]]:
        return [(m.start, m.end) for m in self.matches if m.severity == severity]


@dataclass
class GateVerdict:
    outcome: str
    reasons: list[str]
    sanitized: StructuredQuery
    relevance_score: float
    injection: dict[str, InjectionReport] = field(default_factory=dict)


@dataclass
class GateConfig:
    relevance_threshold: float = 0.15
    min_chars: int = 40
    min_words: int = 8
    max_code_lines: int = 200


# --- pattern file -----------------------------------------------------------


@dataclass(frozen=True)
class GatePattern:
    family: str
    severity: str  # high | medium | reject (reject = solution-seeking)
    text: str
    needle: str = ""  # normalized form, precomputed at load

    def __post_init__(self):
        if not self.needle:
            object.__setattr__(self, "needle", normalize_pattern(self.text))


class PatternSet:
    """Patterns from the `family<TAB>severity<TAB>pattern` data file."""

    def __init__(self, patterns: list[GatePattern]):
        self.patterns = patterns
        self.injection = [p for p in patterns if p.severity in (SEVERITY_HIGH, SEVERITY_MEDIUM)]
        self.solicit = [p for p in patterns if p.severity == "reject"]
        self.solicit_spaced = [normalize_spaced(p.text) for p in self.solicit]

    @classmethod
    def from_lines(cls, lines) -> "PatternSet":
        patterns = []
        for raw in lines:
            line = raw.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ValueError(f"bad pattern line (want 3 tab-separated fields): {line!r}")
            family, severity, text = (p.strip() for p in parts)
            if severity not in (SEVERITY_HIGH, SEVERITY_MEDIUM, "reject"):
                raise ValueError(f"bad severity {severity!r} in pattern line {line!r}")
            patterns.append(GatePattern(family, severity, text))
        return cls(patterns)

    @classmethod
    def load(cls, path: str) -> "PatternSet":
        with open(path, encoding="utf-8") as fh:
            return cls.from_lines(fh)


class PatternSource:
    """File-backed pattern set, re-read when the file changes on disk."""

    def __init__(self, path: str):
        self.path = path
        self._mtime = None
        self._set = None

    def get(self) -> PatternSet:
        mtime = os.stat(self.path).st_mtime_ns
        if self._set is None or mtime != self._mtime:
            self._set = PatternSet.load(self.path)
            self._mtime = mtime
        return self._set


# --- normalization ----------------------------------------------------------


def normalize_spaced(text: str) -> str:
    """Lowercase with whitespace runs collapsed to single spaces."""
    return " ".join(text.lower().split())


def normalize_for_match(text: str) -> tuple[str, list[int]]:
    """Casefolded, homoglyph-folded text with whitespace and zero-width
    characters removed, plus a map from normalized index to original offset."""
    chars: list[str] = []
    origins: list[int] = []
    for i, ch in enumerate(text):
        if ch in ZERO_WIDTH:
            continue
        for sub in unicodedata.normalize("NFKC", ch).casefold():
            sub = HOMOGLYPHS.get(sub, sub)
            if sub.isspace() or sub in ZERO_WIDTH:
                continue
            chars.append(sub)
            origins.append(i)
    return "".join(chars), origins


def normalize_pattern(pattern: str) -> str:
    return normalize_for_match(pattern)[0]


# --- scanning ---------------------------------------------------------------


def scan_injection(
    text: str,
    patterns: PatternSet,
    include_medium: bool = True,
) -> InjectionReport:
    """Scan one text for injection patterns and structural smells.

    High severity: listed instruction-override / role-hijack / exfiltration
    phrases, matched on the normalized form. Medium severity: three or more
    fenced blocks, or an unbroken alphanumeric run of 200+ characters.
    """
    report = InjectionReport()
    normalized, origins = normalize_for_match(text)
    for pattern in patterns.injection:
        if pattern.severity == SEVERITY_MEDIUM and not include_medium:
            continue
        needle = pattern.needle
        if not needle:
            continue
        start = 0
        while True:
            idx = normalized.find(needle, start)
            if idx < 0:
                break
            span_start = origins[idx]
            span_end = origins[idx + len(needle) - 1] + 1
            report.matches.append(
                PatternMatch(pattern.family, pattern.severity, span_start, span_end)
            )
            start = idx + 1
    if include_medium:
        fences = [m.start() for m in _FENCE_RE.finditer(text)]
        if len(fences) // 2 >= 3:
            for open_idx in range(0, len(fences) - 1, 2):
                start = fences[open_idx]
                end = fences[open_idx + 1] + 3
                report.matches.append(
                    PatternMatch("delimiter-flood", SEVERITY_MEDIUM, start, end)
                )
        for m in _LONG_RUN_RE.finditer(text):
            report.matches.append(
                PatternMatch("encoding-smuggle", SEVERITY_MEDIUM, m.start(), m.end())
            )
    for match in report.matches:
        if _SEVERITY_RANK[match.severity] > _SEVERITY_RANK[report.severity]:
            report.severity = match.severity
    return report


def strip_spans(text: str, spans: list[tuple[int, int]]) -> str:
    """Remove (start, end) spans from text, merging overlaps."""
    if not spans:
        return text
    ordered = sorted(spans)
    merged = [list(ordered[0])]
    for start, end in ordered[1:]:
        if start <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], end)
        else:
            merged.append([start, end])
    out = []
    cursor = 0
    for start, end in merged:
        out.append(text[cursor:start])
        cursor = max(cursor, end)
    out.append(text[cursor:])
    return "".join(out)


# --- individual checks ------------------------------------------------------


def validate_structure(q: StructuredQuery, cfg: GateConfig | None = None) -> list[str]:
    """Empty list iff every field rule holds; one reason code per violated rule."""
    cfg = cfg or GateConfig()
    reasons: list[str] = []
    for value in q.mandatory().values():
        normalized = normalize_spaced(value)
        if not normalized:
            if MISSING_FIELD not in reasons:
                reasons.append(MISSING_FIELD)
        elif len(normalized) < cfg.min_chars or len(normalized.split()) < cfg.min_words:
            if TOO_SHORT not in reasons:
                reasons.append(TOO_SHORT)
    if q.code_excerpt and len(q.code_excerpt.splitlines()) > cfg.max_code_lines:
        reasons.append(CODE_TOO_LONG)
    return reasons


def detect_solution_seeking(
    q: StructuredQuery, patterns: PatternSet, cfg: GateConfig | None = None
) -> bool:
    cfg = cfg or GateConfig()
    fields = list(q.mandatory().values())
    if q.code_excerpt:
        fields.append(q.code_excerpt)
    for value in fields:
        spaced = normalize_spaced(value)
        for needle in patterns.solicit_spaced:
            if needle in spaced:
                return True
    attempts = normalize_spaced(q.attempts)
    attempts_hollow = (
        len(attempts) < cfg.min_chars or len(attempts.split()) < cfg.min_words
    )
    if attempts_hollow:
        approach_tokens = set(normalize_spaced(q.approach).split())
        if approach_tokens & IMPERATIVE_VERBS:
            return True
    return False


def check_relevance(q: StructuredQuery, index, embedder) -> float:
    """Maximum cosine similarity between the query text and any indexed chunk."""
    if index.size == 0:
        raise EmptyIndex("no chunks indexed")
    vec = embedder.embed(q.combined_text())
    score = index.max_cosine(vec)
    return min(1.0, max(0.0, score))


# --- composite --------------------------------------------------------------


def gate(
    q: StructuredQuery,
    index,
    patterns: PatternSet,
    embedder,
    cfg: GateConfig | None = None,
) -> GateVerdict:
    """Full gate: structure, injection, solution-seeking, then relevance.

    Relevance is skipped when an earlier check already rejected, so no
    embedding work is spent on doomed input. Medium injection spans are
    stripped and the result re-scanned: if removal exposes a High pattern the
    query is rejected, never forwarded.
    """
    cfg = cfg or GateConfig()
    reasons = validate_structure(q, cfg)

    reports: dict[str, InjectionReport] = {}
    sanitized_fields: dict[str, str] = {}
    any_high = False
    any_medium = False
    for name, value in q.mandatory().items():
        report = scan_injection(value, patterns, include_medium=True)
        stripped = value
        if report.spans_at(SEVERITY_MEDIUM):
            any_medium = True
            stripped = strip_spans(value, report.spans_at(SEVERITY_MEDIUM))
            recheck = scan_injection(stripped, patterns, include_medium=False)
            if recheck.severity == SEVERITY_HIGH:
                report.matches.extend(recheck.matches)
                report.severity = SEVERITY_HIGH
        if report.severity == SEVERITY_HIGH:
            any_high = True
        reports[name] = report
        sanitized_fields[name] = stripped
    if q.code_excerpt is not None:
        # fenced code and long identifiers are legitimate here; only the
        # high-severity phrase families apply
        report = scan_injection(q.code_excerpt, patterns, include_medium=False)
        if report.severity == SEVERITY_HIGH:
            any_high = True
        reports["code_excerpt"] = report

    if any_high:
        reasons.append(INJECTION_HIGH)
    if any_medium:
        reasons.append(INJECTION_MEDIUM)

    sanitized = replace(
        q,
        approach=sanitized_fields["approach"],
        attempts=sanitized_fields["attempts"],
        concept=sanitized_fields["concept"],
    )

    if detect_solution_seeking(q, patterns, cfg):
        reasons.append(SOLUTION_SEEKING)

    relevance_score = 0.0
    rejected = any(r in REJECT_CODES for r in reasons)
    if not rejected:
        relevance_score = check_relevance(sanitized, index, embedder)
        if relevance_score < cfg.relevance_threshold:
            reasons.append(OFF_TOPIC)
            rejected = True

    if rejected:
        outcome = REJECT
    elif any_medium:
        outcome = FLAG_AND_STRIP
    else:
        outcome = PASS
    return GateVerdict(
        outcome=outcome,
        reasons=reasons,
        sanitized=sanitized,
        relevance_score=relevance_score,
        injection=reports,
    )
