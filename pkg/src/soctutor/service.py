"""Service facade: wires every subsystem into the end-to-end flows.

The HTTP layer, the CLI, and the adversarial harness all drive these same
methods, so there is exactly one code path from a student query through
quota, gate, retrieval, grounding, and the gateway.
"""

from __future__ import annotations

import re
import time

from . import events as ev
from . import gate as gatemod
from .analytics import compute_dashboard, export_research_log
from .auth import AuthService
from .config import Config
from .dialogue import (
    AUTHOR_STUDENT,
    AUTHOR_TUTOR,
    ConversationOps,
    LiveGateway,
    MockGateway,
    PromptTemplate,
    assemble_prompt,
    call_with_retry,
    new_turn,
)
from .errors import (
    EmptyDocument,
    EmptyIndex,
    EmptyText,
    Forbidden,
    GatewayError,
    SocError,
    StageViolation,
)
from .gate import GateConfig, PatternSource, StructuredQuery
from .ids import Clock, Role, new_id
from .metrics import default_registry
from .quota import REFUND_GATE_REJECT, REFUND_GATEWAY_ERROR, QuotaService
from .rag import (
    DOC_KINDS,
    CorpusIndex,
    chunk_document,
    embed_chunks,
    ground,
    validate_chunk_embeddings,
)
from .reflection import ReflectionOps, load_stopwords
from .store import STAGE_FEEDBACK, EventStore, INTAKE_STAGES
from .embedding import FallbackEmbedder

_TAG_RE = re.compile(r"^[a-z0-9]+(-[a-z0-9]+)*$")
MAX_TAG_LEN = 32


class QuotaExhausted(SocError):
    code = "quota_exhausted"
    http_status = 429


class GateRejected(SocError):
    code = "gate_reject"
    http_status = 422


class InvalidTag(SocError):
    code = "malformed_tag"
    http_status = 422


class TutorService:
    def __init__(self, config: Config, clock=None, gateway=None, store=None):
        self.config = config
        self.clock = clock or Clock()
        self.store = store or EventStore(config.data_dir, fsync=config.fsync)
        self.metrics = default_registry()
        self.embedder = FallbackEmbedder()
        self.index = CorpusIndex(self.store, self.embedder.dim)
        self.patterns = PatternSource(config.pattern_file)
        self.template = PromptTemplate.load(config.template_file)
        self.stopwords = load_stopwords(config.stopword_file)
        self.gate_config = GateConfig(relevance_threshold=config.relevance_threshold)
        self.auth = AuthService(self.store, self.clock, config.token_lifetime_ms)
        self.quota = QuotaService(
            self.store, self.clock, limit=config.daily_limit, tz=config.timezone
        )
        self.conversations = ConversationOps(self.store, self.clock)
        self.reflection = ReflectionOps(
            self.store, self.clock, self.template, self.stopwords
        )
        if gateway is not None:
            self.gateway = gateway
        elif config.mode == "live":
            self.gateway = LiveGateway(config.gateway_url, config.gateway_key)
        else:
            self.gateway = MockGateway()
        if config.bootstrap_admin:
            self._bootstrap_admin(config.bootstrap_admin)

    def _bootstrap_admin(self, spec: str) -> None:
        handle, _, password = spec.partition(":")
        if handle and password and handle not in self.store.state.handles:
            at = self.clock.now_ms()
            from .auth import hash_password

            account = {
                "id": new_id(at),
                "handle": handle,
                "role": Role.ADMIN.value,
                "credential_hash": hash_password(password),
                "created_at": at,
            }
            with self.store.lock():
                self.store.commit(ev.USER_REGISTERED, {"user": account}, at)

    def close(self) -> None:
        self.store.close()

    # --- helpers ----------------------------------------------------------

    def _owned_conversation(self, account: dict, conversation_id: str) -> dict:
        conv = self.conversations.get(conversation_id)
        if conv["student_id"] != account["id"]:
            raise Forbidden("not your conversation")
        return conv

    def _flag_injection(self, layer: str, severity: str, families: list[str], **context):
        at = self.clock.now_ms()
        payload = {"layer": layer, "severity": severity, "families": families}
        payload.update(context)
        self.store.commit(ev.INJECTION_FLAGGED, payload, at)
        self.metrics.inc(
            "soc_injection_flags_total", {"severity": severity, "layer": layer}
        )

    def maybe_snapshot(self) -> None:
        self.store.maybe_snapshot(self.config.snapshot_every_events)

    def conversation_snapshot(self, conv: dict) -> dict:
        out = {
            "id": conv["id"],
            "student_id": conv["student_id"],
            "stage": conv["stage"],
            "created_at": conv["created_at"],
            "turns": [
                {k: t[k] for k in ("id", "author", "text", "at") }
                | ({"stage": t["stage"]} if "stage" in t else {})
                for t in conv["turns"]
            ],
            "citations": conv["citations"],
        }
        if conv.get("reflection_id"):
            out["reflection"] = self.store.state.reflections[conv["reflection_id"]]
        if conv.get("escalation_id"):
            out["escalation_id"] = conv["escalation_id"]
        if conv["stage"] in (STAGE_FEEDBACK, "reflection"):
            out["reflection_prompts"] = list(self.template.reflection_prompts)
        return out

    # --- student flow -------------------------------------------------------

    def start_conversation(self, account: dict) -> dict:
        conv = self.conversations.start(account["id"])
        return self.conversation_snapshot(conv)

    def submit_intake(self, account: dict, conversation_id: str, text: str) -> dict:
        self._owned_conversation(account, conversation_id)
        conv = self.conversations.submit_intake(conversation_id, text)
        return {"conversation_id": conversation_id, "stage": conv["stage"]}

    def _query_from_body(self, conv: dict, body: dict) -> tuple[StructuredQuery, bool]:
        """Build the gated query: explicit body fields, or the assembled intake."""
        explicit = any(body.get(f) for f in ("approach", "attempts", "concept"))
        if explicit:
            q = StructuredQuery(
                approach=body.get("approach") or "",
                attempts=body.get("attempts") or "",
                concept=body.get("concept") or "",
                code_excerpt=body.get("code_excerpt"),
                assignment_tag=body.get("assignment_tag"),
            )
            return q, True
        q = self.conversations.assembled_intake_query(conv)
        if body.get("code_excerpt"):
            q = StructuredQuery(
                approach=q.approach,
                attempts=q.attempts,
                concept=q.concept,
                code_excerpt=body.get("code_excerpt"),
                assignment_tag=body.get("assignment_tag"),
            )
        return q, False

    def run_query(self, account: dict, conversation_id: str, body: dict | None = None) -> dict:
        """The full gated query flow: reserve, gate, retrieve, ground, generate.

        A reservation is taken first and refunded on any non-feedback outcome,
        so only queries that reach tutor feedback spend quota.
        """
        body = body or {}
        conv = self._owned_conversation(account, conversation_id)
        if conv["stage"] in INTAKE_STAGES:
            raise StageViolation("complete the three intake stages before querying")
        if conv["stage"] != STAGE_FEEDBACK:
            raise StageViolation(f"cannot query in stage {conv['stage']!r}")
        student_id = account["id"]

        decision = self.quota.reserve(student_id)
        if not decision.allowed:
            self.metrics.inc("soc_quota_rejections_total")
            self.metrics.inc("soc_queries_total", {"outcome": "quota_exhausted"})
            raise QuotaExhausted(
                "daily query limit reached",
                reasons=["QuotaExhausted"],
                remaining_quota=0,
            )
        reservation_id = decision.reservation_id

        try:
            query, explicit = self._query_from_body(conv, body)
            verdict = gatemod.gate(
                query, self.index, self.patterns.get(), self.embedder, self.gate_config
            )
        except (EmptyIndex, EmptyText, StageViolation):
            self.quota.refund(reservation_id, REFUND_GATE_REJECT)
            raise

        at = self.clock.now_ms()
        self.store.commit(
            ev.GATE_VERDICT_RECORDED,
            {
                "conversation_id": conversation_id,
                "outcome": verdict.outcome,
                "reasons": verdict.reasons,
                "relevance_score": verdict.relevance_score,
            },
            at,
        )
        flagged_families: list[str] = []
        worst = "none"
        for report in verdict.injection.values():
            if report.severity == "none":
                continue
            for family in report.matched_patterns:
                if family not in flagged_families:
                    flagged_families.append(family)
            if report.severity == "high" or worst == "none":
                worst = report.severity
        if flagged_families:
            self._flag_injection(
                "student-input", worst, flagged_families, conversation_id=conversation_id
            )

        if verdict.outcome == gatemod.REJECT:
            self.quota.refund(reservation_id, REFUND_GATE_REJECT)
            self.metrics.inc("soc_queries_total", {"outcome": "reject"})
            raise GateRejected(
                "query rejected by the gate",
                reasons=verdict.reasons,
                remaining_quota=self.quota.remaining(student_id),
            )

        effective = verdict.sanitized
        try:
            started = time.monotonic()
            query_vec = self.embedder.embed(effective.combined_text())
            hits = self.index.search_topk(
                query_vec, k=self.config.top_k, min_score=self.config.min_score
            )
            self.metrics.observe("soc_retrieval_seconds", time.monotonic() - started)
        except (EmptyIndex, EmptyText):
            self.quota.refund(reservation_id, REFUND_GATE_REJECT)
            raise

        def quarantine(hit, report):
            self._flag_injection(
                "grounding",
                report.severity,
                report.matched_patterns,
                conversation_id=conversation_id,
                chunk_id=hit.chunk_id,
                doc_title=hit.doc_title,
            )

        grounding = ground(
            hits,
            self.config.grounding_budget,
            lambda text: gatemod.scan_injection(text, self.patterns.get()),
            on_quarantined=quarantine,
        )

        history = [
            t
            for t in conv["turns"]
            if explicit or t.get("stage") not in INTAKE_STAGES
        ]
        request = assemble_prompt(
            self.template,
            grounding,
            effective,
            history,
            budget=self.config.token_budget,
            model=self.config.gateway_model,
            temperature=self.config.temperature,
            max_output_tokens=self.config.max_output_tokens,
        )

        try:
            response = call_with_retry(
                self.gateway,
                request,
                observe=lambda s: self.metrics.observe("soc_gateway_seconds", s),
            )
        except GatewayError:
            self.quota.refund(reservation_id, REFUND_GATEWAY_ERROR)
            self.metrics.inc("soc_queries_total", {"outcome": "gateway_error"})
            raise

        at = self.clock.now_ms()
        citations = grounding.citations
        with self.store.lock():
            if explicit:
                from .dialogue import format_query

                student_turn = new_turn(AUTHOR_STUDENT, format_query(effective), at)
                self.store.commit(
                    ev.TURN_APPENDED,
                    {"conversation_id": conversation_id, "turn": student_turn},
                    at,
                )
            tutor_turn = new_turn(AUTHOR_TUTOR, response.text, at)
            self.store.commit(
                ev.TURN_APPENDED,
                {
                    "conversation_id": conversation_id,
                    "turn": tutor_turn,
                    "citations": citations,
                    "template_version": request.template_version,
                    "usage": response.usage,
                },
                at,
            )
            self.quota.commit(reservation_id)
        self.metrics.inc("soc_queries_total", {"outcome": "pass"})
        return {
            "conversation_id": conversation_id,
            "stage": STAGE_FEEDBACK,
            "tutor_text": response.text,
            "citations": citations,
            "remaining_quota": self.quota.remaining(student_id),
            "gate": {
                "outcome": verdict.outcome,
                "reasons": verdict.reasons,
                "relevance_score": verdict.relevance_score,
            },
        }

    def reflection_prompts(self, account: dict, conversation_id: str) -> dict:
        conv = self._owned_conversation(account, conversation_id)
        prompts = self.reflection.prompt_reflection(conv)
        conv = self.conversations.get(conversation_id)
        return {"prompts": prompts, "stage": conv["stage"]}

    def submit_reflection(
        self,
        account: dict,
        conversation_id: str,
        learned: str = "",
        unclear: str = "",
        next_steps: str = "",
    ) -> dict:
        conv = self._owned_conversation(account, conversation_id)
        reflection = self.reflection.submit_reflection(conv, learned, unclear, next_steps)
        self.metrics.inc(
            "soc_reflections_total",
            {"substantive": "true" if reflection["substantive"] else "false"},
        )
        return {
            "reflection_id": reflection["id"],
            "score": reflection["score"],
            "substantive": reflection["substantive"],
            "stage": self.conversations.get(conversation_id)["stage"],
        }

    def escalate(self, account: dict, conversation_id: str, note: str = "") -> dict:
        conv = self._owned_conversation(account, conversation_id)
        escalation = self.reflection.escalate(conv, note)
        self.metrics.inc("soc_escalations_total", {"status": "open"})
        return self._escalation_summary(escalation)

    def quota_status(self, account: dict) -> dict:
        now = self.clock.now_ms()
        return {
            "remaining": self.quota.remaining(account["id"], now),
            "limit": self.config.daily_limit,
            "day": self.quota._day(now),
        }

    # --- instructor flow ----------------------------------------------------

    def _escalation_summary(self, esc: dict) -> dict:
        student = self.store.state.users.get(esc["student_id"], {})
        out = {
            "id": esc["id"],
            "conversation_id": esc["conversation_id"],
            "student_handle": student.get("handle", ""),
            "student_note": esc["student_note"],
            "status": esc["status"],
            "opened_at": esc["opened_at"],
        }
        for key in ("claimed_by", "claimed_at", "resolved_by", "resolved_at"):
            if key in esc:
                out[key] = esc[key]
        return out

    def instructor_queue(self, status_filter: str | None = None) -> list[dict]:
        return [self._escalation_summary(e) for e in self.reflection.queue(status_filter)]

    def escalation_detail(self, escalation_id: str) -> dict:
        esc = self.reflection._escalation(escalation_id)
        out = self._escalation_summary(esc)
        out["package"] = esc["package"]
        return out

    def claim_escalation(self, account: dict, escalation_id: str) -> dict:
        esc = self.reflection.claim(escalation_id, account["id"])
        self.metrics.inc("soc_escalations_total", {"status": "claimed"})
        return self._escalation_summary(esc)

    def resolve_escalation(self, account: dict, escalation_id: str) -> dict:
        esc = self.reflection.resolve(escalation_id, account["id"])
        self.metrics.inc("soc_escalations_total", {"status": "resolved"})
        return self._escalation_summary(esc)

    def apply_tag(self, account: dict, conversation_id: str, tag: str) -> dict:
        conv = self.conversations.get(conversation_id)
        if not _TAG_RE.match(tag) or len(tag) > MAX_TAG_LEN:
            raise InvalidTag(
                "tags are lowercase kebab-case, at most 32 characters"
            )
        with self.store.lock():
            existing = self.store.state.tags.get(conversation_id, {}).get(tag)
            if existing:
                return existing
            at = self.clock.now_ms()
            record = {
                "id": new_id(at),
                "conversation_id": conv["id"],
                "tag": tag,
                "applied_by": account["id"],
                "at": at,
            }
            self.store.commit(ev.TAG_APPLIED, {"tag": record}, at)
        return record

    def dashboard(self, from_ms: int | None = None, to_ms: int | None = None) -> dict:
        return compute_dashboard(self.store, from_ms, to_ms)

    # --- admin flow -----------------------------------------------------------

    def ingest_documents(self, documents: list[dict]) -> dict:
        """Chunk, embed, scan, and index each document; partial success allowed."""
        report = {"documents": [], "errors": []}
        for doc in documents:
            title = (doc.get("title") or "untitled").strip() or "untitled"
            kind = str(doc.get("kind") or "other").lower()
            if kind not in DOC_KINDS:
                kind = "other"
            body = doc.get("body") or ""
            at = self.clock.now_ms()
            try:
                chunks = chunk_document(body, at)
                embed_chunks(chunks, self.embedder)
                validate_chunk_embeddings(chunks, self.index.dim)
            except (EmptyDocument, EmptyText) as exc:
                report["errors"].append(
                    {"title": title, "error": exc.code, "status": 422}
                )
                continue
            # reusing a known doc_id replaces that document's chunks atomically
            doc_id = doc.get("doc_id") or new_id(at)
            scan = gatemod.scan_injection(body, self.patterns.get())
            with self.store.lock():
                self.store.commit(
                    ev.CHUNK_UPSERTED,
                    {
                        "doc": {
                            "id": doc_id,
                            "title": title,
                            "kind": kind,
                            "ingested_at": at,
                        },
                        "chunks": chunks,
                    },
                    at,
                )
                if scan.severity != "none":
                    self._flag_injection(
                        "corpus", scan.severity, scan.matched_patterns, doc_id=doc_id
                    )
            report["documents"].append(
                {
                    "doc_id": doc_id,
                    "title": title,
                    "kind": kind,
                    "chunks": len(chunks),
                    "injection_flags": scan.matched_patterns,
                }
            )
        return report

    def export_log(
        self,
        from_ms: int | None = None,
        to_ms: int | None = None,
        redact: bool = False,
    ) -> list[str]:
        return export_research_log(self.store, from_ms, to_ms, redact)


def build_service(config: Config | None = None, clock=None, gateway=None) -> TutorService:
    return TutorService(config or Config.from_env(), clock=clock, gateway=gateway)
