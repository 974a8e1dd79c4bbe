"""Shared test utilities: service construction and flow-driving helpers."""

from __future__ import annotations

from soctutor.attack import BASELINE_DOCS, FILLER_APPROACH, FILLER_ATTEMPTS, FILLER_CONCEPT_PAD
from soctutor.config import Config
from soctutor.ids import ManualClock
from soctutor.service import TutorService, build_service

START_MS = 1_700_000_000_000  # 2023-11-14T22:13:20Z

INTAKE_TEXTS = (FILLER_APPROACH, FILLER_ATTEMPTS, FILLER_CONCEPT_PAD)

PASSWORD = "correct-horse-10"


def make_config(tmp_path, **overrides) -> Config:
    base = dict(
        data_dir=str(tmp_path / "soc-data"),
        fsync=False,
        mode="mock",
    )
    base.update(overrides)
    return Config(**base)


def make_service(tmp_path, clock=None, **overrides) -> TutorService:
    return build_service(
        make_config(tmp_path, **overrides), clock=clock or ManualClock(START_MS)
    )


def ingest_fixture_corpus(service: TutorService) -> dict:
    return service.ingest_documents(BASELINE_DOCS)


def register_student(service: TutorService, handle: str = "ada") -> dict:
    return service.auth.register(handle, PASSWORD)


def start_ready_conversation(service: TutorService, account: dict) -> str:
    """A conversation walked through all three intake stages."""
    conv = service.start_conversation(account)
    for text in INTAKE_TEXTS:
        service.submit_intake(account, conv["id"], text)
    return conv["id"]


def run_one_feedback(service: TutorService, account: dict, body: dict | None = None) -> dict:
    conv_id = start_ready_conversation(service, account)
    return service.run_query(account, conv_id, body or {})
