"""Operator command line: serve, ingest, export, attack."""

from __future__ import annotations

import json
import sys
import tempfile
import threading
import time
from pathlib import Path

import click

from .attack import load_corpus, run_corpus
from .config import Config
from .ids import parse_ts_ms
from .service import build_service


@click.group()
def main():
    """Scaffolded tutoring service operations."""


@main.command()
def serve():
    """Run the HTTP service on SOC_BIND_ADDR."""
    import uvicorn

    from .api import create_app, create_metrics_app

    config = Config.from_env()
    service = build_service(config)
    app = create_app(service, static_dir=_static_dir())

    def snapshot_loop():
        while True:
            time.sleep(config.snapshot_interval_s)
            try:
                service.store.snapshot()
            except Exception as exc:  # noqa: BLE001 - keep the loop alive
                click.echo(f"snapshot failed: {exc}", err=True)

    threading.Thread(target=snapshot_loop, daemon=True).start()
    if config.metrics_addr and config.metrics_addr != config.bind_addr:
        # metrics can bind their own port so scrapes stay off the app address
        mhost, _, mport = config.metrics_addr.partition(":")

        def metrics_loop():
            uvicorn.run(
                create_metrics_app(service),
                host=mhost or "127.0.0.1",
                port=int(mport or 9090),
                log_level="warning",
            )

        threading.Thread(target=metrics_loop, daemon=True).start()
    host, _, port = config.bind_addr.partition(":")
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port or 8080))


def _static_dir() -> str | None:
    candidate = Path(__file__).resolve().parents[2] / "frontend" / "dist"
    return str(candidate) if candidate.is_dir() else None


@main.command()
@click.argument("directory", type=click.Path(exists=True, file_okay=False))
def ingest(directory):
    """Ingest every .md/.txt file under DIRECTORY into the course index."""
    config = Config.from_env()
    service = build_service(config)
    documents = []
    for path in sorted(Path(directory).rglob("*")):
        if path.suffix.lower() not in (".md", ".txt") or not path.is_file():
            continue
        documents.append(
            {
                "title": path.stem.replace("_", " "),
                "kind": "lecture" if "lecture" in path.name.lower() else "other",
                "body": path.read_text(encoding="utf-8"),
            }
        )
    if not documents:
        click.echo("no .md or .txt files found", err=True)
        sys.exit(1)
    report = service.ingest_documents(documents)
    service.store.snapshot()
    click.echo(json.dumps(report, indent=2))
    service.close()


@main.command()
@click.option("--from", "from_", default=None, help="ISO date/datetime lower bound")
@click.option("--to", default=None, help="ISO date/datetime upper bound (exclusive)")
@click.option("--redact", is_flag=True, default=False, help="pseudonymize handles")
@click.option("--out", type=click.Path(dir_okay=False), default=None)
def export(from_, to, redact, out):
    """Export journaled events as newline-delimited JSON."""
    config = Config.from_env()
    service = build_service(config)
    lines = service.export_log(
        parse_ts_ms(from_) if from_ else None,
        parse_ts_ms(to) if to else None,
        redact=redact,
    )
    text = "\n".join(lines) + "\n"
    if out:
        Path(out).write_text(text, encoding="utf-8")
        click.echo(f"wrote {len(lines) - 1} events to {out}")
    else:
        click.echo(text, nl=False)
    service.close()


@main.command()
@click.argument("corpus", type=click.Path(exists=True, dir_okay=False))
@click.option("--report", "report_path", type=click.Path(dir_okay=False), default=None)
def attack(corpus, report_path):
    """Run the injection attack corpus against a fresh mock-mode service.

    Exits nonzero when any expected-Block case leaks into an assembled
    gateway request.
    """
    cases = load_corpus(corpus)
    with tempfile.TemporaryDirectory(prefix="soc-attack-") as tmp:
        config = Config.from_env()
        config.mode = "mock"
        config.data_dir = tmp
        config.fsync = False
        service = build_service(config)
        report = run_corpus(cases, service)
        service.close()
    payload = json.dumps(report.to_dict(), indent=2, sort_keys=True)
    if report_path:
        Path(report_path).write_text(payload + "\n", encoding="utf-8")
        click.echo(f"report written to {report_path}")
    else:
        click.echo(payload)
    leaked = report.expected_block_leaked()
    if leaked:
        click.echo(f"LEAKED expected-Block cases: {', '.join(leaked)}", err=True)
        sys.exit(1)


if __name__ == "__main__":
    main()
