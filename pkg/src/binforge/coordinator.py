"""Coordinator: owns the task queue, leases work to registered workers,
ingests build payloads, and is the dataset's sole writer.

Queue state lives in the dataset's internal tables, so a restarted
coordinator resumes where it stopped. All transitions serialize through one
lock; leases expire after lease_ttl and are swept back to pending. The HTTP
surface speaks JSON (schema version field "v") on /register, /lease,
/status, /healthz, and multipart on /submit (outcome JSON + binary files).
"""

from __future__ import annotations

import email.parser
import email.policy
import json
import threading
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Callable, Optional, Sequence

from binforge.model import (
    BuildConfig,
    BuildOutcome,
    BuildStatus,
    ErrorCategory,
    FunctionRecord,
    LineRecord,
    RvaRecord,
    TaskState,
    Toolchain,
    validate_record,
)
from binforge.store import Dataset, DuplicateBinaryError
from binforge.worker import BinaryPayload, payload_to_records

WIRE_VERSION = 1

RETRYABLE_CATEGORIES = {ErrorCategory.TOOLCHAIN_NOT_FOUND, ErrorCategory.TIMEOUT}


class CoordinatorError(Exception):
    pass


class UnknownWorkerError(CoordinatorError):
    pass


class StaleLeaseError(CoordinatorError):
    """Lease expired or reassigned; the worker must discard its result."""


class PayloadHashError(CoordinatorError):
    pass


@dataclass
class LeasedTask:
    task_id: int
    attempt: int
    lease_expiry: float
    repo_id: int
    repo_url: str
    repo_commit: Optional[str]
    build_system: str
    license_id: Optional[str]
    config: BuildConfig

    def to_wire(self) -> dict:
        return {
            "task_id": self.task_id,
            "attempt": self.attempt,
            "lease_expiry": self.lease_expiry,
            "repo": {
                "repo_id": self.repo_id,
                "url": self.repo_url,
                "commit": self.repo_commit,
                "build_system": self.build_system,
                "license_id": self.license_id,
            },
            "config": {
                "toolchain": self.config.toolchain.value,
                "toolchain_version": self.config.toolchain_version,
                "opt_level": self.config.opt_level.value,
                "mode": self.config.mode.value,
                "arch": self.config.arch.value,
            },
        }


def config_from_wire(doc: dict) -> BuildConfig:
    from binforge.model import Arch, BuildMode, OptLevel

    return BuildConfig(
        Toolchain(doc["toolchain"]),
        doc["toolchain_version"],
        OptLevel(doc["opt_level"]),
        BuildMode(doc["mode"]),
        Arch(doc["arch"]),
    )


def bundles_to_wire(bundles) -> list[dict]:
    out = []
    for fn, rvas, lines in bundles:
        out.append(
            {
                "name": fn.name,
                "byte_hash": fn.byte_hash,
                "normalized_hash": fn.normalized_hash,
                "rvas": [[r.start_rva, r.end_rva] for r in rvas],
                "lines": [
                    [ln.source_path, ln.line_number, ln.line_text, ln.byte_address, ln.length]
                    for ln in lines
                ],
            }
        )
    return out


def bundles_from_wire(doc: list[dict]):
    bundles = []
    for entry in doc:
        fn = FunctionRecord(entry["name"], entry["byte_hash"], entry["normalized_hash"])
        rvas = [RvaRecord(s, e) for s, e in entry["rvas"]]
        lines = [
            LineRecord(path, line, addr, length, line_text=text)
            for path, line, text, addr, length in entry["lines"]
        ]
        bundles.append((fn, rvas, lines))
    return bundles


def outcome_to_wire(outcome: BuildOutcome) -> dict:
    return {
        "task_id": outcome.task_id,
        "status": outcome.status.value,
        "error_category": outcome.error_category.value if outcome.error_category else None,
        "raw_code": outcome.raw_code,
        "log_excerpt": outcome.log_excerpt,
    }


def outcome_from_wire(doc: dict) -> BuildOutcome:
    return BuildOutcome(
        task_id=doc["task_id"],
        status=BuildStatus(doc["status"]),
        error_category=ErrorCategory(doc["error_category"]) if doc.get("error_category") else None,
        raw_code=doc.get("raw_code"),
        log_excerpt=doc.get("log_excerpt", ""),
    )


class Coordinator:
    """Queue owner and sole dataset writer."""

    def __init__(
        self,
        dataset: Dataset,
        lease_ttl: float = 1800.0,
        max_attempts: int = 2,
        clock: Callable[[], float] = time.time,
    ):
        self.dataset = dataset
        self.lease_ttl = lease_ttl
        self.max_attempts = max_attempts
        self.clock = clock
        self._mu = threading.Lock()

    # -- workers ---------------------------------------------------------------

    def register_worker(self, worker_id: str, capabilities: dict[str, str]) -> None:
        with self._mu, self.dataset.conn as conn:
            conn.execute(
                "INSERT OR REPLACE INTO workers VALUES (?,?,?)",
                (
                    worker_id,
                    json.dumps(capabilities, sort_keys=True),
                    datetime.now(timezone.utc).isoformat(),
                ),
            )

    def _worker_known(self, worker_id: str) -> bool:
        row = self.dataset.conn.execute(
            "SELECT 1 FROM workers WHERE worker_id=?", (worker_id,)
        ).fetchone()
        return row is not None

    # -- queue -----------------------------------------------------------------

    def enqueue(self, repo_ids: Sequence[int], configs: Sequence[BuildConfig]) -> int:
        """One pending task per (repo, config) pair; existing pairs skipped."""
        for config in configs:
            self.dataset.ensure_config(config)
        inserted = 0
        with self._mu, self.dataset.conn as conn:
            for repo_id in repo_ids:
                for config in configs:
                    first = self.dataset._allocate_ids(1)
                    cursor = conn.execute(
                        "INSERT OR IGNORE INTO tasks"
                        " (task_id, repo_id, config_id, state, attempt)"
                        " VALUES (?,?,?,?,0)",
                        (first, repo_id, config.config_id, TaskState.PENDING.value),
                    )
                    inserted += cursor.rowcount
        return inserted

    def sweep_expired(self) -> int:
        """Return expired leases to pending (or a terminal state past the
        attempt budget); returns the number of swept tasks."""
        now = self.clock()
        with self._mu, self.dataset.conn as conn:
            rows = conn.execute(
                "SELECT task_id, attempt FROM tasks WHERE state=? AND lease_expiry < ?",
                (TaskState.LEASED.value, now),
            ).fetchall()
            for task_id, attempt in rows:
                attempt += 1
                state = (
                    TaskState.TIMEOUT.value
                    if attempt >= self.max_attempts
                    else TaskState.PENDING.value
                )
                conn.execute(
                    "UPDATE tasks SET state=?, attempt=?, lease_expiry=NULL, worker_id=NULL"
                    " WHERE task_id=?",
                    (state, attempt, task_id),
                )
            return len(rows)

    def lease(self, worker_id: str, capabilities: Sequence[str]) -> Optional[LeasedTask]:
        """Atomically hand the oldest compatible pending task to the worker."""
        if not self._worker_known(worker_id):
            raise UnknownWorkerError(f"worker {worker_id!r} is not registered")
        self.sweep_expired()
        toolchains = [t for t in capabilities if t in {tc.value for tc in Toolchain}]
        if not toolchains:
            return None
        now = self.clock()
        with self._mu, self.dataset.conn as conn:
            placeholders = ",".join("?" for _ in toolchains)
            row = conn.execute(
                f"""
                SELECT t.task_id, t.attempt, t.repo_id, t.config_id,
                       r.url, r.commit_hash, r.build_system, r.license_id
                FROM tasks t
                JOIN configs c ON c.config_id = t.config_id
                JOIN repos r ON r.repo_id = t.repo_id
                WHERE t.state = ? AND c.toolchain IN ({placeholders})
                ORDER BY t.task_id LIMIT 1
                """,
                (TaskState.PENDING.value, *toolchains),
            ).fetchone()
            if row is None:
                return None
            task_id, attempt, repo_id, config_id, url, commit, build_system, license_id = row
            expiry = now + self.lease_ttl
            conn.execute(
                "UPDATE tasks SET state=?, lease_expiry=?, worker_id=? WHERE task_id=?",
                (TaskState.LEASED.value, expiry, worker_id, task_id),
            )
        config = self.dataset.get_config(config_id)
        return LeasedTask(
            task_id=task_id,
            attempt=attempt,
            lease_expiry=expiry,
            repo_id=repo_id,
            repo_url=url,
            repo_commit=commit,
            build_system=build_system,
            license_id=license_id,
            config=config,
        )

    def submit(
        self,
        worker_id: str,
        task_id: int,
        outcome: BuildOutcome,
        payload: Sequence[BinaryPayload] = (),
        mutation_report_json: Optional[str] = None,
    ) -> int:
        """Ingest one task result; returns the number of binaries stored.

        Success payloads are written through the store, one transaction per
        binary; a payload item whose (repo, config, file_name) already exists
        is skipped, which makes duplicate delivery after lease churn safe.
        """
        violations = validate_record(outcome)
        if violations:
            raise CoordinatorError(f"invalid outcome: {violations}")
        with self._mu:
            conn = self.dataset.conn
            row = conn.execute(
                "SELECT state, worker_id, lease_expiry, repo_id, config_id"
                " FROM tasks WHERE task_id=?",
                (task_id,),
            ).fetchone()
            if row is None:
                raise CoordinatorError(f"unknown task {task_id}")
            state, lease_worker, lease_expiry, repo_id, config_id = row
            now = self.clock()
            if (
                state != TaskState.LEASED.value
                or lease_worker != worker_id
                or lease_expiry is None
                or lease_expiry < now
            ):
                raise StaleLeaseError(
                    f"task {task_id} is not leased to {worker_id!r} (state={state})"
                )

            stored = 0
            if outcome.status is BuildStatus.SUCCESS:
                repo = self.dataset.get_repo(repo_id)
                config = self.dataset.get_config(config_id)
                for item in payload:
                    from binforge.model import sha256_hex

                    if sha256_hex(item.data) != item.sha256:
                        raise PayloadHashError(
                            f"payload {item.file_name!r} hash mismatch"
                        )
                    if self.dataset.has_binary(repo_id, config_id, item.file_name):
                        continue
                    record, bundles, debug_artifact = payload_to_records(item, repo, config)
                    try:
                        self.dataset.insert_binary(record, item.data, bundles, debug_artifact)
                        stored += 1
                    except DuplicateBinaryError:
                        continue
                new_state, attempt_bump = TaskState.DONE.value, 0
            else:
                attempt_bump = 1
                attempt = conn.execute(
                    "SELECT attempt FROM tasks WHERE task_id=?", (task_id,)
                ).fetchone()[0] + 1
                retryable = outcome.error_category in RETRYABLE_CATEGORIES
                if retryable and attempt < self.max_attempts:
                    new_state = TaskState.PENDING.value
                elif outcome.status is BuildStatus.TIMEOUT:
                    new_state = TaskState.TIMEOUT.value
                else:
                    new_state = TaskState.FAILED.value

            with conn:
                conn.execute(
                    "UPDATE tasks SET state=?, attempt=attempt+?, lease_expiry=NULL,"
                    " worker_id=NULL WHERE task_id=?",
                    (new_state, attempt_bump, task_id),
                )
                conn.execute(
                    "INSERT INTO outcomes VALUES (?,?,?,?,?,?,?)",
                    (
                        task_id,
                        outcome.status.value,
                        outcome.error_category.value if outcome.error_category else None,
                        outcome.raw_code,
                        outcome.log_excerpt,
                        mutation_report_json,
                        datetime.now(timezone.utc).isoformat(),
                    ),
                )
            return stored

    # -- reporting ----------------------------------------------------------------

    def status(self) -> dict:
        """Consistent snapshot: per-state counts, per-category counts, and a
        per-config table of outcomes (configs as rows, categories as columns)."""
        with self._mu:
            conn = self.dataset.conn
            states = dict(
                conn.execute("SELECT state, COUNT(*) FROM tasks GROUP BY state").fetchall()
            )
            categories = dict(
                conn.execute(
                    "SELECT error_category, COUNT(*) FROM outcomes"
                    " WHERE error_category IS NOT NULL GROUP BY error_category"
                ).fetchall()
            )
            per_config: dict[str, dict] = {}
            rows = conn.execute(
                """
                SELECT c.toolchain, c.toolchain_version, c.opt_level, c.mode, c.arch,
                       t.state, o.error_category, COUNT(*)
                FROM tasks t
                JOIN configs c ON c.config_id = t.config_id
                LEFT JOIN outcomes o ON o.task_id = t.task_id
                GROUP BY c.config_id, t.state, o.error_category
                """
            ).fetchall()
            for toolchain, version, opt, mode, arch, state, category, count in rows:
                label = f"{toolchain}-{version} {opt}-{mode}-{arch}"
                entry = per_config.setdefault(
                    label, {"total": 0, "done": 0, "categories": {}}
                )
                entry["total"] += count
                if state == TaskState.DONE.value:
                    entry["done"] += count
                if category:
                    entry["categories"][category] = (
                        entry["categories"].get(category, 0) + count
                    )
            for entry in per_config.values():
                entry["success_rate"] = (
                    entry["done"] / entry["total"] if entry["total"] else 0.0
                )
            return {
                "states": states,
                "error_categories": categories,
                "per_config": per_config,
            }

    def pending_count(self) -> int:
        row = self.dataset.conn.execute(
            "SELECT COUNT(*) FROM tasks WHERE state IN (?, ?)",
            (TaskState.PENDING.value, TaskState.LEASED.value),
        ).fetchone()
        return row[0]

    def serve(self, host: str = "127.0.0.1", port: int = 0) -> "CoordinatorServer":
        return CoordinatorServer(self, host, port)


# -- HTTP layer -------------------------------------------------------------------------


def parse_multipart(body: bytes, content_type: str) -> dict[str, bytes]:
    """name -> raw bytes for each part of a multipart/form-data body."""
    header = f"Content-Type: {content_type}\r\n\r\n".encode()
    message = email.parser.BytesParser(policy=email.policy.HTTP).parsebytes(header + body)
    parts = {}
    for part in message.iter_parts():
        name = part.get_param("name", header="content-disposition")
        if name:
            payload = part.get_payload(decode=True)
            parts[name] = payload if payload is not None else b""
    return parts


class _Handler(BaseHTTPRequestHandler):
    coordinator: Coordinator  # injected by server factory
    protocol_version = "HTTP/1.1"

    def log_message(self, *args):  # quiet the default stderr chatter
        pass

    def _reply(self, code: int, doc: dict) -> None:
        data = json.dumps(doc).encode()
        self.send_response(code)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def _read_body(self) -> bytes:
        length = int(self.headers.get("Content-Length", "0"))
        return self.rfile.read(length)

    def do_GET(self):
        if self.path == "/healthz":
            self._reply(200, {"v": WIRE_VERSION, "status": "ok"})
        elif self.path == "/status":
            self._reply(200, {"v": WIRE_VERSION, **self.coordinator.status()})
        else:
            self._reply(404, {"v": WIRE_VERSION, "error": "not found"})

    def do_POST(self):
        try:
            if self.path == "/register":
                doc = json.loads(self._read_body())
                self.coordinator.register_worker(doc["worker_id"], doc.get("capabilities", {}))
                self._reply(200, {"v": WIRE_VERSION, "ok": True})
            elif self.path == "/lease":
                doc = json.loads(self._read_body())
                task = self.coordinator.lease(doc["worker_id"], doc.get("capabilities", []))
                self._reply(
                    200,
                    {"v": WIRE_VERSION, "task": task.to_wire() if task else None},
                )
            elif self.path == "/submit":
                self._handle_submit()
            else:
                self._reply(404, {"v": WIRE_VERSION, "error": "not found"})
        except UnknownWorkerError as exc:
            self._reply(403, {"v": WIRE_VERSION, "error": str(exc)})
        except StaleLeaseError as exc:
            self._reply(409, {"v": WIRE_VERSION, "error": str(exc)})
        except (PayloadHashError, KeyError, ValueError, json.JSONDecodeError) as exc:
            self._reply(400, {"v": WIRE_VERSION, "error": str(exc)})
        except CoordinatorError as exc:
            self._reply(400, {"v": WIRE_VERSION, "error": str(exc)})

    def _handle_submit(self):
        content_type = self.headers.get("Content-Type", "")
        body = self._read_body()
        if not content_type.startswith("multipart/"):
            self._reply(400, {"v": WIRE_VERSION, "error": "submit requires multipart"})
            return
        parts = parse_multipart(body, content_type)
        meta = json.loads(parts["meta"])
        outcome = outcome_from_wire(meta["outcome"])
        payload = []
        for i, item in enumerate(meta.get("binaries", [])):
            data = parts.get(f"bin{i}", b"")
            debug_doc = item.get("debug") or {}
            debug_data = parts.get(f"dbg{i}")
            payload.append(
                BinaryPayload(
                    file_name=item["file_name"],
                    data=data,
                    sha256=item["sha256"],
                    bundles=bundles_from_wire(item.get("functions", [])),
                    debug_kind=_debug_kind(debug_doc.get("kind")),
                    debug_sha256=debug_doc.get("sha256"),
                    debug_data=debug_data,
                )
            )
        stored = self.coordinator.submit(
            meta["worker_id"],
            meta["task_id"],
            outcome,
            payload,
            mutation_report_json=meta.get("mutation_report"),
        )
        self._reply(200, {"v": WIRE_VERSION, "ok": True, "stored": stored})


def _debug_kind(value):
    from binforge.model import DebugKind

    return DebugKind(value) if value else None


class CoordinatorServer:
    """ThreadingHTTPServer wrapper; serve_forever runs on a daemon thread."""

    def __init__(self, coordinator: Coordinator, host: str, port: int):
        handler = type("BoundHandler", (_Handler,), {"coordinator": coordinator})
        self.httpd = ThreadingHTTPServer((host, port), handler)
        self.thread: Optional[threading.Thread] = None

    @property
    def url(self) -> str:
        host, port = self.httpd.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> "CoordinatorServer":
        self.thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)
        self.thread.start()
        return self

    def stop(self) -> None:
        self.httpd.shutdown()
        self.httpd.server_close()
        if self.thread:
            self.thread.join(timeout=10)

    def serve_blocking(self) -> None:
        try:
            self.httpd.serve_forever()
        except KeyboardInterrupt:  # pragma: no cover - operator interrupt
            pass
        finally:
            self.httpd.server_close()
