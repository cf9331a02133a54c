"""Blinded rating service: sessions, grids, append-only response log, scoring.

Raters interact only with opaque payloads: cell ids plus image URLs that
are random hex, never provenance, class or filename hints.  The hidden
truth lives in plan.json on the owner's side of the store, separate from
the rater-facing grid payloads.

Persistence is a directory plus two append-only line-delimited logs
(sessions.jsonl, responses.jsonl).  One submitted 36-cell batch is one
log line, flushed and fsynced, so a crash can only ever lose the line
being written; replay drops a torn final line and the submission simply
never happened.
"""

from __future__ import annotations

import json
import os
import re
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path

from . import study as study_mod
from .imgproc import DiffusionConfig, denormalize, perona_malik, write_grayscale
from .study import (CELLS_PER_GRID, CLASS_CALL_INDICES, GRID_COLS, GRID_ROWS,
                    N_EXPERIMENTS, RaterResponse, SessionRecord, StudyPlan,
                    plan_from_dict, plan_to_dict, summarize)

DEFAULT_OWNER_TOKEN = "owner-token"
_IMAGE_NAME = re.compile(r"^[0-9a-f]{16}\.png$")


class ServiceError(Exception):
    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


class StoreCorrupt(Exception):
    pass


@dataclass
class Session:
    session_id: str
    rater_id: str
    state: str = "open"
    completed: set = field(default_factory=set)

    def to_payload(self) -> dict:
        done = sorted(self.completed)
        nxt = next((i for i in range(1, N_EXPERIMENTS + 1) if i not in self.completed),
                   None)
        return {
            "session_id": self.session_id,
            "state": self.state,
            "completed_experiments": done,
            "completed_count": len(done),
            "total_experiments": N_EXPERIMENTS,
            "next_experiment": nxt,
        }


def report_json_bytes(report: study_mod.ScoreReport) -> bytes:
    """Canonical report serialization; scoring online or offline must match
    byte for byte."""
    return (json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n").encode()


class StudyStore:
    """One study's assets, session state and append-only logs."""

    def __init__(self, root):
        self.root = Path(root)
        self._lock = threading.RLock()
        meta = json.loads((self.root / "study.json").read_text())
        self.study_id = meta["study_id"]
        self.owner_token = meta["owner_token"]
        self.plan: StudyPlan = plan_from_dict(
            json.loads((self.root / "plan.json").read_text()))
        self._grids = {
            g.experiment_index: json.loads(
                (self.root / "grids" / f"e{g.experiment_index:02d}.json").read_text())
            for g in self.plan.experiments
        }
        self.sessions: dict[str, Session] = {}
        # session -> experiment -> cell -> (realness, class_call)
        self.responses: dict[str, dict[int, dict[str, tuple]]] = {}
        self._replay()

    # -- creation ----------------------------------------------------------

    @classmethod
    def initialize(cls, root, study_id: str, plan: StudyPlan, patch_table: dict,
                   owner_token: str = DEFAULT_OWNER_TOKEN,
                   display_diffusion: DiffusionConfig | None = None) -> "StudyStore":
        """Write a fresh store: assets, blinded grid payloads, patch images."""
        root = Path(root)
        if (root / "study.json").exists():
            raise ValueError(f"store already exists at {root}")
        (root / "grids").mkdir(parents=True, exist_ok=True)
        (root / "images").mkdir(exist_ok=True)

        (root / "study.json").write_text(json.dumps({
            "study_id": study_id,
            "owner_token": owner_token,
        }, indent=2, sort_keys=True))
        (root / "plan.json").write_text(
            json.dumps(plan_to_dict(plan), indent=2, sort_keys=True))

        for index in range(1, N_EXPERIMENTS + 1):
            grid = plan.grid(index)
            payload = {
                "experiment_index": index,
                "rows": GRID_ROWS,
                "cols": GRID_COLS,
                "class_call_required": index in CLASS_CALL_INDICES,
                "cells": [{"cell_id": c.cell_id,
                           "image": f"/images/{c.patch_id}.png"}
                          for c in grid.cells],
            }
            (root / "grids" / f"e{index:02d}.json").write_text(
                json.dumps(payload, indent=2, sort_keys=True))

        for pid, patch in patch_table.items():
            pixels = patch.pixels
            if display_diffusion is not None:
                eight_bit = perona_malik(denormalize(pixels).astype(float),
                                         display_diffusion)
                img = denormalize(eight_bit / 127.5 - 1.0)
            else:
                img = denormalize(pixels)
            write_grayscale(root / "images" / f"{pid}.png", img)

        (root / "sessions.jsonl").touch()
        (root / "responses.jsonl").touch()
        return cls(root)

    # -- log replay ---------------------------------------------------------

    def _replay(self):
        for record in self._read_log("sessions.jsonl"):
            if record["event"] == "create":
                sid = record["session_id"]
                self.sessions[sid] = Session(sid, record["rater_id"])
                self.responses[sid] = {}
            elif record["event"] == "lock":
                self.sessions[record["session_id"]].state = "locked"
            else:
                raise StoreCorrupt(f"unknown session event {record['event']!r}")
        for record in self._read_log("responses.jsonl"):
            sid = record["session_id"]
            index = record["experiment_index"]
            if sid not in self.sessions:
                raise StoreCorrupt(f"responses for unknown session {sid}")
            batch = {r["cell_id"]: (r["realness"], r.get("class_call"))
                     for r in record["responses"]}
            if len(batch) != CELLS_PER_GRID:
                raise StoreCorrupt(
                    f"submission for experiment {index} has {len(batch)} cells")
            self.responses[sid][index] = batch
            self.sessions[sid].completed.add(index)

    def _read_log(self, name):
        path = self.root / name
        if not path.exists():
            return
        with open(path, "rb") as f:
            lines = f.read().split(b"\n")
        for pos, raw in enumerate(lines):
            if not raw:
                continue
            try:
                yield json.loads(raw)
            except json.JSONDecodeError:
                if pos == len(lines) - 1:
                    # torn final line from a crash mid-append: the batch was
                    # never acknowledged, so it is simply dropped
                    return
                raise StoreCorrupt(f"{name}: corrupt record at line {pos + 1}")

    def _append(self, name, record: dict):
        line = json.dumps(record, sort_keys=True) + "\n"
        with open(self.root / name, "ab") as f:
            f.write(line.encode())
            f.flush()
            os.fsync(f.fileno())

    # -- session lifecycle ---------------------------------------------------

    def create_session(self, rater_id: str) -> Session:
        if not rater_id or not isinstance(rater_id, str):
            raise ServiceError(400, "bad_rater", "rater_id must be a non-empty string")
        with self._lock:
            for s in self.sessions.values():
                if s.rater_id == rater_id:
                    raise ServiceError(
                        409, "duplicate_session",
                        f"rater {rater_id!r} already has a session for this study")
            sid = uuid.uuid4().hex
            self._append("sessions.jsonl", {
                "event": "create", "session_id": sid, "rater_id": rater_id,
                "ts": time.time(),
            })
            session = Session(sid, rater_id)
            self.sessions[sid] = session
            self.responses[sid] = {}
            return session

    def session(self, sid: str) -> Session:
        s = self.sessions.get(sid)
        if s is None:
            raise ServiceError(404, "no_session", f"unknown session {sid!r}")
        return s

    def grid_payload(self, sid: str, index: int) -> dict:
        s = self.session(sid)
        if s.state != "open":
            raise ServiceError(409, "session_locked",
                               f"session {sid} is locked")
        if index not in self._grids:
            raise ServiceError(404, "bad_experiment",
                               f"experiment index must be 1..{N_EXPERIMENTS}, "
                               f"got {index}")
        return self._grids[index]

    def submit(self, sid: str, index: int, responses: list) -> Session:
        with self._lock:
            s = self.session(sid)
            if s.state != "open":
                raise ServiceError(409, "session_locked",
                                   f"session {sid} is locked")
            if index not in self._grids:
                raise ServiceError(404, "bad_experiment",
                                   f"experiment index must be 1..{N_EXPERIMENTS}, "
                                   f"got {index}")
            if index in s.completed:
                raise ServiceError(409, "already_submitted",
                                   f"experiment {index} was already submitted")
            batch = self._validate_batch(sid, index, responses)
            self._append("responses.jsonl", {
                "event": "submit", "session_id": sid, "experiment_index": index,
                "responses": [{"cell_id": r.cell_id, "realness": r.realness,
                               "class_call": r.class_call}
                              for r in batch.values()],
                "ts": time.time(),
            })
            self.responses[sid][index] = {
                cid: (r.realness, r.class_call) for cid, r in batch.items()
            }
            s.completed.add(index)
            return s

    def _validate_batch(self, sid: str, index: int,
                        responses) -> dict[str, RaterResponse]:
        if not isinstance(responses, list):
            raise ServiceError(400, "bad_payload", "responses must be a list")
        expected = {c.cell_id for c in self.plan.grid(index).cells}
        wants_class = index in CLASS_CALL_INDICES
        now = time.time()
        batch: dict[str, RaterResponse] = {}
        for r in responses:
            cid = r.get("cell_id")
            if cid not in expected:
                raise ServiceError(400, "unknown_cell",
                                   f"unknown cell_id {cid!r} for experiment {index}")
            if cid in batch:
                raise ServiceError(400, "duplicate_cell",
                                   f"cell {cid} answered twice")
            realness = r.get("realness")
            if realness not in ("real", "generated"):
                raise ServiceError(400, "bad_realness",
                                   f"cell {cid}: realness must be 'real' or "
                                   f"'generated', got {realness!r}")
            class_call = r.get("class_call")
            if wants_class:
                if class_call not in ("benign", "malignant"):
                    raise ServiceError(
                        400, "missing_class_call",
                        f"cell {cid}: experiment {index} requires a "
                        f"benign/malignant call")
            elif class_call is not None:
                raise ServiceError(
                    400, "unexpected_class_call",
                    f"cell {cid}: experiment {index} takes no class call")
            batch[cid] = RaterResponse(sid, index, cid, realness, class_call, now)
        missing = sorted(expected - set(batch))
        if missing:
            raise ServiceError(400, "incomplete",
                               f"missing cells: {', '.join(missing)}")
        return batch

    def lock(self, sid: str) -> Session:
        with self._lock:
            s = self.session(sid)
            if s.state != "locked":
                self._append("sessions.jsonl", {
                    "event": "lock", "session_id": sid, "ts": time.time(),
                })
                s.state = "locked"
            return s

    # -- scoring -------------------------------------------------------------

    def session_records(self) -> list[SessionRecord]:
        return [
            SessionRecord(sid, s.rater_id, dict(self.responses[sid]))
            for sid, s in self.sessions.items()
        ]

    def score(self, force: bool = False) -> bytes:
        """Lock (with force) and score every session; persists report.json."""
        with self._lock:
            if not self.sessions:
                raise ServiceError(409, "no_sessions", "no sessions")
            open_sessions = [s for s in self.sessions.values() if s.state == "open"]
            if open_sessions and not force:
                raise ServiceError(
                    409, "open_sessions",
                    f"{len(open_sessions)} session(s) still open; "
                    f"lock them or force")
            for s in open_sessions:
                self.lock(s.session_id)
            report = summarize(self.plan, self.session_records())
            blob = report_json_bytes(report)
            (self.root / "report.json").write_bytes(blob)
            return blob

    def image_bytes(self, name: str) -> bytes:
        if not _IMAGE_NAME.match(name):
            raise ServiceError(404, "no_image", f"unknown image {name!r}")
        path = self.root / "images" / name
        if not path.is_file():
            raise ServiceError(404, "no_image", f"unknown image {name!r}")
        return path.read_bytes()


# --------------------------------------------------------------------------
# HTTP layer


def create_app(store: StudyStore):
    from fastapi import FastAPI, Header, Request
    from fastapi.middleware.cors import CORSMiddleware
    from fastapi.responses import JSONResponse, Response

    app = FastAPI(title="noduleforge rating service")
    # the rater UI may be served from another origin
    app.add_middleware(CORSMiddleware, allow_origins=["*"], allow_methods=["*"],
                       allow_headers=["*"])

    @app.exception_handler(ServiceError)
    async def _service_error(request: Request, exc: ServiceError):
        return JSONResponse(status_code=exc.status,
                            content={"error": {"code": exc.code,
                                               "message": exc.message}})

    @app.post("/studies/{study_id}/sessions", status_code=201)
    def create_session(study_id: str, body: dict):
        _check_study(study_id)
        session = store.create_session(body.get("rater_id"))
        return session.to_payload()

    @app.get("/sessions/{sid}")
    def get_session(sid: str):
        return store.session(sid).to_payload()

    @app.get("/sessions/{sid}/grids/{index}")
    def get_grid(sid: str, index: int):
        return store.grid_payload(sid, index)

    @app.post("/sessions/{sid}/grids/{index}/responses")
    def submit(sid: str, index: int, body: dict):
        session = store.submit(sid, index, body.get("responses"))
        payload = session.to_payload()
        payload["accepted"] = True
        return payload

    @app.post("/sessions/{sid}/lock")
    def lock(sid: str):
        return store.lock(sid).to_payload()

    @app.post("/studies/{study_id}/score")
    def score(study_id: str, body: dict | None = None,
              x_owner_token: str | None = Header(default=None)):
        _check_study(study_id)
        if x_owner_token != store.owner_token:
            raise ServiceError(403, "bad_token", "owner token required")
        force = bool((body or {}).get("force", False))
        blob = store.score(force=force)
        return Response(content=blob, media_type="application/json")

    @app.get("/images/{name}")
    def image(name: str):
        return Response(content=store.image_bytes(name), media_type="image/png")

    def _check_study(study_id: str):
        if study_id != store.study_id:
            raise ServiceError(404, "no_study", f"unknown study {study_id!r}")

    return app


def serve(store: StudyStore, host: str = "127.0.0.1", port: int = 8765):
    import uvicorn

    uvicorn.run(create_app(store), host=host, port=port, log_level="warning")
