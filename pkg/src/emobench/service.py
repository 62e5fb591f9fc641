"""HTTP annotation service: serves chunks and audio, records SAM ratings and
A/B qualification responses in an append-only event log.

All mutation goes through a single locked log appender; every read view
(progress, export) is a pure function of the log prefix, so replaying the log
after a crash reproduces identical snapshots byte for byte.
"""

from __future__ import annotations

import io
import json
import os
import threading
import wave
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, PlainTextResponse, Response
from pydantic import BaseModel

from .core import AudioChunk, CorpusManifest, load_manifest, read_wav
from .labeling import RATINGS_HEADER, ab_test_score, utc_now

SAM_SCALE = {
    "min": 1, "max": 9,
    "valence": {"low": "very negative", "high": "very positive"},
    "arousal": {"low": "very calm", "high": "very excited"},
    "dominance": {"low": "very weak", "high": "very strong"},
}

AB_PROMPTS = {
    "valence": "Which sample sounds more positive?",
    "arousal": "Which sample sounds more excited?",
    "dominance": "Which sample sounds stronger?",
}


class ServiceError(Exception):
    def __init__(self, message: str, status_code: int = 400):
        super().__init__(message)
        self.status_code = status_code


@dataclass(frozen=True)
class AbPair:
    pair_id: str
    dimension: str
    a: str  # audio reference (path relative to key file, or chunk id)
    b: str
    correct: str  # "a" | "b"


@dataclass
class ServiceConfig:
    manifest_path: str
    audio_dir: str
    log_path: str
    ab_key_path: Optional[str] = None
    pass_threshold: float = 0.6
    seed: int = 0
    listen_host: str = "127.0.0.1"
    listen_port: int = 8000
    ui_dir: Optional[str] = None

    ENV_PREFIX = "EMOBENCH_"

    @classmethod
    def load(cls, path: str | Path) -> "ServiceConfig":
        """Read the JSON config file; EMOBENCH_* environment variables override."""
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        cfg = cls(**doc)
        for name in ("manifest_path", "audio_dir", "log_path", "ab_key_path",
                     "pass_threshold", "seed", "listen_host", "listen_port", "ui_dir"):
            env = os.environ.get(cls.ENV_PREFIX + name.upper())
            if env is not None:
                cur = getattr(cfg, name)
                if isinstance(cur, int) and not isinstance(cur, bool):
                    env = int(env)
                elif isinstance(cur, float):
                    env = float(env)
                setattr(cfg, name, env)
        return cfg


def load_ab_key(path: str | Path) -> list[AbPair]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    pairs = [AbPair(pair_id=p["pair_id"], dimension=p["dimension"],
                    a=p["a"], b=p["b"], correct=p["correct"]) for p in doc["pairs"]]
    ids = [p.pair_id for p in pairs]
    if len(set(ids)) != len(ids):
        raise ServiceError("duplicate pair_id in A/B key")
    return pairs


class EventLog:
    """Append-only JSONL event log with strictly increasing sequence numbers."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._seq = 0
        if self.path.exists():
            with self.path.open("r", encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        self._seq = json.loads(line)["seq"]

    def append(self, event: dict) -> dict:
        with self._lock:
            self._seq += 1
            event = {"seq": self._seq, "ts": utc_now(), **event}
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(event) + "\n")
                fh.flush()
                os.fsync(fh.fileno())
            return event

    def read_all(self) -> list[dict]:
        if not self.path.exists():
            return []
        events = []
        with self.path.open("r", encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    events.append(json.loads(line))
        return events


@dataclass
class SessionState:
    annotator_id: str
    assignment: list[str]
    qualification: str = "untested"  # untested | passed | flagged
    ratings: dict[str, tuple[int, int, int, str]] = field(default_factory=dict)
    ab_responses: dict[str, str] = field(default_factory=dict)
    ab_scores: Optional[dict[str, int]] = None

    @property
    def cursor(self) -> int:
        for i, cid in enumerate(self.assignment):
            if cid not in self.ratings:
                return i
        return len(self.assignment)


class AnnotationService:
    """Pure state machine over the event log; endpoint handlers call into this."""

    def __init__(self, config: ServiceConfig):
        self.config = config
        self.manifest: CorpusManifest = load_manifest(config.manifest_path)
        self.chunk_index: dict[str, AudioChunk] = {c.id: c for c in self.manifest.chunks}
        self.ab_pairs: list[AbPair] = (
            load_ab_key(config.ab_key_path) if config.ab_key_path else [])
        self.log = EventLog(config.log_path)
        self.sessions: dict[str, SessionState] = {}
        self._mutate = threading.Lock()
        self._audio_cache: dict[str, bytes] = {}
        for event in self.log.read_all():
            self._apply(event)

    # -- event application (replay-safe, no side effects) --

    def _apply(self, event: dict) -> None:
        kind = event["type"]
        if kind == "session-opened":
            self.sessions[event["annotator"]] = SessionState(
                annotator_id=event["annotator"], assignment=list(event["assignment"]))
        elif kind == "rating-submitted":
            s = self.sessions[event["annotator"]]
            s.ratings[event["chunk_id"]] = (
                event["valence"], event["arousal"], event["dominance"], event["ts"])
        elif kind == "abtest-response":
            self.sessions[event["annotator"]].ab_responses[event["pair_id"]] = event["chosen"]
        elif kind == "qualification-set":
            s = self.sessions[event["annotator"]]
            s.qualification = event["status"]
            s.ab_scores = event.get("scores")
        elif kind == "session-closed":
            pass
        else:
            raise ServiceError(f"unknown event type {kind!r} in log", 500)

    def _append(self, event: dict) -> None:
        self._apply(self.log.append(event))

    # -- sessions and ratings --

    def _assignment(self, annotator_id: str) -> list[str]:
        ids = sorted(self.chunk_index)
        rng = np.random.default_rng(
            [self.config.seed, zlib.crc32(annotator_id.encode())])
        rng.shuffle(ids)
        return ids

    def open_session(self, annotator_id: str) -> SessionState:
        with self._mutate:
            if annotator_id not in self.sessions:
                self._append({"type": "session-opened", "annotator": annotator_id,
                              "assignment": self._assignment(annotator_id)})
                if not self.ab_pairs:
                    self._append({
                        "type": "qualification-set", "annotator": annotator_id,
                        "status": "passed",
                        "warning": "no A/B key configured; qualification auto-passed"})
            return self.sessions[annotator_id]

    def next_item(self, annotator_id: str) -> dict:
        session = self.open_session(annotator_id)
        if session.qualification != "passed":
            raise ServiceError(
                f"annotator {annotator_id} has qualification status "
                f"{session.qualification!r}; complete the A/B test first", 403)
        cursor = session.cursor
        if cursor >= len(session.assignment):
            return {"done": True, "rated": len(session.assignment),
                    "total": len(session.assignment)}
        cid = session.assignment[cursor]
        chunk = self.chunk_index[cid]
        return {
            "done": False,
            "chunk_id": cid,
            "audio_url": f"/audio/{cid}",
            "duration": chunk.duration,
            "transcript": chunk.transcript,
            "position": cursor,
            "total": len(session.assignment),
            "sam_scale": SAM_SCALE,
        }

    def submit_rating(self, annotator_id: str, chunk_id: str,
                      valence: int, arousal: int, dominance: int) -> dict:
        for name, v in (("valence", valence), ("arousal", arousal), ("dominance", dominance)):
            if not isinstance(v, int) or not 1 <= v <= 9:
                raise ServiceError(f"{name} value {v!r} outside 1..9", 422)
        with self._mutate:
            session = self.sessions.get(annotator_id)
            if session is None:
                raise ServiceError(f"no session for annotator {annotator_id!r}", 404)
            if chunk_id not in session.assignment:
                raise ServiceError(f"chunk {chunk_id!r} not assigned to {annotator_id}", 404)
            self._append({"type": "rating-submitted", "annotator": annotator_id,
                          "chunk_id": chunk_id, "valence": valence,
                          "arousal": arousal, "dominance": dominance})
            return {"ok": True, "rated": len(session.ratings),
                    "total": len(session.assignment)}

    # -- A/B qualification --

    def next_ab_item(self, annotator_id: str) -> dict:
        if not self.ab_pairs:
            raise ServiceError("no A/B test configured", 404)
        session = self.open_session(annotator_id)
        for pair in self.ab_pairs:
            if pair.pair_id not in session.ab_responses:
                return {
                    "done": False,
                    "pair_id": pair.pair_id,
                    "dimension": pair.dimension,
                    "prompt": AB_PROMPTS[pair.dimension],
                    "a_url": f"/audio/abtest/{pair.pair_id}/a",
                    "b_url": f"/audio/abtest/{pair.pair_id}/b",
                    "position": len(session.ab_responses),
                    "total": len(self.ab_pairs),
                }
        return {"done": True, "scores": session.ab_scores,
                "status": session.qualification}

    def submit_ab_choice(self, annotator_id: str, pair_id: str, chosen: str) -> dict:
        if chosen not in ("a", "b"):
            raise ServiceError(f"chosen must be 'a' or 'b', got {chosen!r}", 422)
        known = {p.pair_id for p in self.ab_pairs}
        if pair_id not in known:
            raise ServiceError(f"unknown pair id {pair_id!r}", 404)
        with self._mutate:
            session = self.sessions.get(annotator_id)
            if session is None:
                raise ServiceError(f"no session for annotator {annotator_id!r}", 404)
            self._append({"type": "abtest-response", "annotator": annotator_id,
                          "pair_id": pair_id, "chosen": chosen})
            if len(session.ab_responses) == len(self.ab_pairs):
                scores = self._score_abtest(session)
                status = ("passed"
                          if all(f >= self.config.pass_threshold for f, _ in scores.values())
                          else "flagged")
                self._append({"type": "qualification-set", "annotator": annotator_id,
                              "status": status,
                              "scores": {d: pct for d, (_, pct) in scores.items()}})
                return {"ok": True, "done": True, "status": status,
                        "scores": {d: pct for d, (_, pct) in scores.items()}}
            return {"ok": True, "done": False,
                    "answered": len(session.ab_responses), "total": len(self.ab_pairs)}

    def _score_abtest(self, session: SessionState) -> dict[str, tuple[float, int]]:
        scores = {}
        for dim in ("valence", "arousal", "dominance"):
            pairs = [p for p in self.ab_pairs if p.dimension == dim]
            if not pairs:
                continue
            key = [(p.pair_id, p.correct) for p in pairs]
            responses = [(p.pair_id, session.ab_responses[p.pair_id]) for p in pairs]
            scores[dim] = ab_test_score(responses, key)
        return scores

    # -- read views --

    def progress(self) -> dict:
        out = {}
        for annot, session in sorted(self.sessions.items()):
            out[annot] = {
                "rated": len(session.ratings),
                "total": len(session.assignment),
                "qualification": session.qualification,
                "ab_scores": session.ab_scores,
            }
        return {"annotators": out, "n_chunks": len(self.chunk_index)}

    def export_snapshot(self) -> str:
        """Latest-wins ratings as CSV text; byte-identical for the same log prefix."""
        with self._mutate:
            rows = []
            for annot in sorted(self.sessions):
                session = self.sessions[annot]
                for cid in sorted(session.ratings):
                    v, a, d, ts = session.ratings[cid]
                    for dim, sam in (("valence", v), ("arousal", a), ("dominance", d)):
                        rows.append(f"{annot},{cid},{dim},{sam},{ts}")
        return ",".join(RATINGS_HEADER) + "\n" + "".join(r + "\n" for r in rows)

    # -- audio --

    def chunk_wav_bytes(self, chunk_id: str) -> bytes:
        cached = self._audio_cache.get(chunk_id)
        if cached is not None:
            return cached
        chunk = self.chunk_index.get(chunk_id)
        if chunk is None:
            raise ServiceError(f"unknown chunk {chunk_id!r}", 404)
        ref = self.manifest.recording_ref(chunk.recording_id)
        wav_path = Path(self.config.audio_dir) / ref.path
        rec = read_wav(wav_path, recording_id=ref.id, speaker=ref.speaker)
        lo = int(chunk.start * rec.sample_rate)
        hi = int(chunk.end * rec.sample_rate)
        buf = io.BytesIO()
        with wave.open(buf, "wb") as wf:
            wf.setnchannels(1)
            wf.setsampwidth(2)
            wf.setframerate(rec.sample_rate)
            wf.writeframes(rec.samples[lo:hi].astype("<i2").tobytes())
        data = buf.getvalue()
        self._audio_cache[chunk_id] = data
        return data

    def ab_audio_bytes(self, pair_id: str, side: str) -> bytes:
        pair = next((p for p in self.ab_pairs if p.pair_id == pair_id), None)
        if pair is None or side not in ("a", "b"):
            raise ServiceError(f"unknown A/B sample {pair_id}/{side}", 404)
        ref = pair.a if side == "a" else pair.b
        if ref in self.chunk_index:
            return self.chunk_wav_bytes(ref)
        path = Path(self.config.ab_key_path).parent / ref
        if not path.exists():
            raise ServiceError(f"A/B audio file missing: {ref}", 404)
        return path.read_bytes()


# request bodies and framework types live at module scope so FastAPI can
# resolve the endpoint type hints, which `from __future__ import annotations`
# turns into strings looked up in this module's globals
class RatingBody(BaseModel):
    annotator_id: str
    chunk_id: str
    valence: int
    arousal: int
    dominance: int


class AbResponseBody(BaseModel):
    annotator_id: str
    pair_id: str
    chosen: str


def create_app(service: AnnotationService):
    """FastAPI application wrapping the service; JSON request/response bodies."""
    app = FastAPI(title="emobench annotation service")

    @app.exception_handler(ServiceError)
    async def service_error_handler(_request, exc: ServiceError):
        return JSONResponse(status_code=exc.status_code, content={"error": str(exc)})

    @app.get("/api/session/{annotator_id}/next")
    def session_next(annotator_id: str):
        return service.next_item(annotator_id)

    @app.post("/api/ratings")
    def post_rating(body: RatingBody):
        return service.submit_rating(body.annotator_id, body.chunk_id,
                                     body.valence, body.arousal, body.dominance)

    @app.get("/api/abtest/{annotator_id}/next")
    def abtest_next(annotator_id: str):
        return service.next_ab_item(annotator_id)

    @app.post("/api/abtest/response")
    def abtest_response(body: AbResponseBody):
        return service.submit_ab_choice(body.annotator_id, body.pair_id, body.chosen)

    @app.get("/api/progress")
    def progress():
        return service.progress()

    @app.get("/api/export")
    def export():
        return PlainTextResponse(service.export_snapshot(), media_type="text/csv")

    def _range_response(data: bytes, request: Request) -> Response:
        range_header = request.headers.get("range")
        headers = {"Accept-Ranges": "bytes"}
        if range_header and range_header.startswith("bytes="):
            try:
                start_s, end_s = range_header[6:].split("-", 1)
                start = int(start_s) if start_s else 0
                end = int(end_s) if end_s else len(data) - 1
            except ValueError:
                raise ServiceError(f"bad Range header {range_header!r}", 416)
            end = min(end, len(data) - 1)
            if start > end or start >= len(data):
                raise ServiceError("requested range not satisfiable", 416)
            headers["Content-Range"] = f"bytes {start}-{end}/{len(data)}"
            return Response(content=data[start:end + 1], status_code=206,
                            media_type="audio/wav", headers=headers)
        return Response(content=data, media_type="audio/wav", headers=headers)

    @app.get("/audio/abtest/{pair_id}/{side}")
    def ab_audio(pair_id: str, side: str, request: Request):
        return _range_response(service.ab_audio_bytes(pair_id, side), request)

    @app.get("/audio/{chunk_id}")
    def audio(chunk_id: str, request: Request):
        return _range_response(service.chunk_wav_bytes(chunk_id), request)

    if service.config.ui_dir and Path(service.config.ui_dir).is_dir():
        from fastapi.staticfiles import StaticFiles
        app.mount("/", StaticFiles(directory=service.config.ui_dir, html=True), name="ui")

    return app
