"""HTTP screening service.

Sessions hold a questionnaire and one response per phrase; each upload
runs decode -> resample -> features -> forward on the deployed model and
the report aggregates per-category counts and mean probabilities. State
is append-only JSON lines replayed at startup, so a crash loses at most
the in-flight response. Recordings are kept only for sessions that opt
into donation.
"""
from __future__ import annotations

import hashlib
import json
import os
import threading
import time
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from .audio_io import decode_wav_bytes, resample
from .dataset import MAX_DURATION_S, PIPELINE_RATE_HZ
from .errors import AudioDecodeError, PipelineError
from .features import PHRASE_FRAMES, extract_preset
from .nnet import Checkpoint, checkpoint_from_bytes, checkpoint_to_bytes, forward, parameter_count
from .phrases import PHRASE_IDS, PHRASES

_QUESTIONNAIRE_FIELDS = {
    "age": int,
    "sex": str,
    "vocal_organs_normal": bool,
    "consent": bool,
}


def _validate_questionnaire(doc) -> tuple[dict, list]:
    """Returns (cleaned questionnaire, field diagnostics)."""
    problems = []
    if not isinstance(doc, dict):
        return {}, ["body must be a JSON object"]
    clean = {}
    for name, kind in _QUESTIONNAIRE_FIELDS.items():
        if name not in doc:
            problems.append(f"{name}: missing")
            continue
        val = doc[name]
        # bool is an int subclass; reject it where an int is required
        if not isinstance(val, kind) or (kind is int and isinstance(val, bool)):
            problems.append(f"{name}: expected {kind.__name__}")
            continue
        clean[name] = val
    if isinstance(doc.get("donate", False), bool):
        clean["donate"] = bool(doc.get("donate", False))
    else:
        problems.append("donate: expected bool")
    if not problems:
        if clean["age"] < 0:
            problems.append("age: must be >= 0")
        if not clean["sex"].strip():
            problems.append("sex: must be non-empty")
        if clean["consent"] is not True:
            problems.append("consent: required")
    return clean, problems


@dataclass
class _Session:
    session_id: str
    questionnaire: dict
    created_at: str
    responses: dict = field(default_factory=dict)  # phrase_id -> stored row


class _Store:
    """Append-only JSONL session log; replayed into memory at startup."""

    def __init__(self, path: str | None):
        self.path = path
        self.lock = threading.Lock()
        self.sessions: dict[str, _Session] = {}
        if path and os.path.exists(path):
            with open(path, encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if line:
                        self._apply(json.loads(line))

    def _apply(self, event: dict) -> None:
        if event["kind"] == "session":
            self.sessions[event["session_id"]] = _Session(
                session_id=event["session_id"],
                questionnaire=event["questionnaire"],
                created_at=event["created_at"])
        elif event["kind"] == "response":
            sess = self.sessions.get(event["session_id"])
            if sess is not None:
                sess.responses[event["phrase_id"]] = event["row"]

    def append(self, event: dict) -> None:
        with self.lock:
            self._apply(event)
            if self.path:
                with open(self.path, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps(event, sort_keys=True) + "\n")
                    fh.flush()

    def get(self, session_id: str) -> _Session | None:
        with self.lock:
            return self.sessions.get(session_id)


def _model_info(ckpt: Checkpoint, digest: str) -> dict:
    meta = ckpt.training_meta
    return {
        "experiment": meta.get("experiment", ""),
        "fold": meta.get("fold"),
        "classes": list(ckpt.class_names) or [str(i) for i in range(ckpt.config.num_classes)],
        "input_shape": list(ckpt.config.input_shape),
        "parameters": parameter_count(ckpt.config),
        "hash": digest,
    }


def _report_for(sess: _Session, class_order: list) -> dict:
    rows = [sess.responses[pid] for pid in sorted(sess.responses)]
    names = list(class_order)
    for row in rows:
        for name in row["probabilities"]:
            if name not in names:
                names.append(name)
    categories = {}
    for name in names:
        probs = [row["probabilities"][name] for row in rows
                 if name in row["probabilities"]]
        categories[name] = {
            "count": sum(1 for row in rows if row["label"] == name),
            "mean_probability": float(np.mean(probs)) if probs else 0.0,
        }
    return {
        "session_id": sess.session_id,
        "questionnaire": {k: v for k, v in sess.questionnaire.items() if k != "donate"},
        "answered": len(rows),
        "categories": categories,
        "phrases": rows,
    }


def create_app(checkpoint: Checkpoint | None = None, store_path: str | None = None,
               donate_dir: str | None = None, static_dir: str | None = None) -> FastAPI:
    app = FastAPI(title="ssdkit screening service")
    store = _Store(store_path)
    # one mutable cell so (model, digest) swaps as a unit
    state = {"current": (None, "")}
    if checkpoint is not None:
        digest = hashlib.blake2b(
            checkpoint_to_bytes(checkpoint), digest_size=16).hexdigest()
        state["current"] = (checkpoint, digest)

    phrase_table = [
        {"phrase_id": p.phrase_id, "text": p.text,
         "romanization": p.romanization, "translation": p.translation}
        for p in PHRASES
    ]

    @app.post("/sessions")
    async def create_session(request: Request):
        try:
            doc = await request.json()
        except Exception:
            return JSONResponse({"detail": ["body must be valid JSON"]}, status_code=400)
        clean, problems = _validate_questionnaire(doc)
        if problems:
            return JSONResponse({"detail": problems}, status_code=400)
        session_id = uuid.uuid4().hex
        store.append({
            "kind": "session", "session_id": session_id, "questionnaire": clean,
            "created_at": datetime.now(timezone.utc).isoformat(),
        })
        return JSONResponse({"session_id": session_id}, status_code=201)

    @app.get("/phrases")
    async def phrases():
        return phrase_table

    @app.post("/sessions/{session_id}/responses/{phrase_id}")
    async def post_response(session_id: str, phrase_id: str, request: Request):
        sess = store.get(session_id)
        if sess is None:
            return JSONResponse({"detail": "unknown session"}, status_code=404)
        if phrase_id not in PHRASE_IDS:
            return JSONResponse({"detail": "unknown phrase"}, status_code=404)
        model, _ = state["current"]
        if model is None:
            return JSONResponse({"detail": "no model loaded"}, status_code=503)
        body = await request.body()
        try:
            clip = decode_wav_bytes(body)
        except AudioDecodeError as exc:
            return JSONResponse({"detail": f"undecodable audio: {exc}"}, status_code=422)
        if clip.duration_s >= MAX_DURATION_S:
            return JSONResponse(
                {"detail": f"clip is {clip.duration_s:.2f} s; must be under "
                           f"{MAX_DURATION_S:.1f} s"},
                status_code=422)
        if clip.sample_rate_hz != PIPELINE_RATE_HZ:
            clip = resample(clip, PIPELINE_RATE_HZ)
        preset = "phrase" if model.config.input_shape[1] == PHRASE_FRAMES else "character"
        t0 = time.perf_counter()
        fm = extract_preset(clip, preset, sample_id=phrase_id)
        probs = forward(model, fm.values[None])[0]
        latency_ms = (time.perf_counter() - t0) * 1000.0
        names = list(model.class_names) or [str(i) for i in range(len(probs))]
        row = {
            "phrase_id": phrase_id,
            "audio_received": True,
            "probabilities": {n: float(p) for n, p in zip(names, probs)},
            "label": names[int(np.argmax(probs))],
            "latency_ms": latency_ms,
        }
        if donate_dir and sess.questionnaire.get("donate"):
            take_dir = os.path.join(donate_dir, session_id)
            os.makedirs(take_dir, exist_ok=True)
            with open(os.path.join(take_dir, f"{phrase_id}.wav"), "wb") as fh:
                fh.write(body)
        store.append({"kind": "response", "session_id": session_id,
                      "phrase_id": phrase_id, "row": row})
        return row

    @app.get("/sessions/{session_id}/report")
    async def report(session_id: str):
        sess = store.get(session_id)
        if sess is None:
            return JSONResponse({"detail": "unknown session"}, status_code=404)
        model, _ = state["current"]
        order = list(model.class_names) if model is not None else []
        return _report_for(sess, order)

    @app.get("/model")
    async def model_info():
        model, digest = state["current"]
        if model is None:
            return JSONResponse({"detail": "no model loaded"}, status_code=503)
        return _model_info(model, digest)

    @app.post("/admin/model")
    async def swap_model(request: Request):
        body = await request.body()
        try:
            ckpt = checkpoint_from_bytes(body)
        except PipelineError as exc:
            return JSONResponse({"detail": f"bad checkpoint: {exc}"}, status_code=422)
        digest = hashlib.blake2b(body, digest_size=16).hexdigest()
        # single assignment swaps model and digest as a unit; in-flight
        # requests already hold a reference to the old weights
        state["current"] = (ckpt, digest)
        return _model_info(ckpt, digest)

    if static_dir:
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")
    return app
