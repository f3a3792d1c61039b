"""HTTP service for live interactive ranking sessions.

A session wraps one candidate pool and one learner configuration; a human
plays the role the simulated user plays in the harness. The loop runs over
three endpoints: fetch the pending pair, submit a label for exactly that
pair, read the refreshed ranking.

Sessions are event-sourced. Every session appends create/query/label
events to its own JSONL file, and because refits and pair selection are
deterministic given the seed, replaying the file reconstructs the exact
pre-crash state, pending pair and left/right placement included. The
acquisition stream is derived from the seed the same way the harness
derives it, so a scripted client feeding harness labels reproduces the
harness ranking bit for bit.
"""

import json
import threading
import uuid
from pathlib import Path
from typing import Optional

import numpy as np
from fastapi import FastAPI, Query
from fastapi.encoders import jsonable_encoder
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .domain import (
    CandidatePool,
    PreferenceRecord,
    PriorPredictions,
    TrainingSet,
    ValidationError,
    validate_pool,
)
from .acquisition import select_batch
from .harness import LearnerState, SessionConfig, session_streams
from .metrics import ranking_order

__all__ = ["SCHEMA_VERSION", "ApiError", "RankingService", "create_app"]

SCHEMA_VERSION = 1


class ApiError(Exception):
    """Service-level failure rendered as {code, message, details}."""

    def __init__(self, status: int, code: str, message: str, details=None):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message
        self.details = details


# ---------------------------------------------------------------------------
# Request bodies


class CandidateIn(BaseModel):
    id: Optional[int] = None
    features: list[float]
    text: Optional[str] = None


class ScoreIn(BaseModel):
    id: int
    score: float


class SessionConfigIn(BaseModel):
    learner: str = "gppl"
    strategy: str = "imp"
    warm_start: str = "none"
    max_interactions: int = 10
    batch_size: int = 1
    seed: int = 0
    inducing_count: Optional[int] = None


class CreateSessionIn(BaseModel):
    config: SessionConfigIn = SessionConfigIn()
    pool: Optional[list[CandidateIn]] = None
    pool_id: Optional[str] = None
    priors: Optional[list[ScoreIn]] = None


class LabelIn(BaseModel):
    a_id: int
    b_id: int
    label: int


# ---------------------------------------------------------------------------
# Live state


class _Live:
    """One in-memory session: single-writer, lock-serialised mutations."""

    def __init__(
        self,
        session_id: str,
        state: LearnerState,
        log_path: Optional[Path],
    ):
        self.session_id = session_id
        self.state = state
        self.log_path = log_path
        self.D = TrainingSet()
        self.pending: Optional[tuple] = None
        self.placement: Optional[dict] = None
        self.utilities = state.utilities
        self.status = "ready"
        self.lock = threading.Lock()
        placement_rng, acq_rng = session_streams(state.cfg.seed)
        self.placement_rng = placement_rng
        self.acq_rng = acq_rng

    @property
    def budget(self) -> int:
        return self.state.cfg.max_interactions

    @property
    def remaining(self) -> int:
        return self.budget - len(self.D)


class RankingService:
    """Owns the session registry, the event logs, and their replay."""

    def __init__(self, log_dir=None, pool_registry: Optional[dict] = None):
        self.log_dir = Path(log_dir) if log_dir is not None else None
        if self.log_dir is not None:
            self.log_dir.mkdir(parents=True, exist_ok=True)
        self.pools = dict(pool_registry or {})
        self.sessions: dict = {}
        self.registry_lock = threading.Lock()
        if self.log_dir is not None:
            for path in sorted(self.log_dir.glob("*.jsonl")):
                self._replay(path)

    # -- session setup ------------------------------------------------------

    def create_session(self, body: CreateSessionIn) -> dict:
        if (body.pool is None) == (body.pool_id is None):
            raise ApiError(422, "invalid-pool", "provide exactly one of pool or pool_id")
        if body.pool is not None:
            pool = _pool_from_candidates(body.pool)
        else:
            pool = self.pools.get(body.pool_id)
            if pool is None:
                raise ApiError(404, "unknown-pool", f"no pool registered as {body.pool_id!r}")
        priors = _priors_from_scores(body.priors, pool.size) if body.priors is not None else None

        session_id = uuid.uuid4().hex
        log_path = self.log_dir / f"{session_id}.jsonl" if self.log_dir is not None else None
        live = self._new_session(session_id, body.config, pool, priors, log_path)
        if log_path is not None:
            _append_event(
                live,
                {
                    "event": "create",
                    "schema_version": SCHEMA_VERSION,
                    "config": body.config.model_dump(),
                    "pool": {
                        "topic_id": pool.topic_id,
                        "candidates": [
                            {"id": c.id, "features": [float(x) for x in c.features], "text": c.text}
                            for c in pool.candidates
                        ],
                    },
                    "priors": [float(x) for x in priors.mu] if priors is not None else None,
                },
            )
        with self.registry_lock:
            self.sessions[session_id] = live
        return {
            "schema_version": SCHEMA_VERSION,
            "session_id": session_id,
            "status": live.status,
            "ranking": _ranking_payload(live),
        }

    def _new_session(
        self,
        session_id: str,
        config_in: SessionConfigIn,
        pool: CandidatePool,
        priors: Optional[PriorPredictions],
        log_path: Optional[Path],
    ) -> _Live:
        if config_in.batch_size != 1:
            raise ApiError(422, "invalid-config", "interactive sessions label one pair at a time")
        try:
            cfg = SessionConfig(
                learner=config_in.learner,
                strategy=config_in.strategy,
                warm_start=config_in.warm_start,
                max_interactions=config_in.max_interactions,
                batch_size=config_in.batch_size,
                seed=config_in.seed,
                inducing_count=config_in.inducing_count,
            )
            state = LearnerState(cfg, pool, priors)
        except ValidationError as exc:
            raise ApiError(422, "invalid-config", str(exc))
        state.refit(TrainingSet())
        return _Live(session_id, state, log_path)

    # -- the loop -----------------------------------------------------------

    def next_query(self, session_id: str) -> dict:
        live = self._get(session_id)
        with live.lock:
            if live.status == "complete":
                raise ApiError(409, "session-complete", "the interaction budget is spent")
            if live.pending is None:
                self._select_pending(live, log=True)
            a_id, b_id = live.pending
            cands = live.state.pool.candidates
            return {
                "schema_version": SCHEMA_VERSION,
                "a": {"id": a_id, "text": cands[a_id].text},
                "b": {"id": b_id, "text": cands[b_id].text},
                "remaining": live.remaining,
                "placement": dict(live.placement),
            }

    def _select_pending(self, live: _Live, log: bool) -> None:
        pairs = select_batch(
            live.state.cfg.strategy,
            live.state.acquisition_state(live.D),
            1,
            live.acq_rng,
            live.state.cfg.candidate_cap,
        )
        a_id, b_id = pairs[0]
        left, right = (a_id, b_id) if live.placement_rng.random() < 0.5 else (b_id, a_id)
        live.pending = (a_id, b_id)
        live.placement = {"left": left, "right": right}
        live.status = "awaiting_label"
        if log:
            _append_event(live, {"event": "query", "a_id": a_id, "b_id": b_id, "left": left, "right": right})

    def submit_label(self, session_id: str, body: LabelIn) -> dict:
        live = self._get(session_id)
        with live.lock:
            if live.status == "complete":
                raise ApiError(409, "session-complete", "the interaction budget is spent")
            if body.label not in (0, 1):
                raise ApiError(422, "invalid-label", "label must be 0 or 1")
            self._apply_label(live, body.a_id, body.b_id, body.label, log=True)
            return {
                "schema_version": SCHEMA_VERSION,
                "status": live.status,
                "progress": {"labels": len(live.D), "budget": live.budget},
                "ranking": _ranking_payload(live),
            }

    def _apply_label(self, live: _Live, a_id: int, b_id: int, label: int, log: bool) -> None:
        if live.pending is None or (a_id, b_id) != live.pending:
            raise ApiError(
                409,
                "stale-pair",
                "label does not match the pair awaiting a response",
                details={"pending": list(live.pending) if live.pending else None},
            )
        record = PreferenceRecord(a_id, b_id, label, source="human", iteration=len(live.D) + 1)
        live.D = live.D.extended([record])
        live.state.refit(live.D)
        live.utilities = live.state.utilities
        live.pending = None
        live.placement = None
        live.status = "complete" if len(live.D) >= live.budget else "ready"
        if log:
            _append_event(live, {"event": "label", "a_id": a_id, "b_id": b_id, "label": label})

    # -- reads --------------------------------------------------------------

    def ranking(self, session_id: str, top_k: Optional[int]) -> dict:
        live = self._get(session_id)
        return {
            "schema_version": SCHEMA_VERSION,
            "status": live.status,
            "ranking": _ranking_payload(live, top_k),
        }

    def info(self, session_id: str) -> dict:
        live = self._get(session_id)
        cfg = live.state.cfg
        return {
            "schema_version": SCHEMA_VERSION,
            "session_id": session_id,
            "status": live.status,
            "progress": {"labels": len(live.D), "budget": live.budget},
            "config": {
                "learner": cfg.learner,
                "strategy": cfg.strategy,
                "warm_start": cfg.warm_start,
                "max_interactions": cfg.max_interactions,
                "batch_size": cfg.batch_size,
                "seed": cfg.seed,
                "inducing_count": cfg.inducing_count,
            },
        }

    def _get(self, session_id: str) -> _Live:
        live = self.sessions.get(session_id)
        if live is None:
            raise ApiError(404, "unknown-session", f"no session {session_id!r}")
        return live

    # -- crash recovery -----------------------------------------------------

    def _replay(self, path: Path) -> None:
        with path.open("r", encoding="utf-8") as fh:
            events = [json.loads(line) for line in fh if line.strip()]
        if not events or events[0].get("event") != "create":
            raise ValidationError(f"{path.name}: session log must start with a create event")
        head = events[0]
        try:
            pool = _pool_from_candidates([CandidateIn(**c) for c in head["pool"]["candidates"]])
            priors = PriorPredictions(np.array(head["priors"]), origin="log") if head["priors"] else None
            live = self._new_session(
                path.stem, SessionConfigIn(**head["config"]), pool, priors, log_path=path
            )
        except ApiError as exc:
            raise ValidationError(f"{path.name}: logged session cannot be rebuilt: {exc.message}")
        for ev in events[1:]:
            if ev["event"] == "query":
                self._select_pending(live, log=False)
                got = {"a_id": live.pending[0], "b_id": live.pending[1], **live.placement}
                want = {k: ev[k] for k in ("a_id", "b_id", "left", "right")}
                if got != want:
                    raise ValidationError(f"{path.name}: logged query {want} replays as {got}")
            elif ev["event"] == "label":
                try:
                    self._apply_label(live, ev["a_id"], ev["b_id"], ev["label"], log=False)
                except ApiError as exc:
                    raise ValidationError(f"{path.name}: logged label does not apply: {exc.message}")
            else:
                raise ValidationError(f"{path.name}: unknown event {ev.get('event')!r}")
        with self.registry_lock:
            self.sessions[path.stem] = live


# ---------------------------------------------------------------------------
# Helpers


def _pool_from_candidates(candidates: list) -> CandidatePool:
    if len(candidates) < 2:
        raise ApiError(422, "invalid-pool", "pool must contain at least 2 candidates")
    ids = [c.id for c in candidates]
    with_id = [i for i in ids if i is not None]
    if with_id and len(with_id) != len(ids):
        raise ApiError(422, "invalid-pool", "either all candidates carry an id or none do")
    if with_id:
        if sorted(with_id) != list(range(len(ids))):
            raise ApiError(422, "invalid-pool", "ids must be unique and dense from 0")
        candidates = sorted(candidates, key=lambda c: c.id)
    dims = {len(c.features) for c in candidates}
    if len(dims) != 1 or dims == {0}:
        raise ApiError(422, "invalid-pool", "all candidates need the same nonzero feature dimension")
    feats = np.array([c.features for c in candidates], dtype=np.float64)
    if not np.all(np.isfinite(feats)):
        raise ApiError(422, "invalid-pool", "features must be finite")
    pool = CandidatePool.from_arrays("uploaded", feats, texts=[c.text for c in candidates])
    issues = validate_pool(pool)
    if issues:
        raise ApiError(
            422,
            "invalid-pool",
            "pool failed validation",
            details=[{"code": i.code, "message": i.message} for i in issues],
        )
    return pool


def _priors_from_scores(scores: list, n: int) -> PriorPredictions:
    seen: dict = {}
    for s in scores:
        if s.id in seen:
            raise ApiError(422, "invalid-priors", f"duplicate prior for id {s.id}")
        if not np.isfinite(s.score):
            raise ApiError(422, "invalid-priors", f"non-finite prior for id {s.id}")
        seen[s.id] = s.score
    if sorted(seen) != list(range(n)):
        raise ApiError(422, "invalid-priors", f"priors must cover ids 0..{n - 1} exactly")
    return PriorPredictions(np.array([seen[i] for i in range(n)]), origin="upload")


def _ranking_payload(live: _Live, top_k: Optional[int] = None) -> list:
    utilities = live.utilities
    order = ranking_order(utilities)
    if top_k is not None:
        order = order[: min(top_k, len(order))]
    cands = live.state.pool.candidates
    return [
        {"id": int(i), "utility": float(utilities[i]), "text": cands[i].text} for i in order
    ]


def _append_event(live: _Live, event: dict) -> None:
    if live.log_path is None:
        return
    with live.log_path.open("a", encoding="utf-8") as fh:
        fh.write(json.dumps(event) + "\n")


# ---------------------------------------------------------------------------
# App wiring


def create_app(log_dir=None, pool_registry: Optional[dict] = None) -> FastAPI:
    """Build the app; passing log_dir replays any session logs found there."""
    service = RankingService(log_dir=log_dir, pool_registry=pool_registry)
    app = FastAPI(title="prefrank ranking service")
    app.state.service = service

    @app.exception_handler(ApiError)
    async def api_error_handler(request, exc: ApiError):
        return JSONResponse(
            status_code=exc.status,
            content={"code": exc.code, "message": exc.message, "details": exc.details},
        )

    @app.exception_handler(RequestValidationError)
    async def validation_handler(request, exc: RequestValidationError):
        details = [
            {"loc": list(e.get("loc", ())), "msg": e.get("msg"), "type": e.get("type")}
            for e in exc.errors()
        ]
        return JSONResponse(
            status_code=422,
            content={
                "code": "invalid-request",
                "message": "request failed validation",
                "details": jsonable_encoder(details),
            },
        )

    @app.post("/v1/sessions", status_code=201)
    def create_session(body: CreateSessionIn):
        return service.create_session(body)

    @app.get("/v1/sessions/{session_id}/query")
    def next_query(session_id: str):
        return service.next_query(session_id)

    @app.post("/v1/sessions/{session_id}/labels")
    def submit_label(session_id: str, body: LabelIn):
        return service.submit_label(session_id, body)

    @app.get("/v1/sessions/{session_id}/ranking")
    def get_ranking(session_id: str, top_k: Optional[int] = Query(default=None, ge=1)):
        return service.ranking(session_id, top_k)

    @app.get("/v1/sessions/{session_id}")
    def get_info(session_id: str):
        return service.info(session_id)

    return app
