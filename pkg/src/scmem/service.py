"""HTTP facade over sessions, turns, memory inspection, traces, and
document summarization jobs.

Turns are synchronous (the response returns only after memory write-back);
summarization runs as background jobs polled via /jobs/{id}. Sessions
persist under the data directory in the memory-core log format and are
lazily restored after a restart. One turn may be in flight per session;
a concurrent message is refused with a 409-class error.
"""

from __future__ import annotations

import json
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .agent import Ablation, Session
from .backends import GenerationBackend, HttpBackend, ScriptedBackend
from .controller import ControllerConfig
from .embedding import EmbeddingProvider, HashEmbedder, RemoteEmbedder
from .errors import BackendError, InputError, ScmError, SchemaError
from .memory import RetrievalConfig
from .prompts import PromptPack
from .summarize import SummarizeConfig, hierarchical_summarize
from .tokens import HeuristicTokenizer

DATA_DIR_VAR = "SCM_DATA_DIR"
BIND_ADDR_VAR = "SCM_BIND_ADDR"


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str, retryable: bool = False):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message
        self.retryable = retryable


class CreateSessionRequest(BaseModel):
    k: int | None = None
    recency_decay: float | None = None
    relevance_normalization: str | None = None
    summary_trigger_item_tokens: int | None = None
    summary_trigger_total_tokens: int | None = None
    context_budget_tokens: int | None = None
    ablation: str = "none"
    flash_uses_summary: bool = False
    backend: dict[str, Any] | None = None
    embedder: dict[str, Any] | None = None


class PostMessageRequest(BaseModel):
    observation: str


class SummarizeRequest(BaseModel):
    text: str
    block_token_budget: int | None = None
    merge_fanout: int | None = None
    memory_k: int | None = None


def _build_backend(spec: dict[str, Any] | None, default: GenerationBackend) -> GenerationBackend:
    if spec is None:
        return default
    kind = spec.get("type")
    if kind == "scripted":
        return ScriptedBackend(
            rules=spec.get("rules", ()),
            default=spec.get("default", ""),
            name=spec.get("name", "scripted"),
        )
    if kind == "http":
        return HttpBackend(
            base_url=spec["base_url"],
            model=spec.get("model", "default"),
            request_timeout=spec.get("request_timeout", 60.0),
        )
    raise InputError(f"unknown backend type {kind!r}")


def _build_embedder(spec: dict[str, Any] | None, default: EmbeddingProvider) -> EmbeddingProvider:
    if spec is None:
        return default
    kind = spec.get("type")
    if kind == "hash":
        return HashEmbedder(dimension=spec.get("dimension", 256))
    if kind == "remote":
        return RemoteEmbedder(
            base_url=spec["base_url"],
            model=spec.get("model", "default"),
            dimension=spec.get("dimension", 1536),
        )
    raise InputError(f"unknown embedder type {kind!r}")


@dataclass
class SessionEntry:
    session: Session
    meta: dict[str, Any]
    lock: threading.Lock = field(default_factory=threading.Lock)


@dataclass
class Job:
    job_id: str
    status: str = "pending"  # pending | running | done | failed
    final_summary: str | None = None
    tree: list[dict] | None = None
    error: str | None = None


class ServiceState:
    """Session registry + job store behind the HTTP handlers."""

    def __init__(
        self,
        data_dir: str | Path,
        default_backend: GenerationBackend | None = None,
        default_embedder: EmbeddingProvider | None = None,
        prompt_pack: PromptPack | None = None,
    ):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self.default_backend = default_backend or ScriptedBackend(default="Understood.")
        self.default_embedder = default_embedder or HashEmbedder()
        self.prompt_pack = prompt_pack or PromptPack.bundled()
        self.tokenizer = HeuristicTokenizer()
        self.sessions: dict[str, SessionEntry] = {}
        self.jobs: dict[str, Job] = {}
        self._registry_lock = threading.Lock()

    # -- sessions ------------------------------------------------------

    def _session_dir(self, session_id: str) -> Path:
        return self.data_dir / "sessions" / session_id

    def create_session(self, request: CreateSessionRequest) -> dict:
        session_id = uuid.uuid4().hex[:12]
        retrieval_kwargs = {
            key: value
            for key, value in (
                ("k", request.k),
                ("recency_decay", request.recency_decay),
                ("relevance_normalization", request.relevance_normalization),
            )
            if value is not None
        }
        controller_kwargs = {
            key: value
            for key, value in (
                ("summary_trigger_item_tokens", request.summary_trigger_item_tokens),
                ("summary_trigger_total_tokens", request.summary_trigger_total_tokens),
                ("context_budget_tokens", request.context_budget_tokens),
            )
            if value is not None
        }
        try:
            ablation = Ablation(request.ablation)
        except ValueError:
            raise InputError(f"unknown ablation {request.ablation!r}") from None
        backend = _build_backend(request.backend, self.default_backend)
        embedder = _build_embedder(request.embedder, self.default_embedder)
        meta = {
            "session_id": session_id,
            "created_at": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
            "backend": backend.name,
            "backend_spec": request.backend,
            "embedder_spec": request.embedder,
            "embedding_dim": embedder.dimension,
            "retrieval": retrieval_kwargs,
            "controller": controller_kwargs,
            "ablation": ablation.value,
            "flash_uses_summary": request.flash_uses_summary,
        }
        session_dir = self._session_dir(session_id)
        session_dir.mkdir(parents=True, exist_ok=True)
        session = Session.create(
            backend=backend,
            embedder=embedder,
            prompt_pack=self.prompt_pack,
            tokenizer=self.tokenizer,
            retrieval=RetrievalConfig(**retrieval_kwargs),
            controller=ControllerConfig(**controller_kwargs),
            ablation=ablation,
            session_id=session_id,
            persist_path=session_dir / "memory.jsonl",
            flash_uses_summary=request.flash_uses_summary,
        )
        (session_dir / "meta.json").write_text(
            json.dumps(meta, ensure_ascii=False, indent=2), encoding="utf-8"
        )
        with self._registry_lock:
            self.sessions[session_id] = SessionEntry(session=session, meta=meta)
        return meta

    def _restore_session(self, session_id: str) -> SessionEntry | None:
        session_dir = self._session_dir(session_id)
        meta_path = session_dir / "meta.json"
        if not meta_path.is_file():
            return None
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
        backend = _build_backend(meta.get("backend_spec"), self.default_backend)
        embedder = _build_embedder(meta.get("embedder_spec"), self.default_embedder)
        session = Session.create(
            backend=backend,
            embedder=embedder,
            prompt_pack=self.prompt_pack,
            tokenizer=self.tokenizer,
            retrieval=RetrievalConfig(**meta.get("retrieval", {})),
            controller=ControllerConfig(**meta.get("controller", {})),
            ablation=Ablation(meta.get("ablation", "none")),
            session_id=session_id,
            persist_path=session_dir / "memory.jsonl",
            flash_uses_summary=meta.get("flash_uses_summary", False),
        )
        entry = SessionEntry(session=session, meta=meta)
        with self._registry_lock:
            self.sessions.setdefault(session_id, entry)
            return self.sessions[session_id]

    def get_session(self, session_id: str) -> SessionEntry:
        with self._registry_lock:
            entry = self.sessions.get(session_id)
        if entry is None:
            entry = self._restore_session(session_id)
        if entry is None:
            raise ApiError(404, "session_not_found", f"no session {session_id!r}")
        return entry

    def post_message(self, session_id: str, observation: str) -> dict:
        entry = self.get_session(session_id)
        if not observation or not observation.strip():
            raise ApiError(400, "empty_observation", "observation must be nonempty")
        if not entry.lock.acquire(blocking=False):
            raise ApiError(
                409, "turn_in_flight", "another turn is already running in this session"
            )
        try:
            response, trace = entry.session.run_turn(observation)
        except BackendError as err:
            raise ApiError(502, "backend_failure", str(err), retryable=err.retryable) from err
        finally:
            entry.lock.release()
        traces_dir = self._session_dir(session_id) / "traces"
        traces_dir.mkdir(parents=True, exist_ok=True)
        (traces_dir / f"{trace.turn:05d}.json").write_text(
            trace.to_json(), encoding="utf-8"
        )
        return {"response": response, "turn": trace.turn, "trace_id": str(trace.turn)}

    def list_memories(self, session_id: str, page: int, page_size: int) -> dict:
        entry = self.get_session(session_id)
        if page < 1 or page_size < 1:
            raise ApiError(400, "bad_page", "page and page_size must be >= 1")
        items = entry.session.stream.items()
        start = (page - 1) * page_size
        views = []
        for item in items[start : start + page_size]:
            views.append(
                {
                    "index": item.index,
                    "observation": item.observation,
                    "response": item.response,
                    "observation_summary": item.observation_summary,
                    "response_summary": item.response_summary,
                    "created_turn": item.created_turn,
                    "last_accessed_turn": item.last_accessed_turn,
                    "token_count_full": item.token_count_full,
                    "token_count_summary": item.token_count_summary,
                    "embedding_norm": float(np.linalg.norm(item.embedding)),
                }
            )
        return {"items": views, "page": page, "page_size": page_size, "total": len(items)}

    def get_trace(self, session_id: str, turn: int) -> dict:
        entry = self.get_session(session_id)
        for trace in entry.session.traces:
            if trace.turn == turn:
                return trace.to_dict()
        path = self._session_dir(session_id) / "traces" / f"{turn:05d}.json"
        if path.is_file():
            return json.loads(path.read_text(encoding="utf-8"))
        raise ApiError(404, "trace_not_found", f"no trace for turn {turn}")

    # -- summarization jobs ---------------------------------------------

    def submit_summarize(self, request: SummarizeRequest) -> str:
        if not request.text.strip():
            raise ApiError(400, "empty_document", "text must be nonempty")
        kwargs = {
            key: value
            for key, value in (
                ("block_token_budget", request.block_token_budget),
                ("merge_fanout", request.merge_fanout),
                ("memory_k", request.memory_k),
            )
            if value is not None
        }
        config = SummarizeConfig(**kwargs)
        job = Job(job_id=uuid.uuid4().hex[:12])
        with self._registry_lock:
            self.jobs[job.job_id] = job

        def work() -> None:
            job.status = "running"
            try:
                root, nodes = hierarchical_summarize(
                    request.text,
                    self.default_backend,
                    config=config,
                    embedder=self.default_embedder,
                    tokenizer=self.tokenizer,
                    prompt_pack=self.prompt_pack,
                    checkpoint_dir=self.data_dir / "jobs" / job.job_id,
                )
            except Exception as err:
                job.status = "failed"
                job.error = f"{type(err).__name__}: {err}"
            else:
                job.final_summary = root.text
                job.tree = [node.to_dict() for node in nodes]
                job.status = "done"

        threading.Thread(target=work, daemon=True).start()
        return job.job_id

    def get_job(self, job_id: str) -> dict:
        with self._registry_lock:
            job = self.jobs.get(job_id)
        if job is None:
            raise ApiError(404, "job_not_found", f"no job {job_id!r}")
        body: dict[str, Any] = {"job_id": job.job_id, "status": job.status}
        if job.status == "done":
            body["final_summary"] = job.final_summary
            body["tree"] = job.tree
        if job.status == "failed":
            body["error"] = job.error
        return body


def create_app(
    data_dir: str | Path,
    default_backend: GenerationBackend | None = None,
    default_embedder: EmbeddingProvider | None = None,
    prompt_pack: PromptPack | None = None,
    ui_dir: str | Path | None = None,
) -> FastAPI:
    state = ServiceState(
        data_dir,
        default_backend=default_backend,
        default_embedder=default_embedder,
        prompt_pack=prompt_pack,
    )
    app = FastAPI(title="scmem", version="0.1.0")
    app.state.engine = state
    app.add_middleware(
        CORSMiddleware, allow_origins=["*"], allow_methods=["*"], allow_headers=["*"]
    )
    if ui_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=ui_dir, html=True), name="ui")

    @app.exception_handler(ApiError)
    async def on_api_error(_request: Request, err: ApiError) -> JSONResponse:
        return JSONResponse(
            status_code=err.status,
            content={"code": err.code, "message": err.message, "retryable": err.retryable},
        )

    @app.exception_handler(ScmError)
    async def on_engine_error(_request: Request, err: ScmError) -> JSONResponse:
        if isinstance(err, BackendError):
            return JSONResponse(
                status_code=502,
                content={
                    "code": "backend_failure",
                    "message": str(err),
                    "retryable": err.retryable,
                },
            )
        status = 400 if isinstance(err, (InputError, SchemaError)) else 500
        return JSONResponse(
            status_code=status,
            content={"code": type(err).__name__, "message": str(err), "retryable": False},
        )

    # handlers are sync on purpose: FastAPI runs them in its threadpool, so
    # turns in different sessions proceed concurrently while the per-session
    # lock enforces the one-in-flight rule

    @app.get("/healthz")
    def healthz() -> dict:
        return {"ok": True}

    @app.post("/sessions")
    def create_session(request: CreateSessionRequest) -> dict:
        return state.create_session(request)

    @app.post("/sessions/{session_id}/messages")
    def post_message(session_id: str, request: PostMessageRequest) -> dict:
        return state.post_message(session_id, request.observation)

    @app.get("/sessions/{session_id}/memories")
    def list_memories(session_id: str, page: int = 1, page_size: int = 20) -> dict:
        return state.list_memories(session_id, page, page_size)

    @app.get("/sessions/{session_id}/traces/{turn}")
    def get_trace(session_id: str, turn: int) -> dict:
        return state.get_trace(session_id, turn)

    @app.post("/summarize")
    def summarize(request: SummarizeRequest) -> dict:
        return {"job_id": state.submit_summarize(request)}

    @app.get("/jobs/{job_id}")
    def get_job(job_id: str) -> dict:
        return state.get_job(job_id)

    return app
