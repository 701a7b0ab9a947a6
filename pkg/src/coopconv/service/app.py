"""HTTP surface for live play sessions.

POST /sessions            create a session
GET  /sessions/{id}/state seat-scoped view
POST /sessions/{id}/action submit the human's action
GET  /sessions/{id}/log   JSONL event log
"""
from __future__ import annotations

from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, PlainTextResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from .. import checkpoint as ckpt
from ..envs.bandit import make_arms_task
from ..partners import make_bandit_fixed_partners, make_blocks_permutation_partners
from .sessions import AgentSpec, SessionError, SessionManager


class CreateSessionRequest(BaseModel):
    env: str
    protocol: str = "study"            # bandit: "study" | "free"
    checkpoint: str | None = None      # modular policy checkpoint path
    partner_module: int = 0
    scripted_partner: str | None = None  # e.g. "bandit-fixed-0", "blocks-perm-0"
    human_seat: int = 1
    seed: int = Field(default=0, ge=0)
    episodes: int = Field(default=1, ge=1, le=100)
    tweaked: bool = False
    arms_m: int = Field(default=4, ge=1, le=4)


class ActionRequest(BaseModel):
    action: int


def _scripted_by_name(env: str, name: str):
    if env == "bandit":
        kind, _, idx = name.rpartition("-")
        if kind == "bandit-fixed":
            task = make_arms_task(4)
            return make_bandit_fixed_partners(task, 4, "train")[int(idx)]
    if env == "blocks" and name.startswith("blocks-perm-"):
        return make_blocks_permutation_partners("train")[int(name.rsplit("-", 1)[1])]
    raise SessionError(f"unknown scripted partner {name!r}")


def build_app(static_dir: str | None = None) -> FastAPI:
    app = FastAPI(title="coopconv play service", version="1")
    manager = SessionManager()
    app.state.manager = manager

    @app.exception_handler(SessionError)
    async def _session_error(_req: Request, exc: SessionError):
        status = {"not_found": 404, "out_of_turn": 409, "illegal_action": 422,
                  "bad_request": 400}[exc.code]
        return JSONResponse(status_code=status,
                            content={"error": exc.code, "detail": str(exc)})

    @app.post("/sessions")
    def create_session(req: CreateSessionRequest):
        agent = _agent_from_request(req)
        kwargs = {}
        if req.env == "bandit":
            kwargs["protocol"] = req.protocol
        elif req.env == "blocks":
            kwargs.update(human_seat=req.human_seat, episodes=req.episodes,
                          tweaked=req.tweaked)
        session = manager.create(req.env, agent, req.seed, **kwargs)
        return {"session_id": session.session_id, "state": session.state_view()}

    @app.get("/sessions/{session_id}/state")
    def get_state(session_id: str):
        session = manager.get(session_id)
        with session.lock:
            return session.state_view()

    @app.post("/sessions/{session_id}/action")
    def submit_action(session_id: str, req: ActionRequest):
        session = manager.get(session_id)
        with session.lock:
            result = session.submit_action(req.action)
            return {"result": result, "state": session.state_view()}

    @app.get("/sessions/{session_id}/log")
    def get_log(session_id: str):
        session = manager.get(session_id)
        with session.lock:
            return PlainTextResponse(session.export_log(),
                                     media_type="application/x-ndjson")

    if static_dir and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="ui")
    return app


def _agent_from_request(req: CreateSessionRequest) -> AgentSpec:
    if req.scripted_partner is not None:
        return AgentSpec(scripted=_scripted_by_name(req.env, req.scripted_partner))
    if req.checkpoint is None:
        raise SessionError("provide a checkpoint or a scripted_partner")
    try:
        policy, _ = ckpt.load_modular_policy(req.checkpoint)
    except (FileNotFoundError, ckpt.CheckpointError) as exc:
        raise SessionError(f"checkpoint unusable: {exc}", code="not_found") from exc
    if req.partner_module not in policy.active_ids():
        raise SessionError(f"partner module {req.partner_module} not in checkpoint")
    return AgentSpec(policy=policy, partner_module=req.partner_module)
