"""Live play sessions: a human partners with a trained agent (or scripted
partner) in the bandit and blocks games, either freely or following the
human-study protocol (5 tries on each of 3 contexts on the train task,
then the test task).

Transport-free: the HTTP layer calls into SessionManager. Each session
serializes its events; the log replays deterministically against the same
agent. In the simultaneous bandit, the agent's choice for a try is
committed (hashed into the log) before the human action is accepted.
"""
from __future__ import annotations

import hashlib
import json
import threading
import time
import uuid
from dataclasses import dataclass

import numpy as np

from ..envs.bandit import BanditEnv, BanditTask, make_arms_task, make_study_tasks
from ..envs.blocks import BlocksEnv, BlocksTask
from ..policy import ModularPolicy

SCHEMA_VERSION = 1
STUDY_TRIES = 5
STUDY_CONTEXT_NAMES = ("A", "B", "C")


class SessionError(Exception):
    def __init__(self, message: str, code: str = "bad_request"):
        super().__init__(message)
        self.code = code


class NotFound(SessionError):
    def __init__(self, message: str):
        super().__init__(message, code="not_found")


class OutOfTurn(SessionError):
    def __init__(self, message: str):
        super().__init__(message, code="out_of_turn")


class IllegalMove(SessionError):
    def __init__(self, message: str):
        super().__init__(message, code="illegal_action")


@dataclass
class AgentSpec:
    """Either a modular policy with a head id, or a scripted partner."""
    policy: ModularPolicy | None = None
    partner_module: int = 0
    scripted: object | None = None


def _now() -> float:
    return time.time()


def _fresh_scripted(partner):
    """Per-episode instance of any scripted actor (Partner or plain act())."""
    import copy
    fresh = partner.spawn() if hasattr(partner, "spawn") else copy.deepcopy(partner)
    if hasattr(fresh, "begin_episode"):
        fresh.begin_episode()
    return fresh


class BaseSession:
    def __init__(self, session_id: str, agent: AgentSpec, seed: int):
        self.session_id = session_id
        self.agent = agent
        self.rng = np.random.default_rng(seed)
        self.seed = seed
        self.events: list[dict] = []
        self.lock = threading.Lock()
        self.done = False

    def log_event(self, kind: str, **payload) -> dict:
        event = {"index": len(self.events), "ts": _now(), "type": kind, **payload}
        self.events.append(event)
        return event

    def export_log(self) -> str:
        header = {"type": "session_header", "schema_version": SCHEMA_VERSION,
                  "session_id": self.session_id, "env": self.env_id,
                  "protocol": self.protocol, "seed": self.seed}
        lines = [json.dumps(header, sort_keys=True)]
        lines += [json.dumps(e, sort_keys=True) for e in self.events]
        return "\n".join(lines) + "\n"


class BanditSession(BaseSession):
    """Simultaneous tries; supports free play and the study protocol."""

    env_id = "bandit"

    def __init__(self, session_id: str, agent: AgentSpec, seed: int,
                 protocol: str = "study", task: BanditTask | None = None,
                 n_tries: int = 15):
        super().__init__(session_id, agent, seed)
        self.protocol = protocol
        if protocol == "study":
            self.train_task, self.test_task = make_study_tasks()
            self.schedule = [("train", c, t) for c in range(3) for t in range(1, STUDY_TRIES + 1)]
            self.schedule += [("test", c, t) for c in range(3) for t in range(1, STUDY_TRIES + 1)]
        elif protocol == "free":
            self.train_task = task or make_arms_task(4)
            self.test_task = None
            self.schedule = [("train", None, t) for t in range(1, n_tries + 1)]
        else:
            raise SessionError(f"unknown protocol {protocol!r}")
        self.cursor = 0
        self.history: list[dict] = []
        self._begin_try()

    def _current_task(self) -> BanditTask:
        phase = self.schedule[self.cursor][0]
        return self.train_task if phase == "train" else self.test_task

    def _begin_try(self) -> None:
        phase, ctx, try_index = self.schedule[self.cursor]
        task = self._current_task()
        self.env = BanditEnv(task)
        if ctx is None:
            self.env.reset(int(self.rng.integers(2**31)))
        else:
            self.env.reset_to_context(ctx)
        self._agent_action = self._compute_agent_action()
        self._salt = uuid.uuid4().hex
        digest = hashlib.sha256(
            f"{self._salt}:{self._agent_action}".encode()).hexdigest()
        self.log_event("agent_commit", phase=phase, context=self.env.context,
                       try_index=try_index, commitment=digest)

    def _compute_agent_action(self) -> int:
        if self.agent.scripted is not None:
            p = _fresh_scripted(self.agent.scripted)
            return int(p.act(self.env))
        obs = self.env.observations()[1]
        mask = self.env.legal_masks()[1]
        return self.agent.policy.act(obs, self.agent.partner_module, mask)

    def state_view(self) -> dict:
        view = {
            "schema_version": SCHEMA_VERSION, "session_id": self.session_id,
            "env": self.env_id, "protocol": self.protocol, "done": self.done,
            "history": self.history,
        }
        if self.done:
            view["summary"] = self.summary()
            return view
        phase, ctx, try_index = self.schedule[self.cursor]
        task = self._current_task()
        view.update({
            "phase": phase, "try_index": try_index,
            "context": self.env.context,
            "context_name": STUDY_CONTEXT_NAMES[self.env.context]
            if self.protocol == "study" else str(self.env.context + 1),
            "arms": task.arms,
            "tries_total": len(self.schedule),
            "tries_done": self.cursor,
            "legal_actions": list(range(task.arms)),
            "awaiting": "human_action",
        })
        return view

    def submit_action(self, action: int) -> dict:
        if self.done:
            raise OutOfTurn("session is complete")
        task = self._current_task()
        if not isinstance(action, int) or not 0 <= action < task.arms:
            raise IllegalMove(f"arm must be in 0..{task.arms - 1}")
        phase, ctx, try_index = self.schedule[self.cursor]
        outcome = self.env.step((action, self._agent_action))
        entry = {
            "phase": phase, "context": self.env.context,
            "context_name": STUDY_CONTEXT_NAMES[self.env.context]
            if self.protocol == "study" else str(self.env.context + 1),
            "try_index": try_index,
            "action_human": action, "action_agent": self._agent_action,
            "score": outcome.reward,
        }
        self.history.append(entry)
        self.log_event("try_result", salt=self._salt, **entry)
        self.cursor += 1
        if self.cursor >= len(self.schedule):
            self.done = True
            self.log_event("session_complete", summary=self.summary())
        else:
            self._begin_try()
        return entry

    def summary(self) -> dict:
        first_try = {}
        for entry in self.history:
            key = f"{entry['phase']}-{entry['context_name']}"
            if entry["try_index"] == 1:
                first_try[key] = entry["score"]
        return {
            "tries": len(self.history),
            "total_score": sum(e["score"] for e in self.history),
            "first_try_scores": first_try,
        }


class BlocksSession(BaseSession):
    """Turn-based play; the agent moves automatically on its turns."""

    env_id = "blocks"
    protocol = "free"

    def __init__(self, session_id: str, agent: AgentSpec, seed: int,
                 human_seat: int = 1, episodes: int = 1, tweaked: bool = False):
        super().__init__(session_id, agent, seed)
        if human_seat not in (0, 1):
            raise SessionError("human_seat must be 0 or 1")
        if agent.policy is not None and human_seat != 1:
            raise SessionError("trained agents play P1; set human_seat=1")
        self.human_seat = human_seat
        self.agent_seat = 1 - human_seat
        self.episodes_total = episodes
        self.episode_index = 0
        self.scores: list[float] = []
        self.task = BlocksTask(tweaked=tweaked)
        self._scripted = None
        self._begin_episode()

    def _begin_episode(self) -> None:
        self.env = BlocksEnv(self.task)
        ep_seed = int(self.rng.integers(2**31))
        self.env.reset(ep_seed)
        if self.agent.scripted is not None:
            self._scripted = _fresh_scripted(self.agent.scripted)
        self.log_event("episode_start", episode=self.episode_index, seed=ep_seed)
        self._advance_agent()

    def _agent_action(self) -> int:
        if self._scripted is not None:
            return int(self._scripted.act(self.env))
        obs = self.env.observations()[self.agent_seat]
        mask = self.env.legal_masks()[self.agent_seat]
        return self.agent.policy.act(obs, self.agent.partner_module, mask)

    def _advance_agent(self) -> None:
        while not self.env.done and self.env.current_player == self.agent_seat:
            action = self._agent_action()
            outcome = self.env.step(action)
            self.log_event("move", episode=self.episode_index, player=self.agent_seat,
                           turn=self.env.turn - 1, action=action, reward=outcome.reward)
            if outcome.done:
                self._finish_episode(outcome.reward)
                return

    def _finish_episode(self, score: float) -> None:
        self.scores.append(score)
        self.log_event("episode_end", episode=self.episode_index, score=score,
                       goal={"red": self.env.goal_red, "blue": self.env.goal_blue})
        self.episode_index += 1
        if self.episode_index >= self.episodes_total:
            self.done = True
            self.log_event("session_complete", summary=self.summary())
        else:
            self._begin_episode()

    def state_view(self) -> dict:
        view = {
            "schema_version": SCHEMA_VERSION, "session_id": self.session_id,
            "env": self.env_id, "protocol": self.protocol, "done": self.done,
            "human_seat": self.human_seat, "episode": self.episode_index,
            "episodes_total": self.episodes_total, "scores": self.scores,
        }
        if self.done:
            view["summary"] = self.summary()
            return view
        board = self.env.render_json(viewer=self.human_seat)
        mask = self.env.legal_masks()[self.human_seat]
        view.update({
            "board": board,
            "legal_actions": [i for i, ok in enumerate(mask) if ok],
            "awaiting": "human_action" if self.env.current_player == self.human_seat
            else "agent_action",
            "turn": self.env.turn,
        })
        return view

    def submit_action(self, action: int) -> dict:
        if self.done:
            raise OutOfTurn("session is complete")
        if self.env.current_player != self.human_seat:
            raise OutOfTurn("not the human's turn")
        mask = self.env.legal_masks()[self.human_seat]
        if not isinstance(action, int) or not 0 <= action < len(mask) or not mask[action]:
            raise IllegalMove(f"action {action} is not legal now")
        episode = self.episode_index
        outcome = self.env.step(action)
        self.log_event("move", episode=episode, player=self.human_seat,
                       turn=self.env.turn - 1, action=action, reward=outcome.reward)
        if outcome.done:
            self._finish_episode(outcome.reward)
        else:
            self._advance_agent()
        return {"episode": episode, "reward": outcome.reward}

    def summary(self) -> dict:
        return {
            "episodes": len(self.scores), "scores": self.scores,
            "mean_score": float(np.mean(self.scores)) if self.scores else 0.0,
        }


class SessionManager:
    def __init__(self):
        self._sessions: dict[str, BaseSession] = {}
        self._lock = threading.Lock()

    def create(self, env: str, agent: AgentSpec, seed: int, **kw) -> BaseSession:
        session_id = uuid.uuid4().hex[:12]
        if env == "bandit":
            session = BanditSession(session_id, agent, seed, **kw)
        elif env == "blocks":
            session = BlocksSession(session_id, agent, seed, **kw)
        else:
            raise SessionError(f"env {env!r} not playable (hanabi is excluded)")
        with self._lock:
            self._sessions[session_id] = session
        return session

    def get(self, session_id: str) -> BaseSession:
        with self._lock:
            session = self._sessions.get(session_id)
        if session is None:
            raise NotFound(f"no session {session_id}")
        return session
