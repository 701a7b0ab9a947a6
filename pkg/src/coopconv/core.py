"""Two-player environment contract and trajectory records.

All environments in this package are finite-horizon, two-player games with a
shared (identical) reward. Turn-based games expose whose turn it is; the
simultaneous bandit takes both actions in a single step.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class IllegalAction(Exception):
    """Raised when a step is attempted with an action masked illegal."""


class EpisodeFinished(Exception):
    """Raised when step() is called after the episode is done."""


@dataclass(frozen=True)
class EnvSpec:
    env_id: str                     # "bandit" | "blocks" | "hanabi"
    action_counts: tuple[int, int]  # per player
    obs_dims: tuple[int, int]       # per player
    horizon: int                    # max decisions per episode
    simultaneous: bool

    def __post_init__(self):
        if self.env_id not in ("bandit", "blocks", "hanabi"):
            raise ValueError(f"unknown env_id {self.env_id!r}")
        if any(a < 2 for a in self.action_counts):
            raise ValueError("each player needs at least 2 actions")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")


@dataclass
class StepOutcome:
    next_obs: tuple[np.ndarray, np.ndarray]
    reward: float                   # shared by both players
    done: bool
    legal_masks: tuple[np.ndarray, np.ndarray]


@dataclass
class Record:
    """One decision, attributed to the player who made it.

    Simultaneous games emit two records per env step (same ``step`` index);
    the shared reward is carried on the first player's record so that
    summing rewards over an episode's records gives the episode return.
    """
    acting_player: int
    obs: np.ndarray
    legal_mask: np.ndarray
    action: int
    log_prob: float      # 0.0 for non-learner (scripted) decisions
    value_estimate: float
    reward: float        # shared reward emitted at this step
    step: int = 0        # env step index within the episode


@dataclass
class Trajectory:
    env_id: str
    partner_id: int
    episodes: list[list[Record]] = field(default_factory=list)

    @property
    def n_steps(self) -> int:
        """Total env steps (simultaneous games emit two records per step)."""
        return sum(ep[-1].step + 1 for ep in self.episodes if ep)

    def episode_returns(self) -> list[float]:
        return [sum(r.reward for r in ep) for ep in self.episodes]

    def validate(self, horizon: int | None = None) -> None:
        for ep in self.episodes:
            if horizon is not None and ep and ep[-1].step + 1 > horizon:
                raise ValueError("episode longer than horizon")
            for rec in ep:
                if not rec.legal_mask[rec.action]:
                    raise ValueError("recorded action violates its legal mask")
                if rec.log_prob > 1e-12:
                    raise ValueError("log_prob must be <= 0")


class TwoPlayerEnv:
    """Single-threaded state machine; distinct instances are independent.

    Subclasses implement reset()/step() and set ``spec``. ``current_player``
    is None for simultaneous games. step() accepts an int for turn-based
    games and an (ego, partner) pair for simultaneous ones.
    """

    spec: EnvSpec

    def reset(self, seed: int) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def step(self, action) -> StepOutcome:
        raise NotImplementedError

    @property
    def current_player(self) -> int | None:
        raise NotImplementedError

    def legal_masks(self) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def observations(self) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    @property
    def done(self) -> bool:
        raise NotImplementedError

    def _require_live(self) -> None:
        if self.done:
            raise EpisodeFinished("step() called after episode end")

    def _require_legal(self, player: int, action: int) -> None:
        mask = self.legal_masks()[player]
        if action < 0 or action >= mask.shape[0] or not mask[action]:
            raise IllegalAction(f"action {action} illegal for player {player}")


def spawn_rngs(seed: int, n: int) -> list[np.random.Generator]:
    """Hierarchical RNG split: one root seed fans out to independent streams."""
    seq = np.random.SeedSequence(seed)
    return [np.random.default_rng(s) for s in seq.spawn(n)]
