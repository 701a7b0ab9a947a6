"""Collaborative contextual bandit: both players pull an arm in a shared
context and score the arm's prize only when their pulls match.

Episodes are a single simultaneous decision in one uniformly drawn context.
Contexts and arms are 0-based internally; user-facing output is 1-based.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import EnvSpec, StepOutcome, TwoPlayerEnv


@dataclass(frozen=True)
class BanditTask:
    prize: tuple[tuple[int, ...], ...]  # contexts x arms, entries 0/1

    def __post_init__(self):
        mat = self.matrix()
        if not np.isin(mat, (0, 1)).all():
            raise ValueError("prize entries must be 0/1")
        if not (mat.sum(axis=1) >= 1).all():
            raise ValueError("every context needs at least one prized arm")

    @property
    def contexts(self) -> int:
        return len(self.prize)

    @property
    def arms(self) -> int:
        return len(self.prize[0])

    def matrix(self) -> np.ndarray:
        return np.array(self.prize, dtype=np.int64)

    def optimal_arms(self, context: int) -> tuple[int, ...]:
        return tuple(int(a) for a in np.flatnonzero(self.matrix()[context]))

    def to_json(self) -> dict:
        return {"contexts": self.contexts, "arms": self.arms,
                "prize": [int(v) for row in self.prize for v in row]}

    @staticmethod
    def from_json(obj: dict) -> "BanditTask":
        c, a, flat = obj["contexts"], obj["arms"], obj["prize"]
        if len(flat) != c * a:
            raise ValueError("prize length does not match contexts*arms")
        rows = tuple(tuple(flat[i * a:(i + 1) * a]) for i in range(c))
        return BanditTask(rows)


def make_arms_task(m: int) -> BanditTask:
    """4 contexts x 8 arms; contexts 1..m prize arms {i, i+4}, the rest only arm i."""
    if not 1 <= m <= 4:
        raise ValueError("m must be in 1..4")
    rows = []
    for i in range(4):
        row = [0] * 8
        row[i] = 1
        if i < m:
            row[i + 4] = 1
        rows.append(tuple(row))
    return BanditTask(tuple(rows))


def make_tweaked_task(m: int) -> BanditTask:
    """Arms-m with every single-optimum context i moved from arm i to arm i+4."""
    if not 1 <= m <= 3:
        raise ValueError("tweak requires m in 1..3 (m=4 has no single-optimum context)")
    rows = []
    for i in range(4):
        row = [0] * 8
        if i < m:
            row[i] = 1
            row[i + 4] = 1
        else:
            row[i + 4] = 1
        rows.append(tuple(row))
    return BanditTask(tuple(rows))


def make_study_tasks() -> tuple[BanditTask, BanditTask]:
    """The 3-context x 4-arm pair used for live human sessions (train, test)."""
    train = BanditTask((
        (1, 0, 0, 0),   # A: arm 1
        (0, 0, 1, 1),   # B: arms 3, 4
        (0, 1, 0, 1),   # C: arms 2, 4
    ))
    test = BanditTask((
        (0, 0, 1, 0),   # A: arm 3
        (1, 1, 0, 0),   # B: arms 1, 2
        (0, 1, 0, 1),   # C: arms 2, 4 (unchanged from train)
    ))
    return train, test


class BanditEnv(TwoPlayerEnv):
    def __init__(self, task: BanditTask):
        self.task = task
        self._prize = task.matrix()
        n = task.contexts
        a = task.arms
        self.spec = EnvSpec("bandit", (a, a), (n, n), horizon=1, simultaneous=True)
        self.context: int | None = None
        self._done = True

    def reset(self, seed: int) -> tuple[np.ndarray, np.ndarray]:
        rng = np.random.default_rng(seed)
        self.context = int(rng.integers(self.task.contexts))
        self._done = False
        obs = self._obs()
        return obs, obs.copy()

    def reset_to_context(self, context: int) -> tuple[np.ndarray, np.ndarray]:
        if not 0 <= context < self.task.contexts:
            raise ValueError("context out of range")
        self.context = context
        self._done = False
        obs = self._obs()
        return obs, obs.copy()

    def _obs(self) -> np.ndarray:
        v = np.zeros(self.task.contexts)
        v[self.context] = 1.0
        return v

    @property
    def current_player(self) -> int | None:
        return None

    @property
    def done(self) -> bool:
        return self._done

    def legal_masks(self) -> tuple[np.ndarray, np.ndarray]:
        full = np.ones(self.task.arms, dtype=bool)
        return full, full.copy()

    def observations(self) -> tuple[np.ndarray, np.ndarray]:
        obs = self._obs()
        return obs, obs.copy()

    def step(self, action) -> StepOutcome:
        self._require_live()
        a0, a1 = action
        self._require_legal(0, a0)
        self._require_legal(1, a1)
        reward = float(self._prize[self.context, a0]) if a0 == a1 else 0.0
        self._done = True
        obs = self._obs()
        return StepOutcome((obs, obs.copy()), reward, True, self.legal_masks())
