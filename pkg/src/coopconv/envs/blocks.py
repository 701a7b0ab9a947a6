"""Turn-based collaborative block placing on a 2x2 grid.

P1 moves the red block on turns 0/2/4 and is the only player who sees the
goal grid; P2 moves the blue block on turns 1/3/5. Scoring happens once,
after turn 5: 10 points per correctly placed block. The tweaked variant
rewards red on either of the goal grid's two empty (white) cells instead.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import EnvSpec, StepOutcome, TwoPlayerEnv

OFF = 4                      # "not on the grid" slot in the 5-way one-hots
CELLS = (0, 1, 2, 3)
ACT_REMOVE = 4
ACT_PASS = 5
N_ACTIONS = 6
N_TURNS = 6

ALL_GOALS: tuple[tuple[int, int], ...] = tuple(
    (r, b) for r in CELLS for b in CELLS if r != b
)


@dataclass(frozen=True)
class BlocksTask:
    tweaked: bool = False


def final_score(goal_red: int, goal_blue: int, work_red: int, work_blue: int,
                tweaked: bool) -> float:
    if tweaked:
        whites = set(CELLS) - {goal_red, goal_blue}
        red_ok = work_red in whites
    else:
        red_ok = work_red == goal_red
    blue_ok = work_blue == goal_blue
    return 10.0 * red_ok + 10.0 * blue_ok


class BlocksEnv(TwoPlayerEnv):
    def __init__(self, task: BlocksTask | None = None):
        self.task = task or BlocksTask()
        self.spec = EnvSpec("blocks", (N_ACTIONS, N_ACTIONS), (24, 16),
                            horizon=N_TURNS, simultaneous=False)
        self._done = True
        self.goal_red = 0
        self.goal_blue = 1
        self.work_red = OFF
        self.work_blue = OFF
        self.turn = 0

    def reset(self, seed: int) -> tuple[np.ndarray, np.ndarray]:
        rng = np.random.default_rng(seed)
        self.goal_red, self.goal_blue = ALL_GOALS[int(rng.integers(len(ALL_GOALS)))]
        return self._start()

    def reset_to_goal(self, goal_red: int, goal_blue: int) -> tuple[np.ndarray, np.ndarray]:
        if (goal_red, goal_blue) not in ALL_GOALS:
            raise ValueError("invalid goal configuration")
        self.goal_red, self.goal_blue = goal_red, goal_blue
        return self._start()

    def _start(self) -> tuple[np.ndarray, np.ndarray]:
        self.work_red = OFF
        self.work_blue = OFF
        self.turn = 0
        self._done = False
        return self.observations()

    @property
    def current_player(self) -> int | None:
        return self.turn % 2

    @property
    def done(self) -> bool:
        return self._done

    def legal_masks(self) -> tuple[np.ndarray, np.ndarray]:
        return self._mask_for(0), self._mask_for(1)

    def _mask_for(self, player: int) -> np.ndarray:
        mask = np.ones(N_ACTIONS, dtype=bool)
        other = self.work_blue if player == 0 else self.work_red
        if other != OFF:
            mask[other] = False  # blocks cannot stack
        return mask

    def observations(self) -> tuple[np.ndarray, np.ndarray]:
        turn = min(self.turn, N_TURNS - 1)
        common = np.concatenate([
            _onehot(self.work_red, 5), _onehot(self.work_blue, 5),
            _onehot(turn, N_TURNS),
        ])
        p1 = np.concatenate([
            _onehot(self.goal_red, 4), _onehot(self.goal_blue, 4), common,
        ])
        return p1, common

    def step(self, action: int) -> StepOutcome:
        self._require_live()
        player = self.current_player
        self._require_legal(player, action)
        if action in CELLS:
            if player == 0:
                self.work_red = action
            else:
                self.work_blue = action
        elif action == ACT_REMOVE:
            if player == 0:
                self.work_red = OFF
            else:
                self.work_blue = OFF
        self.turn += 1
        reward = 0.0
        if self.turn == N_TURNS:
            self._done = True
            reward = final_score(self.goal_red, self.goal_blue,
                                 self.work_red, self.work_blue, self.task.tweaked)
        return StepOutcome(self.observations(), reward, self._done, self.legal_masks())

    def render_json(self, viewer: int) -> dict:
        """Seat-scoped state view; the goal is only present for P1."""
        view = {
            "working": {"red": _cell_name(self.work_red), "blue": _cell_name(self.work_blue)},
            "turn": self.turn,
            "acting_player": None if self._done else self.current_player,
            "done": self._done,
            "goal_visible": viewer == 0,
        }
        if viewer == 0:
            view["goal"] = {"red": self.goal_red, "blue": self.goal_blue}
        return view


def _onehot(i: int, n: int) -> np.ndarray:
    v = np.zeros(n)
    v[i] = 1.0
    return v


def _cell_name(pos: int):
    return None if pos == OFF else pos
