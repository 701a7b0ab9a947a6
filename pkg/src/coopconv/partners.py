"""Partner populations: fixed-convention bandit partners, Boltzmann-rational
bandit partners, blocks permutation partners, partners derived from the
human-study fixture, and frozen neural policies.

Scripted partners only read state their seat can observe. The blocks
partner keeps per-episode memory (its interpretation of the ego's first
move), so partner objects are spawned fresh per episode.
"""
from __future__ import annotations

import copy
import csv
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .envs.bandit import BanditTask
from .envs.blocks import ACT_PASS, BlocksEnv, CELLS, OFF
from .neural import masked_softmax

STUDY_CONTEXTS = ("A", "B", "C")


class Partner:
    kind = "abstract"
    deterministic = True

    def spawn(self) -> "Partner":
        """Fresh per-episode instance (scripted state must not leak)."""
        return copy.deepcopy(self)

    def begin_episode(self) -> None:
        pass

    def act(self, env) -> int:
        raise NotImplementedError


@dataclass
class FixedArmPartner(Partner):
    """Always pulls the same arm in each context."""
    arm_by_context: tuple[int, ...]
    kind: str = "bandit-fixed"
    label: str = ""

    def act(self, env) -> int:
        return self.arm_by_context[env.context]


def make_bandit_fixed_partners(task: BanditTask, count: int,
                               variant: str = "train") -> list[FixedArmPartner]:
    """Hand-designed population with exactly uniform coverage of each
    context's optimal arms. ``variant`` picks a different (disjoint where
    the symmetries allow) assignment of conventions for held-out partners.
    """
    per_context = [task.optimal_arms(c) for c in range(task.contexts)]
    for c, opts in enumerate(per_context):
        if count % len(opts) != 0:
            raise ValueError(f"count {count} does not divide context {c} optima evenly")
    partners = []
    for k in range(count):
        arms = []
        for c, opts in enumerate(per_context):
            if variant == "train":
                arms.append(opts[k % len(opts)])
            elif variant == "test":
                arms.append(opts[(k + c) % len(opts)])
            else:
                raise ValueError(f"unknown variant {variant!r}")
        partners.append(FixedArmPartner(tuple(arms), label=f"{variant}-fixed-{k}"))
    return partners


def retarget_fixed_partner(partner: FixedArmPartner, new_task: BanditTask) -> FixedArmPartner:
    """Carry conventions onto a tweaked task: keep the old choice wherever it
    is still optimal, otherwise play the new task's unique optimum."""
    arms = []
    for c, old in enumerate(partner.arm_by_context):
        opts = new_task.optimal_arms(c)
        arms.append(old if old in opts else opts[0])
    return FixedArmPartner(tuple(arms), kind=partner.kind, label=partner.label + "-retargeted")


def make_boltzmann_partner(task: BanditTask, temperature: float,
                           seed: int) -> FixedArmPartner:
    """Samples one arm per context with probability proportional to
    exp(prize/temperature), then sticks to it."""
    if temperature <= 0:
        raise ValueError("temperature must be > 0")
    rng = np.random.default_rng(seed)
    prize = task.matrix().astype(np.float64)
    arms = []
    for c in range(task.contexts):
        logits = prize[c] / temperature
        p = np.exp(logits - logits.max())
        p /= p.sum()
        arms.append(int(rng.choice(task.arms, p=p)))
    return FixedArmPartner(tuple(arms), kind="bandit-boltzmann",
                           label=f"boltzmann-t{temperature}-s{seed}")


class BlocksPermutationPartner(Partner):
    """P2 that reads the ego's first move through a fixed cell permutation.

    If the ego placed red at cell c on turn 0, this partner places blue at
    sigma(c) on turn 1; if that cell is still occupied by red it waits one
    round and places on turn 3 if freed. When the ego's first move was not
    a placement (or the wait fails) it passes for the rest of the game.
    """
    kind = "blocks-permutation"

    def __init__(self, sigma: tuple[int, int, int, int], label: str = ""):
        if sorted(sigma) != list(CELLS):
            raise ValueError("sigma must be a permutation of the four cells")
        self.sigma = tuple(sigma)
        self.label = label or f"perm-{''.join(map(str, sigma))}"
        self._target: int | None = None
        self._gave_up = False

    def begin_episode(self) -> None:
        self._target = None
        self._gave_up = False

    def act(self, env: BlocksEnv) -> int:
        if env.turn == 1:
            if env.work_red == OFF:
                self._gave_up = True
                return ACT_PASS
            self._target = self.sigma[env.work_red]
            if env.work_red == self._target:
                return ACT_PASS   # blocked by red; wait one round
            return self._target
        if env.turn == 3 and self._target is not None and env.work_blue == OFF \
                and not self._gave_up:
            if env.work_red != self._target:
                return self._target
            self._gave_up = True
        return ACT_PASS


TRAIN_SIGMAS: tuple[tuple[int, ...], ...] = (
    (0, 1, 2, 3), (1, 0, 3, 2), (2, 3, 0, 1),
)
TEST_SIGMAS: tuple[tuple[int, ...], ...] = (
    (3, 2, 1, 0), (0, 1, 3, 2), (1, 0, 2, 3),
    (2, 0, 1, 3), (3, 1, 0, 2), (0, 2, 3, 1),
)


def make_blocks_permutation_partners(variant: str = "train") -> list[BlocksPermutationPartner]:
    sigmas = TRAIN_SIGMAS if variant == "train" else TEST_SIGMAS
    return [BlocksPermutationPartner(s, label=f"{variant}-perm-{i}")
            for i, s in enumerate(sigmas)]


class SignalingBlocksEgo:
    """P1 that signals the blue goal with its first move, then fixes red.

    Paired with the matching permutation partner this scores 20 on every
    goal: signal sigma^-1(goal_blue) on turn 0, place red correctly on turn
    2 (a white cell in the tweaked task), pass afterwards.
    """

    def __init__(self, sigma: tuple[int, ...], tweaked: bool = False):
        self.sigma = tuple(sigma)
        self.inverse = tuple(int(np.argwhere(np.array(sigma) == c)[0][0]) for c in CELLS)
        self.tweaked = tweaked

    def act(self, env: BlocksEnv) -> int:
        if env.turn == 0:
            return self.inverse[env.goal_blue]
        if env.turn == 2:
            if self.tweaked:
                whites = sorted(set(CELLS) - {env.goal_red, env.goal_blue})
                for w in whites:
                    if env.work_blue != w:
                        return w
                return ACT_PASS
            return env.goal_red if env.work_blue != env.goal_red else ACT_PASS
        return ACT_PASS


class CentralizedBlocksPair:
    """Both seats see the goal and place their blocks immediately."""

    @staticmethod
    def p1_act(env: BlocksEnv) -> int:
        return env.goal_red if env.work_blue != env.goal_red else ACT_PASS

    @staticmethod
    def p2_act(env: BlocksEnv) -> int:
        return env.goal_blue if env.work_red != env.goal_blue else ACT_PASS


class NeuralPartner(Partner):
    """Frozen policy network acting for one seat (greedily by default, so a
    trained partner expresses one stable convention)."""
    kind = "neural"

    def __init__(self, net, seat: int, greedy: bool = True, label: str = ""):
        self.net = net
        self.seat = seat
        self.greedy = greedy
        self.label = label

    def spawn(self) -> "NeuralPartner":
        return self    # stateless: safe to share across envs

    def act(self, env) -> int:
        obs = env.observations()[self.seat]
        mask = env.legal_masks()[self.seat]
        logits, _, _, _ = self.net.forward(obs)
        probs = masked_softmax(logits, np.atleast_2d(mask))[0]
        return int(np.argmax(probs))


# -- human-study fixture ------------------------------------------------------

@dataclass(frozen=True)
class StudyRow:
    pair_id: int
    phase: str       # "train" | "test"
    context: str     # "A" | "B" | "C"
    try_index: int
    action_p1: int   # 1-based arm
    action_p2: int


def load_study_fixture(path=None) -> list[StudyRow]:
    if path is None:
        ref = resources.files("coopconv.data").joinpath("study_results.csv")
        text = ref.read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    rows = []
    reader = csv.DictReader(text.splitlines())
    required = {"pair_id", "phase", "context", "try_index", "action_p1", "action_p2"}
    if reader.fieldnames is None or not required.issubset(reader.fieldnames):
        raise ValueError("study fixture missing required columns")
    for raw in reader:
        try:
            row = StudyRow(int(raw["pair_id"]), raw["phase"], raw["context"],
                           int(raw["try_index"]), int(raw["action_p1"]),
                           int(raw["action_p2"]))
        except (KeyError, ValueError) as exc:
            raise ValueError(f"malformed study fixture row: {raw}") from exc
        if row.phase not in ("train", "test") or row.context not in STUDY_CONTEXTS:
            raise ValueError(f"malformed study fixture row: {raw}")
        rows.append(row)
    return rows


def partners_from_study_log(rows: list[StudyRow] | None = None) -> list[FixedArmPartner]:
    """One deterministic partner per consistent pair, playing each pair's
    converged (try-5) action per train context. Pairs whose two humans
    disagree at try 5 in any train context are dropped."""
    if rows is None:
        rows = load_study_fixture()
    by_pair: dict[int, dict[str, tuple[int, int]]] = {}
    for row in rows:
        if row.phase == "train" and row.try_index == 5:
            by_pair.setdefault(row.pair_id, {})[row.context] = (row.action_p1, row.action_p2)
    partners = []
    for pair_id in sorted(by_pair):
        picks = by_pair[pair_id]
        if set(picks) != set(STUDY_CONTEXTS):
            raise ValueError(f"pair {pair_id} missing a train context")
        if any(a1 != a2 for a1, a2 in picks.values()):
            continue
        arms = tuple(picks[c][0] - 1 for c in STUDY_CONTEXTS)   # to 0-based
        partners.append(FixedArmPartner(arms, kind="study-derived",
                                        label=f"study-pair-{pair_id}"))
    return partners


def split_study_partners(partners: list[FixedArmPartner]
                         ) -> tuple[list[FixedArmPartner], list[FixedArmPartner]]:
    """Alternating split so both halves cover the observed conventions."""
    return partners[0::2], partners[1::2]


@dataclass
class PartnerSplit:
    train: list
    test: list

    def __post_init__(self):
        names = {id(p) for p in self.train}
        if any(id(p) in names for p in self.test):
            raise ValueError("train/test partner lists must be disjoint")
