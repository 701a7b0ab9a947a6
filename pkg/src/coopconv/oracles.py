"""Ground-truth computations: optimal-arm sets, exact blocks values by
exhaustive search, oracle marginals under a uniform preference over optimal
actions, the L1 distance between categorical distributions, the
marginal-sufficiency check for deterministic best responses, and the
greedy evaluation harness.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .envs.bandit import BanditEnv, BanditTask
from .envs.blocks import ACT_PASS, ACT_REMOVE, CELLS, N_TURNS, OFF, final_score
from .training.rollout import ModularActor, NetActor, ScriptedSeat, collect


def l1_distance(p: np.ndarray, q: np.ndarray) -> float:
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError("distribution length mismatch")
    return float(np.abs(p - q).sum())


def bandit_oracle_marginal(task: BanditTask, context: int) -> np.ndarray:
    """Uniform over the context's optimal arms, zero elsewhere."""
    opts = task.optimal_arms(context)
    out = np.zeros(task.arms)
    out[list(opts)] = 1.0 / len(opts)
    return out


@dataclass(frozen=True)
class BestResponseTable:
    """Ego best responses per (context, partner action).

    ``responses[(c, a_p)]`` is a distribution over ego actions; the table is
    deterministic when every entry is a point mass.
    """
    responses: dict

    def dist(self, context: int, partner_action: int) -> np.ndarray:
        return self.responses[(context, partner_action)]

    @property
    def deterministic(self) -> bool:
        return all(np.max(d) == 1.0 for d in self.responses.values())


def bandit_best_response_table(task: BanditTask) -> BestResponseTable:
    """Match any prized partner arm; on worthless arms (everything ties at
    zero) default to the context's first optimal arm."""
    responses = {}
    mat = task.matrix()
    for c in range(task.contexts):
        for a_p in range(task.arms):
            out = np.zeros(task.arms)
            if mat[c, a_p] == 1:
                out[a_p] = 1.0
            else:
                out[task.optimal_arms(c)[0]] = 1.0
            responses[(c, a_p)] = out
    return BestResponseTable(responses)


@dataclass
class Lemma1Report:
    deterministic: bool
    sufficient: bool
    marginal: np.ndarray
    empirical: np.ndarray | None
    oracle: np.ndarray
    matches_oracle: bool
    detail: str


def lemma1_check(partner_set, context: int, table: BestResponseTable,
                 task: BanditTask) -> tuple[bool, Lemma1Report]:
    """Does the marginal reconstruct the distribution of best responses?

    For a deterministic ego, each partner induces a single response action,
    so the action histogram and the distribution over response strategies
    are the same object: the marginal is sufficient. Stochastic response
    entries break this (distinct strategy mixtures share a marginal) and
    are flagged.
    """
    env = BanditEnv(task)
    env.reset_to_context(context)
    dists = []
    for partner in partner_set:
        p = partner.spawn()
        p.begin_episode()
        a_p = p.act(env)
        dists.append(table.dist(context, a_p))
    marginal = np.mean(dists, axis=0)
    oracle = bandit_oracle_marginal(task, context)
    if not table.deterministic or any(np.max(d) < 1.0 for d in dists):
        report = Lemma1Report(
            deterministic=False, sufficient=False, marginal=marginal,
            empirical=None, oracle=oracle,
            matches_oracle=bool(l1_distance(marginal, oracle) == 0.0),
            detail=("marginal insufficient: stochastic best responses found; "
                    "distinct strategy mixtures can share this marginal"))
        return False, report
    empirical = np.zeros(task.arms)
    for d in dists:
        empirical[int(np.argmax(d))] += 1.0 / len(dists)
    sufficient = bool(np.allclose(empirical, marginal, atol=0.0))
    report = Lemma1Report(
        deterministic=True, sufficient=sufficient, marginal=marginal,
        empirical=empirical, oracle=oracle,
        matches_oracle=bool(l1_distance(empirical, oracle) == 0.0),
        detail="ok" if sufficient else "histogram and marginal disagree")
    return sufficient, report


# -- blocks exact values ------------------------------------------------------

def _legal_actions(work_self: int, work_other: int) -> list[int]:
    acts = [c for c in CELLS if c != work_other]
    acts.append(ACT_REMOVE)
    acts.append(ACT_PASS)
    return acts


def _apply(work: int, action: int) -> int:
    if action in CELLS:
        return action
    if action == ACT_REMOVE:
        return OFF
    return work


@lru_cache(maxsize=None)
def _blocks_state_value(goal_red: int, goal_blue: int, work_red: int,
                        work_blue: int, turn: int, tweaked: bool) -> float:
    if turn == N_TURNS:
        return final_score(goal_red, goal_blue, work_red, work_blue, tweaked)
    player = turn % 2
    best = -np.inf
    mine, other = (work_red, work_blue) if player == 0 else (work_blue, work_red)
    for action in _legal_actions(mine, other):
        nxt = _apply(mine, action)
        wr, wb = (nxt, work_blue) if player == 0 else (work_red, nxt)
        best = max(best, _blocks_state_value(goal_red, goal_blue, wr, wb,
                                             turn + 1, tweaked))
    return best


def blocks_joint_q(goal_red: int, goal_blue: int, work_red: int, work_blue: int,
                   turn: int, tweaked: bool = False) -> np.ndarray:
    """Exact action values for the acting player under centralized optimal
    play over the remaining plies. Illegal actions get -inf."""
    q = np.full(6, -np.inf)
    player = turn % 2
    mine, other = (work_red, work_blue) if player == 0 else (work_blue, work_red)
    for action in _legal_actions(mine, other):
        nxt = _apply(mine, action)
        wr, wb = (nxt, work_blue) if player == 0 else (work_red, nxt)
        q[action] = _blocks_state_value(goal_red, goal_blue, wr, wb, turn + 1, tweaked)
    return q


def blocks_oracle_marginal(goal_red: int, goal_blue: int, work_red: int,
                           work_blue: int, turn: int, tweaked: bool = False) -> np.ndarray:
    q = blocks_joint_q(goal_red, goal_blue, work_red, work_blue, turn, tweaked)
    best = np.max(q)
    out = (q == best).astype(np.float64)
    return out / out.sum()


def blocks_value_bruteforce(goal_red: int, goal_blue: int, work_red: int,
                            work_blue: int, turn: int, tweaked: bool = False) -> float:
    """Independent oracle: enumerate every legal action sequence to the end."""
    if turn == N_TURNS:
        return final_score(goal_red, goal_blue, work_red, work_blue, tweaked)
    player = turn % 2
    mine, other = (work_red, work_blue) if player == 0 else (work_blue, work_red)
    values = []
    for action in _legal_actions(mine, other):
        nxt = _apply(mine, action)
        wr, wb = (nxt, work_blue) if player == 0 else (work_red, nxt)
        values.append(blocks_value_bruteforce(goal_red, goal_blue, wr, wb,
                                              turn + 1, tweaked))
    return max(values)


# -- blocks best-response marginal under uniform convention preference ----------
#
# The centralized argmax set is degenerate at early turns (any first move
# still reaches 20 with both players seeing the goal), so the marginal that
# a convention-forming P1 should match is computed against the partner
# model instead: P2 conventions are cell permutations, drawn uniformly;
# for each convention consistent with the episode's public history, find
# the ego's exact best response by exhaustive search, spread uniformly
# over its ties, and average over the conventions.

from itertools import permutations

from .envs.blocks import N_ACTIONS

ALL_SIGMAS = tuple(permutations(range(4)))


def _sigma_partner_move(wr: int, wb: int, turn: int, target, gave_up: bool,
                        sigma) -> tuple[int, object, bool]:
    """Pure mirror of BlocksPermutationPartner.act (checked against the
    class by test); returns (action, new_target, new_gave_up)."""
    if turn == 1:
        if wr == OFF:
            return ACT_PASS, None, True
        t = sigma[wr]
        if wr == t:
            return ACT_PASS, t, False
        return t, t, False
    if turn == 3 and target is not None and wb == OFF and not gave_up:
        if wr != target:
            return target, target, gave_up
        return ACT_PASS, target, True
    return ACT_PASS, target, gave_up


def _apply_blocks(wr: int, wb: int, turn: int, action: int) -> tuple[int, int, int]:
    if turn % 2 == 0:
        wr = _apply(wr, action)
    else:
        wb = _apply(wb, action)
    return wr, wb, turn + 1


def _sigma_ego_values(goal_red: int, goal_blue: int, wr: int, wb: int,
                      turn: int, target, gave_up: bool, sigma,
                      tweaked: bool) -> np.ndarray:
    """Exact action values for P1 against one fixed permutation partner."""
    memo: dict = {}

    def value(wr, wb, turn, target, gave_up) -> float:
        if turn == N_TURNS:
            return final_score(goal_red, goal_blue, wr, wb, tweaked)
        key = (wr, wb, turn, target, gave_up)
        if key in memo:
            return memo[key]
        if turn % 2 == 1:
            action, t2, g2 = _sigma_partner_move(wr, wb, turn, target, gave_up, sigma)
            out = value(*_apply_blocks(wr, wb, turn, action), t2, g2)
        else:
            out = max(value(*_apply_blocks(wr, wb, turn, a), target, gave_up)
                      for a in _legal_actions(wr, wb))
        memo[key] = out
        return out

    values = np.full(N_ACTIONS, -np.inf)
    for action in _legal_actions(wr, wb):
        values[action] = value(*_apply_blocks(wr, wb, turn, action), target, gave_up)
    return values


def _progress_tiebreak(goal_red: int, goal_blue: int, wr: int, wb: int,
                       turn: int, winners: np.ndarray,
                       tweaked: bool) -> np.ndarray:
    """Among payoff-equal actions, prefer immediate progress: maximize the
    number of currently-correct blocks after the move, then prefer passing.
    Kills the procrastination ties (fixing the red block now or on the last
    turn pays the same, but only the eager plan is a convention a stationary
    policy can match)."""
    def correct_after(action: int) -> float:
        wr2, wb2, _ = _apply_blocks(wr, wb, turn, action)
        return final_score(goal_red, goal_blue, wr2, wb2, tweaked)

    idx = np.flatnonzero(winners)
    progress = np.array([correct_after(int(a)) for a in idx])
    keep = idx[progress == progress.max()]
    if len(keep) > 1 and ACT_PASS in keep:
        keep = np.array([ACT_PASS])
    out = np.zeros(N_ACTIONS, dtype=bool)
    out[keep] = True
    return out


def blocks_convention_marginal(goal_red: int, goal_blue: int,
                               actions_so_far: list[int],
                               sigmas=ALL_SIGMAS,
                               tweaked: bool = False,
                               unique_only: bool = False) -> np.ndarray | None:
    """Best-response marginal at the ego (P1) state reached by the given
    (both-seat) action history, averaged over the cell-permutation
    conventions in ``sigmas`` that would have produced the same partner
    moves. Each consistent convention contributes a uniform distribution
    over its exact best-response ties, broken toward immediate progress.

    ``unique_only`` restricts to the sufficiency lemma's domain: when any
    consistent convention leaves the ego with payoff-tied responses even
    after the tie-break, the state has no deterministic best response and
    None is returned. None also means no convention matches the history.
    """
    acc = np.zeros(N_ACTIONS)
    hits = 0
    for sigma in sigmas:
        wr, wb, turn = OFF, OFF, 0
        target, gave_up = None, False
        consistent = True
        for action in actions_so_far:
            if turn % 2 == 1:
                expected, target, gave_up = _sigma_partner_move(
                    wr, wb, turn, target, gave_up, sigma)
                if expected != action:
                    consistent = False
                    break
            wr, wb, turn = _apply_blocks(wr, wb, turn, action)
        if not consistent or turn % 2 == 1:
            continue
        values = _sigma_ego_values(goal_red, goal_blue, wr, wb, turn,
                                   target, gave_up, sigma, tweaked)
        finite = values > -np.inf
        best = values[finite].max()
        winners = (values >= best - 1e-9) & finite
        if unique_only and winners.sum() != 1:
            return None        # payoff-tied responses: outside the lemma's domain
        winners = _progress_tiebreak(goal_red, goal_blue, wr, wb, turn,
                                     winners, tweaked)
        acc += winners / winners.sum()
        hits += 1
    if hits == 0:
        return None
    return acc / hits


# -- evaluation harness -------------------------------------------------------

def eval_score(ego, partner, env_factory, episodes: int, seed: int) -> tuple[float, float]:
    """Greedy evaluation of an ego actor against one partner.

    ``ego`` is a (ModularPolicy, partner_module_id) pair, a plain net, or a
    scripted object exposing act(env). Returns (mean, standard error).
    """
    rng = np.random.default_rng(seed)
    seats = {0: _as_seat(ego, greedy=True), 1: _as_seat(partner, greedy=True)}
    env_id = env_factory().spec.env_id
    traj = collect(env_factory, seats, n_steps=1, rng=rng, record_seats=set(),
                   env_id=env_id, batch_episodes=min(episodes, 256),
                   max_episodes=episodes)
    rets = np.array(traj.episode_returns())
    stderr = float(rets.std(ddof=1) / np.sqrt(len(rets))) if len(rets) > 1 else 0.0
    return float(rets.mean()), stderr


def _as_seat(obj, greedy: bool):
    from .policy import ModularPolicy
    if isinstance(obj, tuple) and isinstance(obj[0], ModularPolicy):
        return ModularActor(obj[0], obj[1], greedy=greedy)
    if hasattr(obj, "act_batch"):
        return obj
    if hasattr(obj, "forward"):
        return NetActor(obj, greedy=greedy)
    if hasattr(obj, "act"):
        return ScriptedSeat(obj)
    raise TypeError(f"cannot evaluate actor of type {type(obj)!r}")
