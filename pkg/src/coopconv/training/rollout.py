"""Rollout collection.

Episodes are collected in lockstep batches: every environment in a batch is
at the same turn parity, so all decisions for one seat can go through the
policy network together. Scripted partners are stepped per-environment
(they are cheap); only complete episodes ever enter a trajectory.
"""
from __future__ import annotations

import copy

import numpy as np

from ..core import Record, Trajectory
from ..neural import masked_softmax


def sample_rows(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Sample one index per row of a batch of categorical distributions."""
    cum = np.cumsum(probs, axis=1)
    u = rng.random(probs.shape[0]) * cum[:, -1]
    idx = np.minimum((cum < u[:, None]).sum(axis=1), probs.shape[1] - 1)
    # u == 0 can land on a zero-probability leading entry; nudge forward
    bad = probs[np.arange(len(idx)), idx] <= 0.0
    for r in np.flatnonzero(bad):
        idx[r] = int(np.argmax(probs[r] > 0.0))
    return idx


class NetActor:
    """Batched acting interface over a plain actor-critic net."""

    def __init__(self, net, greedy: bool = False):
        self.net = net
        self.greedy = greedy

    def act_batch(self, obs: np.ndarray, masks: np.ndarray,
                  rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        logits, value, _, _ = self.net.forward(obs)
        probs = masked_softmax(logits, masks)
        if self.greedy:
            actions = np.argmax(probs, axis=1)
        else:
            actions = sample_rows(probs, rng)
        logp = np.log(probs[np.arange(len(actions)), actions])
        return actions, logp, value


class ModularActor:
    """Batched acting interface over a modular policy paired with one head."""

    def __init__(self, policy, partner_id: int, greedy: bool = False):
        self.policy = policy
        self.partner_id = partner_id
        self.greedy = greedy

    def act_batch(self, obs: np.ndarray, masks: np.ndarray,
                  rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        out = self.policy.forward(obs, self.partner_id, masks)
        probs = out["dist"].probs
        if self.greedy:
            actions = np.argmax(probs, axis=1)
        else:
            actions = sample_rows(probs, rng)
        logp = out["dist"].log_probs[np.arange(len(actions)), actions]
        return actions, logp, out["value"]


class ScriptedSeat:
    """Adapter for scripted actors; keeps one stateful instance per env."""

    def __init__(self, partner):
        self.partner = partner

    def spawn_for(self, n: int) -> list:
        out = []
        for _ in range(n):
            if hasattr(self.partner, "spawn"):
                p = self.partner.spawn()
            else:
                p = copy.deepcopy(self.partner)
            if hasattr(p, "begin_episode"):
                p.begin_episode()
            out.append(p)
        return out


def collect(env_factory, seats: dict[int, object], n_steps: int,
            rng: np.random.Generator, record_seats: set[int],
            env_id: str, partner_id: int = -1,
            batch_episodes: int = 64, max_episodes: int | None = None) -> Trajectory:
    """Run complete episodes until ``n_steps`` env steps (or, when
    ``max_episodes`` is given, exactly that many episodes) are collected.

    ``seats`` maps seat index to a NetActor/ModularActor or ScriptedSeat.
    Decisions of seats in ``record_seats`` carry their log-prob and value;
    other seats' records carry zeros.
    """
    traj = Trajectory(env_id=env_id, partner_id=partner_id)
    steps = 0
    episodes = 0

    def more_needed() -> bool:
        if max_episodes is not None:
            return episodes < max_episodes
        return steps < n_steps

    while more_needed():
        n_batch = batch_episodes
        if max_episodes is not None:
            n_batch = min(n_batch, max_episodes - episodes)
        envs = [env_factory() for _ in range(n_batch)]
        for env in envs:
            env.reset(int(rng.integers(0, 2**63 - 1)))
        scripted: dict[int, list] = {
            seat: src.spawn_for(n_batch) for seat, src in seats.items()
            if isinstance(src, ScriptedSeat)
        }
        ep_records: list[list[Record]] = [[] for _ in envs]
        active = list(range(n_batch))
        step_idx = 0
        simultaneous = envs[0].spec.simultaneous
        while active:
            obs_pairs = [envs[e].observations() for e in active]
            mask_pairs = [envs[e].legal_masks() for e in active]
            acting = (0, 1) if simultaneous else (envs[active[0]].current_player,)
            chosen = {}
            for seat in acting:
                src = seats[seat]
                if isinstance(src, ScriptedSeat):
                    acts = np.array([scripted[seat][e].act(envs[e]) for e in active])
                    logp = np.zeros(len(active))
                    val = np.zeros(len(active))
                else:
                    obs = np.stack([pair[seat] for pair in obs_pairs])
                    masks = np.stack([pair[seat] for pair in mask_pairs])
                    acts, logp, val = src.act_batch(obs, masks, rng)
                chosen[seat] = (acts, logp, val)
            still = []
            for pos, e in enumerate(active):
                env = envs[e]
                if simultaneous:
                    a0 = int(chosen[0][0][pos])
                    a1 = int(chosen[1][0][pos])
                    outcome = env.step((a0, a1))
                    for seat, act in ((0, a0), (1, a1)):
                        rec_on = seat in record_seats
                        ep_records[e].append(Record(
                            seat, obs_pairs[pos][seat], mask_pairs[pos][seat], act,
                            float(chosen[seat][1][pos]) if rec_on else 0.0,
                            float(chosen[seat][2][pos]) if rec_on else 0.0,
                            outcome.reward if seat == 0 else 0.0, step_idx))
                else:
                    seat = acting[0]
                    a = int(chosen[seat][0][pos])
                    outcome = env.step(a)
                    rec_on = seat in record_seats
                    ep_records[e].append(Record(
                        seat, obs_pairs[pos][seat], mask_pairs[pos][seat], a,
                        float(chosen[seat][1][pos]) if rec_on else 0.0,
                        float(chosen[seat][2][pos]) if rec_on else 0.0,
                        outcome.reward, step_idx))
                if not outcome.done:
                    still.append(e)
            active = still
            step_idx += 1
        for recs in ep_records:
            traj.episodes.append(recs)
            steps += recs[-1].step + 1
            episodes += 1
    return traj


def collect_rollouts(policy, partner_id: int, partner, env_factory,
                     n_env_steps: int, seed: int,
                     batch_episodes: int = 64) -> Trajectory:
    """Ego (seat 0, sampling from the composed policy for ``partner_id``)
    plays complete episodes against one partner until ``n_env_steps`` env
    steps are collected; log-probs and value estimates are recorded on the
    ego's decisions."""
    rng = np.random.default_rng(seed)
    env_id = env_factory().spec.env_id
    seats = {0: ModularActor(policy, partner_id)}
    seats[1] = partner if isinstance(partner, NetActor) else ScriptedSeat(partner)
    return collect(env_factory, seats, n_env_steps, rng, {0}, env_id,
                   partner_id=partner_id, batch_episodes=batch_episodes)


def to_batch(traj: Trajectory, seat: int, gamma: float, gae_lambda: float) -> dict:
    """Flatten one seat's decisions into PPO arrays with GAE advantages.

    Rewards emitted between a seat's consecutive decisions are discounted
    back to the earlier decision, so turn-based and simultaneous games share
    one advantage computation.
    """
    obs, masks, actions, logp, values, advs, rets = [], [], [], [], [], [], []
    ep_returns = []
    for ep in traj.episodes:
        n_env_steps = ep[-1].step + 1
        rewards = np.zeros(n_env_steps)
        for rec in ep:
            rewards[rec.step] += rec.reward
        ep_returns.append(float(rewards.sum()))
        decisions = [rec for rec in ep if rec.acting_player == seat]
        if not decisions:
            continue
        k = len(decisions)
        steps_k = [rec.step for rec in decisions]
        seg_rewards = np.zeros(k)
        seg_gamma = np.zeros(k)
        for j in range(k):
            lo = steps_k[j]
            hi = steps_k[j + 1] if j + 1 < k else n_env_steps
            seg = rewards[lo:hi]
            seg_rewards[j] = float(np.sum(seg * gamma ** np.arange(len(seg))))
            seg_gamma[j] = gamma ** (hi - lo)
        vals = np.array([rec.value_estimate for rec in decisions])
        adv = np.zeros(k)
        last = 0.0
        for j in range(k - 1, -1, -1):
            next_v = vals[j + 1] if j + 1 < k else 0.0
            delta = seg_rewards[j] + seg_gamma[j] * next_v - vals[j]
            last = delta + seg_gamma[j] * gae_lambda * (last if j + 1 < k else 0.0)
            adv[j] = last
        for j, rec in enumerate(decisions):
            obs.append(rec.obs)
            masks.append(rec.legal_mask)
            actions.append(rec.action)
            logp.append(rec.log_prob)
            values.append(rec.value_estimate)
            advs.append(adv[j])
            rets.append(adv[j] + vals[j])
    return {
        "obs": np.array(obs), "masks": np.array(masks, dtype=bool),
        "actions": np.array(actions, dtype=np.int64), "old_logp": np.array(logp),
        "values": np.array(values), "adv": np.array(advs), "returns": np.array(rets),
        "episode_returns": np.array(ep_returns),
    }
