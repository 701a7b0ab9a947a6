"""Transfer procedures: adapting a trained policy to a new partner on the
same task, fine-tuning the task module for a tweaked task with frozen
heads, and zero-shot recomposition with held-out heads.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import spawn_rngs
from .neural import ActorCriticNet, Adam
from .oracles import eval_score
from .policy import ModularPolicy
from .training.algos import EGO_SEAT, PARTNER_SEAT, _seat_source
from .training.ppo import PpoConfig, ppo_update_modular, ppo_update_plain
from .training.rollout import ModularActor, NetActor, collect, to_batch


@dataclass
class ScorePoint:
    timesteps: int
    mean_score: float
    stderr: float


@dataclass
class AdaptationResult:
    curve: list[ScorePoint]
    policy: object        # adapted ModularPolicy or plain net

    def auc(self) -> float:
        """Trapezoidal area under the score curve, normalized by duration."""
        ts = np.array([p.timesteps for p in self.curve], dtype=np.float64)
        ys = np.array([p.mean_score for p in self.curve])
        if len(ts) < 2:
            return float(ys.mean())
        return float(np.trapezoid(ys, ts) / (ts[-1] - ts[0]))

    def final_score(self) -> float:
        return self.curve[-1].mean_score


def _eval_point(ego, partner, env_factory, episodes, seed, timesteps) -> ScorePoint:
    mean, se = eval_score(ego, partner, env_factory, episodes, seed)
    return ScorePoint(timesteps, mean, se)


def adapt_new_partner(policy: ModularPolicy, new_partner, env_factory,
                      cfg: PpoConfig, budget: int, seed: int,
                      eval_every: int, eval_episodes: int = 200
                      ) -> AdaptationResult:
    """Attach a fresh head and train it together with the task module
    against the new partner. Old heads receive no updates. The marginal
    term is disabled here: with a single new partner it would collapse the
    task module onto that partner's behavior.
    """
    spec = env_factory().spec
    rollout_rng, update_rng, eval_rng = spawn_rngs(seed, 3)
    eval_seed = int(eval_rng.integers(2**31))
    old_ids = list(policy.active_ids())
    pid = policy.attach_partner_module()
    cfg = cfg.with_(lam=0.0)
    opt_task = Adam(policy.task.params, cfg.lr)
    opt_head = Adam(policy.partners[pid].params, cfg.lr)
    curve = [_eval_point((policy, pid), new_partner, env_factory,
                         eval_episodes, eval_seed, 0)]
    steps = 0
    next_eval = eval_every
    while steps < budget:
        traj = collect(env_factory,
                       {EGO_SEAT: ModularActor(policy, pid),
                        PARTNER_SEAT: _seat_source(new_partner)},
                       cfg.rollout_steps, rollout_rng, {EGO_SEAT}, spec.env_id,
                       partner_id=pid, batch_episodes=cfg.batch_episodes)
        batch = to_batch(traj, EGO_SEAT, cfg.discount, cfg.gae_lambda)
        ppo_update_modular(policy, pid, batch, cfg, update_rng, opt_task, opt_head)
        steps += traj.n_steps
        if steps >= next_eval:
            curve.append(_eval_point((policy, pid), new_partner, env_factory,
                                     eval_episodes, eval_seed, steps))
            next_eval += eval_every
    if curve[-1].timesteps < steps:
        curve.append(_eval_point((policy, pid), new_partner, env_factory,
                                 eval_episodes, eval_seed, steps))
    assert policy.active_ids()[: len(old_ids)] == old_ids
    return AdaptationResult(curve, policy)


def adapt_plain(net: ActorCriticNet, new_partner, env_factory, cfg: PpoConfig,
                budget: int, seed: int, eval_every: int,
                eval_episodes: int = 200) -> AdaptationResult:
    """Whole-net fine-tuning for the non-modular baselines (a copy is
    tuned; the given net stays untouched)."""
    spec = env_factory().spec
    rollout_rng, update_rng, eval_rng = spawn_rngs(seed, 3)
    eval_seed = int(eval_rng.integers(2**31))
    tuned = net.clone()
    opt = Adam(tuned.params, cfg.lr)
    curve = [_eval_point(tuned, new_partner, env_factory, eval_episodes, eval_seed, 0)]
    steps = 0
    next_eval = eval_every
    while steps < budget:
        traj = collect(env_factory,
                       {EGO_SEAT: NetActor(tuned),
                        PARTNER_SEAT: _seat_source(new_partner)},
                       cfg.rollout_steps, rollout_rng, {EGO_SEAT}, spec.env_id,
                       batch_episodes=cfg.batch_episodes)
        batch = to_batch(traj, EGO_SEAT, cfg.discount, cfg.gae_lambda)
        ppo_update_plain(tuned, batch, cfg, update_rng, opt)
        steps += traj.n_steps
        if steps >= next_eval:
            curve.append(_eval_point(tuned, new_partner, env_factory,
                                     eval_episodes, eval_seed, steps))
            next_eval += eval_every
    if curve[-1].timesteps < steps:
        curve.append(_eval_point(tuned, new_partner, env_factory,
                                 eval_episodes, eval_seed, steps))
    return AdaptationResult(curve, tuned)


def transfer_new_task(policy: ModularPolicy, new_env_factory, partners: list,
                      cfg: PpoConfig, budget: int, seed: int,
                      freeze_heads: bool = True) -> ModularPolicy:
    """Fine-tune the task module on a tweaked task, composing with the first
    len(partners) heads. The remaining heads are untouched and reserved for
    zero-shot recomposition.

    ``freeze_heads`` keeps the active heads' parameters fixed (the method's
    own transfer procedure); pass False to let them train jointly with the
    trunk (the unanchored baseline's natural fine-tune).

    Requires a policy holding 2n heads for n partners.
    """
    ids = policy.active_ids()
    n = len(partners)
    if len(ids) < 2 * n:
        raise ValueError(f"need at least {2*n} partner modules, have {len(ids)}")
    from .training.algos import train_ego
    updatable = set() if freeze_heads else set(ids[:n])
    train_ego(new_env_factory, partners, cfg.with_(timesteps=budget), seed,
              policy=policy, reg_head_ids=ids[:n],
              update_partner_ids=updatable, update_task=True,
              partner_module_of={i: ids[i] for i in range(n)})
    return policy


def zero_shot_eval(policy: ModularPolicy, module_ids: list[int], partners: list,
                   env_factory, episodes: int, seed: int) -> list[float]:
    """Greedy evaluation of (fine-tuned task module, held-out head) pairs;
    performs no parameter updates."""
    if len(module_ids) != len(partners):
        raise ValueError("one module id per held-out partner")
    before = policy.checksum()
    scores = []
    for pid, partner in zip(module_ids, partners):
        mean, _ = eval_score((policy, pid), partner, env_factory, episodes, seed)
        scores.append(mean)
    after = policy.checksum()
    if before != after:
        raise RuntimeError("zero-shot evaluation mutated parameters")
    return scores
