"""Training procedures: round-robin multi-partner training of the modular
policy with the marginal regularizer, joint self-play, the gradient-
averaging baseline, and first-order meta-learning.
"""
from __future__ import annotations

import logging

import numpy as np

from ..core import spawn_rngs
from ..neural import ActorCriticNet, Adam
from ..policy import ModularPolicy
from .ppo import (PpoConfig, minibatch_slices, normalize_advantages,
                  plain_loss_and_grads, ppo_update_modular, ppo_update_plain, take)
from .rollout import ModularActor, NetActor, ScriptedSeat, collect, to_batch

log = logging.getLogger(__name__)

EGO_SEAT = 0
PARTNER_SEAT = 1


def _seat_source(partner):
    return partner if isinstance(partner, (NetActor, ScriptedSeat)) else ScriptedSeat(partner)


def _env_dims(env_factory):
    env = env_factory()
    return env.spec


class MetricsSink:
    """Collects fixed-schema metric rows during a run."""

    def __init__(self):
        self.rows: list[dict] = []

    def add(self, phase: str, partner_id, timesteps: int, mean_score: float,
            mean_d: float | None) -> None:
        self.rows.append({
            "phase": phase, "partner_id": partner_id, "timesteps": timesteps,
            "mean_score": mean_score,
            "mean_D": float("nan") if mean_d is None else mean_d,
        })


def train_ego(env_factory, partners: list, cfg: PpoConfig, seed: int,
              low_dim_z: bool = False, policy: ModularPolicy | None = None,
              reg_head_ids: list[int] | None = None,
              update_partner_ids: set[int] | None = None,
              update_task: bool = True,
              partner_module_of: dict[int, int] | None = None,
              sink: MetricsSink | None = None) -> tuple[ModularPolicy, MetricsSink]:
    """Round-robin training of {task module, one head per partner}.

    Every outer iteration runs one collect+update cycle against each partner
    in order, so after T iterations each partner has had exactly T cycles.
    The same routine drives fresh training, adaptation (pass an existing
    ``policy`` and restrict ``update_partner_ids``) and task transfer
    (``update_partner_ids=set()`` freezes every head).
    """
    spec = _env_dims(env_factory)
    init_rng, rollout_rng, update_rng = spawn_rngs(seed, 3)
    if policy is None:
        policy = ModularPolicy(spec.env_id, spec.obs_dims[EGO_SEAT],
                               spec.action_counts[EGO_SEAT], len(partners),
                               rng=init_rng, low_dim_z=low_dim_z)
    mapping = partner_module_of or {i: i for i in range(len(partners))}
    opt_task = Adam(policy.task.params, cfg.lr) if update_task else None
    opts = {}
    for i in range(len(partners)):
        pid = mapping[i]
        if update_partner_ids is None or pid in update_partner_ids:
            opts[pid] = Adam(policy.partners[pid].params, cfg.lr)
        else:
            opts[pid] = None
    sink = sink or MetricsSink()
    steps = 0
    iteration = 0
    while steps < cfg.timesteps:
        iteration += 1
        for i, partner in enumerate(partners):
            pid = mapping[i]
            traj = collect(env_factory,
                           {EGO_SEAT: ModularActor(policy, pid),
                            PARTNER_SEAT: _seat_source(partner)},
                           cfg.rollout_steps, rollout_rng, {EGO_SEAT},
                           spec.env_id, partner_id=pid,
                           batch_episodes=cfg.batch_episodes)
            batch = to_batch(traj, EGO_SEAT, cfg.discount, cfg.gae_lambda)
            diag = ppo_update_modular(policy, pid, batch, cfg, update_rng,
                                      opt_task, opts[pid],
                                      reg_head_ids=reg_head_ids)
            steps += traj.n_steps
            sink.add("train", pid, steps, float(batch["episode_returns"].mean()),
                     diag["reg_d"] if cfg.lam > 0 else None)
        if iteration % 50 == 0:
            log.info("train_ego %s iter=%d steps=%d", spec.env_id, iteration, steps)
    return policy, sink


def train_selfplay_partner(env_factory, cfg: PpoConfig, seed: int,
                           hidden: int | None = None
                           ) -> tuple[ActorCriticNet, ActorCriticNet, MetricsSink]:
    """Joint PPO from scratch on both seats; returns (seat0, seat1) nets.

    Hanabi uses one seat-symmetric net for both seats (the observation
    encoding is seat-relative); the other games train one net per seat.
    """
    spec = _env_dims(env_factory)
    from ..policy import HIDDEN_BY_ENV
    h = hidden if hidden is not None else HIDDEN_BY_ENV[spec.env_id]
    init_rng, rollout_rng, update_rng = spawn_rngs(seed, 3)
    shared = spec.env_id == "hanabi"
    net0 = ActorCriticNet(spec.obs_dims[0], h, spec.action_counts[0], rng=init_rng)
    net1 = net0 if shared else ActorCriticNet(spec.obs_dims[1], h,
                                              spec.action_counts[1], rng=init_rng)
    opt0 = Adam(net0.params, cfg.lr)
    opt1 = opt0 if shared else Adam(net1.params, cfg.lr)
    sink = MetricsSink()
    steps = 0
    while steps < cfg.timesteps:
        traj = collect(env_factory, {0: NetActor(net0), 1: NetActor(net1)},
                       cfg.rollout_steps, rollout_rng, {0, 1}, spec.env_id,
                       batch_episodes=cfg.batch_episodes)
        b0 = to_batch(traj, 0, cfg.discount, cfg.gae_lambda)
        b1 = to_batch(traj, 1, cfg.discount, cfg.gae_lambda)
        if shared:
            merged = {k: np.concatenate([b0[k], b1[k]]) for k in
                      ("obs", "masks", "actions", "old_logp", "values", "adv", "returns")}
            ppo_update_plain(net0, merged, cfg, update_rng, opt0)
        else:
            ppo_update_plain(net0, b0, cfg, update_rng, opt0)
            ppo_update_plain(net1, b1, cfg, update_rng, opt1)
        steps += traj.n_steps
        sink.add("selfplay", -1, steps, float(b0["episode_returns"].mean()), None)
    return net0, net1, sink


def train_baseline_agg(env_factory, partners: list, cfg: PpoConfig, seed: int
                       ) -> tuple[ActorCriticNet, MetricsSink]:
    """One shared policy net; each optimization step applies the mean of the
    per-partner gradients computed on that partner's own fresh rollout."""
    spec = _env_dims(env_factory)
    from ..policy import HIDDEN_BY_ENV
    init_rng, rollout_rng, update_rng = spawn_rngs(seed, 3)
    net = ActorCriticNet(spec.obs_dims[EGO_SEAT], HIDDEN_BY_ENV[spec.env_id],
                         spec.action_counts[EGO_SEAT], rng=init_rng)
    opt = Adam(net.params, cfg.lr)
    sink = MetricsSink()
    steps = 0
    while steps < cfg.timesteps:
        batches = []
        scores = []
        for partner in partners:
            traj = collect(env_factory,
                           {EGO_SEAT: NetActor(net), PARTNER_SEAT: _seat_source(partner)},
                           cfg.rollout_steps, rollout_rng, {EGO_SEAT}, spec.env_id,
                           batch_episodes=cfg.batch_episodes)
            batch = normalize_advantages(
                to_batch(traj, EGO_SEAT, cfg.discount, cfg.gae_lambda))
            batches.append(batch)
            scores.append(float(batch["episode_returns"].mean()))
            steps += traj.n_steps
        n_min = min(b["obs"].shape[0] for b in batches)
        for _ in range(cfg.epochs):
            slice_sets = [list(minibatch_slices(n_min, cfg.minibatch, update_rng))
                          for _ in batches]
            for step_i in range(min(len(s) for s in slice_sets)):
                mean_grads = None
                for b, slices in zip(batches, slice_sets):
                    _, grads = plain_loss_and_grads(net, take(b, slices[step_i]), cfg)
                    if mean_grads is None:
                        mean_grads = {k: v / len(batches) for k, v in grads.items()}
                    else:
                        for k, v in grads.items():
                            mean_grads[k] += v / len(batches)
                opt.step(net.params, mean_grads)
        sink.add("train", -1, steps, float(np.mean(scores)), None)
    return net, sink


def train_fomaml(env_factory, partners: list, cfg: PpoConfig, seed: int,
                 inner_iterations: int = 4, inner_lr: float = 3e-4,
                 outer_step: float = 0.25,
                 inner_hp: dict | None = None) -> tuple[ActorCriticNet, MetricsSink]:
    """First-order meta-learning: adapt a clone to one sampled partner for a
    few inner cycles, then move the meta-parameters a fraction of the way
    toward the adapted ones. The inner loop is an adaptation run, so
    ``inner_hp`` carries the adaptation-table minibatch/epochs."""
    spec = _env_dims(env_factory)
    from ..policy import HIDDEN_BY_ENV
    init_rng, rollout_rng, update_rng, sample_rng = spawn_rngs(seed, 4)
    meta = ActorCriticNet(spec.obs_dims[EGO_SEAT], HIDDEN_BY_ENV[spec.env_id],
                          spec.action_counts[EGO_SEAT], rng=init_rng)
    sink = MetricsSink()
    inner_cfg = cfg.with_(lr=inner_lr, **(inner_hp or {}))
    steps = 0
    while steps < cfg.timesteps:
        i = int(sample_rng.integers(len(partners)))
        inner = meta.clone()
        opt = Adam(inner.params, inner_lr)
        score = 0.0
        for _ in range(inner_iterations):
            traj = collect(env_factory,
                           {EGO_SEAT: NetActor(inner),
                            PARTNER_SEAT: _seat_source(partners[i])},
                           cfg.rollout_steps, rollout_rng, {EGO_SEAT}, spec.env_id,
                           partner_id=i, batch_episodes=cfg.batch_episodes)
            batch = to_batch(traj, EGO_SEAT, cfg.discount, cfg.gae_lambda)
            ppo_update_plain(inner, batch, inner_cfg, update_rng, opt)
            steps += traj.n_steps
            score = float(batch["episode_returns"].mean())
        for k in meta.params:
            meta.params[k] += outer_step * (inner.params[k] - meta.params[k])
        sink.add("train", i, steps, score, None)
    return meta, sink


def train_baseline_modular(env_factory, partners: list, cfg: PpoConfig, seed: int,
                           low_dim_z: bool = False) -> tuple[ModularPolicy, MetricsSink]:
    """Modular architecture without the marginal term: exactly train_ego at
    lam=0 (the regularizer path is skipped when lam == 0)."""
    return train_ego(env_factory, partners, cfg.with_(lam=0.0), seed,
                     low_dim_z=low_dim_z)
