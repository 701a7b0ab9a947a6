"""Clipped-surrogate policy optimization with an optional marginal
regularizer on the task module.

The per-sample policy objective is min(r*A, clip(r, 1-eps, 1+eps)*A); the
total loss is

    policy + value_coef * value - entropy_coef * entropy + lam * mean D(s)

where D(s) is the L1 distance between the task module's action distribution
and the average composed distribution over all partner heads, the average
treated as a constant (no gradient reaches the partner heads or the trunk
through it). With lam == 0 the regularizer code path is skipped entirely,
so training is exactly plain clipped-surrogate optimization.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ..neural import Adam, masked_log_softmax, masked_softmax
from ..policy import ModularPolicy


class TrainingDiverged(RuntimeError):
    """Non-finite loss encountered; carries the last diagnostics."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


@dataclass
class PpoConfig:
    timesteps: int
    rollout_steps: int
    minibatch: int
    epochs: int
    lr: float = 3e-4
    clip_ratio: float = 0.2
    discount: float = 0.99
    gae_lambda: float = 0.95
    value_coef: float = 0.5
    entropy_coef: float = 0.01
    lam: float = 0.0          # marginal-regularizer weight, in [0, 0.5]
    batch_episodes: int = 64

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lam must be >= 0")

    def with_(self, **kw) -> "PpoConfig":
        return replace(self, **kw)


_SELFPLAY = {
    "bandit": dict(timesteps=10_000, minibatch=16, epochs=20, discount=1.0,
                   rollout_steps=64, batch_episodes=64),
    "blocks": dict(timesteps=1_000_000, minibatch=40, epochs=10, discount=0.99,
                   rollout_steps=240, batch_episodes=40),
    "hanabi": dict(timesteps=500_000, minibatch=160, epochs=5, discount=0.99,
                   rollout_steps=640, batch_episodes=64),
}
_ADAPT = {
    "bandit": dict(minibatch=16, epochs=50),
    "blocks": dict(minibatch=160, epochs=5),
    "hanabi": dict(minibatch=160, epochs=5),
}


def default_config(env_id: str, phase: str = "train") -> PpoConfig:
    """Per-environment defaults; ``phase`` is "train" or "adapt"."""
    kw = dict(_SELFPLAY[env_id])
    if phase == "adapt":
        kw.update(_ADAPT[env_id])
    elif phase != "train":
        raise ValueError(f"unknown phase {phase!r}")
    return PpoConfig(**kw)


def _entropy_terms(probs: np.ndarray, logp: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    plogp = np.where(probs > 0.0, probs * np.where(np.isfinite(logp), logp, 0.0), 0.0)
    ent = -plogp.sum(axis=1)
    return ent, plogp


def _policy_grad_coeffs(ratio: np.ndarray, adv: np.ndarray, clip: float) -> tuple[np.ndarray, np.ndarray]:
    surr1 = ratio * adv
    surr2 = np.clip(ratio, 1.0 - clip, 1.0 + clip) * adv
    objective = np.minimum(surr1, surr2)
    active = surr1 <= surr2            # unclipped branch carries the gradient
    coeff = np.where(active, ratio * adv, 0.0)
    return objective, coeff


def normalize_advantages(batch: dict) -> dict:
    """Advantages standardized once over the whole collected batch.

    Width-16 minibatch standardization amplifies noise enough to knock
    converged contexts off their optima, so normalization happens at batch
    granularity before the epoch loop.
    """
    adv = batch["adv"]
    if adv.size:
        batch = dict(batch)
        batch["adv"] = (adv - adv.mean()) / (adv.std() + 1e-8)
    return batch


def modular_loss_and_grads(policy: ModularPolicy, partner_id: int, mb: dict,
                           cfg: PpoConfig, reg_head_ids: list[int] | None = None
                           ) -> tuple[dict, dict, dict]:
    """Forward + analytic backward for one minibatch.

    Returns (parts, task_grads, partner_grads). The regularizer contributes
    gradient only through the task module's action logits.
    """
    obs, masks = mb["obs"], mb["masks"]
    actions, old_logp = mb["actions"], mb["old_logp"]
    B = obs.shape[0]
    rows = np.arange(B)
    adv = mb["adv"]
    out = policy.forward(obs, partner_id, masks)
    dist = out["dist"]
    logp_all = dist.log_probs
    probs = dist.probs
    logp = logp_all[rows, actions]
    ratio = np.exp(logp - old_logp)
    objective, coeff = _policy_grad_coeffs(ratio, adv, cfg.clip_ratio)
    policy_loss = -float(objective.mean())
    value = out["value"]
    verr = value - mb["returns"]
    value_loss = float(np.mean(verr ** 2))
    ent, _ = _entropy_terms(probs, logp_all)
    entropy = float(ent.mean())

    # d(total)/d(composed logits)
    d_logits = np.zeros_like(probs)
    onehot = np.zeros_like(probs)
    onehot[rows, actions] = 1.0
    d_logits += (-coeff / B)[:, None] * (onehot - probs)
    safe_logp = np.where(np.isfinite(logp_all), logp_all, 0.0)
    d_logits += (cfg.entropy_coef / B) * probs * (safe_logp + ent[:, None])
    d_value = cfg.value_coef * 2.0 * verr / B

    parts = {"policy_loss": policy_loss, "value_loss": value_loss,
             "entropy": entropy, "reg_d": 0.0}
    d_task_logits = d_logits.copy()
    if cfg.lam > 0.0:
        head_ids = reg_head_ids if reg_head_ids is not None else policy.active_ids()
        t_logits = dist.task_logits
        g = masked_softmax(t_logits, masks)
        z = out["z"]
        avg = np.zeros_like(g)
        for i in head_ids:
            p_logits_i, _, _, _ = policy.partners[i].forward(z)
            avg += masked_softmax(t_logits + p_logits_i, masks)
        avg /= len(head_ids)
        diff = g - avg
        d_rows = np.abs(diff).sum(axis=1)
        parts["reg_d"] = float(d_rows.mean())
        sign = np.sign(diff)
        inner = (sign * g).sum(axis=1, keepdims=True)
        d_task_logits += (cfg.lam / B) * g * (sign - inner)

    total = (policy_loss + cfg.value_coef * value_loss
             - cfg.entropy_coef * entropy + cfg.lam * parts["reg_d"])
    parts["total"] = total
    if not np.isfinite(total):
        raise TrainingDiverged("non-finite loss", parts)

    pnet = policy.partners[partner_id]
    p_grads, d_z = pnet.backward(out["partner_cache"], d_logits, d_value)
    t_grads, _ = policy.task.backward(out["task_cache"], d_task_logits, d_value, d_z)
    return parts, t_grads, p_grads


def plain_loss_and_grads(net, mb: dict, cfg: PpoConfig) -> tuple[dict, dict]:
    """Same objective for a single actor-critic net (no modular terms)."""
    obs, masks = mb["obs"], mb["masks"]
    actions, old_logp = mb["actions"], mb["old_logp"]
    B = obs.shape[0]
    rows = np.arange(B)
    adv = mb["adv"]
    logits, value, _, cache = net.forward(obs)
    logp_all = masked_log_softmax(logits, masks)
    probs = np.where(masks, np.exp(np.where(masks, logp_all, 0.0)), 0.0)
    logp = logp_all[rows, actions]
    ratio = np.exp(logp - old_logp)
    objective, coeff = _policy_grad_coeffs(ratio, adv, cfg.clip_ratio)
    policy_loss = -float(objective.mean())
    verr = value - mb["returns"]
    value_loss = float(np.mean(verr ** 2))
    ent, _ = _entropy_terms(probs, logp_all)
    entropy = float(ent.mean())
    total = policy_loss + cfg.value_coef * value_loss - cfg.entropy_coef * entropy
    if not np.isfinite(total):
        raise TrainingDiverged("non-finite loss",
                               {"policy_loss": policy_loss, "value_loss": value_loss})

    d_logits = np.zeros_like(probs)
    onehot = np.zeros_like(probs)
    onehot[rows, actions] = 1.0
    d_logits += (-coeff / B)[:, None] * (onehot - probs)
    safe_logp = np.where(np.isfinite(logp_all), logp_all, 0.0)
    d_logits += (cfg.entropy_coef / B) * probs * (safe_logp + ent[:, None])
    d_value = cfg.value_coef * 2.0 * verr / B
    grads, _ = net.backward(cache, d_logits, d_value)
    parts = {"policy_loss": policy_loss, "value_loss": value_loss,
             "entropy": entropy, "total": total}
    return parts, grads


def minibatch_slices(n: int, size: int, rng: np.random.Generator):
    perm = rng.permutation(n)
    for start in range(0, n, size):
        idx = perm[start:start + size]
        if len(idx) >= 2:
            yield idx


def take(mb: dict, idx: np.ndarray) -> dict:
    return {k: v[idx] for k, v in mb.items() if k != "episode_returns"}


def ppo_update_modular(policy: ModularPolicy, partner_id: int, batch: dict,
                       cfg: PpoConfig, rng: np.random.Generator,
                       opt_task: Adam | None, opt_partner: Adam | None,
                       reg_head_ids: list[int] | None = None) -> dict:
    """Epochs of minibatch updates on one partner's rollout.

    Passing None for an optimizer freezes that block (it still carries
    gradient to the blocks upstream of it).
    """
    batch = normalize_advantages(batch)
    n = batch["obs"].shape[0]
    agg = {"policy_loss": 0.0, "value_loss": 0.0, "entropy": 0.0, "reg_d": 0.0,
           "total": 0.0, "n_updates": 0}
    for _ in range(cfg.epochs):
        for idx in minibatch_slices(n, cfg.minibatch, rng):
            parts, t_grads, p_grads = modular_loss_and_grads(
                policy, partner_id, take(batch, idx), cfg, reg_head_ids)
            if opt_task is not None:
                opt_task.step(policy.task.params, t_grads)
            if opt_partner is not None:
                opt_partner.step(policy.partners[partner_id].params, p_grads)
            for k in ("policy_loss", "value_loss", "entropy", "reg_d", "total"):
                agg[k] += parts[k]
            agg["n_updates"] += 1
    if agg["n_updates"]:
        for k in ("policy_loss", "value_loss", "entropy", "reg_d", "total"):
            agg[k] /= agg["n_updates"]
    return agg


def ppo_update_plain(net, batch: dict, cfg: PpoConfig, rng: np.random.Generator,
                     opt: Adam) -> dict:
    batch = normalize_advantages(batch)
    n = batch["obs"].shape[0]
    agg = {"policy_loss": 0.0, "value_loss": 0.0, "entropy": 0.0, "total": 0.0,
           "n_updates": 0}
    for _ in range(cfg.epochs):
        for idx in minibatch_slices(n, cfg.minibatch, rng):
            parts, grads = plain_loss_and_grads(net, take(batch, idx), cfg)
            opt.step(net.params, grads)
            for k in ("policy_loss", "value_loss", "entropy", "total"):
                agg[k] += parts[k]
            agg["n_updates"] += 1
    if agg["n_updates"]:
        for k in ("policy_loss", "value_loss", "entropy", "total"):
            agg[k] /= agg["n_updates"]
    return agg
