"""Composed policy: one shared task network plus one head network per
partner. The task network maps an observation to action logits, a scalar
value, and a latent; each partner network maps that latent to its own
logits and value. Acting with partner i uses the renormalized product of
the two action distributions, done in logit space:

    probs = masked_softmax(task_logits + partner_logits_i)

which equals the product of the two softmax distributions renormalized
over the legal actions. The combined value is the sum of the two heads.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .neural import ActorCriticNet, masked_log_softmax, masked_softmax

HIDDEN_BY_ENV = {"bandit": 30, "blocks": 80, "hanabi": 500}
LOW_Z_BY_ENV = {"bandit": 5, "blocks": 20, "hanabi": 50}


@dataclass
class ComposedDistribution:
    probs: np.ndarray
    log_probs: np.ndarray
    task_logits: np.ndarray
    partner_logits: np.ndarray


def compose(task_logits: np.ndarray, partner_logits: np.ndarray,
            legal_mask: np.ndarray) -> ComposedDistribution:
    total = np.asarray(task_logits, dtype=np.float64) + np.asarray(partner_logits, dtype=np.float64)
    logp = masked_log_softmax(total, legal_mask)
    mask = np.asarray(legal_mask, dtype=bool)
    probs = np.where(mask, np.exp(np.where(mask, logp, 0.0)), 0.0)
    return ComposedDistribution(probs, logp, np.asarray(task_logits), np.asarray(partner_logits))


class ModularPolicy:
    """Task module + n partner modules for one ego seat of one environment."""

    def __init__(self, env_id: str, obs_dim: int, act_dim: int, n_partners: int,
                 rng: np.random.Generator, hidden: int | None = None,
                 low_dim_z: bool = False):
        self.env_id = env_id
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        self.hidden = hidden if hidden is not None else HIDDEN_BY_ENV[env_id]
        self.low_dim_z = low_dim_z
        z_dim = LOW_Z_BY_ENV[env_id] if low_dim_z else None
        self._rng = rng
        self.task = ActorCriticNet(obs_dim, self.hidden, act_dim, z_dim=z_dim, rng=rng)
        self.z_dim = self.task.z_dim
        self.partners: list[ActorCriticNet | None] = []
        self.frozen: set[int] = set()
        for _ in range(n_partners):
            self.attach_partner_module()

    # -- module management -------------------------------------------------
    def attach_partner_module(self) -> int:
        net = ActorCriticNet(self.z_dim, self.hidden, self.act_dim, rng=self._rng)
        self.partners.append(net)
        return len(self.partners) - 1

    def detach_partner_module(self, partner_id: int) -> None:
        self._check_id(partner_id)
        self.partners[partner_id] = None

    def reinitialize_partner_module(self, partner_id: int) -> None:
        self._check_id(partner_id)
        self.partners[partner_id] = ActorCriticNet(self.z_dim, self.hidden,
                                                   self.act_dim, rng=self._rng)
        self.frozen.discard(partner_id)

    def freeze(self, partner_id: int) -> None:
        self._check_id(partner_id)
        self.frozen.add(partner_id)

    def unfreeze(self, partner_id: int) -> None:
        self.frozen.discard(partner_id)

    def _check_id(self, partner_id: int) -> None:
        if not (0 <= partner_id < len(self.partners)) or self.partners[partner_id] is None:
            raise KeyError(f"unknown partner module {partner_id}")

    @property
    def n_partners(self) -> int:
        return sum(1 for p in self.partners if p is not None)

    def active_ids(self) -> list[int]:
        return [i for i, p in enumerate(self.partners) if p is not None]

    # -- forward passes -----------------------------------------------------
    def forward(self, obs: np.ndarray, partner_id: int, legal_mask: np.ndarray) -> dict:
        """Batched forward; returns distributions, values and caches."""
        self._check_id(partner_id)
        obs = np.atleast_2d(np.asarray(obs, dtype=np.float64))
        mask = np.atleast_2d(np.asarray(legal_mask, dtype=bool))
        t_logits, t_value, z, t_cache = self.task.forward(obs)
        pnet = self.partners[partner_id]
        p_logits, p_value, _, p_cache = pnet.forward(z)
        dist = compose(t_logits, p_logits, mask)
        return {
            "dist": dist, "value": t_value + p_value,
            "task_value": t_value, "partner_value": p_value, "z": z,
            "task_cache": t_cache, "partner_cache": p_cache,
        }

    def policy_forward(self, obs: np.ndarray, partner_id: int,
                       legal_mask: np.ndarray) -> tuple[ComposedDistribution, float]:
        out = self.forward(obs, partner_id, legal_mask)
        return out["dist"], float(out["value"][0])

    def task_marginal(self, obs: np.ndarray, legal_mask: np.ndarray) -> np.ndarray:
        """Task-module action distribution over legal actions (no partner factor)."""
        obs = np.atleast_2d(np.asarray(obs, dtype=np.float64))
        t_logits, _, _, _ = self.task.forward(obs)
        out = masked_softmax(t_logits, np.atleast_2d(np.asarray(legal_mask, dtype=bool)))
        return out[0] if out.shape[0] == 1 else out

    def task_marginal_unmasked(self, obs: np.ndarray) -> np.ndarray:
        obs = np.atleast_2d(np.asarray(obs, dtype=np.float64))
        t_logits, _, _, _ = self.task.forward(obs)
        full = np.ones_like(t_logits, dtype=bool)
        out = masked_softmax(t_logits, full)
        return out[0] if out.shape[0] == 1 else out

    def average_composed(self, obs: np.ndarray, legal_mask: np.ndarray,
                         head_ids: list[int] | None = None) -> np.ndarray:
        """(1/n) sum_i pi_i(a|s) over the given (default: all active) heads."""
        obs = np.atleast_2d(np.asarray(obs, dtype=np.float64))
        mask = np.atleast_2d(np.asarray(legal_mask, dtype=bool))
        ids = head_ids if head_ids is not None else self.active_ids()
        t_logits, _, z, _ = self.task.forward(obs)
        acc = np.zeros_like(t_logits)
        for i in ids:
            p_logits, _, _, _ = self.partners[i].forward(z)
            acc += masked_softmax(t_logits + p_logits, mask)
        return acc / len(ids)

    def act(self, obs: np.ndarray, partner_id: int, legal_mask: np.ndarray,
            rng: np.random.Generator | None = None) -> int:
        """Single-state action: greedy argmax, or a sample when rng is given."""
        dist, _ = self.policy_forward(obs, partner_id, legal_mask)
        p = dist.probs[0]
        if rng is None:
            return int(np.argmax(p))
        return int(rng.choice(p.shape[0], p=p / p.sum()))

    # -- parameter access ----------------------------------------------------
    def parameter_blocks(self) -> dict[str, dict[str, np.ndarray]]:
        blocks = {"task": self.task.params}
        for i in self.active_ids():
            blocks[f"partner_{i}"] = self.partners[i].params
        return blocks

    def checksum(self) -> float:
        return float(sum(np.sum(np.abs(v)) for blk in self.parameter_blocks().values()
                         for v in blk.values()))
