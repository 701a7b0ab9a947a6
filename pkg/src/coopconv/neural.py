"""Minimal differentiable building blocks backing every policy network.

One fixed architecture covers all uses: a 2-hidden-layer ReLU trunk with a
linear action head, a linear scalar value head, and an optional linear
latent head. Backpropagation is analytic (no autograd); everything runs in
float64 so results are reproducible bit-for-bit from a seed.
"""
from __future__ import annotations

import numpy as np

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


def orthogonal(rng: np.random.Generator, shape: tuple[int, int], gain: float) -> np.ndarray:
    """Orthogonal initialization (rows or columns orthonormal, scaled by gain)."""
    rows, cols = shape
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q *= np.sign(np.diag(r))  # fix sign ambiguity so the result is seed-stable
    if rows < cols:
        q = q.T
    return np.ascontiguousarray(gain * q[:rows, :cols])


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def masked_log_softmax(logits: np.ndarray, legal_mask: np.ndarray) -> np.ndarray:
    """Log-probabilities over the legal actions; illegal entries get -inf.

    Accepts a single vector or a batch (leading axis). Raises ValueError if
    any row has no legal action.
    """
    logits = np.asarray(logits, dtype=np.float64)
    mask = np.asarray(legal_mask, dtype=bool)
    if not np.all(mask.any(axis=-1)):
        raise ValueError("legal mask with no legal action")
    neg = np.where(mask, logits, -np.inf)
    m = np.max(neg, axis=-1, keepdims=True)
    shifted = neg - m
    lse = np.log(np.sum(np.exp(np.where(mask, shifted, -np.inf)) * mask, axis=-1, keepdims=True))
    out = shifted - lse
    return np.where(mask, out, -np.inf)


def masked_softmax(logits: np.ndarray, legal_mask: np.ndarray) -> np.ndarray:
    logp = masked_log_softmax(logits, legal_mask)
    probs = np.exp(np.where(np.asarray(legal_mask, dtype=bool), logp, -np.inf))
    return np.where(np.asarray(legal_mask, dtype=bool), probs, 0.0)


class ActorCriticNet:
    """obs -> 2xReLU trunk -> {action logits, scalar value, latent}.

    The latent is the second hidden activation by default, or a learned
    linear projection when ``z_dim`` is given. Parameters live in a flat
    name->array dict so optimizers and checkpoints need no structure.
    """

    def __init__(self, in_dim: int, hidden: int, act_dim: int,
                 z_dim: int | None = None, rng: np.random.Generator | None = None,
                 head_gain: float = 0.01):
        if rng is None:
            rng = np.random.default_rng(0)
        self.in_dim = in_dim
        self.hidden = hidden
        self.act_dim = act_dim
        self.z_dim = hidden if z_dim is None else z_dim
        self.projected_z = z_dim is not None
        g = np.sqrt(2.0)
        self.params: dict[str, np.ndarray] = {
            "W1": orthogonal(rng, (in_dim, hidden), g),
            "b1": np.zeros(hidden),
            "W2": orthogonal(rng, (hidden, hidden), g),
            "b2": np.zeros(hidden),
            "Wa": orthogonal(rng, (hidden, act_dim), head_gain),
            "ba": np.zeros(act_dim),
            "Wv": orthogonal(rng, (hidden, 1), 1.0),
            "bv": np.zeros(1),
        }
        if self.projected_z:
            self.params["Wz"] = orthogonal(rng, (hidden, self.z_dim), 1.0)
            self.params["bz"] = np.zeros(self.z_dim)

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, dict]:
        """Returns (logits (B,A), value (B,), z (B,Z), cache)."""
        p = self.params
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        h1 = relu(x @ p["W1"] + p["b1"])
        h2 = relu(h1 @ p["W2"] + p["b2"])
        logits = h2 @ p["Wa"] + p["ba"]
        value = (h2 @ p["Wv"] + p["bv"])[:, 0]
        z = h2 @ p["Wz"] + p["bz"] if self.projected_z else h2
        cache = {"x": x, "h1": h1, "h2": h2}
        return logits, value, z, cache

    def backward(self, cache: dict, d_logits: np.ndarray | None,
                 d_value: np.ndarray | None, d_z: np.ndarray | None = None
                 ) -> tuple[dict[str, np.ndarray], np.ndarray]:
        """Analytic gradients for a scalar loss; returns (param grads, d_input)."""
        p = self.params
        x, h1, h2 = cache["x"], cache["h1"], cache["h2"]
        B = x.shape[0]
        d_h2 = np.zeros_like(h2)
        grads: dict[str, np.ndarray] = {}
        if d_logits is not None:
            grads["Wa"] = h2.T @ d_logits
            grads["ba"] = d_logits.sum(axis=0)
            d_h2 += d_logits @ p["Wa"].T
        else:
            grads["Wa"] = np.zeros_like(p["Wa"])
            grads["ba"] = np.zeros_like(p["ba"])
        if d_value is not None:
            dv = d_value.reshape(B, 1)
            grads["Wv"] = h2.T @ dv
            grads["bv"] = dv.sum(axis=0)
            d_h2 += dv @ p["Wv"].T
        else:
            grads["Wv"] = np.zeros_like(p["Wv"])
            grads["bv"] = np.zeros_like(p["bv"])
        if self.projected_z:
            if d_z is not None:
                grads["Wz"] = h2.T @ d_z
                grads["bz"] = d_z.sum(axis=0)
                d_h2 += d_z @ p["Wz"].T
            else:
                grads["Wz"] = np.zeros_like(p["Wz"])
                grads["bz"] = np.zeros_like(p["bz"])
        elif d_z is not None:
            d_h2 += d_z
        d_h2 = d_h2 * (h2 > 0)
        grads["W2"] = h1.T @ d_h2
        grads["b2"] = d_h2.sum(axis=0)
        d_h1 = (d_h2 @ p["W2"].T) * (h1 > 0)
        grads["W1"] = x.T @ d_h1
        grads["b1"] = d_h1.sum(axis=0)
        d_x = d_h1 @ p["W1"].T
        return grads, d_x

    def clone(self) -> "ActorCriticNet":
        dup = ActorCriticNet.__new__(ActorCriticNet)
        dup.in_dim, dup.hidden, dup.act_dim = self.in_dim, self.hidden, self.act_dim
        dup.z_dim, dup.projected_z = self.z_dim, self.projected_z
        dup.params = {k: v.copy() for k, v in self.params.items()}
        return dup


class Adam:
    """Adaptive-moment gradient descent over a flat parameter dict."""

    def __init__(self, params: dict[str, np.ndarray], lr: float):
        self.lr = lr
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        b1t = 1.0 - ADAM_BETA1 ** self.t
        b2t = 1.0 - ADAM_BETA2 ** self.t
        for k, g in grads.items():
            m = self.m[k]
            v = self.v[k]
            m *= ADAM_BETA1
            m += (1.0 - ADAM_BETA1) * g
            v *= ADAM_BETA2
            v += (1.0 - ADAM_BETA2) * np.square(g)
            params[k] -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + ADAM_EPS)


def finite_difference_grads(loss_fn, params: dict[str, np.ndarray],
                            h: float = 1e-5) -> dict[str, np.ndarray]:
    """Central-difference gradient oracle; perturbs parameters in place."""
    grads = {}
    for k, arr in params.items():
        g = np.zeros(arr.size)
        for i in range(arr.size):
            orig = arr.flat[i]
            arr.flat[i] = orig + h
            up = loss_fn()
            arr.flat[i] = orig - h
            down = loss_fn()
            arr.flat[i] = orig
            g[i] = (up - down) / (2.0 * h)
        grads[k] = g.reshape(arr.shape)
    return grads
