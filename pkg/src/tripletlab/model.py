"""Embedding network, ranking losses, and the Adam optimizer.

The learner is a small ReLU MLP whose final layer projects onto the unit
sphere. Gradients are derived by hand (including the tangent-space
projection through the normalization) so the whole training path is plain
numpy and checkable against finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


# -------------------------
# Losses
# -------------------------

@dataclass(frozen=True)
class LossConfig:
    """Ranking-loss selection.

    kind "triplet": hinge on squared distances, max(0, d_ap^2 - d_an^2 + gamma).
    kind "margin": two independent hinges around a boundary beta_margin,
        max(0, gamma + d_ap - beta_margin) + max(0, gamma - d_an + beta_margin).
    beta_margin may optionally be learned per anchor class (see trainer);
    the loss functions here take the effective boundary as an argument and
    beta_lr is the plain gradient step applied to it.
    """

    kind: str = "triplet"
    gamma: float = 0.2
    beta_margin: float = 1.2
    learnable_beta: bool = False
    beta_lr: float = 5e-4

    def __post_init__(self):
        if self.kind not in ("triplet", "margin"):
            raise ValueError(f"unknown loss kind {self.kind!r}")
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if self.kind == "margin" and self.beta_margin <= 0:
            raise ValueError("beta_margin must be positive")


def triplet_loss(d_ap, d_an, gamma: float):
    """Hinge on the squared-distance ordering of a triplet."""
    return np.maximum(0.0, np.square(d_ap) - np.square(d_an) + gamma)


def margin_loss(d_ap, d_an, gamma: float, beta_margin):
    """Two-hinge pair loss: pull positives inside the boundary, push negatives out."""
    return np.maximum(0.0, gamma + d_ap - beta_margin) + np.maximum(
        0.0, gamma - d_an + beta_margin
    )


# -------------------------
# Embedding MLP
# -------------------------

_NORM_FLOOR = 1e-30  # keeps the normalization finite if a pre-norm row is exactly 0


@dataclass
class ForwardCache:
    """Intermediate activations retained for exact backprop."""

    inputs: np.ndarray
    pre_acts: list        # z_l = a_{l-1} W_l + b_l for each hidden layer
    acts: list            # relu(z_l)
    pre_norm: np.ndarray  # final linear output y
    norms: np.ndarray     # row norms of y (floored)
    embeddings: np.ndarray
    version: int


class EmbeddingModel:
    """MLP input_dim -> hidden... -> embedding_dim with unit-norm output rows.

    Parameters live in per-layer arrays; get_params/set_params expose the
    flattened view used by the optimizer and gradient checks. set_params
    bumps a version counter so stale forward caches are rejected.
    """

    def __init__(self, input_dim: int, hidden, embedding_dim: int, rng: np.random.Generator):
        if input_dim < 1 or embedding_dim < 2:
            raise ValueError("need input_dim >= 1 and embedding_dim >= 2")
        self.input_dim = int(input_dim)
        self.hidden = tuple(int(h) for h in hidden)
        self.embedding_dim = int(embedding_dim)
        dims = [self.input_dim, *self.hidden, self.embedding_dim]
        self.weights = []
        self.biases = []
        for i, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
            scale = np.sqrt(2.0 / fan_in) if i < len(dims) - 2 else np.sqrt(1.0 / fan_in)
            self.weights.append(rng.normal(0.0, scale, size=(fan_in, fan_out)))
            self.biases.append(np.zeros(fan_out))
        # tiny random output bias keeps the pre-norm row away from exact 0
        self.biases[-1] = rng.uniform(-0.01, 0.01, size=self.embedding_dim)
        self._version = 0

    @property
    def n_params(self) -> int:
        return sum(w.size for w in self.weights) + sum(b.size for b in self.biases)

    def get_params(self) -> np.ndarray:
        chunks = []
        for w, b in zip(self.weights, self.biases):
            chunks.append(w.ravel())
            chunks.append(b.ravel())
        return np.concatenate(chunks)

    def set_params(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} parameters, got {flat.shape}")
        offset = 0
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            self.weights[i] = flat[offset : offset + w.size].reshape(w.shape).copy()
            offset += w.size
            self.biases[i] = flat[offset : offset + b.size].copy()
            offset += b.size
        self._version += 1

    def forward(self, inputs: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
        """Embed a batch of raw feature rows; returns (embeddings, cache)."""
        x = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
        if x.shape[1] != self.input_dim:
            raise ValueError(f"dimension mismatch: model expects {self.input_dim}, got {x.shape[1]}")
        pre_acts, acts = [], []
        a = x
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            z = a @ w + b
            pre_acts.append(z)
            a = np.maximum(z, 0.0)
            acts.append(a)
        y = a @ self.weights[-1] + self.biases[-1]
        norms = np.maximum(np.linalg.norm(y, axis=1, keepdims=True), _NORM_FLOOR)
        emb = y / norms
        cache = ForwardCache(x, pre_acts, acts, y, norms, emb, self._version)
        return emb, cache

    def backward_from_embedding_grads(self, cache: ForwardCache, d_emb: np.ndarray) -> np.ndarray:
        """Backprop upstream gradients w.r.t. the embeddings down to a flat parameter gradient."""
        if cache.version != self._version:
            raise ValueError("stale cache: parameters changed since the forward pass")
        emb = cache.embeddings
        # normalization: emb = y / |y|, so dy = (I - emb emb^T) d_emb / |y| rowwise
        dy = (d_emb - np.sum(d_emb * emb, axis=1, keepdims=True) * emb) / cache.norms
        grads_w = [None] * len(self.weights)
        grads_b = [None] * len(self.biases)
        a_prev = cache.acts[-1] if cache.acts else cache.inputs
        grads_w[-1] = a_prev.T @ dy
        grads_b[-1] = dy.sum(axis=0)
        da = dy @ self.weights[-1].T
        for layer in range(len(self.hidden) - 1, -1, -1):
            dz = da * (cache.pre_acts[layer] > 0.0)
            a_prev = cache.acts[layer - 1] if layer > 0 else cache.inputs
            grads_w[layer] = a_prev.T @ dz
            grads_b[layer] = dz.sum(axis=0)
            if layer > 0:
                da = dz @ self.weights[layer].T
        chunks = []
        for gw, gb in zip(grads_w, grads_b):
            chunks.append(gw.ravel())
            chunks.append(gb.ravel())
        return np.concatenate(chunks)

    # ---- checkpointing ----

    def to_dict(self) -> dict:
        return {
            "kind": "mlp-unit-norm",
            "input_dim": self.input_dim,
            "hidden": list(self.hidden),
            "embedding_dim": self.embedding_dim,
            "layers": [
                {"w": w.tolist(), "b": b.tolist()} for w, b in zip(self.weights, self.biases)
            ],
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "EmbeddingModel":
        if payload.get("kind") != "mlp-unit-norm":
            raise ValueError(f"unsupported checkpoint kind {payload.get('kind')!r}")
        model = cls.__new__(cls)
        model.input_dim = int(payload["input_dim"])
        model.hidden = tuple(int(h) for h in payload["hidden"])
        model.embedding_dim = int(payload["embedding_dim"])
        model.weights = [np.asarray(layer["w"], dtype=np.float64) for layer in payload["layers"]]
        model.biases = [np.asarray(layer["b"], dtype=np.float64) for layer in payload["layers"]]
        model._version = 0
        return model


# -------------------------
# Batch loss and gradients
# -------------------------

def triplet_losses(
    emb: np.ndarray, triplets: np.ndarray, loss: LossConfig, boundaries: np.ndarray | None = None
) -> np.ndarray:
    """Per-triplet loss values for rows (anchor, positive, negative) of indices."""
    triplets = np.asarray(triplets)
    a, p, n = triplets[:, 0], triplets[:, 1], triplets[:, 2]
    d_ap = np.linalg.norm(emb[a] - emb[p], axis=1)
    d_an = np.linalg.norm(emb[a] - emb[n], axis=1)
    if loss.kind == "triplet":
        return triplet_loss(d_ap, d_an, loss.gamma)
    beta = loss.beta_margin if boundaries is None else boundaries
    return margin_loss(d_ap, d_an, loss.gamma, beta)


def backward(
    model: EmbeddingModel,
    cache: ForwardCache,
    triplets: np.ndarray,
    loss: LossConfig,
    boundaries: np.ndarray | None = None,
) -> np.ndarray:
    """Gradient over the flattened parameters of the mean loss over triplets.

    Inactive hinges contribute exactly zero; hinge boundaries use the
    inactive branch. boundaries optionally overrides the margin-loss
    beta per triplet (used with per-class learnable boundaries).
    """
    triplets = np.asarray(triplets)
    if triplets.size == 0:
        return np.zeros(model.n_params)
    emb = cache.embeddings
    a, p, n = triplets[:, 0], triplets[:, 1], triplets[:, 2]
    diff_ap = emb[a] - emb[p]
    diff_an = emb[a] - emb[n]
    d_emb = np.zeros_like(emb)
    t = triplets.shape[0]
    if loss.kind == "triplet":
        d_ap2 = np.sum(diff_ap**2, axis=1)
        d_an2 = np.sum(diff_an**2, axis=1)
        active = (d_ap2 - d_an2 + loss.gamma) > 0.0
        scale = np.where(active, 2.0 / t, 0.0)[:, None]
        np.add.at(d_emb, a, scale * (diff_ap - diff_an))
        np.add.at(d_emb, p, -scale * diff_ap)
        np.add.at(d_emb, n, scale * diff_an)
    else:
        beta = np.broadcast_to(
            loss.beta_margin if boundaries is None else boundaries, (t,)
        )
        d_ap = np.maximum(np.linalg.norm(diff_ap, axis=1), _NORM_FLOOR)
        d_an = np.maximum(np.linalg.norm(diff_an, axis=1), _NORM_FLOOR)
        pos_active = (loss.gamma + d_ap - beta) > 0.0
        neg_active = (loss.gamma - d_an + beta) > 0.0
        unit_ap = diff_ap / d_ap[:, None]
        unit_an = diff_an / d_an[:, None]
        pos_scale = np.where(pos_active, 1.0 / t, 0.0)[:, None]
        neg_scale = np.where(neg_active, 1.0 / t, 0.0)[:, None]
        np.add.at(d_emb, a, pos_scale * unit_ap - neg_scale * unit_an)
        np.add.at(d_emb, p, -pos_scale * unit_ap)
        np.add.at(d_emb, n, neg_scale * unit_an)
    return model.backward_from_embedding_grads(cache, d_emb)


def margin_boundary_grads(
    emb: np.ndarray, triplets: np.ndarray, loss: LossConfig, boundaries: np.ndarray
) -> np.ndarray:
    """d(mean loss)/d(beta) per triplet for the margin loss: -1[pos hinge] + 1[neg hinge]."""
    triplets = np.asarray(triplets)
    a, p, n = triplets[:, 0], triplets[:, 1], triplets[:, 2]
    d_ap = np.linalg.norm(emb[a] - emb[p], axis=1)
    d_an = np.linalg.norm(emb[a] - emb[n], axis=1)
    t = triplets.shape[0]
    pos_active = (loss.gamma + d_ap - boundaries) > 0.0
    neg_active = (loss.gamma - d_an + boundaries) > 0.0
    return (neg_active.astype(np.float64) - pos_active.astype(np.float64)) / t


# -------------------------
# Optimizer
# -------------------------

@dataclass
class Adam:
    """Adam with bias correction; state is carried across step() calls."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: np.ndarray | None = field(default=None, repr=False)
    v: np.ndarray | None = field(default=None, repr=False)

    def step(self, params: np.ndarray, grads: np.ndarray) -> np.ndarray:
        grads = np.asarray(grads, dtype=np.float64)
        if params.shape != grads.shape:
            raise ValueError("parameter/gradient shape mismatch")
        if not np.all(np.isfinite(grads)):
            raise FloatingPointError("non-finite gradient passed to optimizer")
        if self.m is None:
            self.m = np.zeros_like(params)
            self.v = np.zeros_like(params)
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grads
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grads**2
        m_hat = self.m / (1.0 - self.beta1**self.t)
        v_hat = self.v / (1.0 - self.beta2**self.t)
        return params - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
