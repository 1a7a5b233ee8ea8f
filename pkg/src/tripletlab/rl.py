"""Policy-gradient teacher that adjusts the negative-sampling PMF.

The policy maps a training-state vector to K independent 3-way categorical
heads (decrease / maintain / increase one bin each) plus an optional scalar
value estimate. Episodes are single-step: one state, one action, one sign
reward per block of DML iterations. Update rules: plain REINFORCE, an EMA
baseline variant, advantage actor-critic, and PPO's clipped surrogate with
a lagged reference policy.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .metrics import METRIC_FIELDS, RunningTracks
from .model import Adam

RL_ALGORITHMS = ("reinforce", "reinforce-ema", "a2c", "ppo-ema", "ppo-a2c")

#: per-metric scale applied when metric values enter the state vector;
#: distances live in [0, 2], everything else already in [0, 1]
_STATE_SCALES = {"r1": 1.0, "r2": 1.0, "r4": 1.0, "nmi": 1.0, "intra": 0.5, "inter": 0.5}


def require_valid_algorithm(kind: str) -> str:
    if kind not in RL_ALGORITHMS:
        raise ValueError(
            f"unknown rl algorithm {kind!r}; valid algorithms: {', '.join(RL_ALGORITHMS)}"
        )
    return kind


# -------------------------
# Training state
# -------------------------

def state_metric_fields(recall_ks=(1, 2, 4)) -> tuple:
    """Metric columns entering the state, in layout order."""
    return tuple(f"r{k}" for k in recall_ks) + ("nmi", "intra", "inter")


def state_dim(k_bins: int, tracks: RunningTracks, recall_ks=(1, 2, 4)) -> int:
    n_metrics = len(state_metric_fields(recall_ks))
    return n_metrics * len(tracks.lengths) + tracks.history * n_metrics + k_bins + 1


def build_state(
    tracks: RunningTracks, prev_pmf_probs: np.ndarray, progress: float, recall_ks=(1, 2, 4)
) -> np.ndarray:
    """Assemble the policy input, fixed layout:

    [running averages per metric (all lengths, metric-major) |
     raw history (oldest episode first, metrics within episode) |
     previous PMF probabilities | normalized training progress]
    """
    if not 0.0 <= progress <= 1.0:
        raise ValueError(f"progress must lie in [0, 1], got {progress}")
    fields = state_metric_fields(recall_ks)
    cols = np.array([METRIC_FIELDS.index(f) for f in fields])
    scales = np.array([_STATE_SCALES[f] for f in fields])
    avg = tracks.averages()[cols] * scales[:, None]
    hist = tracks.history_matrix()[:, cols] * scales[None, :]
    state = np.concatenate(
        [avg.ravel(), hist.ravel(), np.asarray(prev_pmf_probs, dtype=np.float64), [progress]]
    )
    if not np.all(np.isfinite(state)):
        raise ValueError("non-finite value in training state")
    return state


# -------------------------
# Policy network
# -------------------------

@dataclass
class PolicyCache:
    state: np.ndarray
    z1: np.ndarray
    a1: np.ndarray
    z2: np.ndarray
    a2: np.ndarray
    logits: np.ndarray
    value: float | None
    version: int


class PolicyNetwork:
    """state -> 128 -> 128 (ReLU) -> K*3 logits, plus optional value scalar."""

    def __init__(
        self,
        state_dim: int,
        k_bins: int,
        has_value: bool,
        rng: np.random.Generator,
        hidden: int = 128,
    ):
        if state_dim < 1 or k_bins < 1:
            raise ValueError("need state_dim >= 1 and k_bins >= 1")
        self.state_dim = int(state_dim)
        self.k_bins = int(k_bins)
        self.has_value = bool(has_value)
        self.hidden = int(hidden)
        n_out = 3 * self.k_bins + (1 if self.has_value else 0)
        self.w1 = rng.normal(0.0, np.sqrt(2.0 / self.state_dim), size=(self.state_dim, self.hidden))
        self.b1 = np.zeros(self.hidden)
        self.w2 = rng.normal(0.0, np.sqrt(2.0 / self.hidden), size=(self.hidden, self.hidden))
        self.b2 = np.zeros(self.hidden)
        self.w3 = rng.normal(0.0, 0.01 * np.sqrt(1.0 / self.hidden), size=(self.hidden, n_out))
        self.b3 = np.zeros(n_out)
        self._version = 0

    @property
    def n_out(self) -> int:
        return self.b3.size

    @property
    def n_params(self) -> int:
        return self.w1.size + self.b1.size + self.w2.size + self.b2.size + self.w3.size + self.b3.size

    def get_params(self) -> np.ndarray:
        return np.concatenate(
            [self.w1.ravel(), self.b1, self.w2.ravel(), self.b2, self.w3.ravel(), self.b3]
        )

    def set_params(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} parameters, got {flat.shape}")
        pieces = [self.w1, self.b1, self.w2, self.b2, self.w3, self.b3]
        offset = 0
        out = []
        for piece in pieces:
            out.append(flat[offset : offset + piece.size].reshape(piece.shape).copy())
            offset += piece.size
        self.w1, self.b1, self.w2, self.b2, self.w3, self.b3 = out
        self._version += 1

    def forward(self, state: np.ndarray) -> PolicyCache:
        s = np.asarray(state, dtype=np.float64)
        if s.shape != (self.state_dim,):
            raise ValueError(f"state dimension mismatch: expected {self.state_dim}, got {s.shape}")
        z1 = s @ self.w1 + self.b1
        a1 = np.maximum(z1, 0.0)
        z2 = a1 @ self.w2 + self.b2
        a2 = np.maximum(z2, 0.0)
        out = a2 @ self.w3 + self.b3
        logits = out[: 3 * self.k_bins].reshape(self.k_bins, 3)
        value = float(out[-1]) if self.has_value else None
        return PolicyCache(s, z1, a1, z2, a2, logits, value, self._version)

    def backward(self, cache: PolicyCache, d_logits: np.ndarray, d_value: float = 0.0) -> np.ndarray:
        """Flat parameter gradient given output-side gradients."""
        if cache.version != self._version:
            raise ValueError("stale cache: parameters changed since the forward pass")
        d_out = np.zeros(self.n_out)
        d_out[: 3 * self.k_bins] = np.asarray(d_logits, dtype=np.float64).ravel()
        if self.has_value:
            d_out[-1] = d_value
        elif d_value != 0.0:
            raise ValueError("value gradient supplied but the network has no value head")
        g_w3 = np.outer(cache.a2, d_out)
        g_b3 = d_out
        da2 = self.w3 @ d_out
        dz2 = da2 * (cache.z2 > 0.0)
        g_w2 = np.outer(cache.a1, dz2)
        g_b2 = dz2
        da1 = self.w2 @ dz2
        dz1 = da1 * (cache.z1 > 0.0)
        g_w1 = np.outer(cache.state, dz1)
        g_b1 = dz1
        return np.concatenate([g_w1.ravel(), g_b1, g_w2.ravel(), g_b2, g_w3.ravel(), g_b3])

    # ---- probability helpers ----

    @staticmethod
    def log_softmax(logits: np.ndarray) -> np.ndarray:
        shifted = logits - logits.max(axis=1, keepdims=True)
        return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))

    def log_prob(self, cache: PolicyCache, trits: np.ndarray) -> float:
        logsm = self.log_softmax(cache.logits)
        return float(logsm[np.arange(self.k_bins), trits].sum())

    def log_prob_grad(self, state: np.ndarray, trits: np.ndarray) -> tuple[float, np.ndarray]:
        """(log pi(a|s), gradient of it w.r.t. the flat parameters)."""
        cache = self.forward(state)
        logsm = self.log_softmax(cache.logits)
        lp = float(logsm[np.arange(self.k_bins), trits].sum())
        d_logits = -np.exp(logsm)
        d_logits[np.arange(self.k_bins), trits] += 1.0
        return lp, self.backward(cache, d_logits)

    def value_grad(self, state: np.ndarray) -> tuple[float, np.ndarray]:
        """(V(s), gradient of it w.r.t. the flat parameters)."""
        if not self.has_value:
            raise ValueError("network has no value head")
        cache = self.forward(state)
        return cache.value, self.backward(cache, np.zeros((self.k_bins, 3)), d_value=1.0)

    # ---- checkpointing ----

    def to_dict(self) -> dict:
        return {
            "kind": "policy-3way-heads",
            "state_dim": self.state_dim,
            "k_bins": self.k_bins,
            "has_value": self.has_value,
            "hidden": self.hidden,
            "params": self.get_params().tolist(),
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "PolicyNetwork":
        if payload.get("kind") != "policy-3way-heads":
            raise ValueError(f"unsupported checkpoint kind {payload.get('kind')!r}")
        net = cls(
            payload["state_dim"],
            payload["k_bins"],
            payload["has_value"],
            np.random.default_rng(0),
            hidden=payload["hidden"],
        )
        net.set_params(np.asarray(payload["params"], dtype=np.float64))
        return net


# -------------------------
# Actions and reward
# -------------------------

def sample_action(logits: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, float]:
    """Draw each bin's trit from its softmax; returns (trits, joint log-prob).

    Trit meaning: 0 decrease, 1 maintain, 2 increase.
    """
    logits = np.asarray(logits, dtype=np.float64)
    k = logits.shape[0]
    logsm = PolicyNetwork.log_softmax(logits)
    cum = np.cumsum(np.exp(logsm), axis=1)
    u = rng.random(k)
    trits = np.minimum((u[:, None] >= cum).sum(axis=1), 2)
    lp = float(logsm[np.arange(k), trits].sum())
    return trits.astype(np.int64), lp


def identity_trits(k: int) -> np.ndarray:
    return np.ones(k, dtype=np.int64)


def multipliers_from_trits(trits: np.ndarray, alpha: float, beta_up: float) -> np.ndarray:
    """trit -> multiplier map {0 -> alpha, 1 -> 1, 2 -> beta_up}."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if beta_up <= 1.0:
        raise ValueError(f"beta_up must exceed 1, got {beta_up}")
    trits = np.asarray(trits)
    if not np.all((trits >= 0) & (trits <= 2)):
        raise ValueError("trits must be 0, 1 or 2")
    table = np.array([alpha, 1.0, beta_up])
    return table[trits]


def compute_reward(e_new: float, e_old: float) -> int:
    """sign(e_new - e_old) with exact ties giving 0; e = recall@1 + NMI."""
    return int(np.sign(e_new - e_old))


@dataclass
class Transition:
    """One single-step episode as seen by the policy."""

    episode: int
    state: np.ndarray
    trits: np.ndarray
    logprob: float
    reward: int
    value: float | None = None

    def to_json(self) -> str:
        return json.dumps(
            {
                "episode": self.episode,
                "reward": self.reward,
                "logprob": self.logprob,
                "value": self.value,
                "action": [int(t) for t in self.trits],
            }
        )


# -------------------------
# Update rules
# -------------------------

@dataclass
class PolicyUpdater:
    """Owns the optimizer state and algorithm-specific baselines.

    All algorithms share the pattern: compute a scalar coefficient per
    transition, descend -coef * grad(log pi) plus (where enabled) the
    value-regression gradient. PPO recomputes the reference log-prob from
    a lagged parameter copy and zeroes the coefficient when the clipped
    branch of the surrogate is active.
    """

    policy: PolicyNetwork
    algorithm: str
    lr: float = 1e-4
    epsilon: float = 0.2
    old_refresh: int = 5
    ema_decay: float = 0.9
    value_coef: float = 0.5
    adam: Adam = field(init=False)
    old_params: np.ndarray | None = field(init=False, default=None)
    ema_baseline: float = field(init=False, default=0.0)
    n_updates: int = field(init=False, default=0)

    def __post_init__(self):
        require_valid_algorithm(self.algorithm)
        if self.uses_value and not self.policy.has_value:
            raise ValueError(f"algorithm {self.algorithm!r} requires a value head")
        self.adam = Adam(lr=self.lr)
        if self.uses_ppo:
            self.old_params = self.policy.get_params()

    @property
    def uses_ppo(self) -> bool:
        return self.algorithm in ("ppo-ema", "ppo-a2c")

    @property
    def uses_value(self) -> bool:
        return self.algorithm in ("a2c", "ppo-a2c")

    @property
    def uses_ema(self) -> bool:
        return self.algorithm in ("reinforce-ema", "ppo-ema")

    def _old_log_prob(self, state: np.ndarray, trits: np.ndarray) -> float:
        saved = self.policy.get_params()
        self.policy.set_params(self.old_params)
        try:
            cache = self.policy.forward(state)
            return self.policy.log_prob(cache, trits)
        finally:
            self.policy.set_params(saved)

    def update(self, transitions: list) -> dict:
        """One optimizer step over the given transitions (usually one)."""
        if not transitions:
            raise ValueError("need at least one transition")
        grad = np.zeros(self.policy.n_params)
        diag = {"coef": [], "ratio": [], "advantage": []}
        for tr in transitions:
            # reference log-prob first: it swaps parameters in and out,
            # which would invalidate a cache taken beforehand
            lp_old = self._old_log_prob(tr.state, tr.trits) if self.uses_ppo else 0.0
            cache = self.policy.forward(tr.state)
            logsm = self.policy.log_softmax(cache.logits)
            lp_new = float(logsm[np.arange(self.policy.k_bins), tr.trits].sum())
            if self.uses_value:
                advantage = tr.reward - cache.value
            elif self.uses_ema:
                advantage = tr.reward - self.ema_baseline
            else:
                advantage = float(tr.reward)
            if self.uses_ppo:
                ratio = float(np.exp(lp_new - lp_old))
                clipped = min(max(ratio, 1.0 - self.epsilon), 1.0 + self.epsilon)
                if ratio * advantage <= clipped * advantage:
                    coef = advantage * ratio
                else:
                    coef = 0.0  # clipped branch active: constant in theta
            else:
                ratio = 1.0
                coef = advantage
            d_logits = -np.exp(logsm)
            d_logits[np.arange(self.policy.k_bins), tr.trits] += 1.0
            d_logits *= -coef
            d_value = 0.0
            if self.uses_value:
                d_value = 2.0 * self.value_coef * (cache.value - tr.reward)
            grad += self.policy.backward(cache, d_logits, d_value)
            diag["coef"].append(coef)
            diag["ratio"].append(ratio)
            diag["advantage"].append(float(advantage))
        grad /= len(transitions)
        self.policy.set_params(self.adam.step(self.policy.get_params(), grad))
        if self.uses_ema:
            rewards = float(np.mean([tr.reward for tr in transitions]))
            self.ema_baseline = self.ema_decay * self.ema_baseline + (1.0 - self.ema_decay) * rewards
        self.n_updates += 1
        if self.uses_ppo and self.n_updates % self.old_refresh == 0:
            self.old_params = self.policy.get_params()
        return diag
