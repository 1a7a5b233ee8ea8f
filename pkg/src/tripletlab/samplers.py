"""Negative-selection strategies for triplet construction.

Static strategies (random, semihard, distance-weighted) pick negatives
directly from batch distances. The adaptive strategy draws from a
discretized probability mass function over anchor-negative distance,
which a policy adjusts between episodes through bin-wise multiplicative
updates. Fixed curriculum schedules reuse the same discretized machinery
with a PMF that is a function of training progress instead of a policy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import inverse_density_weights, log_analytic_density

SAMPLER_KINDS = (
    "random",
    "semihard",
    "distweighted",
    "curriculum-linear",
    "curriculum-nonlinear",
    "pads",
)

#: samplers that draw negatives from a discretized distance PMF
PMF_SAMPLER_KINDS = ("curriculum-linear", "curriculum-nonlinear", "pads")


def require_valid_kind(kind: str) -> str:
    if kind not in SAMPLER_KINDS:
        raise ValueError(
            f"unknown sampler kind {kind!r}; valid kinds: {', '.join(SAMPLER_KINDS)}"
        )
    return kind


# -------------------------
# Discretized distance PMF
# -------------------------

@dataclass(frozen=True)
class SamplingPMF:
    """K-bin histogram distribution over anchor-negative distance.

    Bins partition [lambda_min, lambda_max] into equal widths; p holds one
    probability per bin. Instances are immutable; updates build new ones.
    """

    lambda_min: float
    lambda_max: float
    p: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=np.float64)
        if p.ndim != 1 or p.size < 2:
            raise ValueError("need at least 2 bins")
        if not (0.0 <= self.lambda_min < self.lambda_max <= 2.0):
            raise ValueError(
                f"need 0 <= lambda_min < lambda_max <= 2, got "
                f"[{self.lambda_min}, {self.lambda_max}]"
            )
        if np.any(p < 0.0):
            raise ValueError("bin probabilities must be nonnegative")
        if abs(p.sum() - 1.0) > 1e-9:
            raise ValueError(f"bin probabilities must sum to 1, got {p.sum()!r}")
        object.__setattr__(self, "p", p)

    @property
    def k(self) -> int:
        return self.p.size

    @property
    def edges(self) -> np.ndarray:
        return np.linspace(self.lambda_min, self.lambda_max, self.k + 1)

    @property
    def centers(self) -> np.ndarray:
        e = self.edges
        return 0.5 * (e[:-1] + e[1:])

    def bin_of(self, d: np.ndarray) -> np.ndarray:
        """Bin index per distance, -1 for out-of-range. The last bin is closed."""
        d = np.asarray(d, dtype=np.float64)
        idx = np.searchsorted(self.edges, d, side="right") - 1
        idx = np.where(d == self.lambda_max, self.k - 1, idx)
        in_range = (d >= self.lambda_min) & (d <= self.lambda_max)
        return np.where(in_range, idx, -1)

    def snapshot(self, episode: int) -> dict:
        """JSON-line payload: {episode, edges: K+1 floats, p: K floats}."""
        return {"episode": int(episode), "edges": self.edges.tolist(), "p": self.p.tolist()}


def init_pmf(lambda_min: float, lambda_max: float, k: int, init: str = "uniform") -> SamplingPMF:
    """Build the starting PMF.

    init kinds:
      "uniform"                 equal mass everywhere
      "uniform:<a>:<b>"         high mass on bins overlapping [a, b], small
                                epsilon mass elsewhere
      "gaussian:<mu>:<sigma>"   bell curve evaluated at bin centers
    """
    if k < 2:
        raise ValueError(f"need k >= 2 bins, got {k}")
    if not (0.0 <= lambda_min < lambda_max <= 2.0):
        raise ValueError(
            f"need 0 <= lambda_min < lambda_max <= 2, got [{lambda_min}, {lambda_max}]"
        )
    edges = np.linspace(lambda_min, lambda_max, k + 1)
    centers = 0.5 * (edges[:-1] + edges[1:])
    parts = init.split(":")
    if parts[0] == "uniform" and len(parts) == 1:
        p = np.full(k, 1.0 / k)
    elif parts[0] == "uniform" and len(parts) == 3:
        a, b = float(parts[1]), float(parts[2])
        if not a < b:
            raise ValueError(f"emphasis interval must satisfy a < b, got [{a}, {b}]")
        inside = (edges[1:] > a) & (edges[:-1] < b)
        if not inside.any():
            raise ValueError(f"emphasis interval [{a}, {b}] overlaps no bin")
        p = np.where(inside, 1.0, 0.01)
        p = p / p.sum()
    elif parts[0] == "gaussian" and len(parts) == 3:
        mu, sigma = float(parts[1]), float(parts[2])
        if sigma <= 0:
            raise ValueError("sigma must be positive")
        p = np.exp(-0.5 * ((centers - mu) / sigma) ** 2)
        total = p.sum()
        if total <= 0.0 or not np.isfinite(total):
            raise ValueError(f"gaussian init ({mu}, {sigma}) puts no mass on any bin")
        p = p / total
    else:
        raise ValueError(
            f"unknown pmf init {init!r}; expected 'uniform', 'uniform:a:b' or 'gaussian:mu:sigma'"
        )
    return SamplingPMF(lambda_min, lambda_max, p)


def apply_action(pmf: SamplingPMF, multipliers: np.ndarray) -> SamplingPMF:
    """Bin-wise reweighting p_k <- p_k * a_k followed by renormalization.

    The identity action (all multipliers 1) returns the input object
    unchanged, so no-op adjustments are exact rather than renormalized.
    """
    multipliers = np.asarray(multipliers, dtype=np.float64)
    if multipliers.shape != (pmf.k,):
        raise ValueError(f"expected {pmf.k} multipliers, got shape {multipliers.shape}")
    if np.any(multipliers <= 0.0):
        raise ValueError("multipliers must be positive")
    if np.all(multipliers == 1.0):
        return pmf
    raw = pmf.p * multipliers
    total = raw.sum()
    if total <= 0.0:
        raise ValueError("action drove all bin probabilities to zero")
    return SamplingPMF(pmf.lambda_min, pmf.lambda_max, raw / total)


# -------------------------
# Per-anchor negative selection
# -------------------------

def sample_negative_random(candidates: np.ndarray, rng: np.random.Generator) -> int:
    candidates = np.asarray(candidates)
    if candidates.size == 0:
        raise ValueError("no negative candidates")
    return int(candidates[rng.integers(candidates.size)])


def sample_negative_semihard(d_ap: float, candidates: np.ndarray, d_an: np.ndarray) -> int:
    """Closest negative farther than the positive; ties broken by lowest index.

    If every negative is closer than the positive, falls back to the
    farthest negative (the least-violating choice).
    """
    candidates = np.asarray(candidates)
    d_an = np.asarray(d_an, dtype=np.float64)
    if candidates.size == 0:
        raise ValueError("no negative candidates")
    order = np.argsort(candidates, kind="stable")
    cand, dist = candidates[order], d_an[order]
    beyond = dist > d_ap
    if beyond.any():
        sub = np.where(beyond)[0]
        return int(cand[sub[np.argmin(dist[sub])]])
    return int(cand[np.argmax(dist)])


def sample_negative_distweighted(
    candidates: np.ndarray,
    d_an: np.ndarray,
    dim: int,
    rng: np.random.Generator,
    clip_lambda: float | None = None,
) -> int:
    """Categorical draw by inverse-density weights (flattens drawn distances)."""
    candidates = np.asarray(candidates)
    if candidates.size == 0:
        raise ValueError("no negative candidates")
    w = inverse_density_weights(np.asarray(d_an, dtype=np.float64), dim, clip_lambda)
    return int(candidates[rng.choice(candidates.size, p=w)])


def sample_negative_adaptive(
    pmf: SamplingPMF,
    candidates: np.ndarray,
    d_an: np.ndarray,
    rng: np.random.Generator,
) -> tuple[int, bool]:
    """Draw a bin from the PMF restricted to bins occupied for this anchor,
    then a uniform candidate within the bin.

    Returns (chosen candidate, fallback flag). Candidates outside
    [lambda_min, lambda_max] have probability zero. When no candidate is
    in-range the draw falls back to a uniform choice over all candidates
    and the flag is set so callers can count fallbacks.
    """
    candidates = np.asarray(candidates)
    d_an = np.asarray(d_an, dtype=np.float64)
    if candidates.size == 0:
        raise ValueError("no negative candidates")
    bins = pmf.bin_of(d_an)
    occupied = np.unique(bins[bins >= 0])
    if occupied.size == 0:
        return int(candidates[rng.integers(candidates.size)]), True
    mass = pmf.p[occupied]
    total = mass.sum()
    if total <= 0.0:
        # all occupied bins carry zero probability; treat occupancy as uniform
        mass = np.full(occupied.size, 1.0 / occupied.size)
    else:
        mass = mass / total
    chosen_bin = occupied[rng.choice(occupied.size, p=mass)]
    members = candidates[bins == chosen_bin]
    return int(members[rng.integers(members.size)]), False


# -------------------------
# Curriculum schedules
# -------------------------

def curriculum_pmf(
    t: float,
    kind: str,
    lambda_min: float,
    lambda_max: float,
    k: int,
    dim: int = 32,
) -> SamplingPMF:
    """Progress-driven PMF for the fixed curriculum baselines.

    linear: a uniform window one quarter of the interval wide, translating
    from the top of the interval (easy, semihard-like distances) down to
    lambda_min (hard) as t goes 0 -> 1.

    nonlinear: inverse-density weights at the bin centers, exponentially
    tilted toward small distances with strength growing in t; starts as
    the static distance-weighted profile and sharpens onto hard negatives.
    """
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"progress must lie in [0, 1], got {t}")
    if k < 2:
        raise ValueError(f"need k >= 2 bins, got {k}")
    edges = np.linspace(lambda_min, lambda_max, k + 1)
    centers = 0.5 * (edges[:-1] + edges[1:])
    if kind == "linear":
        width = 0.25 * (lambda_max - lambda_min)
        lo = lambda_max - width - t * (lambda_max - width - lambda_min)
        hi = lo + width
        inside = (edges[1:] > lo) & (edges[:-1] < hi)
        p = inside.astype(np.float64)
        p = p / p.sum()
    elif kind == "nonlinear":
        log_w = -log_analytic_density(np.clip(centers, 1e-9, 2.0 - 1e-9), dim)
        log_cap = math.log(4.0) + np.median(log_w)
        log_w = np.minimum(log_w, log_cap) - 4.0 * t * (centers - lambda_min)
        p = np.exp(log_w - np.max(log_w))
        p = p / p.sum()
    else:
        raise ValueError(f"unknown curriculum kind {kind!r}; valid kinds: linear, nonlinear")
    return SamplingPMF(lambda_min, lambda_max, p)
