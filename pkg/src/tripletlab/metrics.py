"""Retrieval and clustering quality measures on embedding batches.

Everything is computed from pairwise distances of unit vectors. Ties in
nearest-neighbor ranking are broken by the smaller index so results do not
depend on sort implementation details.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .geometry import EmbeddingBatch, pairwise_distances


#: column order of the per-episode metric vector used throughout
METRIC_FIELDS = ("r1", "r2", "r4", "nmi", "intra", "inter")


@dataclass(frozen=True)
class EvalReport:
    recall_at: dict
    nmi: float
    intra: float
    inter: float

    def as_row(self) -> dict:
        row = {f"r{k}": v for k, v in sorted(self.recall_at.items())}
        row.update(nmi=self.nmi, intra=self.intra, inter=self.inter)
        return row

    def as_vector(self) -> np.ndarray:
        row = self.as_row()
        return np.array([row[f] for f in METRIC_FIELDS])


class RunningTracks:
    """Ring buffers of recent metric vectors feeding the policy state.

    Keeps enough history for running averages at several lengths plus a
    raw tail of the last `history` snapshots. Averages over fewer than
    `length` entries use whatever is available.
    """

    def __init__(self, lengths=(2, 8, 16, 32), history: int = 20, n_metrics: int = len(METRIC_FIELDS)):
        self.lengths = tuple(int(x) for x in lengths)
        self.history = int(history)
        self.n_metrics = int(n_metrics)
        if min(self.lengths) < 1 or self.history < 1:
            raise ValueError("average lengths and history must be >= 1")
        self._capacity = max(max(self.lengths), self.history)
        self._buf: list = []

    def __len__(self) -> int:
        return len(self._buf)

    def append(self, values: np.ndarray) -> "RunningTracks":
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (self.n_metrics,):
            raise ValueError(f"expected {self.n_metrics} metric values, got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("metric values must be finite")
        self._buf.append(values.copy())
        if len(self._buf) > self._capacity:
            self._buf.pop(0)
        return self

    def averages(self) -> np.ndarray:
        """(n_metrics, n_lengths) running means, most recent entries first."""
        if not self._buf:
            raise ValueError("no snapshots recorded yet")
        stack = np.stack(self._buf)
        cols = [stack[-min(l, len(self._buf)):].mean(axis=0) for l in self.lengths]
        return np.stack(cols, axis=1)

    def history_matrix(self) -> np.ndarray:
        """(history, n_metrics) raw tail, oldest row first, zero-padded when short."""
        out = np.zeros((self.history, self.n_metrics))
        tail = self._buf[-self.history:]
        if tail:
            out[-len(tail):] = np.stack(tail)
        return out


def update_tracks(tracks: RunningTracks, report: EvalReport) -> RunningTracks:
    """Record one evaluation; returns the same (mutated) tracks object."""
    return tracks.append(report.as_vector())


def recall_at_k(batch: EmbeddingBatch, ks=(1, 2, 4)) -> dict:
    """Fraction of points whose k nearest others contain a same-label point.

    Self-matches are excluded by pushing the diagonal to +inf. argsort is
    stable, so equal distances rank by index.
    """
    ks = tuple(int(k) for k in ks)
    if any(k < 1 for k in ks):
        raise ValueError("recall cutoffs must be >= 1")
    dist = pairwise_distances(batch)
    np.fill_diagonal(dist, np.inf)
    order = np.argsort(dist, axis=1, kind="stable")
    labels = batch.labels
    hits = labels[order] == labels[:, None]
    out = {}
    for k in ks:
        kk = min(k, batch.n - 1)
        out[k] = float(np.mean(np.any(hits[:, :kk], axis=1))) if kk > 0 else 0.0
    return out


def class_distance_stats(batch: EmbeddingBatch) -> tuple[float, float]:
    """(mean intra-class distance, mean inter-class distance) over unordered pairs.

    A side with no pairs (all-singleton classes, or a single class) is
    reported as 0.0 with a warning rather than NaN.
    """
    dist = pairwise_distances(batch)
    same = batch.labels[:, None] == batch.labels[None, :]
    iu = np.triu_indices(batch.n, k=1)
    same_u = same[iu]
    vals = dist[iu]
    intra_vals = vals[same_u]
    inter_vals = vals[~same_u]
    if intra_vals.size == 0:
        warnings.warn("no intra-class pairs; reporting intra distance as 0.0", stacklevel=2)
        intra = 0.0
    else:
        intra = float(intra_vals.mean())
    if inter_vals.size == 0:
        warnings.warn("no inter-class pairs; reporting inter distance as 0.0", stacklevel=2)
        inter = 0.0
    else:
        inter = float(inter_vals.mean())
    return intra, inter


# -------------------------
# Clustering agreement
# -------------------------

def _kmeans_pp_init(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding: sample centers proportional to squared distance to the nearest chosen one."""
    n = x.shape[0]
    centers = np.empty((k, x.shape[1]))
    first = int(rng.integers(n))
    centers[0] = x[first]
    d2 = np.sum((x - centers[0]) ** 2, axis=1)
    for i in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            centers[i:] = x[int(rng.integers(n))]
            break
        probs = d2 / total
        idx = int(rng.choice(n, p=probs))
        centers[i] = x[idx]
        d2 = np.minimum(d2, np.sum((x - centers[i]) ** 2, axis=1))
    return centers


def kmeans(x: np.ndarray, k: int, rng: np.random.Generator, max_iter: int = 300) -> np.ndarray:
    """Lloyd iterations from a k-means++ start; returns hard assignments."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n, got k={k}, n={n}")
    centers = _kmeans_pp_init(x, k, rng)
    assign = np.zeros(n, dtype=np.int64)
    for _ in range(max_iter):
        d2 = np.sum((x[:, None, :] - centers[None, :, :]) ** 2, axis=2)
        new_assign = np.argmin(d2, axis=1)
        if np.array_equal(new_assign, assign) and _ > 0:
            break
        assign = new_assign
        for j in range(k):
            members = x[assign == j]
            if members.shape[0] > 0:
                centers[j] = members.mean(axis=0)
            else:
                # re-seed an empty cluster at the point farthest from its center
                far = int(np.argmax(np.min(d2, axis=1)))
                centers[j] = x[far]
    return assign


def _entropy(counts: np.ndarray) -> float:
    p = counts[counts > 0] / counts.sum()
    return float(-np.sum(p * np.log(p)))


def nmi(labels_a: np.ndarray, labels_b: np.ndarray) -> float:
    """Normalized mutual information with arithmetic-mean normalization.

    NMI = I(A;B) / ((H(A) + H(B)) / 2). If either side has a single
    block the score is defined as 0.0 (no information to share).
    """
    a = np.asarray(labels_a).ravel()
    b = np.asarray(labels_b).ravel()
    if a.shape != b.shape:
        raise ValueError("label arrays must have equal length")
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    na, nb = ai.max() + 1, bi.max() + 1
    contingency = np.zeros((na, nb))
    np.add.at(contingency, (ai, bi), 1.0)
    h_a = _entropy(contingency.sum(axis=1))
    h_b = _entropy(contingency.sum(axis=0))
    if h_a == 0.0 or h_b == 0.0:
        return 0.0
    n = contingency.sum()
    pij = contingency / n
    pa = pij.sum(axis=1, keepdims=True)
    pb = pij.sum(axis=0, keepdims=True)
    mask = pij > 0
    mi = float(np.sum(pij[mask] * (np.log(pij[mask]) - np.log((pa @ pb))[mask])))
    return mi / (0.5 * (h_a + h_b))


def clustering_nmi(batch: EmbeddingBatch, seed: int, max_iter: int = 300) -> float:
    """NMI between ground-truth labels and k-means clusters, k = #classes.

    The k-means seed is passed in explicitly: evaluations inside one
    training run share a fixed seed so the metric is a deterministic
    function of the embeddings.
    """
    k = int(np.unique(batch.labels).size)
    if k == 1:
        return 0.0
    rng = np.random.default_rng(seed)
    assign = kmeans(batch.vectors, k, rng, max_iter=max_iter)
    return nmi(batch.labels, assign)


def evaluate(batch: EmbeddingBatch, ks=(1, 2, 4), kmeans_seed: int = 0) -> EvalReport:
    """Full evaluation bundle used after every training episode."""
    rec = recall_at_k(batch, ks)
    score_nmi = clustering_nmi(batch, seed=kmeans_seed)
    intra, inter = class_distance_stats(batch)
    return EvalReport(recall_at=rec, nmi=score_nmi, intra=intra, inter=inter)


def eval_score(report: EvalReport) -> float:
    """Scalar progress signal: recall@1 plus clustering agreement."""
    return report.recall_at[1] + report.nmi
