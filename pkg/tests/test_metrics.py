import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tripletlab.geometry import EmbeddingBatch, pairwise_distances
from tripletlab.metrics import (
    METRIC_FIELDS,
    EvalReport,
    RunningTracks,
    class_distance_stats,
    clustering_nmi,
    eval_score,
    evaluate,
    kmeans,
    nmi,
    recall_at_k,
    update_tracks,
)

from conftest import random_labels, unit_rows


def unit_norm_rows(m: np.ndarray) -> np.ndarray:
    return m / np.linalg.norm(m, axis=1, keepdims=True)


def blob_batch(rng, n_per_class=8, n_classes=3, dim=6, spread=0.05):
    """Well-separated unit-vector blobs: one tight cluster per class."""
    centers = unit_rows(rng, n_classes, dim)
    rows, labels = [], []
    for c in range(n_classes):
        pts = centers[c] + spread * rng.standard_normal((n_per_class, dim))
        rows.append(pts)
        labels.extend([c] * n_per_class)
    return EmbeddingBatch(unit_norm_rows(np.vstack(rows)), np.array(labels))


def recall_oracle(batch, ks):
    """Exhaustive per-point scan with explicit (distance, index) ordering."""
    dist = pairwise_distances(batch)
    n = batch.n
    out = {}
    for k in ks:
        hits = 0
        for i in range(n):
            order = sorted((j for j in range(n) if j != i), key=lambda j: (dist[i, j], j))
            if any(batch.labels[j] == batch.labels[i] for j in order[:k]):
                hits += 1
        out[k] = hits / n
    return out


class TestRecall:
    def test_matches_oracle(self, rng):
        for _ in range(30):
            n = int(rng.integers(5, 25))
            batch = EmbeddingBatch(unit_rows(rng, n, 5), random_labels(rng, n, 3))
            got = recall_at_k(batch, ks=(1, 2, 4))
            want = recall_oracle(batch, (1, 2, 4))
            for k in (1, 2, 4):
                assert got[k] == pytest.approx(want[k], abs=1e-12)

    def test_tie_breaks_by_lower_index(self):
        # three identical points: every neighbor list is a pure tie, so the
        # ranking is decided entirely by index order
        v = np.tile(unit_norm_rows(np.array([[1.0, 1.0, 0.0]])), (3, 1))
        batch = EmbeddingBatch(v, np.array([0, 1, 0]))
        # point 0 -> nearest is 1 (miss), 1 -> nearest is 0 (miss), 2 -> nearest is 0 (hit)
        assert recall_at_k(batch, ks=(1,))[1] == pytest.approx(1 / 3)

    def test_perfect_and_zero(self, rng):
        batch = blob_batch(rng)
        assert recall_at_k(batch, ks=(1,))[1] == 1.0
        singletons = EmbeddingBatch(unit_rows(rng, 6, 4), np.arange(6))
        assert recall_at_k(singletons, ks=(1, 2, 4))[4] == 0.0

    def test_rotation_invariant(self, rng):
        n, dim = 40, 8
        vecs = unit_rows(rng, n, dim)
        labels = random_labels(rng, n, 4)
        q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
        a = recall_at_k(EmbeddingBatch(vecs, labels))
        b = recall_at_k(EmbeddingBatch(unit_norm_rows(vecs @ q), labels))
        assert a == b

    def test_k_larger_than_batch(self, rng):
        batch = EmbeddingBatch(unit_rows(rng, 3, 4), np.array([0, 0, 1]))
        out = recall_at_k(batch, ks=(50,))
        # cutoff saturates at n-1: both label-0 points find each other
        assert out[50] == pytest.approx(2 / 3)

    def test_invalid_cutoff(self, rng):
        batch = EmbeddingBatch(unit_rows(rng, 4, 4), np.array([0, 0, 1, 1]))
        with pytest.raises(ValueError, match=">= 1"):
            recall_at_k(batch, ks=(0,))


class TestClassDistanceStats:
    def test_matches_pair_enumeration(self, rng):
        for _ in range(20):
            n = int(rng.integers(4, 20))
            batch = EmbeddingBatch(unit_rows(rng, n, 5), random_labels(rng, n, 3))
            dist = pairwise_distances(batch)
            intra_pairs, inter_pairs = [], []
            for i in range(n):
                for j in range(i + 1, n):
                    (intra_pairs if batch.labels[i] == batch.labels[j] else inter_pairs).append(
                        dist[i, j]
                    )
            intra, inter = class_distance_stats(batch)
            assert intra == pytest.approx(np.mean(intra_pairs), abs=1e-12)
            assert inter == pytest.approx(np.mean(inter_pairs), abs=1e-12)

    def test_all_singletons_warns(self, rng):
        batch = EmbeddingBatch(unit_rows(rng, 5, 4), np.arange(5))
        with pytest.warns(UserWarning, match="no intra-class pairs"):
            intra, inter = class_distance_stats(batch)
        assert intra == 0.0 and inter > 0.0

    def test_single_class_warns(self, rng):
        batch = EmbeddingBatch(unit_rows(rng, 5, 4), np.zeros(5, dtype=int))
        with pytest.warns(UserWarning, match="no inter-class pairs"):
            intra, inter = class_distance_stats(batch)
        assert inter == 0.0 and intra > 0.0

    def test_separated_blobs(self, rng):
        intra, inter = class_distance_stats(blob_batch(rng))
        assert 0.0 < intra < 0.3 < inter


class TestNMI:
    def test_hand_computed_refinement(self):
        # B refines A: MI = H(A) = log 2, H(B) = 1.5 log 2  ->  NMI = 0.8
        a = np.array([0, 0, 1, 1])
        b = np.array([0, 0, 1, 2])
        assert nmi(a, b) == pytest.approx(0.8, abs=1e-12)

    def test_identical_and_independent(self):
        a = np.array([0, 0, 1, 1])
        assert nmi(a, a) == pytest.approx(1.0, abs=1e-12)
        assert nmi(a, np.array([0, 1, 0, 1])) == pytest.approx(0.0, abs=1e-12)

    def test_single_block_is_zero(self):
        assert nmi(np.zeros(6, dtype=int), np.array([0, 1, 2, 0, 1, 2])) == 0.0
        assert nmi(np.array([0, 1, 2, 0, 1, 2]), np.zeros(6, dtype=int)) == 0.0

    def test_matches_loop_oracle(self, rng):
        for _ in range(20):
            n = int(rng.integers(6, 40))
            a = random_labels(rng, n, int(rng.integers(2, 5)))
            b = random_labels(rng, n, int(rng.integers(2, 5)))
            joint: dict = {}
            for x, y in zip(a, b):
                joint[(int(x), int(y))] = joint.get((int(x), int(y)), 0) + 1
            pa: dict = {}
            pb: dict = {}
            for (x, y), c in joint.items():
                pa[x] = pa.get(x, 0) + c
                pb[y] = pb.get(y, 0) + c
            mi = sum(
                (c / n) * math.log((c / n) / ((pa[x] / n) * (pb[y] / n)))
                for (x, y), c in joint.items()
            )
            ha = -sum((c / n) * math.log(c / n) for c in pa.values())
            hb = -sum((c / n) * math.log(c / n) for c in pb.values())
            want = 0.0 if ha == 0.0 or hb == 0.0 else mi / (0.5 * (ha + hb))
            assert nmi(a, b) == pytest.approx(want, abs=1e-10)

    def test_label_values_do_not_matter(self):
        a = np.array([0, 0, 1, 1, 2, 2])
        b = np.array([5, 5, 9, 9, 7, 7])
        assert nmi(a, b) == pytest.approx(1.0, abs=1e-12)

    def test_length_mismatch(self):
        with pytest.raises(ValueError, match="equal length"):
            nmi(np.array([0, 1]), np.array([0, 1, 2]))


@settings(max_examples=50, deadline=None)
@given(
    n=st.integers(4, 30),
    ca=st.integers(1, 4),
    cb=st.integers(1, 4),
    seed=st.integers(0, 2**31 - 1),
)
def test_nmi_symmetry_and_range(n, ca, cb, seed):
    rng = np.random.default_rng(seed)
    a = rng.integers(0, ca, size=n)
    b = rng.integers(0, cb, size=n)
    v = nmi(a, b)
    assert v == pytest.approx(nmi(b, a), abs=1e-12)
    assert -1e-12 <= v <= 1.0 + 1e-12
    perm = rng.permutation(ca)
    assert nmi(perm[a], b) == pytest.approx(v, abs=1e-12)


class TestKMeans:
    def test_recovers_separated_blobs(self, rng):
        batch = blob_batch(rng, n_per_class=10, n_classes=3)
        assign = kmeans(batch.vectors, 3, np.random.default_rng(0))
        assert nmi(assign, batch.labels) == pytest.approx(1.0, abs=1e-12)

    def test_deterministic_given_seed(self, rng):
        x = rng.standard_normal((40, 5))
        a = kmeans(x, 4, np.random.default_rng(7))
        b = kmeans(x, 4, np.random.default_rng(7))
        assert np.array_equal(a, b)

    def test_k_equals_one(self, rng):
        x = rng.standard_normal((10, 3))
        assert np.array_equal(kmeans(x, 1, np.random.default_rng(0)), np.zeros(10))

    def test_k_bounds(self, rng):
        x = rng.standard_normal((5, 3))
        with pytest.raises(ValueError, match="1 <= k <= n"):
            kmeans(x, 6, np.random.default_rng(0))

    def test_clustering_nmi_on_blobs(self, rng):
        batch = blob_batch(rng, n_per_class=10)
        assert clustering_nmi(batch, seed=3) == pytest.approx(1.0, abs=1e-9)

    def test_clustering_nmi_single_class(self, rng):
        batch = EmbeddingBatch(unit_rows(rng, 6, 4), np.zeros(6, dtype=int))
        assert clustering_nmi(batch, seed=3) == 0.0


class TestRunningTracks:
    def test_averages_hand_example(self):
        tracks = RunningTracks(lengths=(2, 4), history=3, n_metrics=1)
        for v in (1.0, 2.0, 3.0, 4.0):
            tracks.append(np.array([v]))
        avg = tracks.averages()
        assert avg.shape == (1, 2)
        assert avg[0, 0] == pytest.approx(3.5)   # mean of last 2
        assert avg[0, 1] == pytest.approx(2.5)   # mean of last 4

    def test_alternating_sequence_averages_to_half(self):
        tracks = RunningTracks(lengths=(2, 8, 16, 32), history=20, n_metrics=1)
        for i in range(32):
            tracks.append(np.array([float(i % 2)]))
        assert np.allclose(tracks.averages(), 0.5)

    def test_short_buffer_uses_available(self):
        tracks = RunningTracks(lengths=(8,), history=4, n_metrics=1)
        tracks.append(np.array([2.0])).append(np.array([4.0]))
        assert tracks.averages()[0, 0] == pytest.approx(3.0)

    def test_history_zero_padded_oldest_first(self):
        tracks = RunningTracks(lengths=(2,), history=5, n_metrics=2)
        tracks.append(np.array([1.0, 10.0])).append(np.array([2.0, 20.0]))
        mat = tracks.history_matrix()
        assert mat.shape == (5, 2)
        assert np.array_equal(mat[:3], np.zeros((3, 2)))
        assert np.array_equal(mat[3], [1.0, 10.0])
        assert np.array_equal(mat[4], [2.0, 20.0])

    def test_capacity_covers_longest_consumer(self):
        tracks = RunningTracks(lengths=(2,), history=2, n_metrics=1)
        for v in (1.0, 2.0, 3.0):
            tracks.append(np.array([v]))
        assert len(tracks) == 2
        assert tracks.averages()[0, 0] == pytest.approx(2.5)
        assert np.array_equal(tracks.history_matrix().ravel(), [2.0, 3.0])

    def test_validation(self):
        tracks = RunningTracks(n_metrics=2)
        with pytest.raises(ValueError, match="expected 2 metric values"):
            tracks.append(np.array([1.0]))
        with pytest.raises(ValueError, match="finite"):
            tracks.append(np.array([1.0, np.nan]))
        with pytest.raises(ValueError, match="no snapshots"):
            RunningTracks().averages()
        with pytest.raises(ValueError, match=">= 1"):
            RunningTracks(lengths=(0,))

    def test_update_tracks_appends_report_vector(self):
        report = EvalReport(recall_at={1: 0.5, 2: 0.6, 4: 0.7}, nmi=0.4, intra=0.3, inter=1.1)
        tracks = update_tracks(RunningTracks(), report)
        assert np.array_equal(tracks.history_matrix()[-1], report.as_vector())


class TestEvalReport:
    def test_row_and_vector_ordering(self):
        report = EvalReport(recall_at={4: 0.9, 1: 0.5, 2: 0.7}, nmi=0.4, intra=0.2, inter=1.0)
        row = report.as_row()
        assert list(row) == list(METRIC_FIELDS)
        assert np.array_equal(report.as_vector(), [0.5, 0.7, 0.9, 0.4, 0.2, 1.0])

    def test_evaluate_bundle_on_blobs(self, rng):
        batch = blob_batch(rng, n_per_class=10)
        report = evaluate(batch, kmeans_seed=5)
        assert report.recall_at[1] == 1.0
        assert report.nmi == pytest.approx(1.0, abs=1e-9)
        assert report.inter > report.intra
        assert eval_score(report) == pytest.approx(report.recall_at[1] + report.nmi)
