import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tripletlab.data import LabeledDataset, generate_synthetic, load_dataset, save_dataset


class TestLabeledDataset:
    def test_properties(self):
        ds = LabeledDataset(np.zeros((6, 3)), np.array([0, 0, 1, 1, 2, 2]))
        assert ds.n == 6 and ds.input_dim == 3 and ds.n_classes == 3
        assert {k: v.tolist() for k, v in ds.class_index.items()} == {
            0: [0, 1],
            1: [2, 3],
            2: [4, 5],
        }

    def test_rejects_gapped_labels(self):
        with pytest.raises(ValueError, match="contiguous"):
            LabeledDataset(np.zeros((4, 2)), np.array([0, 0, 2, 2]))

    def test_rejects_singleton_class(self):
        with pytest.raises(ValueError, match="offending classes: \\[1\\]"):
            LabeledDataset(np.zeros((3, 2)), np.array([0, 0, 1]))

    def test_rejects_bad_shapes(self):
        with pytest.raises(ValueError, match=r"\(N, d\)"):
            LabeledDataset(np.zeros(4), np.array([0, 0, 1, 1]))
        with pytest.raises(ValueError, match="one integer per row"):
            LabeledDataset(np.zeros((4, 2)), np.array([0, 0, 1]))


class TestGenerate:
    def test_deterministic_per_seed(self):
        a = generate_synthetic(4, 10, 5, seed=3)
        b = generate_synthetic(4, 10, 5, seed=3)
        c = generate_synthetic(4, 10, 5, seed=4)
        assert np.array_equal(a.features, b.features)
        assert np.array_equal(a.labels, b.labels)
        assert not np.array_equal(a.features, c.features)

    def test_shapes_and_label_blocks(self):
        ds = generate_synthetic(3, 7, 4, seed=0)
        assert ds.features.shape == (21, 4)
        assert np.array_equal(ds.labels, np.repeat([0, 1, 2], 7))

    def test_zero_noise_collapses_classes(self):
        ds = generate_synthetic(3, 5, 4, within_std=0.0, seed=1)
        for c, idx in ds.class_index.items():
            block = ds.features[idx]
            assert np.array_equal(block, np.tile(block[0], (5, 1)))

    def test_spread_bounds_centers(self):
        ds = generate_synthetic(5, 4, 3, center_spread=0.5, within_std=0.0, seed=2)
        assert np.max(np.abs(ds.features)) <= 0.5

    def test_argument_validation(self):
        with pytest.raises(ValueError, match=">= 1"):
            generate_synthetic(0, 5, 3)
        with pytest.raises(ValueError, match="nonnegative"):
            generate_synthetic(2, 5, 3, within_std=-1.0)


class TestRoundTrip:
    def test_save_load_is_exact_at_float32(self, tmp_path, rng):
        ds = generate_synthetic(3, 6, 5, seed=9)
        path = tmp_path / "ds.csv"
        save_dataset(ds, path)
        loaded = load_dataset(path)
        assert np.array_equal(loaded.features, ds.features.astype(np.float32).astype(np.float64))
        assert np.array_equal(loaded.labels, ds.labels)
        assert loaded.features.dtype == np.float64

    def test_header_written(self, tmp_path):
        ds = generate_synthetic(2, 2, 3, seed=0)
        path = tmp_path / "ds.csv"
        save_dataset(ds, path)
        assert path.read_text().splitlines()[0] == "f0,f1,f2,label"

    def test_blank_lines_skipped(self, tmp_path):
        path = tmp_path / "ds.csv"
        path.write_text("f0,label\n1.0,0\n\n2.0,0\n1.5,1\n2.5,1\n")
        assert load_dataset(path).n == 4


class TestLoadErrors:
    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("")
        with pytest.raises(ValueError, match="empty file"):
            load_dataset(path)

    def test_bad_header(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("f0,f1,target\n1,2,0\n")
        with pytest.raises(ValueError, match="last header column must be 'label'"):
            load_dataset(path)
        path.write_text("x0,x1,label\n1,2,0\n")
        with pytest.raises(ValueError, match="feature columns must be f0..f1"):
            load_dataset(path)

    def test_field_count_reports_line_number(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("f0,f1,label\n1.0,2.0,0\n1.0,0\n")
        with pytest.raises(ValueError, match=r"bad\.csv:3: expected 3 fields, got 2"):
            load_dataset(path)

    def test_parse_failure_reports_line_number(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("f0,label\n1.0,0\noops,1\n")
        with pytest.raises(ValueError, match=r"bad\.csv:3:"):
            load_dataset(path)

    def test_no_data_rows(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("f0,label\n")
        with pytest.raises(ValueError, match="no data rows"):
            load_dataset(path)

    def test_noncontiguous_labels_remapped_with_warning(self, tmp_path):
        path = tmp_path / "gap.csv"
        path.write_text("f0,label\n1.0,5\n2.0,5\n3.0,9\n4.0,9\n")
        with pytest.warns(UserWarning, match="remapping non-contiguous labels to 0..1"):
            ds = load_dataset(path)
        assert np.array_equal(ds.labels, [0, 0, 1, 1])


@settings(max_examples=40, deadline=None)
@given(
    n_classes=st.integers(1, 6),
    per_class=st.integers(2, 8),
    input_dim=st.integers(1, 10),
    seed=st.integers(0, 2**31 - 1),
)
def test_generated_datasets_satisfy_invariants(n_classes, per_class, input_dim, seed):
    ds = generate_synthetic(n_classes, per_class, input_dim, seed=seed)
    assert ds.n == n_classes * per_class
    assert ds.n_classes == n_classes
    assert np.all(np.isfinite(ds.features))
    counts = np.bincount(ds.labels, minlength=n_classes)
    assert np.all(counts == per_class)


@settings(max_examples=20, deadline=None)
@given(n_classes=st.integers(1, 4), per_class=st.integers(2, 5), seed=st.integers(0, 10_000))
def test_round_trip_preserves_everything(n_classes, per_class, seed, tmp_path_factory):
    ds = generate_synthetic(n_classes, per_class, 3, seed=seed)
    path = tmp_path_factory.mktemp("rt") / "ds.csv"
    save_dataset(ds, path)
    loaded = load_dataset(path)
    assert np.array_equal(loaded.labels, ds.labels)
    assert np.allclose(loaded.features, ds.features, atol=1e-6)
