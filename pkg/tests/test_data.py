import numpy as np
import pytest

from ndf_lab import nncore
from ndf_lab.data import (DataError, SplitSpec, epoch_stream, generate_blobs, load_mnist,
                          split, write_idx)

from conftest import MNIST_DIR


def write_pair(tmp_path, images, labels):
    img, lab = tmp_path / "img", tmp_path / "lab"
    write_idx(img, lab, images, labels)
    return img, lab


class TestMnist:
    def test_handcrafted_pair(self, tmp_path):
        images = np.array([[[0, 255], [255, 0]], [[255, 255], [0, 0]]], dtype=np.uint8)
        ds = load_mnist(*write_pair(tmp_path, images, [3, 7]))
        assert len(ds) == 2 and ds.feature_dim == 4 and ds.num_classes == 10
        np.testing.assert_array_equal(ds.features, [[0, 1, 1, 0], [1, 1, 0, 0]])
        np.testing.assert_array_equal(ds.labels, [3, 7])
        np.testing.assert_array_equal(ds.ids, [0, 1])

    def test_header_bytes_are_big_endian(self, tmp_path):
        img, lab = write_pair(tmp_path, np.zeros((1, 2, 3), np.uint8), [1])
        assert img.read_bytes()[:16] == bytes.fromhex("00000803" "00000001" "00000002" "00000003")
        assert lab.read_bytes()[:8] == bytes.fromhex("00000801" "00000001")

    def test_empty_file(self, tmp_path):
        img, lab = write_pair(tmp_path, np.zeros((1, 2, 2), np.uint8), [0])
        img.write_bytes(b"")
        with pytest.raises(DataError, match="truncated"):
            load_mnist(img, lab)

    def test_truncated_pixels(self, tmp_path):
        img, lab = write_pair(tmp_path, np.zeros((2, 2, 2), np.uint8), [0, 1])
        img.write_bytes(img.read_bytes()[:-1])
        with pytest.raises(DataError, match="truncated"):
            load_mnist(img, lab)

    def test_bad_magic(self, tmp_path):
        img, lab = write_pair(tmp_path, np.zeros((1, 2, 2), np.uint8), [0])
        with pytest.raises(DataError, match="magic"):
            load_mnist(lab, img)

    def test_count_mismatch(self, tmp_path):
        img, _ = write_pair(tmp_path, np.zeros((2, 2, 2), np.uint8), [0, 1])
        other = tmp_path / "other"
        other.mkdir()
        _, lab = write_pair(other, np.zeros((1, 2, 2), np.uint8), [0])
        with pytest.raises(DataError, match="labels"):
            load_mnist(img, lab)

    @pytest.mark.skipif(not (MNIST_DIR / "train-images-idx3-ubyte").exists(),
                        reason="MNIST files not available")
    def test_official_training_set(self):
        ds = load_mnist(MNIST_DIR / "train-images-idx3-ubyte", MNIST_DIR / "train-labels-idx1-ubyte")
        assert (len(ds), ds.feature_dim, ds.num_classes) == (60000, 784, 10)
        assert ds.features.min() == 0.0 and ds.features.max() == 1.0
        assert set(np.unique(ds.labels)) == set(range(10))


class TestBlobs:
    def test_deterministic(self):
        a, b = generate_blobs(3, 20, 5, 0.5, seed=9), generate_blobs(3, 20, 5, 0.5, seed=9)
        assert a.features.tobytes() == b.features.tobytes()
        np.testing.assert_array_equal(a.labels, b.labels)

    def test_zero_spread_collapses_to_centers(self):
        ds = generate_blobs(4, 10, 3, 0.0, seed=1)
        for c in range(4):
            rows = ds.features[ds.labels == c]
            assert np.all(rows == rows[0])

    def test_rejects_nonpositive_counts(self):
        with pytest.raises(DataError):
            generate_blobs(0, 10, 3, 1.0, seed=0)

    def test_separable_blobs_are_learned(self):
        ds = generate_blobs(2, 50, 5, 0.01, seed=4)
        model = nncore.MlpModel.init([5, 2], seed=0)
        opt = nncore.MomentumSGD(model.params(), lr=0.1)
        for k, batch in enumerate(epoch_stream(ds, 10, epoch_seed=0)):
            _, _, grads = nncore.loss_and_grad(model, batch.features, batch.labels)
            opt.step(model.params(), grads)
        for epoch in range(1, 5):
            for batch in epoch_stream(ds, 10, epoch_seed=epoch):
                _, _, grads = nncore.loss_and_grad(model, batch.features, batch.labels)
                opt.step(model.params(), grads)
        # 5 epochs x 10 batches = 50 updates
        assert nncore.evaluate_accuracy(model, ds.features, ds.labels) == 1.0


class TestSplit:
    def test_sizes_and_disjointness(self):
        ds = generate_blobs(5, 200, 2, 1.0, seed=0)
        train, dev, rest = split(ds, SplitSpec(800, 100, seed=3))
        assert (len(train), len(dev), len(rest)) == (700, 100, 200)
        ids = [set(d.ids) for d in (train, dev, rest)]
        assert not (ids[0] & ids[1]) and not (ids[0] & ids[2]) and not (ids[1] & ids[2])
        assert set().union(*ids) == set(ds.ids)

    def test_full_subset_leaves_nothing(self):
        ds = generate_blobs(2, 10, 2, 1.0, seed=0)
        train, dev, rest = split(ds, SplitSpec(len(ds), 1))
        assert rest is None and len(train) + len(dev) == len(ds)

    def test_seeded(self):
        ds = generate_blobs(2, 50, 2, 1.0, seed=0)
        a, b = split(ds, SplitSpec(60, 10, seed=7)), split(ds, SplitSpec(60, 10, seed=7))
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x.ids, y.ids)

    @pytest.mark.parametrize("subset,dev", [(101, 10), (50, 50), (50, 0)])
    def test_invalid(self, subset, dev):
        with pytest.raises(DataError):
            split(generate_blobs(2, 50, 2, 1.0, seed=0), SplitSpec(subset, dev))


class TestEpochStream:
    def test_exact_cover(self):
        ds = generate_blobs(4, 25, 2, 1.0, seed=0)
        batches = list(epoch_stream(ds, 20, epoch_seed=1))
        assert len(batches) == 5 and all(len(b) == 20 for b in batches)
        assert sorted(np.concatenate([b.ids for b in batches])) == list(range(100))
        assert [b.batch_index for b in batches] == list(range(5))

    def test_trailing_partial_batch_dropped(self):
        ds = generate_blobs(5, 21, 2, 1.0, seed=0)
        batches = list(epoch_stream(ds, 20, epoch_seed=1))
        used = np.concatenate([b.ids for b in batches])
        assert len(batches) == 5 and len(set(used)) == 100

    def test_seeded(self):
        ds = generate_blobs(4, 25, 2, 1.0, seed=0)
        a = [b.ids for b in epoch_stream(ds, 20, epoch_seed=3)]
        b = [b.ids for b in epoch_stream(ds, 20, epoch_seed=3)]
        assert all(np.array_equal(x, y) for x, y in zip(a, b))

    def test_batch_features_match_rows(self):
        ds = generate_blobs(3, 10, 2, 1.0, seed=0)
        for b in epoch_stream(ds, 7, epoch_seed=0):
            np.testing.assert_array_equal(b.features, ds.features[b.rows])
            np.testing.assert_array_equal(b.labels, ds.labels[b.rows])

    @pytest.mark.parametrize("m", [0, 31])
    def test_invalid_batch_size(self, m):
        with pytest.raises(DataError):
            list(epoch_stream(generate_blobs(3, 10, 2, 1.0, seed=0), m, epoch_seed=0))
