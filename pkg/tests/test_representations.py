import numpy as np
import pytest

from cateforge import datagen as dg
from cateforge import representations as reps
from cateforge.errors import ConfigurationError, EmbeddingFormatError


@pytest.fixture(scope="module")
def dataset():
    return dg.sample_dataset(dg.default_spec(), 2000)


def probe_r2(embedding, target):
    """Least-squares R^2 of predicting target from the embedding columns."""
    X = np.hstack([embedding, np.ones((embedding.shape[0], 1))])
    coef, *_ = np.linalg.lstsq(X, target, rcond=None)
    residual = target - X @ coef
    total = np.sum((target - target.mean()) ** 2)
    return 1.0 - np.sum(residual**2) / total


class TestChannelContracts:
    def test_none_channel_width(self, dataset):
        repd = reps.build_representation(
            dataset, reps.RepresentationConfig("none"), np.arange(dataset.n)
        )
        assert repd.phi.shape == (dataset.n, 6)
        assert repd.feature_names == dataset.background_names

    def test_perfect_channel_width(self, dataset):
        repd = reps.build_representation(
            dataset, reps.RepresentationConfig("perfect"), np.arange(dataset.n)
        )
        assert repd.phi.shape == (dataset.n, 11)
        assert repd.feature_names[-5:] == dg.SYMPTOMS

    def test_entangled_channel_width_and_finite(self, dataset):
        repd = reps.build_representation(
            dataset, reps.RepresentationConfig("entangled", embed_dim=64), np.arange(dataset.n)
        )
        assert repd.phi.shape == (dataset.n, 70)
        assert np.all(np.isfinite(repd.phi))

    def test_external_channel_width(self, dataset, tmp_path):
        path = tmp_path / "emb.cemb"
        matrix = np.random.default_rng(0).normal(size=(dataset.n, 16)).astype(np.float32)
        reps.save_embeddings(matrix, path)
        repd = reps.build_representation(
            dataset,
            reps.RepresentationConfig("external", embedding_path=str(path)),
            np.arange(dataset.n),
        )
        assert repd.phi.shape == (dataset.n, 22)

    def test_external_row_mismatch(self, dataset, tmp_path):
        path = tmp_path / "short.cemb"
        reps.save_embeddings(np.zeros((10, 4), dtype=np.float32), path)
        with pytest.raises(ValueError, match="rows"):
            reps.build_representation(
                dataset,
                reps.RepresentationConfig("external", embedding_path=str(path)),
                np.arange(dataset.n),
            )

    def test_embed_dim_rank_condition(self):
        with pytest.raises(ConfigurationError, match="embed_dim"):
            reps.RepresentationConfig("entangled", embed_dim=4, distractor_count=8).validated()


class TestStandardization:
    def test_train_columns_standardized(self, dataset):
        train_mask = np.arange(1200)
        repd = reps.build_representation(
            dataset, reps.RepresentationConfig("perfect"), train_mask
        )
        train = repd.phi[train_mask]
        assert np.all(np.abs(train.mean(axis=0)) <= 1e-9)
        stds = train.std(axis=0)
        constant = repd.column_scales == 1.0
        assert np.all(np.abs(stds[~constant] - 1.0) <= 1e-9)

    def test_constant_column_scale_one(self, dataset):
        silent = dg.sample_dataset(
            dg.default_spec(), 50
        )  # background col 5 (self_employed) may vary; construct a constant col
        silent.x_background[:, 0] = 1.0
        repd = reps.build_representation(
            silent, reps.RepresentationConfig("none"), np.arange(silent.n)
        )
        assert repd.column_scales[0] == 1.0
        assert np.all(repd.phi[:, 0] == 0.0)

    def test_no_test_leakage(self, dataset):
        # permuting the held-out rows must leave the training block unchanged
        train_mask = np.arange(1000)
        cfg = reps.RepresentationConfig("perfect")
        before = reps.build_representation(dataset, cfg, train_mask)
        shuffled = dataset.subset(
            np.concatenate([np.arange(1000), 1000 + np.random.default_rng(1).permutation(1000)])
        )
        after = reps.build_representation(shuffled, cfg, train_mask)
        assert np.array_equal(before.phi[train_mask], after.phi[train_mask])


class TestEntangle:
    def test_noiseless_recovery_via_mixing_transpose(self, dataset):
        cfg = reps.RepresentationConfig("entangled", noise_sigma=0.0)
        emb = reps.entangle(dataset.x_symptoms, dataset.x_background, cfg)
        q = reps.mixing_matrix(cfg)
        recovered = emb @ q
        assert np.max(np.abs(recovered[:, :5] - dataset.x_symptoms)) <= 1e-10

    def test_noiseless_probe_recovers_symptoms(self, dataset):
        cfg = reps.RepresentationConfig("entangled", noise_sigma=0.0)
        emb = reps.entangle(dataset.x_symptoms, dataset.x_background, cfg)
        for j in range(5):
            assert probe_r2(emb, dataset.x_symptoms[:, j]) >= 0.999

    def test_probe_quality_decreases_with_noise(self, dataset):
        r2 = []
        for sigma in (0.0, 0.5, 2.0):
            cfg = reps.RepresentationConfig("entangled", noise_sigma=sigma)
            emb = reps.entangle(dataset.x_symptoms, dataset.x_background, cfg)
            r2.append(np.mean([probe_r2(emb, dataset.x_symptoms[:, j]) for j in range(5)]))
        assert r2[0] >= r2[1] >= r2[2]

    def test_deterministic(self, dataset):
        cfg = reps.RepresentationConfig("entangled", noise_sigma=0.3, mixing_seed=99)
        a = reps.entangle(dataset.x_symptoms, dataset.x_background, cfg)
        b = reps.entangle(dataset.x_symptoms, dataset.x_background, cfg)
        assert np.array_equal(a, b)

    def test_noise_keyed_per_row(self, dataset):
        cfg = reps.RepresentationConfig("entangled", noise_sigma=0.3)
        full = reps.entangle(dataset.x_symptoms, dataset.x_background, cfg)
        head = reps.entangle(dataset.x_symptoms[:100], dataset.x_background[:100], cfg)
        assert np.array_equal(full[:100], head)

    def test_wrong_channel_rejected(self, dataset):
        with pytest.raises(ConfigurationError, match="channel"):
            reps.entangle(
                dataset.x_symptoms,
                dataset.x_background,
                reps.RepresentationConfig("perfect"),
            )


class TestCembFormat:
    def test_round_trip_bit_exact(self, tmp_path):
        matrix = np.random.default_rng(2).normal(size=(7, 3)).astype(np.float32)
        path = tmp_path / "m.cemb"
        reps.save_embeddings(matrix, path)
        loaded = reps.load_embeddings(path)
        assert np.array_equal(loaded, matrix.astype(np.float64))

    def test_truncated_payload(self, tmp_path):
        import struct

        path = tmp_path / "trunc.cemb"
        payload = b"CEMB" + struct.pack("<III", 1, 3, 2) + struct.pack("<5f", *range(5))
        path.write_bytes(payload)
        with pytest.raises(EmbeddingFormatError, match="truncated"):
            reps.load_embeddings(path)

    def test_nan_rejected_with_location(self, tmp_path):
        matrix = np.zeros((3, 2), dtype=np.float32)
        matrix[1, 1] = np.nan
        path = tmp_path / "nan.cemb"
        reps.save_embeddings(matrix, path)
        with pytest.raises(EmbeddingFormatError, match=r"row 1, col 1"):
            reps.load_embeddings(path)

    def test_bad_version(self, tmp_path):
        import struct

        path = tmp_path / "v9.cemb"
        path.write_bytes(b"CEMB" + struct.pack("<III", 9, 1, 1) + struct.pack("<f", 0.5))
        with pytest.raises(EmbeddingFormatError, match="version"):
            reps.load_embeddings(path)

    def test_csv_variant(self, tmp_path):
        path = tmp_path / "emb.csv"
        path.write_text("2 3\n0.5 1.0 -2.0\n4.0 5.5 6.25\n", encoding="utf-8")
        loaded = reps.load_embeddings(path)
        assert loaded.shape == (2, 3)
        assert loaded[1, 2] == 6.25

    def test_csv_row_count_mismatch(self, tmp_path):
        path = tmp_path / "emb.csv"
        path.write_text("3 2\n1 2\n3 4\n", encoding="utf-8")
        with pytest.raises(EmbeddingFormatError, match="expected 3 rows"):
            reps.load_embeddings(path)
