import numpy as np
import pytest

import trustdae as td
from trustdae import synth
from trustdae.trainer import TrainingError, stream

from conftest import make_tiny_store


def small_train_set(seed=0):
    ds = synth.make_block_dataset(n_users=40, n_items=60, n_communities=2,
                                  block_items=30, p_rate=0.4, p_trust=0.15,
                                  seed=seed)
    split = td.split_folds(ds, 5, seed=seed)
    return td.materialize_split(ds, split, 0)


class TestTrain:
    def test_zero_lr_is_identity(self):
        train_set, _ = small_train_set()
        hp = td.Hyperparams(latent_dim=4, epochs=3, lr=0.0, seed=1)
        params, _ = td.train(train_set, hp)
        init = td.init_params(train_set.n, train_set.m, 4, seed=1)
        for (_, a), (_, b) in zip(params.tensors(), init.tensors()):
            assert np.array_equal(a, b)

    def test_deterministic(self):
        train_set, _ = small_train_set()
        hp = td.Hyperparams(latent_dim=4, epochs=3, seed=7)
        p1, log1 = td.train(train_set, hp)
        p2, log2 = td.train(train_set, hp)
        for (_, a), (_, b) in zip(p1.tensors(), p2.tensors()):
            assert np.array_equal(a, b)
        assert [e.loss.total for e in log1.epochs] == [e.loss.total for e in log2.epochs]

    def test_loss_descends(self):
        train_set, _ = small_train_set()
        hp = td.Hyperparams(latent_dim=6, epochs=15, seed=0)
        _, log = td.train(train_set, hp)
        assert log.epochs[-1].loss.total < log.epochs[0].loss.total
        assert len(log.epochs) == 15
        assert log.stop_reason == "max_epochs"

    def test_empty_store_rejected(self):
        empty = td.SparseInteractions(3, 4, [], [])
        with pytest.raises(TrainingError):
            td.train(empty, td.Hyperparams(latent_dim=2, epochs=1))

    @pytest.mark.filterwarnings("ignore:invalid value encountered")
    def test_non_finite_aborts_with_context(self, monkeypatch):
        train_set, _ = small_train_set()

        def poisoned(n, m, k, seed, user_embedding=False):
            params = td.init_params(n, m, k, seed, user_embedding)
            params.rating_enc_w[0, 0] = np.nan
            return params

        monkeypatch.setattr("trustdae.trainer.init_params", poisoned)
        with pytest.raises(TrainingError, match="epoch 0, user"):
            td.train(train_set, td.Hyperparams(latent_dim=3, epochs=1))

    def test_param_norm_stays_bounded(self):
        train_set, _ = small_train_set()
        hp = td.Hyperparams(latent_dim=6, epochs=20, seed=0, weight_decay=0.01)
        init_norm = td.init_params(train_set.n, train_set.m, 6, 0).norm()
        _, log = td.train(train_set, hp)
        assert all(e.param_norm <= 100 * init_norm for e in log.epochs)

    def test_early_stop(self):
        train_set, _ = small_train_set()
        hp = td.Hyperparams(latent_dim=4, epochs=40, lr=1e-8, seed=0,
                            early_stop=True, patience=3, stop_tol=1e-5)
        _, log = td.train(train_set, hp)
        assert log.stop_reason == "early_stop"
        assert len(log.epochs) < 40

    def test_checkpoint_callback(self):
        train_set, _ = small_train_set()
        seen = []
        td.train(train_set, td.Hyperparams(latent_dim=3, epochs=4, seed=0),
                 checkpoint=lambda e, p: seen.append(e), checkpoint_every=2)
        assert seen == [1, 3, 3]  # every 2 epochs plus termination


class TestDecayPath:
    def test_alpha_one_beta_zero_trust_encoder_decays_only(self):
        train_set, _ = small_train_set()
        hp = td.Hyperparams(latent_dim=4, epochs=3, alpha=1.0, beta=0.0, seed=2)
        params, _ = td.train(train_set, hp)
        init = td.init_params(train_set.n, train_set.m, 4, seed=2)
        factor = 1.0 - hp.lr * hp.weight_decay / train_set.n
        scale = 1.0
        for _ in range(train_set.n * hp.epochs):
            scale *= factor
        assert np.array_equal(params.trust_enc_w, init.trust_enc_w * scale)
        assert np.array_equal(params.trust_enc_b, init.trust_enc_b * scale)

    def test_trust_replacement_leaves_rating_streams_alone(self):
        # keyed streams depend only on (seed, tag, epoch, user): the draws
        # consumed for corruption and rating negatives cannot see trust data
        a = stream(3, 0, 5, 7).random(8)
        b = stream(3, 0, 5, 7).random(8)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, stream(3, 1, 5, 7).random(8))
        assert not np.array_equal(a, stream(3, 0, 6, 7).random(8))


class TestPerUserCost:
    def test_empty(self):
        s = td.SparseInteractions(4, 9, [], [])
        assert td.per_user_cost(s, td.Hyperparams(latent_dim=8)) == 0

    def test_hand_example(self):
        # one active user: (4 + 4 + 2 + 2) * 8 = 96
        s = td.SparseInteractions(50, 1000,
                                  [(0, i) for i in range(4)],
                                  [(0, 1), (0, 2)])
        assert td.per_user_cost(s, td.Hyperparams(latent_dim=8)) == 96

    def test_linear_in_k(self):
        s = make_tiny_store(seed=4)
        c1 = td.per_user_cost(s, td.Hyperparams(latent_dim=5))
        c2 = td.per_user_cost(s, td.Hyperparams(latent_dim=10))
        assert c2 == 2 * c1


class TestTrainLog:
    def test_csv_shape(self):
        train_set, _ = small_train_set()
        _, log = td.train(train_set, td.Hyperparams(latent_dim=3, epochs=2, seed=0))
        rows = log.csv_rows()
        assert rows[0].startswith("epoch,rating_recon")
        assert len(rows) == 3
        assert rows[1].split(",")[0] == "0"
