import json
import struct

import numpy as np
import pytest

from nameorigin.codec import encode_batch
from nameorigin.errors import (
    ChecksumMismatch,
    EmptyTrainingSet,
    FormatVersionMismatch,
    InvalidConfig,
    ModelFormatError,
    ShapeMismatch,
)
from nameorigin.model import ModelConfig, build, count_parameters, expected_parameter_count, predict, train
from nameorigin.nn import LSTM, Dense, Network, sparse_crossentropy
from nameorigin.persist import fnv1a64, from_bytes, load, save, to_bytes
from nameorigin.training import EarlyStopping, TrainConfig, fit_network

SMALL = ModelConfig(lstm_sizes=(8, 4), num_classes=4)


def test_default_parameter_count():
    model = build()
    assert count_parameters(model) == 1_978_705
    assert expected_parameter_count(ModelConfig()) == 1_978_705


def test_wider_middle_layer_count():
    cfg = ModelConfig(lstm_sizes=(512, 264, 64))
    assert expected_parameter_count(cfg) == 2_013_809
    assert count_parameters(build(cfg)) == 2_013_809


def test_count_oracles():
    assert LSTM(28, 512, rng=np.random.default_rng(0)).n_params() == 1_107_968
    assert Dense(2, 3, rng=np.random.default_rng(0)).n_params() == 9


@pytest.mark.parametrize("kwargs", [
    {"lstm_sizes": ()}, {"lstm_sizes": (0,)}, {"dropout_rate": 1.0}, {"dropout_rate": -0.1}, {"num_classes": 1},
])
def test_invalid_config(kwargs):
    with pytest.raises(InvalidConfig):
        ModelConfig(**kwargs)


def test_taxonomy_length_checked():
    with pytest.raises(InvalidConfig):
        build(SMALL, taxonomy=["a", "b"])


def test_build_is_deterministic():
    a, b = build(SMALL, seed=7), build(SMALL, seed=7)
    pa, pb = a.network.parameters(), b.network.parameters()
    assert all(np.array_equal(pa[k], pb[k]) for k in pa)
    c = build(SMALL, seed=8)
    assert not np.array_equal(pa["lstm0.W"], c.network.parameters()["lstm0.W"])


def test_predict_shape_checked():
    with pytest.raises(ShapeMismatch):
        predict(build(SMALL), np.zeros((2, 29, 28)))


def test_zero_output_weights_give_uniform(tiny_corpus):
    model = build(SMALL)
    model.network.parameters()["dense0.W"][:] = 0
    model.network.parameters()["dense0.b"][:] = 0
    P = predict(model, tiny_corpus["X"][:10])
    np.testing.assert_allclose(P, 0.25, rtol=1e-14)


def test_prediction_independent_of_batch(tiny_corpus):
    model = build(SMALL, seed=3)
    X = tiny_corpus["X"][:40]
    full = predict(model, X, batch_size=40)
    pieces = np.vstack([predict(model, X[i:i + 7], batch_size=7) for i in range(0, 40, 7)])
    single = predict(model, X[5:6])
    np.testing.assert_allclose(full, pieces, rtol=0, atol=1e-13)
    np.testing.assert_allclose(full[5:6], single, rtol=0, atol=1e-13)


def test_probability_rows_sum_to_one(tiny_corpus):
    P = predict(build(SMALL), tiny_corpus["X"])
    np.testing.assert_allclose(P.sum(axis=1), 1.0, atol=1e-12)
    assert np.all((P > 0) & (P < 1))


@pytest.mark.parametrize("seed", range(10))
def test_first_adam_steps_reduce_loss(seed, tiny_corpus):
    # full-batch, dropout off: five small steps should lower the loss
    cfg = ModelConfig(lstm_sizes=(8,), dropout_rate=0.0, num_classes=4)
    model = build(cfg, seed=seed)
    X, y = tiny_corpus["X"][:64], tiny_corpus["y"][:64]
    net = model.network
    start = sparse_crossentropy(net.predict_proba(X), y)
    fit_network(net, X, y, config=TrainConfig(batch_size=64, max_epochs=5, seed=seed), n_classes=4)
    assert sparse_crossentropy(net.predict_proba(X), y) < start


class TestEarlyStopping:
    def test_constant_scores_stop_after_patience(self):
        stopper = EarlyStopping(7)
        stops = [stopper.update(e, 0.5) for e in range(1, 20)]
        first_stop = next(e for e, (_, stop) in enumerate(stops, start=1) if stop)
        assert first_stop == 8
        assert stopper.best_epoch == 1

    def test_increasing_scores_never_stop(self):
        stopper = EarlyStopping(2)
        assert all(stopper.update(e, e / 100) == (True, False) for e in range(1, 51))
        assert stopper.best_epoch == 50

    def test_ties_do_not_count_as_improvement(self):
        stopper = EarlyStopping(2)
        stopper.update(1, 0.4)
        stopper.update(2, 0.6)
        assert stopper.update(3, 0.6) == (False, False)
        assert stopper.update(4, 0.6) == (False, True)
        assert stopper.best_epoch == 2

    def test_zero_learning_rate_stops_at_patience_plus_one(self, tiny_corpus):
        model = build(SMALL, seed=0)
        before = {k: v.copy() for k, v in model.network.parameters().items()}
        tc = TrainConfig(batch_size=50, max_epochs=30, early_stopping_patience=7, learning_rate=0.0)
        X, y = tiny_corpus["X"], tiny_corpus["y"]
        _, history = train(model, (X[:200], y[:200]), (X[200:], y[200:]), tc)
        assert history.epochs_run == 8
        assert history.stopped_early
        assert history.best_epoch == 1
        after = model.network.parameters()
        assert all(np.array_equal(before[k], after[k]) for k in before)

    def test_best_weights_restored(self, tiny_corpus):
        model = build(SMALL, seed=0)
        tc = TrainConfig(batch_size=32, max_epochs=12, early_stopping_patience=3, learning_rate=0.01)
        X, y = tiny_corpus["X"], tiny_corpus["y"]
        _, history = train(model, (X[:200], y[:200]), (X[200:], y[200:]), tc)
        acc = float(np.mean(predict(model, X[200:]).argmax(1) == y[200:]))
        assert acc == history.best_val_accuracy
        assert history.best_val_accuracy == max(r.val_accuracy for r in history.records)

    def test_no_validation_runs_all_epochs(self, tiny_corpus):
        model = build(SMALL, seed=0)
        tc = TrainConfig(batch_size=100, max_epochs=3, early_stopping_patience=1)
        _, history = train(model, (tiny_corpus["X"][:200], tiny_corpus["y"][:200]), None, tc)
        assert history.epochs_run == 3 and history.best_epoch == 3
        assert all(r.val_accuracy is None for r in history.records)


def test_empty_training_set():
    with pytest.raises(EmptyTrainingSet):
        train(build(SMALL), (np.zeros((0, 30, 28)), np.zeros(0, dtype=int)))


@pytest.mark.parametrize("kwargs", [{"batch_size": 0}, {"max_epochs": 0}, {"early_stopping_patience": 0},
                                    {"learning_rate": -1.0}])
def test_invalid_train_config(kwargs):
    with pytest.raises(InvalidConfig):
        TrainConfig(**kwargs)


class TestPersistence:
    def test_round_trip(self, tmp_path, tiny_corpus):
        model = build(SMALL, seed=4)
        model.provenance = {"seed": 4, "note": "x"}
        save(model, tmp_path / "m.nom")
        back = load(tmp_path / "m.nom")
        assert back.config == model.config
        assert back.taxonomy == model.taxonomy
        assert back.provenance == model.provenance
        X = tiny_corpus["X"][:20]
        assert np.array_equal(predict(back, X), predict(model, X))

    def test_bytes_are_deterministic(self):
        assert to_bytes(build(SMALL, seed=1)) == to_bytes(build(SMALL, seed=1))

    def test_float32_option(self, tiny_corpus):
        model = build(SMALL, seed=4)
        back = from_bytes(to_bytes(model, "f32"))
        np.testing.assert_allclose(predict(back, tiny_corpus["X"][:5]), predict(model, tiny_corpus["X"][:5]),
                                   atol=1e-6)
        assert len(to_bytes(model, "f32")) < len(to_bytes(model, "f64"))

    def test_truncated_file(self, tmp_path):
        blob = to_bytes(build(SMALL))
        (tmp_path / "t.nom").write_bytes(blob[: len(blob) // 2])
        with pytest.raises(ChecksumMismatch):
            load(tmp_path / "t.nom")
        with pytest.raises(ChecksumMismatch):
            from_bytes(blob[:5])

    def test_flipped_byte(self):
        blob = bytearray(to_bytes(build(SMALL)))
        blob[-20] ^= 0xFF
        with pytest.raises(ChecksumMismatch):
            from_bytes(bytes(blob))

    def _rewrite_header(self, blob, edit):
        (n,) = struct.unpack("<I", blob[8:12])
        header = json.loads(blob[12:12 + n])
        edit(header)
        raw = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
        body = blob[:8] + struct.pack("<I", len(raw)) + raw + blob[12 + n:-8]
        return body + struct.pack("<Q", fnv1a64(body))

    def test_future_version(self):
        blob = self._rewrite_header(to_bytes(build(SMALL)), lambda h: h.update(format_version=99))
        with pytest.raises(FormatVersionMismatch):
            from_bytes(blob)

    def test_bad_magic(self):
        body = b"NOTAMODL" + to_bytes(build(SMALL))[8:-8]
        with pytest.raises(ModelFormatError):
            from_bytes(body + struct.pack("<Q", fnv1a64(body)))

    def test_manifest_mismatch(self):
        blob = self._rewrite_header(to_bytes(build(SMALL)), lambda h: h["tensors"].pop())
        with pytest.raises(ModelFormatError):
            from_bytes(blob)

    def test_fnv_reference_values(self):
        # published FNV-1a 64 test vectors
        assert fnv1a64(b"") == 0xCBF29CE484222325
        assert fnv1a64(b"a") == 0xAF63DC4C8601EC8C
        assert fnv1a64(b"foobar") == 0x85944171F73967E8


def test_callback_ends_training(tiny_corpus):
    seen = []

    def stop_at_three(epoch, network):
        seen.append(epoch)
        return epoch == 3

    model = build(SMALL, seed=0)
    tc = TrainConfig(batch_size=100, max_epochs=10)
    _, history = train(model, (tiny_corpus["X"][:200], tiny_corpus["y"][:200]), None, tc, callback=stop_at_three)
    assert seen == [1, 2, 3]
    assert history.epochs_run == 3 and history.best_epoch == 3
