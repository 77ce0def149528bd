"""The stacked-LSTM origin classifier.

Names enter as ``(n, 30, 28)`` one-hot tensors, run through a stack of
LSTM layers, and the final hidden state of the last layer feeds a softmax
over the origin classes.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from .codec import MAX_LEN, N_CHANNELS, NameEncoder
from .dataset import DEFAULT_TAXONOMY, OriginTaxonomy
from .errors import EmptyTrainingSet, InvalidConfig, ShapeMismatch
from .nn import LSTM, Dense, Network, lstm_param_count
from .training import History, TrainConfig, fit_network


@dataclass
class ModelConfig:
    lstm_sizes: tuple[int, ...] = (512, 256, 64)
    dropout_rate: float = 0.2
    num_classes: int = 17
    input_channels: int = N_CHANNELS
    max_seq_len: int = MAX_LEN

    def __post_init__(self):
        self.lstm_sizes = tuple(int(s) for s in self.lstm_sizes)
        if not self.lstm_sizes or any(s < 1 for s in self.lstm_sizes):
            raise InvalidConfig("lstm_sizes must be a non-empty list of positive sizes")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise InvalidConfig("dropout_rate must lie in [0, 1)")
        if self.num_classes < 2:
            raise InvalidConfig("num_classes must be >= 2")
        if self.input_channels < 1 or self.max_seq_len < 1:
            raise InvalidConfig("input_channels and max_seq_len must be >= 1")

    def to_dict(self):
        d = asdict(self)
        d["lstm_sizes"] = list(self.lstm_sizes)
        return d


def expected_parameter_count(config: ModelConfig) -> int:
    """Closed-form count: ``4(c(i+c)+c)`` per LSTM layer plus the softmax layer."""
    total, fan_in = 0, config.input_channels
    for c in config.lstm_sizes:
        total += lstm_param_count(fan_in, c)
        fan_in = c
    return total + fan_in * config.num_classes + config.num_classes


@dataclass
class LstmModel:
    config: ModelConfig
    network: Network
    taxonomy: tuple[str, ...]
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.taxonomy) != self.config.num_classes:
            raise InvalidConfig(
                f"taxonomy has {len(self.taxonomy)} classes, config expects {self.config.num_classes}"
            )


def _assemble(config: ModelConfig, rng) -> Network:
    layers, fan_in = [], config.input_channels
    for k, c in enumerate(config.lstm_sizes):
        last = k == len(config.lstm_sizes) - 1
        layers.append(LSTM(fan_in, c, dropout=config.dropout_rate, return_sequences=not last, rng=rng))
        fan_in = c
    layers.append(Dense(fan_in, config.num_classes, "softmax", rng=rng))
    return Network(layers)


def build(config: ModelConfig | None = None, seed: int = 42, taxonomy=None) -> LstmModel:
    config = config or ModelConfig()
    if taxonomy is None:
        if config.num_classes != len(DEFAULT_TAXONOMY):
            taxonomy = tuple(f"class_{k}" for k in range(config.num_classes))
        else:
            taxonomy = DEFAULT_TAXONOMY.names
    taxonomy = tuple(taxonomy.names if isinstance(taxonomy, OriginTaxonomy) else taxonomy)
    network = _assemble(config, np.random.default_rng(seed))
    return LstmModel(config, network, taxonomy, {"seed": seed})


def count_parameters(model) -> int:
    network = model.network if isinstance(model, LstmModel) else model
    return network.n_params()


def _check_inputs(model: LstmModel, X):
    X = np.asarray(X)
    cfg = model.config
    if X.ndim != 3 or X.shape[1:] != (cfg.max_seq_len, cfg.input_channels):
        raise ShapeMismatch(f"expected (n, {cfg.max_seq_len}, {cfg.input_channels}) input, got {X.shape}")
    return X


def train(model: LstmModel, train_set, validation_set=None, tc: TrainConfig | None = None, callback=None):
    """Fit ``model`` on ``(X, y)`` pairs; returns ``(model, history)``.

    An empty or missing ``validation_set`` trains for exactly
    ``tc.max_epochs`` epochs (final fit) unless ``callback`` (see
    :func:`fit_network`) ends training sooner.
    """
    tc = tc or TrainConfig()
    X, y = train_set
    if len(X) == 0:
        raise EmptyTrainingSet("training set is empty")
    X = _check_inputs(model, X)
    X_val = y_val = None
    if validation_set is not None and len(validation_set[0]) > 0:
        X_val = _check_inputs(model, validation_set[0])
        y_val = validation_set[1]
    history = fit_network(model.network, X, y, X_val, y_val, tc, n_classes=model.config.num_classes,
                          callback=callback)
    model.provenance = {
        "seed": tc.seed,
        "epochs_run": history.epochs_run,
        "best_epoch": history.best_epoch,
        "best_val_accuracy": history.best_val_accuracy,
    }
    return model, history


def final_fit(model_config: ModelConfig, data, tc: TrainConfig, epochs: int, seed: int = 42, taxonomy=None):
    """Retrain from scratch on all data for a fixed number of epochs."""
    tc = TrainConfig(**{**tc.to_dict(), "max_epochs": epochs})
    model = build(model_config, seed=seed, taxonomy=taxonomy)
    return train(model, data, None, tc)


def predict(model: LstmModel, names, batch_size: int = 1024) -> np.ndarray:
    """Class probabilities for encoded names, dropout off."""
    X = _check_inputs(model, names)
    return model.network.predict_proba(X, batch_size=batch_size)


class OriginClassifier(ClassifierMixin, BaseEstimator):
    """Scikit-learn style wrapper around the LSTM origin model.

    ``X`` may be a sequence of raw name strings or an already encoded
    ``(n, 30, 28)`` array. ``y`` holds class names from ``taxonomy`` (or
    any labels when ``taxonomy`` is None, in which case the sorted unique
    labels become the classes).

    Parameters
    ----------
    lstm_sizes : tuple of int, default=(512, 256, 64)
    dropout_rate : float, default=0.2
    batch_size : int, default=256
    max_epochs : int, default=50
    patience : int, default=7
    learning_rate : float, default=0.0025
    validation_fraction : float, default=0.15
        Share of ``X`` held out (seeded, rounded up) for early stopping. With
        0 the model trains for exactly ``max_epochs`` epochs.
    taxonomy : sequence of str or OriginTaxonomy, optional
    random_state : int, default=42
    """

    def __init__(self, lstm_sizes=(512, 256, 64), dropout_rate=0.2, batch_size=256, max_epochs=50,
                 patience=7, learning_rate=0.0025, validation_fraction=0.15, taxonomy=None,
                 random_state=42):
        self.lstm_sizes = lstm_sizes
        self.dropout_rate = dropout_rate
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.learning_rate = learning_rate
        self.validation_fraction = validation_fraction
        self.taxonomy = taxonomy
        self.random_state = random_state

    def _encode(self, X):
        if isinstance(X, np.ndarray) and X.ndim == 3:
            return X
        return NameEncoder().fit_transform(list(X))

    def fit(self, X, y):
        X = self._encode(X)
        y = np.asarray(y)
        if len(X) != len(y):
            raise ValueError(f"X has {len(X)} rows but y has {len(y)}")
        if self.taxonomy is None:
            self.classes_ = np.unique(y)
        else:
            tax = self.taxonomy.names if isinstance(self.taxonomy, OriginTaxonomy) else self.taxonomy
            self.classes_ = np.asarray(tax)
        lookup = {c: i for i, c in enumerate(self.classes_.tolist())}
        try:
            targets = np.array([lookup[v] for v in y.tolist()], dtype=np.int64)
        except KeyError as exc:
            raise ValueError(f"label {exc.args[0]!r} not among the classes") from None

        seed = 42 if self.random_state is None else int(self.random_state)
        n_val = math.ceil(self.validation_fraction * len(X)) if self.validation_fraction else 0
        order = np.random.default_rng(seed).permutation(len(X))
        val_idx, train_idx = order[:n_val], order[n_val:]

        config = ModelConfig(tuple(self.lstm_sizes), self.dropout_rate, len(self.classes_))
        tc = TrainConfig(self.batch_size, self.max_epochs, self.patience, self.learning_rate, seed)
        self.model_ = build(config, seed=seed, taxonomy=[str(c) for c in self.classes_])
        _, self.history_ = train(
            self.model_, (X[train_idx], targets[train_idx]),
            (X[val_idx], targets[val_idx]) if n_val else None, tc,
        )
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "model_")
        return predict(self.model_, self._encode(X))

    def predict(self, X):
        proba = self.predict_proba(X)
        return self.classes_[proba.argmax(axis=1)]

    @property
    def n_parameters_(self):
        check_is_fitted(self, "model_")
        return count_parameters(self.model_)
