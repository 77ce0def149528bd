"""Mini-batch Adam training with validation-accuracy early stopping."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ClassIndexOutOfRange, EmptyTrainingSet, InvalidConfig
from .nn import Adam, Network

logger = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    batch_size: int = 256
    max_epochs: int = 50
    early_stopping_patience: int = 7
    learning_rate: float = 0.0025
    seed: int = 42

    def __post_init__(self):
        if self.batch_size < 1:
            raise InvalidConfig("batch_size must be >= 1")
        if self.max_epochs < 1:
            raise InvalidConfig("max_epochs must be >= 1")
        if self.early_stopping_patience < 1:
            raise InvalidConfig("early_stopping_patience must be >= 1")
        if self.learning_rate < 0:
            raise InvalidConfig("learning_rate must be >= 0")

    def to_dict(self):
        return asdict(self)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_accuracy: float | None


@dataclass
class History:
    records: list[EpochRecord] = field(default_factory=list)
    best_epoch: int | None = None
    best_val_accuracy: float | None = None
    stopped_early: bool = False

    @property
    def epochs_run(self) -> int:
        return len(self.records)

    def to_rows(self):
        return [asdict(r) for r in self.records]


class EarlyStopping:
    """Track the best score; signal a stop after ``patience`` epochs without strict gain."""

    def __init__(self, patience):
        self.patience = patience
        self.best_score = None
        self.best_epoch = None
        self.wait = 0

    def update(self, epoch, score):
        """Record ``score`` for ``epoch``. Returns ``(improved, stop)``."""
        if self.best_score is None or score > self.best_score:
            self.best_score = score
            self.best_epoch = epoch
            self.wait = 0
            return True, False
        self.wait += 1
        return False, self.wait >= self.patience


def accuracy(network, X, y, batch_size=1024):
    probs = network.predict_proba(X, batch_size=batch_size)
    return float(np.mean(probs.argmax(axis=1) == y))


def _check_targets(y, n_classes, name):
    y = np.asarray(y)
    if y.size and (not np.issubdtype(y.dtype, np.integer) or y.min() < 0 or y.max() >= n_classes):
        raise ClassIndexOutOfRange(f"{name} labels must be integers in [0, {n_classes})")
    return y.astype(np.int64)


def fit_network(network: Network, X, y, X_val=None, y_val=None, config: TrainConfig | None = None,
                n_classes=None, callback=None):
    """Train ``network`` in place and return a :class:`History`.

    Without validation data the network trains for exactly
    ``config.max_epochs`` epochs. With validation data, training stops once
    ``early_stopping_patience`` epochs pass without a strict gain in
    validation accuracy, and the weights of the best epoch are restored.

    ``callback(epoch, network)`` runs after every epoch; a truthy return
    ends training there.
    """
    config = config or TrainConfig()
    X = np.asarray(X)
    if len(X) == 0:
        raise EmptyTrainingSet("training set is empty")
    n_classes = n_classes or network.layers[-1].out_features
    y = _check_targets(y, n_classes, "training")
    if len(y) != len(X):
        raise ValueError("X and y lengths differ")
    has_val = X_val is not None and len(X_val) > 0
    if has_val:
        X_val = np.asarray(X_val)
        y_val = _check_targets(y_val, n_classes, "validation")

    rng = np.random.default_rng(config.seed)
    optimizer = Adam(learning_rate=config.learning_rate)
    params = network.parameters()
    stopper = EarlyStopping(config.early_stopping_patience)
    history = History()
    best_params = None
    n = len(X)

    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            loss, grads = network.loss_and_grad(X[idx], y[idx], training=True, rng=rng)
            optimizer.step(params, grads)
            total += loss * len(idx)
        train_loss = total / n

        val_acc = accuracy(network, X_val, y_val) if has_val else None
        history.records.append(EpochRecord(epoch, train_loss, val_acc))
        logger.info("epoch %d loss %.5f val_acc %s", epoch, train_loss, val_acc)
        halt = bool(callback(epoch, network)) if callback is not None else False
        if has_val:
            improved, stop = stopper.update(epoch, val_acc)
            if improved:
                best_params = {k: v.copy() for k, v in params.items()}
            if stop:
                history.stopped_early = True
                break
        if halt:
            break

    if has_val:
        network.set_parameters(best_params)
        history.best_epoch = stopper.best_epoch
        history.best_val_accuracy = stopper.best_score
    else:
        history.best_epoch = history.epochs_run
    return history
