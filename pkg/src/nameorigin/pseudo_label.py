"""Pseudo-labelling from 39-dim leaf-nationality probability vectors.

Three ways map a leaf vector onto the origin classes: the manual crosswalk
applied to the single highest leaf, the crosswalk applied to leaf mass
summed per origin, and a learned feed-forward mapper. Predicted origin
probabilities are then filtered by confidence thresholds, and the
threshold combination is chosen by a weighted, min-max standardized score
over a grid of candidate combinations.
"""
from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .dataset import DEFAULT_TAXONOMY, OriginTaxonomy
from .errors import (
    EmptyTrainingSet,
    InputFormatError,
    InvalidWeights,
    ParseError,
    Unclassifiable,
    UnknownLabel,
)
from .metrics import confusion, scores
from .nn import Dense, Network
from .training import TrainConfig, fit_network

# (leaf nationality, origin), grouped by origin
CROSSWALK_TABLE = (
    ("Celtic-English", "Anglo-Saxon"),
    ("Muslim, Pakistanis, Bangladesh", "Arabic"),
    ("Muslim, Maghreb", "Arabic"),
    ("Muslim, Pakistanis, Pakistan", "Arabic"),
    ("Muslim, ArabianPeninsula", "Arabic"),
    ("European, SouthSlavs", "Balkans"),
    ("EastAsian, Chinese", "Chinese"),
    ("European, Baltics", "East-Europe"),
    ("European, EastEuropean", "East-Europe"),
    ("European, French", "French"),
    ("European, German", "German"),
    ("Hispanic, Portuguese", "Hispanic-Iberian"),
    ("Hispanic, Spanish", "Hispanic-Iberian"),
    ("SouthAsian", "India"),
    ("European, Italian, Italy", "Italian"),
    ("European, Italian, Romania", "Italian"),
    ("EastAsian, Japan", "Japanese"),
    ("EastAsian, South Korea", "Korean"),
    ("Muslim, Persian", "Persian"),
    ("Nordic, Scandinavian, Denmark", "Scandinavian"),
    ("Nordic, Finland", "Scandinavian"),
    ("Nordic, Scandinavian, Sweden", "Scandinavian"),
    ("Nordic, Scandinavian, Norway", "Scandinavian"),
    ("European, Russian", "Slavic-Russian"),
    ("EastAsian, Indochina, Thailand", "South-East Asia"),
    ("EastAsian, Indochina, Vietnam", "South-East Asia"),
    ("EastAsian, Indochina, Cambodia", "South-East Asia"),
    ("EastAsian, Indochina, Myanmar", "South-East Asia"),
    ("EastAsian, Malay, Malaysia", "South-East Asia"),
    ("EastAsian, Malay, Indonesia", "South-East Asia"),
    ("Muslim, Turkic, Turkey", "Turkish"),
)

# leaves without a crosswalk target
UNMAPPED_LEAVES = (
    "African, EastAfrican",
    "African, SouthAfrican",
    "African, WestAfrican",
    "EastAsian, Malay, Philippines",
    "European, Greek",
    "Jewish",
    "Muslim, Nubian",
    "Muslim, Turkic, CentralAsian",
)

LEAF_NATIONALITIES = tuple(leaf for leaf, _ in CROSSWALK_TABLE) + UNMAPPED_LEAVES
N_LEAVES = len(LEAF_NATIONALITIES)
SIMPLEX_TOL = 1e-6


class Crosswalk:
    """Many-to-one map from leaf nationalities to origin class indices."""

    def __init__(self, mapping=None, leaves=LEAF_NATIONALITIES, taxonomy: OriginTaxonomy = DEFAULT_TAXONOMY):
        mapping = dict(CROSSWALK_TABLE) if mapping is None else dict(mapping)
        self.leaves = tuple(leaves)
        self.taxonomy = taxonomy
        unknown = set(mapping) - set(self.leaves)
        if unknown:
            raise KeyError(f"crosswalk names unknown leaves: {sorted(unknown)}")
        self.target = np.full(len(self.leaves), -1, dtype=np.int64)
        for leaf, origin in mapping.items():
            self.target[self.leaves.index(leaf)] = taxonomy.index(origin)

    @property
    def mapped(self) -> np.ndarray:
        return self.target >= 0

    def group_matrix(self) -> np.ndarray:
        """``(n_leaves, K)`` 0/1 matrix summing leaf mass into origins."""
        G = np.zeros((len(self.leaves), len(self.taxonomy)))
        rows = np.flatnonzero(self.mapped)
        G[rows, self.target[rows]] = 1.0
        return G


DEFAULT_CROSSWALK = Crosswalk()


def crosswalk_highest(leaf, cw: Crosswalk = DEFAULT_CROSSWALK) -> int:
    """Origin of the highest leaf, falling back to the highest mapped leaf."""
    leaf = np.asarray(leaf, dtype=np.float64)
    if not cw.mapped.any():
        raise Unclassifiable("crosswalk maps no leaves")
    best = int(np.argmax(leaf))
    if cw.mapped[best]:
        return int(cw.target[best])
    masked = np.where(cw.mapped, leaf, -np.inf)
    fallback = int(np.argmax(masked))
    if leaf[fallback] <= 0:
        raise Unclassifiable("no probability mass on a mapped leaf")
    return int(cw.target[fallback])


def crosswalk_grouped(leaf, cw: Crosswalk = DEFAULT_CROSSWALK):
    """Sum leaf mass per origin, renormalize over mapped mass, return ``(origin, vector)``."""
    grouped = np.asarray(leaf, dtype=np.float64) @ cw.group_matrix()
    mass = grouped.sum()
    if mass <= 0:
        raise Unclassifiable("no probability mass on a mapped leaf")
    grouped = grouped / mass
    return int(np.argmax(grouped)), grouped


class CrosswalkClassifier(ClassifierMixin, BaseEstimator):
    """Manual crosswalk baseline as an estimator.

    ``method="highest"`` maps the single highest leaf; ``"grouped"`` sums
    leaf probabilities per origin first. Rows that cannot be classified get
    class index -1 from :meth:`predict_index`.
    """

    def __init__(self, method="highest", crosswalk=None):
        self.method = method
        self.crosswalk = crosswalk

    def fit(self, X=None, y=None):
        if self.method not in ("highest", "grouped"):
            raise ValueError(f"method must be 'highest' or 'grouped', got {self.method!r}")
        self.crosswalk_ = self.crosswalk or DEFAULT_CROSSWALK
        self.classes_ = np.asarray(self.crosswalk_.taxonomy.names)
        return self

    def predict_index(self, X):
        check_is_fitted(self, "crosswalk_")
        X = check_array(X, dtype=np.float64)
        rule = crosswalk_highest if self.method == "highest" else lambda v, cw: crosswalk_grouped(v, cw)[0]
        out = np.empty(len(X), dtype=np.int64)
        for i, row in enumerate(X):
            try:
                out[i] = rule(row, self.crosswalk_)
            except Unclassifiable:
                out[i] = -1
        return out

    def predict_proba(self, X):
        """Grouped origin probabilities (``grouped``) or one-hot choices (``highest``)."""
        idx = self.predict_index(X)
        K = len(self.classes_)
        if self.method == "grouped":
            X = check_array(X, dtype=np.float64)
            grouped = X @ self.crosswalk_.group_matrix()
            mass = grouped.sum(axis=1, keepdims=True)
            return np.divide(grouped, mass, out=np.full_like(grouped, 1.0 / K), where=mass > 0)
        out = np.zeros((len(idx), K))
        ok = idx >= 0
        out[np.flatnonzero(ok), idx[ok]] = 1.0
        out[~ok] = 1.0 / K
        return out

    def predict(self, X):
        idx = self.predict_index(X)
        if (idx < 0).any():
            raise Unclassifiable(f"{int((idx < 0).sum())} rows have no mapped leaf mass")
        return self.classes_[idx]


class LeafMapper(ClassifierMixin, BaseEstimator):
    """Feed-forward softmax network mapping leaf vectors to origin classes.

    Hidden layers use ReLU; ``hidden_sizes=()`` gives plain multinomial
    logistic regression. Training reuses the LSTM model's loop, including
    validation-accuracy early stopping.

    ``y`` holds class indices into ``taxonomy`` (or class names from it).
    """

    def __init__(self, hidden_sizes=(64,), batch_size=64, max_epochs=200, patience=10,
                 learning_rate=0.0025, validation_fraction=0.15, taxonomy=None, random_state=42):
        self.hidden_sizes = hidden_sizes
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.learning_rate = learning_rate
        self.validation_fraction = validation_fraction
        self.taxonomy = taxonomy
        self.random_state = random_state

    def _build(self, n_features, n_classes, seed):
        rng = np.random.default_rng(seed)
        layers, fan_in = [], n_features
        for h in self.hidden_sizes:
            layers.append(Dense(fan_in, h, "relu", rng=rng))
            fan_in = h
        layers.append(Dense(fan_in, n_classes, "softmax", rng=rng))
        return Network(layers)

    def _targets(self, y):
        y = np.asarray(y)
        if y.dtype.kind in "iu":
            return y.astype(np.int64)
        lookup = {c: i for i, c in enumerate(self.classes_.tolist())}
        try:
            return np.array([lookup[v] for v in y.tolist()], dtype=np.int64)
        except KeyError as exc:
            raise UnknownLabel(f"unknown label {exc.args[0]!r}") from None

    def fit(self, X, y):
        X = check_array(X, dtype=np.float64, ensure_min_samples=0)
        if len(X) == 0:
            raise EmptyTrainingSet("no training rows")
        taxonomy = self.taxonomy or DEFAULT_TAXONOMY
        names = taxonomy.names if isinstance(taxonomy, OriginTaxonomy) else tuple(taxonomy)
        self.classes_ = np.asarray(names)
        targets = self._targets(y)
        seed = 42 if self.random_state is None else int(self.random_state)
        n_val = math.ceil(self.validation_fraction * len(X)) if self.validation_fraction else 0
        if n_val >= len(X):
            n_val = 0
        order = np.random.default_rng(seed).permutation(len(X))
        val, tr = order[:n_val], order[n_val:]
        self.network_ = self._build(X.shape[1], len(self.classes_), seed)
        tc = TrainConfig(self.batch_size, self.max_epochs, self.patience, self.learning_rate, seed)
        self.history_ = fit_network(
            self.network_, X[tr], targets[tr],
            X[val] if n_val else None, targets[val] if n_val else None, tc,
        )
        self.n_features_in_ = X.shape[1]
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "network_")
        return self.network_.predict_proba(check_array(X, dtype=np.float64))

    def predict_index(self, X):
        return self.predict_proba(X).argmax(axis=1)

    def predict(self, X):
        return self.classes_[self.predict_index(X)]


def train_mapper(X, y, **params) -> LeafMapper:
    return LeafMapper(**params).fit(X, y)


@dataclass(frozen=True)
class ConfidenceMetrics:
    p_h: float
    delta: float
    entropy: float


def confidence_arrays(P):
    """Vectorized ``(p_h, delta, entropy)`` for an ``(n, K)`` probability array."""
    P = np.asarray(P, dtype=np.float64)
    top2 = -np.sort(-P, axis=1)[:, :2]
    p_h = top2[:, 0]
    delta = p_h - top2[:, 1] if P.shape[1] > 1 else p_h.copy()
    logs = np.log(P, out=np.zeros_like(P), where=P > 0)
    entropy = -(P * logs).sum(axis=1)
    return p_h, delta, np.maximum(entropy, 0.0)


def confidence(p) -> ConfidenceMetrics:
    p_h, delta, entropy = confidence_arrays(np.asarray(p, dtype=np.float64)[None])
    return ConfidenceMetrics(float(p_h[0]), float(delta[0]), float(entropy[0]))


class ThresholdCombo(NamedTuple):
    """``None`` leaves the corresponding metric unconstrained."""

    min_p_h: float | None
    min_delta: float | None
    max_entropy: float | None

    def __str__(self):
        def fmt(v):
            return "None" if v is None else f"{v:g}"
        return f"P_h>={fmt(self.min_p_h)} delta>={fmt(self.min_delta)} E<={fmt(self.max_entropy)}"


P_H_THRESHOLDS = (None, 0.45, 0.50, 0.55, 0.60, 0.65, 0.70)
DELTA_THRESHOLDS = (None, 0.2, 0.3, 0.4, 0.5)
ENTROPY_THRESHOLDS = (1.75, 2.0, None)


def grid(p_h_values=P_H_THRESHOLDS, delta_values=DELTA_THRESHOLDS, entropy_values=ENTROPY_THRESHOLDS):
    """All combinations, P_h-major, then delta, then entropy."""
    return [ThresholdCombo(*c) for c in itertools.product(p_h_values, delta_values, entropy_values)]


def apply_combo(p_h, delta, entropy, combo: ThresholdCombo) -> np.ndarray:
    """Boolean mask of samples meeting every constraint (bounds inclusive)."""
    keep = np.ones(len(p_h), dtype=bool)
    if combo.min_p_h is not None:
        keep &= np.asarray(p_h) >= combo.min_p_h
    if combo.min_delta is not None:
        keep &= np.asarray(delta) >= combo.min_delta
    if combo.max_entropy is not None:
        keep &= np.asarray(entropy) <= combo.max_entropy
    return keep


@dataclass(frozen=True)
class RawComboMetrics:
    size: int
    f1: float
    fraction: float
    share_variance: float
    smallest_two_share: float


def raw_metrics(y_true, y_pred, mask, baseline_size, n_classes) -> RawComboMetrics:
    """Unstandardized quality metrics of the subset selected by ``mask``.

    Origin shares are computed from the predicted labels, i.e. the
    pseudo-labels the retained samples would carry.
    """
    y_true = np.asarray(y_true)[mask]
    y_pred = np.asarray(y_pred)[mask]
    size = int(mask.sum())
    if size == 0:
        return RawComboMetrics(0, 0.0, 0.0, 0.0, 0.0)
    shares = np.bincount(y_pred, minlength=n_classes) / size
    f1 = scores(confusion(y_true, y_pred, n_classes=n_classes)).weighted_f1
    return RawComboMetrics(
        size=size,
        f1=f1,
        fraction=size / baseline_size,
        share_variance=float(np.var(shares)),
        smallest_two_share=float(np.sort(shares)[:2].sum()),
    )


DEFAULT_WEIGHTS = (0.5, 0.25, 0.125, 0.125)


def _check_weights(weights):
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (4,) or (w < 0).any() or not math.isclose(w.sum(), 1.0, abs_tol=1e-9):
        raise InvalidWeights(f"weights must be 4 nonnegative numbers summing to 1, got {weights}")
    return w


def _default_schemes():
    schemes = []
    for base in ((0.5, 0.25, 0.125, 0.125), (0.4, 0.3, 0.15, 0.15)):
        for perm in sorted(set(itertools.permutations(base)), reverse=True):
            schemes.append(perm)
    schemes.append((0.25, 0.25, 0.25, 0.25))
    schemes.append((0.7, 0.1, 0.1, 0.1))
    return tuple(schemes)


# 12 + 12 permutations of two base schemes, equal weights, one F1-heavy scheme
DEFAULT_WEIGHT_SCHEMES = _default_schemes()


@dataclass(frozen=True)
class ComboScore:
    combo: ThresholdCombo
    raw: RawComboMetrics
    standardized: tuple[float, float, float, float]
    score: float


def standardize(raw: Sequence[RawComboMetrics]) -> np.ndarray:
    """``(n, 4)`` min-max scaled, direction-aligned metrics (higher is better).

    Combos with empty subsets are excluded from the ranges and get zeros.
    A metric constant across the remaining combos scales to 0.5.
    """
    values = np.array([[r.f1, r.fraction, r.share_variance, r.smallest_two_share] for r in raw], dtype=np.float64)
    out = np.zeros_like(values)
    live = np.array([r.size > 0 for r in raw])
    if not live.any():
        return out
    lo = values[live].min(axis=0)
    hi = values[live].max(axis=0)
    span = hi - lo
    for j in range(4):
        if span[j] > 0:
            col = (values[live, j] - lo[j]) / span[j]
        else:
            col = np.full(live.sum(), 0.5)
        out[live, j] = col
    # lower variance is better
    out[live, 2] = 1.0 - out[live, 2]
    return out


def score_combos(combos, raw: Sequence[RawComboMetrics], weights=DEFAULT_WEIGHTS) -> list[ComboScore]:
    w = _check_weights(weights)
    std = standardize(raw)
    result = []
    for combo, r, s in zip(combos, raw, std):
        score = float(s @ w) if r.size > 0 else 0.0
        result.append(ComboScore(combo, r, tuple(float(v) for v in s), score))
    return result


def score_combo(index, combos, raw, weights=DEFAULT_WEIGHTS) -> ComboScore:
    """Score one grid entry; standardization needs the raw metrics of the whole grid."""
    return score_combos(combos, raw, weights)[index]


def _ranking(scored: Sequence[ComboScore]) -> list[int]:
    return sorted(range(len(scored)), key=lambda i: (-scored[i].score, -scored[i].raw.fraction, i))


def select_best(scored: Sequence[ComboScore]):
    """Return ``(best ComboScore, ranking)``; ranking lists grid indices best first.

    Ties go to the higher retained fraction, then to the earlier grid entry.
    """
    order = _ranking(scored)
    return scored[order[0]], order


def robustness_ranks(combos, raw, target: ThresholdCombo, schemes=DEFAULT_WEIGHT_SCHEMES) -> list[int]:
    """1-based rank of ``target`` under each weighting scheme."""
    target_index = list(combos).index(target)
    ranks = []
    for scheme in schemes:
        order = _ranking(score_combos(combos, raw, scheme))
        ranks.append(order.index(target_index) + 1)
    return ranks


def evaluate_grid(proba, y_true, baseline_size=None, combos=None, weights=DEFAULT_WEIGHTS):
    """Score every threshold combination on labeled predictions."""
    proba = np.asarray(proba, dtype=np.float64)
    y_true = np.asarray(y_true)
    combos = grid() if combos is None else list(combos)
    baseline_size = len(proba) if baseline_size is None else baseline_size
    y_pred = proba.argmax(axis=1)
    p_h, delta, entropy = confidence_arrays(proba)
    raw = [raw_metrics(y_true, y_pred, apply_combo(p_h, delta, entropy, c), baseline_size, proba.shape[1])
           for c in combos]
    return combos, raw, score_combos(combos, raw, weights)


class ThresholdSelector(BaseEstimator):
    """Pick the confidence-threshold combination on labeled predictions, then filter.

    ``fit(proba, y)`` scores the grid; ``transform(proba)`` returns the rows
    that pass the selected combination and ``get_support`` their mask.
    """

    def __init__(self, weights=DEFAULT_WEIGHTS, baseline_size=None, p_h_values=P_H_THRESHOLDS,
                 delta_values=DELTA_THRESHOLDS, entropy_values=ENTROPY_THRESHOLDS):
        self.weights = weights
        self.baseline_size = baseline_size
        self.p_h_values = p_h_values
        self.delta_values = delta_values
        self.entropy_values = entropy_values

    def fit(self, proba, y):
        combos = grid(self.p_h_values, self.delta_values, self.entropy_values)
        self.combos_, self.raw_, self.scores_ = evaluate_grid(proba, y, self.baseline_size, combos, self.weights)
        best, self.ranking_ = select_best(self.scores_)
        self.best_combo_ = best.combo
        self.best_score_ = best
        return self

    def get_support(self, proba):
        check_is_fitted(self, "best_combo_")
        return apply_combo(*confidence_arrays(proba), self.best_combo_)

    def transform(self, proba):
        proba = np.asarray(proba)
        return proba[self.get_support(proba)]


def load_leaf_csv(path, taxonomy: OriginTaxonomy = DEFAULT_TAXONOMY, leaves=LEAF_NATIONALITIES):
    """Read ``name[,label],<leaf columns>``; returns ``(names, labels, matrix)``.

    ``labels`` holds class indices, -1 where the label cell is empty (or
    everywhere when the file has no label column).
    """
    names, labels, rows = [], [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise InputFormatError(f"{path} is empty")
        has_label = len(header) > 1 and header[1] == "label"
        leaf_cols = header[2:] if has_label else header[1:]
        if header[0] != "name" or tuple(leaf_cols) != tuple(leaves):
            raise ParseError(f"header must be name[,label] followed by the {len(leaves)} leaf columns", line=1)
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} fields, got {len(row)}", line=line)
            label = row[1].strip() if has_label else ""
            try:
                labels.append(taxonomy.index(label) if label else -1)
            except KeyError:
                raise UnknownLabel(f"unknown label {label!r}", line=line) from None
            try:
                vec = [float(v) for v in row[len(header) - len(leaves):]]
            except ValueError as exc:
                raise ParseError(str(exc), line=line) from None
            vec = np.asarray(vec)
            if (vec < 0).any() or (vec > 1).any() or abs(vec.sum() - 1.0) > SIMPLEX_TOL:
                raise ParseError("leaf probabilities must lie in [0, 1] and sum to 1", line=line)
            names.append(row[0])
            rows.append(vec)
    if not rows:
        raise InputFormatError(f"{path} has no data rows")
    return names, np.asarray(labels, dtype=np.int64), np.vstack(rows)


def write_leaf_csv(path, names, matrix, labels=None, taxonomy: OriginTaxonomy = DEFAULT_TAXONOMY,
                   leaves=LEAF_NATIONALITIES):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["name"] + (["label"] if labels is not None else []) + list(leaves))
        for i, (name, vec) in enumerate(zip(names, matrix)):
            lab = [] if labels is None else [taxonomy.names[labels[i]] if labels[i] >= 0 else ""]
            writer.writerow([name] + lab + [repr(float(v)) for v in vec])


# origins whose leaf profile leans on a leaf the crosswalk sends elsewhere
SYNTHETIC_DECOYS = {
    "Anglo-Saxon": "Jewish",
    "Arabic": "Muslim, Nubian",
    "Balkans": "European, Greek",
    "East-Europe": "European, Russian",
    "German": "Nordic, Scandinavian, Denmark",
    "Hispanic-Iberian": "EastAsian, Malay, Philippines",
    "India": "Muslim, Pakistanis, Pakistan",
    "Persian": "Muslim, ArabianPeninsula",
    "South-East Asia": "EastAsian, Chinese",
    "Turkish": "Muslim, Turkic, CentralAsian",
}


def synthetic_leaf_corpus(n, seed=0, label_noise=0.15, concentration=12.0, decoy_weight=0.45,
                          crosswalk: Crosswalk = DEFAULT_CROSSWALK):
    """Dirichlet-noised leaf vectors following the crosswalk group structure.

    Each origin's profile puts ``1 - decoy_weight`` of its mass on its own
    crosswalk leaves (first leaf dominant) and, for origins listed in
    ``SYNTHETIC_DECOYS``, ``decoy_weight`` on a leaf the crosswalk maps
    elsewhere or not at all. A ``label_noise`` share of labels is then
    replaced by a different origin drawn uniformly. Returns ``(X, y)``.
    """
    rng = np.random.default_rng(seed)
    K = len(crosswalk.taxonomy)
    leaves = crosswalk.leaves
    templates = np.zeros((K, len(leaves)))
    for k, origin in enumerate(crosswalk.taxonomy.names):
        own = np.flatnonzero(crosswalk.target == k)
        weights = np.ones(len(own))
        weights[0] += len(own)
        decoy = SYNTHETIC_DECOYS.get(origin)
        own_mass = 1.0 - decoy_weight if decoy else 1.0
        templates[k, own] = own_mass * weights / weights.sum()
        if decoy:
            templates[k, leaves.index(decoy)] += decoy_weight
    y = rng.integers(0, K, size=n)
    X = np.vstack([rng.dirichlet(concentration * templates[k] + 0.05) for k in y])
    flip = rng.random(n) < label_noise
    shift = rng.integers(1, K, size=n)
    y_noisy = np.where(flip, (y + shift) % K, y)
    return X, y_noisy
