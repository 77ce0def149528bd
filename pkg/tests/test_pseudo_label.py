import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from nameorigin.dataset import DEFAULT_TAXONOMY
from nameorigin.errors import EmptyTrainingSet, InvalidWeights, ParseError, Unclassifiable
from nameorigin.pseudo_label import (
    CROSSWALK_TABLE,
    DEFAULT_WEIGHT_SCHEMES,
    DEFAULT_WEIGHTS,
    LEAF_NATIONALITIES,
    UNMAPPED_LEAVES,
    Crosswalk,
    CrosswalkClassifier,
    LeafMapper,
    RawComboMetrics,
    ThresholdCombo,
    ThresholdSelector,
    apply_combo,
    confidence,
    confidence_arrays,
    crosswalk_grouped,
    crosswalk_highest,
    evaluate_grid,
    grid,
    load_leaf_csv,
    robustness_ranks,
    score_combo,
    score_combos,
    select_best,
    standardize,
    synthetic_leaf_corpus,
    write_leaf_csv,
)

K = 17
ORIGIN = DEFAULT_TAXONOMY.index


def leaf(**mass):
    v = np.zeros(len(LEAF_NATIONALITIES))
    for name, m in mass.items():
        v[LEAF_NATIONALITIES.index(name)] = m
    return v


def leaf_of(pairs):
    v = np.zeros(len(LEAF_NATIONALITIES))
    for name, m in pairs:
        v[LEAF_NATIONALITIES.index(name)] = m
    return v


def random_proba(n, seed):
    rng = np.random.default_rng(seed)
    conc = rng.choice([0.05, 0.3, 1.0, 5.0], size=n)
    return np.vstack([rng.dirichlet(np.full(K, c)) for c in conc])


class TestCrosswalk:
    def test_table_shape(self):
        assert len(CROSSWALK_TABLE) == 31
        assert len(LEAF_NATIONALITIES) == 39
        assert len(set(LEAF_NATIONALITIES)) == 39
        assert Crosswalk().mapped.sum() == 31
        assert {o for _, o in CROSSWALK_TABLE} == set(DEFAULT_TAXONOMY.names)

    def test_japan_one_hot(self):
        assert crosswalk_highest(leaf_of([("EastAsian, Japan", 1.0)])) == ORIGIN("Japanese")

    def test_unmapped_fallback(self):
        v = leaf_of([(UNMAPPED_LEAVES[0], 0.6), ("European, French", 0.4)])
        assert crosswalk_highest(v) == ORIGIN("French")

    def test_only_unmapped_mass(self):
        v = leaf_of([(UNMAPPED_LEAVES[1], 0.5), (UNMAPPED_LEAVES[2], 0.5)])
        with pytest.raises(Unclassifiable):
            crosswalk_highest(v)
        with pytest.raises(Unclassifiable):
            crosswalk_grouped(v)

    def test_empty_crosswalk(self):
        with pytest.raises(Unclassifiable):
            crosswalk_highest(leaf_of([("Jewish", 1.0)]), Crosswalk(mapping={}))

    def test_grouped_sum(self):
        v = leaf_of([("Hispanic, Spanish", 0.3), ("Hispanic, Portuguese", 0.3), ("Celtic-English", 0.4)])
        idx, vec = crosswalk_grouped(v)
        assert idx == ORIGIN("Hispanic-Iberian")
        assert vec[idx] == pytest.approx(0.6)
        assert vec[ORIGIN("Anglo-Saxon")] == pytest.approx(0.4)
        # the single highest leaf disagrees
        assert crosswalk_highest(v) == ORIGIN("Anglo-Saxon")

    def test_single_leaf(self):
        idx, vec = crosswalk_grouped(leaf_of([("European, German", 1.0)]))
        assert idx == ORIGIN("German") and vec[idx] == 1.0

    def test_scandinavian_group(self):
        nordic = [name for name, o in CROSSWALK_TABLE if o == "Scandinavian"]
        assert len(nordic) == 4
        idx, vec = crosswalk_grouped(leaf_of([(n, 0.25) for n in nordic]))
        assert idx == ORIGIN("Scandinavian")
        assert vec[idx] == pytest.approx(1.0, abs=1e-15)

    def test_grouped_renormalizes_mapped_mass(self):
        v = leaf_of([("European, French", 0.2), ("European, German", 0.1), ("Jewish", 0.7)])
        idx, vec = crosswalk_grouped(v)
        assert idx == ORIGIN("French")
        assert vec.sum() == pytest.approx(1.0)
        assert vec[idx] == pytest.approx(2 / 3)

    @settings(max_examples=50, deadline=None)
    @given(arrays(np.float64, 39, elements=st.floats(0, 1)), st.floats(0.01, 100), st.floats(0, 5))
    def test_grouped_invariant_to_mapped_mass_scale(self, v, scale, extra_unmapped):
        cw = Crosswalk()
        if v[cw.mapped].sum() <= 0:
            return
        w = v * scale
        w[~cw.mapped] += extra_unmapped
        a, va = crosswalk_grouped(v)
        b, vb = crosswalk_grouped(w)
        assert a == b
        np.testing.assert_allclose(va, vb, rtol=1e-9, atol=1e-12)

    def test_classifier_estimator(self):
        X = np.vstack([
            leaf_of([("EastAsian, Japan", 1.0)]),
            leaf_of([("Jewish", 1.0)]),
            leaf_of([("Hispanic, Spanish", 0.3), ("Hispanic, Portuguese", 0.3), ("Celtic-English", 0.4)]),
        ])
        high = CrosswalkClassifier("highest").fit()
        grouped = CrosswalkClassifier("grouped").fit()
        assert high.predict_index(X).tolist() == [ORIGIN("Japanese"), -1, ORIGIN("Anglo-Saxon")]
        assert grouped.predict_index(X).tolist() == [ORIGIN("Japanese"), -1, ORIGIN("Hispanic-Iberian")]
        np.testing.assert_allclose(grouped.predict_proba(X).sum(axis=1), 1.0)
        np.testing.assert_allclose(high.predict_proba(X)[1], 1 / K)
        with pytest.raises(Unclassifiable):
            high.predict(X)
        assert high.predict(X[[0]]).tolist() == ["Japanese"]
        with pytest.raises(ValueError):
            CrosswalkClassifier("median").fit()


class TestMapper:
    def test_zero_weights_uniform(self):
        X, y = synthetic_leaf_corpus(60, seed=0)
        mapper = LeafMapper(hidden_sizes=(), max_epochs=1).fit(X, y)
        for p in mapper.network_.parameters().values():
            p[:] = 0
        np.testing.assert_allclose(mapper.predict_proba(X[:5]), 1 / K, rtol=1e-14)

    def test_single_class(self):
        X, _ = synthetic_leaf_corpus(80, seed=1)
        mapper = LeafMapper(hidden_sizes=(8,), max_epochs=30, validation_fraction=0).fit(X, np.full(80, 5))
        X_new, _ = synthetic_leaf_corpus(30, seed=2)
        assert set(mapper.predict_index(X_new)) == {5}
        assert set(mapper.predict(X_new)) == {DEFAULT_TAXONOMY.names[5]}

    def test_empty(self):
        with pytest.raises(EmptyTrainingSet):
            LeafMapper().fit(np.zeros((0, 39)), np.zeros(0, dtype=int))

    def test_string_labels(self):
        X, y = synthetic_leaf_corpus(50, seed=3)
        names = np.asarray(DEFAULT_TAXONOMY.names)[y]
        a = LeafMapper(max_epochs=2).fit(X, y)
        b = LeafMapper(max_epochs=2).fit(X, names)
        np.testing.assert_array_equal(a.predict_proba(X), b.predict_proba(X))

    def test_beats_crosswalk_baselines(self):
        X, y = synthetic_leaf_corpus(2000, seed=11)
        Xtr, ytr, Xte, yte = X[:1600], y[:1600], X[1600:], y[1600:]
        mapper = LeafMapper().fit(Xtr, ytr)
        acc = {"ffnn": np.mean(mapper.predict_index(Xte) == yte)}
        for method in ("highest", "grouped"):
            acc[method] = np.mean(CrosswalkClassifier(method).fit().predict_index(Xte) == yte)
        assert acc["ffnn"] > max(acc["highest"], acc["grouped"])


class TestConfidence:
    def test_one_hot(self):
        c = confidence(np.eye(K)[3])
        assert (c.p_h, c.delta, c.entropy) == (1.0, 1.0, 0.0)

    def test_uniform(self):
        c = confidence(np.full(K, 1 / K))
        assert c.p_h == pytest.approx(1 / K)
        assert c.delta == pytest.approx(0.0, abs=1e-15)
        assert c.entropy == pytest.approx(math.log(K), rel=1e-12)
        assert c.entropy == pytest.approx(2.8332, abs=5e-5)

    def test_hand_delta(self):
        p = np.array([0.65, 0.20] + [0.15 / 15] * 15)
        assert confidence(p).delta == pytest.approx(0.45)

    @settings(max_examples=100, deadline=None)
    @given(arrays(np.float64, K, elements=st.floats(0, 1)))
    def test_bounds(self, raw):
        if raw.sum() <= 0:
            return
        p = raw / raw.sum()
        c = confidence(p)
        assert 0 <= c.delta <= c.p_h <= 1
        assert 0 <= c.entropy <= math.log(K) + 1e-12
        if c.entropy >= math.log(K) - 1e-9:
            np.testing.assert_allclose(p, 1 / K, atol=1e-4)


class TestGrid:
    def test_cardinality(self):
        combos = grid()
        assert len(combos) == 105 == len(set(combos))
        assert combos[0] == ThresholdCombo(None, None, 1.75)
        assert combos[-1] == ThresholdCombo(0.7, 0.5, None)
        assert len(grid([None], [None], [None])) == 1
        assert len(grid([1, 2], [1, 2], [1, 2])) == 8

    def test_identity_combo(self):
        P = random_proba(50, 0)
        assert apply_combo(*confidence_arrays(P), ThresholdCombo(None, None, None)).all()

    def test_inclusive_bound(self):
        mask = apply_combo(np.array([0.65, 0.6499]), np.array([0.3, 0.3]), np.array([1.0, 1.0]),
                           ThresholdCombo(0.65, None, None))
        assert mask.tolist() == [True, False]

    def test_brute_force_equality(self):
        P = random_proba(1000, 1)
        p_h, delta, ent = confidence_arrays(P)
        for combo in grid():
            expected = set()
            for i in range(len(P)):
                ok = combo.min_p_h is None or p_h[i] >= combo.min_p_h
                ok = ok and (combo.min_delta is None or delta[i] >= combo.min_delta)
                ok = ok and (combo.max_entropy is None or ent[i] <= combo.max_entropy)
                if ok:
                    expected.add(i)
            assert set(np.flatnonzero(apply_combo(p_h, delta, ent, combo))) == expected

    def test_monotonicity(self):
        def at_least_as_strict(a, b):
            lower_ok = all(bv is None or (av is not None and av >= bv)
                           for av, bv in ((a.min_p_h, b.min_p_h), (a.min_delta, b.min_delta)))
            upper_ok = b.max_entropy is None or (a.max_entropy is not None and a.max_entropy <= b.max_entropy)
            return lower_ok and upper_ok

        P = random_proba(500, 2)
        metrics = confidence_arrays(P)
        combos = grid()
        masks = [apply_combo(*metrics, c) for c in combos]
        pairs = 0
        for i, a in enumerate(combos):
            for j, b in enumerate(combos):
                if at_least_as_strict(a, b):
                    pairs += 1
                    assert not (masks[i] & ~masks[j]).any()
        assert pairs > 105


def hand_fixture():
    combos = [ThresholdCombo(0.6, None, None), ThresholdCombo(None, None, None), ThresholdCombo(0.5, 0.2, None)]
    raw = [
        RawComboMetrics(50, 0.9, 0.5, 0.02, 0.10),
        RawComboMetrics(100, 0.8, 1.0, 0.04, 0.20),
        RawComboMetrics(75, 0.7, 0.75, 0.03, 0.15),
    ]
    return combos, raw


class TestScoring:
    def test_hand_standardization(self):
        _, raw = hand_fixture()
        np.testing.assert_allclose(standardize(raw), [[1, 0, 1, 0], [0.5, 1, 0, 1], [0, 0.5, 0.5, 0.5]])

    def test_hand_scores_and_tie_break(self):
        combos, raw = hand_fixture()
        scored = score_combos(combos, raw)
        assert [s.score for s in scored] == pytest.approx([0.625, 0.625, 0.25])
        best, ranking = select_best(scored)
        # A and B tie; B keeps more of the sample
        assert best.combo == combos[1]
        assert ranking == [1, 0, 2]
        assert score_combo(2, combos, raw).score == pytest.approx(0.25)

    def test_hand_robustness_ranks(self):
        combos, raw = hand_fixture()
        schemes = [DEFAULT_WEIGHTS, (0.25, 0.25, 0.25, 0.25), (0, 1, 0, 0)]
        assert robustness_ranks(combos, raw, combos[0], schemes) == [2, 2, 3]
        assert robustness_ranks(combos, raw, combos[1], schemes) == [1, 1, 1]
        assert robustness_ranks(combos, raw, combos[2], schemes) == [3, 3, 2]

    def test_constant_metric_scales_to_half(self):
        raw = [RawComboMetrics(10, 0.8, 0.5, 0.01, 0.1), RawComboMetrics(20, 0.8, 1.0, 0.02, 0.2)]
        assert standardize(raw)[:, 0].tolist() == [0.5, 0.5]

    def test_empty_subset_scores_zero_and_leaves_ranges(self):
        combos, raw = hand_fixture()
        combos = combos + [ThresholdCombo(0.7, 0.5, 1.75)]
        raw = raw + [RawComboMetrics(0, 0.0, 0.0, 0.0, 0.0)]
        scored = score_combos(combos, raw)
        assert scored[-1].score == 0.0
        assert [s.score for s in scored[:3]] == pytest.approx([0.625, 0.625, 0.25])
        assert select_best(scored)[1][-1] == 3

    def test_planted_dominant_combo(self):
        rng = np.random.default_rng(4)
        combos = grid()
        raw = [RawComboMetrics(int(rng.integers(1, 100)), rng.uniform(0.5, 0.9), rng.uniform(0.2, 0.9),
                               rng.uniform(0.01, 0.05), rng.uniform(0.0, 0.1)) for _ in combos]
        raw[37] = RawComboMetrics(100, 0.95, 0.95, 0.001, 0.2)
        raw[80] = RawComboMetrics(3, 0.4, 0.1, 0.09, 0.0)
        scored = score_combos(combos, raw)
        assert scored[37].score == pytest.approx(1.0)
        assert scored[80].score == pytest.approx(0.0)
        assert select_best(scored)[0].combo == combos[37]
        assert all(0.0 <= s.score <= 1.0 for s in scored)
        assert all(0.0 <= v <= 1.0 for s in scored for v in s.standardized)

    def test_single_combo_grid(self):
        combos = [ThresholdCombo(None, None, None)]
        best, ranking = select_best(score_combos(combos, [RawComboMetrics(5, 0.5, 1.0, 0.1, 0.0)]))
        assert best.combo == combos[0] and ranking == [0]

    def test_f1_only_weights_rank_by_f1(self):
        P = random_proba(400, 3)
        y = np.where(np.random.default_rng(3).random(400) < 0.7, P.argmax(1), np.random.default_rng(4).integers(0, K, 400))
        combos, raw, scored = evaluate_grid(P, y, weights=(1, 0, 0, 0))
        _, ranking = select_best(scored)
        brute = sorted(range(len(raw)), key=lambda i: (-raw[i].f1, -raw[i].fraction, i))
        assert ranking == brute

    def test_default_schemes(self):
        assert len(DEFAULT_WEIGHT_SCHEMES) == 26
        assert len(set(DEFAULT_WEIGHT_SCHEMES)) == 26
        assert DEFAULT_WEIGHTS in DEFAULT_WEIGHT_SCHEMES
        for s in DEFAULT_WEIGHT_SCHEMES:
            assert min(s) >= 0 and math.isclose(sum(s), 1.0)

    def test_default_scheme_rank_matches_selection(self):
        P = random_proba(300, 5)
        y = P.argmax(1)
        combos, raw, scored = evaluate_grid(P, y)
        best, ranking = select_best(scored)
        ranks = robustness_ranks(combos, raw, best.combo, [DEFAULT_WEIGHTS])
        assert ranks == [1]
        target = combos[ranking[10]]
        assert robustness_ranks(combos, raw, target, [DEFAULT_WEIGHTS]) == [11]

    def test_fraction_only_prefers_no_filter(self):
        P = random_proba(300, 6)
        combos, raw, _ = evaluate_grid(P, P.argmax(1))
        assert robustness_ranks(combos, raw, ThresholdCombo(None, None, None), [(0, 1, 0, 0)]) == [1]

    @pytest.mark.parametrize("weights", [(0.5, 0.5), (0.5, 0.5, 0.5, -0.5), (0.3, 0.3, 0.3, 0.3)])
    def test_invalid_weights(self, weights):
        combos, raw = hand_fixture()
        with pytest.raises(InvalidWeights):
            score_combos(combos, raw, weights)

    def test_selector_estimator(self):
        P = random_proba(300, 7)
        y = P.argmax(1)
        sel = ThresholdSelector().fit(P, y)
        mask = sel.get_support(P)
        assert np.array_equal(sel.transform(P), P[mask])
        assert sel.best_combo_ in grid()
        assert sel.get_params()["weights"] == DEFAULT_WEIGHTS


class TestLeafCsv:
    def test_round_trip(self, tmp_path):
        X, y = synthetic_leaf_corpus(5, seed=0)
        y[2] = -1
        names = [f"name {i}" for i in range(5)]
        write_leaf_csv(tmp_path / "l.csv", names, X, y)
        n2, y2, X2 = load_leaf_csv(tmp_path / "l.csv")
        assert n2 == names
        assert y2.tolist() == y.tolist()
        np.testing.assert_array_equal(X2, X)

    def test_unlabeled(self, tmp_path):
        X, _ = synthetic_leaf_corpus(3, seed=0)
        write_leaf_csv(tmp_path / "l.csv", ["a", "b", "c"], X)
        _, labels, _ = load_leaf_csv(tmp_path / "l.csv")
        assert labels.tolist() == [-1, -1, -1]

    def test_simplex_checked(self, tmp_path):
        X, _ = synthetic_leaf_corpus(2, seed=0)
        X[1] *= 1.01
        write_leaf_csv(tmp_path / "l.csv", ["a", "b"], X)
        with pytest.raises(ParseError) as exc:
            load_leaf_csv(tmp_path / "l.csv")
        assert exc.value.line == 3

    def test_header_checked(self, tmp_path):
        p = tmp_path / "l.csv"
        p.write_text("name,a,b\nx,0.5,0.5\n", encoding="utf-8")
        with pytest.raises(ParseError):
            load_leaf_csv(p)


def test_synthetic_corpus_is_on_simplex():
    X, y = synthetic_leaf_corpus(200, seed=9)
    assert X.shape == (200, 39)
    np.testing.assert_allclose(X.sum(axis=1), 1.0, atol=1e-12)
    assert y.min() >= 0 and y.max() < K
