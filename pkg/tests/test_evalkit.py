import csv
import io
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hatealign.data import LanguageSets, generate_corpus
from hatealign.downstream import DownstreamConfig
from hatealign.errors import StructuralError, UndefinedMetricError, ValidationError
from hatealign.evalkit import (
    ABLATIONS,
    LANGUAGE_COLUMNS,
    REPORT_COLUMNS,
    ProtocolSpec,
    accuracy,
    cell_selection,
    csv_text,
    eer,
    eer_threshold,
    error_rates,
    f1,
    json_text,
    metrics_report,
    report_rows,
    roc_auc,
    roc_curve,
    run_protocol,
    score_dataset,
)
from hatealign.trainer import ModelBundle, TrainConfig, finetune, init_bundle, pretrain

POS = [0.9, 0.7, 0.4]
NEG = [0.6, 0.3, 0.1]
EXAMPLE = (POS + NEG, [1, 1, 1, 0, 0, 0])
FAST = TrainConfig(learning_rate=1e-3, epochs=2, pretrain_epochs=2, hidden_dims=(16,), embed_dim=4,
                   classifier_hidden=(8,), seed=5)


def pair_auc(scores, labels):
    s, y = np.asarray(scores), np.asarray(labels)
    pos, neg = s[y == 1], s[y == 0]
    wins = sum((p > n) + 0.5 * (p == n) for p in pos for n in neg)
    return wins / (pos.size * neg.size)


def grid_eer(scores, labels, grid):
    """min over grid thresholds of max(FAR, FRR)."""
    s, y = np.asarray(scores), np.asarray(labels)
    neg, pos = np.sort(s[y == 0]), np.sort(s[y == 1])
    far = 1 - np.searchsorted(neg, grid, side="left") / neg.size
    frr = np.searchsorted(pos, grid, side="left") / pos.size
    return float(np.min(np.maximum(far, frr)))


def two_class_labels(rng, n):
    y = rng.integers(0, 2, n)
    y[0], y[1] = 0, 1
    return rng.permutation(y)


def test_metric_examples():
    s, y = EXAMPLE
    assert accuracy(s, y) == pytest.approx(4 / 6)
    assert roc_auc(s, y) == pytest.approx(8 / 9, abs=1e-12)
    assert eer(s, y) == pytest.approx(1 / 3, abs=1e-12)
    # TP=2 (0.9, 0.7), FP=1 (0.6), FN=1 (0.4)
    assert f1(s, y) == pytest.approx(2 / 3)


def test_metric_degenerate_cases():
    assert accuracy([0.5, 0.5], [1, 1]) == 1.0
    assert accuracy([0.9, 0.1], [1, 0]) == 1.0
    assert f1([0.9, 0.1], [1, 0]) == 1.0
    assert f1([0.1, 0.2], [0, 0]) == 0.0
    assert roc_auc([0.9, 0.8, 0.1], [1, 1, 0]) == 1.0
    assert roc_auc([0.4] * 4, [1, 0, 1, 0]) == 0.5
    assert eer([0.9, 0.8, 0.1], [1, 1, 0]) == 0.0
    assert eer([0.1, 0.9], [1, 0]) == 1.0


def test_metric_errors():
    with pytest.raises(ValidationError):
        accuracy([], [])
    with pytest.raises(ValidationError):
        f1([0.2], [0, 1])
    with pytest.raises(UndefinedMetricError):
        roc_auc([0.2, 0.3], [1, 1])
    with pytest.raises(UndefinedMetricError):
        eer([0.2, 0.3], [0, 0])
    with pytest.raises(ValidationError):
        eer([0.2, np.nan], [0, 1])
    assert issubclass(UndefinedMetricError, ValidationError)


def test_error_rates_shape_and_direction():
    t, far, frr = error_rates(*EXAMPLE)
    assert t[-1] == np.inf and far[0] == 1.0 and frr[0] == 0.0 and far[-1] == 0.0 and frr[-1] == 1.0
    assert np.all(np.diff(far) <= 0) and np.all(np.diff(frr) >= 0)
    fpr, tpr = roc_curve(*EXAMPLE)
    assert (fpr[0], tpr[0], fpr[-1], tpr[-1]) == (0.0, 0.0, 1.0, 1.0)


def test_auc_matches_pair_counting_oracle():
    rng = np.random.default_rng(0)
    for _ in range(100):
        n = int(rng.integers(2, 201))
        y = two_class_labels(rng, n)
        # coarse rounding forces ties, including cross-class ones
        s = np.round(rng.uniform(size=n), int(rng.integers(1, 4)))
        assert abs(roc_auc(s, y) - pair_auc(s, y)) < 1e-12


def test_eer_matches_dense_grid_oracle():
    rng = np.random.default_rng(1)
    grid = np.arange(100_001) / 1e5
    for _ in range(100):
        n = int(rng.integers(2, 201))
        y = two_class_labels(rng, n)
        s = rng.uniform(size=n)
        assert abs(eer(s, y) - grid_eer(s, y, grid)) < 1e-3


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 60))
def test_monotone_transform_invariance(seed, n):
    rng = np.random.default_rng(seed)
    y = two_class_labels(rng, n)
    s = np.round(rng.uniform(size=n), 2)
    for g in (lambda v: v ** 3, lambda v: np.exp(4 * v) - 7, lambda v: 1 / (1 + np.exp(-10 * (v - 0.3)))):
        assert roc_auc(g(s), y) == pytest.approx(roc_auc(s, y), abs=1e-12)
        assert eer(g(s), y) == pytest.approx(eer(s, y), abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 60))
def test_metrics_in_unit_interval_and_eer_zero_iff_separated(seed, n):
    rng = np.random.default_rng(seed)
    y = two_class_labels(rng, n)
    s = rng.uniform(size=n)
    for v in (accuracy(s, y), f1(s, y), roc_auc(s, y), eer(s, y)):
        assert 0.0 <= v <= 1.0
    separated = s[y == 1].min() > s[y == 0].max()
    assert (eer(s, y) == 0.0) == separated


def test_eer_on_uninformative_scores():
    rng = np.random.default_rng(2)
    s = rng.permutation(20_000) / 20_000
    y = rng.integers(0, 2, 20_000)
    assert abs(eer(s, y) - 0.5) < 0.05


def test_accuracy_at_eer_threshold_is_one_minus_eer():
    rng = np.random.default_rng(3)
    n = 400
    y = np.array([0, 1] * (n // 2))
    s = rng.normal(loc=1.2 * y)
    value = eer(s, y)
    assert abs(accuracy(s, y, eer_threshold(s, y)) - (1 - value)) <= 2 / n


def test_metrics_report_per_language():
    s, y = EXAMPLE
    langs = ["hi", "hi", "ta", "hi", "ta", "ta"]
    r = metrics_report(s, y, langs)
    assert (r.n_pos, r.n_neg) == (3, 3)
    assert set(r.per_language) == {"hi", "ta"}
    assert r.per_language["hi"]["n_pos"] == 2
    one_class = metrics_report(s, y, ["hi", "hi", "hi", "ta", "ta", "ta"])
    assert one_class.per_language["hi"]["eer"] is None
    assert one_class.per_language["hi"]["acc"] == pytest.approx(2 / 3)
    assert json.loads(json.dumps(r.to_dict()))["acc"] == pytest.approx(4 / 6)


@pytest.fixture(scope="module")
def trained(small_corpus):
    train = [r for r in small_corpus if r.split == "train"]
    b, _ = pretrain(init_bundle(24, 20, FAST), train, FAST)
    b, _ = finetune(b, train, FAST, DownstreamConfig())
    return b


def test_score_dataset_deterministic_and_ablations_differ(trained, small_corpus):
    test = [r for r in small_corpus if r.split == "test"]
    runs = {ab: score_dataset(trained, test, ab) for ab in ABLATIONS}
    again = score_dataset(trained, test, "multimodal")
    assert np.array_equal(runs["multimodal"].scores, again.scores)
    assert runs["multimodal"].ids == [r.id for r in test]
    assert not np.array_equal(runs["multimodal"].scores, runs["text_only"].scores)
    assert not np.array_equal(runs["multimodal"].scores, runs["audio_only"].scores)
    assert not np.array_equal(runs["text_only"].scores, runs["audio_only"].scores)


def test_score_dataset_zero_classifier(trained, small_corpus):
    zero = trained.classifier.with_flat(np.zeros(trained.classifier.flat().size))
    b = ModelBundle(trained.audio, trained.text, zero)
    assert np.all(score_dataset(b, small_corpus[:10]).scores == 0.5)


def test_score_dataset_errors(trained, small_corpus):
    with pytest.raises(ValidationError):
        score_dataset(trained, small_corpus[:3], "video_only")
    small = init_bundle(5, 20, FAST)
    with pytest.raises(StructuralError):
        score_dataset(small, small_corpus[:3])


def test_cell_selection(small_corpus):
    sets = LanguageSets()
    train, ev = cell_selection(small_corpus, "cross_A_to_B", sets)
    assert {r.language for r in train} == {"mr", "bn", "ta"} and all(r.split == "train" for r in train)
    assert {r.language for r in ev} == {"en", "hi", "te"} and all(r.split == "test" for r in ev)
    _, ev_all = cell_selection(small_corpus, "cross_A_to_B", sets, cross_eval="all")
    assert len(ev_all) == len([r for r in small_corpus if r.language in sets.set_b])
    _, ev_in = cell_selection(small_corpus, "in_set_A", sets, cross_eval="all")
    assert all(r.split == "test" for r in ev_in)
    with pytest.raises(ValidationError, match="in_set_B"):
        cell_selection([r for r in small_corpus if r.language in sets.set_a], "in_set_B", sets)
    with pytest.raises(ValidationError):
        ProtocolSpec(mode="in_set_C")


def test_run_protocol_report_shape(small_corpus):
    res = run_protocol(small_corpus, ProtocolSpec("cross_B_to_A"), FAST, ablations=ABLATIONS)
    assert set(res.reports) == set(ABLATIONS)
    agg, langs = report_rows("cross_B_to_A", "text_only", res.reports["text_only"])
    assert agg[:4] == ["Proposed", "Text", "Set-B", "Set-A"]
    assert [row[4] for row in langs] == ["bn", "mr", "ta"]
    table = list(csv.reader(io.StringIO(csv_text(REPORT_COLUMNS, [agg]))))
    assert table[0] == list(REPORT_COLUMNS) and len(table[1]) == len(REPORT_COLUMNS)
    assert LANGUAGE_COLUMNS.index("language") == 4
    assert json_text({"b": 1, "a": 2}).startswith('{\n  "a"')


def test_in_set_beats_cross_set(acceptance_config):
    # pilot: Set-A eval 0.918 in-set vs 0.876 cross; Set-B eval 0.904 vs 0.844
    cfg = acceptance_config
    corpus = generate_corpus(cfg.data)
    acc = {}
    for mode in ("in_set_A", "in_set_B", "cross_A_to_B", "cross_B_to_A"):
        res = run_protocol(corpus, ProtocolSpec(mode), cfg.train, cfg.downstream, cfg.contrastive)
        acc[mode] = res.reports["multimodal"].acc
    assert acc["in_set_A"] >= acc["cross_B_to_A"]
    assert acc["in_set_B"] >= acc["cross_A_to_B"]
