import math
import os
import subprocess
from pathlib import Path

import pytest

import khan

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


def test_folds_partition():
    folds = khan.make_folds(645, 10, 0)
    assert sorted(len(f) for f in folds) == [64] * 5 + [65] * 5
    assert sorted(i for f in folds for i in f) == list(range(645))


def test_welch_reference():
    t, p, df = khan.welch_t_test([0.9, 0.91, 0.92], [0.85, 0.86, 0.84])
    assert t == pytest.approx(7.3484692283495342946, abs=1e-6)
    assert p == pytest.approx(0.0018262606682599832344, abs=1e-6)
    assert df == pytest.approx(4.0)


def test_scheduler_halves_after_patience():
    s = khan.PlateauScheduler(1.0, patience=3)
    rates = [s.step(1.0) for _ in range(4)]
    assert rates == [1.0, 1.0, 1.0, 0.5]


def test_completion_metrics_hand_example():
    m = khan.evaluate_completion(lambda h, r, t: 10 * h + t, 3, [(0, 0, 1)], [(0, 0, 1)])
    assert m["MR"] == 2.5
    assert m["MRR"] == pytest.approx((1 / 3 + 1 / 2) / 2)
    assert m["HITS@1"] == 0.0
    assert m["HITS@3"] == 1.0


def test_fixture_histogram():
    articles, classes = khan.load_articles(str(FIXTURES / "semeval_shaped.jsonl"))
    assert classes == 2
    assert len(articles) == 645
    assert sum(a["label"] == 0 for a in articles) == 407


def test_fit_planted_corpus():
    articles = khan.gen_synthetic(num_articles=16, sentences_per_article=2, words_per_sentence=4)
    clf = khan.fit(articles, d=8, heads=2, n=4, l=2, epochs=3, lr=1e-2, weight_decay=0.0)
    probs = clf.predict_proba(articles[0]["title"], articles[0]["body"])
    assert len(probs) == 2
    assert math.isclose(sum(probs), 1.0, abs_tol=1e-12)
    assert len(clf.reports) == 3
    assert 0.0 <= clf.accuracy(articles) <= 1.0


def test_user_errors_are_value_errors():
    with pytest.raises(ValueError):
        khan.make_folds(3, 5, 0)
    with pytest.raises(ValueError):
        khan.fit([{"title": "a", "body": "b c", "label": 0}], classes=2, d=6, heads=4)


@pytest.mark.skipif("KHAN_CLI" not in os.environ, reason="CLI path not provided")
def test_cli_preprocess(tmp_path):
    out = subprocess.run(
        [os.environ["KHAN_CLI"], "preprocess", "--dataset", str(FIXTURES / "semeval_shaped.jsonl"),
         "--n", "8", "--l", "4", "--output-dir", str(tmp_path)],
        capture_output=True, text=True, check=True)
    assert "645 articles, classes 407/238" in out.stdout
