"""ROC/AUC against brute-force pair counting, plus confusion-rate identities."""
from __future__ import annotations

import numpy as np
import pytest

from onconet.metrics import (
    MetricsReport,
    roc_auc,
    roc_auc_trapezoid,
    roc_points,
    sens_spec,
    write_report,
    write_roc_csv,
)

from oracles import auc_pairs_ref


class TestRocAuc:
    def test_perfect_separation(self):
        assert roc_auc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0

    def test_all_scores_equal(self):
        assert roc_auc([0.5, 0.5, 0.5, 0.5], [0, 1, 0, 1]) == 0.5

    def test_worked_example(self):
        # 3 of the 4 pos/neg pairs are ordered correctly
        assert roc_auc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == pytest.approx(0.75, abs=1e-12)

    def test_matches_pair_counting_on_random_instances(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            n = int(rng.integers(2, 51))
            labels = rng.integers(0, 2, size=n)
            if labels.sum() in (0, n):
                labels[0] = 0
                labels[-1] = 1
            # quantized scores so ties actually occur
            scores = np.round(rng.random(n), 2)
            assert roc_auc(scores, labels) == pytest.approx(
                auc_pairs_ref(scores.tolist(), labels.tolist()), abs=1e-12
            )

    def test_monotone_transform_invariance(self):
        rng = np.random.default_rng(1)
        scores = rng.random(30)
        labels = (rng.random(30) < 0.4).astype(int)
        labels[0], labels[1] = 0, 1
        base = roc_auc(scores, labels)
        assert roc_auc(np.exp(3 * scores) + 5, labels) == pytest.approx(base, abs=1e-12)

    def test_negated_scores_complement(self):
        rng = np.random.default_rng(2)
        scores = rng.permutation(np.linspace(0.01, 0.99, 20))  # tie-free
        labels = (rng.random(20) < 0.5).astype(int)
        labels[0], labels[1] = 0, 1
        assert roc_auc(-scores, labels) == pytest.approx(1.0 - roc_auc(scores, labels), abs=1e-12)

    def test_rank_equals_trapezoid_tie_free(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            n = int(rng.integers(4, 40))
            scores = rng.permutation(np.arange(n) / n + rng.random() * 0.001)
            labels = rng.integers(0, 2, size=n)
            if labels.sum() in (0, n):
                labels[0] = 1 - labels[0]
            assert roc_auc(scores, labels) == pytest.approx(
                roc_auc_trapezoid(scores, labels), abs=1e-12
            )

    def test_single_class_rejected(self):
        with pytest.raises(ValueError, match="both classes"):
            roc_auc([0.1, 0.2], [1, 1])


class TestSensSpec:
    def test_all_correct(self):
        r = sens_spec([0.9, 0.8, 0.1, 0.2], [1, 1, 0, 0])
        assert r.sensitivity == 1.0 and r.specificity == 1.0
        assert (r.tp, r.fp, r.tn, r.fn) == (2, 0, 2, 0)

    def test_all_predicted_negative_degenerate_pattern(self):
        # chance-level scores below threshold: specificity 100%, sensitivity 0%
        r = sens_spec([0.2, 0.3, 0.25, 0.1], [1, 0, 1, 0], threshold=0.5)
        assert r.sensitivity == 0.0
        assert r.specificity == 1.0

    def test_hand_confusion_count(self):
        # hand count: 0.9->TP, 0.2->TN, 0.6->FP (death predicted, survived), 0.4->FN
        r = sens_spec([0.9, 0.2, 0.6, 0.4], [1, 0, 0, 1], threshold=0.5)
        assert (r.tp, r.fn, r.tn, r.fp) == (1, 1, 1, 1)
        assert r.sensitivity == 0.5
        assert r.specificity == 0.5

    def test_confusion_identities(self):
        rng = np.random.default_rng(4)
        scores = rng.random(25)
        labels = (rng.random(25) < 0.3).astype(int)
        labels[0], labels[1] = 0, 1
        r = sens_spec(scores, labels, threshold=0.4)
        assert r.tp + r.fn == r.n_pos
        assert r.tn + r.fp == r.n_neg
        assert r.sensitivity == pytest.approx(r.tp / (r.tp + r.fn))
        assert r.specificity == pytest.approx(r.tn / (r.tn + r.fp))

    def test_threshold_validation(self):
        with pytest.raises(ValueError, match="threshold"):
            sens_spec([0.5, 0.6], [0, 1], threshold=1.5)


class TestReportFiles:
    def test_write_report_and_kv(self, tmp_path):
        r = sens_spec([0.9, 0.1], [1, 0])
        write_report(r, tmp_path / "report.txt", tmp_path / "report.kv")
        text = (tmp_path / "report.txt").read_text()
        assert "auc" in text and "sensitivity" in text
        kv = dict(
            line.split("=", 1) for line in (tmp_path / "report.kv").read_text().splitlines()
        )
        assert float(kv["auc"]) == 1.0
        assert int(kv["tp"]) == 1

    def test_roc_csv(self, tmp_path):
        write_roc_csv([0.9, 0.1, 0.6], [1, 0, 1], tmp_path / "roc.csv")
        lines = (tmp_path / "roc.csv").read_text().splitlines()
        assert lines[0] == "fpr,tpr,threshold"
        assert len(lines) == 1 + len(roc_points([0.9, 0.1, 0.6], [1, 0, 1]))
