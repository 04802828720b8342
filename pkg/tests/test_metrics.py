import random

import pytest

from sqlmemo.metrics import (AccuracyMatrix, em_match, ex_match,
                             format_report, gold_is_ordered, metrics)


class TestEmMatch:
    def test_identity_over_corpus(self, corpus):
        for sample, schema in corpus:
            assert em_match(sample.sql, sample.sql, schema)

    def test_conjunct_reorder_matches(self, concert_schema):
        a = "SELECT singer_name FROM singer WHERE age > 30 AND country = 'France'"
        b = "SELECT singer_name FROM singer WHERE country = 'France' AND age > 30"
        assert em_match(a, b, concert_schema)

    def test_select_item_reorder_matches(self, concert_schema):
        a = "SELECT singer_name , age FROM singer"
        b = "SELECT age , singer_name FROM singer"
        assert em_match(a, b, concert_schema)

    def test_alias_and_case_insensitive(self, concert_schema):
        a = "SELECT T1.singer_name FROM singer AS T1"
        b = "select singer_name from singer"
        assert em_match(a, b, concert_schema)

    def test_different_constant_fails(self, concert_schema):
        a = "SELECT count(*) FROM singer WHERE age > 30"
        b = "SELECT count(*) FROM singer WHERE age > 40"
        assert not em_match(a, b, concert_schema)

    def test_missing_clause_fails(self, concert_schema):
        a = "SELECT country FROM singer GROUP BY country"
        b = "SELECT country FROM singer"
        assert not em_match(a, b, concert_schema)

    def test_garbage_prediction_is_false_not_error(self, concert_schema):
        assert not em_match("SELECT count(*) FROM singer", "blah ( blah",
                            concert_schema)
        assert not em_match("SELECT count(*) FROM singer", "", concert_schema)

    def test_order_direction_matters(self, concert_schema):
        a = "SELECT singer_name FROM singer ORDER BY age ASC"
        b = "SELECT singer_name FROM singer ORDER BY age DESC"
        assert not em_match(a, b, concert_schema)


class TestExMatch:
    def test_equivalent_formulations_match(self, executor):
        assert ex_match("SELECT 1 + 1", "SELECT 2", "concert_hall", executor)

    def test_different_results_fail(self, executor):
        assert not ex_match("SELECT 1", "SELECT 2", "concert_hall", executor)

    def test_prediction_error_is_false(self, executor):
        assert not ex_match("SELECT count(*) FROM singer",
                            "SELECT nope FROM singer", "concert_hall", executor)

    def test_gold_failure_raises(self, executor):
        with pytest.raises(ValueError, match="gold"):
            ex_match("SELECT nope FROM singer", "SELECT 1", "concert_hall",
                     executor)

    def test_unordered_gold_permutation_matches(self, executor):
        gold = "SELECT singer_name FROM singer"
        pred = "SELECT singer_name FROM singer ORDER BY age"
        assert ex_match(gold, pred, "concert_hall", executor)

    def test_ordered_gold_detects_wrong_order(self, executor):
        gold = "SELECT age FROM singer ORDER BY age"
        pred = "SELECT age FROM singer ORDER BY age DESC"
        assert not ex_match(gold, pred, "concert_hall", executor)

    def test_gold_is_ordered_flag(self):
        assert gold_is_ordered("SELECT a FROM t ORDER BY a")
        assert not gold_is_ordered("SELECT a FROM t")
        assert not gold_is_ordered(
            "SELECT a FROM t WHERE b IN (SELECT b FROM u ORDER BY b)")


def _fill(mat, values):
    for (m, n), v in values.items():
        mat.set(m, n, v)


class TestMetrics:
    def test_hand_example(self):
        mat = AccuracyMatrix(kind="EM")
        _fill(mat, {(1, 1): 0.8, (1, 2): 0.5, (2, 1): 0.6, (2, 2): 0.7})
        mat.reference = {2: 0.3}
        mat.combined = 0.66
        out = metrics(mat)
        assert out["ACC_a"] == pytest.approx(0.65)
        assert out["ACC_w"] == pytest.approx(0.66)
        assert out["BWT"] == pytest.approx(-0.2)
        assert out["FWT"] == pytest.approx(0.2)

    def test_single_task_has_no_transfer_metrics(self):
        mat = AccuracyMatrix(kind="EM")
        mat.set(1, 1, 0.4)
        mat.combined = 0.4
        out = metrics(mat)
        assert out["ACC_a"] == pytest.approx(0.4)
        assert out["BWT"] is None and out["FWT"] is None

    def test_no_forgetting_gives_zero_bwt(self):
        mat = AccuracyMatrix(kind="EX")
        rng = random.Random(1)
        m_tasks = 4
        for i in range(1, m_tasks + 1):
            v = rng.random()
            mat.set(i, i, v)
            mat.set(m_tasks, i, v)
            if i > 1:
                mat.set(i - 1, i, rng.random())
                mat.reference[i] = rng.random()
        mat.combined = 0.5
        assert metrics(mat)["BWT"] == pytest.approx(0.0, abs=1e-12)

    def test_random_matrices_match_definitional_oracle(self):
        rng = random.Random(7)
        for _ in range(100):
            m_tasks = rng.randint(2, 8)
            mat = AccuracyMatrix(kind="EM")
            for m in range(1, m_tasks + 1):
                for n in range(1, m_tasks + 1):
                    mat.set(m, n, rng.random())
            mat.reference = {i: rng.random() for i in range(2, m_tasks + 1)}
            mat.combined = rng.random()
            out = metrics(mat)
            acc_a = sum(mat.get(m_tasks, i) for i in range(1, m_tasks + 1)) / m_tasks
            bwt = sum(mat.get(m_tasks, i) - mat.get(i, i)
                      for i in range(1, m_tasks)) / (m_tasks - 1)
            fwt = sum(mat.get(i - 1, i) - mat.reference[i]
                      for i in range(2, m_tasks + 1)) / (m_tasks - 1)
            assert abs(out["ACC_a"] - acc_a) <= 1e-12
            assert abs(out["BWT"] - bwt) <= 1e-12
            assert abs(out["FWT"] - fwt) <= 1e-12
            assert -1.0 <= out["BWT"] <= 1.0
            assert -1.0 <= out["FWT"] <= 1.0
            assert 0.0 <= out["ACC_a"] <= 1.0

    def test_out_of_range_rejected(self):
        mat = AccuracyMatrix(kind="EM")
        with pytest.raises(ValueError):
            mat.set(1, 1, 1.5)

    def test_missing_entry_named(self):
        mat = AccuracyMatrix(kind="EM")
        mat.set(1, 1, 0.5)
        mat.set(1, 2, 0.5)
        mat.set(2, 1, 0.5)
        with pytest.raises(KeyError, match=r"a\[2\]\[2\]"):
            metrics(mat)

    def test_json_round_trip(self):
        mat = AccuracyMatrix(kind="EX")
        _fill(mat, {(1, 1): 0.5, (1, 2): 0.25, (2, 1): 0.75, (2, 2): 1.0})
        mat.reference = {2: 0.1}
        mat.combined = 0.6
        again = AccuracyMatrix.from_json(mat.to_json())
        assert again.entries == mat.entries
        assert again.reference == mat.reference
        assert again.combined == mat.combined

    def test_report_formats_percent(self):
        mat = AccuracyMatrix(kind="EM")
        _fill(mat, {(1, 1): 0.8, (1, 2): 0.5, (2, 1): 0.6, (2, 2): 0.7})
        mat.reference = {2: 0.3}
        mat.combined = 0.66
        report = format_report(mat, mat)
        assert "| ACC_a | 65.0 | 65.0 |" in report
        assert "| BWT | -20.0 | -20.0 |" in report
