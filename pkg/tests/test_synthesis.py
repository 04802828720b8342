import pytest

from sqlmemo.llm import MockProvider
from sqlmemo.schema import TaskSample
from sqlmemo.skeleton import SqlParseError, link_entities
from sqlmemo.synthesis import rephrase, synthesize


def _sample(question, sql, db_id="concert_hall"):
    return TaskSample(question=question, sql=sql, db_id=db_id)


FRANCE = _sample("How many singers are from France?",
                 "SELECT count(*) FROM singer WHERE country = 'France'")


class TestSynthesize:
    def test_value_swap_produces_executable_variant(self, stream, executor):
        schema = stream.schemas["concert_hall"]
        variants = synthesize(FRANCE, schema, executor, n_cfg=3, seed=0)
        assert variants
        for q, sql in variants:
            assert sql != FRANCE.sql
            assert "'France'" not in sql
            # the replacement value appears in the question too
            value = sql.split("country = '")[1].rstrip("'")
            assert value in q
            assert executor.execute("concert_hall", sql).status == "ok"

    def test_yield_capped_at_n_cfg(self, stream, executor):
        schema = stream.schemas["concert_hall"]
        for cap in (1, 2, 3):
            assert len(synthesize(FRANCE, schema, executor, n_cfg=cap, seed=0)) <= cap

    def test_synchronized_replacement_via_relink(self, stream, executor):
        schema = stream.schemas["concert_hall"]
        for q, sql in synthesize(FRANCE, schema, executor, n_cfg=3, seed=1):
            # re-linking the variant must still pair the swapped entity
            links = link_entities(q, sql, schema)
            q_values = {l.target for l in links
                        if l.text == "question" and l.kind == "value"}
            s_values = {l.target for l in links
                        if l.text == "sql" and l.kind == "value"}
            assert q_values and q_values <= s_values

    def test_column_swap_same_declared_kind(self, stream, executor):
        schema = stream.schemas["concert_hall"]
        sample = _sample("List the country of each singer.",
                         "SELECT country FROM singer")
        variants = synthesize(sample, schema, executor, n_cfg=5, seed=0)
        text_cols = {c for _, c, kind in schema.columns if kind == "text"}
        for q, sql in variants:
            col = sql.split("SELECT ")[1].split(" FROM")[0]
            assert col in text_cols and col != "country"

    def test_no_candidates_returns_empty(self, stream, executor):
        sample = _sample("How many rows?", "SELECT count(*) FROM singer")
        assert synthesize(sample, stream.schemas["concert_hall"], executor) == []

    def test_deterministic_for_seed(self, stream, executor):
        schema = stream.schemas["concert_hall"]
        a = synthesize(FRANCE, schema, executor, n_cfg=3, seed=5)
        b = synthesize(FRANCE, schema, executor, n_cfg=3, seed=5)
        assert a == b

    def test_unparseable_source_raises(self, stream, executor):
        bad = _sample("q?", "SELECT count(* FROM singer")
        with pytest.raises(SqlParseError):
            synthesize(bad, stream.schemas["concert_hall"], executor)

    def test_variants_deduplicated_by_sql(self, stream, executor):
        schema = stream.schemas["concert_hall"]
        variants = synthesize(FRANCE, schema, executor, n_cfg=10, seed=2)
        sqls = [sql for _, sql in variants]
        assert len(sqls) == len(set(sqls))


class TestRephrase:
    PAIRS = [("How many singers are from Japan?",
              "SELECT count(*) FROM singer WHERE country = 'Japan'")]

    def test_question_replaced_sql_untouched(self):
        provider = MockProvider([{"match": {"kind": "rephrase", "ordinal": "*"},
                                  "response": "Question: Count the singers whose country is Japan."}])
        out = rephrase(self.PAIRS, provider)
        assert out == [("Count the singers whose country is Japan.",
                        self.PAIRS[0][1])]

    def test_provider_failure_keeps_original(self):
        out = rephrase(self.PAIRS, MockProvider([]))
        assert out == self.PAIRS

    def test_per_item_fallback(self):
        provider = MockProvider([{"match": {"kind": "rephrase", "ordinal": 0},
                                  "response": "Question: Rephrased first."}])
        pairs = self.PAIRS + [("Second question?", "SELECT venue FROM concert")]
        out = rephrase(pairs, provider)
        assert out[0][0] == "Rephrased first."
        assert out[1] == pairs[1]  # second call exhausted the script

    def test_empty_input(self):
        assert rephrase([], MockProvider([])) == []
