"""Intra-task variant synthesis: synchronized entity replacement over linked
spans, execution filtering, and best-effort LLM rephrasing."""

from __future__ import annotations

import logging
import random
import re
from dataclasses import dataclass

from .executor import SqlExecutor
from .llm import (ChatRequest, DET_DEFAULTS, LlmProvider, PromptError,
                  ProviderError, render_prompt)
from .schema import Schema, TaskSample
from .skeleton import EntityLink, SqlParseError, link_entities

logger = logging.getLogger(__name__)

VALUE_POOL_CAP = 20


@dataclass(frozen=True)
class SwapCandidate:
    surface: str
    replacement: str
    kind: str  # column | value
    provenance: str  # same-column-value | same-table-column
    question_span: tuple[int, int]
    sql_spans: tuple[tuple[int, int], ...]


def _paired_links(question: str, sql: str, schema: Schema) -> list[tuple[EntityLink, list[EntityLink]]]:
    """Question links paired with the SQL links sharing their target."""
    links = link_entities(question, sql, schema)
    q_links = [l for l in links if l.text == "question"]
    s_links = [l for l in links if l.text == "sql"]
    pairs = []
    for ql in q_links:
        matches = [sl for sl in s_links
                   if sl.kind == ql.kind and str(sl.target) == str(ql.target)]
        if matches:
            pairs.append((ql, matches))
    return pairs


def _value_pool(executor: SqlExecutor, db_id: str, table: str, column: str,
                rng: random.Random) -> list[str]:
    outcome = executor.execute(
        db_id, f'SELECT DISTINCT "{column}" FROM "{table}" LIMIT {VALUE_POOL_CAP}')
    if outcome.status != "ok":
        return []
    values = [str(r[0]) for r in outcome.rows if r[0] is not None]
    rng.shuffle(values)
    return values


def _swap_candidates(sample: TaskSample, schema: Schema, executor: SqlExecutor,
                     rng: random.Random) -> list[SwapCandidate]:
    candidates: list[SwapCandidate] = []
    for ql, sls in _paired_links(sample.question, sample.sql, schema):
        sql_spans = tuple(sl.span for sl in sls)
        if ql.kind == "value":
            col = next((sl.value_column for sl in sls if sl.value_column), None)
            if col is None:
                continue
            for value in _value_pool(executor, sample.db_id, col[0], col[1], rng):
                if value != str(ql.target):
                    candidates.append(SwapCandidate(
                        surface=ql.surface, replacement=value, kind="value",
                        provenance="same-column-value",
                        question_span=ql.span, sql_spans=sql_spans))
        elif ql.kind == "column":
            table, column = ql.target
            kind_of = dict(schema.columns_of(table))
            for other, other_kind in schema.columns_of(table):
                if other != column and other_kind == kind_of[column]:
                    candidates.append(SwapCandidate(
                        surface=ql.surface, replacement=other, kind="column",
                        provenance="same-table-column",
                        question_span=ql.span, sql_spans=sql_spans))
    rng.shuffle(candidates)
    return candidates


def _apply(text: str, spans: list[tuple[int, int]], replacement: str) -> str:
    for start, end in sorted(spans, reverse=True):
        text = text[:start] + replacement + text[end:]
    return text


def synthesize(sample: TaskSample, schema: Schema, executor: SqlExecutor,
               n_cfg: int = 3, seed: int = 0) -> list[tuple[str, str]]:
    """Emit up to n_cfg (question, sql) variants whose SQL executes cleanly.

    Each variant replaces one linked entity simultaneously in the question
    and every matching SQL span; execution success is the only filter.
    """
    rng = random.Random(seed)
    try:
        candidates = _swap_candidates(sample, schema, executor, rng)
    except SqlParseError as e:
        raise SqlParseError(f"source SQL unparseable: {e}") from e
    out: list[tuple[str, str]] = []
    seen: set[str] = set()
    for cand in candidates:
        if len(out) >= n_cfg:
            break
        new_q = _apply(sample.question, [cand.question_span], cand.replacement)
        new_sql = _apply(sample.sql, list(cand.sql_spans), cand.replacement)
        if new_sql in seen:
            continue
        outcome = executor.execute(sample.db_id, new_sql)
        if outcome.status == "ok":
            seen.add(new_sql)
            out.append((new_q, new_sql))
    return out


def rephrase(pairs: list[tuple[str, str]], provider: LlmProvider) -> list[tuple[str, str]]:
    """Replace each question with an LLM paraphrase; SQL is never touched and
    provider failures fall back to the original question."""
    out = []
    for question, sql in pairs:
        try:
            prompt = render_prompt("rephrase", question=question)
            response = provider.complete(
                ChatRequest(messages=(("user", prompt),), **DET_DEFAULTS))
            m = re.search(r"Question:\s*(.+)", response)
            new_q = m.group(1).strip() if m else response.strip()
            out.append((new_q or question, sql))
        except (ProviderError, PromptError) as e:
            logger.warning("rephrase failed, keeping original question: %s", e)
            out.append((question, sql))
    return out
