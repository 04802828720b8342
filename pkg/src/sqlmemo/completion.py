"""Inter-task memory completion and calibration: skeleton-guided pseudo-sample
generation, iterative self-correction against the executor, and top-R
selection by skeleton edit distance."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

from .bias import ComponentBias, ComponentFeatureSet
from .dataset_io import ArtifactStore
from .executor import ExecOutcome, SqlExecutor
from .llm import (ChatRequest, DET_DEFAULTS, GEN_DEFAULTS, LlmProvider,
                  PromptError, ProviderError, parse_pair, parse_sql_only,
                  parse_verdict, render_prompt, schema_block)
from .schema import Schema
from .skeleton import (SqlParseError, SqlSkeleton, extract_skeleton,
                       simplify_skeleton, skeleton_edit_distance)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CompletionConfig:
    n_ske: int = 10   # generations per skeleton
    m_max: int = 3    # correction iteration bound
    r_top: int = 3    # samples kept per skeleton

    def __post_init__(self):
        if min(self.n_ske, self.m_max, self.r_top) < 1:
            raise ValueError("all completion parameters must be positive")


@dataclass(frozen=True)
class PseudoSample:
    question: str
    sql: str
    db_id: str
    source_skeleton: str
    status: str = "raw"  # raw | verified | rejected
    revisions: int = 0
    edit_distance: int | None = None
    reject_cause: str = ""

    @property
    def status_label(self) -> str:
        if self.status == "verified" and self.revisions > 0:
            return f"corrected({self.revisions})"
        return self.status

    def to_record(self) -> dict:
        return {
            "db_id": self.db_id,
            "edit_distance": self.edit_distance,
            "question": self.question,
            "reject_cause": self.reject_cause,
            "revisions": self.revisions,
            "source_skeleton": self.source_skeleton,
            "sql": self.sql,
            "status": self.status_label,
        }


def _gen_request(prompt: str) -> ChatRequest:
    return ChatRequest(messages=(("user", prompt),), **GEN_DEFAULTS)


def _det_request(prompt: str) -> ChatRequest:
    return ChatRequest(messages=(("user", prompt),), **DET_DEFAULTS)


def generate_for_task(task_index: int, current: ComponentFeatureSet,
                      bias: ComponentBias, schemas: dict[str, Schema],
                      provider: LlmProvider, cfg: CompletionConfig) -> list[PseudoSample]:
    """Generate n_ske raw pseudo samples per guiding skeleton.

    The guiding set is the task's own feature set on the first task, the
    cross-task bias afterwards. Target schemas rotate round-robin over the
    current task's databases.
    """
    guide = current.skeletons if task_index == 1 else bias.skeletons
    skeletons = sorted(guide, key=lambda z: z.skeleton)
    if not skeletons:
        logger.info("task %s: empty guiding skeleton set, nothing to generate",
                    current.task_id)
        return []
    if not schemas:
        raise ValueError("no schema available for generation")
    db_ids = sorted(schemas)
    samples: list[PseudoSample] = []
    call = 0
    for z in skeletons:
        produced = 0
        for _ in range(cfg.n_ske):
            db_id = db_ids[call % len(db_ids)]
            call += 1
            kind = "generate_nested" if z.nested else "generate"
            prompt = render_prompt(
                kind,
                schema_block=schema_block(schemas[db_id]),
                keywords=simplify_skeleton(z),
                nesting_hint="NESTING" if z.nested else "",
            )
            try:
                response = provider.complete(_gen_request(prompt))
                question, sql = parse_pair(response)
            except (ProviderError, PromptError) as e:
                logger.warning("generation failed for skeleton %r: %s", z.skeleton, e)
                continue
            samples.append(PseudoSample(question=question, sql=sql, db_id=db_id,
                                        source_skeleton=z.skeleton))
            produced += 1
        if produced == 0:
            logger.warning("all generations failed for skeleton %r", z.skeleton)
    return samples


def _result_slot(outcome: ExecOutcome) -> str:
    if outcome.status == "ok":
        shown = outcome.rows[:5]
        return f"rows {list(map(list, shown))}" + (" ..." if len(outcome.rows) > 5 else "")
    return f"{outcome.status}: {outcome.error_message}"


def self_correct(samples: list[PseudoSample], executor: SqlExecutor,
                 schemas: dict[str, Schema], provider: LlmProvider,
                 cfg: CompletionConfig) -> list[PseudoSample]:
    """Iterative self-correction: execute, verify, and revise up to m_max
    times; every sample leaves as verified (possibly revised) or rejected."""
    out: list[PseudoSample] = []
    for sample in samples:
        try:
            out.append(_correct_one(sample, executor, schemas, provider, cfg))
        except ProviderError as e:
            out.append(replace(sample, status="rejected",
                               reject_cause=f"provider-error: {e}"))
    return out


def _verify(sample: PseudoSample, sql: str, outcome: ExecOutcome,
            block: str, provider: LlmProvider) -> bool:
    prompt = render_prompt("verify", schema_block=block, question=sample.question,
                           sql=sql, execution_result=_result_slot(outcome))
    verdict, _warn = parse_verdict(provider.complete(_det_request(prompt)))
    return verdict == "Correct"


def _correct_one(sample: PseudoSample, executor: SqlExecutor,
                 schemas: dict[str, Schema], provider: LlmProvider,
                 cfg: CompletionConfig) -> PseudoSample:
    block = schema_block(schemas[sample.db_id])
    outcome = executor.execute(sample.db_id, sample.sql)
    if outcome.status == "ok" and _verify(sample, sample.sql, outcome, block, provider):
        return replace(sample, status="verified", revisions=0)
    sql, last = sample.sql, outcome
    for i in range(1, cfg.m_max + 1):
        prompt = render_prompt(
            "revise", schema_block=block, question=sample.question, sql=sql,
            error_message=_result_slot(last))
        try:
            sql = parse_sql_only(provider.complete(_det_request(prompt)))
        except PromptError:
            continue
        last = executor.execute(sample.db_id, sql)
        if last.status == "ok" and _verify(sample, sql, last, block, provider):
            return replace(sample, sql=sql, status="verified", revisions=i)
    return replace(sample, status="rejected", revisions=cfg.m_max,
                   reject_cause=f"not corrected within {cfg.m_max} revisions")


def sample_by_skeleton(candidates: list[PseudoSample], cfg: CompletionConfig,
                       schemas: dict[str, Schema]) -> list[PseudoSample]:
    """Per source skeleton, keep the r_top verified candidates whose
    de-domained SQL is closest (token edit distance) to the full skeleton."""
    by_skeleton: dict[str, list[PseudoSample]] = {}
    for cand in candidates:
        if cand.status != "verified":
            continue
        by_skeleton.setdefault(cand.source_skeleton, []).append(cand)

    kept: list[PseudoSample] = []
    for skeleton_str in sorted(by_skeleton):
        reference = SqlSkeleton.from_string(skeleton_str)
        scored: list[PseudoSample] = []
        for cand in by_skeleton[skeleton_str]:
            try:
                z = extract_skeleton(cand.sql, schemas.get(cand.db_id))
            except SqlParseError as e:
                logger.warning("dropping unparseable candidate %r: %s", cand.sql, e)
                continue
            scored.append(replace(cand, edit_distance=skeleton_edit_distance(reference, z)))
        scored.sort(key=lambda c: c.edit_distance)  # stable: ties keep generation order
        kept.extend(scored[:cfg.r_top])
    return kept


def complete_memory(task_index: int, current: ComponentFeatureSet,
                    bias: ComponentBias, schemas: dict[str, Schema],
                    provider: LlmProvider, executor: SqlExecutor,
                    cfg: CompletionConfig,
                    store: ArtifactStore | None = None) -> tuple[list[PseudoSample], dict]:
    """generate -> self-correct -> sample; persists the kept set, the
    quarantined rejects, and a stage report when a store is given."""
    raw = generate_for_task(task_index, current, bias, schemas, provider, cfg)
    corrected = self_correct(raw, executor, schemas, provider, cfg)
    kept = sample_by_skeleton(corrected, cfg, schemas)
    rejected = [s for s in corrected if s.status == "rejected"]
    per_skeleton: dict[str, int] = {}
    for s in kept:
        per_skeleton[s.source_skeleton] = per_skeleton.get(s.source_skeleton, 0) + 1
    report = {
        "task_id": current.task_id,
        "generated": len(raw),
        "verified": sum(1 for s in corrected if s.status == "verified"),
        "corrected": sum(1 for s in corrected if s.status == "verified" and s.revisions > 0),
        "rejected": len(rejected),
        "kept": len(kept),
        "per_skeleton": per_skeleton,
    }
    if store is not None:
        store.save_jsonl(current.task_id, "xske.jsonl", [s.to_record() for s in kept])
        store.save_jsonl(current.task_id, "xske_quarantine.jsonl",
                         [s.to_record() for s in rejected])
        store.save_json("xske_report.json", report, task_id=current.task_id)
    return kept, report
