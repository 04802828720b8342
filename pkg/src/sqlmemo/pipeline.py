"""End-to-end orchestration over a task stream: feature sets, bias, memory
completion, intra-task synthesis, distillation training, and evaluation.

Every stage is load-if-present, compute-and-save otherwise, so interrupted
runs resume from their artifacts and re-runs rewrite identical bytes.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .bias import (ComponentBias, ComponentFeatureSet, EmbeddingProvider,
                   compute_bias, extract_feature_set)
from .completion import CompletionConfig, PseudoSample, complete_memory
from .dataset_io import ArtifactStore, load_task_stream
from .distill import (BatchItem, EOS, ToyModel, TrainingBatch, Vocabulary,
                      greedy_decode, total_loss, train_task)
from .executor import SqlExecutor
from .llm import LlmProvider, MockProvider
from .metrics import AccuracyMatrix, em_match, ex_match, format_report, metrics
from .schema import Schema, Task, TaskStream
from .skeleton import SqlSkeleton
from .synthesis import rephrase, synthesize

logger = logging.getLogger(__name__)


@dataclass
class RunConfig:
    stream_config: str
    store_root: str
    k: int = 80
    n_ske: int = 10
    n_cfg: int = 3
    lam: float = 0.1
    m_max: int = 3
    r_top: int = 3
    seed: int = 7
    epochs: int = 40
    lr: float = 0.5
    model_dim: int = 16
    permute: list[int] | None = None
    stages: list[str] | None = None  # None = all

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")
        if min(self.k, self.n_ske, self.n_cfg, self.m_max, self.r_top) < 1:
            raise ValueError("k, n_ske, n_cfg, m_max, r_top must be positive")

    @property
    def completion(self) -> CompletionConfig:
        return CompletionConfig(n_ske=self.n_ske, m_max=self.m_max, r_top=self.r_top)


class StageError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


class Pipeline:
    def __init__(self, cfg: RunConfig, provider: LlmProvider):
        self.cfg = cfg
        self.provider = provider
        self.stream = load_task_stream(cfg.stream_config)
        if cfg.permute:
            tasks = self.stream.tasks
            if sorted(cfg.permute) != list(range(len(tasks))):
                raise ValueError(f"--permute must be a permutation of 0..{len(tasks) - 1}")
            self.stream = replace(self.stream,
                                  tasks=tuple(tasks[i] for i in cfg.permute),
                                  order_label="cold_start")
        self.store = ArtifactStore(cfg.store_root)
        self.store.register_schemas(self.stream.schemas)
        self.executor = SqlExecutor(self.stream.db_dir)
        self.embedder = EmbeddingProvider()
        self.vocab = self._build_vocab()

    # --- shared state --------------------------------------------------------

    def _build_vocab(self) -> Vocabulary:
        texts = []
        for task in self.stream.tasks:
            for s in task.train:
                texts.append(s.question)
                texts.append(s.sql)
        for schema in self.stream.schemas.values():
            texts.append(" ".join(schema.tables))
            texts.append(" ".join(n for _t, n, _k in schema.columns))
        return Vocabulary.from_texts(texts)

    def task_schemas(self, task: Task) -> dict[str, Schema]:
        return {db: self.stream.schemas[db] for db in task.db_ids}

    def _task_ids(self) -> list[str]:
        return [t.task_id for t in self.stream.tasks]

    # --- stages --------------------------------------------------------------

    def stage_analyze(self, index: int) -> tuple[ComponentFeatureSet, ComponentBias]:
        """Feature-set extraction plus bias against stored prior sets.

        index is 1-based stream position.
        """
        task = self.stream.tasks[index - 1]
        if self.store.has(task.task_id, "feature_set.jsonl"):
            current = self.store.load_feature_set(task.task_id)
        else:
            current = extract_feature_set(task, self.stream.schemas, self.embedder,
                                          self.cfg.k, self.cfg.seed)
            self.store.save_feature_set(task.task_id, current)
        priors = self.store.load_feature_sets_before(self._task_ids(), index)
        bias = compute_bias(current, priors)
        self.store.save_jsonl(task.task_id, "bias.jsonl",
                              [{"skeleton": z.skeleton}
                               for z in sorted(bias.skeletons, key=lambda z: z.skeleton)])
        return current, bias

    def stage_genmem(self, index: int) -> list[PseudoSample]:
        """Memory completion (generate + calibrate) for one task."""
        task = self.stream.tasks[index - 1]
        if self.store.has(task.task_id, "xske.jsonl"):
            return self._load_pseudo(task.task_id, "xske.jsonl")
        if not self.store.has(task.task_id, "feature_set.jsonl"):
            raise StageError("genmem", f"missing feature set for task {task.task_id!r}; "
                                       "run analyze first")
        current, bias = self.stage_analyze(index)
        kept, _report = complete_memory(index, current, bias, self.task_schemas(task),
                                        self.provider, self.executor,
                                        self.cfg.completion, store=self.store)
        return kept

    def _load_pseudo(self, task_id: str, stage: str) -> list[PseudoSample]:
        out = []
        for rec in self.store.load_jsonl(task_id, stage):
            status = rec["status"]
            revisions = rec.get("revisions", 0)
            out.append(PseudoSample(
                question=rec["question"], sql=rec["sql"], db_id=rec["db_id"],
                source_skeleton=rec.get("source_skeleton", ""),
                status="verified" if status.startswith("corrected") else status,
                revisions=revisions, edit_distance=rec.get("edit_distance")))
        return out

    def stage_synth(self, index: int) -> list[dict]:
        """Intra-task entity-swap variants with rephrasing, persisted as
        xcfg.jsonl."""
        task = self.stream.tasks[index - 1]
        if self.store.has(task.task_id, "xcfg.jsonl"):
            return self.store.load_jsonl(task.task_id, "xcfg.jsonl")
        records = []
        for i, sample in enumerate(task.train):
            schema = self.stream.schemas[sample.db_id]
            try:
                pairs = synthesize(sample, schema, self.executor,
                                   n_cfg=self.cfg.n_cfg, seed=self.cfg.seed + i)
            except Exception as e:
                logger.warning("synthesis skipped for sample %d: %s", i, e)
                continue
            pairs = rephrase(pairs, self.provider)
            for question, sql in pairs:
                records.append({"db_id": sample.db_id, "provenance": "cfg",
                                "question": question, "sql": sql})
        self.store.save_jsonl(task.task_id, "xcfg.jsonl", records)
        return records

    # --- training and evaluation ---------------------------------------------

    def _encode_item(self, question: str, sql: str, db_id: str, source: str) -> BatchItem:
        schema = self.stream.schemas[db_id]
        schema_text = " ".join(schema.tables) + " " + \
            " ".join(n for _t, n, _k in schema.columns)
        input_ids = self.vocab.encode(question + " | " + schema_text)[:510]
        target_ids = self.vocab.encode(sql)[:254] + [self.vocab.stoi[EOS]]
        return BatchItem(tuple(input_ids), tuple(target_ids), source)

    def build_batch(self, task: Task, xske: list[PseudoSample],
                    xcfg: list[dict]) -> TrainingBatch:
        items = [self._encode_item(s.question, s.sql, s.db_id, "labeled")
                 for s in task.train]
        items += [self._encode_item(r["question"], r["sql"], r["db_id"], "cfg")
                  for r in xcfg]
        items += [self._encode_item(p.question, p.sql, p.db_id, "ske")
                  for p in xske]
        return TrainingBatch(tuple(items))

    def _ckpt_path(self, task_id: str) -> Path:
        return self.store.path_for(task_id, "checkpoint.json")

    def new_model(self, seed_offset: int = 0) -> ToyModel:
        return ToyModel(len(self.vocab), dim=self.cfg.model_dim,
                        seed=self.cfg.seed + seed_offset)

    def stage_train(self, index: int, xske: list[PseudoSample],
                    xcfg: list[dict]) -> ToyModel:
        task = self.stream.tasks[index - 1]
        ckpt = self._ckpt_path(task.task_id)
        if ckpt.exists():
            model, _ = ToyModel.load(ckpt)
            return model
        prev = None
        if index > 1:
            prev_ckpt = self._ckpt_path(self.stream.tasks[index - 2].task_id)
            if not prev_ckpt.exists():
                raise StageError("train", f"missing checkpoint for prior task "
                                          f"{self.stream.tasks[index - 2].task_id!r}")
            prev, _ = ToyModel.load(prev_ckpt)
            student = prev.clone()
        else:
            student = self.new_model()
        batch = self.build_batch(task, xske, xcfg)
        student = train_task(student, prev, batch, self.cfg.lam, index,
                             epochs=self.cfg.epochs, lr=self.cfg.lr)
        student.save(ckpt, self.vocab)
        return student

    def _accuracy(self, model: ToyModel, samples) -> tuple[float, float]:
        """(EM, EX) accuracy of greedy decodes against gold."""
        if not samples:
            return 0.0, 0.0
        em_hits = ex_hits = 0
        for s in samples:
            item = self._encode_item(s.question, s.sql, s.db_id, "labeled")
            pred = greedy_decode(model, self.vocab, list(item.input_ids))
            try:
                if em_match(s.sql, pred):
                    em_hits += 1
            except Exception:
                pass
            try:
                if ex_match(s.sql, pred, s.db_id, self.executor):
                    ex_hits += 1
            except ValueError as e:
                raise StageError("eval", str(e))
        return em_hits / len(samples), ex_hits / len(samples)

    def stage_eval(self, index: int, model: ToyModel) -> dict:
        """Accuracies after training stage `index`: all seen test splits plus
        the next task's split (for the FWT superdiagonal)."""
        task = self.stream.tasks[index - 1]
        name = "eval.json"
        if self.store.has(task.task_id, name):
            return self.store.load_json(name, task_id=task.task_id)
        result = {"em": {}, "ex": {}}
        upto = min(index + 1, len(self.stream.tasks))
        for j in range(1, upto + 1):
            em, ex = self._accuracy(model, self.stream.tasks[j - 1].test)
            result["em"][str(j)] = em
            result["ex"][str(j)] = ex
        if index == len(self.stream.tasks):
            combined = [s for t in self.stream.tasks for s in t.test]
            em, ex = self._accuracy(model, combined)
            result["combined"] = {"em": em, "ex": ex}
        self.store.save_json(name, result, task_id=task.task_id)
        return result

    def reference_accuracies(self) -> dict:
        if (self.store.root / "reference.json").exists():
            return self.store.load_json("reference.json")
        model = self.new_model(seed_offset=1)
        out = {"em": {}, "ex": {}}
        for j, task in enumerate(self.stream.tasks, start=1):
            em, ex = self._accuracy(model, task.test)
            out["em"][str(j)] = em
            out["ex"][str(j)] = ex
        self.store.save_json("reference.json", out)
        return out

    # --- full run ------------------------------------------------------------

    def run_stream(self) -> dict:
        matrices = {"em": AccuracyMatrix(kind="EM"), "ex": AccuracyMatrix(kind="EX")}
        reference = self.reference_accuracies()
        for kind in ("em", "ex"):
            matrices[kind].reference = {int(i): v for i, v in reference[kind].items()}
        for index, task in enumerate(self.stream.tasks, start=1):
            logger.info("=== task %d/%d: %s", index, len(self.stream.tasks), task.task_id)
            self.stage_analyze(index)
            xske = self.stage_genmem(index)
            xcfg = self.stage_synth(index)
            model = self.stage_train(index, xske, xcfg)
            result = self.stage_eval(index, model)
            for kind in ("em", "ex"):
                for j, acc in result[kind].items():
                    matrices[kind].set(index, int(j), acc)
            if "combined" in result:
                for kind in ("em", "ex"):
                    matrices[kind].combined = result["combined"][kind]
        for kind in ("em", "ex"):
            self.store.save_json(f"matrix_{kind}.json", matrices[kind].to_json())
        report = format_report(matrices["em"], matrices["ex"])
        (self.store.root / "report.md").write_text(report + "\n")
        return {
            "em": metrics(matrices["em"]),
            "ex": metrics(matrices["ex"]),
            "tasks": len(self.stream.tasks),
        }
