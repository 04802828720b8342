"""Loading Spider-style task streams and persisting pipeline artifacts."""

from __future__ import annotations

import json
import logging
import sqlite3
from pathlib import Path

from .schema import Schema, Task, TaskSample, TaskStream, ValidationError
from .skeleton import PLACEHOLDER_RE, SqlParseError, tokenize, _validate

logger = logging.getLogger(__name__)


def _load_json(path: Path):
    if not path.exists():
        raise FileNotFoundError(f"missing file: {path}")
    with open(path) as f:
        try:
            return json.load(f)
        except (json.JSONDecodeError, UnicodeDecodeError) as e:
            raise ValidationError(f"malformed JSON in {path}: {e}") from e


def load_schemas(tables_path: Path, db_dir: Path | None = None) -> dict[str, Schema]:
    """Read a tables.json-style schema file; sample one row per table from the
    live database when db_dir is given (missing/empty tables yield no row)."""
    raw = _load_json(tables_path)
    schemas: dict[str, Schema] = {}
    for entry in raw:
        db_id = entry["db_id"]
        tables = tuple(entry["table_names_original"])
        kinds = entry.get("column_types", [])
        columns = []
        for i, (tab_idx, name) in enumerate(entry["column_names_original"]):
            if tab_idx < 0:  # Spider's "*" pseudo-column
                continue
            kind = kinds[i] if i < len(kinds) else "other"
            columns.append((tab_idx, name, kind))
        sample_rows: dict[str, tuple] = {}
        if db_dir is not None:
            db_path = Path(db_dir) / db_id / f"{db_id}.sqlite"
            if db_path.exists():
                sample_rows = _sample_first_rows(db_path, tables)
        schemas[db_id] = Schema(db_id=db_id, tables=tables,
                                columns=tuple(columns), sample_rows=sample_rows)
    return schemas


def _sample_first_rows(db_path: Path, tables: tuple[str, ...]) -> dict[str, tuple]:
    rows: dict[str, tuple] = {}
    con = sqlite3.connect(f"file:{db_path}?mode=ro", uri=True)
    try:
        for table in tables:
            try:
                cur = con.execute(f'SELECT * FROM "{table}" ORDER BY rowid LIMIT 1')
                row = cur.fetchone()
            except sqlite3.Error:
                row = None
            if row is not None:
                rows[table] = tuple(row)
    finally:
        con.close()
    return rows


def _load_samples(path: Path, split: str, schemas: dict[str, Schema]) -> list[TaskSample]:
    raw = _load_json(path)
    samples = []
    for obj in raw:
        db_id = obj["db_id"]
        if db_id not in schemas:
            raise ValidationError(f"{path}: sample references unknown db_id {db_id!r}")
        sql = obj["query"]
        if not sql.strip():
            raise ValidationError(f"{path}: empty SQL for question {obj['question']!r}")
        try:
            _validate(tokenize(sql), sql)
        except SqlParseError as e:
            raise ValidationError(f"{path}: unparseable SQL {sql!r}: {e}") from e
        samples.append(TaskSample(question=obj["question"], sql=sql,
                                  db_id=db_id, split=split))
    return samples


def load_task_stream(config_path: str | Path) -> TaskStream:
    """Load and validate a task stream from its JSON config.

    Config shape: {"order_label": ..., "tables": path, "db_dir": path,
    "tasks": [{"task_id", "train_path", "dev_path", "test_path"}, ...]};
    relative paths resolve against the config file's directory.
    """
    config_path = Path(config_path)
    cfg = _load_json(config_path)
    base = config_path.parent
    if not cfg.get("tasks"):
        raise ValidationError("empty task stream")
    db_dir = base / cfg["db_dir"] if "db_dir" in cfg else None
    schemas = load_schemas(base / cfg["tables"], db_dir)

    tasks = []
    seen_dbs: dict[str, str] = {}
    for entry in cfg["tasks"]:
        task_id = entry["task_id"]
        train = _load_samples(base / entry["train_path"], "train", schemas)
        dev = _load_samples(base / entry["dev_path"], "dev", schemas) \
            if entry.get("dev_path") else []
        test = _load_samples(base / entry["test_path"], "test", schemas)
        if not train or not test:
            raise ValidationError(f"task {task_id}: empty train or test split")
        db_ids = sorted({s.db_id for s in train + dev + test})
        for db_id in db_ids:
            if db_id in seen_dbs:
                raise ValidationError(
                    f"schema disjointness violated: db {db_id!r} appears in "
                    f"tasks {seen_dbs[db_id]!r} and {task_id!r}")
            seen_dbs[db_id] = task_id
        tasks.append(Task(task_id=task_id, train=tuple(train), dev=tuple(dev),
                          test=tuple(test), db_ids=tuple(db_ids)))
    return TaskStream(tasks=tuple(tasks), schemas=schemas,
                      order_label=cfg.get("order_label", "custom"),
                      db_dir=str(db_dir) if db_dir else "")


class LeakageError(ValueError):
    """A cross-task artifact contains domain content (schema identifier,
    cell value, or question text)."""


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(", ", ": "))


class ArtifactStore:
    """Filesystem store for per-task pipeline artifacts.

    Layout: <root>/<task_id>/<stage>.<ext>. Cross-task state (feature sets)
    is leakage-checked against every registered schema before writing.
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._identifiers: set[str] = set()

    def register_schemas(self, schemas: dict[str, Schema]) -> None:
        for schema in schemas.values():
            self._identifiers |= schema.identifiers()

    def _task_dir(self, task_id: str) -> Path:
        d = self.root / task_id
        d.mkdir(parents=True, exist_ok=True)
        return d

    def path_for(self, task_id: str, stage: str) -> Path:
        return self._task_dir(task_id) / stage

    def check_leakage(self, skeleton_str: str) -> None:
        stripped = PLACEHOLDER_RE.sub(" ", skeleton_str)
        words = {w.lower() for w in stripped.replace("(", " ").replace(")", " ").split()}
        hit = words & self._identifiers
        if hit:
            raise LeakageError(f"skeleton leaks schema identifiers: {sorted(hit)}")

    def save_feature_set(self, task_id: str, feature_set) -> Path:
        """Persist a ComponentFeatureSet as JSONL (skeleton strings only)."""
        from .bias import ComponentFeatureSet  # local import: avoid cycle
        assert isinstance(feature_set, ComponentFeatureSet)
        path = self.path_for(task_id, "feature_set.jsonl")
        if path.exists():
            logger.warning("overwriting feature set for task %s", task_id)
        for z in feature_set.skeletons:
            self.check_leakage(z.skeleton)
        lines = [canonical_json({"k_used": feature_set.k_used, "task_id": task_id})]
        for z in sorted(feature_set.skeletons, key=lambda z: z.skeleton):
            from .skeleton import simplify_skeleton
            lines.append(canonical_json({
                "nested": z.nested,
                "simplified": simplify_skeleton(z),
                "skeleton": z.skeleton,
            }))
        path.write_text("\n".join(lines) + "\n")
        return path

    def load_feature_set(self, task_id: str):
        from .bias import ComponentFeatureSet
        from .skeleton import SqlSkeleton
        path = self.path_for(task_id, "feature_set.jsonl")
        if not path.exists():
            raise FileNotFoundError(f"no feature set stored for task {task_id!r}")
        lines = path.read_text().splitlines()
        header = json.loads(lines[0])
        skeletons = [SqlSkeleton.from_string(json.loads(l)["skeleton"]) for l in lines[1:]]
        return ComponentFeatureSet(task_id=task_id, skeletons=frozenset(skeletons),
                                   k_used=header["k_used"])

    def load_feature_sets_before(self, task_ids: list[str], task_index: int) -> list:
        """Stored sets for stream positions 1..task_index-1, in order.

        task_index is 1-based; task_ids is the full ordered id list.
        """
        if task_index < 1:
            raise ValueError("task_index must be >= 1")
        out = []
        for tid in task_ids[:task_index - 1]:
            out.append(self.load_feature_set(tid))
        return out

    def save_jsonl(self, task_id: str, stage: str, records: list[dict]) -> Path:
        path = self.path_for(task_id, stage)
        path.write_text("".join(canonical_json(r) + "\n" for r in records))
        return path

    def load_jsonl(self, task_id: str, stage: str) -> list[dict]:
        path = self.path_for(task_id, stage)
        if not path.exists():
            raise FileNotFoundError(f"missing artifact {stage} for task {task_id!r}")
        return [json.loads(l) for l in path.read_text().splitlines() if l.strip()]

    def save_json(self, name: str, obj, task_id: str | None = None) -> Path:
        path = self.path_for(task_id, name) if task_id else self.root / name
        path.write_text(canonical_json(obj) + "\n")
        return path

    def load_json(self, name: str, task_id: str | None = None):
        path = self.path_for(task_id, name) if task_id else self.root / name
        if not path.exists():
            raise FileNotFoundError(f"missing artifact {path}")
        return json.loads(path.read_text())

    def has(self, task_id: str, stage: str) -> bool:
        return self.path_for(task_id, stage).exists()

    def scan_cross_task_state(self) -> list[str]:
        """No-replay scanner: every leakage violation found in stored
        feature-set files (the only cross-task state)."""
        violations = []
        for path in sorted(self.root.glob("*/feature_set.jsonl")):
            for line in path.read_text().splitlines()[1:]:
                skeleton = json.loads(line)["skeleton"]
                try:
                    self.check_leakage(skeleton)
                except LeakageError as e:
                    violations.append(f"{path}: {e}")
        return violations
