"""Core data types for task streams: schemas, samples, tasks."""

from __future__ import annotations

from dataclasses import dataclass, field


class ValidationError(ValueError):
    """Raised when loaded data violates a structural invariant."""


VALUE_KINDS = {"text", "number", "time", "boolean", "other"}


@dataclass(frozen=True)
class Schema:
    """One database: tables, typed columns, and one sampled row per table."""

    db_id: str
    tables: tuple[str, ...]
    columns: tuple[tuple[int, str, str], ...]  # (table index, name, value kind)
    sample_rows: dict[str, tuple] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if len(set(self.tables)) != len(self.tables):
            raise ValidationError(f"{self.db_id}: duplicate table names")
        per_table: dict[int, set[str]] = {}
        for tab_idx, name, kind in self.columns:
            if not (0 <= tab_idx < len(self.tables)):
                raise ValidationError(
                    f"{self.db_id}: column {name!r} references table index {tab_idx}")
            if kind not in VALUE_KINDS:
                raise ValidationError(f"{self.db_id}: bad value kind {kind!r} for {name!r}")
            cols = per_table.setdefault(tab_idx, set())
            if name in cols:
                raise ValidationError(
                    f"{self.db_id}: duplicate column {name!r} in {self.tables[tab_idx]}")
            cols.add(name)

    def columns_of(self, table: str) -> list[tuple[str, str]]:
        """(name, value kind) pairs for one table."""
        idx = self.tables.index(table)
        return [(n, k) for t, n, k in self.columns if t == idx]

    def identifiers(self) -> set[str]:
        """All table and column names, lowercased (for leakage scanning)."""
        out = {t.lower() for t in self.tables}
        out |= {n.lower() for _, n, _ in self.columns}
        return out


@dataclass(frozen=True)
class TaskSample:
    question: str
    sql: str
    db_id: str
    split: str = "train"


@dataclass(frozen=True)
class Task:
    task_id: str
    train: tuple[TaskSample, ...]
    dev: tuple[TaskSample, ...]
    test: tuple[TaskSample, ...]
    db_ids: tuple[str, ...]


@dataclass(frozen=True)
class TaskStream:
    tasks: tuple[Task, ...]
    schemas: dict[str, Schema]
    order_label: str = "custom"
    db_dir: str = ""

    def schema_for(self, db_id: str) -> Schema:
        return self.schemas[db_id]
