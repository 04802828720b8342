"""Read-only SQL execution against task databases, with timeouts and
result-set comparison for execution accuracy."""

from __future__ import annotations

import math
import sqlite3
import time
from dataclasses import dataclass, field
from pathlib import Path

ROW_CAP = 1000
REL_TOL = 1e-6


@dataclass(frozen=True)
class ExecOutcome:
    status: str  # ok | error | timeout
    rows: tuple = ()
    error_message: str = ""
    elapsed: float = 0.0
    truncated: bool = False


class IndeterminateComparison(ValueError):
    """Raised when truncated result sets cannot be compared reliably."""


class SqlExecutor:
    """Executes SQL on single-file databases laid out as
    <db_dir>/<db_id>/<db_id>.sqlite, read-only."""

    def __init__(self, db_dir: str | Path, timeout: float = 5.0, row_cap: int = ROW_CAP):
        self.db_dir = Path(db_dir)
        self.timeout = timeout
        self.row_cap = row_cap

    def db_path(self, db_id: str) -> Path:
        return self.db_dir / db_id / f"{db_id}.sqlite"

    def execute(self, db_id: str, sql: str, timeout: float | None = None) -> ExecOutcome:
        path = self.db_path(db_id)
        if not path.exists():
            raise FileNotFoundError(f"no database file for db_id {db_id!r}: {path}")
        budget = self.timeout if timeout is None else timeout
        start = time.monotonic()
        con = sqlite3.connect(f"file:{path}?mode=ro", uri=True)
        timed_out = False

        def _interrupt():
            nonlocal timed_out
            if time.monotonic() - start > budget:
                timed_out = True
                return 1
            return 0

        con.set_progress_handler(_interrupt, 200)
        try:
            cur = con.execute(sql)
            rows = cur.fetchmany(self.row_cap + 1)
            truncated = len(rows) > self.row_cap
            elapsed = time.monotonic() - start
            return ExecOutcome(status="ok", rows=tuple(tuple(r) for r in rows[:self.row_cap]),
                               elapsed=elapsed, truncated=truncated)
        except sqlite3.OperationalError as e:
            elapsed = time.monotonic() - start
            if timed_out or "interrupted" in str(e).lower():
                return ExecOutcome(status="timeout", elapsed=elapsed,
                                   error_message=f"timeout after {budget}s")
            return ExecOutcome(status="error", error_message=str(e), elapsed=elapsed)
        except sqlite3.Error as e:
            return ExecOutcome(status="error", error_message=str(e),
                               elapsed=time.monotonic() - start)
        finally:
            con.close()


def _values_close(a, b) -> bool:
    if isinstance(a, (int, float)) and isinstance(b, (int, float)) \
            and not isinstance(a, bool) and not isinstance(b, bool):
        return math.isclose(float(a), float(b), rel_tol=REL_TOL, abs_tol=REL_TOL)
    return a == b


def _rows_close(ra, rb) -> bool:
    return len(ra) == len(rb) and all(_values_close(x, y) for x, y in zip(ra, rb))


def _sort_key(row):
    return tuple(
        (0, round(float(v), 6)) if isinstance(v, (int, float)) and not isinstance(v, bool)
        else (1, str(v)) if v is not None else (2, "")
        for v in row
    )


def results_match(a: ExecOutcome, b: ExecOutcome, ordered: bool) -> bool:
    """Compare two ok outcomes: sequence equality when ordered, multiset
    equality otherwise; numbers at relative tolerance 1e-6, text exactly."""
    if a.status != "ok" or b.status != "ok":
        raise ValueError("results_match requires both outcomes to be ok")
    if a.truncated or b.truncated:
        raise IndeterminateComparison("result sets truncated at the row cap")
    if len(a.rows) != len(b.rows):
        return False
    ra, rb = a.rows, b.rows
    if not ordered:
        ra = sorted(ra, key=_sort_key)
        rb = sorted(rb, key=_sort_key)
    return all(_rows_close(x, y) for x, y in zip(ra, rb))
