"""Fixture corpus verification: content hashes, SQL validity, stream checks."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

from .dataset_io import ValidationError, load_task_stream
from .executor import SqlExecutor
from .skeleton import SqlParseError, tokenize, _validate

FIXTURES_ROOT = Path(__file__).resolve().parents[2] / "fixtures"


def verify_fixtures(root: Path | None = None) -> dict:
    """Check every fixture against the manifest and validate the stream.

    Returns {"ok": bool, "failures": [...], "files_checked": int}.
    """
    root = Path(root) if root else FIXTURES_ROOT
    failures: list[str] = []
    manifest_path = root / "manifest.json"
    if not manifest_path.exists():
        return {"ok": False, "failures": [f"missing manifest: {manifest_path}"],
                "files_checked": 0}
    manifest = json.loads(manifest_path.read_text())

    for rel, expected in sorted(manifest.items()):
        path = root / rel
        if not path.exists():
            failures.append(f"missing fixture file: {rel}")
            continue
        actual = hashlib.sha256(path.read_bytes()).hexdigest()
        if actual != expected:
            failures.append(f"hash mismatch: {rel}")
    extra = {str(p.relative_to(root)) for p in root.rglob("*") if p.is_file()} \
        - set(manifest) - {"manifest.json"}
    for rel in sorted(extra):
        failures.append(f"untracked fixture file: {rel}")

    try:
        stream = load_task_stream(root / "stream.json")
    except (ValidationError, FileNotFoundError) as e:
        failures.append(f"stream validation failed: {e}")
        return {"ok": False, "failures": failures, "files_checked": len(manifest)}

    executor = SqlExecutor(stream.db_dir)
    for task in stream.tasks:
        for sample in task.train + task.dev + task.test:
            try:
                _validate(tokenize(sample.sql), sample.sql)
            except SqlParseError as e:
                failures.append(f"{task.task_id}: unparseable SQL {sample.sql!r}: {e}")
                continue
            outcome = executor.execute(sample.db_id, sample.sql)
            if outcome.status != "ok":
                failures.append(f"{task.task_id}: SQL failed to execute "
                                f"{sample.sql!r}: {outcome.error_message}")
    return {"ok": not failures, "failures": failures, "files_checked": len(manifest)}
