import json
import shutil

import pytest

from sqlmemo.bias import ComponentFeatureSet
from sqlmemo.dataset_io import (ArtifactStore, LeakageError, ValidationError,
                                load_task_stream)
from sqlmemo.fixtures import FIXTURES_ROOT
from sqlmemo.skeleton import SqlSkeleton


def _skel(s):
    return SqlSkeleton.from_string(s)


class TestLoadTaskStream:
    def test_fixture_stream_loads(self, stream):
        assert len(stream.tasks) == 3
        assert stream.order_label == "custom"
        assert [t.task_id for t in stream.tasks] == ["task1", "task2", "task3"]
        for task in stream.tasks:
            assert task.train and task.test

    def test_sample_rows_read_from_database(self, stream):
        schema = stream.schemas["concert_hall"]
        assert schema.sample_rows["singer"][1] == "Rosa Verde"

    def test_missing_config(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_task_stream(tmp_path / "nope.json")

    def test_malformed_json(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        with pytest.raises(ValidationError, match="malformed"):
            load_task_stream(bad)

    def test_empty_task_list(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"tables": "tables.json", "tasks": []}))
        with pytest.raises(ValidationError, match="empty task stream"):
            load_task_stream(cfg)

    def _duplicated_config(self, tmp_path, order):
        """Stream config where two tasks share db concert_hall, in the given
        task order."""
        root = tmp_path / "dup"
        shutil.copytree(FIXTURES_ROOT, root)
        cfg = json.loads((root / "stream.json").read_text())
        # point task2 at task1's sample files (same db_id)
        for entry in cfg["tasks"]:
            if entry["task_id"] == "task2":
                entry["train_path"] = "task1_train.json"
                entry["dev_path"] = "task1_dev.json"
                entry["test_path"] = "task1_test.json"
        cfg["tasks"] = [cfg["tasks"][i] for i in order]
        path = root / "dup.json"
        path.write_text(json.dumps(cfg))
        return path

    def test_duplicate_db_across_tasks_rejected(self, tmp_path):
        with pytest.raises(ValidationError, match="disjointness"):
            load_task_stream(self._duplicated_config(tmp_path, [0, 1, 2]))

    def test_validation_is_order_independent(self, tmp_path):
        # cold-start permutation fires the same violation
        with pytest.raises(ValidationError, match="disjointness"):
            load_task_stream(self._duplicated_config(tmp_path, [2, 1, 0]))

    def test_unknown_db_id_in_sample(self, tmp_path):
        root = tmp_path / "unk"
        shutil.copytree(FIXTURES_ROOT, root)
        samples = json.loads((root / "task1_train.json").read_text())
        samples[0]["db_id"] = "ghost_db"
        (root / "task1_train.json").write_text(json.dumps(samples))
        with pytest.raises(ValidationError, match="ghost_db"):
            load_task_stream(root / "stream.json")


class TestFeatureSetStore:
    def test_round_trip_identity(self, store):
        skels = frozenset(map(_skel, [
            "SELECT [COL] FROM [TAB]",
            "SELECT [COL] FROM [TAB] WHERE [COL] = [VAL]",
            "SELECT COUNT ( * ) FROM [TAB]",
            "SELECT [COL] FROM [TAB] ORDER BY [COL]",
            "SELECT [COL] , [COL] FROM [TAB] GROUP BY [COL]",
        ]))
        fs = ComponentFeatureSet(task_id="t", skeletons=skels, k_used=5)
        store.save_feature_set("t", fs)
        loaded = store.load_feature_set("t")
        assert loaded == fs
        # canonical file: header + one line per skeleton
        lines = store.path_for("t", "feature_set.jsonl").read_text().splitlines()
        assert len(lines) == 6

    def test_save_then_save_round_trips_bytes(self, store):
        fs = ComponentFeatureSet("t", frozenset([_skel("SELECT [COL] FROM [TAB]")]), 1)
        path = store.save_feature_set("t", fs)
        first = path.read_bytes()
        store.save_feature_set("t", store.load_feature_set("t"))
        assert path.read_bytes() == first

    def test_empty_set(self, store):
        fs = ComponentFeatureSet("t", frozenset(), 0)
        store.save_feature_set("t", fs)
        assert store.load_feature_set("t").skeletons == frozenset()

    def test_leakage_rejected(self, store):
        fs = ComponentFeatureSet(
            "t", frozenset([_skel("SELECT [COL] FROM singer")]), 1)
        with pytest.raises(LeakageError, match="singer"):
            store.save_feature_set("t", fs)

    def test_load_before_first_task_empty(self, store):
        assert store.load_feature_sets_before(["a", "b", "c"], 1) == []

    def test_load_before_returns_in_order(self, store):
        for tid, s in [("a", "SELECT [COL] FROM [TAB]"),
                       ("b", "SELECT COUNT ( * ) FROM [TAB]")]:
            store.save_feature_set(tid, ComponentFeatureSet(tid, frozenset([_skel(s)]), 1))
        sets = store.load_feature_sets_before(["a", "b", "c"], 3)
        assert [fs.task_id for fs in sets] == ["a", "b"]

    def test_missing_prior_named(self, store):
        store.save_feature_set("a", ComponentFeatureSet("a", frozenset(), 0))
        store.save_feature_set("c", ComponentFeatureSet("c", frozenset(), 0))
        with pytest.raises(FileNotFoundError, match="'b'"):
            store.load_feature_sets_before(["a", "b", "c"], 4)

    def test_no_replay_scanner_clean(self, store):
        store.save_feature_set("t", ComponentFeatureSet(
            "t", frozenset([_skel("SELECT [COL] FROM [TAB] WHERE [COL] > [VAL]")]), 1))
        assert store.scan_cross_task_state() == []

    def test_no_replay_scanner_flags_injected_leak(self, store, tmp_path):
        store.save_feature_set("t", ComponentFeatureSet("t", frozenset(), 0))
        path = store.path_for("t", "feature_set.jsonl")
        with open(path, "a") as f:
            f.write(json.dumps({"skeleton": "SELECT country FROM [TAB]"}) + "\n")
        violations = store.scan_cross_task_state()
        assert len(violations) == 1 and "country" in violations[0]


class TestGenericArtifacts:
    def test_jsonl_round_trip(self, store):
        records = [{"b": 2, "a": 1}, {"a": 3, "b": 4}]
        store.save_jsonl("t", "x.jsonl", records)
        assert store.load_jsonl("t", "x.jsonl") == records

    def test_json_round_trip(self, store):
        obj = {"nested": {"x": [1, 2.5, "s"]}, "y": None}
        store.save_json("r.json", obj)
        assert store.load_json("r.json") == obj

    def test_missing_artifact_errors(self, store):
        with pytest.raises(FileNotFoundError):
            store.load_jsonl("t", "missing.jsonl")
