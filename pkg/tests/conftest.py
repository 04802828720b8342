import pytest

from sqlmemo.dataset_io import ArtifactStore, load_task_stream
from sqlmemo.executor import SqlExecutor
from sqlmemo.fixtures import FIXTURES_ROOT


@pytest.fixture(scope="session")
def stream():
    return load_task_stream(FIXTURES_ROOT / "stream.json")


@pytest.fixture(scope="session")
def executor(stream):
    return SqlExecutor(stream.db_dir)


@pytest.fixture(scope="session")
def concert_schema(stream):
    return stream.schemas["concert_hall"]


@pytest.fixture
def store(tmp_path, stream):
    s = ArtifactStore(tmp_path / "store")
    s.register_schemas(stream.schemas)
    return s


@pytest.fixture(scope="session")
def corpus(stream):
    """Every (sample, schema) pair in the fixture stream."""
    out = []
    for task in stream.tasks:
        for sample in task.train + task.dev + task.test:
            out.append((sample, stream.schemas[sample.db_id]))
    return out


@pytest.fixture(scope="session")
def mock_script_path():
    return FIXTURES_ROOT / "mock_scripts" / "e2e.jsonl"
