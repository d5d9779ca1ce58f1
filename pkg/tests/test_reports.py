import json
import threading

import numpy as np

from concentration import BoundKind
from estimates import MCEstimate
from parallel import TaskPool, chunk_ranges
from reports import config_hash, dumps, to_jsonable, write_csv, write_json


class TestJson:
    def test_nested_values(self):
        data = {
            "estimate": MCEstimate.build(0.5, 0.01, 100),
            "kind": BoundKind.BASIC,
            "array": np.array([1.0, 2.0]),
            "phi": complex(0.25, -1.0),
            "flag": np.bool_(True),
            "count": np.int64(7),
        }
        out = to_jsonable(data)
        assert out["estimate"]["mean"] == 0.5
        assert out["kind"] == "basic"
        assert out["array"] == [1.0, 2.0]
        assert out["phi"] == {"re": 0.25, "im": -1.0}
        assert out["flag"] is True
        assert out["count"] == 7

    def test_keys_are_sorted(self):
        text = dumps({"b": 1, "a": {"d": 2, "c": 3}})
        assert text.index('"a"') < text.index('"b"')
        assert text.index('"c"') < text.index('"d"')
        assert text.endswith("\n")

    def test_floats_round_trip(self):
        value = 0.1 + 0.2
        assert json.loads(dumps({"v": value}))["v"] == value

    def test_write_json_file(self, tmp_path):
        path = tmp_path / "out" / "report.json"
        text = write_json({"passed": True}, str(path))
        assert path.read_text() == text


class TestConfigHash:
    def test_stable_under_key_order(self):
        assert config_hash({"a": 1, "b": [1, 2]}) == config_hash({"b": [1, 2], "a": 1})

    def test_sensitive_to_values(self):
        assert config_hash({"seed": 1}) != config_hash({"seed": 2})
        assert len(config_hash({})) == 64


class TestCsv:
    def test_header_and_cells(self):
        rows = [{"x": 1.5, "phi": complex(1.0, -0.5), "extra": "dropped"}, {"x": 2.0}]
        text = write_csv(rows, ["x", "phi"])
        lines = text.splitlines()
        assert lines[0] == "x,phi"
        assert lines[1] == "1.5,1.0-0.5j"
        assert lines[2] == "2.0,"


class TestTaskPool:
    def test_results_keep_task_order(self):
        pool = TaskPool(4)
        assert pool.map(lambda k: k * k, range(20)) == [k * k for k in range(20)]
        assert pool.tasks_run == 20

    def test_runs_on_several_threads(self):
        seen = set()
        barrier = threading.Barrier(2, timeout=5)

        def task(_):
            seen.add(threading.get_ident())
            barrier.wait()

        TaskPool(2).map(task, range(2))
        assert len(seen) == 2

    def test_chunks_cover_range(self):
        chunks = chunk_ranges(10, 4)
        assert [list(c) for c in chunks] == [[0, 1, 2, 3], [4, 5, 6, 7], [8, 9]]
        assert chunk_ranges(0, 4) == []


def test_csv_metadata_line():
    text = write_csv([{"x": 1.0}], ["x"], metadata={"seed": 3, "command": "herbst", "passed": False})
    lines = text.splitlines()
    assert lines[0] == "# command=herbst passed=False seed=3"
    assert lines[1:] == ["x", "1.0"]
