"""
Tests for the report stores and the global store singleton.
"""

import json

import numpy as np
import pytest

from mapcalc.dependencies import get_report_store, init_report_store, reset_report_store
from mapcalc.schemas import CheckResult, Report
from mapcalc.store import FileReportStore, InMemoryReportStore, retry_io, save_arrays


def _report(command="geometry", value=1e-12):
    return Report(
        command=command,
        config={"manifold": {"preset": "cigar"}},
        tolerances={"spd_eps": 1e-10},
        checks=[CheckResult.at_most("metric_symmetry", value, 1e-10, h=0.125)],
    )


class TestInMemoryReportStore:
    """Test the InMemoryReportStore functionality."""

    def test_put_and_get_report(self):
        """Test storing and retrieving a report."""
        store = InMemoryReportStore()
        report = _report()
        store.put(report, rows=[{"h": 0.125, "err": 1e-3}])

        retrieved = store.get("geometry")

        assert retrieved is not None
        assert retrieved.command == "geometry"
        assert retrieved.checks[0].name == "metric_symmetry"
        assert store.rows("geometry") == [{"h": 0.125, "err": 1e-3}]

    def test_get_nonexistent_report(self):
        """Test retrieving a report that doesn't exist."""
        store = InMemoryReportStore()
        assert store.get("flow") is None
        assert store.rows("flow") is None

    def test_update_report(self):
        """Test that a rerun replaces the stored report."""
        store = InMemoryReportStore()
        store.put(_report(value=1e-12))
        store.put(_report(value=1.0))
        assert not store.get("geometry").passed

    def test_rows_are_copied(self):
        """Test that later edits to the caller's rows are not seen by the store."""
        store = InMemoryReportStore()
        rows = [{"iter": 0}]
        store.put(_report(), rows=rows)
        rows[0]["iter"] = 99
        assert store.rows("geometry") == [{"iter": 0}]


class TestFileReportStore:
    """Test report files on disk."""

    def test_put_writes_json_and_csv(self, tmp_path):
        """Test <command>.json and <command>.csv."""
        store = FileReportStore(tmp_path)
        store.put(_report(), rows=[{"h": 0.25, "err": 0.5}, {"h": 0.125, "err": 0.125}])

        assert (tmp_path / "geometry.json").exists()
        assert store.rows("geometry") == [{"h": "0.25", "err": "0.5"}, {"h": "0.125", "err": "0.125"}]

    def test_round_trip(self, tmp_path):
        """Test that a stored report validates back unchanged."""
        store = FileReportStore(tmp_path)
        report = _report()
        store.put(report)
        assert store.get("geometry") == report

    def test_json_is_canonical(self, tmp_path):
        """Test sorted keys so reruns differ only in created_at."""
        store = FileReportStore(tmp_path)
        store.put(_report())
        text = (tmp_path / "geometry.json").read_text()
        keys = list(json.loads(text).keys())
        assert keys == sorted(keys)
        assert text.endswith("\n")

    def test_csv_disabled(self, tmp_path):
        """Test that write_csv=False skips the table."""
        store = FileReportStore(tmp_path, write_csv=False)
        store.put(_report(), rows=[{"h": 0.25}])
        assert store.rows("geometry") is None

    def test_rows_with_uneven_columns(self, tmp_path):
        """Test that the header is the union of the row keys."""
        store = FileReportStore(tmp_path)
        store.put(_report(), rows=[{"a": 1}, {"a": 2, "b": 3}])
        assert store.rows("geometry") == [{"a": "1", "b": ""}, {"a": "2", "b": "3"}]

    def test_missing_report(self, tmp_path):
        """Test that an unknown command returns None."""
        assert FileReportStore(tmp_path).get("stress") is None

    def test_creates_directory(self, tmp_path):
        """Test that the output directory is created."""
        FileReportStore(tmp_path / "nested" / "out")
        assert (tmp_path / "nested" / "out").is_dir()


class TestRetry:
    """Test retries on transient I/O errors."""

    def test_retries_os_error(self):
        """Test that an OSError is retried and the call then succeeds."""
        calls = []

        @retry_io
        def flaky():
            calls.append(1)
            if len(calls) < 2:
                raise OSError("busy")
            return "ok"

        assert flaky() == "ok"
        assert len(calls) == 2

    def test_exhausts_retries(self):
        """Test that the original error is reraised after three attempts."""
        calls = []

        @retry_io
        def broken():
            calls.append(1)
            raise OSError("disk full")

        with pytest.raises(OSError):
            broken()
        assert len(calls) == 3

    def test_other_errors_not_retried(self):
        """Test that non-I/O errors propagate at once."""
        calls = []

        @retry_io
        def wrong():
            calls.append(1)
            raise ValueError("bad")

        with pytest.raises(ValueError):
            wrong()
        assert len(calls) == 1

    def test_file_store_write_failure(self, tmp_path, mocker):
        """Test that a persistent write failure surfaces from put."""
        store = FileReportStore(tmp_path)
        mocker.patch("pathlib.Path.replace", side_effect=OSError("read-only"))
        with pytest.raises(OSError):
            store.put(_report())


class TestSaveArrays:
    """Test compressed checkpoints."""

    def test_writes_npz(self, tmp_path):
        """Test that arrays come back from the exact path."""
        path = tmp_path / "ckpt" / "flow.npz"
        save_arrays(path, deviation=np.arange(6.0).reshape(3, 2), iteration=np.array(4))
        with np.load(path) as data:
            assert data["deviation"][2, 1] == 5.0
            assert int(data["iteration"]) == 4


class TestGlobalStore:
    """Test the report store singleton."""

    def test_in_memory(self):
        """Test that the in-memory backend is installed once."""
        store = init_report_store(in_memory=True)
        assert isinstance(store, InMemoryReportStore)
        assert get_report_store() is store

    def test_file_store_from_settings(self, output_dir):
        """Test that the file backend defaults to MAPCALC_OUTPUT_DIR."""
        store = get_report_store()
        assert isinstance(store, FileReportStore)
        assert store.directory == output_dir

    def test_reset(self, tmp_path):
        """Test that reset lets the next init pick another backend."""
        init_report_store(in_memory=True)
        reset_report_store()
        assert isinstance(init_report_store(output_dir=tmp_path), FileReportStore)
