from abc import ABC, abstractmethod
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence
import csv
import json
import logging

import numpy as np
from tenacity import (
    retry,
    stop_after_attempt,
    wait_exponential,
    retry_if_exception_type,
    before_sleep_log,
)

from .schemas import Report

logger = logging.getLogger(__name__)


retry_io = retry(
    stop=stop_after_attempt(3),
    wait=wait_exponential(multiplier=0.1, min=0.1, max=2),
    retry=retry_if_exception_type(OSError),
    before_sleep=before_sleep_log(logger, logging.WARNING),
    reraise=True,
)


def _canonical_json(report: Report) -> str:
    return json.dumps(report.model_dump(mode="json"), sort_keys=True, indent=2) + "\n"


class ReportStore(ABC):
    """Abstract base class for report storage backends."""

    @abstractmethod
    def put(self, report: Report, rows: Optional[Sequence[Dict[str, Any]]] = None) -> None:
        """Store a report, optionally with a table of plot rows."""
        pass

    @abstractmethod
    def get(self, command: str) -> Optional[Report]:
        """Retrieve the latest report of a command."""
        pass

    @abstractmethod
    def rows(self, command: str) -> Optional[List[Dict[str, Any]]]:
        """Retrieve the plot rows stored with a command's report."""
        pass


class InMemoryReportStore(ReportStore):
    """In-memory report storage, used by tests and sweeps."""

    def __init__(self) -> None:
        self._reports: Dict[str, Report] = {}
        self._rows: Dict[str, List[Dict[str, Any]]] = {}
        logger.debug("Initialized InMemoryReportStore")

    def put(self, report: Report, rows: Optional[Sequence[Dict[str, Any]]] = None) -> None:
        self._reports[report.command] = report
        if rows is not None:
            self._rows[report.command] = [dict(r) for r in rows]

    def get(self, command: str) -> Optional[Report]:
        return self._reports.get(command)

    def rows(self, command: str) -> Optional[List[Dict[str, Any]]]:
        return self._rows.get(command)


class FileReportStore(ReportStore):
    """
    Report storage on disk: ``<dir>/<command>.json`` plus ``<dir>/<command>.csv``.

    JSON is written with sorted keys so that reruns differ only in ``created_at``.
    """

    def __init__(self, directory: Path, write_csv: bool = True) -> None:
        self.directory = Path(directory)
        self.write_csv = write_csv
        self.directory.mkdir(parents=True, exist_ok=True)
        logger.info("Initialized FileReportStore", extra={"output_dir": str(self.directory)})

    def _json_path(self, command: str) -> Path:
        return self.directory / f"{command}.json"

    def _csv_path(self, command: str) -> Path:
        return self.directory / f"{command}.csv"

    @retry_io
    def _write_text(self, path: Path, text: str) -> None:
        tmp = path.with_suffix(path.suffix + ".tmp")
        tmp.write_text(text, encoding="utf-8")
        tmp.replace(path)

    @retry_io
    def _write_rows(self, path: Path, rows: Sequence[Dict[str, Any]]) -> None:
        fieldnames: List[str] = []
        for row in rows:
            for key in row:
                if key not in fieldnames:
                    fieldnames.append(key)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=fieldnames)
            writer.writeheader()
            for row in rows:
                writer.writerow(row)

    def put(self, report: Report, rows: Optional[Sequence[Dict[str, Any]]] = None) -> None:
        try:
            self._write_text(self._json_path(report.command), _canonical_json(report))
            if rows and self.write_csv:
                self._write_rows(self._csv_path(report.command), rows)
            logger.info(
                "Report written",
                extra={"command": report.command, "passed": report.passed, "rows": len(rows or [])},
            )
        except OSError as e:
            logger.error(
                f"Failed to write report: {str(e)}",
                extra={"command": report.command, "error": str(e)},
                exc_info=True,
            )
            raise

    def get(self, command: str) -> Optional[Report]:
        path = self._json_path(command)
        if not path.exists():
            logger.debug("Report not found", extra={"command": command})
            return None
        return Report.model_validate_json(path.read_text(encoding="utf-8"))

    def rows(self, command: str) -> Optional[List[Dict[str, Any]]]:
        path = self._csv_path(command)
        if not path.exists():
            return None
        with open(path, newline="", encoding="utf-8") as fh:
            return list(csv.DictReader(fh))


@retry_io
def save_arrays(path: Path, **arrays: Any) -> None:
    """Write a compressed .npz checkpoint, retried on transient OSError."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        np.savez_compressed(fh, **arrays)
