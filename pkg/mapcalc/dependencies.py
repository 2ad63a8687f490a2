from pathlib import Path
from typing import Optional
import logging

from .store import ReportStore, InMemoryReportStore, FileReportStore
from .config import get_settings

logger = logging.getLogger(__name__)

_report_store: Optional[ReportStore] = None


def init_report_store(
    output_dir: Optional[Path] = None,
    in_memory: bool = False,
    write_csv: bool = True,
) -> ReportStore:
    """
    Initialize the report store.

    The file backend writes under ``output_dir`` or, failing that, the
    directory named by MAPCALC_OUTPUT_DIR. Singleton per process.
    """
    global _report_store
    if _report_store is None:
        if in_memory:
            logger.info("Initializing in-memory report store")
            _report_store = InMemoryReportStore()
        else:
            directory = Path(output_dir) if output_dir is not None else get_settings().output_dir
            _report_store = FileReportStore(directory, write_csv=write_csv)
    return _report_store


def get_report_store() -> ReportStore:
    """Get the global report store instance."""
    return init_report_store()


def reset_report_store() -> None:
    """Drop the singleton so the next init picks up a new backend."""
    global _report_store
    _report_store = None
