"""
Logging and Error Tracking

Structured logging for command runs:
- JSON log files with the fields passed through `extra`
- Rotating run log and error-only log
- Error counters embedded in run summaries

Console output goes to stderr; stdout is reserved for the tables commands print.

Usage:
    from src.docre.monitoring.error_tracking import setup_logging

    setup_logging(log_dir="logs", log_level="INFO")
    logger = logging.getLogger(__name__)
    logger.info("Corpus parsed", extra={"documents": 499})
"""
import json
import logging
import sys
import threading
import traceback
from datetime import datetime, timezone
from logging.handlers import RotatingFileHandler
from pathlib import Path
from typing import Any, Dict, Optional

from src.docre.constants import DEFAULT_LOG_DIR, DEFAULT_LOG_LEVEL

# Attributes every LogRecord has; anything else came in through `extra`
_RESERVED = set(vars(logging.LogRecord("", 0, "", 0, "", (), None))) | {"message", "asctime"}


class JSONFormatter(logging.Formatter):
    """One JSON object per log record"""

    def format(self, record: logging.LogRecord) -> str:
        log_data = {
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "level": record.levelname,
            "logger": record.name,
            "message": record.getMessage(),
            "function": record.funcName,
            "line": record.lineno,
        }

        if record.exc_info:
            log_data["exception"] = {
                "type": record.exc_info[0].__name__,
                "message": str(record.exc_info[1]),
                "traceback": traceback.format_exception(*record.exc_info),
            }

        if isinstance(getattr(record, "extra_data", None), dict):
            log_data.update(record.extra_data)
        for key, value in vars(record).items():
            if key not in _RESERVED and key != "extra_data" and key not in log_data:
                log_data[key] = value

        return json.dumps(log_data, default=str, ensure_ascii=False)


class RunContextFilter(logging.Filter):
    """Stamp every record with the id of the command run that produced it"""

    def __init__(self, run_id: Optional[str] = None):
        super().__init__()
        self.run_id = run_id

    def filter(self, record: logging.LogRecord) -> bool:
        if not hasattr(record, "run_id"):
            record.run_id = self.run_id
        return True


class ErrorRateTracker:
    """Counters of log records by level and exception type"""

    def __init__(self):
        self._lock = threading.Lock()
        self.error_counts = {"CRITICAL": 0, "ERROR": 0, "WARNING": 0, "INFO": 0, "DEBUG": 0}
        self.error_types: Dict[str, int] = {}
        self.start_time = datetime.now(timezone.utc)

    def record_error(self, level: str, error_type: Optional[str] = None):
        with self._lock:
            if level in self.error_counts:
                self.error_counts[level] += 1
            if error_type:
                self.error_types[error_type] = self.error_types.get(error_type, 0) + 1

    def get_stats(self) -> Dict[str, Any]:
        with self._lock:
            return {
                "error_counts": dict(self.error_counts),
                "error_types": dict(self.error_types),
                "warnings_and_errors": self.error_counts["WARNING"]
                + self.error_counts["ERROR"]
                + self.error_counts["CRITICAL"],
                "start_time": self.start_time.isoformat(),
            }

    def reset(self):
        with self._lock:
            self.error_counts = {k: 0 for k in self.error_counts}
            self.error_types.clear()
            self.start_time = datetime.now(timezone.utc)


_error_tracker = ErrorRateTracker()


def get_error_tracker() -> ErrorRateTracker:
    """Process-wide error tracker"""
    return _error_tracker


class ErrorTrackingHandler(logging.Handler):
    """Feeds every record into the error tracker"""

    def emit(self, record: logging.LogRecord):
        try:
            exc_type = record.exc_info[0].__name__ if record.exc_info else getattr(record, "exception_type", None)
            get_error_tracker().record_error(level=record.levelname, error_type=exc_type)
        except Exception:
            # Tracking must never break logging
            pass


def setup_logging(
    log_dir: Optional[str] = DEFAULT_LOG_DIR,
    log_level: str = DEFAULT_LOG_LEVEL,
    max_bytes: int = 10 * 1024 * 1024,
    backup_count: int = 5,
    json_format: bool = True,
    console_output: bool = True,
    run_id: Optional[str] = None,
) -> logging.Logger:
    """
    Configure the root logger

    Args:
        log_dir: Directory for docre.log / errors.log; None disables file logging
        log_level: Minimum level (DEBUG, INFO, WARNING, ERROR, CRITICAL)
        json_format: JSON lines in log files instead of plain text
        console_output: Also log to stderr
        run_id: Stamped on every record

    Returns:
        Configured root logger
    """
    level = getattr(logging, log_level.upper())
    text_format = logging.Formatter("%(asctime)s - %(name)s - %(levelname)s - %(message)s")

    logger = logging.getLogger()
    logger.setLevel(level)
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
        handler.close()
    for existing in list(logger.filters):
        logger.removeFilter(existing)

    context_filter = RunContextFilter(run_id)

    if log_dir:
        log_path = Path(log_dir)
        log_path.mkdir(exist_ok=True, parents=True)

        file_handler = RotatingFileHandler(
            log_path / "docre.log", maxBytes=max_bytes, backupCount=backup_count, encoding="utf-8"
        )
        file_handler.setLevel(level)
        file_handler.setFormatter(JSONFormatter() if json_format else text_format)
        file_handler.addFilter(context_filter)
        logger.addHandler(file_handler)

        error_handler = RotatingFileHandler(
            log_path / "errors.log", maxBytes=max_bytes, backupCount=backup_count, encoding="utf-8"
        )
        error_handler.setLevel(logging.ERROR)
        error_handler.setFormatter(JSONFormatter() if json_format else text_format)
        error_handler.addFilter(context_filter)
        logger.addHandler(error_handler)

    if console_output:
        console_handler = logging.StreamHandler(sys.stderr)
        console_handler.setLevel(level)
        console_handler.setFormatter(text_format)
        logger.addHandler(console_handler)

    logger.addHandler(ErrorTrackingHandler())

    logger.info("Logging initialized", extra={
        "log_dir": str(log_dir) if log_dir else None,
        "log_level": log_level,
        "json_format": json_format,
    })
    return logger


def log_exception(
    logger: logging.Logger,
    message: str,
    exc_info: Any = True,
    extra: Optional[Dict[str, Any]] = None,
):
    """Log an exception with context fields"""
    if extra:
        logger.error(message, exc_info=exc_info, extra={"extra_data": extra})
    else:
        logger.error(message, exc_info=exc_info)
