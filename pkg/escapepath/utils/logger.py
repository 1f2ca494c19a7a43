"""Logging configuration for the escapepath library."""
import logging
import logging.handlers
import os
from datetime import datetime
from typing import Any, Dict, Optional, Tuple

from dotenv import load_dotenv

from .summarize import DefaultStateSummarizer

CONSOLE_LOGGER = 'escapepath_console'
FILE_LOGGER = 'escapepath_file'


class SolverFormatter(logging.Formatter):
    """Formatter that expands solver payloads attached through ``extra``."""

    def format_solver_message(self, record: logging.LogRecord, basic_message: str) -> str:
        data: Dict[str, Any] = DefaultStateSummarizer().summarize(record.solver_data)
        formatted_parts = [basic_message]
        for key, value in data.items():
            if isinstance(value, float):
                formatted_parts.append(f"    {key}: {value:.6e}")
            else:
                formatted_parts.append(f"    {key}: {value}")
        return "\n".join(formatted_parts)

    def format(self, record: logging.LogRecord) -> str:
        basic_message = super().format(record)
        if hasattr(record, 'solver_data'):
            return self.format_solver_message(record, basic_message)
        return basic_message


class UserMessageFilter(logging.Filter):
    """Keeps solver payloads and sub-INFO records off the terminal."""

    def filter(self, record: logging.LogRecord) -> bool:
        if record.levelno < logging.INFO:
            return False
        if hasattr(record, 'solver_data'):
            return False
        return True


def _resolve_log_dir(log_dir: Optional[str]) -> str:
    if log_dir:
        return log_dir
    load_dotenv()
    return os.getenv("ESCAPEPATH_LOG_DIR", "logs")


def setup_logger(log_dir: Optional[str] = None) -> Tuple[logging.Logger, logging.Logger]:
    """
    Set up console and file loggers.

    Args:
        log_dir: Directory for the rotating log file. Falls back to the
            ``ESCAPEPATH_LOG_DIR`` environment variable, then ``logs``.

    Returns:
        Tuple of (console_logger, file_logger)
    """
    console_log = logging.getLogger(CONSOLE_LOGGER)
    if not console_log.handlers:  # Only add handler if none exists
        console_log.setLevel(logging.INFO)
        console_handler = logging.StreamHandler()
        console_handler.setLevel(logging.INFO)
        console_handler.setFormatter(logging.Formatter('%(message)s'))
        console_handler.addFilter(UserMessageFilter())
        console_log.addHandler(console_handler)
        console_log.propagate = False

    file_log = logging.getLogger(FILE_LOGGER)
    if not file_log.handlers:
        directory = _resolve_log_dir(log_dir)
        if not os.path.exists(directory):
            os.makedirs(directory)
        log_file = os.path.join(directory, f"escapepath_{datetime.now().strftime('%Y%m%d')}.log")
        file_handler = logging.handlers.RotatingFileHandler(
            log_file,
            maxBytes=10 * 1024 * 1024,  # 10MB
            backupCount=5,
            encoding='utf-8'
        )
        file_handler.setLevel(logging.DEBUG)
        file_handler.setFormatter(SolverFormatter(
            '%(asctime)s - %(levelname)s - [%(filename)s:%(lineno)d][%(funcName)s] - %(message)s',
            datefmt='%Y-%m-%d %H:%M:%S'
        ))
        file_log.setLevel(logging.DEBUG)
        file_log.addHandler(file_handler)
        file_log.propagate = False

    return console_log, file_log
