# ------------------------------------------------------------------------------------
# 🪵 logging_utils.py – One Logger for the Whole Simulator
#
# ✅ setup_logger() – `burst_sim` logger on standard error, optional per-run log file
# ✅ log_info() / log_success() / log_warning() / log_error() / log_debug() – emoji-tagged lines
# ✅ log_event_summary() / log_pair_stats() – one-line run summaries
#
# Standard output is left to the CLI tables; every log line goes to standard error.
#
# Project: Burst Sim – Correlated Charge-Burst Simulator
# ------------------------------------------------------------------------------------

import logging
import os
import sys
from pathlib import Path
from typing import Optional

LOGGER_NAME = "burst_sim"
LOG_FORMAT = "%(asctime)s | %(name)s | %(levelname)s | %(message)s"
DATE_FORMAT = "%Y-%m-%d %H:%M:%S"

_logger: Optional[logging.Logger] = None


def _resolve_level(level: int | str | None) -> int:
    if level is None:
        level = os.getenv("BURST_SIM_LOG_LEVEL", "INFO")
    if isinstance(level, int):
        return level
    value = logging.getLevelName(str(level).upper())
    return value if isinstance(value, int) else logging.INFO


def _handler(handler: logging.Handler, level: int) -> logging.Handler:
    handler.setLevel(level)
    handler.setFormatter(logging.Formatter(LOG_FORMAT, datefmt=DATE_FORMAT))
    return handler


def setup_logger(
    name: str = LOGGER_NAME,
    log_level: int | str | None = None,
    log_file: Optional[str] = None,
    console_output: bool = True,
    force: bool = False,
) -> logging.Logger:
    """
    Configure the simulator logger once per process.

    The level falls back to BURST_SIM_LOG_LEVEL, then INFO. CLI commands pass force=True so
    each run gets its own log file under <out>/logs/.
    """
    global _logger
    if _logger is not None and not force:
        return _logger

    close_logger()
    level = _resolve_level(log_level)
    logger = logging.getLogger(name)
    logger.setLevel(level)
    logger.propagate = False
    logger.handlers.clear()

    if console_output:
        logger.addHandler(_handler(logging.StreamHandler(sys.stderr), level))
    if log_file:
        Path(log_file).parent.mkdir(parents=True, exist_ok=True)
        logger.addHandler(_handler(logging.FileHandler(log_file, encoding="utf-8"), level))

    _logger = logger
    return logger


def get_logger() -> logging.Logger:
    return _logger if _logger is not None else setup_logger()


def close_logger():
    """Release run log files so a failed run directory can be deleted."""
    if _logger is None:
        return
    for handler in [h for h in _logger.handlers if isinstance(h, logging.FileHandler)]:
        handler.close()
        _logger.removeHandler(handler)


def _emit(level: int, tag: str, message: str, context: str, logger: Optional[logging.Logger]):
    where = f" [{context}]" if context else ""
    (logger or get_logger()).log(level, f"{tag}{where} {message}")


def log_error(error: Exception, context: str = "", logger: Optional[logging.Logger] = None):
    _emit(logging.ERROR, "❌", f"{type(error).__name__}: {error}", context, logger)


def log_warning(message: str, context: str = "", logger: Optional[logging.Logger] = None):
    _emit(logging.WARNING, "⚠️", message, context, logger)


def log_success(message: str, context: str = "", logger: Optional[logging.Logger] = None):
    _emit(logging.INFO, "✅", message, context, logger)


def log_info(message: str, context: str = "", logger: Optional[logging.Logger] = None):
    _emit(logging.INFO, "ℹ️", message, context, logger)


def log_debug(message: str, context: str = "", logger: Optional[logging.Logger] = None):
    _emit(logging.DEBUG, "🔎", message, context, logger)


def log_event_summary(species: str, n_events: int, above_threshold: float,
                      logger: Optional[logging.Logger] = None):
    _emit(logging.INFO, "📊", f"{species}: {n_events} events, above-threshold fraction {above_threshold:.3f}",
          "events", logger)


def log_pair_stats(pair: str, separation_um: float, p_corr: float, asym_1324: float,
                   logger: Optional[logging.Logger] = None):
    _emit(logging.INFO, "🔗", f"{pair} at {separation_um:.0f} µm: p_corr {p_corr:.3f}, 13/24 {asym_1324:+.3f}",
          "pairs", logger)
