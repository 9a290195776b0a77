from __future__ import annotations

import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Callable, Iterable, List, Optional, TypeVar, Union

import numpy as np
import pandas as pd

from ballprob.configure import thread_count_from_env

log = logging.getLogger("BP.utils")

T = TypeVar("T")
R = TypeVar("R")

FLOAT_FORMAT = "%.17g"


def set_logger_level(logger, log_level, include_handlers=False):
    if log_level is None:
        logger.error("Failed to set log_level to None.")
    elif log_level not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL", 10, 20, 30, 40, 50):
        logger.error(
            f"Failed to set log_level to {log_level}."
            "Please specify a valid log level from: "
            "'DEBUG', 'INFO', 'WARNING', 'ERROR' or 'CRITICAL'"
        )
    else:
        logger.setLevel(log_level)
        if include_handlers:
            for h in logger.handlers:
                h.setLevel(log_level)
        logger.debug(f"Set log level to {log_level}")


def set_log_level(log_level: str = "INFO", include_handlers: bool = False):
    """Set the log level of all logger objects

    Parameters
    ----------
        log_level : str
            The log level of the logger objects used for printing procedure status
            updates for debugging/monitoring. Should be one of ``NOTSET``, ``DEBUG``, ``INFO``, ``WARNING``,
            ``ERROR`` or ``CRITICAL``
        include_handlers : bool
            Include any specified file/stream handlers

    Example
    -------
    >>> from ballprob import set_log_level
    >>> set_log_level("ERROR")
    """
    set_logger_level(logging.getLogger("BP"), log_level, include_handlers)


def parallel_map(func: Callable[[T], R], items: Iterable[T], threads: Optional[int] = None) -> List[R]:
    """Apply ``func`` to every item, preserving input order.

    numpy and scipy release the GIL in the heavy kernels, so a thread pool scales the sweeps.
    """
    items = list(items)
    threads = threads or thread_count_from_env()
    if threads <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=min(threads, len(items))) as pool:
        return list(pool.map(func, items))


def _format_value(value: Any) -> str:
    if value is None:
        return "null"
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return "NaN"
        if math.isinf(value):
            return "Infinity" if value > 0 else "-Infinity"
        return format(value, ".17g")
    if isinstance(value, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {_format_value(v)}" for k, v in value.items()) + "}"
    if isinstance(value, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_format_value(v) for v in value) + "]"
    return json.dumps(str(value))


def dumps(record: Any) -> str:
    """JSON text with every float written to 17 significant digits."""
    return _format_value(record)


def write_records(records: Iterable[dict], out: Optional[Union[str, os.PathLike]] = None) -> str:
    """Emit records as JSON lines to ``out`` (or return the text when ``out`` is None)."""
    text = "".join(dumps(r) + "\n" for r in records)
    if out is not None:
        with open(out, "w", encoding="utf-8") as f:
            f.write(text)
    return text


def write_frame(df: pd.DataFrame, out: Optional[Union[str, os.PathLike]] = None) -> str:
    """CSV text of ``df`` with full float precision, written to ``out`` when given."""
    text = df.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    if out is not None:
        with open(out, "w", encoding="utf-8") as f:
            f.write(text)
    return text


def load_json(source: Union[str, os.PathLike]) -> Any:
    """Parse ``source`` as inline JSON text, or as a path to a JSON file."""
    text = str(source).strip()
    if text.startswith(("{", "[")):
        return json.loads(text)
    with open(source, "r", encoding="utf-8") as f:
        return json.load(f)
