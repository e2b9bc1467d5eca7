"""Various helper functions implemented by broadwell."""
import csv
import functools
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Callable, Iterable, List, Optional, Sequence, TypeVar

logger = logging.getLogger(__name__)

THREADS_ENV = "BROADWELL_THREADS"

T = TypeVar("T")


def setup_logger(level: int = logging.ERROR, log_filename: Optional[str] = None) -> None:
    """Create a configured instance of logger.

    :param int level:
        Describe the severity level of the logs to handle.
    :param str log_filename:
        (Optional) Also write log records to this file.
    """
    fmt = "[%(asctime)s] %(levelname)s in %(module)s: %(message)s"
    date_fmt = "%H:%M:%S"
    formatter = logging.Formatter(fmt, datefmt=date_fmt)

    logger = logging.getLogger("broadwell")
    logger.setLevel(level)

    stream_handler = logging.StreamHandler()
    stream_handler.setFormatter(formatter)
    logger.addHandler(stream_handler)

    if log_filename is not None:
        file_handler = logging.FileHandler(log_filename)
        file_handler.setFormatter(formatter)
        logger.addHandler(file_handler)


def target_directory(output_path: Optional[str] = None) -> str:
    """
    Function for determining the output directory of a run.
    Returns an absolute path (if relative one given) or the current
    path (if none given). Makes directory if it does not exist.

    :type output_path: str
        :rtype: str
    :returns:
        An absolute directory path as a string.
    """
    if output_path:
        if not os.path.isabs(output_path):
            output_path = os.path.join(os.getcwd(), output_path)
    else:
        output_path = os.getcwd()
    os.makedirs(output_path, exist_ok=True)
    return output_path


def worker_count() -> int:
    """Number of worker threads allowed for data-parallel loops.

    Reads ``BROADWELL_THREADS``; unset or malformed values fall back to the
    cpu count.

    :rtype: int
    """
    raw = os.environ.get(THREADS_ENV)
    if raw:
        try:
            value = int(raw)
        except ValueError:
            logger.warning("ignoring non-integer %s=%r", THREADS_ENV, raw)
        else:
            if value >= 1:
                return value
            logger.warning("ignoring non-positive %s=%r", THREADS_ENV, raw)
    return os.cpu_count() or 1


@functools.lru_cache(maxsize=None)
def _executor(workers: int) -> ThreadPoolExecutor:
    logger.debug("starting a pool of %d worker threads", workers)
    return ThreadPoolExecutor(max_workers=workers, thread_name_prefix="broadwell")


def map_species(func: Callable[[int], T], count: int) -> List[T]:
    """Evaluate ``func(i)`` for ``i in range(count)``.

    Work is spread over at most :func:`worker_count` threads of a pool that
    lives for the rest of the process (one pool per worker count). Results
    come back in index order, so callers that write disjoint slices get the
    same bits whatever the worker count is.

    :param func:
        Per-species work item.
    :param int count:
        Number of species.
    :rtype: list
    """
    workers = worker_count()
    if min(workers, count) <= 1:
        return [func(i) for i in range(count)]
    return list(_executor(workers).map(func, range(count)))


def write_csv(path: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    """Write rows to a UTF-8 csv file with LF line endings.

    Floats are written with ``repr`` so values survive a round trip.

    :param str path:
        Destination file.
    :param header:
        Column names.
    :param rows:
        Row tuples.
    :rtype: str
    :returns:
        The path written.
    """
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_format_cell(value) for value in row])
    logger.debug("wrote %s", path)
    return path


def _format_cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        # float() strips numpy scalar reprs such as np.float64(...)
        return repr(float(value))
    return str(value)
