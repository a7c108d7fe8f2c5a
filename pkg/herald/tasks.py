# herald/tasks.py

import logging
from concurrent.futures import ProcessPoolExecutor

from .conf import get_setting

# Get a logger instance for this task file
logger = logging.getLogger(__name__)


def worker_count(requested=None):
    """Worker cap: explicit request, else ``HERALD_SIM_THREADS``; never below 1."""
    count = requested if requested is not None else get_setting("THREADS")
    return max(1, int(count))


def map_grid(func, points, threads=None, name=None):
    """
    Evaluates ``func`` on every grid point and returns results in input order.

    Grid points are independent, so they may run on a process pool; with a
    single worker the evaluation stays inline. Pooled work needs a picklable
    ``func`` (a module-level function or a ``functools.partial`` of one).
    """
    points = list(points)
    workers = min(worker_count(threads), max(1, len(points)))
    name = name or getattr(func, "__name__", "grid")
    logger.info(f"Starting '{name}' over {len(points)} grid points with {workers} worker(s).")

    try:
        if workers == 1:
            results = [func(point) for point in points]
        else:
            chunksize = max(1, len(points) // (4 * workers))
            with ProcessPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(func, points, chunksize=chunksize))
    except Exception as e:
        logger.error(
            f"An unexpected error occurred in grid task '{name}': {e}",
            exc_info=True,
        )
        raise

    logger.info(f"Finished '{name}': {len(results)} results.")
    return results
