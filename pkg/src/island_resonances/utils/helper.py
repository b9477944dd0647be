import functools
import logging
import time

from tqdm import tqdm

logger = logging.getLogger(__name__)


def timer_func(func):
    # Logs the execution time of the wrapped function
    @functools.wraps(func)
    def wrap_func(*args, **kwargs):
        t1 = time.time()
        result = func(*args, **kwargs)
        t2 = time.time()
        logger.info(f"Function {func.__name__!r} executed in {(t2-t1):.4f}s")
        return result

    return wrap_func


def progress(iterable, desc, total=None):
    """Tqdm wrapper used for the sweeps (h, delta, theta, contour refinement)."""
    return tqdm(iterable, desc=desc, total=total, leave=False, disable=not logger.isEnabledFor(logging.INFO))


if __name__ == "__main__":
    pass
