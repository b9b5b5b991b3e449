'''

Sample-parallel execution. Work items are independent and each one seeds its own random
stream, so results only depend on the item, never on which worker ran it. pool.map
returns results in submission order, and all reductions happen afterwards in that order,
so any thread count gives the same numbers.

'''

import os

from multiprocessing.pool import ThreadPool


THREADS_ENV_VAR = 'FORMHOM_THREADS'


def resolve_threads(requested=None):
    #explicit request, else the environment variable, else one thread

    value = requested
    if value is None:
        value = os.environ.get(THREADS_ENV_VAR, 1)

    try:
        threads = int(value)
    except (TypeError, ValueError):
        raise ValueError("Thread count must be an integer, got {!r}".format(value))

    if threads < 1:
        raise ValueError("Thread count must be at least 1, got {}".format(threads))

    return threads


def ordered_map(func, items, threads=1):

    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [func(item) for item in items]

    with ThreadPool(processes=min(threads, len(items))) as pool:
        return pool.map(func, items)
