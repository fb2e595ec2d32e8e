"""Deterministic path-parallel execution.

Paths are cut into blocks of a fixed size that does not depend on the
worker count, each block is computed independently from its path indices,
and blocks are reassembled in order.  The numbers produced for a path are
therefore identical for any number of threads.
"""

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

CHUNK = 512
ENV_THREADS = "VOLTERRA_THREADS"


def resolve_threads(threads=None):
    """Explicit value, else $VOLTERRA_THREADS, else 1."""
    if threads is None:
        env = os.environ.get(ENV_THREADS)
        threads = int(env) if env else 1
    threads = int(threads)
    if threads < 1:
        raise ValueError("threads must be positive")
    return threads


def blocks(n_paths, chunk=CHUNK, start=0):
    return [np.arange(a, min(a + chunk, n_paths)) + start
            for a in range(0, n_paths, chunk)]


def map_blocks(fn, n_paths, threads=None, chunk=CHUNK, start=0):
    """[fn(paths) for each block] in block order."""
    bl = blocks(n_paths, chunk, start)
    threads = resolve_threads(threads)
    if threads == 1 or len(bl) == 1:
        return [fn(b) for b in bl]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, bl))


def concat(results, key=None, axis=0):
    """Concatenate block results (tuples indexed by ``key`` or arrays)."""
    parts = [r if key is None else r[key] for r in results]
    return np.concatenate(parts, axis=axis)
