"""Counter-based random numbers keyed by (seed, path, stream).

Each path owns a Philox stream whose key is ``(seed, path)`` and whose
counter high word selects a sub-stream, so the draw for a given
(seed, path, step, coordinate) never depends on how paths are scheduled.
"""

import numpy as np

# sub-stream identifiers (high word of the Philox counter)
INCREMENTS = 0
INITIAL_CURVE = 1
NESTED = 2


def path_generator(seed, path, stream=INCREMENTS):
    """Generator for one path and sub-stream."""
    bits = np.random.Philox(key=[int(seed) & (2**64 - 1), int(path)],
                            counter=[0, 0, 0, int(stream)])
    return np.random.Generator(bits)


def brownian_increments(seed, paths, n_steps, m, dt, stream=INCREMENTS):
    """Brownian increments of shape (len(paths), n_steps, m).

    Row ``i`` holds the increments of path ``paths[i]``; step ``n`` and
    coordinate ``j`` are read from position ``n * m + j`` of that stream.
    """
    paths = np.asarray(paths, dtype=np.int64)
    out = np.empty((len(paths), n_steps, m))
    scale = np.sqrt(dt)
    for i, p in enumerate(paths):
        out[i] = path_generator(seed, p, stream).standard_normal((n_steps, m))
    out *= scale
    return out


def standard_normals(seed, paths, shape, stream):
    """Per-path standard normal blocks of shape (len(paths), *shape)."""
    paths = np.asarray(paths, dtype=np.int64)
    out = np.empty((len(paths),) + tuple(shape))
    for i, p in enumerate(paths):
        out[i] = path_generator(seed, p, stream).standard_normal(shape)
    return out
