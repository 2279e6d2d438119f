"""Counter-based random streams and an order-preserving parallel map.

Every Monte Carlo unit of work (a posterior-predictive draw, a bootstrap
resample, a study replication) gets its own generator derived from the master
seed and an integer key. Results therefore do not depend on how the work is
scheduled across workers.
"""

from concurrent.futures import ThreadPoolExecutor

import numpy as np

# Stream tags keep the sub-streams of different consumers disjoint.
SAMPLER = 1
ASSIGN = 2
INNER = 3
BOOTSTRAP = 4
REPLICATION = 5
DATA = 6
STATISTIC = 7


def stream(seed, *key):
    """Return a Generator for the sub-stream ``(seed, *key)``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.default_rng(ss)


def child_seed(seed, *key):
    """Derive a 63-bit integer seed for a nested consumer."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(2, dtype=np.uint32).view(np.uint64)[0] >> np.uint64(1))


def parallel_map(func, items, threads=1):
    """``list(map(func, items))``, optionally on a thread pool.

    Output order follows input order, so ``threads`` never changes results.
    """
    items = list(items)
    if threads is None or threads <= 1 or len(items) < 2:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(func, items))
