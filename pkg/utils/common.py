"""Small helpers shared by the pipeline modules."""
import hashlib
import json
import logging
import os

import numpy as np


def rng_for(*keys):
    # type: (*int) -> np.random.Generator
    """Seeded random stream derived from a tuple of integer keys.

    Every stochastic step of the pipeline draws from its own stream so that
    results do not depend on call order or on the number of workers.
    """
    return np.random.default_rng(np.random.SeedSequence([int(k) & 0xFFFFFFFF for k in keys]))


def wrap_angle(angle):
    """Wrap angles to the half open interval (-pi, pi]."""
    wrapped = np.pi - np.mod(np.pi - np.asarray(angle, dtype=float), 2 * np.pi)
    if np.ndim(wrapped) == 0:
        return float(wrapped)
    return wrapped


def rotation(theta):
    """2x2 rotation matrix."""
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def checksum(array):
    # type: (np.ndarray) -> str
    """Hex digest of the raw float64 bytes of an array."""
    data = np.ascontiguousarray(np.asarray(array, dtype=np.float64))
    return hashlib.sha256(data.tobytes()).hexdigest()


def worker_count(default=1):
    # type: (int) -> int
    """Number of worker processes allowed by the ILAD_THREADS variable."""
    value = os.getenv("ILAD_THREADS")
    if value is None or value.strip() == "":
        return default
    try:
        count = int(value)
    except ValueError:
        logging.warning("ILAD_THREADS={} is not an integer, using {}".format(value, default))
        return default
    return max(1, count)


def parallel_map(func, jobs, workers=None):
    """Map ``func`` over ``jobs`` preserving order, in a process pool if allowed."""
    jobs = list(jobs)
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(jobs) <= 1:
        return [func(job) for job in jobs]
    from concurrent.futures import ProcessPoolExecutor
    with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
        return list(pool.map(func, jobs))


def config_hash(mapping):
    # type: (dict) -> str
    """Short stable digest of a JSON-serializable mapping."""
    text = json.dumps(mapping, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]
