"""Deterministic chunked Monte Carlo reductions."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

DEFAULT_CHUNK = 1 << 16
_default_workers: int | None = None


def set_default_workers(n: int | None):
    """Process-wide worker request used when a call does not pass one."""
    global _default_workers
    _default_workers = n if n else None


def worker_count(requested: int | None = None) -> int:
    """Worker count, capped by the ``AEROKIN_THREADS`` environment variable."""
    cap = os.environ.get("AEROKIN_THREADS")
    requested = requested if requested is not None else _default_workers
    n = requested if requested is not None else (int(cap) if cap else 1)
    if cap:
        n = min(n, int(cap))
    return max(1, n)


def mc_mean(sample_fn, n_samples: int, seed: int, chunk: int = DEFAULT_CHUNK, workers: int | None = None):
    """Mean and standard error of ``sample_fn(rng, m)`` over ``n_samples`` draws.

    ``sample_fn`` returns an array whose first axis has length ``m``.  The
    sample is split into fixed-size chunks with independent child streams
    spawned from ``seed``; chunk sums are reduced in chunk order, so the
    result does not depend on the worker count.
    """
    if n_samples < 2:
        raise ValueError("need at least two samples")
    sizes = [chunk] * (n_samples // chunk)
    if n_samples % chunk:
        sizes.append(n_samples % chunk)
    seeds = np.random.SeedSequence(seed).spawn(len(sizes))

    def run(i):
        x = np.asarray(sample_fn(np.random.default_rng(seeds[i]), sizes[i]), dtype=float)
        return x.sum(axis=0), (x * x).sum(axis=0)

    nw = worker_count(workers)
    if nw > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(nw) as ex:
            parts = list(ex.map(run, range(len(sizes))))
    else:
        parts = [run(i) for i in range(len(sizes))]
    s1 = sum(p[0] for p in parts)
    s2 = sum(p[1] for p in parts)
    mean = s1 / n_samples
    var = np.maximum(s2 / n_samples - mean**2, 0.0) * n_samples / (n_samples - 1)
    return mean, np.sqrt(var / n_samples)
