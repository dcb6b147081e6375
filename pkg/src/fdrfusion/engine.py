"""Seeded Monte Carlo engine.

Trials are split into fixed-size chunks. Chunk ``k`` draws from
``seeded_substream(seed, k, tag)``, so results never depend on how many
workers evaluate the chunks or in which order they finish.
"""

from __future__ import annotations

import hashlib
from concurrent.futures import ProcessPoolExecutor
from typing import Any, Callable, Sequence

import numpy as np

DEFAULT_CHUNK_CELLS = 1 << 19


def _tag_key(tag: str) -> int:
    digest = hashlib.blake2b(tag.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def seeded_substream(seed: int, index: int, tag: str) -> np.random.Generator:
    """Independent generator for ``(seed, index, tag)``.

    The triple is fed to :class:`numpy.random.SeedSequence` as entropy plus
    spawn key, which hashes it into PCG64 state.
    """
    if seed < 0 or index < 0:
        raise ValueError("seed and index must be non-negative")
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(_tag_key(tag), int(index)))
    return np.random.Generator(np.random.PCG64(ss))


def chunk_sizes(trials: int, chunk: int) -> list[int]:
    if trials < 1:
        raise ValueError("trials must be >= 1")
    full, rest = divmod(trials, chunk)
    return [chunk] * full + ([rest] if rest else [])


def default_chunk(width: int) -> int:
    """Trials per chunk for a kernel producing ``width`` values per trial."""
    return max(256, DEFAULT_CHUNK_CELLS // max(1, width))


def _call(args):
    kernel, seed, index, tag, n = args
    return kernel(seeded_substream(seed, index, tag), n)


def run_chunks(
    kernel: Callable[[np.random.Generator, int], Any],
    trials: int,
    seed: int,
    tag: str,
    *,
    chunk: int,
    workers: int = 1,
) -> list[Any]:
    """Evaluate ``kernel(rng, n)`` on every chunk, results in chunk order.

    ``kernel`` must be picklable when ``workers > 1`` (a module-level function
    or a :func:`functools.partial` of one).
    """
    jobs = [(kernel, seed, k, tag, n) for k, n in enumerate(chunk_sizes(trials, chunk))]
    if workers <= 1 or len(jobs) == 1:
        return [_call(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_call, jobs))


def sum_chunks(results: Sequence[Any]):
    """Order-preserving sum of chunk results (arrays or tuples of arrays)."""
    total = results[0]
    for r in results[1:]:
        if isinstance(total, tuple):
            total = tuple(a + b for a, b in zip(total, r))
        else:
            total = total + r
    return total
