"""Seed splitting and replicate-level parallel map."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Optional, Sequence, TypeVar, Union

import numpy as np

from utils.config_utils import get_config

T = TypeVar("T")
R = TypeVar("R")

Seed = Union[None, int, np.random.SeedSequence]


def spawn_seeds(seed: Seed, n: int) -> List[np.random.SeedSequence]:
    """Independent child seeds; child i depends only on (seed, i)."""
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return root.spawn(n)


def spawn_generators(seed: Seed, n: int) -> List[np.random.Generator]:
    return [np.random.default_rng(s) for s in spawn_seeds(seed, n)]


def parallel_map(fn: Callable[[T], R], items: Iterable[T], n_workers: Optional[int] = None) -> List[R]:
    """Order-preserving map; threads only when N_WORKERS > 1."""
    workers = int(n_workers if n_workers is not None else get_config("N_WORKERS", 1))
    seq: Sequence[T] = list(items)
    if workers <= 1 or len(seq) <= 1:
        return [fn(x) for x in seq]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, seq))
