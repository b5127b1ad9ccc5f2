import hashlib
from typing import Iterator, Tuple, Union

import numpy as np

from config import REPLICATE_BLOCK_SIZE

Key = Union[int, float, str]


def key_to_int(key: Key) -> int:
    """Map a stream key to a non-negative integer usable as SeedSequence entropy."""
    if isinstance(key, (bool, np.bool_)):
        return int(key)
    if isinstance(key, (int, np.integer)) and key >= 0:
        return int(key)
    if isinstance(key, (float, np.floating)) and float(key).is_integer() and key >= 0:
        return int(key)
    digest = hashlib.sha256(repr(key).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def seed_sequence(master_seed: int, *keys: Key) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=key_to_int(master_seed), spawn_key=tuple(key_to_int(k) for k in keys))


def derive_seed(master_seed: int, *keys: Key) -> int:
    """h(master_seed, keys...) as a 63-bit integer seed."""
    state = seed_sequence(master_seed, *keys).generate_state(1, dtype=np.uint64)[0]
    return int(state >> np.uint64(1))


def stream(master_seed: int, *keys: Key) -> np.random.Generator:
    return np.random.default_rng(seed_sequence(master_seed, *keys))


def block_ranges(replicates: int, block_size: int = REPLICATE_BLOCK_SIZE) -> Tuple[Tuple[int, int, int], ...]:
    """(block_index, first_replicate, row_count) for every block covering range(replicates)."""
    return tuple(
        (b, start, min(block_size, replicates - start))
        for b, start in enumerate(range(0, replicates, block_size))
    )


def chunk_rows(rows: int, width: int, max_cells: int = 1 << 22) -> Iterator[int]:
    """Row counts splitting `rows` into chunks of at most `max_cells` cells.

    Generators fill draws in row order, so drawing chunk by chunk yields the same rows as one draw.
    """
    chunk = max(1, min(rows, max_cells // max(width, 1)))
    for start in range(0, rows, chunk):
        yield min(chunk, rows - start)


def threshold_stream(master_seed: int, block_index: int) -> np.random.Generator:
    return stream(master_seed, "thresholds", block_index)


def trigger_stream(master_seed: int, block_index: int) -> np.random.Generator:
    return stream(master_seed, "triggering", block_index)
