"""Blocking: restrict linkage to records agreeing on designated key fields.

Records are partitioned into blocks by their exact tuple of key-field
values.  Split-merge proposals only ever pair records within one block,
so individuals never span blocks.  Key fields must be declared
distortion-free (b = inf), otherwise the restriction would contradict
the model, which could move a distorted key value across blocks.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import Hyperparameters, Mode, RecordStore


class BlockingError(ValueError):
    """Invalid blocking configuration."""


class BlockExhausted(Exception):
    """No eligible pair exists in the requested block."""


@dataclass(frozen=True)
class Block:
    """Records sharing one key tuple."""

    key: tuple[int, ...]
    records: np.ndarray  # global record indices, sorted
    files: np.ndarray  # file of each record

    def eligible_pairs(self, mode: Mode) -> int:
        """Number of unordered record pairs a proposal may draw here."""
        n = int(self.records.size)
        total = n * (n - 1) // 2
        if mode is Mode.DEDUP:
            return total
        counts = np.bincount(self.files)
        within = int(np.sum(counts * (counts - 1) // 2))
        return total - within


@dataclass
class BlockIndex:
    """All blocks of a dataset plus cached pair-count tables."""

    key_fields: tuple[int, ...]
    blocks: list[Block]
    record_to_block: np.ndarray
    _pair_counts: dict = field(default_factory=dict, repr=False)

    @property
    def n_blocks(self) -> int:
        return len(self.blocks)

    def eligible_pair_counts(self, mode: Mode) -> np.ndarray:
        """Per-block eligible pair counts (cached per mode)."""
        mode = Mode(mode)
        if mode not in self._pair_counts:
            counts = np.array(
                [b.eligible_pairs(mode) for b in self.blocks], dtype=np.int64
            )
            self._pair_counts[mode] = counts
        return self._pair_counts[mode]

    def total_eligible_pairs(self, mode: Mode) -> int:
        return int(self.eligible_pair_counts(mode).sum())


def build_blocks(data: RecordStore, key_fields: tuple[int, ...]) -> BlockIndex:
    """Group records by their key-field tuples.

    With no key fields the whole dataset forms a single block.
    """
    key_fields = tuple(int(f) for f in key_fields)
    if len(set(key_fields)) != len(key_fields):
        raise BlockingError("duplicate key fields")
    for f in key_fields:
        if not 0 <= f < data.p:
            raise BlockingError(f"key field index {f} out of range")
    n = data.n_records
    if not key_fields:
        order = np.arange(n, dtype=np.int64)
        block = Block(key=(), records=order, files=data.file_id[order].copy())
        return BlockIndex((), [block], np.zeros(n, dtype=np.int32))
    keys = data.x[:, key_fields]
    uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
    inverse = inverse.astype(np.int32)
    blocks = []
    for b in range(uniq.shape[0]):
        recs = np.flatnonzero(inverse == b).astype(np.int64)
        blocks.append(
            Block(
                key=tuple(int(v) for v in uniq[b]),
                records=recs,
                files=data.file_id[recs].copy(),
            )
        )
    return BlockIndex(key_fields, blocks, inverse)


def validate_blocking(index: BlockIndex, hyper: Hyperparameters) -> None:
    """Require every key field to be declared distortion-free.

    A distortion-free field that is not a key is allowed (the sampler
    just never exploits it), but it deserves a warning since the block
    structure could have been finer.
    """
    blocked = hyper.blocked
    bad = [f for f in index.key_fields if not blocked[f]]
    if bad:
        raise BlockingError(
            f"key fields {bad} must have b = inf: blocking assumes their "
            f"values are never distorted"
        )
    unused = [
        int(f) for f in np.flatnonzero(blocked) if f not in index.key_fields
    ]
    if unused:
        import logging

        logging.getLogger(__name__).warning(
            "fields %s are distortion-free but not used as blocking keys",
            unused,
        )


def pairs_in_block(block: Block, mode: Mode, rng: np.random.Generator):
    """Draw one eligible record pair uniformly from a block.

    In LINK mode pairs within a single file are ineligible and are
    rejected until a cross-file pair comes up.  Raises BlockExhausted
    when the block contains no eligible pair at all.
    """
    mode = Mode(mode)
    n = int(block.records.size)
    if block.eligible_pairs(mode) == 0:
        raise BlockExhausted(f"block {block.key} has no eligible pair")
    while True:
        i = int(rng.integers(n))
        j = int(rng.integers(n - 1))
        if j >= i:
            j += 1
        if mode is Mode.LINK and block.files[i] == block.files[j]:
            continue
        return int(block.records[i]), int(block.records[j])


def sample_eligible_pair(
    index: BlockIndex, mode: Mode, rng: np.random.Generator
):
    """Draw a pair uniformly over all eligible pairs of all blocks.

    Chooses a block with probability proportional to its eligible pair
    count, then a pair uniformly within it, which is equivalent to a
    single uniform draw over the union.  Returns None when no block has
    an eligible pair.
    """
    counts = index.eligible_pair_counts(mode)
    total = int(counts.sum())
    if total == 0:
        return None
    t = int(rng.integers(total))
    b = int(np.searchsorted(np.cumsum(counts), t, side="right"))
    return pairs_in_block(index.blocks[b], mode, rng)
