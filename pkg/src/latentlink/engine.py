"""Engine selection: compiled core with a pure NumPy fallback.

Both engines run the identical algorithm (same loops, same acceptance
rules, same random generator family) and return the same output
structure; they differ only in speed.  Selection happens here: "auto"
prefers the compiled extension and falls back to Python when the
extension is missing, and the LATENTLINK_ENGINE environment variable
overrides the default.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .blocking import BlockIndex
from .model import Hyperparameters, Mode, RecordStore

try:
    from . import _speedups

    _COMPILED = _speedups
except ImportError:  # extension not built on this platform
    _COMPILED = None


@dataclass
class Problem:
    """One linkage problem packed into flat arrays for the engines."""

    data: RecordStore
    hyper: Hyperparameters
    index: BlockIndex
    mode: Mode
    x: np.ndarray  # [n, p] int64
    file_id: np.ndarray  # [n] int32
    levels: np.ndarray  # [p] int64
    a: np.ndarray  # [p] float64
    b: np.ndarray  # [p] float64, inf where blocked
    blocked: np.ndarray  # [p] uint8
    mu_pad: np.ndarray  # [p, Mmax] float64, zero padded
    block_order: np.ndarray  # [n] record ids grouped by block
    block_start: np.ndarray  # [B + 1] offsets into block_order
    pair_counts: np.ndarray  # [B] eligible pairs per block for the mode


def pack_problem(
    data: RecordStore, hyper: Hyperparameters, index: BlockIndex, mode: Mode
) -> Problem:
    levels = np.asarray(data.schema.levels, dtype=np.int64)
    mmax = int(levels.max())
    mu_pad = np.zeros((data.p, mmax))
    for l, mu in enumerate(hyper.mu):
        mu_pad[l, : mu.size] = mu
    block_order = np.concatenate([b.records for b in index.blocks])
    sizes = [b.records.size for b in index.blocks]
    block_start = np.concatenate(([0], np.cumsum(sizes))).astype(np.int64)
    return Problem(
        data=data,
        hyper=hyper,
        index=index,
        mode=Mode(mode),
        x=np.ascontiguousarray(data.x, dtype=np.int64),
        file_id=np.ascontiguousarray(data.file_id, dtype=np.int32),
        levels=levels,
        a=hyper.a.astype(np.float64),
        b=hyper.b.astype(np.float64),
        blocked=hyper.blocked.astype(np.uint8),
        mu_pad=mu_pad,
        block_order=np.ascontiguousarray(block_order, dtype=np.int64),
        block_start=block_start,
        pair_counts=index.eligible_pair_counts(mode).astype(np.int64),
    )


def available_engines() -> dict[str, bool]:
    """Which engines can run on this installation."""
    return {"compiled": _COMPILED is not None, "python": True}


def resolve(name: str = "auto"):
    """Map an engine name to (resolved name, module with a run function)."""
    from . import _engine_py

    if name == "auto":
        name = os.environ.get("LATENTLINK_ENGINE", "auto")
    if name == "auto":
        name = "compiled" if _COMPILED is not None else "python"
    if name == "compiled":
        if _COMPILED is None:
            raise RuntimeError(
                "compiled engine requested but the extension is not built"
            )
        return "compiled", _COMPILED
    if name == "python":
        return "python", _engine_py
    raise ValueError(f"unknown engine {name!r}")
