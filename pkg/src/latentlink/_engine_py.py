"""Pure NumPy chain engine: the fallback when the extension is absent.

Runs the same nested loops as the compiled core, reusing the
module-level full-conditional updates and the shared split-merge step.
Cluster membership lists and a free-slot stack persist across proposals
so a step costs time proportional to the touched clusters only.
"""

from __future__ import annotations

import math

import numpy as np

from .model import state_consistent
from .sampler import (
    ChainConfig,
    ConsistencyError,
    _log_tables,
    _step,
    init_state,
    resample_beta,
    resample_theta,
    resample_y,
    resample_z,
)


class _SlotStack:
    def __init__(self):
        self._free: list[int] = []

    def pop(self) -> int:
        return self._free.pop()

    def push(self, slot: int) -> None:
        self._free.append(slot)


def run(problem, config: ChainConfig, seed_seq, progress=None, progress_every=0):
    data, hyper, index = problem.data, problem.hyper, problem.index
    mode = problem.mode
    rng = np.random.Generator(np.random.Philox(seed_seq))
    state = init_state(data, hyper, rng)

    n, p = data.n_records, data.p
    members = {r: [r] for r in range(n)}
    free = _SlotStack()

    n_stored = config.n_stored
    partitions = np.empty((n_stored, n), dtype=np.int64)
    beta_out = np.empty((n_stored, p))
    mmax = int(problem.levels.max())
    theta_out = np.empty((n_stored, p, mmax)) if config.store_theta else None

    proposals = accepted = merges = splits = conflicts = exhausted = 0
    states_checked = 0
    stored = 0

    for sweep in range(1, config.sweeps + 1):
        tables = _log_tables(state)
        for _ in range(config.updates_per_sweep):
            for _ in range(config.proposals_per_update):
                res = _step(
                    state, data, hyper, index, mode, rng, config.corrected,
                    members, free, tables,
                )
                if res.kind == "exhausted":
                    exhausted += 1
                    continue
                proposals += 1
                if res.kind == "conflict":
                    conflicts += 1
                elif res.accepted:
                    accepted += 1
                    if res.kind == "merge":
                        merges += 1
                    else:
                        splits += 1
            resample_y(state, data, hyper, rng)
            resample_z(state, data, hyper, rng)
            if config.debug_checks:
                if not state_consistent(state, data, hyper, mode):
                    raise ConsistencyError("inconsistent state in chain")
                _check_bookkeeping(state, members)
                states_checked += 1
        resample_theta(state, data, hyper, rng)
        resample_beta(state, data, hyper, rng)
        s = sweep - config.burn_in
        if s > 0 and s % config.thin == 0:
            partitions[stored] = state.lam
            beta_out[stored] = state.beta
            if theta_out is not None:
                for l in range(p):
                    theta_out[stored, l, : state.theta[l].size] = state.theta[l]
            stored += 1
        if progress is not None and progress_every and sweep % progress_every == 0:
            acc = accepted / proposals if proposals else 0.0
            progress(sweep, len(members), acc)

    from .model import log_joint_posterior

    return {
        "partitions": partitions,
        "beta": beta_out,
        "theta": theta_out,
        "proposals": proposals,
        "accepted": accepted,
        "merges": merges,
        "splits": splits,
        "conflicts": conflicts,
        "exhausted": exhausted,
        "states_checked": states_checked,
        "final_log_joint": log_joint_posterior(state, data, hyper),
    }


def _check_bookkeeping(state, members) -> None:
    """Membership lists must mirror lam exactly."""
    total = 0
    for slot, recs in members.items():
        total += len(recs)
        if not recs:
            raise ConsistencyError(f"empty cluster {slot} retained")
        if any(state.lam[r] != slot for r in recs):
            raise ConsistencyError(f"membership list for {slot} is stale")
    if total != state.lam.size:
        raise ConsistencyError("membership lists lost records")
