"""Hybrid MCMC sampler over linkage structures.

The chain alternates three nested loops.  The outer loop (``sweeps``)
resamples the field distributions theta and distortion rates beta from
their full conditionals.  The middle loop refreshes every individual's
fields y and every record's distortion flags z.  The inner loop makes
split-merge Metropolis proposals on the linkage: a uniformly drawn
eligible record pair either merges its two clusters or splits its
common cluster around the two records as seeds.

Two acceptance rules are provided.  The default ("literal") rule scores
the deterministic proposal that copies y from a seed record and sets
the minimal consistent distortion flags; its acceptance ratio is the
plain posterior ratio of the two completed states.  The "corrected"
rule integrates y and z out of the affected clusters analytically,
applies the exact proposal-probability correction, and redraws y and z
of the touched clusters from their conditionals after acceptance.  The
correction has two parts: a factor 2 to the plus or minus
(cluster size - 2) from the fair-coin division of a split, and the
count of unoccupied labels a split's new cluster can claim.  Under the
model's uniform prior on per-record labels, a partition with c
clusters is realized by n!/(n-c)! label vectors, so a merge carries a
prior penalty of log(n - c + 1) and a split the matching bonus; the
free-label count in the proposal ratio is exactly that term.  The
corrected rule satisfies detailed balance exactly and is the one
validated against brute-force enumeration.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .blocking import BlockIndex, build_blocks, sample_eligible_pair, validate_blocking
from .model import (
    Hyperparameters,
    LatentState,
    Mode,
    RecordStore,
    count_individuals,
)

logger = logging.getLogger(__name__)

# Published defaults for the chain and priors.
DEFAULT_A = 5.0
DEFAULT_B = 10.0
DEFAULT_MU = 1.0
DEFAULT_SWEEPS = 100_000
DEFAULT_UPDATES_LINK = 100_000
DEFAULT_UPDATES_DEDUP = 10_000
DEFAULT_PROPOSALS = 1
DEFAULT_BURN_IN = 1_000
DEFAULT_THIN = 100

_LOG_EPS = 1e-300


class ConsistencyError(RuntimeError):
    """A latent state violated a structural invariant."""


@dataclass(frozen=True)
class ChainConfig:
    """Chain lengths, storage schedule and sampling options.

    ``sweeps`` is the outer Gibbs loop, ``updates_per_sweep`` the middle
    loop (one y and z refresh each), and ``proposals_per_update`` the
    number of split-merge proposals between refreshes.
    """

    sweeps: int = DEFAULT_SWEEPS
    updates_per_sweep: int = DEFAULT_UPDATES_LINK
    proposals_per_update: int = DEFAULT_PROPOSALS
    burn_in: int = DEFAULT_BURN_IN
    thin: int = DEFAULT_THIN
    mode: Mode = Mode.LINK
    corrected: bool = False
    seed: int = 0
    store_theta: bool = False
    debug_checks: bool = False
    progress_every: int | None = None  # sweeps between progress lines; 0 off

    def validate(self) -> None:
        if self.sweeps < 1 or self.updates_per_sweep < 1 or self.proposals_per_update < 1:
            raise ValueError("loop counts must be >= 1")
        if not 0 <= self.burn_in < self.sweeps:
            raise ValueError("burn_in must lie in [0, sweeps)")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        Mode(self.mode)

    @property
    def n_stored(self) -> int:
        """Number of retained samples: floor((sweeps - burn_in) / thin)."""
        return (self.sweeps - self.burn_in) // self.thin


@dataclass
class PosteriorSamples:
    """Retained draws of the linkage (and optionally theta, beta).

    ``partitions[s]`` holds canonical cluster labels (1-based, by first
    appearance in record order), so two rows are equal exactly when the
    partitions are equal.
    """

    partitions: np.ndarray
    n_trace: np.ndarray
    beta_trace: np.ndarray
    theta_trace: list[np.ndarray] | None
    config: ChainConfig
    n_i: tuple[int, ...]
    file_id: np.ndarray
    key_fields: tuple[int, ...]
    stats: dict

    @property
    def n_samples(self) -> int:
        return int(self.partitions.shape[0])

    @property
    def n_records(self) -> int:
        return int(self.partitions.shape[1])

    @property
    def k(self) -> int:
        return len(self.n_i)

    def record_index(self, file: int, row: int) -> int:
        if not 0 <= file < self.k:
            raise IndexError(f"file index {file} out of range")
        if not 0 <= row < self.n_i[file]:
            raise IndexError(f"row {row} out of range for file {file}")
        return sum(self.n_i[:file]) + row

    def record_coords(self, r: int) -> tuple[int, int]:
        if not 0 <= r < self.n_records:
            raise IndexError(f"record {r} out of range")
        file = 0
        while r >= self.n_i[file]:
            r -= self.n_i[file]
            file += 1
        return file, r

    def same_as(self, other: "PosteriorSamples") -> bool:
        if self.n_i != other.n_i or self.key_fields != other.key_fields:
            return False
        if self.config != other.config:
            return False
        if not (
            np.array_equal(self.partitions, other.partitions)
            and np.array_equal(self.n_trace, other.n_trace)
            and np.array_equal(self.beta_trace, other.beta_trace)
            and np.array_equal(self.file_id, other.file_id)
        ):
            return False
        if (self.theta_trace is None) != (other.theta_trace is None):
            return False
        if self.theta_trace is not None:
            return all(
                np.array_equal(s, o)
                for s, o in zip(self.theta_trace, other.theta_trace)
            )
        return True


def concatenate_samples(parts: list[PosteriorSamples]) -> PosteriorSamples:
    """Pool retained draws from several chains over the same data."""
    if not parts:
        raise ValueError("nothing to concatenate")
    first = parts[0]
    for s in parts[1:]:
        if s.n_i != first.n_i or s.key_fields != first.key_fields:
            raise ValueError("samples come from different datasets")
    theta = None
    if all(s.theta_trace is not None for s in parts):
        theta = [
            np.concatenate([s.theta_trace[l] for s in parts])
            for l in range(len(first.theta_trace))
        ]
    return PosteriorSamples(
        partitions=np.concatenate([s.partitions for s in parts]),
        n_trace=np.concatenate([s.n_trace for s in parts]),
        beta_trace=np.concatenate([s.beta_trace for s in parts]),
        theta_trace=theta,
        config=first.config,
        n_i=first.n_i,
        file_id=first.file_id,
        key_fields=first.key_fields,
        stats={"chains": [s.stats for s in parts]},
    )


def _as_generator(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    return np.random.Generator(np.random.Philox(seed))


def chain_stream(seed: int, chain_index: int = 0) -> np.random.SeedSequence:
    """Independent, reproducible stream for one chain of a run.

    Streams are keyed by (seed, chain_index) on a counter-based
    generator, so chains never overlap and any chain can be recreated
    in isolation.
    """
    return np.random.SeedSequence((int(seed), int(chain_index)))


# ---------------------------------------------------------------------------
# full-conditional updates


def init_state(data: RecordStore, hyper: Hyperparameters, seed=0) -> LatentState:
    """All-singletons start: every record its own individual, y = x, z = 0.

    theta and beta are drawn from their priors (beta pinned at zero for
    distortion-free fields), so the initial state is consistent.
    """
    rng = _as_generator(seed)
    n, p = data.n_records, data.p
    theta = [rng.dirichlet(hyper.mu[l]) for l in range(p)]
    beta = np.zeros(p)
    free = ~hyper.blocked
    if free.any():
        beta[free] = rng.beta(hyper.a[free], hyper.b[free])
    return LatentState(
        lam=np.arange(n, dtype=np.int64),
        y=data.x.copy(),
        z=np.zeros((n, p), dtype=np.uint8),
        theta=theta,
        beta=beta,
    )


def resample_beta(
    state: LatentState, data: RecordStore, hyper: Hyperparameters, rng
) -> np.ndarray:
    """Draw beta_l from Beta(a_l + sum z_l, b_l + sum (1 - z_l)) in place."""
    rng = _as_generator(rng)
    n = data.n_records
    zsum = state.z.sum(axis=0, dtype=np.float64)
    free = ~hyper.blocked
    state.beta[~free] = 0.0
    if free.any():
        state.beta[free] = rng.beta(
            hyper.a[free] + zsum[free], hyper.b[free] + (n - zsum[free])
        )
    return state.beta


def theta_posterior_counts(
    state: LatentState, data: RecordStore, hyper: Hyperparameters
) -> list[np.ndarray]:
    """Dirichlet parameters of theta's full conditional.

    Each occupied individual's field value counts once, plus every
    distorted record cell's observed value, on top of the prior mu.
    """
    occ = state.occupied()
    out = []
    for l, M in enumerate(data.schema.levels):
        cnt = hyper.mu[l].astype(np.float64).copy()
        cnt += np.bincount(state.y[occ, l], minlength=M)
        zl = state.z[:, l].astype(bool)
        if zl.any():
            cnt += np.bincount(data.x[zl, l], minlength=M)
        out.append(cnt)
    return out


def resample_theta(
    state: LatentState, data: RecordStore, hyper: Hyperparameters, rng
) -> list[np.ndarray]:
    """Draw each theta_l from its Dirichlet full conditional in place."""
    rng = _as_generator(rng)
    for l, cnt in enumerate(theta_posterior_counts(state, data, hyper)):
        state.theta[l] = rng.dirichlet(cnt)
    return state.theta


def resample_z(
    state: LatentState, data: RecordStore, hyper: Hyperparameters, rng
) -> np.ndarray:
    """Draw every distortion flag from its Bernoulli full conditional.

    Cells where the record disagrees with its individual are forced to
    z = 1; agreeing cells flip with probability
    beta theta_x / (beta theta_x + 1 - beta).
    """
    rng = _as_generator(rng)
    x, lam = data.x, state.lam
    n, p = x.shape
    yrec = state.y[lam]
    differs = yrec != x
    blocked = hyper.blocked
    if np.any(differs[:, blocked]):
        raise ConsistencyError("record disagrees with its individual on a "
                               "distortion-free field")
    probs = np.empty((n, p))
    for l in range(p):
        beta = float(state.beta[l])
        tx = state.theta[l][x[:, l]]
        probs[:, l] = beta * tx / (beta * tx + (1.0 - beta))
    z = np.where(differs, True, rng.random((n, p)) < probs)
    z[:, blocked] = False
    state.z = z.astype(np.uint8)
    return state.z


def resample_y(
    state: LatentState, data: RecordStore, hyper: Hyperparameters, rng
) -> np.ndarray:
    """Draw every occupied individual's fields from their full conditionals.

    A field with any undistorted member is pinned to that member's
    value (all undistorted members must agree, else the state was
    inconsistent); otherwise the value is drawn from theta_l.
    """
    rng = _as_generator(rng)
    occ = state.occupied()
    dense = np.searchsorted(occ, state.lam)
    nocc = occ.size
    x = data.x
    for l in range(data.p):
        z0 = state.z[:, l] == 0
        pin_lo = np.full(nocc, np.iinfo(np.int64).max)
        pin_hi = np.full(nocc, -1, dtype=np.int64)
        idx = dense[z0]
        vals = x[z0, l]
        np.minimum.at(pin_lo, idx, vals)
        np.maximum.at(pin_hi, idx, vals)
        pinned = pin_hi >= 0
        if np.any(pin_lo[pinned] != pin_hi[pinned]):
            raise ConsistencyError(
                f"undistorted members disagree on field {l}; state is invalid"
            )
        newy = pin_hi.copy()
        n_free = int(nocc - pinned.sum())
        if n_free:
            cum = np.cumsum(state.theta[l])
            draws = np.searchsorted(cum, rng.random(n_free) * cum[-1], side="right")
            newy[~pinned] = np.minimum(draws, state.theta[l].size - 1)
        state.y[occ, l] = newy
    return state.y


# ---------------------------------------------------------------------------
# split-merge proposals


class LogTables(NamedTuple):
    """Per-sweep log caches of theta and beta."""

    ltheta: list[np.ndarray]
    lbeta: np.ndarray
    l1mbeta: np.ndarray


def _log_tables(state: LatentState) -> LogTables:
    ltheta = [np.log(np.maximum(t, _LOG_EPS)) for t in state.theta]
    with np.errstate(divide="ignore"):
        lbeta = np.log(state.beta)
        l1mbeta = np.log1p(-state.beta)
    return LogTables(ltheta, lbeta, l1mbeta)


class StepResult(NamedTuple):
    accepted: bool
    kind: str  # merge | split | conflict | exhausted
    delta: float


def _score_cluster(
    x_sub: np.ndarray, yvec: np.ndarray, z_sub: np.ndarray, tables: LogTables
) -> float:
    """Log-posterior terms owned by one cluster at fixed theta, beta.

    Covers the y prior, the distortion flags, and the distorted record
    cells.  Terms that do not change under split-merge (theta and beta
    priors, cells of other clusters) are omitted.
    """
    total = 0.0
    m = x_sub.shape[0]
    for l in range(x_sub.shape[1]):
        lt = tables.ltheta[l]
        total += lt[yvec[l]]
        zl = z_sub[:, l].astype(bool)
        n1 = int(zl.sum())
        if n1:
            total += n1 * tables.lbeta[l] + float(lt[x_sub[zl, l]].sum())
        if m - n1:
            total += (m - n1) * tables.l1mbeta[l]
        if math.isnan(total):
            return -math.inf
    return total


def _log_marginal_field(
    xcol: np.ndarray, theta: np.ndarray, beta: float, blocked: bool
) -> float:
    """log f(C, l): one cluster-field with y and z integrated out.

    f = sum_m theta_m prod_r [(1 - beta) 1{x_r = m} + beta theta_{x_r}].
    For a distortion-free field this collapses to theta at the common
    value (zero if members disagree).
    """
    if blocked or beta == 0.0:
        v0 = int(xcol[0])
        if np.any(xcol != v0):
            return -math.inf
        return math.log(max(theta[v0], _LOG_EPS))
    obs, cnt = np.unique(xcol, return_counts=True)
    thobs = np.maximum(theta[obs], _LOG_EPS)
    base = float(np.sum(cnt * np.log(beta * thobs)))
    terms = np.log(thobs) + cnt * np.log1p((1.0 - beta) / (beta * thobs))
    rem = 1.0 - float(theta[obs].sum())
    if rem > 0:
        terms = np.append(terms, math.log(rem))
    mx = float(terms.max())
    return base + mx + math.log(float(np.exp(terms - mx).sum()))


def _cluster_log_marginal(
    x_sub: np.ndarray, state: LatentState, hyper: Hyperparameters
) -> float:
    total = 0.0
    blocked = hyper.blocked
    for l in range(x_sub.shape[1]):
        total += _log_marginal_field(
            x_sub[:, l], state.theta[l], float(state.beta[l]), bool(blocked[l])
        )
        if total == -math.inf:
            return total
    return total


def _redraw_cluster_yz(
    state: LatentState,
    data: RecordStore,
    hyper: Hyperparameters,
    members: np.ndarray,
    slot: int,
    rng: np.random.Generator,
) -> None:
    """Draw (y, z) of one cluster from p(y, z | x, theta, beta).

    y_l is drawn from its marginal (z summed out), then each member's
    z_l from its Bernoulli conditional given y_l.
    """
    xr = data.x[members]
    for l in range(data.p):
        theta = state.theta[l]
        beta = float(state.beta[l])
        if hyper.blocked[l] or beta == 0.0:
            state.y[slot, l] = xr[0, l]
            state.z[members, l] = 0
            continue
        obs, cnt = np.unique(xr[:, l], return_counts=True)
        thobs = np.maximum(theta[obs], _LOG_EPS)
        t = np.log(np.maximum(theta, _LOG_EPS))
        t[obs] += cnt * np.log1p((1.0 - beta) / (beta * thobs))
        t -= t.max()
        w = np.exp(t)
        yv = int(rng.choice(theta.size, p=w / w.sum()))
        state.y[slot, l] = yv
        tx = theta[xr[:, l]]
        pz = beta * tx / (beta * tx + (1.0 - beta))
        zdraw = rng.random(members.size) < pz
        state.z[members, l] = np.where(xr[:, l] == yv, zdraw, True).astype(np.uint8)


class _LazyFreeSlots:
    """Free-slot source for one-off steps outside an engine run."""

    def __init__(self, lam: np.ndarray):
        self._lam = lam

    def pop(self) -> int:
        used = np.unique(self._lam)
        free = np.setdiff1d(
            np.arange(self._lam.size, dtype=np.int64), used, assume_unique=True
        )
        return int(free[0])

    def push(self, slot: int) -> None:
        pass


def _step(
    state: LatentState,
    data: RecordStore,
    hyper: Hyperparameters,
    index: BlockIndex,
    mode: Mode,
    rng: np.random.Generator,
    corrected: bool,
    members: dict,
    free_slots,
    tables: LogTables | None = None,
    n_clusters: int | None = None,
) -> StepResult:
    """One split-merge proposal; mutates state and bookkeeping on accept.

    ``n_clusters`` is the current number of occupied clusters; it
    defaults to ``len(members)``, which is only right when ``members``
    holds every cluster.
    """
    pick = sample_eligible_pair(index, mode, rng)
    if pick is None:
        return StepResult(False, "exhausted", math.nan)
    r1, r2 = pick
    c1, c2 = int(state.lam[r1]), int(state.lam[r2])
    if tables is None:
        tables = _log_tables(state)
    if n_clusters is None:
        n_clusters = len(members)
    if c1 != c2:
        return _merge_step(
            state, data, hyper, mode, rng, corrected, members, free_slots,
            tables, r1, r2, c1, c2, n_clusters,
        )
    return _split_step(
        state, data, hyper, mode, rng, corrected, members, free_slots,
        tables, r1, r2, c1, n_clusters,
    )


def _merge_step(
    state, data, hyper, mode, rng, corrected, members, free_slots, tables,
    r1, r2, c1, c2, n_clusters,
) -> StepResult:
    ma, mb = members[c1], members[c2]
    if mode is Mode.LINK:
        files_a = {int(data.file_id[r]) for r in ma}
        if any(int(data.file_id[r]) in files_a for r in mb):
            return StepResult(False, "conflict", -math.inf)
    mc = ma + mb
    arr_c = np.asarray(mc, dtype=np.int64)
    xc = data.x[arr_c]
    size_c = len(mc)
    if corrected:
        delta = (
            _cluster_log_marginal(xc, state, hyper)
            - _cluster_log_marginal(data.x[np.asarray(ma)], state, hyper)
            - _cluster_log_marginal(data.x[np.asarray(mb)], state, hyper)
            + (size_c - 2) * math.log(0.5)
            - math.log(data.n_records - n_clusters + 1)
        )
        y_new = z_new = None
    else:
        rlow = min(r1, r2)
        y_new = data.x[rlow].copy()
        z_new = (xc != y_new).astype(np.uint8)
        cur = _score_cluster(
            data.x[np.asarray(ma)], state.y[c1], state.z[np.asarray(ma)], tables
        ) + _score_cluster(
            data.x[np.asarray(mb)], state.y[c2], state.z[np.asarray(mb)], tables
        )
        delta = _score_cluster(xc, y_new, z_new, tables) - cur
    if not _accept(delta, rng):
        return StepResult(False, "merge", delta)
    keep = int(state.lam[min(r1, r2)])
    gone = c2 if keep == c1 else c1
    state.lam[np.asarray(members[gone], dtype=np.int64)] = keep
    merged = members[c1] + members[c2] if keep == c1 else members[c2] + members[c1]
    members[keep] = merged
    del members[gone]
    free_slots.push(gone)
    arr = np.asarray(members[keep], dtype=np.int64)
    if corrected:
        _redraw_cluster_yz(state, data, hyper, arr, keep, rng)
    else:
        state.y[keep] = y_new
        state.z[arr_c] = z_new
    return StepResult(True, "merge", delta)


def _split_step(
    state, data, hyper, mode, rng, corrected, members, free_slots, tables,
    r1, r2, c, n_clusters,
) -> StepResult:
    mc = members[c]
    size_c = len(mc)
    side_a, side_b = [r1], [r2]
    if mode is Mode.LINK:
        f1, f2 = int(data.file_id[r1]), int(data.file_id[r2])
        for r in mc:
            if r == r1 or r == r2:
                continue
            fr = int(data.file_id[r])
            conflict_a = fr == f1
            conflict_b = fr == f2
            if conflict_a and conflict_b:
                return StepResult(False, "split", -math.inf)
            if conflict_a:
                side_b.append(r)
            elif conflict_b:
                side_a.append(r)
            elif rng.random() < 0.5:
                side_a.append(r)
            else:
                side_b.append(r)
    else:
        for r in mc:
            if r == r1 or r == r2:
                continue
            (side_a if rng.random() < 0.5 else side_b).append(r)
    arr_a = np.asarray(side_a, dtype=np.int64)
    arr_b = np.asarray(side_b, dtype=np.int64)
    xa, xb = data.x[arr_a], data.x[arr_b]
    if corrected:
        delta = (
            _cluster_log_marginal(xa, state, hyper)
            + _cluster_log_marginal(xb, state, hyper)
            - _cluster_log_marginal(data.x[np.asarray(mc)], state, hyper)
            + (size_c - 2) * math.log(2.0)
            + math.log(data.n_records - n_clusters)
        )
        ya = yb = za = zb = None
    else:
        ya, yb = data.x[r1].copy(), data.x[r2].copy()
        za = (xa != ya).astype(np.uint8)
        zb = (xb != yb).astype(np.uint8)
        arr_c = np.asarray(mc, dtype=np.int64)
        cur = _score_cluster(data.x[arr_c], state.y[c], state.z[arr_c], tables)
        delta = (
            _score_cluster(xa, ya, za, tables)
            + _score_cluster(xb, yb, zb, tables)
            - cur
        )
    if not _accept(delta, rng):
        return StepResult(False, "split", delta)
    slot_b = free_slots.pop()
    state.lam[arr_b] = slot_b
    members[c] = side_a
    members[slot_b] = side_b
    if corrected:
        _redraw_cluster_yz(state, data, hyper, arr_a, c, rng)
        _redraw_cluster_yz(state, data, hyper, arr_b, slot_b, rng)
    else:
        state.y[c] = ya
        state.y[slot_b] = yb
        state.z[arr_a] = za
        state.z[arr_b] = zb
    return StepResult(True, "split", delta)


def _accept(delta: float, rng: np.random.Generator) -> bool:
    if delta >= 0:
        return True
    if delta == -math.inf or math.isnan(delta):
        return False
    return math.log(rng.random()) < delta


def split_merge_step(
    state: LatentState,
    data: RecordStore,
    hyper: Hyperparameters,
    index: BlockIndex,
    mode: Mode,
    rng,
    corrected: bool = False,
) -> tuple[LatentState, StepResult]:
    """One standalone split-merge proposal on a latent state.

    Mutates and returns the state.  Engine runs use the same decision
    logic with persistent cluster bookkeeping; this wrapper derives the
    membership lists on the fly.
    """
    rng = _as_generator(rng)
    mode = Mode(mode)

    class _OnDemand(dict):
        def __missing__(self, slot):
            lst = list(np.flatnonzero(state.lam == slot))
            self[slot] = lst
            return lst

    result = _step(
        state, data, hyper, index, mode, rng, corrected,
        _OnDemand(), _LazyFreeSlots(state.lam),
        n_clusters=int(count_individuals(state.lam)),
    )
    return state, result


def propose_split_merge(
    state: LatentState,
    data: RecordStore,
    hyper: Hyperparameters,
    r1: int,
    r2: int,
    mode: Mode,
    rng,
) -> tuple[LatentState, float, str]:
    """Build the literal proposal for the pair (r1, r2), leaving it unapplied.

    Returns (proposed state copy, log acceptance ratio, kind).  The
    coin flips of a split come from ``rng``.  Exposed so the acceptance
    ratio can be checked against the full log-posterior difference.
    """
    rng = _as_generator(rng)
    mode = Mode(mode)
    tables = _log_tables(state)
    work = state.copy()
    c1, c2 = int(state.lam[r1]), int(state.lam[r2])
    if c1 != c2:
        ma = list(np.flatnonzero(state.lam == c1))
        mb = list(np.flatnonzero(state.lam == c2))
        if mode is Mode.LINK:
            files_a = set(data.file_id[ma].tolist())
            if files_a & set(data.file_id[mb].tolist()):
                return work, -math.inf, "conflict"
        keep = int(state.lam[min(r1, r2)])
        gone = c2 if keep == c1 else c1
        arr = np.asarray(ma + mb, dtype=np.int64)
        y_new = data.x[min(r1, r2)].copy()
        z_new = (data.x[arr] != y_new).astype(np.uint8)
        delta = (
            _score_cluster(data.x[arr], y_new, z_new, tables)
            - _score_cluster(
                data.x[np.asarray(ma)], state.y[c1], state.z[np.asarray(ma)], tables
            )
            - _score_cluster(
                data.x[np.asarray(mb)], state.y[c2], state.z[np.asarray(mb)], tables
            )
        )
        work.lam[np.asarray(list(np.flatnonzero(state.lam == gone)))] = keep
        work.y[keep] = y_new
        work.z[arr] = z_new
        return work, delta, "merge"
    mc = list(np.flatnonzero(state.lam == c1))
    side_a, side_b = [r1], [r2]
    f1, f2 = int(data.file_id[r1]), int(data.file_id[r2])
    for r in mc:
        if r == r1 or r == r2:
            continue
        if mode is Mode.LINK:
            fr = int(data.file_id[r])
            if fr == f1 and fr == f2:
                return work, -math.inf, "split"
            if fr == f1:
                side_b.append(r)
                continue
            if fr == f2:
                side_a.append(r)
                continue
        (side_a if rng.random() < 0.5 else side_b).append(r)
    arr_a = np.asarray(side_a, dtype=np.int64)
    arr_b = np.asarray(side_b, dtype=np.int64)
    ya, yb = data.x[r1].copy(), data.x[r2].copy()
    za = (data.x[arr_a] != ya).astype(np.uint8)
    zb = (data.x[arr_b] != yb).astype(np.uint8)
    arr_c = np.asarray(mc, dtype=np.int64)
    delta = (
        _score_cluster(data.x[arr_a], ya, za, tables)
        + _score_cluster(data.x[arr_b], yb, zb, tables)
        - _score_cluster(data.x[arr_c], state.y[c1], state.z[arr_c], tables)
    )
    slot_b = _LazyFreeSlots(state.lam).pop()
    work.lam[arr_b] = slot_b
    work.y[c1] = ya
    work.y[slot_b] = yb
    work.z[arr_a] = za
    work.z[arr_b] = zb
    return work, delta, "split"


def canonicalize_partition(lam: np.ndarray) -> np.ndarray:
    """Relabel clusters 1, 2, ... by first appearance in record order."""
    lam = np.asarray(lam)
    _, first, inverse = np.unique(lam, return_index=True, return_inverse=True)
    order = np.argsort(first, kind="stable")
    rank = np.empty(order.size, dtype=np.int32)
    rank[order] = np.arange(1, order.size + 1, dtype=np.int32)
    return rank[inverse.ravel()]


def _debug_check(state, data, hyper, mode) -> None:
    from .model import state_consistent

    if not state_consistent(state, data, hyper, mode):
        raise ConsistencyError("state invariant violated during sampling")


# ---------------------------------------------------------------------------
# chain driver


def run_chain(
    data: RecordStore,
    hyper: Hyperparameters,
    config: ChainConfig,
    index: BlockIndex | None = None,
    engine: str = "auto",
    chain_index: int = 0,
) -> PosteriorSamples:
    """Run one MCMC chain and return the retained samples.

    ``index`` defaults to a single block containing every record.  The
    engine is the compiled core when available, else the pure NumPy
    implementation; both consume one documented random stream keyed by
    (config.seed, chain_index).
    """
    from . import engine as engine_mod

    config = config if isinstance(config, ChainConfig) else ChainConfig(**config)
    config.validate()
    if index is None:
        index = build_blocks(data, ())
    validate_blocking(index, hyper)
    eng_name, eng = engine_mod.resolve(engine)
    problem = engine_mod.pack_problem(data, hyper, index, Mode(config.mode))
    seed_seq = chain_stream(config.seed, chain_index)
    every = config.progress_every
    if every is None:
        every = max(1, config.sweeps // 10)

    def progress(sweep: int, n: int, acc: float) -> None:
        logger.info(
            "sweep %d/%d individuals=%d acceptance=%.4f",
            sweep, config.sweeps, n, acc,
        )

    t0 = time.perf_counter()
    out = eng.run(problem, config, seed_seq, progress if every else None, every)
    seconds = time.perf_counter() - t0

    raw = out["partitions"]
    canon = np.empty(raw.shape, dtype=np.int32)
    for i in range(raw.shape[0]):
        canon[i] = canonicalize_partition(raw[i])
    n_trace = canon.max(axis=1).astype(np.int64) if canon.size else np.zeros(0, np.int64)
    theta_trace = None
    if config.store_theta and out.get("theta") is not None:
        packed = out["theta"]
        theta_trace = [
            np.ascontiguousarray(packed[:, l, : M])
            for l, M in enumerate(data.schema.levels)
        ]
    stats = {
        "engine": eng_name,
        "seconds": seconds,
        "chain_index": chain_index,
        "proposals": int(out["proposals"]),
        "accepted": int(out["accepted"]),
        "merges_accepted": int(out["merges"]),
        "splits_accepted": int(out["splits"]),
        "conflict_rejections": int(out["conflicts"]),
        "exhausted_draws": int(out["exhausted"]),
        "states_checked": int(out["states_checked"]),
        "final_log_joint": float(out["final_log_joint"]),
    }
    return PosteriorSamples(
        partitions=canon,
        n_trace=n_trace,
        beta_trace=out["beta"],
        theta_trace=theta_trace,
        config=config,
        n_i=data.n_i,
        file_id=data.file_id.copy(),
        key_fields=index.key_fields,
        stats=stats,
    )
