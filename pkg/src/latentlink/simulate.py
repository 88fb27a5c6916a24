"""Model-based data generation for calibration studies.

A synthetic population of individuals is drawn from the model itself:
field distributions theta (given or drawn from the prior), individual
field vectors y, per-file samples of individuals, and records that copy
each individual's fields subject to per-field distortion.  Because the
generator matches the model, chains run on the output should recover
the truth up to the information lost to distortion, which is what the
distortion sweep measures.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .blocking import build_blocks
from .evaluation import LinkCounts, posterior_link_counts
from .model import FieldSchema, Hyperparameters, Mode, RecordStore
from .sampler import ChainConfig, run_chain


@dataclass(frozen=True)
class Population:
    """The latent individuals a simulation draws records from."""

    theta: list[np.ndarray]
    y: np.ndarray  # [n_individuals, p]

    @property
    def n_individuals(self) -> int:
        return int(self.y.shape[0])


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    return np.random.Generator(np.random.Philox(seed))


def draw_population(
    n_individuals: int,
    schema: FieldSchema,
    hyper: Hyperparameters | None = None,
    theta: list[np.ndarray] | None = None,
    seed=0,
) -> Population:
    """Draw theta (from Dirichlet(mu) unless given) and individual fields."""
    rng = _rng(seed)
    if theta is None:
        if hyper is None:
            raise ValueError("need hyper (for mu) or explicit theta")
        theta = [rng.dirichlet(hyper.mu[l]) for l in range(schema.p)]
    theta = [np.asarray(t, dtype=float) for t in theta]
    y = np.empty((n_individuals, schema.p), dtype=np.int64)
    for l, t in enumerate(theta):
        y[:, l] = rng.choice(t.size, size=n_individuals, p=t / t.sum())
    return Population(theta=theta, y=y)


def sample_memberships(
    n_individuals: int,
    k: int,
    file_sizes=None,
    inclusion: float | None = None,
    seed=0,
) -> list[np.ndarray]:
    """Which individual generated each record of each file.

    Either fixed per-file sizes (sampled without replacement, so no
    within-file duplicates) or a per-file inclusion probability.
    Explicit membership lists can be passed straight to generate() for
    duplicate-containing designs.
    """
    rng = _rng(seed)
    if (file_sizes is None) == (inclusion is None):
        raise ValueError("give exactly one of file_sizes or inclusion")
    out = []
    if file_sizes is not None:
        if isinstance(file_sizes, int):
            file_sizes = [file_sizes] * k
        if len(file_sizes) != k:
            raise ValueError("need one size per file")
        for size in file_sizes:
            if size > n_individuals:
                raise ValueError(
                    f"cannot draw {size} distinct individuals from "
                    f"{n_individuals}"
                )
            out.append(np.sort(rng.choice(n_individuals, size, replace=False)))
    else:
        if not 0.0 < inclusion <= 1.0:
            raise ValueError("inclusion must lie in (0, 1]")
        for _ in range(k):
            mask = rng.random(n_individuals) < inclusion
            out.append(np.flatnonzero(mask).astype(np.int64))
    return out


@dataclass(frozen=True)
class SimulatedData:
    """Records plus everything that generated them."""

    data: RecordStore
    truth: np.ndarray  # entity id per record
    z: np.ndarray  # distortion indicators actually applied
    memberships: list[np.ndarray]
    population: Population
    distortion: np.ndarray

    @property
    def n_entities_observed(self) -> int:
        return int(np.unique(self.truth).size)


def emit_records(
    population: Population,
    memberships: list[np.ndarray],
    schema: FieldSchema,
    distortion,
    blocked: np.ndarray | None = None,
    seed=0,
) -> SimulatedData:
    """Copy each sampled individual's fields, redrawing distorted cells.

    ``distortion`` is a scalar or per-field vector of redraw
    probabilities; distortion-free (blocked) fields are forced to zero.
    Distorted cells draw a fresh value from theta, which may coincide
    with the true one; z records the redraw, not disagreement.
    """
    rng = _rng(seed)
    p = schema.p
    d = np.asarray(distortion, dtype=float)
    if d.ndim == 0:
        d = np.full(p, float(d))
    if d.shape != (p,):
        raise ValueError("distortion must be scalar or one value per field")
    if np.any(d < 0) or np.any(d > 1):
        raise ValueError("distortion must lie in [0, 1]")
    if blocked is not None:
        d = np.where(np.asarray(blocked, dtype=bool), 0.0, d)
    mats = []
    zs = []
    truth_parts = []
    for entities in memberships:
        y = population.y[entities]
        z = rng.random((entities.size, p)) < d[None, :]
        x = y.copy()
        for l in range(p):
            idx = np.flatnonzero(z[:, l])
            if idx.size:
                t = population.theta[l]
                x[idx, l] = rng.choice(t.size, size=idx.size, p=t / t.sum())
        mats.append(x)
        zs.append(z)
        truth_parts.append(entities)
    data = RecordStore(schema, mats)
    return SimulatedData(
        data=data,
        truth=np.concatenate(truth_parts),
        z=np.concatenate(zs).astype(np.uint8),
        memberships=memberships,
        population=population,
        distortion=d,
    )


def generate(
    schema: FieldSchema,
    n_individuals: int,
    k: int,
    file_sizes=None,
    inclusion: float | None = None,
    memberships: list[np.ndarray] | None = None,
    distortion=0.0,
    hyper: Hyperparameters | None = None,
    theta: list[np.ndarray] | None = None,
    mode: Mode = Mode.LINK,
    seed=0,
) -> SimulatedData:
    """Draw a population and emit record files in one call."""
    mode = Mode(mode)
    ss = np.random.SeedSequence(seed)
    pop_seed, mem_seed, emit_seed = ss.spawn(3)
    pop = draw_population(
        n_individuals, schema, hyper=hyper, theta=theta, seed=_rng(pop_seed)
    )
    if memberships is None:
        memberships = sample_memberships(
            n_individuals, k, file_sizes=file_sizes, inclusion=inclusion,
            seed=_rng(mem_seed),
        )
    else:
        memberships = [np.asarray(m, dtype=np.int64) for m in memberships]
        if len(memberships) != k:
            raise ValueError("need one membership list per file")
        for i, m in enumerate(memberships):
            if m.size and (m.min() < 0 or m.max() >= n_individuals):
                raise ValueError(f"file {i}: entity id out of range")
            if mode is Mode.LINK and np.unique(m).size != m.size:
                raise ValueError(
                    f"file {i} repeats an individual, which the no-duplicate "
                    f"mode cannot represent"
                )
    blocked = hyper.blocked if hyper is not None else None
    return emit_records(
        pop, memberships, schema, distortion, blocked=blocked,
        seed=_rng(emit_seed),
    )


@dataclass(frozen=True)
class SweepRow:
    """Accuracy of one distortion level of a sweep."""

    level: float
    counts: LinkCounts
    n_mean: float
    n_sd: float
    n_true: int
    seconds: float

    @property
    def fnr(self) -> float:
        return self.counts.fnr

    @property
    def fpr(self) -> float:
        return self.counts.fpr

    @property
    def n_relative_error(self) -> float:
        return (self.n_mean - self.n_true) / self.n_true


def distortion_sweep(
    schema: FieldSchema,
    n_individuals: int,
    k: int,
    file_sizes,
    levels,
    key_fields: tuple[int, ...],
    hyper: Hyperparameters,
    config: ChainConfig,
    theta: list[np.ndarray] | None = None,
    seed=0,
    engine: str = "auto",
) -> list[SweepRow]:
    """Rerun the full pipeline at increasing distortion, fixed ground truth.

    The population and per-file memberships are drawn once, so every
    level links the same underlying individuals and differences between
    rows isolate the effect of noise.  Each level gets its own record
    emission (fresh distortion draws), chain run and evaluation.
    """
    ss = np.random.SeedSequence(seed)
    pop_seed, mem_seed, chain_seed = ss.spawn(3)
    pop = draw_population(
        n_individuals, schema, hyper=hyper, theta=theta, seed=_rng(pop_seed)
    )
    memberships = sample_memberships(
        n_individuals, k, file_sizes=file_sizes, seed=_rng(mem_seed)
    )
    rows = []
    for i, level in enumerate(levels):
        sim = emit_records(
            pop, memberships, schema, float(level), blocked=hyper.blocked,
            seed=np.random.SeedSequence((seed, 1000 + i)),
        )
        index = build_blocks(sim.data, key_fields)
        t0 = time.perf_counter()
        cfg_seed = int(chain_seed.generate_state(1)[0] % (2**31)) + i
        cfg = ChainConfig(
            **{**config.__dict__, "seed": cfg_seed}
        )
        samples = run_chain(sim.data, hyper, cfg, index, engine=engine)
        seconds = time.perf_counter() - t0
        counts = posterior_link_counts(samples, sim.truth)
        rows.append(
            SweepRow(
                level=float(level),
                counts=counts,
                n_mean=float(samples.n_trace.mean()),
                n_sd=float(samples.n_trace.std(ddof=0)),
                n_true=sim.n_entities_observed,
                seconds=seconds,
            )
        )
    return rows
