"""Core data model for latent-individual record linkage.

Records from k files are modeled as noisy copies of latent individuals.
Each record j in file i carries p categorical fields x_ijl.  The latent
structure is:

    lam_ij   label of the individual that generated record (i, j)
    y_cl     field values of latent individual c
    z_ijl    distortion flag: 0 means the record copied y exactly,
             1 means the field was redrawn from the population
             distribution theta_l
    theta_l  multinomial weights of field l, Dirichlet(mu_l) prior
    beta_l   distortion probability of field l, Beta(a_l, b_l) prior

The linkage prior is uniform over partitions of the records, and the
model is constrained so that an undistorted field always agrees with
its individual (z = 0 implies y = x).  Setting b_l to infinity pins
beta_l at zero, which declares field l distortion-free; such fields
may then serve as blocking keys.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np


class Mode(str, Enum):
    """Linkage regime.

    LINK forbids two records of the same file from sharing an
    individual, so clusters link records across files only.  DEDUP
    drops that restriction and also finds duplicates within a file.
    """

    LINK = "link"
    DEDUP = "dedup"


@dataclass(frozen=True)
class FieldSchema:
    """Names and categorical levels of the p fields, shared by all files."""

    names: tuple[str, ...]
    labels: tuple[tuple[str, ...], ...]

    def __post_init__(self):
        if len(self.names) != len(self.labels):
            raise ValueError("names and labels must have equal length")
        if not self.names:
            raise ValueError("schema needs at least one field")
        if len(set(self.names)) != len(self.names):
            raise ValueError("duplicate field names")
        for name, labs in zip(self.names, self.labels):
            if not labs:
                raise ValueError(f"field {name!r} has no levels")
            if len(set(labs)) != len(labs):
                raise ValueError(f"field {name!r} has duplicate levels")

    @property
    def p(self) -> int:
        return len(self.names)

    @property
    def levels(self) -> tuple[int, ...]:
        """Number of levels M_l per field."""
        return tuple(len(labs) for labs in self.labels)

    def field_index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"unknown field {name!r}") from None

    @classmethod
    def generic(cls, levels: "list[int] | tuple[int, ...]") -> "FieldSchema":
        """Schema with auto-generated names f1..fp and level labels v00..

        Labels are zero-padded so their lexical order equals level
        order; files written with them re-load to the same encoding.
        """
        names = tuple(f"f{i + 1}" for i in range(len(levels)))
        labels = tuple(
            tuple(f"v{m:0{len(str(M - 1))}d}" for m in range(M))
            for M in levels
        )
        return cls(names, labels)


class RecordStore:
    """The observed records of all k files, encoded as level indices.

    Rows of ``x`` are records in file order: file 0 first, then file 1,
    and so on.  ``file_id[r]`` gives the file of global record r and
    ``n_i`` the per-file record counts.
    """

    def __init__(self, schema: FieldSchema, per_file: list[np.ndarray]):
        if not per_file:
            raise ValueError("need at least one file")
        mats = []
        for i, mat in enumerate(per_file):
            mat = np.ascontiguousarray(mat, dtype=np.int64)
            if mat.ndim != 2 or mat.shape[1] != schema.p:
                raise ValueError(f"file {i}: expected shape (n, {schema.p})")
            mats.append(mat)
        self.schema = schema
        self.x = np.concatenate(mats, axis=0) if len(mats) > 1 else mats[0]
        self.n_i = tuple(int(m.shape[0]) for m in mats)
        self.file_id = np.repeat(
            np.arange(len(mats), dtype=np.int32), [m.shape[0] for m in mats]
        )
        self._offsets = np.concatenate(([0], np.cumsum(self.n_i)))
        for l, M in enumerate(schema.levels):
            col = self.x[:, l]
            if col.size and (col.min() < 0 or col.max() >= M):
                raise ValueError(f"field {schema.names[l]!r}: value out of range")

    @property
    def k(self) -> int:
        return len(self.n_i)

    @property
    def files(self) -> list[np.ndarray]:
        """Per-file views into ``x``, in file order."""
        return [
            self.x[self._offsets[i]:self._offsets[i + 1]]
            for i in range(self.k)
        ]

    @property
    def n_records(self) -> int:
        """Total record count, the upper bound on the number of individuals."""
        return int(self.x.shape[0])

    @property
    def p(self) -> int:
        return self.schema.p

    def record_index(self, file: int, row: int) -> int:
        """Global index of row ``row`` (0-based) of file ``file`` (0-based)."""
        if not 0 <= file < self.k:
            raise IndexError(f"file index {file} out of range")
        if not 0 <= row < self.n_i[file]:
            raise IndexError(f"row {row} out of range for file {file}")
        return int(self._offsets[file] + row)

    def record_coords(self, r: int) -> tuple[int, int]:
        """Inverse of record_index."""
        if not 0 <= r < self.n_records:
            raise IndexError(f"record {r} out of range")
        file = int(np.searchsorted(self._offsets, r, side="right") - 1)
        return file, int(r - self._offsets[file])


@dataclass(frozen=True)
class Hyperparameters:
    """Prior parameters: Beta(a_l, b_l) for beta_l, Dirichlet(mu_l) for theta_l.

    b_l = inf declares field l distortion-free (beta_l identically zero).
    """

    a: np.ndarray
    b: np.ndarray
    mu: tuple[np.ndarray, ...]

    def __post_init__(self):
        object.__setattr__(self, "a", np.asarray(self.a, dtype=np.float64))
        object.__setattr__(self, "b", np.asarray(self.b, dtype=np.float64))
        object.__setattr__(
            self, "mu", tuple(np.asarray(m, dtype=np.float64) for m in self.mu)
        )
        p = len(self.mu)
        if self.a.shape != (p,) or self.b.shape != (p,):
            raise ValueError("a and b must have one entry per field")
        if np.any(self.a <= 0) or np.any(self.b <= 0):
            raise ValueError("a and b must be positive")
        if np.any(np.isinf(self.a)):
            raise ValueError("a must be finite")
        for l, m in enumerate(self.mu):
            if m.ndim != 1 or m.size == 0 or np.any(m <= 0) or np.any(np.isinf(m)):
                raise ValueError(f"mu[{l}] must be a positive finite vector")

    @property
    def p(self) -> int:
        return len(self.mu)

    @property
    def blocked(self) -> np.ndarray:
        """Boolean mask of distortion-free fields (b_l = inf)."""
        return np.isinf(self.b)

    @classmethod
    def flat(
        cls,
        schema: FieldSchema,
        a: float = 5.0,
        b: float = 10.0,
        mu: float = 1.0,
        blocked_fields: tuple[int, ...] = (),
    ) -> "Hyperparameters":
        """Symmetric priors with scalar a, b, mu replicated across fields."""
        p = schema.p
        avec = np.full(p, float(a))
        bvec = np.full(p, float(b))
        bvec[list(blocked_fields)] = np.inf
        muvec = tuple(np.full(M, float(mu)) for M in schema.levels)
        return cls(avec, bvec, muvec)


@dataclass
class LatentState:
    """One configuration of all latent variables.

    ``lam[r]`` is the slot of record r's individual; slots are arbitrary
    ints in [0, n_records).  Row c of ``y`` is meaningful only while slot
    c is occupied (some record points at it).
    """

    lam: np.ndarray
    y: np.ndarray
    z: np.ndarray
    theta: list[np.ndarray]
    beta: np.ndarray

    @property
    def n_individuals(self) -> int:
        return count_individuals(self.lam)

    def occupied(self) -> np.ndarray:
        """Sorted array of occupied slots."""
        return np.unique(self.lam)

    def copy(self) -> "LatentState":
        return LatentState(
            lam=self.lam.copy(),
            y=self.y.copy(),
            z=self.z.copy(),
            theta=[t.copy() for t in self.theta],
            beta=self.beta.copy(),
        )


def count_individuals(lam: np.ndarray) -> int:
    """Number of distinct individuals referenced by the linkage."""
    return int(np.unique(np.asarray(lam)).size)


def _check_dims(state: LatentState, data: RecordStore, hyper: Hyperparameters):
    n, p = data.n_records, data.p
    if hyper.p != p:
        raise ValueError("hyperparameters do not match the schema")
    if state.lam.shape != (n,):
        raise ValueError("lam has wrong shape")
    if state.y.shape != (n, p) or state.z.shape != (n, p):
        raise ValueError("y or z has wrong shape")
    if state.beta.shape != (p,) or len(state.theta) != p:
        raise ValueError("theta or beta has wrong shape")
    for l, M in enumerate(data.schema.levels):
        if state.theta[l].shape != (M,):
            raise ValueError(f"theta[{l}] has wrong shape")
    if state.lam.min() < 0 or state.lam.max() >= n:
        raise ValueError("lam entries out of range")


_LOG_EPS = 1e-300  # floor under probabilities before taking logs


def _log_dirichlet_norm(mu: np.ndarray) -> float:
    return float(np.sum([math.lgamma(m) for m in mu]) - math.lgamma(mu.sum()))


def log_joint_posterior(
    state: LatentState, data: RecordStore, hyper: Hyperparameters
) -> float:
    """Log unnormalized joint density of (lam, y, z, theta, beta) given x.

    Includes the Beta and Dirichlet prior normalizing constants, so two
    states with different theta or beta are comparable at full scale.
    Returns -inf off the support: a consistency violation (z = 0 with
    y != x), distortion on a distortion-free field, or theta/beta
    outside their domains.
    """
    _check_dims(state, data, hyper)
    x, z, lam = data.x, state.z, state.lam
    n = data.n_records
    occ = state.occupied()
    yrec = state.y[lam]
    if np.any((z == 0) & (yrec != x)):
        return -math.inf
    if np.any((z != 0) & (z != 1)):
        return -math.inf
    blocked = hyper.blocked
    if np.any(state.beta[blocked] != 0.0):
        return -math.inf
    total = 0.0
    for l in range(data.p):
        th = state.theta[l]
        if th.min() < 0.0 or abs(th.sum() - 1.0) > 1e-12:
            return -math.inf
        beta = float(state.beta[l])
        if not 0.0 <= beta <= 1.0:
            return -math.inf
        logth = np.log(np.maximum(th, _LOG_EPS)) + np.where(th > 0, 0.0, -math.inf)
        zl = z[:, l].astype(bool)
        n1 = int(zl.sum())
        n0 = n - n1
        # record terms: distorted cells are fresh draws from theta,
        # undistorted cells contribute probability one given y
        if n1:
            total += float(logth[x[zl, l]].sum())
        # distortion indicators
        if n1:
            total += n1 * math.log(beta) if beta > 0 else -math.inf
        if n0:
            total += n0 * math.log1p(-beta) if beta < 1 else -math.inf
        # individual fields
        total += float(logth[state.y[occ, l]].sum())
        # priors
        mu = hyper.mu[l]
        w = np.where(mu == 1.0, 0.0, (mu - 1.0) * logth)
        total += float(w.sum()) - _log_dirichlet_norm(mu)
        if not blocked[l]:
            a, b = float(hyper.a[l]), float(hyper.b[l])
            lb = math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)
            total += (
                ((a - 1.0) * math.log(beta) if a != 1.0 else 0.0)
                if beta > 0
                else (0.0 if a == 1.0 else -math.inf)
            )
            total += (
                ((b - 1.0) * math.log1p(-beta) if b != 1.0 else 0.0)
                if beta < 1
                else (0.0 if b == 1.0 else -math.inf)
            )
            total -= lb
        if math.isnan(total):
            return -math.inf
    return float(total)


def state_consistent(
    state: LatentState,
    data: RecordStore,
    hyper: Hyperparameters,
    mode: Mode = Mode.DEDUP,
) -> bool:
    """Check every structural invariant of a latent state.

    Verifies the z = 0 implies y = x constraint, theta on the simplex,
    beta in [0, 1] and zero on distortion-free fields with no distortion
    flags there, and in LINK mode that no individual has two records
    from the same file.
    """
    _check_dims(state, data, hyper)
    yrec = state.y[state.lam]
    if np.any((state.z == 0) & (yrec != data.x)):
        return False
    if np.any((state.z != 0) & (state.z != 1)):
        return False
    for l in range(data.p):
        th = state.theta[l]
        if th.min() < 0.0 or abs(th.sum() - 1.0) > 1e-12:
            return False
    if np.any(state.beta < 0.0) or np.any(state.beta > 1.0):
        return False
    blocked = hyper.blocked
    if np.any(state.beta[blocked] != 0.0):
        return False
    if blocked.any() and np.any(state.z[:, blocked] != 0):
        return False
    if mode is Mode.LINK:
        pair = state.lam.astype(np.int64) * data.k + data.file_id
        if np.unique(pair).size != data.n_records:
            return False
    return True
