"""Accuracy measures against a known ground truth.

Link counts follow the pairwise bookkeeping convention of multi-file
matching studies: with T the correctly linked pairs, F the falsely
linked pairs and M the missed pairs,

    false negative rate  FNR = M / (T + M)
    false positive rate  FPR = F / (T + M),

both normalized by the number of truth pairs.  The share of estimated
links that are wrong, F / (F + T), is reported alongside since the FPR
above is a rate relative to true matches, not to emitted links.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .analysis import iter_clusters
from .sampler import PosteriorSamples


@dataclass(frozen=True)
class LinkCounts:
    """Pair counts of an estimated linkage against the truth."""

    true_links: float
    false_links: float
    missing_links: float

    @property
    def truth_links(self) -> float:
        return self.true_links + self.missing_links

    @property
    def fnr(self) -> float:
        d = self.truth_links
        return self.missing_links / d if d else 0.0

    @property
    def fpr(self) -> float:
        d = self.truth_links
        return self.false_links / d if d else 0.0

    @property
    def false_link_share(self) -> float:
        d = self.false_links + self.true_links
        return self.false_links / d if d else 0.0


def _pairs(m: np.ndarray) -> np.ndarray:
    return m * (m - 1) // 2


def partition_link_counts(partition: np.ndarray, truth: np.ndarray) -> LinkCounts:
    """Exact pair counts for one partition, by per-cluster group-by.

    Runs in O(n) rather than scanning all record pairs: within each
    estimated cluster, pairs sharing a truth id are true links and the
    rest are false; missing links are the truth pairs never linked.
    """
    partition = np.asarray(partition)
    truth = np.asarray(truth)
    if partition.shape != truth.shape:
        raise ValueError("partition and truth must have equal length")
    true_links = 0
    est_links = 0
    for cluster in iter_clusters(partition):
        m = cluster.size
        est_links += m * (m - 1) // 2
        if m > 1:
            _, cnt = np.unique(truth[cluster], return_counts=True)
            true_links += int(_pairs(cnt).sum())
    _, tcnt = np.unique(truth, return_counts=True)
    total_truth = int(_pairs(tcnt).sum())
    return LinkCounts(
        true_links=float(true_links),
        false_links=float(est_links - true_links),
        missing_links=float(total_truth - true_links),
    )


def posterior_link_counts(
    samples: PosteriorSamples, truth: np.ndarray
) -> LinkCounts:
    """Posterior mean pair counts over all retained partitions."""
    truth = np.asarray(truth)
    if truth.shape != (samples.n_records,):
        raise ValueError("truth must have one entry per record")
    t = f = m = 0.0
    for s in range(samples.n_samples):
        c = partition_link_counts(samples.partitions[s], truth)
        t += c.true_links
        f += c.false_links
        m += c.missing_links
    S = samples.n_samples
    return LinkCounts(t / S, f / S, m / S)


@dataclass(frozen=True)
class ConfusionMatrix:
    """Record counts by (estimated pattern, true pattern).

    Rows index the file-presence pattern of the record's estimated
    cluster, columns the pattern of its true cluster.  Off-diagonal
    mass is linkage error.  Counts are averaged over samples when
    built from posterior draws.
    """

    patterns: tuple[tuple[int, ...], ...]
    counts: np.ndarray

    def row_normalized(self) -> np.ndarray:
        sums = self.counts.sum(axis=1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            out = np.where(sums > 0, self.counts / sums, 0.0)
        return out

    @property
    def accuracy(self) -> float:
        tot = self.counts.sum()
        return float(np.trace(self.counts) / tot) if tot else 0.0


def _record_patterns(partition: np.ndarray, file_id: np.ndarray) -> np.ndarray:
    """File-presence bitmask of each record's cluster."""
    masks = np.zeros(partition.size, dtype=np.int64)
    for cluster in iter_clusters(partition):
        mask = 0
        for fv in np.unique(file_id[cluster]):
            mask |= 1 << int(fv)
        masks[cluster] = mask
    return masks


def confusion_matrix(
    samples_or_partition,
    truth: np.ndarray,
    file_id: np.ndarray | None = None,
) -> ConfusionMatrix:
    """Cross-tabulate estimated vs true file-presence patterns per record."""
    truth = np.asarray(truth)
    if isinstance(samples_or_partition, PosteriorSamples):
        samples = samples_or_partition
        file_id = samples.file_id
        partitions = samples.partitions
        weight = 1.0 / samples.n_samples
    else:
        if file_id is None:
            raise ValueError("file_id is required with a bare partition")
        partitions = np.asarray(samples_or_partition)[None, :]
        weight = 1.0
    k = int(file_id.max()) + 1
    true_masks = _record_patterns(truth, file_id)
    agg: dict[tuple[int, int], float] = {}
    for s in range(partitions.shape[0]):
        est_masks = _record_patterns(partitions[s], file_id)
        pairs, cnt = np.unique(
            np.stack([est_masks, true_masks], axis=1), axis=0, return_counts=True
        )
        for (em, tm), c in zip(pairs, cnt):
            key = (int(em), int(tm))
            agg[key] = agg.get(key, 0.0) + weight * int(c)
    all_masks = sorted({m for key in agg for m in key})
    idx = {m: i for i, m in enumerate(all_masks)}
    counts = np.zeros((len(all_masks), len(all_masks)))
    for (em, tm), c in agg.items():
        counts[idx[em], idx[tm]] = c
    patterns = tuple(
        tuple(f for f in range(k) if mask >> f & 1) for mask in all_masks
    )
    return ConfusionMatrix(patterns, counts)


@dataclass(frozen=True)
class PatternError:
    """Estimated vs true cluster count for one file-presence pattern."""

    pattern: tuple[int, ...]
    estimated: float
    true_count: int

    @property
    def relative_error(self) -> float | None:
        if self.true_count == 0:
            return None
        return (self.estimated - self.true_count) / self.true_count


def relative_pattern_errors(
    samples: PosteriorSamples, truth: np.ndarray
) -> list[PatternError]:
    """Posterior-mean pattern counts compared with the truth's counts."""
    from .analysis import pattern_counts

    pc = pattern_counts(samples)
    true_masks: dict[int, int] = {}
    for cluster in iter_clusters(np.asarray(truth)):
        mask = 0
        for fv in np.unique(samples.file_id[cluster]):
            mask |= 1 << int(fv)
        true_masks[mask] = true_masks.get(mask, 0) + 1
    est = {p: m for p, m in zip(pc.patterns, pc.means)}
    k = samples.k
    all_patterns = set(est) | {
        tuple(f for f in range(k) if mask >> f & 1) for mask in true_masks
    }
    out = []
    for p in sorted(all_patterns):
        mask = 0
        for f in p:
            mask |= 1 << f
        out.append(
            PatternError(
                pattern=p,
                estimated=float(est.get(p, 0.0)),
                true_count=int(true_masks.get(mask, 0)),
            )
        )
    return out
