"""Posterior analysis of linkage samples.

All quantities are empirical frequencies over the retained partitions.
Counts are integers and probabilities are formed by a single division,
so identities like "pattern totals sum to the total cluster count" hold
exactly.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

from .sampler import PosteriorSamples


def record_label(samples: PosteriorSamples, r: int) -> str:
    """Human-readable name of a record, 1-based, as file:row."""
    f, row = samples.record_coords(r)
    return f"{f + 1}:{row + 1}"


def iter_clusters(labels: np.ndarray) -> list[np.ndarray]:
    """Clusters of one partition as arrays of record indices."""
    order = np.argsort(labels, kind="stable")
    sorted_labels = labels[order]
    cuts = np.flatnonzero(np.diff(sorted_labels)) + 1
    return np.split(order, cuts)


def pairwise_match_prob(samples: PosteriorSamples, r1: int, r2: int) -> float:
    """Posterior probability that two records refer to one individual."""
    p = samples.partitions
    return float(np.mean(p[:, r1] == p[:, r2]))


def set_match_prob(samples: PosteriorSamples, records) -> float:
    """Posterior probability that all the records share one individual."""
    records = list(records)
    if not records:
        raise ValueError("empty record set")
    p = samples.partitions[:, records]
    return float(np.mean(np.all(p == p[:, :1], axis=1)))


def mms_prob(samples: PosteriorSamples, records) -> float:
    """Posterior probability that the records form a maximal matching set.

    The set must be one whole cluster: all records linked to each other
    and to nothing else.
    """
    records = list(records)
    if not records:
        raise ValueError("empty record set")
    p = samples.partitions
    sub = p[:, records]
    together = np.all(sub == sub[:, :1], axis=1)
    sizes = np.sum(p == p[:, records[0]][:, None], axis=1)
    return float(np.mean(together & (sizes == len(records))))


def _cluster_counters(samples: PosteriorSamples) -> list[Counter]:
    """Per record: counts of the exact cluster (as a frozenset) it fell in."""
    counters: list[Counter] = [Counter() for _ in range(samples.n_records)]
    for s in range(samples.n_samples):
        for cluster in iter_clusters(samples.partitions[s]):
            key = frozenset(int(r) for r in cluster)
            for r in key:
                counters[r][key] += 1
    return counters


def _best_cluster(counter: Counter) -> tuple[frozenset, int]:
    """Most frequent cluster; ties prefer smaller, then lexicographic."""
    return min(
        counter.items(),
        key=lambda kv: (-kv[1], len(kv[0]), tuple(sorted(kv[0]))),
    )


def most_probable_mms(
    samples: PosteriorSamples, record: int
) -> tuple[frozenset, float]:
    """The record's most probable maximal matching set and its probability."""
    if not 0 <= record < samples.n_records:
        raise IndexError(f"record {record} out of range")
    counters = Counter()
    p = samples.partitions
    col = p[:, record]
    for s in range(samples.n_samples):
        members = np.flatnonzero(p[s] == col[s])
        counters[frozenset(int(r) for r in members)] += 1
    best, cnt = _best_cluster(counters)
    return best, cnt / samples.n_samples


def shared_mms_partition(samples: PosteriorSamples) -> list[tuple[int, ...]]:
    """Point-estimate linkage: group records sharing one most probable MMS.

    Each record r is keyed by its most probable maximal matching set
    M_r (which always contains r), and records with identical keys form
    one estimated cluster.  Since every record carries exactly one key,
    the estimate is a partition: clusters are disjoint by construction
    and records whose set is not shared by its other members simply end
    up in smaller groups.
    """
    counters = _cluster_counters(samples)
    groups: dict[frozenset, list[int]] = {}
    for r, counter in enumerate(counters):
        best, _ = _best_cluster(counter)
        groups.setdefault(best, []).append(r)
    return sorted(tuple(sorted(g)) for g in groups.values())


def partition_from_clusters(
    clusters: list[tuple[int, ...]], n_records: int
) -> np.ndarray:
    """Label array (1-based, first-appearance order) from disjoint clusters."""
    labels = np.zeros(n_records, dtype=np.int32)
    for i, cluster in enumerate(clusters, start=1):
        for r in cluster:
            if labels[r]:
                raise ValueError(f"record {r} appears in two clusters")
            labels[r] = i
    if np.any(labels == 0):
        raise ValueError("clusters do not cover all records")
    from .sampler import canonicalize_partition

    return canonicalize_partition(labels)


@dataclass(frozen=True)
class PatternDistribution:
    """Per-record distribution over file-presence patterns.

    ``patterns[j]`` is a sorted tuple of file indices; ``counts[r, j]``
    is the number of samples in which record r's cluster had records
    from exactly that set of files.  Rows of ``counts`` sum to the
    sample count exactly.
    """

    patterns: tuple[tuple[int, ...], ...]
    counts: np.ndarray
    n_samples: int

    @property
    def probs(self) -> np.ndarray:
        return self.counts / self.n_samples


def kway_match_probs(samples: PosteriorSamples) -> PatternDistribution:
    """For each record, how often its cluster spans each subset of files."""
    k = samples.k
    n = samples.n_records
    file_id = samples.file_id
    counts_by_mask: dict[int, np.ndarray] = {}
    for s in range(samples.n_samples):
        for cluster in iter_clusters(samples.partitions[s]):
            mask = 0
            for f in np.unique(file_id[cluster]):
                mask |= 1 << int(f)
            if mask not in counts_by_mask:
                counts_by_mask[mask] = np.zeros(n, dtype=np.int64)
            counts_by_mask[mask][cluster] += 1
    masks_sorted = sorted(counts_by_mask)
    patterns = tuple(
        tuple(f for f in range(k) if mask >> f & 1) for mask in masks_sorted
    )
    counts = np.stack([counts_by_mask[m] for m in masks_sorted], axis=1)
    return PatternDistribution(patterns, counts, samples.n_samples)


@dataclass(frozen=True)
class NPosterior:
    """Posterior over the number of distinct individuals."""

    values: np.ndarray
    counts: np.ndarray
    mean: float
    sd: float

    @property
    def probs(self) -> np.ndarray:
        return self.counts / self.counts.sum()


def posterior_n(samples: PosteriorSamples) -> NPosterior:
    n_trace = samples.n_trace
    values, counts = np.unique(n_trace, return_counts=True)
    return NPosterior(
        values=values,
        counts=counts,
        mean=float(n_trace.mean()),
        sd=float(n_trace.std(ddof=0)),
    )


@dataclass(frozen=True)
class PatternCounts:
    """Posterior mean number of clusters per file-presence pattern.

    ``totals[j]`` counts clusters with pattern j over all samples, so
    ``totals.sum()`` equals the summed cluster counts of all samples
    and ``means = totals / n_samples`` satisfies
    sum(means) == mean(N) exactly up to one division.

    With duplicates allowed a pattern records which files appear at
    all; ``exact_totals`` additionally requires every present file to
    appear exactly once, and ``overcount_total`` counts the cluster
    slots excluded there (clusters holding two or more records of one
    file).
    """

    patterns: tuple[tuple[int, ...], ...]
    totals: np.ndarray
    exact_totals: np.ndarray
    overcount_total: int
    n_samples: int

    @property
    def means(self) -> np.ndarray:
        return self.totals / self.n_samples

    @property
    def exact_means(self) -> np.ndarray:
        return self.exact_totals / self.n_samples


def pattern_counts(samples: PosteriorSamples) -> PatternCounts:
    """Cluster counts by file-presence pattern, averaged over samples."""
    k = samples.k
    file_id = samples.file_id
    totals: dict[int, int] = {}
    exact: dict[int, int] = {}
    over = 0
    for s in range(samples.n_samples):
        for cluster in iter_clusters(samples.partitions[s]):
            fids = file_id[cluster]
            present = np.unique(fids)
            mask = 0
            for f in present:
                mask |= 1 << int(f)
            totals[mask] = totals.get(mask, 0) + 1
            if present.size == fids.size:
                exact[mask] = exact.get(mask, 0) + 1
            else:
                over += 1
    masks_sorted = sorted(totals)
    patterns = tuple(
        tuple(f for f in range(k) if mask >> f & 1) for mask in masks_sorted
    )
    return PatternCounts(
        patterns=patterns,
        totals=np.array([totals[m] for m in masks_sorted], dtype=np.int64),
        exact_totals=np.array(
            [exact.get(m, 0) for m in masks_sorted], dtype=np.int64
        ),
        overcount_total=over,
        n_samples=samples.n_samples,
    )


def pattern_label(pattern: tuple[int, ...]) -> str:
    """Pattern as 1-based file indices joined with '+', e.g. '1+3'."""
    return "+".join(str(f + 1) for f in pattern)


@dataclass(frozen=True)
class ThresholdLinks:
    """Record pairs whose pairwise match probability exceeds a cutoff.

    Pairwise probabilities are not transitive: r-s and s-t may both
    pass the threshold while r-t fails, so this set of links need not
    form a partition.  ``transitive`` reports whether this particular
    result happens to be closed.
    """

    threshold: float
    pairs: tuple[tuple[int, int], ...]
    probs: np.ndarray
    transitive: bool


def threshold_links(samples: PosteriorSamples, threshold: float) -> ThresholdLinks:
    """All record pairs with co-membership frequency above the threshold."""
    if not 0.0 < threshold <= 1.0:
        raise ValueError("threshold must lie in (0, 1]")
    counts: dict[tuple[int, int], int] = {}
    for s in range(samples.n_samples):
        for cluster in iter_clusters(samples.partitions[s]):
            c = np.sort(cluster)
            for i in range(c.size):
                for j in range(i + 1, c.size):
                    key = (int(c[i]), int(c[j]))
                    counts[key] = counts.get(key, 0) + 1
    S = samples.n_samples
    picked = {k: v for k, v in counts.items() if v / S > threshold}
    pairs = tuple(sorted(picked))
    probs = np.array([picked[p] / S for p in pairs])
    # closure check: links as a graph, every connected component a clique
    adj: dict[int, set[int]] = {}
    for r, s2 in pairs:
        adj.setdefault(r, set()).add(s2)
        adj.setdefault(s2, set()).add(r)
    transitive = True
    seen: set[int] = set()
    for start in adj:
        if start in seen:
            continue
        comp = {start}
        stack = [start]
        while stack:
            cur = stack.pop()
            for nb in adj[cur]:
                if nb not in comp:
                    comp.add(nb)
                    stack.append(nb)
        seen |= comp
        need = len(comp) * (len(comp) - 1) // 2
        have = sum(1 for pr in pairs if pr[0] in comp and pr[1] in comp)
        if have != need:
            transitive = False
            break
    return ThresholdLinks(threshold, pairs, probs, transitive)
