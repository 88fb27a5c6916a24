import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from latentlink import (
    LinkCounts,
    PatternError,
    confusion_matrix,
    partition_link_counts,
    posterior_link_counts,
    relative_pattern_errors,
)
from latentlink.analysis import pattern_label
from conftest import fake_samples, rng_of
from oracles import pair_scan_counts


def test_rate_formulas_on_fractional_counts():
    # fractional counts arise naturally as posterior means
    c = LinkCounts(true_links=25196, false_links=1298.9, missing_links=3050)
    assert c.truth_links == 28246
    assert round(c.fnr, 3) == 0.108
    assert round(c.fpr, 3) == 0.046
    assert c.false_link_share == pytest.approx(1298.9 / (1298.9 + 25196))
    # a heavier-error row under the same convention
    d = LinkCounts(true_links=25196, false_links=10595, missing_links=3050)
    assert abs(d.fpr - 0.375) < 5e-4


def test_rates_guard_empty_denominators():
    z = LinkCounts(0.0, 0.0, 0.0)
    assert z.fnr == 0.0 and z.fpr == 0.0 and z.false_link_share == 0.0


def test_perfect_estimate_has_zero_error():
    truth = np.array([1, 2, 1, 3, 2, 3])
    c = partition_link_counts(truth, truth)
    assert c.false_links == 0.0
    assert c.missing_links == 0.0
    assert c.true_links == 3.0
    assert c.fnr == 0.0 and c.fpr == 0.0


def test_counts_match_pair_scan():
    rng = rng_of(7)
    for _ in range(30):
        n = int(rng.integers(2, 40))
        part = rng.integers(1, 6, size=n)
        truth = rng.integers(1, 6, size=n)
        c = partition_link_counts(part, truth)
        t, f, m = pair_scan_counts(part, truth)
        assert (c.true_links, c.false_links, c.missing_links) == (t, f, m)


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.integers(1, 5), min_size=2, max_size=12),
    st.lists(st.integers(1, 5), min_size=2, max_size=12),
)
def test_pair_conservation(part, truth):
    n = min(len(part), len(truth))
    part, truth = np.asarray(part[:n]), np.asarray(truth[:n])
    c = partition_link_counts(part, truth)
    _, tcnt = np.unique(truth, return_counts=True)
    truth_pairs = int((tcnt * (tcnt - 1) // 2).sum())
    _, pcnt = np.unique(part, return_counts=True)
    est_pairs = int((pcnt * (pcnt - 1) // 2).sum())
    assert c.true_links + c.missing_links == truth_pairs
    assert c.true_links + c.false_links == est_pairs


def test_length_mismatch_raises():
    with pytest.raises(ValueError):
        partition_link_counts(np.array([1, 2]), np.array([1, 2, 3]))
    s = fake_samples([[1, 2, 3]], (3,))
    with pytest.raises(ValueError):
        posterior_link_counts(s, np.array([1, 2]))


def test_posterior_link_counts_average_per_sample_counts():
    truth = np.array([1, 1, 2, 2])
    rows = [
        [1, 1, 2, 2],  # perfect: T=2 F=0 M=0
        [1, 2, 2, 2],  # T=1 F=2 M=1
    ]
    c = posterior_link_counts(fake_samples(rows, (4,)), truth)
    assert c.true_links == pytest.approx(1.5)
    assert c.false_links == pytest.approx(1.0)
    assert c.missing_links == pytest.approx(0.5)


def test_confusion_matrix_single_partition():
    file_id = np.array([0, 0, 1], dtype=np.int32)
    truth = np.array([1, 2, 3])
    est = np.array([1, 2, 1])
    cm = confusion_matrix(est, truth, file_id=file_id)
    labels = [pattern_label(p) for p in cm.patterns]
    assert labels == ["1", "2", "1+2"]
    want = np.zeros((3, 3))
    # records 0 and 2 sit in an estimated 1+2 cluster; their true
    # clusters are singletons in file 1 and file 2 respectively
    want[2, 0] = 1  # record 0: est 1+2, true 1
    want[0, 0] = 1  # record 1: est 1, true 1
    want[2, 1] = 1  # record 2: est 1+2, true 2
    assert np.array_equal(cm.counts, want)
    assert cm.counts.sum() == 3
    assert cm.accuracy == pytest.approx(1 / 3)


def test_confusion_matrix_identity_on_truth():
    file_id = np.array([0, 0, 1, 1], dtype=np.int32)
    truth = np.array([1, 2, 1, 3])
    cm = confusion_matrix(truth, truth, file_id=file_id)
    assert np.array_equal(cm.counts, np.diag(np.diag(cm.counts)))
    assert cm.accuracy == 1.0
    rn = cm.row_normalized()
    nonzero = cm.counts.sum(axis=1) > 0
    assert np.allclose(rn[nonzero].sum(axis=1), 1.0)


def test_confusion_matrix_averages_over_samples():
    truth = np.array([1, 1, 2])
    rows = [[1, 1, 2], [1, 2, 3]]
    s = fake_samples(rows, (2, 1))
    cm = confusion_matrix(s, truth)
    assert cm.counts.sum() == pytest.approx(3.0)  # records, not pairs
    # half the samples are perfect, so diagonal mass is at least 1.5
    assert np.trace(cm.counts) >= 1.5
    with pytest.raises(ValueError):
        confusion_matrix(np.array([1, 1, 2]), truth)  # bare partition, no file_id


def test_relative_pattern_errors():
    assert PatternError((0,), 7964.0, 7955).relative_error == pytest.approx(
        0.0011, abs=5e-5
    )
    assert PatternError((0,), 3.0, 0).relative_error is None

    truth = np.array([1, 2, 1, 3])  # records 0 and 2 cross files
    s = fake_samples([[1, 2, 1, 3]] * 3, (2, 2))  # point mass on the truth
    errs = relative_pattern_errors(s, truth)
    assert errs, "expected at least one pattern"
    for e in errs:
        assert e.relative_error == pytest.approx(0.0)

    # estimate misses the cross-file pattern entirely
    s2 = fake_samples([[1, 2, 3, 4]] * 2, (2, 2))
    errs2 = {e.pattern: e for e in relative_pattern_errors(s2, truth)}
    assert errs2[(0, 1)].estimated == 0.0
    assert errs2[(0, 1)].true_count == 1
    assert errs2[(0, 1)].relative_error == pytest.approx(-1.0)
