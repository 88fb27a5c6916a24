"""Full-conditional updates against closed forms and recount oracles.

The distributional battery in _checks.py runs here at a reduced draw
count; the acceptance suite repeats it at 10^5 draws.
"""

import numpy as np
import pytest

from latentlink import (
    ConsistencyError,
    FieldSchema,
    Hyperparameters,
    RecordStore,
    init_state,
    resample_y,
    resample_z,
)
from latentlink.sampler import theta_posterior_counts
from _checks import run_all
from conftest import rng_of


@pytest.mark.parametrize("draws", [20_000])
def test_conditional_moment_battery(draws):
    results = run_all(draws)
    bad = [r for r in results if not r.ok]
    assert not bad, [f"{r.name}: z={r.z_score:.2f}" for r in bad]


def test_theta_counts_match_brute_force_recount():
    schema = FieldSchema.generic([3, 4])
    rng = rng_of(21)
    hyper = Hyperparameters.flat(schema, mu=2.0)
    for _ in range(25):
        data = RecordStore(
            schema,
            [
                np.column_stack(
                    [rng.integers(0, 3, size=4), rng.integers(0, 4, size=4)]
                ),
                np.column_stack(
                    [rng.integers(0, 3, size=3), rng.integers(0, 4, size=3)]
                ),
            ],
        )
        state = init_state(data, hyper, seed=int(rng.integers(2**31)))
        # random merges plus masking z
        for _ in range(3):
            r1, r2 = rng.choice(data.n_records, 2, replace=False)
            state.lam[r2] = state.lam[r1]
            for l in range(2):
                if data.x[r2, l] != state.y[state.lam[r2], l]:
                    state.z[r2, l] = 1
        counts = theta_posterior_counts(state, data, hyper)
        occupied = np.unique(state.lam)
        for l, m_levels in enumerate(schema.levels):
            brute = hyper.mu[l].astype(float).copy()
            for c in occupied:
                brute[state.y[c, l]] += 1
            for r in range(data.n_records):
                if state.z[r, l]:
                    brute[data.x[r, l]] += 1
            assert np.allclose(counts[l], brute)


def test_resample_z_blocked_field_stays_zero():
    schema = FieldSchema.generic([2, 2])
    data = RecordStore(schema, [np.array([[0, 1], [1, 0], [1, 1]])])
    hyper = Hyperparameters.flat(schema, blocked_fields=(1,))
    state = init_state(data, hyper, seed=0)
    rng = rng_of(4)
    for _ in range(200):
        resample_z(state, data, hyper, rng)
        assert not state.z[:, 1].any()


def test_resample_z_raises_on_blocked_mismatch():
    schema = FieldSchema.generic([3])
    data = RecordStore(schema, [np.array([[0], [1]])])
    hyper = Hyperparameters.flat(schema, blocked_fields=(0,))
    state = init_state(data, hyper, seed=0)
    state.lam[1] = state.lam[0]  # merge: records disagree on a blocked field
    with pytest.raises(ConsistencyError):
        resample_z(state, data, hyper, rng_of(0))


def test_resample_y_raises_on_conflicting_pins():
    schema = FieldSchema.generic([3])
    data = RecordStore(schema, [np.array([[0], [1]])])
    hyper = Hyperparameters.flat(schema)
    state = init_state(data, hyper, seed=0)
    state.lam[1] = state.lam[0]  # both z=0 but x differs: no valid y
    with pytest.raises(ConsistencyError):
        resample_y(state, data, hyper, rng_of(0))
