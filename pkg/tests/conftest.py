import numpy as np
import pytest

from latentlink import (
    ChainConfig,
    FieldSchema,
    Hyperparameters,
    Mode,
    RecordStore,
    run_chain,
)


def toy_instance():
    """5 records, 2 files, 2 binary fields: small enough to enumerate."""
    schema = FieldSchema.generic([2, 2])
    data = RecordStore(
        schema,
        [
            np.array([[0, 1], [1, 0], [0, 0]]),
            np.array([[0, 1], [1, 1]]),
        ],
    )
    hyper = Hyperparameters.flat(schema)
    return data, hyper


@pytest.fixture
def toy():
    return toy_instance()


@pytest.fixture(scope="session")
def toy_chain_link():
    """A moderately long corrected chain on the toy instance (LINK)."""
    data, hyper = toy_instance()
    config = ChainConfig(
        sweeps=30_000,
        updates_per_sweep=1,
        proposals_per_update=1,
        burn_in=2_000,
        thin=1,
        mode=Mode.LINK,
        corrected=True,
        seed=101,
        progress_every=0,
    )
    return data, hyper, run_chain(data, hyper, config)


def rng_of(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


def fake_samples(rows, n_i):
    """Wrap literal partition rows in a samples container for testing."""
    from latentlink.sampler import PosteriorSamples, canonicalize_partition

    parts = np.asarray(rows, dtype=np.int32)
    canon = np.stack([canonicalize_partition(r) for r in parts]).astype(np.int32)
    file_id = np.concatenate(
        [np.full(n, f, dtype=np.int32) for f, n in enumerate(n_i)]
    )
    config = ChainConfig(
        sweeps=len(rows), updates_per_sweep=1, proposals_per_update=1,
        burn_in=0, thin=1, mode=Mode.DEDUP, corrected=False, seed=0,
        progress_every=0,
    )
    return PosteriorSamples(
        partitions=canon,
        n_trace=canon.max(axis=1).astype(np.int64),
        beta_trace=np.zeros((len(rows), 1)),
        theta_trace=None,
        config=config,
        n_i=tuple(n_i),
        file_id=file_id,
        key_fields=(),
        stats={},
    )
