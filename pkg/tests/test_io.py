import json
import struct
import time

import numpy as np
import pytest

from latentlink import (
    ChainConfig,
    DataFormatError,
    FieldSchema,
    Hyperparameters,
    Mode,
    RecordStore,
    SamplesFormatError,
    generate,
    load_files,
    load_samples,
    run_chain,
    save_samples,
    write_files,
)
from conftest import fake_samples, toy_instance


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return str(path)


def test_labels_are_the_union_across_files(tmp_path):
    p1 = _write(tmp_path / "a.csv", "name,city\nann,rome\nbob,rome\n")
    p2 = _write(tmp_path / "b.csv", "name,city\nbob,lima\ncal,lima\n")
    data, truth = load_files([p1, p2])
    assert truth is None
    assert data.schema.names == ("name", "city")
    assert data.schema.labels[0] == ("ann", "bob", "cal")
    assert data.schema.labels[1] == ("lima", "rome")
    assert data.n_i == (2, 2)
    # codes follow the sorted union
    assert data.x.tolist() == [[0, 1], [1, 1], [1, 0], [2, 0]]


def test_column_order_may_differ_between_files(tmp_path):
    p1 = _write(tmp_path / "a.csv", "name,city\nann,rome\n")
    p2 = _write(tmp_path / "b.csv", "city,name\nrome,ann\n")
    data, _ = load_files([p1, p2])
    assert data.schema.names == ("name", "city")  # first file wins
    assert np.array_equal(data.files[0], data.files[1])


def test_data_format_errors(tmp_path):
    empty = _write(tmp_path / "empty.csv", "")
    with pytest.raises(DataFormatError, match="empty file"):
        load_files([empty])

    dup = _write(tmp_path / "dup.csv", "a,a\n1,2\n")
    with pytest.raises(DataFormatError, match="duplicate column"):
        load_files([dup])

    ragged = _write(tmp_path / "ragged.csv", "a,b\n1,2\n3\n")
    with pytest.raises(DataFormatError, match=r"ragged\.csv:3"):
        load_files([ragged])

    holes = _write(tmp_path / "holes.csv", "a,b\n1,\n")
    with pytest.raises(DataFormatError, match=r"holes\.csv:2.*column 'b'"):
        load_files([holes])

    p1 = _write(tmp_path / "x.csv", "a,b\n1,2\n")
    p2 = _write(tmp_path / "y.csv", "a,c\n1,2\n")
    with pytest.raises(DataFormatError, match="do not match"):
        load_files([p1, p2])

    with pytest.raises(DataFormatError, match="no input"):
        load_files([])

    missing_truth = _write(tmp_path / "t.csv", "a,b\n1,2\n")
    with pytest.raises(DataFormatError, match="missing truth column"):
        load_files([missing_truth], truth_column="entity_id")


def test_blank_lines_and_whitespace_are_tolerated(tmp_path):
    p = _write(tmp_path / "w.csv", "a,b\n\n 1 , 2 \n\n3,4\n\n")
    data, _ = load_files([p])
    assert data.n_records == 2
    assert data.schema.labels == (("1", "3"), ("2", "4"))


def test_truth_column_encoding(tmp_path):
    p1 = _write(tmp_path / "a.csv", "f,entity_id\nx,e7\ny,e9\n")
    p2 = _write(tmp_path / "b.csv", "f,entity_id\nx,e7\n")
    data, truth = load_files([p1, p2], truth_column="entity_id")
    assert data.schema.names == ("f",)
    assert truth is not None and truth.dtype == np.int64
    assert truth[0] == truth[2] and truth[0] != truth[1]


def test_semicolon_delimiter(tmp_path):
    p = _write(tmp_path / "s.csv", "a;b\n1;2\n")
    data, _ = load_files([p], delimiter=";")
    assert data.n_records == 1


def test_write_then_load_roundtrip(tmp_path):
    schema = FieldSchema.generic([12, 3])
    hyper = Hyperparameters.flat(schema)
    sim = generate(schema, 40, 3, file_sizes=25, distortion=0.1,
                   hyper=hyper, seed=5)
    paths = write_files(sim.data, str(tmp_path), truth=sim.truth)
    assert [p.rsplit("/", 1)[1] for p in paths] == [
        "file_1.csv", "file_2.csv", "file_3.csv",
    ]
    data, truth = load_files(paths, truth_column="entity_id")
    assert data.n_i == sim.data.n_i

    def decode(store):
        return [
            [store.schema.labels[l][store.x[r, l]] for l in range(store.p)]
            for r in range(store.n_records)
        ]

    assert decode(data) == decode(sim.data)
    # entity ids are re-encoded but induce the same partition
    from latentlink import canonicalize_partition

    assert np.array_equal(
        canonicalize_partition(sim.truth), canonicalize_partition(truth)
    )


def test_roundtrip_is_code_exact_when_all_levels_appear(tmp_path):
    # zero-padded generic labels sort in level order, so when every
    # level shows up the reloaded codes equal the originals
    schema = FieldSchema.generic([11, 3])
    x = np.stack(
        [np.arange(33) % 11, np.arange(33) % 3], axis=1
    ).astype(np.int64)
    store = RecordStore(schema, [x[:20], x[20:]])
    paths = write_files(store, str(tmp_path))
    data, _ = load_files(paths)
    assert data.schema.labels == schema.labels
    assert np.array_equal(data.x, store.x)


def test_samples_roundtrip(tmp_path, toy):
    data, hyper = toy
    config = ChainConfig(
        sweeps=60, updates_per_sweep=2, proposals_per_update=1,
        burn_in=10, thin=2, mode=Mode.DEDUP, corrected=True, seed=19,
        store_theta=True, progress_every=0,
    )
    samples = run_chain(data, hyper, config)
    path = str(tmp_path / "s.llps")
    save_samples(samples, path)
    loaded = load_samples(path)
    assert loaded.same_as(samples)
    assert loaded.n_i == samples.n_i
    assert loaded.config == samples.config
    assert loaded.key_fields == samples.key_fields
    assert loaded.theta_trace is not None
    for a, b in zip(loaded.theta_trace, samples.theta_trace):
        assert np.array_equal(a, b)
    # volatile stats are scrubbed, the rest survive
    assert "seconds" not in loaded.stats
    assert loaded.stats["proposals"] == samples.stats["proposals"]
    assert loaded.stats["engine"] == samples.stats["engine"]


def test_save_is_byte_reproducible(tmp_path, toy):
    data, hyper = toy
    config = ChainConfig(
        sweeps=40, updates_per_sweep=1, proposals_per_update=1,
        burn_in=0, thin=1, mode=Mode.LINK, corrected=False, seed=3,
        progress_every=0,
    )
    p1, p2 = str(tmp_path / "a.llps"), str(tmp_path / "b.llps")
    save_samples(run_chain(data, hyper, config), p1)
    save_samples(run_chain(data, hyper, config), p2)
    with open(p1, "rb") as f1, open(p2, "rb") as f2:
        assert f1.read() == f2.read()


def _valid_samples_bytes(tmp_path):
    s = fake_samples([[1, 1, 2], [1, 2, 3]], (3,))
    path = str(tmp_path / "ok.llps")
    save_samples(s, path)
    with open(path, "rb") as fh:
        return bytearray(fh.read())


def test_samples_format_errors(tmp_path):
    blob = _valid_samples_bytes(tmp_path)

    def reload(b, name):
        p = tmp_path / name
        p.write_bytes(bytes(b))
        return str(p)

    bad = bytearray(blob)
    bad[:4] = b"XXXX"
    with pytest.raises(SamplesFormatError, match="not a samples file"):
        load_samples(reload(bad, "magic.llps"))

    bad = bytearray(blob)
    struct.pack_into("<I", bad, 4, 99)  # version field
    with pytest.raises(SamplesFormatError, match="version"):
        load_samples(reload(bad, "version.llps"))

    with pytest.raises(SamplesFormatError):
        load_samples(reload(blob[:10], "trunc-header.llps"))

    with pytest.raises(SamplesFormatError):
        load_samples(reload(blob[:-12], "trunc-array.llps"))

    bad = bytearray(blob)
    header_len = struct.unpack_from("<I", bad, 8)[0]
    bad[12 : 12 + 4] = b"}{x,"  # corrupt the JSON header
    with pytest.raises(SamplesFormatError):
        load_samples(reload(bad, "badjson.llps"))

    bad = bytearray(blob) + b"extra"
    with pytest.raises(SamplesFormatError):
        load_samples(reload(bad, "trailing.llps"))

    assert header_len > 0  # sanity: the happy-path file parses
    load_samples(reload(blob, "fine.llps"))


def test_large_roundtrip_is_fast(tmp_path):
    rng = np.random.default_rng(0)
    rows = rng.integers(1, 400, size=(1000, 10_000))
    s = fake_samples(rows, (5000, 5000))
    path = str(tmp_path / "big.llps")
    t0 = time.perf_counter()
    save_samples(s, path)
    loaded = load_samples(path)
    elapsed = time.perf_counter() - t0
    assert loaded.same_as(s)
    assert elapsed < 2.0, f"roundtrip took {elapsed:.2f}s"


def test_header_is_json_inspectable(tmp_path):
    blob = _valid_samples_bytes(tmp_path)
    header_len = struct.unpack_from("<I", blob, 8)[0]
    head = json.loads(bytes(blob[12 : 12 + header_len]))
    assert head["config"]["mode"] in ("link", "dedup")
    assert any(name == "partitions" for name, _, _ in head["arrays"])
