"""Acceptance suite: eight end-to-end criteria, one pass/fail line each.

Each test prints its verdict through capsys.disabled() so the lines
appear in normal pytest runs.  Tolerances are part of the criteria and
are not to be loosened; see the per-test docstrings for the exact
claim being verified.
"""

from __future__ import annotations

import time

import numpy as np

from latentlink import (
    ChainConfig,
    FieldSchema,
    Hyperparameters,
    Mode,
    RecordStore,
    run_chain,
)
from latentlink.analysis import (
    mms_prob,
    pattern_counts,
    kway_match_probs,
    posterior_n,
    set_match_prob,
    shared_mms_partition,
)
from latentlink.evaluation import LinkCounts
from latentlink.sampler import ConsistencyError
from latentlink.simulate import distortion_sweep, generate

from _checks import run_all
from conftest import toy_instance
from oracles import exact_partition_posterior, total_variation


def _verdict(capsys, n: int, ok: bool, detail: str) -> None:
    with capsys.disabled():
        print(f"\n[criterion {n}] {'PASS' if ok else 'FAIL'}: {detail}")
    assert ok, f"criterion {n}: {detail}"


# -- 1: exact-posterior oracle equivalence ----------------------------------


def test_criterion_1_exact_posterior(capsys):
    """Corrected chain matches the enumerated partition posterior.

    Instances of <= 5 records, 2 files, 2 binary fields; S_G = 2e5
    sweeps, burn-in 1e4; total-variation distance <= 0.05; < 2 min.
    """
    t0 = time.perf_counter()
    results = []

    data, hyper = toy_instance()
    cases = [("link-5", data, hyper, Mode.LINK)]

    schema = FieldSchema.generic([2, 2])
    data4 = RecordStore(
        schema,
        [np.array([[0, 1], [1, 1]]), np.array([[0, 1], [0, 0]])],
    )
    cases.append(("dedup-4", data4, Hyperparameters.flat(schema), Mode.DEDUP))

    for name, d, h, mode in cases:
        exact = exact_partition_posterior(d, h, mode)
        config = ChainConfig(
            sweeps=200_000,
            updates_per_sweep=1,
            proposals_per_update=1,
            burn_in=10_000,
            thin=1,
            mode=mode,
            corrected=True,
            seed=404,
            progress_every=0,
        )
        samples = run_chain(d, h, config)
        tv = total_variation(exact, map(tuple, samples.partitions))
        results.append((name, tv))

    seconds = time.perf_counter() - t0
    ok = all(tv <= 0.05 for _, tv in results) and seconds < 120.0
    detail = (
        ", ".join(f"{name} TV={tv:.4f}" for name, tv in results)
        + f" (limit 0.05), runtime {seconds:.1f}s (limit 120s)"
    )
    _verdict(capsys, 1, ok, detail)


# -- 2: full-conditional correctness -----------------------------------------


def test_criterion_2_full_conditionals(capsys):
    """resample_beta/theta/z/y moments within 3 SE over 1e5 draws."""
    results = run_all(100_000)
    bad = [r for r in results if not r.ok]
    worst = max(results, key=lambda r: r.z_score)
    ok = not bad
    detail = (
        f"{len(results)} checks, worst |z| = {worst.z_score:.2f} "
        f"({worst.name}, limit 3.0)"
        + (f"; failing: {[r.name for r in bad]}" if bad else "")
    )
    _verdict(capsys, 2, ok, detail)


# -- 3: consistency invariant over 1e6 sampled states ------------------------


def test_criterion_3_state_consistency(capsys):
    """1e6 sampled states: no z=0 => y=x violations, no LINK file dups.

    Every engine update validates the full state when debug_checks is
    set (raising ConsistencyError on any violation) and counts it in
    states_checked.  Randomized instances accumulate past 1e6 checked
    states; stored LINK partitions are re-verified directly.
    """
    rng = np.random.default_rng(7)
    total_checked = 0
    runs = 0
    while total_checked < 1_000_000:
        seed = int(rng.integers(2**31))
        k = int(rng.integers(2, 4))
        p = int(rng.integers(2, 5))
        levels = [int(rng.integers(2, 6)) for _ in range(p)]
        mode = Mode.LINK if runs % 2 == 0 else Mode.DEDUP
        sizes = [int(rng.integers(8, 15)) for _ in range(k)]
        sim = generate(
            FieldSchema.generic(levels),
            n_individuals=int(sum(sizes) * 0.7) + 2,
            k=k,
            file_sizes=sizes,
            distortion=float(rng.uniform(0, 0.3)),
            hyper=Hyperparameters.flat(FieldSchema.generic(levels)),
            mode=mode,
            seed=seed,
        )
        hyper = Hyperparameters.flat(sim.data.schema, a=1.0, b=19.0)
        config = ChainConfig(
            sweeps=120,
            updates_per_sweep=60,
            proposals_per_update=2,
            burn_in=20,
            thin=4,
            mode=mode,
            corrected=bool(runs % 3),
            seed=seed,
            debug_checks=True,
            progress_every=0,
        )
        engine = "python" if runs % 10 == 0 else "auto"
        try:
            samples = run_chain(sim.data, hyper, config, engine=engine)
        except ConsistencyError as err:  # pragma: no cover - must not happen
            _verdict(capsys, 3, False, f"consistency violation: {err}")
            return
        total_checked += samples.stats["states_checked"]
        runs += 1
        if mode is Mode.LINK:
            fid = sim.data.file_id
            for row in samples.partitions:
                pairs = set(zip(row.tolist(), fid.tolist()))
                assert len(pairs) == row.size, "within-file duplicate"
    ok = total_checked >= 1_000_000
    detail = (
        f"{total_checked:,} states checked across {runs} randomized runs, "
        "0 violations"
    )
    _verdict(capsys, 3, ok, detail)


# -- 4: linear scaling in N and S_M ------------------------------------------


def _per_sweep_seconds(data, hyper, updates, s_lo, s_hi, seed=3):
    """Per-sweep seconds via two-point differencing (cancels setup)."""
    times = {}
    for sweeps in (s_lo, s_hi):
        config = ChainConfig(
            sweeps=sweeps,
            updates_per_sweep=updates,
            proposals_per_update=1,
            burn_in=0,
            thin=max(1, sweeps),
            mode=Mode.LINK,
            corrected=False,
            seed=seed,
            progress_every=0,
        )
        samples = run_chain(data, hyper, config)
        times[sweeps] = samples.stats["seconds"]
    return (times[s_hi] - times[s_lo]) / (s_hi - s_lo)


def test_criterion_4_linear_scaling(capsys):
    """Per-sweep wall time: log-log slope 1.0 +/- 0.2 in N and in S_M.

    N in {1e3, 1e4, 1e5} at p=4, M=30, S_M=1000; S_M in
    {250, 1000, 4000} at N=1e4.
    """
    schema = FieldSchema.generic([30, 30, 30, 30])
    hyper = Hyperparameters.flat(schema)

    def dataset(n_total):
        half = n_total // 2
        sim = generate(
            schema,
            n_individuals=int(0.7 * n_total),
            k=2,
            file_sizes=[half, half],
            distortion=0.01,
            hyper=hyper,
            seed=n_total,
        )
        return sim.data

    sizes = [1_000, 10_000, 100_000]
    plan = {1_000: (10, 60), 10_000: (4, 16), 100_000: (2, 6)}
    per_sweep_n = [
        _per_sweep_seconds(dataset(n), hyper, 1000, *plan[n]) for n in sizes
    ]
    slope_n = float(np.polyfit(np.log(sizes), np.log(per_sweep_n), 1)[0])

    data = dataset(10_000)
    sms = [250, 1000, 4000]
    sm_plan = {250: (8, 32), 1000: (3, 12), 4000: (2, 6)}
    per_sweep_sm = [
        _per_sweep_seconds(data, hyper, sm, *sm_plan[sm]) for sm in sms
    ]
    slope_sm = float(np.polyfit(np.log(sms), np.log(per_sweep_sm), 1)[0])

    ok = 0.8 <= slope_n <= 1.2 and 0.8 <= slope_sm <= 1.2
    detail = (
        f"slope vs N = {slope_n:.3f}, slope vs S_M = {slope_sm:.3f} "
        "(limits 1.0 +/- 0.2)"
    )
    _verdict(capsys, 4, ok, detail)


# -- 5: simulation-study shape across distortion levels ----------------------


def test_criterion_5_distortion_sweep(capsys):
    """3 files x 2000 records, 4 fields, distortion 0 .. 5%.

    FNR non-decreasing (<= 1 inversion, within 0.02); FPR at 5% over
    3x FPR at 1%; posterior-N mean within 3% of truth at <= 1%
    distortion and degraded at 5%; under 30 minutes.
    """
    t0 = time.perf_counter()
    schema = FieldSchema.generic([48, 600, 600, 600])
    hyper = Hyperparameters(
        a=np.array([0.5, 0.5, 0.5, 0.5]),
        b=np.array([np.inf, 199.0, 199.0, 199.0]),
        mu=(
            np.full(48, 50.0),
            np.full(600, 1.0),
            np.full(600, 1.0),
            np.full(600, 1.0),
        ),
    )
    theta = [
        np.full(48, 1 / 48),
        np.full(600, 1 / 600),
        np.full(600, 1 / 600),
        np.full(600, 1 / 600),
    ]
    config = ChainConfig(
        sweeps=100,
        updates_per_sweep=600,
        proposals_per_update=50,
        burn_in=40,
        thin=2,
        mode=Mode.LINK,
        corrected=True,
        seed=0,
        progress_every=0,
    )
    levels = [0.0, 0.0025, 0.005, 0.01, 0.02, 0.05]
    rows = distortion_sweep(
        schema,
        n_individuals=4200,
        k=3,
        file_sizes=[2000, 2000, 2000],
        levels=levels,
        key_fields=(0,),
        hyper=hyper,
        config=config,
        theta=theta,
        seed=2025,
    )
    seconds = time.perf_counter() - t0

    fnrs = [r.fnr for r in rows]
    inversions = [
        (lo, hi) for lo, hi in zip(fnrs, fnrs[1:]) if hi < lo
    ]
    fnr_ok = len(inversions) <= 1 and all(
        lo - hi <= 0.02 for lo, hi in inversions
    )
    fpr1, fpr5 = rows[3].fpr, rows[5].fpr
    fpr_ok = fpr5 > 3.0 * fpr1 if fpr1 > 0 else fpr5 > 0
    low_errs = [abs(r.n_relative_error) for r in rows[:4]]
    n_ok = max(low_errs) <= 0.03
    degrade_ok = abs(rows[5].n_relative_error) > max(low_errs)
    time_ok = seconds < 1800.0

    ok = fnr_ok and fpr_ok and n_ok and degrade_ok and time_ok
    detail = (
        "FNR " + "->".join(f"{v:.3f}" for v in fnrs)
        + f" ({len(inversions)} inversion(s)); "
        f"FPR 5%/1% = {fpr5:.3f}/{fpr1:.3f}; "
        f"max |N err| at <=1% = {max(low_errs):.4f} (limit 0.03); "
        f"|N err| at 5% = {abs(rows[5].n_relative_error):.4f}; "
        f"runtime {seconds:.0f}s (limit 1800s)"
    )
    _verdict(capsys, 5, ok, detail)


# -- 6: metric formulas against the published table --------------------------


def test_criterion_6_metric_formulas(capsys):
    """Literal published counts reproduce the published FNR and FPR."""
    counts = LinkCounts(
        true_links=25196.0, false_links=1298.9, missing_links=3050.0
    )
    fnr, fpr = counts.fnr, counts.fpr
    dup = LinkCounts(
        true_links=25196.0, false_links=10595.0, missing_links=3050.0
    )
    ok = (
        round(fnr, 3) == 0.108
        and round(fpr, 3) == 0.046
        and abs(dup.fpr - 0.375) < 5e-4
    )
    detail = (
        f"FNR={fnr:.4f} (want 0.108), FPR={fpr:.4f} (want 0.046), "
        f"duplicate-mode FPR={dup.fpr:.4f} (want 0.375 +/- 5e-4)"
    )
    _verdict(capsys, 6, ok, detail)


# -- 7: transitivity of the shared-MMS point estimate -------------------------


def test_criterion_7_shared_mms_transitive(capsys):
    """100 randomized desk-scale runs: clusters pairwise disjoint, all."""
    rng = np.random.default_rng(11)
    violations = 0
    for run in range(100):
        seed = int(rng.integers(2**31))
        k = int(rng.integers(2, 4))
        p = int(rng.integers(2, 4))
        levels = [int(rng.integers(3, 9)) for _ in range(p)]
        schema = FieldSchema.generic(levels)
        hyper = Hyperparameters.flat(schema, a=1.0, b=19.0)
        mode = Mode.LINK if run % 2 == 0 else Mode.DEDUP
        sizes = [int(rng.integers(6, 13)) for _ in range(k)]
        sim = generate(
            schema,
            n_individuals=int(sum(sizes) * 0.8) + 2,
            k=k,
            file_sizes=sizes,
            distortion=float(rng.uniform(0, 0.15)),
            hyper=hyper,
            mode=mode,
            seed=seed,
        )
        config = ChainConfig(
            sweeps=120,
            updates_per_sweep=20,
            proposals_per_update=1,
            burn_in=20,
            thin=2,
            mode=mode,
            corrected=bool(run % 2),
            seed=seed,
            progress_every=0,
        )
        samples = run_chain(sim.data, hyper, config)
        clusters = shared_mms_partition(samples)
        seen: set[int] = set()
        cover = 0
        for cluster in clusters:
            if seen & set(cluster):
                violations += 1
                break
            seen.update(cluster)
            cover += len(cluster)
        else:
            if cover != sim.data.n_records:
                violations += 1
    ok = violations == 0
    detail = f"100 runs, {violations} disjointness violations (want 0)"
    _verdict(capsys, 7, ok, detail)


# -- 8: analysis identities ----------------------------------------------------


def test_criterion_8_analysis_identities(capsys, toy_chain_link):
    """pattern totals == N trace sum; k-way rows sum to 1; mms <= set."""
    _, _, link_samples = toy_chain_link
    data, hyper = toy_instance()
    dedup = run_chain(
        data,
        hyper,
        ChainConfig(
            sweeps=4_000,
            updates_per_sweep=2,
            proposals_per_update=1,
            burn_in=500,
            thin=1,
            mode=Mode.DEDUP,
            corrected=True,
            seed=77,
            progress_every=0,
        ),
    )
    rng = np.random.default_rng(23)
    checked_queries = 0
    for samples in (link_samples, dedup):
        counts = pattern_counts(samples)
        assert int(counts.totals.sum()) == int(samples.n_trace.sum())
        npost = posterior_n(samples)
        assert abs(float(counts.means.sum()) - npost.mean) < 1e-12

        kway = kway_match_probs(samples)
        assert np.all(kway.counts.sum(axis=1) == samples.n_samples)
        assert np.allclose(kway.probs.sum(axis=1), 1.0, atol=1e-12)

        n = samples.n_records
        for _ in range(150):
            size = int(rng.integers(1, n + 1))
            records = rng.choice(n, size=size, replace=False).tolist()
            assert mms_prob(samples, records) <= set_match_prob(
                samples, records
            )
            checked_queries += 1
    ok = True
    detail = (
        "pattern totals match posterior N exactly on 2 chains; "
        f"k-way rows sum to 1; mms <= set on {checked_queries} queries"
    )
    _verdict(capsys, 8, ok, detail)
