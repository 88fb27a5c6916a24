"""Command-line front end: link, dedup, simulate, evaluate, report.

Every command reads an optional key=value config file plus flag
overrides, writes its outputs under --out, and echoes the fully
resolved settings (defaults included) into metadata.json so a run can
be reproduced from its output directory alone.

Exit codes: 0 success; 2 usage, config or data errors (bad flags,
missing or malformed files, incompatible inputs); 1 unexpected
internal errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import __version__
from .analysis import (
    most_probable_mms,
    pattern_counts,
    pattern_label,
    posterior_n,
    threshold_links,
)
from .blocking import BlockingError, build_blocks, validate_blocking
from .engine import available_engines
from .evaluation import (
    confusion_matrix,
    posterior_link_counts,
    relative_pattern_errors,
)
from .io import (
    DataFormatError,
    SamplesFormatError,
    load_files,
    load_samples,
    save_samples,
    write_files,
)
from .model import FieldSchema, Hyperparameters, Mode
from .sampler import (
    DEFAULT_A,
    DEFAULT_B,
    DEFAULT_BURN_IN,
    DEFAULT_MU,
    DEFAULT_PROPOSALS,
    DEFAULT_SWEEPS,
    DEFAULT_THIN,
    DEFAULT_UPDATES_DEDUP,
    DEFAULT_UPDATES_LINK,
    ChainConfig,
    concatenate_samples,
    run_chain,
)
from .simulate import generate

EXIT_OK = 0
EXIT_FAILURE = 1  # unexpected internal error
EXIT_USAGE = 2  # bad flags, config or data


class CliError(Exception):
    """User-facing error; message printed, exit code 2."""


# ---------------------------------------------------------------------------
# option plumbing: flag > config file > default, all echoed to metadata


@dataclass(frozen=True)
class Opt:
    name: str  # underscore form; flag is --with-hyphens
    typ: str  # int | float | str | flag | strlist
    default: object
    help: str

    @property
    def flag(self) -> str:
        return "--" + self.name.replace("_", "-")


def _convert(opt: Opt, raw: str):
    raw = raw.strip()
    try:
        if opt.typ == "int":
            return int(raw)
        if opt.typ == "float":
            return float(raw)
        if opt.typ == "flag":
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if opt.typ == "strlist":
            return [part.strip() for part in raw.split(",") if part.strip()]
        return raw
    except ValueError as exc:
        raise CliError(f"bad value for {opt.name}: {exc}") from None


def _add_opts(parser: argparse.ArgumentParser, opts: list[Opt]) -> None:
    for opt in opts:
        if opt.typ == "flag":
            parser.add_argument(
                opt.flag, dest=opt.name, action="store_const", const=True,
                default=None, help=opt.help,
            )
        elif opt.typ == "strlist":
            parser.add_argument(
                opt.flag, dest=opt.name, action="append", default=None,
                metavar="VALUE", help=opt.help + " (repeatable)",
            )
        else:
            cast = {"int": int, "float": float, "str": str}[opt.typ]
            parser.add_argument(
                opt.flag, dest=opt.name, type=cast, default=None,
                metavar=opt.typ.upper(), help=opt.help,
            )


def _load_config_file(path: str) -> dict[str, str]:
    if not os.path.exists(path):
        raise CliError(f"config file not found: {path}")
    out: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise CliError(f"{path}:{lineno}: expected key = value")
            key, value = line.split("=", 1)
            out[key.strip().replace("-", "_")] = value.strip()
    return out


def _resolve(args: argparse.Namespace, opts: list[Opt]) -> dict:
    """Merge flags over config-file values over defaults."""
    cfg = _load_config_file(args.config) if args.config else {}
    known = {o.name for o in opts}
    unknown = set(cfg) - known
    if unknown:
        raise CliError(
            f"unknown config key(s): {', '.join(sorted(unknown))}; "
            f"known: {', '.join(sorted(known))}"
        )
    settings = {}
    for opt in opts:
        value = getattr(args, opt.name, None)
        if value is None and opt.name in cfg:
            value = _convert(opt, cfg[opt.name])
        if value is None:
            value = opt.default
        settings[opt.name] = value
    return settings


_CHAIN_OPTS = [
    Opt("sg", "int", DEFAULT_SWEEPS, "Gibbs sweeps (hyperparameter updates)"),
    Opt("sm", "int", None,
        "linkage updates per sweep (default: 100000 link, 10000 dedup)"),
    Opt("st", "int", DEFAULT_PROPOSALS, "split-merge proposals per update"),
    Opt("burnin", "int", DEFAULT_BURN_IN, "sweeps discarded before storing"),
    Opt("thin", "int", DEFAULT_THIN, "store every thin-th sweep"),
    Opt("a", "float", DEFAULT_A, "Beta prior shape a for distortion"),
    Opt("b", "float", DEFAULT_B, "Beta prior shape b for distortion"),
    Opt("mu", "float", DEFAULT_MU, "symmetric Dirichlet weight for fields"),
    Opt("seed", "int", 0, "random seed; chains derive their own streams"),
    Opt("chains", "int", 1, "independent chains to run and pool"),
    Opt("corrected_mh", "flag", False,
        "use the exactly-weighted acceptance ratio"),
    Opt("store_theta", "flag", False, "retain field-distribution draws"),
    Opt("engine", "str", "auto", "compiled | python | auto"),
    Opt("block", "strlist", [], "treat this field as an exact blocking key"),
    Opt("progress", "flag", False, "print progress lines to stderr"),
]

_INPUT_OPTS = [
    Opt("input", "strlist", [], "input record file"),
    Opt("truth_column", "str", None,
        "column holding entity ids (excluded from fields)"),
]


def _write_json(path: str, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


def _print_kv(key: str, value) -> None:
    if isinstance(value, float):
        print(f"{key} {value:.6g}")
    else:
        print(f"{key} {value}")


def _key_field_indices(schema: FieldSchema, names: list[str]) -> tuple:
    idx = []
    for name in names:
        if name not in schema.names:
            raise CliError(
                f"unknown blocking field {name!r}; fields: "
                f"{', '.join(schema.names)}"
            )
        idx.append(schema.names.index(name))
    return tuple(idx)


def _chain_worker(payload):
    data, hyper, config, index, engine, chain_index = payload
    return run_chain(
        data, hyper, config, index, engine=engine, chain_index=chain_index
    )


def _metadata(command: str, mode: Mode | None, settings: dict, extra: dict):
    meta = {
        "command": command,
        "package_version": __version__,
        "engines_available": available_engines(),
        "settings": settings,
    }
    if mode is not None:
        meta["mode"] = mode.value
    meta.update(extra)
    return meta


# ---------------------------------------------------------------------------
# link / dedup


def _cmd_linkage(args: argparse.Namespace, mode: Mode) -> int:
    settings = _resolve(args, _CHAIN_OPTS + _INPUT_OPTS + [
        Opt("out", "str", ".", ""),
    ])
    settings["out"] = args.out or settings["out"]
    if not settings["input"]:
        raise CliError("at least one --input file is required")
    for path in settings["input"]:
        if not os.path.exists(path):
            raise CliError(f"input file not found: {path}")
    data, _ = load_files(
        settings["input"], truth_column=settings["truth_column"]
    )
    key_fields = _key_field_indices(data.schema, settings["block"])
    hyper = Hyperparameters.flat(
        data.schema,
        a=settings["a"],
        b=settings["b"],
        mu=settings["mu"],
        blocked_fields=key_fields,
    )
    index = build_blocks(data, key_fields)
    validate_blocking(index, hyper)
    sm = settings["sm"]
    if sm is None:
        sm = (
            DEFAULT_UPDATES_LINK if mode is Mode.LINK
            else DEFAULT_UPDATES_DEDUP
        )
        settings["sm"] = sm
    config = ChainConfig(
        sweeps=settings["sg"],
        updates_per_sweep=sm,
        proposals_per_update=settings["st"],
        burn_in=settings["burnin"],
        thin=settings["thin"],
        mode=mode,
        corrected=settings["corrected_mh"],
        seed=settings["seed"],
        store_theta=settings["store_theta"],
        progress_every=None if settings["progress"] else 0,
    )
    config.validate()
    n_chains = settings["chains"]
    if n_chains < 1:
        raise CliError("--chains must be at least 1")
    payloads = [
        (data, hyper, config, index, settings["engine"], c)
        for c in range(n_chains)
    ]
    if n_chains == 1:
        parts = [_chain_worker(payloads[0])]
    else:
        with ProcessPoolExecutor(max_workers=n_chains) as pool:
            parts = list(pool.map(_chain_worker, payloads))
    samples = concatenate_samples(parts) if n_chains > 1 else parts[0]

    out_dir = settings["out"]
    os.makedirs(out_dir, exist_ok=True)
    samples_path = os.path.join(out_dir, "samples.llps")
    save_samples(samples, samples_path)

    npost = posterior_n(samples)
    _print_kv("mode", mode.value)
    _print_kv("records", samples.n_records)
    _print_kv("samples_retained", samples.n_samples)
    _print_kv("mean_n", npost.mean)
    _print_kv("sd_n", npost.sd)
    for c, part in enumerate(parts):
        st = part.stats
        rate = st["accepted"] / max(st["proposals"], 1)
        _print_kv(f"chain{c}_mean_n", float(part.n_trace.mean()))
        _print_kv(f"chain{c}_acceptance_rate", rate)
        _print_kv(f"chain{c}_seconds", st["seconds"])
    meta = _metadata(mode.value, mode, settings, {
        "schema": {
            "fields": list(data.schema.names),
            "levels": list(data.schema.levels),
        },
        "n_i": list(data.n_i),
        "key_fields": list(key_fields),
        "chain_stats": [p.stats for p in parts],
        "outputs": {"samples": samples_path},
    })
    _write_json(os.path.join(out_dir, "metadata.json"), meta)
    return EXIT_OK


def cmd_link(args: argparse.Namespace) -> int:
    return _cmd_linkage(args, Mode.LINK)


def cmd_dedup(args: argparse.Namespace) -> int:
    return _cmd_linkage(args, Mode.DEDUP)


# ---------------------------------------------------------------------------
# simulate


_SIM_OPTS = [
    Opt("n_individuals", "int", 1000, "latent population size"),
    Opt("files", "int", 3, "number of record files"),
    Opt("file_size", "strlist", ["500"],
        "records per file; one value or one per file"),
    Opt("fields", "int", 4, "number of categorical fields"),
    Opt("levels", "strlist", ["10"],
        "values per field; one value or one per field"),
    Opt("distortion", "strlist", ["0.01"],
        "distortion probability; one value or one per field"),
    Opt("block", "strlist", [], "emit this field distortion-free"),
    Opt("mu", "float", DEFAULT_MU, "Dirichlet weight for drawing theta"),
    Opt("a", "float", DEFAULT_A, "Beta prior shape a (recorded only)"),
    Opt("b", "float", DEFAULT_B, "Beta prior shape b (recorded only)"),
    Opt("seed", "int", 0, "random seed"),
    Opt("mode", "str", "link",
        "link (no within-file duplicates) or dedup"),
    Opt("truth_column", "str", "entity_id", "name of the truth column"),
]


def _broadcast(values: list[str], count: int, what: str, cast) -> list:
    try:
        vals = [cast(v) for v in values]
    except ValueError as exc:
        raise CliError(f"bad {what}: {exc}") from None
    if len(vals) == 1:
        return vals * count
    if len(vals) != count:
        raise CliError(f"need 1 or {count} values for {what}, got {len(vals)}")
    return vals


def cmd_simulate(args: argparse.Namespace) -> int:
    settings = _resolve(args, _SIM_OPTS + [Opt("out", "str", ".", "")])
    settings["out"] = args.out or settings["out"]
    try:
        mode = Mode(settings["mode"])
    except ValueError:
        raise CliError(
            f"bad mode {settings['mode']!r}: expected link or dedup"
        ) from None
    p = settings["fields"]
    k = settings["files"]
    levels = _broadcast(settings["levels"], p, "levels", int)
    sizes = _broadcast(settings["file_size"], k, "file-size", int)
    distortion = _broadcast(settings["distortion"], p, "distortion", float)
    schema = FieldSchema.generic(levels)
    key_fields = _key_field_indices(schema, settings["block"])
    hyper = Hyperparameters.flat(
        schema, a=settings["a"], b=settings["b"], mu=settings["mu"],
        blocked_fields=key_fields,
    )
    try:
        sim = generate(
            schema,
            settings["n_individuals"],
            k,
            file_sizes=sizes,
            distortion=np.asarray(distortion),
            hyper=hyper,
            mode=mode,
            seed=settings["seed"],
        )
    except ValueError as exc:
        raise CliError(str(exc)) from None
    out_dir = settings["out"]
    paths = write_files(
        sim.data, out_dir, truth=sim.truth,
        truth_column=settings["truth_column"],
    )
    _print_kv("mode", mode.value)
    _print_kv("files_written", len(paths))
    _print_kv("records", sim.data.n_records)
    _print_kv("entities_observed", sim.n_entities_observed)
    _print_kv("distorted_cells", int(sim.z.sum()))
    meta = _metadata("simulate", mode, settings, {
        "schema": {
            "fields": list(schema.names),
            "levels": list(schema.levels),
        },
        "n_entities_observed": sim.n_entities_observed,
        "outputs": {"files": paths},
    })
    _write_json(os.path.join(out_dir, "metadata.json"), meta)
    return EXIT_OK


# ---------------------------------------------------------------------------
# evaluate


def _load_samples_arg(path: str):
    if not path:
        raise CliError("--samples is required")
    if not os.path.exists(path):
        raise CliError(f"samples file not found: {path}")
    return load_samples(path)


def _truth_from_inputs(settings, samples) -> np.ndarray:
    if not settings["input"]:
        raise CliError("ground truth requires --input files")
    if not settings["truth_column"]:
        raise CliError("ground truth requires --truth-column")
    for path in settings["input"]:
        if not os.path.exists(path):
            raise CliError(f"input file not found: {path}")
    data, truth = load_files(
        settings["input"], truth_column=settings["truth_column"]
    )
    if truth is None:
        raise CliError("truth column produced no labels")
    if data.n_i != samples.n_i:
        raise CliError(
            f"input files have {data.n_i} records but samples were drawn "
            f"from {samples.n_i}"
        )
    return truth


def _write_matrix(path, patterns, matrix) -> None:
    labels = [pattern_label(p) for p in patterns]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["pattern"] + labels)
        for label, row in zip(labels, matrix):
            writer.writerow([label] + [f"{v:.10g}" for v in row])


def cmd_evaluate(args: argparse.Namespace) -> int:
    settings = _resolve(args, _INPUT_OPTS + [
        Opt("samples", "str", None, ""),
        Opt("out", "str", ".", ""),
    ])
    settings["samples"] = args.samples or settings["samples"]
    settings["out"] = args.out or settings["out"]
    samples = _load_samples_arg(settings["samples"])
    truth = _truth_from_inputs(settings, samples)
    out_dir = settings["out"]
    os.makedirs(out_dir, exist_ok=True)

    counts = posterior_link_counts(samples, truth)
    for key in (
        "true_links", "false_links", "missing_links", "fnr", "fpr",
        "false_link_share",
    ):
        _print_kv(key, getattr(counts, key))

    cm = confusion_matrix(samples, truth)
    _print_kv("pattern_accuracy", cm.accuracy)
    _write_matrix(
        os.path.join(out_dir, "confusion_matrix.csv"), cm.patterns, cm.counts
    )
    _write_matrix(
        os.path.join(out_dir, "confusion_matrix_rownorm.csv"),
        cm.patterns,
        cm.row_normalized(),
    )
    errors = relative_pattern_errors(samples, truth)
    with open(
        os.path.join(out_dir, "pattern_errors.csv"), "w", newline="",
        encoding="utf-8",
    ) as fh:
        writer = csv.writer(fh)
        writer.writerow(["pattern", "estimated", "true", "relative_error"])
        for err in errors:
            rel = "" if err.relative_error is None else f"{err.relative_error:.10g}"
            writer.writerow(
                [pattern_label(err.pattern), f"{err.estimated:.10g}",
                 err.true_count, rel]
            )
    meta = _metadata("evaluate", samples.config.mode, settings, {
        "link_counts": {
            "true_links": counts.true_links,
            "false_links": counts.false_links,
            "missing_links": counts.missing_links,
            "fnr": counts.fnr,
            "fpr": counts.fpr,
            "false_link_share": counts.false_link_share,
        },
        "outputs": {
            "confusion_matrix": os.path.join(out_dir, "confusion_matrix.csv"),
            "confusion_matrix_rownorm": os.path.join(
                out_dir, "confusion_matrix_rownorm.csv"
            ),
            "pattern_errors": os.path.join(out_dir, "pattern_errors.csv"),
        },
    })
    _write_json(os.path.join(out_dir, "metadata.json"), meta)
    return EXIT_OK


# ---------------------------------------------------------------------------
# report


_PLOT_SCRIPT = '''#!/usr/bin/env python3
"""Render heatmap.csv (a row-normalized confusion matrix) to a PNG.

Standalone on purpose: needs matplotlib, which the pipeline itself
never imports.  Usage: python3 plot_heatmap.py [heatmap.csv [out.png]]
"""
import csv
import sys


def main() -> None:
    src = sys.argv[1] if len(sys.argv) > 1 else "heatmap.csv"
    dst = sys.argv[2] if len(sys.argv) > 2 else "heatmap.png"
    with open(src, newline="") as fh:
        rows = list(csv.reader(fh))
    labels = rows[0][1:]
    data = [[float(cell) for cell in row[1:]] for row in rows[1:]]

    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    side = max(4.0, 0.6 * len(labels) + 2.0)
    fig, ax = plt.subplots(figsize=(side, side))
    im = ax.imshow(data, cmap="viridis", vmin=0.0, vmax=1.0)
    ax.set_xticks(range(len(labels)), labels, rotation=45, ha="right")
    ax.set_yticks(range(len(labels)), labels)
    ax.set_xlabel("true pattern")
    ax.set_ylabel("estimated pattern")
    for i, row in enumerate(data):
        for j, val in enumerate(row):
            if val > 0:
                color = "black" if val > 0.6 else "white"
                ax.text(j, i, f"{val:.2f}", ha="center", va="center",
                        color=color, fontsize=8)
    fig.colorbar(im, ax=ax, shrink=0.8, label="row share")
    fig.tight_layout()
    fig.savefig(dst, dpi=150)
    print(f"wrote {dst}")


if __name__ == "__main__":
    main()
'''


def _parse_record(spec: str, samples) -> int:
    try:
        file_s, row_s = spec.split(":", 1)
        file, row = int(file_s), int(row_s)
    except ValueError:
        raise CliError(
            f"bad --record {spec!r}: expected FILE:ROW (1-based)"
        ) from None
    try:
        return samples.record_index(file - 1, row - 1)
    except IndexError as exc:
        raise CliError(f"bad --record {spec!r}: {exc}") from None


def cmd_report(args: argparse.Namespace) -> int:
    settings = _resolve(args, _INPUT_OPTS + [
        Opt("samples", "str", None, ""),
        Opt("out", "str", ".", ""),
        Opt("record", "strlist", [], ""),
        Opt("threshold", "float", None, ""),
    ])
    settings["samples"] = args.samples or settings["samples"]
    settings["out"] = args.out or settings["out"]
    samples = _load_samples_arg(settings["samples"])
    out_dir = settings["out"]
    os.makedirs(out_dir, exist_ok=True)
    outputs = {}

    # cluster counts by file-presence pattern
    pc = pattern_counts(samples)
    path = os.path.join(out_dir, "pattern_counts.csv")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["pattern", "mean_clusters", "mean_exact_clusters"])
        for pat, mean, exact in zip(pc.patterns, pc.means, pc.exact_means):
            writer.writerow(
                [pattern_label(pat), f"{mean:.10g}", f"{exact:.10g}"]
            )
    outputs["pattern_counts"] = path
    _print_kv("pattern_total_mean", float(pc.means.sum()))

    # posterior over the number of observed individuals
    npost = posterior_n(samples)
    path = os.path.join(out_dir, "n_posterior.csv")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n", "count", "probability"])
        for value, count, prob in zip(
            npost.values, npost.counts, npost.probs
        ):
            writer.writerow([int(value), int(count), f"{prob:.10g}"])
    outputs["n_posterior"] = path
    _print_kv("mean_n", npost.mean)
    _print_kv("sd_n", npost.sd)

    # most probable matching sets for named records
    for spec in settings["record"]:
        r = _parse_record(spec, samples)
        mset, prob = most_probable_mms(samples, r)
        members = ",".join(
            "{}:{}".format(*(c + 1 for c in samples.record_coords(m)))
            for m in sorted(mset)
        )
        _print_kv(f"mms[{spec}]", members)
        _print_kv(f"mms_prob[{spec}]", prob)

    # pairwise links above a posterior probability threshold
    if settings["threshold"] is not None:
        links = threshold_links(samples, settings["threshold"])
        path = os.path.join(out_dir, "links.csv")
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["record_a", "record_b", "probability"])
            for (r1, r2), prob in zip(links.pairs, links.probs):
                f1, w1 = samples.record_coords(int(r1))
                f2, w2 = samples.record_coords(int(r2))
                writer.writerow(
                    [f"{f1 + 1}:{w1 + 1}", f"{f2 + 1}:{w2 + 1}",
                     f"{prob:.10g}"]
                )
        outputs["links"] = path
        _print_kv("links_above_threshold", len(links.pairs))
        _print_kv("links_transitive", links.transitive)

    # confusion heatmap, only when ground truth is available
    if settings["input"]:
        truth = _truth_from_inputs(settings, samples)
        cm = confusion_matrix(samples, truth)
        path = os.path.join(out_dir, "heatmap.csv")
        _write_matrix(path, cm.patterns, cm.row_normalized())
        outputs["heatmap"] = path
        script = os.path.join(out_dir, "plot_heatmap.py")
        with open(script, "w", encoding="utf-8") as fh:
            fh.write(_PLOT_SCRIPT)
        outputs["heatmap_script"] = script
        _print_kv("pattern_accuracy", cm.accuracy)

    meta = _metadata("report", samples.config.mode, settings, {
        "mean_n": npost.mean,
        "outputs": outputs,
    })
    _write_json(os.path.join(out_dir, "metadata.json"), meta)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser and entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="latentlink",
        description=(
            "Bayesian record linkage and de-duplication over categorical "
            "files via a latent-individual model."
        ),
        epilog=(
            "exit codes: 0 success, 2 usage/config/data error, "
            "1 unexpected internal error"
        ),
    )
    parser.add_argument(
        "--version", action="version", version=f"%(prog)s {__version__}"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument(
            "--config", default=None,
            help="key = value file; flags override its entries",
        )
        sp.add_argument(
            "--out", default=None, help="output directory (default: .)"
        )

    sp = sub.add_parser(
        "link", help="link records across files (no within-file duplicates)"
    )
    common(sp)
    _add_opts(sp, _CHAIN_OPTS + _INPUT_OPTS)
    sp.set_defaults(func=cmd_link)

    sp = sub.add_parser(
        "dedup", help="de-duplicate; within-file matches allowed"
    )
    common(sp)
    _add_opts(sp, _CHAIN_OPTS + _INPUT_OPTS)
    sp.set_defaults(func=cmd_dedup)

    sp = sub.add_parser(
        "simulate", help="generate synthetic record files with known truth"
    )
    common(sp)
    _add_opts(sp, _SIM_OPTS)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser(
        "evaluate", help="compare posterior samples against ground truth"
    )
    common(sp)
    sp.add_argument("--samples", default=None, help="samples file to read")
    _add_opts(sp, _INPUT_OPTS)
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser(
        "report", help="summarize posterior samples (patterns, N, queries)"
    )
    common(sp)
    sp.add_argument("--samples", default=None, help="samples file to read")
    sp.add_argument(
        "--record", action="append", default=None, metavar="FILE:ROW",
        help="1-based record to query for its most probable matching set "
        "(repeatable)",
    )
    sp.add_argument(
        "--threshold", type=float, default=None,
        help="emit links.csv with pairs at or above this probability",
    )
    _add_opts(sp, _INPUT_OPTS)
    sp.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataFormatError, SamplesFormatError, BlockingError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except KeyboardInterrupt:
        print("interrupted", file=sys.stderr)
        return EXIT_FAILURE
    except Exception:
        traceback.print_exc()
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
