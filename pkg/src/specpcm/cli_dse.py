"""Command-line front end, synthetic benchmark generator, and
design-space-exploration sweeps.

Subcommands: synth, encode, cluster, search, isa run, dse, report. Sweeps
take the cross product of parameter axes (pack.n, adc.bits, hd.dimension,
noise.wv_cycles, cluster.threshold), run the workload end to end per cell,
and emit one self-describing CSV row per cell with its seed.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import cluster_pipeline, cost_model, isa, search_pipeline
from .config import SCHEMA, Config, ConfigError, load_config
from .hdc_core import encode, gen_item_memory, make_rng, pack, pad_dimension
from .imc_array import BankLayout, MachineState, MvmConfig
from .pcm_device import PROFILES, noise_params_from_config
from .spectra_io import (
    PreprocessConfig,
    Spectrum,
    parse_mgf,
    preprocess,
    write_mgf,
)

ALLOWED_AXES = (
    "pack.n",
    "adc.bits",
    "hd.dimension",
    "noise.wv_cycles",
    "cluster.threshold",
)


# ---------------------------------------------------------------------------
# synthetic data


@dataclass
class SynthPaths:
    spectra: Path  # labeled copies for clustering
    library: Path  # reference templates + decoys for search
    queries: Path  # labeled query copies for search


def _jitter_copy(
    rng: np.random.Generator,
    template: Spectrum,
    spec_id: str,
    peak_jitter: float,
    intensity_noise: float,
    dropout: float,
) -> Spectrum:
    peaks = np.asarray(template.peaks, dtype=np.float64)
    mz = peaks[:, 0] + peak_jitter * rng.standard_normal(peaks.shape[0])
    inten = peaks[:, 1] * np.maximum(
        0.0, 1.0 + intensity_noise * rng.standard_normal(peaks.shape[0])
    )
    keep = rng.random(peaks.shape[0]) >= dropout
    if not keep.any():
        keep[0] = True
    pairs = sorted(zip(mz[keep], inten[keep]))
    return Spectrum(
        id=spec_id,
        precursor_mz=template.precursor_mz,
        precursor_charge=template.precursor_charge,
        peaks=tuple((float(m), float(i)) for m, i in pairs),
        label=template.label,
    )


def _decoy_of(rng: np.random.Generator, template: Spectrum, spec_id: str) -> Spectrum:
    # decoy by peak m/z shuffling: the intensity multiset is kept but every
    # peak lands at a new position over the template's m/z span, mimicking
    # a shuffled-sequence decoy whose fragments move pseudo-randomly
    peaks = np.asarray(template.peaks, dtype=np.float64)
    lo, hi = peaks[:, 0].min(), peaks[:, 0].max()
    mz = np.sort(rng.uniform(lo, hi, size=peaks.shape[0]))
    shuffled = peaks[:, 1][rng.permutation(peaks.shape[0])]
    return Spectrum(
        id=spec_id,
        precursor_mz=template.precursor_mz,
        precursor_charge=template.precursor_charge,
        peaks=tuple((float(m), float(i)) for m, i in zip(mz, shuffled)),
        is_decoy=True,
        label=None,
    )


def gen_synthetic(
    num_classes: int,
    per_class: int,
    peak_jitter: float,
    out_dir: str | Path,
    seed: int,
    peaks_per_spectrum: int = 60,
    intensity_noise: float = 0.15,
    dropout: float = 0.05,
    queries_per_class: int = 2,
    num_decoys: int | None = None,
) -> SynthPaths:
    """Write a desk-scale labeled benchmark.

    Each class gets one template spectrum; copies jitter peak m/z, scale
    intensities, and drop peaks. With all noise parameters at 0 the copies
    are bit-identical to their template. Decoys shuffle the intensity
    assignment of a template's peaks. Labels ride in the MGF TITLE.
    """
    if min(num_classes, per_class, peaks_per_spectrum, queries_per_class) < 1:
        raise ValueError("synthetic generator parameters must be positive")
    if num_decoys is None:
        num_decoys = num_classes
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = make_rng(seed)

    templates: list[Spectrum] = []
    for k in range(num_classes):
        mz = np.sort(rng.uniform(110.0, 1480.0, size=peaks_per_spectrum))
        inten = rng.lognormal(mean=0.0, sigma=1.0, size=peaks_per_spectrum)
        precursor = float(np.floor(rng.uniform(300.0, 1200.0)) + 0.5)
        templates.append(
            Spectrum(
                id=f"ref_{k:03d}",
                precursor_mz=precursor,
                precursor_charge=2 + (k % 2),
                peaks=tuple((float(m), float(i)) for m, i in zip(mz, inten)),
                label=f"class_{k:03d}",
            )
        )

    spectra = [
        _jitter_copy(
            rng, t, f"c{k:03d}_s{i:03d}", peak_jitter, intensity_noise, dropout
        )
        for k, t in enumerate(templates)
        for i in range(per_class)
    ]
    decoys = [
        _decoy_of(rng, templates[k % num_classes], f"DECOY_ref_{k:03d}")
        for k in range(num_decoys)
    ]
    queries = [
        _jitter_copy(
            rng, t, f"q{k:03d}_{j:03d}", peak_jitter, intensity_noise, dropout
        )
        for k, t in enumerate(templates)
        for j in range(queries_per_class)
    ]

    paths = SynthPaths(
        spectra=out / "spectra.mgf",
        library=out / "library.mgf",
        queries=out / "queries.mgf",
    )
    write_mgf(spectra, paths.spectra)
    write_mgf(templates + decoys, paths.library)
    write_mgf(queries, paths.queries)
    return paths


# ---------------------------------------------------------------------------
# design-space exploration


@dataclass
class SweepSpec:
    """Cross product of parameter axes, repeated ``repetitions`` times."""

    axes: dict[str, list] = field(default_factory=dict)
    repetitions: int = 1
    seed_base: int = 1

    def __post_init__(self) -> None:
        for name in self.axes:
            if name not in ALLOWED_AXES:
                raise ValueError(
                    f"sweep axis {name!r} not in {sorted(ALLOWED_AXES)}"
                )
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")

    def cells(self) -> list[tuple[dict, int, int]]:
        """(axis values, rep, seed) per cell; reps share seeds across
        parameter combinations so axis effects are paired."""
        names = list(self.axes)
        combos = list(itertools.product(*(self.axes[n] for n in names))) or [()]
        out = []
        for rep in range(self.repetitions):
            for combo in combos:
                out.append((dict(zip(names, combo)), rep, self.seed_base + rep))
        return out


def _ledger_metrics(ledger: cost_model.CostLedger) -> dict:
    return {
        "energy_pj": ledger.total_energy_pj,
        "latency_ns": ledger.total_latency_ns,
        "adc_energy_pj": ledger.energy_pj.get("adc", 0.0),
        "program_energy_pj": ledger.energy_pj.get("program", 0.0),
    }


def _clustered_only_ratio(cluster_of: dict) -> float:
    sizes: dict = {}
    for cid in cluster_of.values():
        sizes[cid] = sizes.get(cid, 0) + 1
    total = len(cluster_of)
    clustered = sum(s for s in sizes.values() if s >= 2)
    return clustered / total if total else 0.0


def run_cluster_workload(input_path: str, cfg: Config, seed: int) -> dict:
    spectra = parse_mgf(input_path).spectra
    res = cluster_pipeline.cluster_spectra(spectra, cfg, seed)
    row = {
        "clustered_ratio": (
            res.metrics.clustered_ratio
            if res.metrics
            else _clustered_only_ratio(res.cluster_of)
        ),
        "incorrect_ratio": res.metrics.incorrect_ratio if res.metrics else "",
    }
    row.update(_ledger_metrics(res.ledger))
    return row


def run_search_workload(
    query_path: str, refs_path: str, cfg: Config, seed: int
) -> dict:
    queries = parse_mgf(query_path).spectra
    refs = parse_mgf(refs_path).spectra
    res = search_pipeline.search_spectra(queries, refs, cfg, seed)
    correct = sum(
        1
        for r, q in zip(res.results, queries)
        if q.label is not None and not r.is_decoy
        for ref in [r.ref_id]
        if _ref_label(refs, ref) == q.label
    )
    labeled = sum(1 for q in queries if q.label is not None)
    row = {
        "identified_count": res.outcome.identified_count,
        "fdr_threshold": "" if res.outcome.threshold is None else res.outcome.threshold,
        "top1_accuracy": correct / labeled if labeled else "",
    }
    ledger = res.build_ledger + res.query_ledger
    row.update(_ledger_metrics(ledger))
    row["query_energy_pj"] = res.query_ledger.total_energy_pj
    return row


def _ref_label(refs: list[Spectrum], ref_id: str) -> str | None:
    for r in refs:
        if r.id == ref_id:
            return r.label
    return None


def _run_cell(args: tuple) -> dict:
    workload, cfg_values, cfg_explicit, params, rep, seed = args
    row = dict(params)
    row["rep"] = rep
    row["seed"] = seed
    try:
        cfg = Config(dict(cfg_values), set(cfg_explicit)).with_overrides(params)
        if workload[0] == "cluster":
            row.update(run_cluster_workload(workload[1], cfg, seed))
        elif workload[0] == "search":
            row.update(run_search_workload(workload[1], workload[2], cfg, seed))
        else:
            raise ValueError(f"unknown workload {workload[0]!r}")
        row["status"] = "ok"
        row["error"] = ""
    except Exception as exc:  # cell failures are recorded, the sweep continues
        row["status"] = "error"
        row["error"] = str(exc)
    return row


def dse(
    sweep: SweepSpec,
    workload: tuple,
    cfg: Config,
    out_path: str | Path,
    jobs: int = 1,
) -> list[dict]:
    """Run every sweep cell and write one CSV row per cell."""
    cells = [
        (workload, cfg.values, cfg.explicit, params, rep, seed)
        for params, rep, seed in sweep.cells()
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_run_cell, cells))
    else:
        rows = [_run_cell(cell) for cell in cells]

    columns = list(sweep.axes) + ["rep", "seed"]
    extra = sorted({k for row in rows for k in row} - set(columns) - {"status", "error"})
    columns += extra + ["status", "error"]
    with open(out_path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.DictWriter(handle, fieldnames=columns, restval="")
        writer.writeheader()
        writer.writerows(rows)
    return rows


# ---------------------------------------------------------------------------
# CLI


def _load_cfg(args: argparse.Namespace) -> Config:
    cfg = load_config(args.config) if args.config else Config()
    if getattr(args, "seed", None) is not None:
        cfg.set("hd.seed", args.seed)
    return cfg


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="config file of dotted key = value lines")
    sub.add_argument("--seed", type=int, help="override hd.seed")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="specpcm",
        description=(
            "Behavioral simulator for PCM in-memory mass-spectrometry "
            "clustering and database search"
        ),
    )
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("synth", help="generate a labeled synthetic benchmark")
    p.add_argument("--out", required=True)
    p.add_argument("--num-classes", type=int, default=10)
    p.add_argument("--per-class", type=int, default=20)
    p.add_argument("--peak-jitter", type=float, default=0.1)
    p.add_argument("--intensity-noise", type=float, default=0.15)
    p.add_argument("--dropout", type=float, default=0.05)
    p.add_argument("--peaks", type=int, default=60)
    p.add_argument("--queries-per-class", type=int, default=2)
    p.add_argument("--decoys", type=int, default=None)
    p.add_argument("--seed", type=int, default=1)

    p = sub.add_parser("encode", help="encode spectra into packed hypervectors")
    _add_common(p)
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("cluster", help="cluster spectra on the array model")
    _add_common(p)
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True, help="clusters CSV")
    p.add_argument("--metrics", help="metrics CSV")
    p.add_argument("--ledger", help="write the cost ledger here")

    p = sub.add_parser("search", help="open database search with FDR filtering")
    _add_common(p)
    p.add_argument("--query", required=True)
    p.add_argument("--refs", required=True)
    p.add_argument("--out", required=True, help="PSM CSV")
    p.add_argument("--ledger", help="write the combined cost ledger here")
    p.add_argument("--unique-peptides", action="store_true")

    p = sub.add_parser("isa", help="ISA program tools")
    isa_sub = p.add_subparsers(dest="isa_command")
    p_run = isa_sub.add_parser("run", help="execute an ISA program")
    _add_common(p_run)
    p_run.add_argument("program")
    p_run.add_argument("--trace", help="trace CSV output")
    p_run.add_argument("--ledger", help="write the cost ledger here")
    p_run.add_argument(
        "--arrays", type=int, help="number of arrays (default machine.num_arrays or 1)"
    )

    p = sub.add_parser("dse", help="design-space exploration sweep")
    _add_common(p)
    p.add_argument("--workload", choices=("cluster", "search"), required=True)
    p.add_argument("--input", help="cluster workload MGF")
    p.add_argument("--query", help="search workload query MGF")
    p.add_argument("--refs", help="search workload reference MGF")
    p.add_argument(
        "--axis",
        action="append",
        default=[],
        metavar="NAME=V1,V2,...",
        help=f"sweep axis, one of {', '.join(ALLOWED_AXES)}",
    )
    p.add_argument("--reps", type=int, default=1)
    p.add_argument("--seed-base", type=int, default=1)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", required=True)

    p = sub.add_parser("report", help="summarize a saved cost ledger")
    p.add_argument("--ledger")
    p.add_argument("--format", choices=("text", "csv"), default="text")
    p.add_argument("--parallelism", type=int, default=1)
    p.add_argument(
        "--baselines",
        action="store_true",
        help="print published reference figures (reported, not reproduced)",
    )
    return parser


def _parse_axis(spec: str) -> tuple[str, list]:
    if "=" not in spec:
        raise ConfigError(f"axis must be NAME=V1,V2,..., got {spec!r}")
    name, _, values = spec.partition("=")
    name = name.strip()
    if name not in SCHEMA:
        raise ConfigError(f"unknown config key: {name!r}")
    typ = SCHEMA[name][0]
    return name, [typ(v) for v in values.split(",")]


def _cmd_synth(args: argparse.Namespace) -> int:
    paths = gen_synthetic(
        num_classes=args.num_classes,
        per_class=args.per_class,
        peak_jitter=args.peak_jitter,
        out_dir=args.out,
        seed=args.seed,
        peaks_per_spectrum=args.peaks,
        intensity_noise=args.intensity_noise,
        dropout=args.dropout,
        queries_per_class=args.queries_per_class,
        num_decoys=args.decoys,
    )
    print(f"wrote {paths.spectra}, {paths.library}, {paths.queries}")
    return 0


def _cmd_encode(args: argparse.Namespace) -> int:
    cfg = _load_cfg(args)
    result = parse_mgf(args.input)
    if result.errors:
        print(f"skipped {len(result.errors)} malformed record(s)", file=sys.stderr)
    pcfg = PreprocessConfig(
        mz_min=cfg.get("preprocess.mz_min"),
        mz_max=cfg.get("preprocess.mz_max"),
        bin_width=cfg.get("preprocess.bin_width"),
        top_k=cfg.get("preprocess.top_k"),
        intensity_transform=cfg.get("preprocess.intensity_transform"),
    )
    n_pack = cfg.get("pack.n")
    dim = pad_dimension(cfg.get("hd.dimension"), n_pack)
    im = gen_item_memory(cfg.get("hd.seed"), dim, pcfg.num_bins, cfg.get("hd.levels"))
    skip_zero = cfg.get("encode.skip_zero")
    with open(args.out, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        for s in result.spectra:
            hv = pack(encode(preprocess(s, pcfg), im, skip_zero), n_pack)
            writer.writerow([s.id] + [int(v) for v in hv.values])
    print(f"encoded {len(result.spectra)} spectra at D={dim}, n={n_pack}")
    return 0


def _cmd_cluster(args: argparse.Namespace) -> int:
    cfg = _load_cfg(args)
    result = parse_mgf(args.input)
    if result.errors:
        print(f"skipped {len(result.errors)} malformed record(s)", file=sys.stderr)
    res = cluster_pipeline.cluster_spectra(result.spectra, cfg, cfg.get("hd.seed"))
    with open(args.out, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["spectrum_id", "cluster_id"])
        for sid in sorted(res.cluster_of):
            writer.writerow([sid, res.cluster_of[sid]])
    clustered = (
        res.metrics.clustered_ratio
        if res.metrics
        else _clustered_only_ratio(res.cluster_of)
    )
    incorrect = res.metrics.incorrect_ratio if res.metrics else ""
    if args.metrics:
        with open(args.metrics, "w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow(
                ["threshold", "clustered_ratio", "incorrect_ratio", "energy_pj", "latency_ns"]
            )
            writer.writerow(
                [
                    res.threshold,
                    clustered,
                    incorrect,
                    repr(res.ledger.total_energy_pj),
                    repr(res.ledger.total_latency_ns),
                ]
            )
    if args.ledger:
        res.ledger.save(args.ledger)
    print(
        f"clustered_ratio={clustered} incorrect_ratio={incorrect} "
        f"energy_pj={res.ledger.total_energy_pj:.3f} "
        f"latency_ns={res.ledger.total_latency_ns:.1f}"
    )
    return 0


def _cmd_search(args: argparse.Namespace) -> int:
    cfg = _load_cfg(args)
    queries = parse_mgf(args.query)
    refs = parse_mgf(args.refs)
    for name, parsed in (("query", queries), ("refs", refs)):
        if parsed.errors:
            print(
                f"skipped {len(parsed.errors)} malformed {name} record(s)",
                file=sys.stderr,
            )
    res = search_pipeline.search_spectra(
        queries.spectra,
        refs.spectra,
        cfg,
        cfg.get("hd.seed"),
        unique_peptides=args.unique_peptides,
    )
    with open(args.out, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["query_id", "ref_id", "score", "is_decoy", "accepted"])
        for r in res.results:
            writer.writerow(
                [r.query_id, r.ref_id, repr(r.score), int(r.is_decoy), int(r.accepted)]
            )
    ledger = res.build_ledger + res.query_ledger
    if args.ledger:
        ledger.save(args.ledger)
    threshold = res.outcome.threshold
    num_queries = max(1, len(res.results) + len(res.skipped_queries))
    summary = (
        f"identified_count={res.outcome.identified_count} "
        f"fdr_threshold={'' if threshold is None else threshold} "
        f"energy_pj={ledger.total_energy_pj:.3f} "
        f"latency_ns={ledger.total_latency_ns:.1f} "
        f"per_query_latency_ns={res.query_ledger.total_latency_ns / num_queries:.1f}"
    )
    if res.unique_peptides is not None:
        summary += f" unique_peptides={res.unique_peptides}"
    print(summary)
    return 0


def _cmd_isa_run(args: argparse.Namespace) -> int:
    cfg = _load_cfg(args)
    path = Path(args.program)
    program = isa.parse_program(path.read_text(encoding="utf-8"), path.parent)
    num_arrays = args.arrays or cfg.get("machine.num_arrays") or 1
    layout = BankLayout(
        stripes=num_arrays,
        row_groups=1,
        dims_packed=num_arrays * cfg.get("array.cols"),
        rows=cfg.get("array.rows"),
        cols=cfg.get("array.cols"),
    )
    machine = MachineState(
        layout=layout,
        profile=PROFILES[cfg.get("device.kind")],
        noise=noise_params_from_config(cfg),
        mvm_cfg=MvmConfig(
            dac_bits=cfg.get("dac.bits"),
            adc_bits=cfg.get("adc.bits"),
            full_scale=cfg.get("adc.full_scale"),
            bypass=cfg.get("adc.bypass"),
        ),
    )
    rng = make_rng(cfg.get("hd.seed"))
    trace, ledger = isa.run(program, machine, rng)
    if args.trace:
        trace.to_csv(args.trace)
    if args.ledger:
        ledger.save(args.ledger)
    print(
        f"executed {len(trace.steps)} instruction(s): "
        f"{trace.total_cycles} cycles, {ledger.total_energy_pj:.3f} pJ"
    )
    return 0


def _cmd_dse(args: argparse.Namespace) -> int:
    cfg = _load_cfg(args)
    axes: dict[str, list] = {}
    for spec in args.axis:
        name, values = _parse_axis(spec)
        axes[name] = values
    sweep = SweepSpec(axes=axes, repetitions=args.reps, seed_base=args.seed_base)
    if args.workload == "cluster":
        if not args.input:
            raise ConfigError("cluster workload needs --input")
        workload = ("cluster", args.input)
    else:
        if not (args.query and args.refs):
            raise ConfigError("search workload needs --query and --refs")
        workload = ("search", args.query, args.refs)
    rows = dse(sweep, workload, cfg, args.out, jobs=args.jobs)
    failures = sum(1 for r in rows if r["status"] != "ok")
    print(f"wrote {len(rows)} sweep cell(s) to {args.out}; {failures} failed")
    return 0 if failures == 0 else 1


def _cmd_report(args: argparse.Namespace) -> int:
    if args.baselines:
        print(cost_model.baselines_text(), end="")
        if not args.ledger:
            return 0
    if not args.ledger:
        raise ConfigError("report needs --ledger (or --baselines)")
    ledger = cost_model.CostLedger.load(args.ledger)
    rep = cost_model.report(ledger, parallelism=args.parallelism)
    if args.format == "csv":
        writer = csv.writer(sys.stdout)
        writer.writerows(rep.to_csv_rows())
    else:
        print(rep.to_text(), end="")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        parser.print_help()
        return 2
    try:
        if args.command == "synth":
            return _cmd_synth(args)
        if args.command == "encode":
            return _cmd_encode(args)
        if args.command == "cluster":
            return _cmd_cluster(args)
        if args.command == "search":
            return _cmd_search(args)
        if args.command == "isa":
            if args.isa_command != "run":
                print("usage: specpcm isa run <program>", file=sys.stderr)
                return 2
            return _cmd_isa_run(args)
        if args.command == "dse":
            return _cmd_dse(args)
        if args.command == "report":
            return _cmd_report(args)
    except (ConfigError, ValueError, OSError, isa.IsaTrap) as exc:
        print(f"specpcm: error: {exc}", file=sys.stderr)
        return 1
    print(f"specpcm: unknown command {args.command!r}", file=sys.stderr)
    return 2


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
