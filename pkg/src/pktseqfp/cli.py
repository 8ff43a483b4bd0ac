"""Command-line interface.

Exit codes: 0 success, 1 negative result (no match), 2 usage or
configuration error, 3 runtime error.  Logs go to standard error; data goes
to files or standard output.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional

from . import __version__
from .evaluation import (
    Bins,
    false_positive_scan,
    generate_planted_dataset,
    load_dataset,
    load_event_samples,
    merge_samples,
    prevalence,
    write_dataset,
)
from .evaluation.report import (
    plot_fp_bins,
    plot_prevalence,
    write_fp_cells_csv,
    write_fp_csv,
    write_prevalence_csv,
)
from .evaluation.synth import PlanError
from .fingerprint import FingerprintFormatError, read_fingerprint, summarize, write_fingerprint
from .ingest import (
    FilterPolicy,
    assemble_streams,
    filter_sample,
    load_capture,
    read_timestamps,
    split_by_events,
    write_capture,
)
from .matcher import VacuousFingerprintError, check_loadable, match_sample
from .metrics import Technique, TechniqueKind, get_metric, load_metric_module
from .refinement import DEFAULT_P, ConfigError, RefinementConfig, refine
from .tabulation import SampleFormatError, read_sample, tabulate, write_sample

log = logging.getLogger("pktseqfp")

CONFIG_ENV = "PKTSEQFP_CONFIG"

EXIT_OK, EXIT_NEGATIVE, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2, 3

ALL_TECHNIQUES = ("sdbf", "esdbf", "ebf", "fqdnbf", "esldbf")


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    """Every setting a config file may carry; flags override file values."""

    technique: Optional[str] = None
    h: Optional[int] = None
    metric_params: Optional[dict] = None
    P: Optional[int] = None
    n_min: Optional[int] = None
    T: Optional[int] = None
    T_min: Optional[int] = None
    epsilon: Optional[float] = None
    min_pts: Optional[int] = None
    techniques: Optional[list] = None
    metric_modules: Optional[list] = None
    jobs: Optional[int] = None
    seed: Optional[int] = None
    bins: Optional[str] = None
    window_secs: Optional[float] = None
    device_ip: Optional[str] = None
    scope: Optional[str] = None
    dns_exempt: Optional[bool] = None
    journal: Optional[str] = None

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise UsageError(f"config {path} is not valid JSON: {exc}") from None
        if not isinstance(doc, dict):
            raise UsageError(f"config {path} must hold a JSON object")
        doc.pop("schema_version", None)
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(doc) - known)
        if unknown:
            raise UsageError(f"config {path}: unknown key(s) {', '.join(unknown)}")
        if isinstance(doc.get("bins"), list):
            doc["bins"] = ",".join(str(b) for b in doc["bins"])
        return cls(**doc)

    def merged(self, args: argparse.Namespace) -> "RunConfig":
        values = {}
        for f in fields(self):
            flag = getattr(args, f.name, None)
            values[f.name] = flag if flag is not None else getattr(self, f.name)
        return RunConfig(**values)


# -- helpers -------------------------------------------------------------------

def _config(args) -> RunConfig:
    path = args.config or os.environ.get(CONFIG_ENV)
    base = RunConfig.from_file(path) if path else RunConfig()
    cfg = base.merged(args)
    for spec in cfg.metric_modules or ():
        try:
            load_metric_module(spec)
        except (ImportError, OSError) as exc:
            raise UsageError(f"cannot load metric module {spec!r}: {exc}") from None
    return cfg


def _jobs(cfg: RunConfig) -> int:
    return cfg.jobs if cfg.jobs else (os.cpu_count() or 1)


def _technique(text: str, cfg: RunConfig) -> Technique:
    try:
        technique = Technique.parse(text, cfg.h or 0, cfg.metric_params or {})
        if technique.kind is TechniqueKind.CUSTOM:
            get_metric(technique.name)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    except KeyError as exc:
        raise UsageError(exc.args[0]) from None
    return technique


def _refinement_config(technique: Technique, cfg: RunConfig, T: int, mixed: bool = False) -> RefinementConfig:
    """Resolve defaults; with ``mixed``, window flags only apply to sequence techniques."""
    T = cfg.T if cfg.T is not None else T
    if technique.is_endpoint and mixed:
        P = n_min = 1
    elif technique.is_endpoint:
        P = cfg.P if cfg.P is not None else 1
        n_min = cfg.n_min if cfg.n_min is not None else 1
    else:
        P = cfg.P if cfg.P is not None else DEFAULT_P
        if cfg.n_min is None:
            raise UsageError(f"--n-min is required for technique {technique.label}")
        n_min = cfg.n_min
    return RefinementConfig(
        T=T,
        technique=technique,
        P=P,
        n_min=n_min,
        T_min=cfg.T_min,
        epsilon=cfg.epsilon if cfg.epsilon is not None else 0.0,
        min_pts=cfg.min_pts,
    )


def _add_refinement_flags(p: argparse.ArgumentParser, many: bool = False) -> None:
    g = p.add_argument_group("refinement")
    if many:
        g.add_argument("--technique", dest="techniques", action="append", metavar="NAME",
                       help="sdbf, esdbf, ebf, fqdnbf, esldbf or custom:<name>; repeatable "
                            "(default: the five built-in techniques)")
    else:
        g.add_argument("--technique", metavar="NAME",
                       help="sdbf, esdbf, ebf, fqdnbf, esldbf or custom:<name> (default sdbf)")
    g.add_argument("--h", type=int, metavar="BYTES", help="size slack for sdbf/esdbf (default 0)")
    g.add_argument("--P", type=int, help=f"per-stream packet prefix (default {DEFAULT_P}; 1 for endpoint techniques)")
    g.add_argument("--n-min", dest="n_min", type=int,
                   help="shortest window length; required for sdbf/esdbf, 1 for endpoint techniques")
    g.add_argument("--T", type=int, help="samples per event (default: number of samples found)")
    g.add_argument("--T-min", dest="T_min", type=int, help="distinct samples a cluster must span (default T)")
    g.add_argument("--epsilon", type=float, help="cluster radius (default 0)")
    g.add_argument("--min-pts", dest="min_pts", type=int, help="minimum cluster population (default T)")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="FILE",
                   help=f"JSON run configuration; flags override it (default: ${CONFIG_ENV})")
    p.add_argument("--metric-module", dest="metric_modules", action="append", metavar="MODULE",
                   help="module or .py file registering custom metrics; repeatable")
    p.add_argument("-v", "--verbose", action="count", default=0, help="more logging on stderr")


# -- subcommands ---------------------------------------------------------------

def cmd_split(args) -> int:
    cfg = _config(args)
    window = cfg.window_secs if cfg.window_secs is not None else 15.0
    raw = load_capture(args.pcap)
    stamps = read_timestamps(args.timestamps)
    try:
        parts = split_by_events(raw, stamps, window)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for k, part in enumerate(parts, start=1):
        write_capture(part, out / f"{k}.pcap")
    log.info("wrote %d event capture(s) to %s", len(parts), out)
    return EXIT_OK


def cmd_tabulate(args) -> int:
    cfg = _config(args)
    if not cfg.device_ip:
        raise UsageError("--device-ip is required")
    try:
        policy = FilterPolicy(cfg.device_ip, cfg.scope or "wan",
                              True if cfg.dns_exempt is None else cfg.dns_exempt)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    filtered = filter_sample(load_capture(args.pcap), policy)
    streams = assemble_streams(filtered, policy.device_address)
    sample = tabulate(streams, args.event_id, args.sample_id)
    write_sample(sample, args.out)
    log.info("%s: %d stream(s), %d record(s)", args.out, len(sample.streams), len(sample.records))
    return EXIT_OK


def _extract_event(samples, cfg: RunConfig, technique: Technique):
    config = _refinement_config(technique, cfg, len(samples))
    return refine(samples, config)


def cmd_extract(args) -> int:
    cfg = _config(args)
    technique = _technique(cfg.technique or "sdbf", cfg)
    write = write_fingerprint
    if args.samples_dir:
        if not args.out:
            raise UsageError("--samples-dir needs --out")
        samples = load_event_samples(args.samples_dir, args.event_id)
        if not samples:
            raise UsageError(f"no sample files in {args.samples_dir}")
        fp = _extract_event(samples, cfg, technique)
        write(summarize(fp) if args.summary else fp, args.out)
        log.info("event %d: %d cluster(s)", fp.event_id, len(fp.clusters))
        return EXIT_OK
    if not args.out_dir:
        raise UsageError("--dataset-dir needs --out-dir")
    dataset = load_dataset(args.dataset_dir)
    config = _refinement_config(technique, cfg, dataset.T)
    report = prevalence(dataset, [config], jobs=_jobs(cfg), keep_fingerprints=True)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for event_id, fp in report.fingerprints[technique.label].items():
        write(summarize(fp) if args.summary else fp, out / f"{event_id}.json")
    row = report.rows[0]
    log.info("%s: %d/%d event(s) with a nonempty fingerprint", dataset.name, row.fingerprintable, row.total)
    return EXIT_OK


def cmd_summarize(args) -> int:
    _config(args)
    fp = read_fingerprint(args.input)
    write_fingerprint(summarize(fp), args.out)
    return EXIT_OK


def cmd_match(args) -> int:
    _config(args)
    summary = check_loadable(summarize(read_fingerprint(args.fingerprint)), args.fingerprint)
    result = match_sample(summary, read_sample(args.sample))
    doc = {"fingerprint": str(args.fingerprint), "sample": str(args.sample), **result.to_dict()}
    sys.stdout.write(json.dumps(doc, sort_keys=True) + "\n")
    return EXIT_OK if result.matched else EXIT_NEGATIVE


def cmd_eval_prevalence(args) -> int:
    cfg = _config(args)
    labels = cfg.techniques or list(ALL_TECHNIQUES)
    rows = []
    fp_root = Path(args.fingerprints_out) if args.fingerprints_out else None
    for directory in args.dataset_dir:
        dataset = load_dataset(directory)
        configs = [_refinement_config(_technique(t, cfg), cfg, dataset.T, mixed=len(labels) > 1) for t in labels]
        report = prevalence(dataset, configs, jobs=_jobs(cfg), keep_fingerprints=fp_root is not None)
        rows.extend(report.rows)
        if fp_root is not None:
            for label, fps in report.fingerprints.items():
                target = fp_root / label.replace(":", "_") / dataset.name
                target.mkdir(parents=True, exist_ok=True)
                for event_id, fp in fps.items():
                    if not fp.is_empty:
                        write_fingerprint(summarize(fp), target / f"{event_id}.json")
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_prevalence_csv(rows, out / "prevalence.csv")
    plot_prevalence(rows, out / "prevalence.png")
    for r in rows:
        log.info("%s %s: %d%% (%d of %d; %d with traffic in every sample)",
                 r.dataset, r.technique, r.percentage, r.fingerprintable, r.total, r.baseline_total)
    return EXIT_OK


def _load_fingerprint_dir(directory: Path) -> dict:
    """``<dir>/<dataset>/<event>.json`` or a flat ``<dir>/<event>.json`` named after ``dir``."""
    groups = {}
    flat = sorted(directory.glob("*.json"))
    if flat:
        groups[directory.name] = [read_fingerprint(p) for p in flat]
    for sub in sorted(p for p in directory.iterdir() if p.is_dir()):
        files = sorted(sub.glob("*.json"))
        if files:
            groups[sub.name] = [read_fingerprint(p) for p in files]
    return groups


def cmd_eval_fp(args) -> int:
    cfg = _config(args)
    try:
        bins = Bins.parse(cfg.bins) if cfg.bins else Bins()
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    fp_dir = Path(args.fingerprints_dir)
    if not fp_dir.is_dir():
        raise UsageError(f"{fp_dir} is not a directory")
    fingerprints = _load_fingerprint_dir(fp_dir)
    if not fingerprints:
        raise UsageError(f"no fingerprint files under {fp_dir}")
    datasets = [load_dataset(d) for d in args.against_dirs]
    report = false_positive_scan(fingerprints, datasets, bins=bins, jobs=_jobs(cfg), journal=cfg.journal)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_fp_csv(report, out / "false_positives.csv")
    write_fp_cells_csv(report, out / "false_positive_bins.csv")
    plot_fp_bins(report, out / "false_positive_bins.png")
    return EXIT_OK


def cmd_merge(args) -> int:
    samples = [read_sample(p) for p in args.samples]
    merged = merge_samples(samples, args.event_id, args.sample_id)
    write_sample(merged, args.out)
    return EXIT_OK


def cmd_synth(args) -> int:
    cfg = _config(args)
    try:
        plan = json.loads(Path(args.plan).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise UsageError(f"plan {args.plan} is not valid JSON: {exc}") from None
    seed = cfg.seed if cfg.seed is not None else 0
    try:
        dataset, truth = generate_planted_dataset(plan, seed, name=Path(args.out_dir).name)
    except PlanError as exc:
        raise UsageError(str(exc)) from None
    out = Path(args.out_dir)
    write_dataset(dataset, out)
    (out / "truth").mkdir(parents=True, exist_ok=True)
    for event_id, fp in truth.items():
        write_fingerprint(fp, out / "truth" / f"{event_id}.json")
    log.info("wrote %d event(s) x %d sample(s) to %s", len(dataset), dataset.T, out)
    return EXIT_OK


# -- parser --------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pktseqfp", description="Packet-sequence fingerprints of device events.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)

    p = sub.add_parser("split", help="cut a capture into per-event captures")
    _add_common(p)
    p.add_argument("--pcap", required=True, help="input pcap or pcapng")
    p.add_argument("--timestamps", required=True, help="file of event timestamps, one per line")
    p.add_argument("--window-secs", dest="window_secs", type=float, help="window after each timestamp (default 15)")
    p.add_argument("--out-dir", required=True, help="directory for <k>.pcap files")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("tabulate", help="turn one event capture into a sample CSV")
    _add_common(p)
    p.add_argument("--pcap", required=True)
    p.add_argument("--device-ip", dest="device_ip", help="private address of the device")
    p.add_argument("--dns-exempt", dest="dns_exempt", action=argparse.BooleanOptionalAction, default=None,
                   help="keep DNS to/from the device whatever the peer (default on)")
    p.add_argument("--scope", choices=("wan", "lan"), help="which peers to keep (default wan)")
    p.add_argument("--event-id", dest="event_id", type=int, required=True)
    p.add_argument("--sample-id", dest="sample_id", type=int, required=True)
    p.add_argument("--out", required=True, help="output CSV")
    p.set_defaults(func=cmd_tabulate)

    p = sub.add_parser("extract", help="refine a fingerprint from an event's samples")
    _add_common(p)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--samples-dir", help="directory of one event's sample CSVs")
    src.add_argument("--dataset-dir", help="dataset directory <event>/<sample>.csv")
    p.add_argument("--out", help="fingerprint JSON (with --samples-dir)")
    p.add_argument("--out-dir", help="directory for <event>.json (with --dataset-dir)")
    p.add_argument("--event-id", dest="event_id", type=int, help="event id for header-only samples")
    p.add_argument("--summary", action="store_true", help="write the summary form instead of the complete form")
    p.add_argument("--jobs", type=int, help="worker processes (default: CPU count)")
    _add_refinement_flags(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("summarize", help="convert a complete fingerprint to summary form")
    _add_common(p)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_summarize)

    p = sub.add_parser("match", help="test a fingerprint against one sample (exit 0 match, 1 no match)")
    _add_common(p)
    p.add_argument("--fingerprint", required=True)
    p.add_argument("--sample", required=True)
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("eval", help="dataset-level evaluations")
    ev = p.add_subparsers(dest="eval_command", metavar="EVAL", parser_class=_Parser)
    q = ev.add_parser("prevalence", help="share of events with a nonempty fingerprint")
    _add_common(q)
    q.add_argument("--dataset-dir", nargs="+", required=True)
    q.add_argument("--out-dir", required=True, help="directory for prevalence.csv and prevalence.png")
    q.add_argument("--fingerprints-out", help="also write nonempty summary fingerprints here")
    q.add_argument("--jobs", type=int, help="worker processes (default: CPU count)")
    _add_refinement_flags(q, many=True)
    q.set_defaults(func=cmd_eval_prevalence)
    q = ev.add_parser("fp", help="closed-world false-positive scan")
    _add_common(q)
    q.add_argument("--fingerprints-dir", required=True, help="<dir>/<dataset>/<event>.json or <dir>/<event>.json")
    q.add_argument("--against-dirs", nargs="+", required=True, help="dataset directories to scan")
    q.add_argument("--bins", help="bin edges (default 0,10,100)")
    q.add_argument("--journal", help="JSONL progress journal; reruns skip finished units")
    q.add_argument("--out-dir", required=True)
    q.add_argument("--jobs", type=int, help="worker processes (default: CPU count)")
    q.set_defaults(func=cmd_eval_fp)

    p = sub.add_parser("merge", help="merge samples into one, as seen behind a NAT")
    _add_common(p)
    p.add_argument("--samples", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--event-id", dest="event_id", type=int, default=0)
    p.add_argument("--sample-id", dest="sample_id", type=int, default=1)
    p.set_defaults(func=cmd_merge)

    p = sub.add_parser("synth", help="generate a dataset with planted fingerprints")
    _add_common(p)
    p.add_argument("--plan", required=True, help="plan JSON")
    p.add_argument("--seed", type=int, help="random seed (default 0)")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_synth)
    return parser


def _setup_logging(verbosity: int) -> None:
    level = logging.WARNING if verbosity == 0 else logging.INFO if verbosity == 1 else logging.DEBUG
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _setup_logging(getattr(args, "verbose", 0))
        if not getattr(args, "func", None):
            parser.print_help(sys.stderr)
            return EXIT_USAGE
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"error: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except VacuousFingerprintError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FileNotFoundError, IsADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (SampleFormatError, FingerprintFormatError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
