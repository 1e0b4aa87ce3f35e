"""Command-line front end.

Exit codes: 0 success, 2 usage or configuration error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from decimal import Decimal, InvalidOperation

from . import __version__
from .analysis import calibrate_threshold, fmt, roc, roc_csv
from .channel import JitterModel
from .config import ExperimentConfig, _public, load_config, parse_config
from .detect import DETECTORS, decide, score
from .errors import CalibrationError, ConfigError, DegenerateInputError, RainbowError
from .experiment import run_trials
from .flow import ipd, load_flows, write_flows
from .linking import link_all
from .runner import run_experiment, sweep_claims
from .seeding import derive_seed
from .traffic import ModelAParams, ModelBParams, gen_model_a, gen_model_b
from .watermark import WatermarkParams, embed, load_records, write_records

log = logging.getLogger("rainbow")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _out(path):
    if path in (None, "-"):
        return sys.stdout
    return open(path, "w", newline="")


def _jitter_args(p):
    p.add_argument("--rate", type=float, default=10.0, help="model-A packet rate for LRT detectors")
    p.add_argument("--jitter-dist", default="laplace", choices=("laplace", "gaussian", "uniform"))
    p.add_argument("--jitter-scale", type=float, default=0.002)


def _experiment_overrides(p):
    p.add_argument("--seed", type=int, help="master seed (overrides master_seed)")
    p.add_argument("--trials", type=int, help="trials per hypothesis (overrides n_trials)")
    p.add_argument("--out-dir", help="output directory (overrides out_dir)")
    p.add_argument("--workers", type=int, help="worker processes (output does not depend on it)")


def _overrides(args) -> dict:
    return {"master_seed": args.seed, "n_trials": args.trials, "out_dir": args.out_dir, "workers": args.workers}


# --- subcommands ---------------------------------------------------------------


def cmd_generate(args):
    flows = []
    base = None
    if args.model == "b":
        if args.base:
            base = load_flows(args.base)[0]
        else:
            base = gen_model_a(ModelAParams(args.rate, args.packets, derive_seed(args.seed, 0, "base")), "base")
    for i in range(args.count):
        seed = derive_seed(args.seed, i, "generate")
        fid = f"{args.prefix}{i}"
        if args.model == "a":
            flows.append(gen_model_a(ModelAParams(args.rate, args.packets, seed), fid))
        else:
            flows.append(gen_model_b(ModelBParams(base, args.sigma, args.deviation_dist, seed), fid))
    write_flows(args.output, flows, header=f"rainbow {__version__} generate model={args.model} seed={args.seed}")
    return EXIT_OK


def cmd_embed(args):
    flows = load_flows(args.flows)
    outgoing, records = [], []
    for i, f in enumerate(flows):
        params = WatermarkParams(derive_seed(args.key, i, "watermark"), len(f) - 1, args.amplitude)
        out, rec = embed(f, params, args.base_offset)
        outgoing.append(out)
        records.append(rec)
        st = rec.embed_stats
        if not st.exact:
            log.info("%s: %d clipped, %d FIFO-held packets", f.flow_id, st.clip_count, st.fifo_holds)
    write_flows(args.output, outgoing)
    write_records(args.records, records)
    return EXIT_OK


def cmd_detect(args):
    records = load_records(args.records)
    observed = {f.flow_id: f for f in load_flows(args.flows)}
    jitter = JitterModel(args.jitter_dist, args.jitter_scale)
    with _out(args.output) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["flow_id", "detector", "score", "linked"])
        for rec in records:
            flow = observed.get(rec.flow_id)
            if flow is None:
                log.warning("no observed flow with id %r", rec.flow_id)
                continue
            try:
                s = score(args.detector, rec, ipd(flow), rate=args.rate, jitter=jitter)
            except DegenerateInputError as exc:
                log.warning("%s: %s", rec.flow_id, exc)
                w.writerow([rec.flow_id, args.detector, "", ""])
                continue
            linked = "" if args.threshold is None else str(decide(s, args.threshold).linked).lower()
            w.writerow([rec.flow_id, s.detector_name, fmt(s.value), linked])
    return EXIT_OK


def cmd_link(args):
    records = load_records(args.records)
    flows = load_flows(args.flows)
    jitter = JitterModel(args.jitter_dist, args.jitter_scale)
    threshold = args.threshold
    if threshold is None:
        cfg = load_config(args.config, {"master_seed": args.seed}).validate()
        scenario = cfg.to_scenario()
        table = run_trials(scenario, [args.detector], 1, cfg.null_trials, cfg.master_seed, cfg.workers)
        threshold = calibrate_threshold(table.h0(args.detector), args.fpr)
        log.info("calibrated threshold %s at FPR %g from %d null trials", fmt(threshold), args.fpr, cfg.null_trials)
    m = link_all(records, flows, args.detector, threshold, rate=args.rate, jitter=jitter)
    with _out(args.output) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["record_id"] + m.flow_ids)
        for rid, row in zip(m.record_ids, m.scores):
            w.writerow([rid] + [fmt(v) for v in row])
    with _out(args.summary) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["record_id", "assigned_flow", "score", "threshold"])
        for i, rid in enumerate(m.record_ids):
            j = m.assignments[i]
            w.writerow([rid, "" if j is None else m.flow_ids[j], "" if j is None else fmt(m.scores[i, j]), fmt(threshold)])
    t = m.telemetry
    print(f"pairs={t.pairs} degenerate={t.degenerate} seconds={t.seconds:.3f}", file=sys.stderr)
    return EXIT_OK


def cmd_roc(args):
    h0, h1 = [], []
    with open(args.scores, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or row[0].startswith("#") or row[0] in ("label", "hypothesis"):
                continue
            label, value = row[0].strip().lower(), float(row[1])
            if label in ("h0", "0"):
                h0.append(value)
            elif label in ("h1", "1"):
                h1.append(value)
            else:
                raise ConfigError(f"{args.scores}: line {lineno}: label must be h0/h1 or 0/1")
    curve = roc(h0, h1)
    with _out(args.output) as fh:
        fh.write(roc_csv(curve))
    print(f"auc={fmt(curve.auc)} n_h0={curve.n_h0} n_h1={curve.n_h1}", file=sys.stderr)
    return EXIT_OK


def _load_experiment(args) -> ExperimentConfig:
    if args.config:
        return load_config(args.config, _overrides(args))
    return parse_config("", _overrides(args))


def cmd_run(args):
    cfg = _load_experiment(args).validate()
    report = run_experiment(cfg)
    sys.stdout.write(report.report_csv())
    return EXIT_OK


def cmd_sweep_claims(args):
    cfg = _load_experiment(args)
    if args.jitter_scale is not None:
        cfg = parse_config("", {**_public(cfg), "jitter_scale": args.jitter_scale})
    cfg.validate()
    rep = sweep_claims(cfg, cfg.out_dir)
    print(rep.table())
    if args.strict and not rep.all_passed:
        return 1
    return EXIT_OK


def cmd_convert_trace(args):
    stamps = []
    with open(args.input) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            fields = line.split(args.delimiter) if args.delimiter else line.replace(",", " ").split()
            try:
                stamps.append(Decimal(fields[args.column].strip()) * Decimal(args.scale))
            except (IndexError, InvalidOperation):
                if not stamps and lineno == 1:
                    continue  # header row
                raise RainbowError(f"{args.input}: line {lineno}: no timestamp in column {args.column}") from None
    if args.sort:
        stamps.sort()
    for i in range(1, len(stamps)):
        if stamps[i] < stamps[i - 1]:
            raise RainbowError(f"{args.input}: timestamps decrease at entry {i + 1}; use --sort")
    if len(stamps) < 2:
        raise RainbowError(f"{args.input}: fewer than 2 timestamps")
    with _out(args.output) as fh:
        fh.writelines(f"{args.flow_id},{format(t, 'f')}\n" for t in stamps)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rainbow", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"rainbow {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="synthesise model-A or model-B flows")
    p.add_argument("--model", choices=("a", "b"), default="a")
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--packets", type=int, default=500)
    p.add_argument("--rate", type=float, default=10.0)
    p.add_argument("--sigma", type=float, default=0.005, help="model-B deviation scale")
    p.add_argument("--deviation-dist", choices=("laplace", "gaussian"), default="laplace")
    p.add_argument("--base", help="flow file whose first flow is the model-B base")
    p.add_argument("--prefix", default="f")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("embed", help="watermark flows and write detector records")
    p.add_argument("flows")
    p.add_argument("--key", type=int, required=True, help="master watermark key")
    p.add_argument("--amplitude", type=float, default=0.005)
    p.add_argument("--base-offset", type=float, help="queue offset in seconds (default 10 * amplitude)")
    p.add_argument("-o", "--output", required=True, help="outgoing flow file")
    p.add_argument("--records", required=True, help="record file")
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("detect", help="score observed flows against their records")
    p.add_argument("--records", required=True)
    p.add_argument("--flows", required=True)
    p.add_argument("--detector", required=True, choices=list(DETECTORS))
    p.add_argument("--threshold", type=float)
    _jitter_args(p)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("link", help="score all record/flow pairs and assign matches")
    p.add_argument("--records", required=True)
    p.add_argument("--flows", required=True)
    p.add_argument("--detector", required=True, choices=list(DETECTORS))
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--threshold", type=float)
    g.add_argument("--fpr", type=float, help="calibrate the threshold at this FPR (needs --config)")
    p.add_argument("--config", help="experiment config describing the calibration scenario")
    p.add_argument("--seed", type=int)
    _jitter_args(p)
    p.add_argument("-o", "--output", help="score matrix CSV")
    p.add_argument("--summary", help="assignment summary CSV")
    p.set_defaults(func=cmd_link)

    p = sub.add_parser("roc", help="ROC curve and AUC from labelled scores")
    p.add_argument("scores", help="CSV rows of label,score with label h0/h1")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_roc)

    p = sub.add_parser("run", help="run a configured detector comparison")
    p.add_argument("--config")
    _experiment_overrides(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep-claims", help="reproduce the passive vs. watermark comparisons")
    p.add_argument("--config")
    p.add_argument("--jitter-scale", type=float, help="override jitter_scale")
    p.add_argument("--strict", action="store_true", help="exit 1 if any claim fails")
    _experiment_overrides(p)
    p.set_defaults(func=cmd_sweep_claims)

    p = sub.add_parser("convert-trace", help="timestamp list to flow format")
    p.add_argument("input")
    p.add_argument("--flow-id", required=True)
    p.add_argument("--column", type=int, default=0)
    p.add_argument("--delimiter", help="field separator (default: comma or whitespace)")
    p.add_argument("--scale", default="1", help="multiply timestamps, e.g. 1e-6 for microseconds")
    p.add_argument("--sort", action="store_true")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_convert_trace)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    if args.command == "link" and args.threshold is None and not args.config:
        parser.error("--fpr needs --config")
    try:
        return args.func(args)
    except (ConfigError, CalibrationError) as exc:
        print(f"rainbow: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (RainbowError, OSError, ValueError, KeyError, TypeError) as exc:
        print(f"rainbow: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
