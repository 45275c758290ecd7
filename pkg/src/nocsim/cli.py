"""Command-line front end.

Resolution order: built-in defaults < --config file < explicit flags.
Each run echoes its fully resolved configuration and writes results.csv
plus summary.json (and trace.csv / packets.txt when requested) under the
output directory.  Outputs are byte-deterministic for a fixed (config,
seed) pair.

Exit codes: 0 success, 2 configuration error, 3 invariant violation,
4 possible deadlock detected.
"""

import argparse
import json
import os
import sys

from . import experiments
from .config import ExperimentConfig, config_from_dict, load_config
from .errors import ConfigError, InvariantViolation, NocsimError
from .experiments import EXIT_CONFIG, EXIT_INVARIANT, EXIT_OK

SCHEMA_VERSION = 1


def _parse_sizes(text):
    """'16..512:16' or '64,128,256' -> list of payload sizes."""
    try:
        if ".." in text:
            span, _, step = text.partition(":")
            lo, _, hi = span.partition("..")
            return list(range(int(lo), int(hi) + 1, int(step or 16)))
        return [int(tok) for tok in text.split(",") if tok]
    except ValueError as exc:
        raise ConfigError(f"cannot parse sizes {text!r}: {exc}") from exc


def _parse_hops(text):
    try:
        if ".." in text:
            lo, _, hi = text.partition("..")
            return list(range(int(lo), int(hi) + 1))
        return [int(tok) for tok in text.split(",") if tok]
    except ValueError as exc:
        raise ConfigError(f"cannot parse hops {text!r}: {exc}") from exc


def _parse_topology(text):
    """'mesh2x2' | 'qfdb4' | 'mesh:4x4x1' | 'torus:4x4'."""
    if text in ("mesh2x2", "qfdb4"):
        return {"preset": text}
    kind, _, dims = text.partition(":")
    if kind in ("mesh", "torus") and dims:
        try:
            extents = [int(d) for d in dims.split("x")]
        except ValueError as exc:
            raise ConfigError(f"cannot parse topology {text!r}: {exc}") from exc
        extents += [1] * (3 - len(extents))
        if len(extents) != 3:
            raise ConfigError(f"topology {text!r} has more than three dimensions")
        return {"preset": kind, "extents": extents}
    raise ConfigError(f"unknown topology {text!r}")


def build_parser():
    p = argparse.ArgumentParser(
        prog="nocsim",
        description="Cycle-driven interconnect simulator: latency/bandwidth "
                    "experiments over a credit-based mesh fabric.")
    p.add_argument("--experiment", choices=ExperimentConfig.EXPERIMENTS)
    p.add_argument("--config", metavar="FILE",
                   help="JSON config (or a summary.json from a previous run)")
    p.add_argument("--topology", metavar="T",
                   help="mesh2x2 | qfdb4 | mesh:XxYxZ | torus:XxYxZ")
    p.add_argument("--size", type=int, metavar="BYTES")
    p.add_argument("--sizes", metavar="A..B:STEP", help="sweep list, e.g. 16..512:16")
    p.add_argument("--hops", metavar="LIST", help="ping-pong hop counts, e.g. 1..4")
    p.add_argument("--senders", type=int, metavar="N")
    p.add_argument("--seed", type=int)
    p.add_argument("--cycles", type=int, metavar="N", help="soak length")
    p.add_argument("--rate", type=float, metavar="P", help="uniform packets/node/cycle")
    p.add_argument("--count", type=int, metavar="N", help="packets per sender")
    p.add_argument("--iterations", type=int, metavar="N")
    p.add_argument("--dim-order", dest="dim_order", metavar="XYZ",
                   help="coordinate evaluation order, e.g. zyx")
    p.add_argument("--vc-policy", dest="vc_policy", choices=["offset_sign", "dateline"])
    p.add_argument("--trace-link", action="store_const", const=True, default=None)
    p.add_argument("--dump-packets", action="store_const", const=True, default=None)
    p.add_argument("--out", metavar="DIR")
    p.add_argument("--jobs", type=int, metavar="N")
    p.add_argument("--show-config", action="store_true",
                   help="print the resolved config and exit")
    return p


def resolve_config(argv):
    args = build_parser().parse_args(argv)
    data = {}
    if args.config:
        data = load_config(args.config)
        if isinstance(data.get("config"), dict):
            data = data["config"]  # re-run from a summary.json
    overlay = {"workload": {}, "topology": {}, "router": {}}
    if args.experiment:
        overlay["experiment"] = args.experiment
    if args.topology:
        overlay["topology"] = _parse_topology(args.topology)
    if args.size is not None:
        overlay["workload"]["sizes"] = [args.size]
    if args.sizes:
        overlay["workload"]["sizes"] = _parse_sizes(args.sizes)
    if args.hops:
        overlay["workload"]["hops"] = _parse_hops(args.hops)
    if args.senders is not None:
        overlay["workload"]["senders"] = args.senders
    if args.cycles is not None:
        overlay["workload"]["cycles"] = args.cycles
    if args.rate is not None:
        overlay["workload"]["rate"] = args.rate
    if args.count is not None:
        overlay["workload"]["count"] = args.count
    if args.iterations is not None:
        overlay["workload"]["iterations"] = args.iterations
    if args.dim_order:
        overlay["router"]["dim_order"] = args.dim_order
    if args.vc_policy:
        overlay["router"]["vc_policy"] = args.vc_policy
    if args.seed is not None:
        overlay["seed"] = args.seed
    if args.trace_link:
        overlay["trace_link"] = True
    if args.dump_packets:
        overlay["dump_packets"] = True
    if args.out:
        overlay["out"] = args.out
    if args.jobs is not None:
        overlay["jobs"] = args.jobs
    for section in ("workload", "topology", "router"):
        if not overlay[section]:
            del overlay[section]
        else:
            data.setdefault(section, {})
            data[section].update(overlay.pop(section))
    data.update(overlay)
    return config_from_dict(data), args.show_config


def parse_config(argv, config_file=None):
    """Programmatic form of the CLI resolution (flags list + optional file)."""
    argv = list(argv)
    if config_file:
        argv += ["--config", config_file]
    cfg, _ = resolve_config(argv)
    return cfg


def fmt_value(v):
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def emit_results(rows, path, fieldnames):
    """Deterministic CSV: fixed column order, 6 significant digits."""
    lines = [",".join(fieldnames)]
    for row in rows:
        lines.append(",".join(fmt_value(row.get(k, "")) for k in fieldnames))
    payload = "\n".join(lines) + "\n"
    with open(path, "w", newline="") as fh:
        fh.write(payload)
    return path


def emit_summary(summary, path):
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def emit_trace(trace_rows, path):
    with open(path, "w", newline="") as fh:
        fh.write("cycle,endpoint,event,words\n")
        for cycle, endpoint, event, words in trace_rows:
            fh.write(f"{cycle},{endpoint},{event},{words}\n")
    return path


def run_experiment(cfg):
    """Run the configured experiment and write its artifacts.

    Returns (exit_code, artifact_paths).
    """
    rows, summary, code, trace, dump = experiments.run(cfg)
    out_dir = cfg.out
    os.makedirs(out_dir, exist_ok=True)
    echo = cfg.to_dict()
    # artifact plumbing, not experiment semantics: keep summaries byte-stable
    # across output locations
    echo.pop("out")
    echo.pop("jobs")
    full_summary = {
        "schema_version": SCHEMA_VERSION,
        "experiment": cfg.experiment,
        "seed": cfg.seed,
        "config": echo,
        "results": rows,
        "counters": _counters_block(rows, summary),
        **summary,
    }
    paths = [
        emit_results(rows, os.path.join(out_dir, "results.csv"),
                     experiments.FIELD_ORDER[cfg.experiment]),
        emit_summary(full_summary, os.path.join(out_dir, "summary.json")),
    ]
    if trace is not None:
        paths.append(emit_trace(trace, os.path.join(out_dir, "trace.csv")))
    if dump is not None:
        dump_path = os.path.join(out_dir, "packets.txt")
        with open(dump_path, "w", newline="") as fh:
            fh.writelines(line + "\n" for line in dump)
        paths.append(dump_path)
    return code, paths


def _counters_block(rows, summary):
    keys = ("injected", "ejected", "dropped", "in_flight")
    if rows and all(k in rows[0] for k in keys):
        return {k: rows[0][k] for k in keys}
    return {k: sum(r.get(k, 0) for r in rows) for k in keys}


def main(argv=None):
    try:
        cfg, show = resolve_config(sys.argv[1:] if argv is None else argv)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    resolved = json.dumps(cfg.to_dict(), indent=2, sort_keys=True)
    if show:
        print(resolved)
        return EXIT_OK
    print(f"nocsim {cfg.experiment} (seed {cfg.seed})")
    print(resolved)
    try:
        code, paths = run_experiment(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except NocsimError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 1
    for p in paths:
        print(f"wrote {p}")
    if code == experiments.EXIT_DEADLOCK:
        print("possible deadlock detected (see summary.json)", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
