"""Command line front end.

    codedmem run   --config sim.cfg --trace t.csv [--compare-baseline] [--events log] [--out DIR]
    codedmem gen   --bands SPEC --cores N --duration NS --gap NS --seed S [--split K] [--ramp SLOPE]
    codedmem sweep --ratios 1..10 --schemes I,II,III,uncoded --alphas 0.1 [--trace t.csv] [--jobs N]

Exit status: 0 ok, 2 bad configuration or input, 3 simulation invariant fault.
"""

import argparse
import configparser
import json
import os
import sys
from dataclasses import fields, replace
from pathlib import Path

from codedmem.engine import (
    MetricsReport,
    SimConfig,
    Simulation,
    baseline_config,
    grid,
    improvement,
    report_row,
    rows_to_csv,
    sweep,
    sweep_csv,
    sweep_json,
)
from codedmem.errors import ConfigError, InvariantViolation, TraceError
from codedmem.trace import (
    DEFAULT_SPACE,
    BandSpec,
    add_ramp,
    band_histogram_csv,
    generate_banded,
    load_trace,
    serialize,
    split_bands,
    two_band_spec,
)

EXIT_OK, EXIT_CONFIG, EXIT_INVARIANT = 0, 2, 3

# config file section -> keys it may hold ("enabled" maps to SimConfig.dynamic)
SECTIONS = {
    "layout": {"scheme", "alpha", "L", "W", "num_banks", "coded_rows", "rep_r", "rep_w"},
    "engine": {"access_ratio", "queue_depth", "write_threshold", "write_cap",
               "core_cycle_ns", "max_burst", "strict", "init_seed"},
    "dynamic": {"enabled", "r", "T"},
}


def default_seed():
    s = os.environ.get("CODEDMEM_SEED")
    if s is None:
        return 0
    try:
        return int(s)
    except ValueError:
        raise ConfigError(f"CODEDMEM_SEED must be an integer, got {s!r}", "CODEDMEM_SEED") from None


def _coerce(name, text):
    ftype = {f.name: f for f in fields(SimConfig)}[name]
    default = ftype.default
    text = text.strip()
    if text.lower() in ("none", ""):
        return None
    if isinstance(default, bool) or name == "strict":
        if text.lower() in ("1", "true", "yes", "on"):
            return True
        if text.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{name}: expected a boolean, got {text!r}", name)
    if name == "scheme":
        return text
    try:
        if isinstance(default, float) or name in ("alpha", "r", "write_threshold"):
            return float(text)
        return int(text, 0)
    except ValueError:
        raise ConfigError(f"{name}: cannot parse {text!r}", name) from None


def parse_config(text):
    """Flat key=value text, optionally split into [layout]/[engine]/[dynamic]."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string("[layout]\n" + text)
    except configparser.Error as e:
        raise ConfigError(f"config syntax: {e}", "config") from None
    values = {}
    for section in cp.sections():
        if section not in SECTIONS:
            raise ConfigError(f"unknown config section [{section}]", section)
        for key, raw in cp.items(section, raw=True):
            allowed = set().union(*SECTIONS.values())
            if key not in allowed:
                raise ConfigError(f"unknown config key {key!r}", key)
            name = "dynamic" if key == "enabled" else key
            values[name] = _coerce(name, raw)
    return SimConfig(**values)


def load_config(path):
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e.strerror}", "config") from None
    return parse_config(text)


def parse_bands(spec, space):
    """``base:width:weight[:slope]`` items separated by commas.  Values below
    1 for base/width are fractions of the address space."""
    bands = []
    for item in spec.split(","):
        item = item.strip()
        if not item:
            continue
        parts = item.split(":")
        if len(parts) not in (3, 4):
            raise ConfigError(f"band {item!r}: expected base:width:weight[:slope]", "bands")
        try:
            base, width = (_size(p, space) for p in parts[:2])
            weight = float(parts[2])
            slope = float(parts[3]) if len(parts) == 4 else 0.0
        except ValueError:
            raise ConfigError(f"band {item!r}: bad number", "bands") from None
        bands.append(BandSpec(base, width, weight, slope))
    if not bands:
        raise ConfigError("no bands given", "bands")
    return bands


def _size(text, space):
    text = text.strip()
    if text.lower().startswith("0x"):
        return int(text, 16)
    v = float(text)
    if v < 1:
        return int(v * space) // 8 * 8
    return int(v)


def parse_ratios(text):
    text = text.strip()
    if ".." in text:
        a, b = text.split("..", 1)
        try:
            a, b = int(a), int(b)
        except ValueError:
            raise ConfigError(f"bad ratio range {text!r}", "ratios") from None
        return list(range(a, b + 1))
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"bad ratio list {text!r}", "ratios") from None


def _floats(text, name):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"bad {name} list {text!r}", name) from None


# ---- commands --------------------------------------------------------------


def cmd_run(args):
    config = load_config(args.config) if args.config else SimConfig()
    trace = _read_trace(args.trace, config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    sim = Simulation(trace, config, log_events=bool(args.events))
    report = sim.run()
    row = report_row(config, report)
    result = {"config": _asdict(config), "metrics": _metrics_dict(report)}
    if args.compare_baseline:
        base = Simulation(trace, baseline_config(config)).run()
        for m in MetricsReport.METRICS:
            row[f"baseline_{m}"] = _fmt(getattr(base, m))
            row[f"improvement_{m}_pct"] = f"{improvement(getattr(base, m), getattr(report, m)):.4f}"
        result["baseline"] = _metrics_dict(base)
        result["improvement_pct"] = {
            m: improvement(getattr(base, m), getattr(report, m)) for m in MetricsReport.METRICS
        }
    (out / "metrics.csv").write_text(rows_to_csv([row]))
    (out / "metrics.json").write_text(json.dumps(result, indent=2, sort_keys=True) + "\n")
    if args.events:
        Path(args.events).write_text("\n".join(sim.ctl.events) + "\n")
    print(f"{config.scheme}: critical {report.critical_read_latency_ns:.3f} ns, "
          f"transactional {report.transactional_read_latency_ns:.3f} ns, "
          f"write {report.write_latency_ns:.3f} ns, exec {report.trace_execution_ns} ns")
    if report.mismatches or report.final_mismatches:
        raise InvariantViolation(
            f"{report.mismatches} read mismatches, {report.final_mismatches} final row mismatches"
        )
    return EXIT_OK


def cmd_gen(args):
    seed = args.seed if args.seed is not None else default_seed()
    space = args.space
    bands = parse_bands(args.bands, space) if args.bands else two_band_spec(space)
    trace = generate_banded(bands, args.cores, args.duration, args.gap, args.reads,
                            seed, space, args.burst)
    if args.split and args.split > 1:
        trace = split_bands(trace, args.split)
    if args.ramp:
        trace = add_ramp(trace, args.ramp)
    text = serialize(trace)
    if args.out == "-":
        sys.stdout.write(text)
    else:
        Path(args.out).write_text(text)
    if args.histogram:
        Path(args.histogram).write_text(band_histogram_csv(trace, args.regions))
    return EXIT_OK


def cmd_sweep(args):
    base = load_config(args.config) if args.config else SimConfig()
    if args.dynamic:
        base = replace(base, dynamic=True)
    ratios = parse_ratios(args.ratios)
    schemes = [s for s in args.schemes.split(",") if s.strip()]
    alphas = _floats(args.alphas, "alphas")
    configs = grid(ratios, schemes, alphas, base)
    if args.trace:
        trace = _read_trace(args.trace, base)
    else:
        seed = args.seed if args.seed is not None else default_seed()
        space = base.address_space
        trace = generate_banded(two_band_spec(space, centers=(0.02, 0.06), width_frac=0.01),
                                args.cores, args.duration, args.gap, 0.7, seed, space)
    results = sweep(trace, configs, jobs=args.jobs)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "sweep.csv").write_text(sweep_csv(results))
    (out / "sweep.json").write_text(sweep_json(results))
    bad = [r for _, r in results if r.mismatches or r.final_mismatches]
    print(f"{len(results)} cells written to {out}")
    if bad:
        raise InvariantViolation(f"{len(bad)} sweep cells returned wrong data")
    return EXIT_OK


def _read_trace(path, config):
    if path is None:
        raise ConfigError("--trace is required", "trace")
    try:
        return load_trace(path, address_space=config.address_space)
    except OSError as e:
        raise ConfigError(f"cannot read trace {path}: {e.strerror}", "trace") from None


def _fmt(v):
    return f"{v:.4f}" if isinstance(v, float) else v


def _asdict(config):
    return {f.name: getattr(config, f.name) for f in fields(config)}


def _metrics_dict(report):
    d = report.to_dict()
    d["per_core"] = {str(k): v for k, v in d["per_core"].items()}
    return d


def build_parser():
    p = argparse.ArgumentParser(prog="codedmem", description="coded multi-bank memory simulator")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="simulate one trace")
    r.add_argument("--config")
    r.add_argument("--trace", required=True)
    r.add_argument("--compare-baseline", action="store_true")
    r.add_argument("--events", help="write the per-cycle event log here")
    r.add_argument("--out", default=".")
    r.set_defaults(func=cmd_run)

    g = sub.add_parser("gen", help="generate a synthetic banded trace")
    g.add_argument("--bands", help="base:width:weight[:slope],... (default: two 47.5%% bands)")
    g.add_argument("--cores", type=int, default=8)
    g.add_argument("--duration", type=int, default=10_000, help="ns")
    g.add_argument("--gap", type=float, default=1.11, help="mean per-core gap, ns")
    g.add_argument("--reads", type=float, default=0.7, help="read fraction")
    g.add_argument("--seed", type=int)
    g.add_argument("--space", type=lambda s: int(s, 0), default=DEFAULT_SPACE, help="bytes")
    g.add_argument("--burst", type=int, default=1)
    g.add_argument("--split", type=int, default=0)
    g.add_argument("--ramp", type=float, default=0.0, help="bytes per ns")
    g.add_argument("--histogram", help="also write region_index,count CSV here")
    g.add_argument("--regions", type=int, default=20)
    g.add_argument("--out", default="-")
    g.set_defaults(func=cmd_gen)

    s = sub.add_parser("sweep", help="run a grid of configurations")
    s.add_argument("--config")
    s.add_argument("--trace")
    s.add_argument("--ratios", default="1..10")
    s.add_argument("--schemes", default="I,II,III,uncoded")
    s.add_argument("--alphas", default="0.1")
    s.add_argument("--dynamic", action="store_true")
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--seed", type=int)
    s.add_argument("--cores", type=int, default=8)
    s.add_argument("--duration", type=int, default=500)
    s.add_argument("--gap", type=float, default=5.0)
    s.add_argument("--out", default=".")
    s.set_defaults(func=cmd_sweep)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, TraceError) as e:
        field = getattr(e, "field", None)
        where = f" [{field}]" if field else ""
        print(f"codedmem: error{where}: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except InvariantViolation as e:
        print(f"codedmem: invariant violation: {e}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
