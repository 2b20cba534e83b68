"""Two-clock simulation driver, metrics and baseline comparison.

Cores run on a 1-per-``core_cycle_ns`` clock; the memory clock ticks once
every ``access_ratio`` core cycles.  Memory cycle m covers core cycles
[m*k, (m+1)*k) and everything it serves completes at the end of it, so a
lone read on an idle system takes exactly one memory cycle.
"""

import csv
import io
import json
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace

from codedmem.codes import (
    Scheme,
    build_replication,
    build_scheme_i,
    build_scheme_ii,
    build_scheme_iii,
    build_uncoded,
    rate,
)
from codedmem.controller import Controller, ControllerConfig, Kind
from codedmem.dynamic import RegionConfig, build_dynamic
from codedmem.errors import ConfigError
from codedmem.trace import payload_for, to_requests

SCHEMES = ("uncoded", "I", "II", "III", "replication")
_SCHEME_ALIASES = {
    "uncoded": "uncoded", "none": "uncoded", "baseline": "uncoded",
    "i": "I", "1": "I", "scheme_i": "I",
    "ii": "II", "2": "II", "scheme_ii": "II",
    "iii": "III", "3": "III", "scheme_iii": "III",
    "replication": "replication", "rep": "replication",
}


def normalize_scheme(name):
    key = str(name).strip().lower()
    if key not in _SCHEME_ALIASES:
        raise ConfigError(f"unknown scheme {name!r} (choose from {', '.join(SCHEMES)})", "scheme")
    return _SCHEME_ALIASES[key]


@dataclass
class SimConfig:
    scheme: str = "I"
    alpha: float = 0.1
    access_ratio: int = 1
    num_banks: int = 8  # only used by the uncoded and scheme III layouts
    L: int = 1024
    W: int = 16
    queue_depth: int = 10
    write_threshold: float = 0.8
    write_cap: int = None
    coded_rows: int = None  # override floor(alpha*L); 0 = empty coded range
    dynamic: bool = False
    r: float = 0.05
    T: int = 10_000
    core_cycle_ns: int = 1
    max_burst: int = 4
    rep_r: int = 2  # replication: reads per bank per cycle
    rep_w: int = 1  #   and writes
    strict: bool = True
    init_seed: int = 1  # None keeps memory zeroed

    def __post_init__(self):
        self.scheme = normalize_scheme(self.scheme)
        self.validate()

    def validate(self):
        if not 0 < self.alpha <= 1:
            raise ConfigError(f"alpha must be in (0, 1], got {self.alpha}", "alpha")
        if int(self.access_ratio) != self.access_ratio or self.access_ratio < 1:
            raise ConfigError(f"access_ratio must be an integer >= 1, got {self.access_ratio}",
                              "access_ratio")
        for name in ("L", "W", "queue_depth", "core_cycle_ns", "max_burst", "num_banks"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ConfigError(f"{name} must be a positive integer, got {v}", name)
        if not 0 < self.write_threshold <= 1:
            raise ConfigError(f"write_threshold must be in (0, 1], got {self.write_threshold}",
                              "write_threshold")
        if self.dynamic:
            if self.scheme not in ("I", "II", "III"):
                raise ConfigError(f"dynamic coding needs scheme I, II or III, not {self.scheme}",
                                  "dynamic")
            RegionConfig(self.r, self.T, self.alpha)

    @property
    def data_banks(self):
        if self.scheme in ("I", "II"):
            return 8
        if self.scheme == "III":
            return 9 if self.num_banks >= 9 else 8
        if self.scheme == "replication":
            return self.num_banks
        return self.num_banks

    @property
    def address_space(self):
        return self.data_banks * self.L * self.W * 8


def build_memory(config):
    """(layout, rowmap or None, dynamic unit or None) for ``config``."""
    c = config
    if c.dynamic:
        extra = {"num_banks": c.data_banks} if c.scheme == "III" else {}
        return build_dynamic(Scheme(_scheme_enum(c.scheme)), c.L, c.W,
                             RegionConfig(c.r, c.T, c.alpha), **extra)
    if c.scheme == "uncoded":
        layout = build_uncoded(c.num_banks, c.L, c.W)
    elif c.scheme == "I":
        layout = build_scheme_i(c.L, c.W, c.alpha, coded_rows=c.coded_rows)
    elif c.scheme == "II":
        layout = build_scheme_ii(c.L, c.W, c.alpha, coded_rows=c.coded_rows)
    elif c.scheme == "III":
        layout = build_scheme_iii(c.L, c.W, c.alpha, c.data_banks, coded_rows=c.coded_rows)
    else:
        layout = build_replication(c.rep_r, c.rep_w, c.L, c.W, c.num_banks)
    return layout, None, None


def _scheme_enum(s):
    return {"I": Scheme.SCHEME_I, "II": Scheme.SCHEME_II, "III": Scheme.SCHEME_III}[s]


def layout_rate(config):
    layout, _, _ = build_memory(config)
    return float(rate(layout))


@dataclass
class MetricsReport:
    critical_read_latency_ns: float = 0.0
    transactional_read_latency_ns: float = 0.0
    write_latency_ns: float = 0.0
    trace_execution_ns: int = 0
    requests: int = 0
    reads_served: int = 0
    writes_served: int = 0
    read_transactions: int = 0
    stall_cycles: int = 0
    switches: int = 0
    memory_cycles: int = 0
    degraded_reads: int = 0
    mismatches: int = 0
    final_mismatches: int = 0
    per_core: dict = field(default_factory=dict)

    METRICS = ("critical_read_latency_ns", "transactional_read_latency_ns",
               "write_latency_ns", "trace_execution_ns")

    def to_dict(self):
        return asdict(self)


def _mean(xs):
    return sum(xs) / len(xs) if xs else 0.0


def _init_value(seed, bank, row, W):
    return payload_for((bank << 40) | row, seed, W)


class Simulation:
    """One run: owns the controller, the per-core FIFOs and the flat oracle."""

    def __init__(self, trace, config, log_events=False):
        self.trace = trace
        self.config = config
        c = config
        self.layout, rowmap, self.unit = build_memory(c)
        nb = self.layout.num_data_banks
        self.ctl = Controller(
            self.layout,
            ControllerConfig(c.queue_depth, c.write_threshold, c.write_cap, c.strict, log_events),
            rowmap, self.unit,
        )
        self.requests = to_requests(trace, nb, c.W, c.max_burst)
        for req in self.requests:
            if req.addr.row >= c.L:
                raise ConfigError(
                    f"address of request {req.id} maps to row {req.addr.row} "
                    f"but banks have {c.L} rows", "L")
        self.oracle = {}
        if c.init_seed is not None:
            image = [[_init_value(c.init_seed, b, r, c.W) for r in range(c.L)] for b in range(nb)]
            self.ctl.state.initialize_from_oracle(image, rowmap)
            self._init = image
        else:
            self._init = None

    def _oracle_get(self, bank, row):
        v = self.oracle.get((bank, row))
        if v is None:
            return self._init[bank][row] if self._init is not None else 0
        return v

    def run(self):
        c = self.config
        ctl = self.ctl
        k = c.access_ratio
        ns = c.core_cycle_ns
        unit = self.unit
        # arrivals sorted by (time, core, trace order)
        arrivals = deque(sorted(self.requests, key=lambda r: (r.issue_time, r.core, r.id)))
        ncores = max(self.trace.cores, 1 + max((r.core for r in self.requests), default=-1))
        waiting = [deque() for _ in range(ncores)]
        stalls = [0] * ncores
        expected = {}
        remaining = len(self.requests)
        done_reads, done_writes = [], []
        cc = 0  # core cycle
        oracle = self.oracle
        while remaining:
            t = cc * ns
            while arrivals and arrivals[0].issue_time <= t:
                r = arrivals.popleft()
                waiting[r.core].append(r)
            # core arbiter: one request per core per core cycle, core id order
            for core in range(ncores):
                q = waiting[core]
                if not q:
                    continue
                req = q[0]
                if ctl.accept(req):
                    q.popleft()
                    req.accept_time = t
                    key = (req.addr.bank, req.addr.row)
                    if req.kind is Kind.READ:
                        expected[req.id] = self._oracle_get(*key)
                    else:
                        oracle[key] = req.payload
                else:
                    stalls[core] += 1
            if cc % k == 0:
                ctl.cycle = cc // k
                pattern = ctl.step()
                end = (cc + k) * ns
                for req in pattern.served:
                    req.done_time = end
                    if req.kind is Kind.READ:
                        done_reads.append(req)
                    else:
                        done_writes.append(req)
                remaining -= len(pattern.served)
            # jump ahead when nothing can change before the next event
            if not any(waiting):
                quiet = ctl.queues.empty() and not ctl.recoder and (unit is None or unit.idle())
                nxt = cc + 1
                if quiet:
                    if not arrivals:
                        break
                    target = -(-arrivals[0].issue_time // ns)
                    if unit is not None:
                        target = min(target, unit.next_boundary * k)
                    nxt = max(nxt, target)
                else:
                    # next memory cycle, unless an arrival comes first
                    mem = (cc // k + 1) * k
                    if arrivals:
                        mem = min(mem, -(-arrivals[0].issue_time // ns))
                    nxt = max(nxt, mem)
                cc = nxt
            else:
                cc += 1
        # let background recoding settle so the final image can be compared
        guard = 0
        while not (ctl.queues.empty() and not ctl.recoder and (unit is None or unit.idle())):
            ctl.cycle = cc // k
            ctl.step()
            cc += k
            guard += 1
            if guard > 10_000_000:
                break
        return self._report(done_reads, done_writes, expected, stalls, ncores)

    def _report(self, reads, writes, expected, stalls, ncores):
        ctl = self.ctl
        rep = MetricsReport()
        rep.requests = len(self.requests)
        rep.reads_served = len(reads)
        rep.writes_served = len(writes)
        rep.stall_cycles = sum(stalls)
        rep.switches = self.unit.switches if self.unit is not None else 0
        rep.memory_cycles = ctl.stats["read_cycles"] + ctl.stats["write_cycles"] + ctl.stats["idle_cycles"]
        rep.degraded_reads = ctl.stats["degraded_reads"]
        rep.mismatches = sum(1 for r in reads if r.value != expected[r.id])
        nb = self.layout.num_data_banks
        bad = 0
        for b in range(nb):
            for row in range(self.config.L):
                if ctl.logical(b, row) != self._oracle_get(b, row):
                    bad += 1
        rep.final_mismatches = bad

        txns = {}
        for r in reads:
            t = txns.get(r.txn_id)
            if t is None:
                txns[r.txn_id] = t = [r.issue_time, None, 0, r.core]
            if r.is_critical:
                t[1] = r.done_time
            t[2] = max(t[2], r.done_time)
        crit, trans = [], []
        per_core = {c: {"critical": [], "transactional": [], "write": []} for c in range(ncores)}
        for issue, cdone, last, core in txns.values():
            if cdone is None:
                cdone = last
            crit.append(cdone - issue)
            trans.append(last - issue)
            per_core[core]["critical"].append(cdone - issue)
            per_core[core]["transactional"].append(last - issue)
        wl = []
        for w in writes:
            wl.append(w.done_time - w.issue_time)
            per_core[w.core]["write"].append(w.done_time - w.issue_time)
        rep.read_transactions = len(txns)
        rep.critical_read_latency_ns = _mean(crit)
        rep.transactional_read_latency_ns = _mean(trans)
        rep.write_latency_ns = _mean(wl)
        rep.trace_execution_ns = max((r.done_time for r in reads + writes), default=0)
        rep.per_core = {
            c: {
                "critical_read_latency_ns": _mean(v["critical"]),
                "transactional_read_latency_ns": _mean(v["transactional"]),
                "write_latency_ns": _mean(v["write"]),
                "stall_cycles": stalls[c],
            }
            for c, v in per_core.items()
        }
        return rep


def run(trace, config, log_events=False):
    return Simulation(trace, config, log_events).run()


# ---- comparison ----------------------------------------------------------


def improvement(base, coded):
    """Percent improvement; positive means the coded run is faster."""
    if base == 0:
        return 0.0
    return 100.0 * (base - coded) / base


@dataclass
class ImprovementReport:
    access_ratio: int
    baseline: MetricsReport
    coded: MetricsReport
    percent: dict = field(default_factory=dict)

    @classmethod
    def from_reports(cls, ratio, base, coded):
        pct = {m: improvement(getattr(base, m), getattr(coded, m)) for m in MetricsReport.METRICS}
        return cls(ratio, base, coded, pct)


def baseline_config(config):
    return replace(config, scheme="uncoded", dynamic=False, num_banks=config.data_banks)


def run_baseline_pair(trace, config, baseline=None):
    base_cfg = baseline if baseline is not None else baseline_config(config)
    base = run(trace, base_cfg)
    coded = run(trace, config)
    return ImprovementReport.from_reports(config.access_ratio, base, coded)


# ---- sweeps --------------------------------------------------------------

CONFIG_COLUMNS = ("scheme", "alpha", "access_ratio", "dynamic", "r", "T")
CSV_COLUMNS = CONFIG_COLUMNS + ("rate",) + MetricsReport.METRICS + (
    "switches", "stall_cycles", "reads_served", "writes_served", "mismatches")


def grid(ratios, schemes, alphas, base=None, **overrides):
    """Cross product in (scheme, alpha, ratio) order; uncoded ignores alpha."""
    base = base or SimConfig()
    if not ratios or not schemes or not alphas:
        raise ConfigError("empty sweep grid", "grid")
    out = []
    for s in schemes:
        s = normalize_scheme(s)
        for a in (alphas if s != "uncoded" else alphas[:1]):
            for k in ratios:
                out.append(replace(base, scheme=s, alpha=a, access_ratio=k, **overrides))
    return out


def _cell(args):
    trace, cfg = args
    return run(trace, cfg)


def sweep(trace, configs, jobs=1):
    """Run every config on ``trace``; rows come back in grid order."""
    configs = list(configs)
    if not configs:
        raise ConfigError("empty sweep grid", "grid")
    if jobs and jobs > 1:
        with ProcessPoolExecutor(jobs) as ex:
            reports = list(ex.map(_cell, [(trace, c) for c in configs]))
    else:
        reports = [run(trace, c) for c in configs]
    return list(zip(configs, reports))


def report_row(config, report, extra=None):
    row = {
        "scheme": config.scheme,
        "alpha": config.alpha,
        "access_ratio": config.access_ratio,
        "dynamic": int(config.dynamic),
        "r": config.r if config.dynamic else "",
        "T": config.T if config.dynamic else "",
        "rate": f"{layout_rate(config):.6f}",
    }
    for m in MetricsReport.METRICS:
        v = getattr(report, m)
        row[m] = f"{v:.4f}" if isinstance(v, float) else v
    for name in ("switches", "stall_cycles", "reads_served", "writes_served", "mismatches"):
        row[name] = getattr(report, name)
    if extra:
        row.update(extra)
    return row


def rows_to_csv(rows, columns=None):
    columns = list(columns or (rows[0].keys() if rows else CSV_COLUMNS))
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow(row)
    return buf.getvalue()


def sweep_csv(results):
    return rows_to_csv([report_row(c, r) for c, r in results], CSV_COLUMNS)


def sweep_json(results):
    cells = []
    for c, r in results:
        d = r.to_dict()
        d["per_core"] = {str(k): v for k, v in d["per_core"].items()}
        cells.append({"config": asdict(c), "metrics": d})
    return json.dumps(cells, indent=2, sort_keys=True) + "\n"


def check_config_fields(d):
    """Reject unknown SimConfig keys early with the offending name."""
    names = {f.name for f in fields(SimConfig)}
    for k in d:
        if k not in names:
            raise ConfigError(f"unknown config key {k!r}", k)


__all__ = [
    "SimConfig", "MetricsReport", "ImprovementReport", "Simulation", "run",
    "run_baseline_pair", "sweep", "grid", "improvement", "sweep_csv", "sweep_json",
    "report_row", "rows_to_csv", "build_memory", "layout_rate", "baseline_config",
]
