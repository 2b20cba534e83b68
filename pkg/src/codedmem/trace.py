"""Access traces: text format, synthetic banded workloads and augmentations.

File format, one access per line::

    <time_ns>,<core_id>,<R|W>,<hex_address>

Blank lines and anything after ``#`` are ignored.  Times must not go
backwards for a given core.
"""

import io
import math
import random
from dataclasses import dataclass, field, replace
from enum import Enum

from codedmem.codes import Address
from codedmem.controller.queues import AccessRequest, Kind
from codedmem.errors import ConfigError, TraceError

WORD_BYTES = 8
DEFAULT_SPACE = 1 << 20  # 8 banks x 1024 rows x 16 words x 8 bytes
HIGH_GAP_NS = 5.0
LOW_GAP_NS = 50.0
_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class TraceRecord:
    time: int
    core: int
    kind: str  # "R" or "W"
    addr: int


@dataclass
class Trace:
    records: list = field(default_factory=list)
    cores: int = 0
    address_space: int = DEFAULT_SPACE

    def __post_init__(self):
        if self.records and not self.cores:
            self.cores = max(r.core for r in self.records) + 1

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def with_records(self, records):
        return replace(self, records=list(records))


@dataclass
class BandSpec:
    base: int
    width: int
    weight: float
    slope: float = 0.0  # bytes per ns

    def __post_init__(self):
        if self.width <= 0:
            raise ConfigError(f"band width must be positive, got {self.width}", "width")
        if not 0 <= self.weight <= 1:
            raise ConfigError(f"band weight must be in [0, 1], got {self.weight}", "weight")


class Density(str, Enum):
    LOW = "LOW"
    MEDIUM = "MEDIUM"
    HIGH = "HIGH"


# ---- text format -----------------------------------------------------------


def parse_trace(src, address_space=None, cores=None):
    """Parse a trace from a string, a file object or an iterable of lines."""
    if isinstance(src, str):
        src = io.StringIO(src)
    records = []
    last = {}
    for lineno, line in enumerate(src, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 4:
            raise TraceError(f"expected 4 comma separated fields, got {len(parts)}", lineno)
        t, c, k, a = parts
        try:
            t = int(t)
            c = int(c)
            a = int(a, 16)
        except ValueError:
            raise TraceError(f"bad number in {line!r}", lineno) from None
        k = k.upper()
        if k not in ("R", "W"):
            raise TraceError(f"access kind must be R or W, got {parts[2]!r}", lineno)
        if t < 0 or c < 0 or a < 0:
            raise TraceError("negative field", lineno)
        if c in last and t < last[c]:
            raise TraceError(f"core {c} time goes backwards ({last[c]} -> {t})", lineno)
        last[c] = t
        records.append(TraceRecord(t, c, k, a))
    tr = Trace(records)
    if cores is not None:
        if tr.cores > cores:
            raise TraceError(f"core id {tr.cores - 1} >= core count {cores}")
        tr.cores = cores
    if address_space is not None:
        tr.address_space = address_space
    else:
        top = max((r.addr for r in records), default=0)
        tr.address_space = max(DEFAULT_SPACE, 1 << top.bit_length())
    return tr


def load_trace(path, **kw):
    with open(path) as f:
        return parse_trace(f, **kw)


def serialize(trace):
    return "".join(f"{r.time},{r.core},{r.kind},0x{r.addr:x}\n" for r in trace.records)


def save_trace(trace, path):
    with open(path, "w") as f:
        f.write(serialize(trace))


# ---- generation ------------------------------------------------------------


def _align(addr):
    return addr - addr % WORD_BYTES


def generate_banded(bands, cores, duration_ns, mean_gap_ns, rw_ratio=0.7, seed=0,
                    address_space=DEFAULT_SPACE, burst=1):
    """Synthetic multi-core trace with most accesses packed into a few bands.

    Per core, gaps between accesses are exponential with mean ``mean_gap_ns``
    (times are floored to whole ns).  Each access picks a band by weight, the
    leftover weight is spread uniformly over the whole space.  ``rw_ratio`` is
    the read fraction.  ``burst`` > 1 emits that many consecutive words per
    access (one transaction).
    """
    if duration_ns <= 0:
        raise ConfigError("duration must be positive", "duration")
    if mean_gap_ns <= 0:
        raise ConfigError("mean gap must be positive", "gap")
    if cores < 1:
        raise ConfigError("need at least one core", "cores")
    if not 0 <= rw_ratio <= 1:
        raise ConfigError("rw_ratio must be in [0, 1]", "rw_ratio")
    if burst < 1:
        raise ConfigError("burst must be >= 1", "burst")
    total = sum(b.weight for b in bands)
    if total > 1 + 1e-9:
        raise ConfigError(f"band weights sum to {total} > 1", "bands")
    for b in bands:
        if b.base < 0 or b.base + b.width > address_space:
            raise ConfigError(f"band at {b.base:#x} leaves the address space", "bands")

    rng = random.Random(seed)
    cum = []
    acc = 0.0
    for b in bands:
        acc += b.weight
        cum.append(acc)
    span = burst * WORD_BYTES
    records = []
    for core in range(cores):
        t = 0.0
        while True:
            t += rng.expovariate(1.0 / mean_gap_ns)
            if t >= duration_ns:
                break
            ti = int(t)
            u = rng.random()
            kind = "R" if rng.random() < rw_ratio else "W"
            band = None
            for i, edge in enumerate(cum):
                if u < edge:
                    band = bands[i]
                    break
            if band is None:
                addr = rng.randrange(0, max(1, address_space - span + 1))
            else:
                addr = band.base + rng.randrange(0, max(1, band.width - span + 1))
                if band.slope:
                    addr += int(band.slope * ti)
            addr = _align(addr) % address_space
            if addr + span > address_space:
                addr = _align(address_space - span)
            for w in range(burst):
                records.append(TraceRecord(ti, core, kind, addr + w * WORD_BYTES))
    records.sort(key=lambda r: (r.time, r.core))
    return Trace(records, cores, address_space)


def two_band_spec(address_space=DEFAULT_SPACE, in_band=0.95, width_frac=0.05,
                  centers=(0.15, 0.6)):
    """The usual motivation workload: two sub-bands of roughly equal density."""
    width = max(WORD_BYTES, _align(int(address_space * width_frac)))
    out = []
    for c in centers:
        base = _align(int(address_space * c))
        out.append(BandSpec(base, width, in_band / len(centers)))
    return out


# ---- augmentation ----------------------------------------------------------


def detect_bands(trace, bins=64, factor=2.0):
    """Contiguous runs of histogram bins holding more than ``factor`` times
    the mean bin count; returns [(lo, hi)] byte ranges."""
    if not trace.records:
        return []
    space = trace.address_space
    counts = band_histogram(trace, bins)
    thr = factor * len(trace.records) / bins
    out = []
    start = None
    for i, c in enumerate(counts + [0]):
        if c > thr and start is None:
            start = i
        elif c <= thr and start is not None:
            out.append((start * space // bins, i * space // bins))
            start = None
    return out


def split_bands(trace, factor, bins=64):
    """Spread every detected band over ``factor`` sub-bands placed evenly
    across the address space.  Times, kinds and cores are untouched."""
    if factor < 1:
        raise ConfigError("split factor must be >= 1", "split")
    if factor == 1 or not trace.records:
        return trace.with_records(trace.records)
    space = trace.address_space
    bands = detect_bands(trace, bins)
    if not bands:
        return trace.with_records(trace.records)
    slots = len(bands) * factor
    stride = space // slots
    out = []
    seen = [0] * len(bands)
    for r in trace.records:
        for j, (lo, hi) in enumerate(bands):
            if lo <= r.addr < hi:
                # narrow the band so each copy fits in its slot
                width = min(hi - lo, stride)
                k = seen[j] % factor
                seen[j] += 1
                off = (r.addr - lo) * width // (hi - lo)
                slot = j * factor + k
                addr = _align(slot * stride + off)
                out.append(replace(r, addr=addr % space))
                break
        else:
            out.append(r)
    return trace.with_records(out)


def add_ramp(trace, slope):
    """Shift every address by floor(slope * time) bytes, wrapping around."""
    if not slope:
        return trace.with_records(trace.records)
    space = trace.address_space
    out = [
        replace(r, addr=_align((r.addr + math.floor(slope * r.time)) % space))
        for r in trace.records
    ]
    return trace.with_records(out)


# ---- statistics ------------------------------------------------------------


def mean_gap(trace):
    """Mean time between consecutive accesses of the same core (ns)."""
    first, last, n = {}, {}, {}
    for r in trace.records:
        first.setdefault(r.core, r.time)
        last[r.core] = r.time
        n[r.core] = n.get(r.core, 0) + 1
    gaps = sum(n[c] - 1 for c in n)
    if gaps == 0:
        return math.inf
    return sum(last[c] - first[c] for c in n) / gaps


def classify_density(trace):
    if not trace.records:
        raise TraceError("cannot classify an empty trace")
    g = mean_gap(trace)
    if g < HIGH_GAP_NS:
        return Density.HIGH, g
    if g > LOW_GAP_NS:
        return Density.LOW, g
    return Density.MEDIUM, g


def band_histogram(trace, num_regions):
    space = trace.address_space
    counts = [0] * num_regions
    for r in trace.records:
        counts[min(num_regions - 1, r.addr * num_regions // space)] += 1
    return counts


def band_histogram_csv(trace, num_regions):
    lines = ["region_index,count"]
    lines += [f"{i},{c}" for i, c in enumerate(band_histogram(trace, num_regions))]
    return "\n".join(lines) + "\n"


# ---- requests --------------------------------------------------------------


def map_address(addr, num_banks, W):
    """Interleaved mapping: consecutive rows-worth of bytes go to consecutive banks."""
    row_bytes = W * WORD_BYTES
    line = addr // row_bytes
    return Address(line % num_banks, line // num_banks, (addr % row_bytes) // WORD_BYTES)


def _mix(x):
    # splitmix64 finalizer
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def payload_for(addr, time, W):
    """Deterministic full-row payload for a write (traces carry no data)."""
    value = 0
    seed = _mix(addr * 0x100000001B3 ^ time)
    for w in range(W):
        value |= _mix(seed + w) << (64 * w)
    return value


def to_requests(trace, num_banks, W, max_burst=4):
    """Turn records into AccessRequests grouped into transactions.

    Same core, same time, same kind and the next word address continue the
    current transaction (up to ``max_burst`` words); the first word is the
    critical one.
    """
    reqs = []
    prev = prev_rec = None
    count = 0
    for i, r in enumerate(trace.records):
        kind = Kind.READ if r.kind == "R" else Kind.WRITE
        joined = (
            prev_rec is not None
            and prev_rec.core == r.core
            and prev_rec.time == r.time
            and prev_rec.kind == r.kind
            and r.addr == prev_rec.addr + WORD_BYTES
            and count < max_burst
        )
        payload = payload_for(r.addr, r.time, W) if kind is Kind.WRITE else None
        req = AccessRequest(
            i, r.core, kind, map_address(r.addr, num_banks, W), r.time, payload,
            txn_id=prev.txn_id if joined else i, is_critical=not joined,
        )
        if joined:
            prev.is_last = False
            count += 1
        else:
            count = 1
        reqs.append(req)
        prev, prev_rec = req, r
    return reqs
