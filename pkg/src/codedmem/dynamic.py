"""Dynamic coding unit.

Every bank is split into ceil(1/r) regions of equal row count.  The parity
banks hold floor(alpha/r) active region slots plus one scratch slot that a
newly selected region is encoded into.  Every T memory cycles the unit picks
the regions with the most accesses in the last period; the hottest one not
yet encoded is built in the scratch slot using bank slots nobody else wanted.
Once complete it becomes active and, if the active slots are full, the least
frequently used encoded region is evicted and its slot becomes the scratch.
"""

import math
from dataclasses import dataclass, field

from codedmem.bankarray import READ, WRITE, RowMap
from codedmem.codes import build_scheme_i, build_scheme_ii, build_scheme_iii, Scheme
from codedmem.errors import ConfigError
from codedmem.status import Status

_EPS = 1e-9


@dataclass
class RegionConfig:
    r: float = 0.05
    T: int = 10_000
    alpha: float = 0.1

    def __post_init__(self):
        if not 0 < self.r <= 1:
            raise ConfigError(f"r must be in (0, 1], got {self.r}", "r")
        if not 0 < self.alpha <= 1:
            raise ConfigError(f"alpha must be in (0, 1], got {self.alpha}", "alpha")
        if self.r > self.alpha + _EPS:
            raise ConfigError(f"r={self.r} is larger than alpha={self.alpha}", "r")
        if int(self.T) != self.T or self.T < 1:
            raise ConfigError(f"T must be a positive integer, got {self.T}", "T")

    @property
    def num_regions(self):
        return math.ceil(1 / self.r - _EPS)

    @property
    def capacity(self):
        return int(math.floor(self.alpha / self.r + _EPS))

    def region_rows(self, L):
        return math.ceil(L / self.num_regions)


@dataclass
class RegionStats:
    period: list
    lifetime: list
    encoded: set = field(default_factory=set)
    encode_progress: int = 0

    @classmethod
    def empty(cls, n):
        return cls([0] * n, [0] * n)


def record_access(stats, region):
    stats.period[region] += 1
    stats.lifetime[region] += 1


def select_regions(stats, capacity):
    """Top ``capacity`` regions by period count.

    Ties go to regions already encoded, then to the lower index.  Regions
    nobody touched this period are never picked unless already encoded, so a
    cold trace leaves the current encodings alone.
    """
    enc = stats.encoded
    cands = [i for i, c in enumerate(stats.period) if c > 0 or i in enc]
    cands.sort(key=lambda i: (-stats.period[i], i not in enc, i))
    return cands[:capacity]


class _Encode:
    """Progress of one region being built in the scratch slot."""

    def __init__(self, region, rows, sources, segments):
        self.region = region
        self.rows = rows  # range of logical rows
        self.read_done = dict.fromkeys(sources, 0)
        self.read_issued = dict.fromkeys(sources, 0)
        self.written = {key: 0 for key, _, _ in segments}
        # work still to do, trimmed as it completes
        self.reading = list(sources)
        self.writing = list(segments)

    def finished(self):
        return not self.writing

class DynamicUnit:
    def __init__(self, layout, rowmap, config):
        self.layout = layout
        self.rowmap = rowmap
        self.config = config
        self.L = layout.L
        self.region_rows = rowmap.region_rows
        self.num_regions = math.ceil(self.L / self.region_rows)
        self.capacity = config.capacity
        self.stats = RegionStats.empty(self.num_regions)
        self.free_slots = list(range(self.capacity + 1))
        self.scratch = self.free_slots.pop()
        self.selected = []
        self.encoding = None
        self.switches = 0
        self.switch_cycles = []  # memory cycle of every activation
        self.evicted = set()  # evicted this period; not re-encoded until the next selection
        self.evictions = 0
        self.encode_ops = 0
        self.next_boundary = config.T
        self._segments = [
            (key, layout.parity_phys(key[0]), seg) for key, seg in layout.segments
        ]
        srcs = set()
        for _, _, seg in self._segments:
            srcs.update(seg.source_banks)
        self._sources = sorted(srcs)
        self._inflight = []

    # ---- bookkeeping ---------------------------------------------------

    def region_of(self, row):
        return row // self.region_rows

    def region_range(self, region):
        lo = region * self.region_rows
        return range(lo, min(lo + self.region_rows, self.L))

    def record_access(self, bank, row):
        record_access(self.stats, row // self.region_rows)

    @property
    def active(self):
        return dict(self.rowmap.active)

    def idle(self):
        return self.encoding is None

    # ---- period boundary -----------------------------------------------

    def begin_cycle(self, ctl, cycle):
        if cycle >= self.next_boundary:
            self.selected = select_regions(self.stats, self.capacity)
            self.stats.period = [0] * self.num_regions
            self.evicted.clear()
            self.next_boundary = (cycle // self.config.T + 1) * self.config.T
        if self.encoding is None:
            self._start_next()

    def _start_next(self):
        for region in self.selected:
            if region not in self.stats.encoded and region not in self.evicted:
                self.encoding = _Encode(
                    region, self.region_range(region), self._sources, self._segments
                )
                self.stats.encode_progress = 0
                return

    # ---- encode work in idle slots ---------------------------------------

    def fill(self, ctl, pattern):
        job = self.encoding
        self._inflight = []
        if job is None or len(pattern._busy) >= self.layout.num_banks:
            return
        rows = job.rows
        busy = pattern._busy
        assign = pattern.assign
        tag = ("encode", job.region)
        issued = job.read_issued
        for b in job.reading:
            if b not in busy:
                i = issued[b]
                assign(b, READ, rows[i], None, tag)
                issued[b] = i + 1
                self._inflight.append(b)
        data = ctl.state.banks
        done = job.read_done
        written = job.written
        for item in job.writing:
            key, pbank, seg = item
            if pbank in busy:
                continue
            i = written[key]
            ready = True
            for src in seg.source_banks:
                if done[src] <= i:
                    ready = False
                    break
            if not ready:
                continue
            row = rows[i]
            value = 0
            for src in seg.source_banks:
                value ^= data[src][row]
            prow = self.rowmap.slot_phys_row(key, self.scratch, row)
            assign(pbank, WRITE, prow, value, tag)
            written[key] = i + 1
            self.encode_ops += 1
        self.encode_ops += len(self._inflight)

    def after_apply(self, ctl, pattern, results):
        job = self.encoding
        if job is None:
            return
        n = len(job.rows)
        if self._inflight:
            for b in self._inflight:
                job.read_done[b] += 1
            self._inflight = []
            job.reading = [b for b in job.reading if job.read_issued[b] < n]
        job.writing = [it for it in job.writing if job.written[it[0]] < n]
        self.stats.encode_progress = min(job.written.values(), default=0)
        if job.finished():
            self._try_activate(ctl, job)

    def _try_activate(self, ctl, job):
        rowmap = self.rowmap
        if len(rowmap.active) >= self.capacity:
            victim = min(rowmap.active, key=lambda g: (self.stats.lifetime[g], g))
            rows = self.region_range(victim)
            if any(row in rows for _, row in ctl.holder_rows.values()):
                # wait for the recoder to move fresh copies back first
                ctl.draining.add(victim)
                return
            ctl.draining.discard(victim)
            slot = rowmap.deactivate(victim)
            self.stats.encoded.discard(victim)
            self.evicted.add(victim)
            self.evictions += 1
            for row in rows:
                for gid in range(len(ctl.groups)):
                    j = ctl.recoder.jobs.get((gid, row))
                    if j is not None:
                        j.reset()
            self.free_slots.append(slot)
        region = job.region
        slot = self.scratch
        rowmap.activate(region, slot)
        self.stats.encoded.add(region)
        # parity reflects the data as it is right now; later writes go
        # through the status table like anywhere else
        state = ctl.state
        for key, pbank, seg in self._segments:
            for row in job.rows:
                state.banks[pbank][rowmap.slot_phys_row(key, slot, row)] = state.encode_row(seg, row)
        st = ctl.status
        for row in job.rows:
            for x in self._sources:
                if st._status[x][row]:
                    st.set(x, row, Status.ALL_FRESH)
            for gid in range(len(ctl.groups)):
                ctl.recoder.drop(gid, row)
        self.scratch = self.free_slots.pop()
        self.switches += 1
        self.switch_cycles.append(ctl.cycle)
        self.encoding = None
        self._start_next()


_BUILDERS = {
    Scheme.SCHEME_I: build_scheme_i,
    Scheme.SCHEME_II: build_scheme_ii,
    Scheme.SCHEME_III: build_scheme_iii,
}


def build_dynamic(scheme, L, W, config, **kw):
    """Layout, row map and unit for a scheme whose parity space is managed
    dynamically: every segment gets (capacity + 1) region slots."""
    scheme = Scheme(scheme)
    if scheme not in _BUILDERS:
        raise ConfigError(f"dynamic coding is not supported for {scheme.value}", "scheme")
    if config.capacity < 1:
        raise ConfigError("alpha/r must be at least 1 for dynamic coding", "r")
    region_rows = config.region_rows(L)
    depth = (config.capacity + 1) * region_rows
    layout = _BUILDERS[scheme](L, W, config.alpha, coded_rows=0, depth=depth, **kw)
    rowmap = RowMap(layout, region_rows, config.capacity + 1)
    return layout, rowmap, DynamicUnit(layout, rowmap, config)
