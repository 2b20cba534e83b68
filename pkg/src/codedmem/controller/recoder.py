"""Background restoration of stale rows using otherwise idle bank slots.

One job per (coding group, row).  A job first reads every value it needs
into an unbounded buffer (possibly over several cycles), then, starting the
cycle after its last read, writes fresh values back: data-bank write-backs
for PARITY_FRESH rows and recomputed parity rows.  Any write landing on the
same group row meanwhile restarts the job from scratch.
"""

from dataclasses import dataclass, field

from codedmem.bankarray import READ, WRITE, Assignment
from codedmem.status import Status

PARITY_FRESH = int(Status.PARITY_FRESH)
_new = tuple.__new__


@dataclass
class RecodeRequest:
    group: int
    row: int
    stale_banks: set
    origin: int
    created_cycle: int
    order: int = 0
    # execution state
    planned: bool = False
    reads: dict = field(default_factory=dict)  # (bank, prow) -> value or None
    writebacks: list = field(default_factory=list)  # [x, (hbank, hprow), done]
    parity_writes: list = field(default_factory=list)  # [pbank, prow, sources, done]
    last_read_cycle: int = -1
    loc: dict = field(default_factory=dict)  # data bank -> (bank, prow) holding its value

    @property
    def key(self):
        return (self.group, self.row)

    def reset(self):
        self.planned = False
        self.reads = {}
        self.loc = {}
        self.writebacks = []
        self.parity_writes = []
        self.last_read_cycle = -1


class Recoder:
    def __init__(self):
        self.jobs = {}  # key -> RecodeRequest, insertion order = age order
        self._order = 0
        self.completed = 0
        self.inflight = []  # (job, (bank, prow)) issued this cycle

    def __len__(self):
        return len(self.jobs)

    def __bool__(self):
        return bool(self.jobs)

    def push(self, group, row, stale_banks, origin, cycle):
        key = (group, row)
        job = self.jobs.get(key)
        if job is None:
            self._order += 1
            self.jobs[key] = RecodeRequest(group, row, set(stale_banks), origin, cycle, self._order)
        else:
            # keep the older timestamp so the row does not lose its priority
            job.stale_banks |= set(stale_banks)
            job.reset()

    def drop(self, group, row):
        self.jobs.pop((group, row), None)

    def pending_rows(self):
        return list(self.jobs)

    def _plan(self, ctl, job):
        st = ctl.status._status
        grp = ctl.groups[job.group]
        row = job.row
        phys_row = ctl.rowmap.phys_row
        loc = {}
        needed = set()
        for x in grp.banks:
            if st[x][row] == PARITY_FRESH:
                loc[x] = ctl.direct_loc(x, row)
                job.writebacks.append([x, loc[x], False])
                needed.add(x)
        for key, pbank, _, sources in grp.segments:
            stale = False
            for s in sources:
                if st[s][row]:
                    stale = True
                    break
            if not stale:
                continue
            prow = phys_row(key, row)
            if prow is None:
                continue
            job.parity_writes.append([pbank, prow, sources, False])
            needed.update(sources)
        for x in needed:
            if x not in loc:
                loc[x] = (x, row)
        job.loc = loc
        job.reads = {loc[x]: None for x in sorted(needed)}
        job.planned = True

    def fill(self, ctl, pattern):
        """Hand idle banks of ``pattern`` to pending jobs, oldest first."""
        self.inflight = []
        nbanks = ctl.layout.num_banks
        busy = pattern._busy
        if not self.jobs or len(busy) >= nbanks:
            return
        cycle = pattern.cycle
        # banks are checked against ``busy`` before every booking, so append
        # directly; apply_pattern still rejects any double booking
        add = busy.add
        put = pattern.assignments.append
        holder_rows = ctl.holder_rows
        done = []
        for key, job in list(self.jobs.items()):
            if len(busy) >= nbanks:
                break
            if not job.planned:
                self._plan(ctl, job)
                if not job.reads and not job.writebacks and not job.parity_writes:
                    done.append(job)
                    continue
            reads = job.reads
            if None in reads.values():
                for loc, v in reads.items():
                    if v is None and loc[0] not in busy:
                        add(loc[0])
                        put(_new(Assignment, (loc[0], READ, loc[1], None, ("recode", key))))
                        self.inflight.append((job, loc))
                        job.last_read_cycle = cycle
                continue
            if job.last_read_cycle >= cycle:
                continue
            row = job.row
            finished = True
            for wb in job.writebacks:
                x, loc, ok = wb
                if ok:
                    continue
                if x in busy:
                    finished = False
                    continue
                add(x)
                put(_new(Assignment, (x, WRITE, row, reads[loc], ("recode", key))))
                wb[2] = True
                ctl._writeback_done(x, row)
            for pw in job.parity_writes:
                pbank, prow, sources, ok = pw
                if ok:
                    continue
                # a holder row is still the only fresh copy of some data row
                if pbank in busy or (pbank, prow) in holder_rows:
                    finished = False
                    continue
                value = 0
                for s in sources:
                    value ^= reads[job.loc[s]]
                add(pbank)
                put(_new(Assignment, (pbank, WRITE, prow, value, ("recode", key))))
                pw[3] = True
            if finished:
                done.append(job)
        for job in done:
            ctl._recode_complete(job)
            del self.jobs[job.key]
            self.completed += 1

    def collect(self, results):
        for job, loc in self.inflight:
            if loc in job.reads:
                job.reads[loc] = results[loc[0]]
        self.inflight = []


def recoder_fill(ctl, pattern):
    ctl.recoder.fill(ctl, pattern)
