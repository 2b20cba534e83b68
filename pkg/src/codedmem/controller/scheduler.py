"""Access scheduler: read and write pattern builders and the per-cycle policy.

Every memory cycle is either a read cycle or a write cycle.  Reads are
preferred unless some write queue is nearly full (or nothing but writes is
pending).  Banks left idle by the chosen builder go to the recoding unit,
then to the dynamic coding unit, then to refresh requests.

Ordering rules the builders keep:
  * only a prefix of each bank queue is served (no reordering inside a queue);
  * the head of every non-empty read queue is served, so a coded memory never
    serves fewer reads than an uncoded one on the same queue snapshot;
  * a write redirected to a parity bank lands on the physical row mapped to
    its own data row, and never on a row that holds another bank's fresh copy.
"""

import math
from dataclasses import dataclass

from codedmem.bankarray import READ, REFRESH, WRITE, AccessPattern, BankState, RowMap
from codedmem.codes import Address, ReadPlan
from codedmem.controller.queues import BankQueues, Kind
from codedmem.controller.recoder import Recoder
from codedmem.controller.solver import solve_cluster
from codedmem.errors import InvariantViolation
from codedmem.status import CodeStatusTable, Status

ALL_FRESH = int(Status.ALL_FRESH)
DATA_FRESH = int(Status.DATA_FRESH)
PARITY_FRESH = int(Status.PARITY_FRESH)


@dataclass
class ControllerConfig:
    queue_depth: int = 10
    write_threshold: float = 0.8
    # max writes taken from one bank queue per cycle; None = as many as fit
    write_cap: int = None
    # check every decoded read against the logical memory value
    strict: bool = True
    log_events: bool = False

    @property
    def nearly_full(self):
        return max(1, math.ceil(self.write_threshold * self.queue_depth - 1e-9))


class _Group:
    __slots__ = ("index", "banks", "local", "segments")

    def __init__(self, index, banks, layout):
        self.index = index
        self.banks = tuple(banks)
        self.local = {b: i for i, b in enumerate(self.banks)}
        segs = []
        for key, seg in layout.segments:
            if seg.source_banks[0] in self.local:
                mask = 0
                for s in seg.source_banks:
                    mask |= 1 << self.local[s]
                segs.append((key, layout.parity_phys(key[0]), mask, seg.source_banks))
        segs.sort(key=lambda t: (t[1], t[0]))
        self.segments = tuple(segs)


class Controller:
    def __init__(self, layout, config=None, rowmap=None, dynamic=None):
        self.layout = layout
        self.config = config or ControllerConfig()
        self.rowmap = rowmap or RowMap(layout)
        self.dynamic = dynamic
        self.state = BankState(layout)
        self.status = CodeStatusTable(layout.num_data_banks, layout.L)
        self.queues = BankQueues(layout.num_data_banks, self.config.queue_depth)
        self.recoder = Recoder()
        self.groups = [_Group(i, g, layout) for i, g in enumerate(layout.groups)]
        self.group_of = layout.group_of
        # banks with a replica segment: a one-bank read plan besides the bank itself
        self._has_replica = {s for _, seg in layout.segments
                             if len(seg.source_banks) == 1 for s in seg.source_banks}
        self.holder_rows = {}  # (parity bank, prow) -> (data bank, row)
        self.draining = set()  # dynamic regions refusing new parity writes
        self.cycle = 0
        self._seq = 0
        self.events = [] if self.config.log_events else None
        self.stats = {
            "read_cycles": 0, "write_cycles": 0, "idle_cycles": 0,
            "reads_served": 0, "writes_served": 0, "degraded_reads": 0,
            "parity_writes": 0, "forwarded_reads": 0,
        }

    # ---- logical view --------------------------------------------------

    def direct_loc(self, bank, row):
        """Where the current value of data (bank, row) physically lives."""
        if self.status._status[bank][row] == PARITY_FRESH:
            key = self.status.holder_segment(bank, row)
            return self.status.holder(bank, row), self.rowmap.phys_row(key, row)
        return bank, row

    def logical(self, bank, row):
        b, r = self.direct_loc(bank, row)
        return self.state.banks[b][r]

    # ---- core arbiter side -----------------------------------------------

    def accept(self, req):
        """Try to queue ``req``; False means the bank queue is full (stall)."""
        q = self.queues.queue_for(req)
        if len(q) >= self.queues.depth:
            return False
        self._seq += 1
        req.seq = self._seq
        bank, row = req.addr.bank, req.addr.row
        if req.kind is Kind.READ:
            for w in reversed(self.queues.write[bank]):
                if w.addr.row == row:
                    req.forward = w.payload
                    break
        else:
            pending = [r for r in self.queues.read[bank] if r.addr.row == row and r.forward is None]
            if pending:
                value = self.logical(bank, row)
                for r in pending:
                    r.forward = value
        q.append(req)
        if self.dynamic is not None:
            self.dynamic.record_access(bank, row)
        return True

    def submit_refresh(self, bank):
        self.queues.special.append(bank)

    # ---- status bookkeeping ----------------------------------------------

    def _release_holder(self, bank, row):
        if self.status._status[bank][row] == PARITY_FRESH:
            key = self.status.holder_segment(bank, row)
            hbank = self.status.holder(bank, row)
            self.holder_rows.pop((hbank, self.rowmap.phys_row(key, row)), None)

    def _writeback_done(self, bank, row):
        self._release_holder(bank, row)
        self.status.set(bank, row, Status.DATA_FRESH)

    def _recode_complete(self, job):
        row = job.row
        st = self.status
        for x in self.groups[job.group].banks:
            if st._status[x][row]:
                self._release_holder(x, row)
                st.set(x, row, Status.ALL_FRESH)

    def _covered(self, bank, row):
        phys_row = self.rowmap.phys_row
        return any(phys_row(key, row) is not None for key in self.layout.bank_segments[bank])

    def _commit_write(self, pattern, req, bank, prow, key=None):
        x, row = req.addr.bank, req.addr.row
        pattern.assign(bank, WRITE, prow, req.payload, tag=("req", req.id))
        pattern.served.append(req)
        req.served_cycle = pattern.cycle
        gid = self.group_of[x]
        if key is None:
            if not self._covered(x, row):
                return
            self._release_holder(x, row)
            self.status.set(x, row, Status.DATA_FRESH)
            stale = {self.layout.parity_phys(k[0]) for k in self.layout.bank_segments[x]}
        else:
            self._release_holder(x, row)
            self.status.set(x, row, Status.PARITY_FRESH, holder=bank, segment=key)
            self.holder_rows[(bank, prow)] = (x, row)
            stale = {x} | {self.layout.parity_phys(k[0]) for k in self.layout.bank_segments[x]}
            stale.discard(bank)
            self.stats["parity_writes"] += 1
        self.recoder.push(gid, row, stale, x, pattern.cycle)

    # ---- read pattern builder -------------------------------------------

    def _equations(self, grp, row, busy, excl):
        st = self.status._status
        phys_row = self.rowmap.phys_row
        eqs = []
        clean = True
        for bit, x in enumerate(grp.banks):
            if st[x][row]:
                clean = False
                if st[x][row] == PARITY_FRESH:
                    b, prow = self.direct_loc(x, row)
                    if b not in busy and b not in excl:
                        eqs.append((b, 1 << bit, False, prow))
                    continue
            if x not in busy and x not in excl:
                eqs.append((x, 1 << bit, True, row))
        rm = self.rowmap
        if rm.region_rows is not None and (row // rm.region_rows) not in rm.active:
            eqs.sort()
            return eqs  # row is in no active region: data banks only
        for key, pbank, mask, sources in grp.segments:
            if pbank in busy or pbank in excl:
                continue
            if not clean:
                ok = True
                for s in sources:
                    if st[s][row]:
                        ok = False
                        break
                if not ok:
                    continue
            prow = phys_row(key, row)
            if prow is not None:
                eqs.append((pbank, mask, False, prow))
        eqs.sort()
        return eqs

    def _serve_cluster(self, pattern, avail, gid, row, members, excl):
        grp = self.groups[gid]
        local = grp.local
        known = avail.get((gid, row))
        if known is None:
            known = avail[(gid, row)] = {}
            if len(members) == 1:
                # lone request, nothing decoded yet: if its bank is free and
                # holds the fresh copy, the direct read is the only 1-bank plan
                m = members[0]
                x = m.addr.bank
                busy = pattern._busy
                if (x not in busy and x not in excl and x not in self._has_replica
                        and self.status._status[x][row] != PARITY_FRESH):
                    pattern.assign(x, READ, row, None, ("dec", gid, row))
                    known[local[x]] = frozenset(((x, row),))
                    pattern.served.append(m)
                    m.served_cycle = pattern.cycle
                    pattern.decode_recipes[m.id] = ReadPlan(
                        Address(x, row, m.addr.col), ((x, row),))
                    return [m]
        targets = 0
        order = []
        for m in members:
            bit = local[m.addr.bank]
            if bit not in known:
                targets |= 1 << bit
                order.append(bit)
        if targets:
            eqs = self._equations(grp, row, pattern._busy, excl)
            if eqs:
                kmask = 0
                for bit in known:
                    kmask |= 1 << bit
                got, steps = solve_cluster(
                    tuple([e[:3] for e in eqs]), targets, kmask, tuple(order), len(grp.banks)
                )
                for i, bit in steps:
                    b, mask, _, prow = eqs[i]
                    pattern.assign(b, READ, prow, tag=("dec", gid, row))
                    expr = frozenset(((b, prow),))
                    rest = mask & ~(1 << bit)
                    while rest:
                        low = rest & -rest
                        expr = expr ^ known[low.bit_length() - 1]
                        rest ^= low
                    known[bit] = expr
        served = []
        for m in members:
            bit = local[m.addr.bank]
            expr = known.get(bit)
            if expr is None:
                continue
            served.append(m)
            pattern.served.append(m)
            m.served_cycle = pattern.cycle
            pattern.decode_recipes[m.id] = ReadPlan(
                Address(m.addr.bank, row, m.addr.col), tuple(sorted(expr))
            )
        return served

    def build_read_pattern(self, pattern):
        rq = self.queues.read
        nonempty = [b for b, q in enumerate(rq) if q]
        if not nonempty:
            return pattern
        group_of = self.group_of
        avail = {}
        pos = dict.fromkeys(nonempty, 0)
        blocked = set()

        # pass 1: every queue head, each head's own bank reserved for it
        heads = sorted((rq[b][0] for b in nonempty), key=lambda r: r.seq)
        reserved = {}
        for h in heads:
            reserved[self.direct_loc(h.addr.bank, h.addr.row)[0]] = h.addr.bank
        clusters = {}
        for h in heads:
            clusters.setdefault((group_of[h.addr.bank], h.addr.row), []).append(h)
        for (gid, row), members in clusters.items():
            mine = {m.addr.bank for m in members}
            excl = {bk for bk, q in reserved.items() if q not in mine}
            got = self._serve_cluster(pattern, avail, gid, row, members, excl)
            for m in members:
                if m in got:
                    pos[m.addr.bank] = 1
                else:
                    blocked.add(m.addr.bank)

        # pass 2: keep extending queue prefixes, oldest frontier request first
        while True:
            frontier = []
            for b in nonempty:
                if b in blocked:
                    continue
                p = pos[b]
                if p < len(rq[b]):
                    frontier.append(rq[b][p])
            if not frontier:
                break
            first = min(frontier, key=lambda r: r.seq)
            gid, row = group_of[first.addr.bank], first.addr.row
            members = [f for f in frontier if f.addr.row == row and group_of[f.addr.bank] == gid]
            got = self._serve_cluster(pattern, avail, gid, row, members, ())
            for m in members:
                if m in got:
                    pos[m.addr.bank] += 1
                else:
                    blocked.add(m.addr.bank)

        for b in nonempty:
            q = rq[b]
            for _ in range(pos[b]):
                q.popleft()
        return pattern

    # ---- write pattern builder ------------------------------------------

    def _parity_slot(self, pattern, x, row):
        phys_row = self.rowmap.phys_row
        busy = pattern._busy
        for key in self.layout.bank_segments[x]:
            pbank = self.layout.parity_phys(key[0])
            if pbank in busy:
                continue
            prow = phys_row(key, row)
            if prow is None:
                continue
            owner = self.holder_rows.get((pbank, prow))
            if owner is not None and owner != (x, row):
                continue
            if self.draining and self.dynamic.region_of(row) in self.draining:
                continue
            return pbank, prow, key
        return None

    def build_write_pattern(self, pattern):
        wq = self.queues.write
        cap = self.config.write_cap
        taken = [0] * len(wq)
        live = [b for b, q in enumerate(wq) if q]
        # round 0: one write per queue into its own data bank
        for b in live:
            req = wq[b][0]
            self._commit_write(pattern, req, b, req.addr.row)
            taken[b] = 1
        # later rounds: redirect further writes to free parity rows
        depth = 1
        while live and (cap is None or depth < cap):
            still = []
            for b in live:
                if taken[b] != depth or len(wq[b]) <= depth:
                    continue
                req = wq[b][depth]
                slot = self._parity_slot(pattern, b, req.addr.row)
                if slot is None:
                    continue
                pbank, prow, key = slot
                self._commit_write(pattern, req, pbank, prow, key)
                taken[b] += 1
                still.append(b)
            live = still
            depth += 1
        for b, n in enumerate(taken):
            for _ in range(n):
                wq[b].popleft()
        return pattern

    # ---- cycle ---------------------------------------------------------

    def choose_mode(self):
        q = self.queues
        thr = self.config.nearly_full
        if max(map(len, q.write)) >= thr:
            return "W"
        if any(q.read):
            return "R"
        if any(q.write):
            return "W"
        return "RC"

    def step(self):
        """Run one memory cycle; returns the applied AccessPattern."""
        cycle = self.cycle
        if self.dynamic is not None:
            self.dynamic.begin_cycle(self, cycle)
        mode = self.choose_mode()
        pattern = AccessPattern(cycle, mode)
        if mode == "R":
            self.build_read_pattern(pattern)
            self.stats["read_cycles"] += 1
        elif mode == "W":
            self.build_write_pattern(pattern)
            self.stats["write_cycles"] += 1
        else:
            self.stats["idle_cycles"] += 1
        self.recoder.fill(self, pattern)
        if self.dynamic is not None:
            self.dynamic.fill(self, pattern)
        special = self.queues.special
        for _ in range(len(special)):
            bank = special.popleft()
            if pattern.is_free(bank):
                pattern.assign(bank, REFRESH, 0, tag=("refresh",))
            else:
                special.append(bank)

        results = self.state.apply_pattern(pattern)
        self.recoder.collect(results)
        if self.dynamic is not None:
            self.dynamic.after_apply(self, pattern, results)
        if mode == "R":
            self._finish_reads(pattern, results)
        else:
            self.stats["writes_served"] += len(pattern.served)
        if self.events is not None:
            ids = ",".join(str(r.id) for r in pattern.served)
            self.events.append(f"{cycle} {mode} served=[{ids}] {pattern.summary()}")
        self.cycle += 1
        return pattern

    def _finish_reads(self, pattern, results):
        strict = self.config.strict
        stats = self.stats
        for req in pattern.served:
            plan = pattern.decode_recipes[req.id]
            value = 0
            for b, _ in plan.reads:
                value ^= results[b]
            req.decoded = value
            if plan.reads != ((req.addr.bank, req.addr.row),):
                stats["degraded_reads"] += 1
            if strict and value != self.logical(req.addr.bank, req.addr.row):
                raise InvariantViolation(
                    f"cycle {pattern.cycle}: decoded value for {req} does not match memory"
                )
            if req.forward is not None:
                req.value = req.forward
                stats["forwarded_reads"] += 1
            else:
                req.value = value
        stats["reads_served"] += len(pattern.served)

    def idle(self):
        return self.queues.empty() and not self.recoder and (
            self.dynamic is None or self.dynamic.idle()
        )


def build_read_pattern(ctl, pattern=None):
    pattern = pattern or AccessPattern(ctl.cycle, "R")
    return ctl.build_read_pattern(pattern)


def build_write_pattern(ctl, pattern=None):
    pattern = pattern or AccessPattern(ctl.cycle, "W")
    return ctl.build_write_pattern(pattern)


def schedule_cycle(ctl):
    return ctl.step()


def recoder_fill(ctl, pattern):
    ctl.recoder.fill(ctl, pattern)
