from collections import deque
from enum import Enum


class Kind(str, Enum):
    READ = "R"
    WRITE = "W"


class AccessRequest:
    """One word request from a core.

    Writes carry a full row payload (packed int).  ``seq`` is the order in
    which the core arbiter accepted the request; memory consistency is
    defined in that order.
    """

    __slots__ = (
        "id", "core", "kind", "addr", "issue_time", "payload", "txn_id",
        "is_critical", "is_last", "seq", "forward", "value", "decoded",
        "served_cycle", "done_time", "accept_time",
    )

    def __init__(self, id, core, kind, addr, issue_time, payload=None, txn_id=None,
                 is_critical=True, is_last=True):
        self.id = id
        self.core = core
        self.kind = kind
        self.addr = addr
        self.issue_time = issue_time
        self.payload = payload
        self.txn_id = id if txn_id is None else txn_id
        self.is_critical = is_critical
        self.is_last = is_last
        self.seq = None
        self.forward = None
        self.value = None
        self.decoded = None
        self.served_cycle = None
        self.done_time = None
        self.accept_time = None

    def __repr__(self):
        a = self.addr
        return f"<{self.kind.value}#{self.id} c{self.core} b{a.bank} r{a.row} t={self.issue_time}>"


class BankQueues:
    """Per data bank read and write FIFOs of fixed depth, plus a special queue
    for refresh-type requests (one bank id per entry)."""

    def __init__(self, num_banks, depth=10):
        if depth < 1:
            raise ValueError("queue depth must be >= 1")
        self.depth = depth
        self.read = [deque() for _ in range(num_banks)]
        self.write = [deque() for _ in range(num_banks)]
        self.special = deque()

    def queue_for(self, req):
        q = self.read if req.kind is Kind.READ else self.write
        return q[req.addr.bank]

    def has_space(self, req):
        return len(self.queue_for(req)) < self.depth

    def push(self, req):
        q = self.queue_for(req)
        if len(q) >= self.depth:
            return False
        q.append(req)
        return True

    def pending_reads(self):
        return sum(len(q) for q in self.read)

    def pending_writes(self):
        return sum(len(q) for q in self.write)

    def empty(self):
        return not (any(self.read) or any(self.write) or self.special)


def arbiter_push(queues, requests):
    """Offer at most one request per core; returns {core: accepted?}.

    A refused request leaves its core stalled; the caller retries it next
    core cycle.
    """
    out = {}
    for req in requests:
        if req.core in out:
            raise ValueError(f"core {req.core} offered two requests in one cycle")
        out[req.core] = queues.push(req)
    return out
