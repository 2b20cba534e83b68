"""Code layouts for coded multi-bank memory, XOR encoding and degraded reads.

Physical bank numbering: data banks are ``0 .. num_data_banks-1`` and parity
bank ``k`` lives at physical id ``num_data_banks + k``.  Rows are ``W`` words
of 64 bits; internally a row is packed into one Python int so that word-wise
XOR is a single ``^``.
"""

import math
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction

from codedmem.errors import ConfigError, ShapeError
from codedmem.status import Status

WORD_BITS = 64
WORD_MASK = (1 << WORD_BITS) - 1

BANK_NAMES = "abcdefghz"


class Scheme(str, Enum):
    UNCODED = "uncoded"
    SCHEME_I = "I"
    SCHEME_II = "II"
    SCHEME_III = "III"
    READ_REPLICATION = "read-replication"
    RW_REPLICATION = "rw-replication"


@dataclass(frozen=True)
class Address:
    bank: int
    row: int
    col: int = 0


@dataclass(frozen=True)
class ParitySegment:
    source_banks: tuple
    coded_rows: range
    row_offset: int = 0

    @property
    def is_replica(self):
        return len(self.source_banks) == 1


@dataclass(frozen=True)
class ParityBankSpec:
    id: int
    depth_rows: int
    segments: tuple


@dataclass(frozen=True)
class ReadPlan:
    """One way of obtaining ``target``: the physical (bank, row) reads whose
    XOR is the target row. ``segment`` is (parity id, segment index) for plans
    that go through a parity bank."""

    target: Address
    reads: tuple
    segment: tuple = None

    @property
    def locality(self):
        return len(self.reads)

    @property
    def banks(self):
        return frozenset(b for b, _ in self.reads)


def _floor_rows(alpha, L):
    # alpha*L computed in floating point may land a hair under an integer
    return int(math.floor(alpha * L + 1e-9))


@dataclass(frozen=True)
class CodeLayout:
    scheme: Scheme
    num_data_banks: int
    L: int
    W: int
    alpha: float
    parity_banks: tuple
    groups: tuple
    replica_groups: tuple = ()
    params: tuple = ()
    # derived lookup tables, filled in __post_init__
    segments: tuple = field(init=False, repr=False, compare=False)
    bank_segments: tuple = field(init=False, repr=False, compare=False)
    group_of: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        segs = []
        per_bank = [[] for _ in range(self.num_data_banks)]
        for pb in self.parity_banks:
            spans = []
            for si, seg in enumerate(pb.segments):
                n = len(seg.coded_rows)
                if seg.row_offset < 0 or seg.row_offset + n > pb.depth_rows:
                    raise ConfigError(f"segment {si} of P{pb.id} overflows the bank")
                for s in seg.source_banks:
                    if not 0 <= s < self.num_data_banks:
                        raise ConfigError(f"P{pb.id} references unknown bank {s}")
                spans.append((seg.row_offset, seg.row_offset + n))
                key = (pb.id, si)
                segs.append((key, seg))
                for s in seg.source_banks:
                    per_bank[s].append(key)
            spans.sort()
            for (_, e0), (s1, _) in zip(spans, spans[1:]):
                if s1 < e0:
                    raise ConfigError(f"segments of P{pb.id} overlap")
        group_of = [0] * self.num_data_banks
        for gi, g in enumerate(self.groups):
            for b in g:
                group_of[b] = gi
        object.__setattr__(self, "segments", tuple(segs))
        object.__setattr__(self, "bank_segments", tuple(tuple(x) for x in per_bank))
        object.__setattr__(self, "group_of", tuple(group_of))

    @property
    def num_parity_banks(self):
        return len(self.parity_banks)

    @property
    def num_banks(self):
        return self.num_data_banks + len(self.parity_banks)

    def parity_phys(self, pid):
        return self.num_data_banks + pid

    def segment(self, key):
        pid, si = key
        return self.parity_banks[pid].segments[si]

    def depth(self, phys):
        if phys < self.num_data_banks:
            return self.L
        return self.parity_banks[phys - self.num_data_banks].depth_rows

    def static_phys_row(self, key, row):
        """Physical parity row holding ``row`` for segment ``key``, or None."""
        seg = self.segment(key)
        rows = seg.coded_rows
        if rows.step == 1:
            if rows.start <= row < rows.stop:
                return seg.row_offset + row - rows.start
            return None
        if row in rows:
            return seg.row_offset + rows.index(row)
        return None

    @property
    def parity_rows(self):
        return sum(pb.depth_rows for pb in self.parity_banks)

    def bank_name(self, phys):
        if phys < self.num_data_banks:
            if self.num_data_banks <= len(BANK_NAMES) and self.scheme not in (
                Scheme.READ_REPLICATION,
                Scheme.RW_REPLICATION,
            ):
                return BANK_NAMES[phys]
            return f"D{phys}"
        return f"P{phys - self.num_data_banks}"

    def describe(self):
        """Human-readable dump: header, bank table, one line per segment."""
        lines = [
            f"scheme {self.scheme.value} alpha={self.alpha:g} L={self.L} W={self.W} "
            f"rate={float(rate(self)):.6f}",
            f"data banks {self.num_data_banks}; parity banks {self.num_parity_banks}",
        ]
        for pb in self.parity_banks:
            lines.append(f"P{pb.id} depth {pb.depth_rows}")
        for (pid, _), seg in self.segments:
            off, n = seg.row_offset, len(seg.coded_rows)
            banks = ",".join(self.bank_name(b) for b in seg.source_banks)
            lines.append(f"P{pid} rows[{off}..{off + n}) = XOR({banks})")
        return "\n".join(lines)


def _check_dims(L, W, alpha):
    if L < 1 or W < 1:
        raise ConfigError(f"L and W must be >= 1 (got L={L}, W={W})", "L")
    if not 0 < alpha <= 1:
        raise ConfigError(f"alpha must lie in (0, 1], got {alpha}", "alpha")


def _coded_len(L, alpha, coded_rows):
    if coded_rows is None:
        n = _floor_rows(alpha, L)
        if n < 1:
            raise ConfigError(f"floor(alpha*L) must be >= 1 (alpha={alpha}, L={L})", "alpha")
        return n
    if not 0 <= coded_rows <= L:
        raise ConfigError(f"coded_rows must lie in [0, L], got {coded_rows}", "coded_rows")
    return coded_rows


def build_uncoded(num_banks, L, W):
    if num_banks < 1:
        raise ConfigError("need at least one bank", "num_banks")
    if L < 1 or W < 1:
        raise ConfigError(f"L and W must be >= 1 (got L={L}, W={W})", "L")
    return CodeLayout(
        Scheme.UNCODED, num_banks, L, W, 1.0, (), tuple((b,) for b in range(num_banks))
    )


# pair order inside a 4-bank group: ab, bc, cd, ad, bd, ac
PAIRS_OF_FOUR = ((0, 1), (1, 2), (2, 3), (0, 3), (1, 3), (0, 2))


def _segment_depth(n, depth):
    if depth is None:
        return n
    if depth < n:
        raise ConfigError(f"segment depth {depth} below coded rows {n}", "depth")
    return depth


def build_scheme_i(L, W, alpha, coded_rows=None, depth=None):
    """8 data banks in two groups of 4, one shallow XOR bank per pair in a group.

    ``coded_rows`` overrides the floor(alpha*L) coded depth (0 gives an
    empty coded range, useful to check equivalence with the uncoded memory).
    ``depth`` sets the physical rows per segment when they differ from the
    coded range (dynamic coding remaps rows into that space).
    """
    _check_dims(L, W, alpha)
    n = _coded_len(L, alpha, coded_rows)
    d = _segment_depth(n, depth)
    rows = range(0, n)
    banks = []
    for base in (0, 4):
        for i, j in PAIRS_OF_FOUR:
            seg = ParitySegment((base + i, base + j), rows, 0)
            banks.append(ParityBankSpec(len(banks), d, (seg,)))
    return CodeLayout(
        Scheme.SCHEME_I, 8, L, W, alpha, tuple(banks), ((0, 1, 2, 3), (4, 5, 6, 7))
    )


# Two half-segments per double-depth bank.  Pairwise parities are packed as
# the three perfect matchings of the group, replicas two to a bank, so every
# data bank reaches its replica and its three pair parities through four
# distinct banks (5 reads per bank with the direct read).
SCHEME_II_PACKING = (
    ((0, 1), (2, 3)),
    ((0, 2), (1, 3)),
    ((0, 3), (1, 2)),
    ((0,), (1,)),
    ((2,), (3,)),
)


def build_scheme_ii(L, W, alpha, coded_rows=None, depth=None):
    _check_dims(L, W, alpha)
    n = _coded_len(L, alpha, coded_rows)
    d = _segment_depth(n, depth)
    rows = range(0, n)
    banks = []
    for base in (0, 4):
        for first, second in SCHEME_II_PACKING:
            segs = (
                ParitySegment(tuple(base + s for s in first), rows, 0),
                ParitySegment(tuple(base + s for s in second), rows, d),
            )
            banks.append(ParityBankSpec(len(banks), 2 * d, segs))
    return CodeLayout(
        Scheme.SCHEME_II, 8, L, W, alpha, tuple(banks), ((0, 1, 2, 3), (4, 5, 6, 7))
    )


# 3x3 grid  a b c / d e f / g h z : rows, columns, then diagonals
SCHEME_III_TRIPLES = (
    (0, 1, 2), (3, 4, 5), (6, 7, 8),
    (0, 3, 6), (1, 4, 7), (2, 5, 8),
    (0, 4, 8), (1, 5, 6), (2, 3, 7),
)


def build_scheme_iii(L, W, alpha, num_banks=9, coded_rows=None, depth=None):
    """Nine triple-XOR parities over a 3x3 grid of data banks.

    With ``num_banks=8`` the last bank (z) is left out of the encoding, so the
    three parities that contained it become pair parities.
    """
    _check_dims(L, W, alpha)
    if num_banks not in (8, 9):
        raise ConfigError(f"scheme III needs 8 or 9 data banks, got {num_banks}", "num_banks")
    n = _coded_len(L, alpha, coded_rows)
    d = _segment_depth(n, depth)
    rows = range(0, n)
    banks = []
    for triple in SCHEME_III_TRIPLES:
        src = tuple(b for b in triple if b < num_banks)
        banks.append(ParityBankSpec(len(banks), d, (ParitySegment(src, rows, 0),)))
    return CodeLayout(
        Scheme.SCHEME_III, num_banks, L, W, alpha, tuple(banks), (tuple(range(num_banks)),)
    )


def build_replication(r, w, L, W, num_logical_banks):
    """r*(w+1) full copies of every logical bank, split into r groups of w+1.

    Copy 0 of each logical bank is its data bank; the remaining copies are
    single-source (replica) parity banks of full depth.
    """
    if r < 1:
        raise ConfigError(f"r must be >= 1, got {r}", "r")
    if w < 0:
        raise ConfigError(f"w must be >= 0, got {w}", "w")
    if num_logical_banks < 1 or L < 1 or W < 1:
        raise ConfigError("bank count, L and W must be >= 1", "num_logical_banks")
    copies = r * (w + 1)
    rows = range(0, L)
    banks = []
    # physical ids of every copy, per logical bank
    phys = {b: [b] for b in range(num_logical_banks)}
    for b in range(num_logical_banks):
        for _ in range(copies - 1):
            pid = len(banks)
            banks.append(ParityBankSpec(pid, L, (ParitySegment((b,), rows, 0),)))
            phys[b].append(num_logical_banks + pid)
    replica_groups = tuple(
        tuple(p for b in range(num_logical_banks) for p in phys[b][g * (w + 1):(g + 1) * (w + 1)])
        for g in range(r)
    )
    scheme = Scheme.READ_REPLICATION if w == 0 else Scheme.RW_REPLICATION
    return CodeLayout(
        scheme,
        num_logical_banks,
        L,
        W,
        1.0,
        tuple(banks),
        tuple((b,) for b in range(num_logical_banks)),
        replica_groups,
        (("r", r), ("w", w)),
    )


def pack_row(words):
    value = 0
    for i, word in enumerate(words):
        value |= (int(word) & WORD_MASK) << (WORD_BITS * i)
    return value


def unpack_row(value, W):
    return tuple((value >> (WORD_BITS * i)) & WORD_MASK for i in range(W))


def xor_rows(rows, width=None):
    """Word-wise XOR of equally wide rows; the empty list gives the zero row.

    ``width`` is only needed for the empty case (default 0 words).
    """
    rows = [tuple(r) for r in rows]
    if not rows:
        return (0,) * (width or 0)
    w = len(rows[0])
    if width is not None and w != width:
        raise ShapeError(f"expected rows of {width} words, got {w}")
    out = list(rows[0])
    for r in rows[1:]:
        if len(r) != w:
            raise ShapeError(f"row width mismatch: {len(r)} != {w}")
        for i, word in enumerate(r):
            out[i] ^= word
    return tuple(out)


def _status_of(status, bank, row):
    if status is None:
        return Status.ALL_FRESH
    return Status(status.get(bank, row))


def degraded_read_plans(layout, target, status=None, phys_row=None):
    """All single-parity ways to read ``target``, direct read first.

    ``status`` is anything with ``get(bank, row)`` (and ``holder`` /
    ``holder_segment`` for PARITY_FRESH rows); ``phys_row(key, row)`` maps a
    logical data row into a segment's physical row and defaults to the static
    coded range.
    """
    if phys_row is None:
        phys_row = layout.static_phys_row
    bank, row = target.bank, target.row
    if not (0 <= bank < layout.num_data_banks and 0 <= row < layout.L):
        raise ConfigError(f"address {target} outside layout", "address")
    st = _status_of(status, bank, row)
    if st is Status.PARITY_FRESH:
        key = status.holder_segment(bank, row)
        holder = status.holder(bank, row)
        prow = phys_row(key, row) if key is not None else row
        return [ReadPlan(target, ((holder, prow),), key)]
    plans = [ReadPlan(target, ((bank, row),))]
    if st is Status.DATA_FRESH:
        return plans
    degraded = []
    for key in layout.bank_segments[bank]:
        prow = phys_row(key, row)
        if prow is None:
            continue
        seg = layout.segment(key)
        if any(_status_of(status, s, row) is not Status.ALL_FRESH for s in seg.source_banks):
            continue
        reads = ((layout.parity_phys(key[0]), prow),) + tuple(
            (s, row) for s in seg.source_banks if s != bank
        )
        degraded.append(ReadPlan(target, reads, key))
    degraded.sort(key=lambda p: (p.locality, p.reads[0][0], p.segment))
    return plans + degraded


def rate(layout):
    """Data rows over total stored rows, as an exact fraction."""
    data = layout.num_data_banks * layout.L
    return Fraction(data, data + layout.parity_rows)


def closed_form_rate(scheme, alpha, r=1, w=0):
    alpha = Fraction(alpha).limit_denominator(10**9)
    if scheme is Scheme.SCHEME_I:
        return 2 / (2 + 3 * alpha)
    if scheme is Scheme.SCHEME_II:
        return 2 / (2 + 5 * alpha)
    if scheme is Scheme.SCHEME_III:
        return 1 / (1 + alpha)
    if scheme in (Scheme.READ_REPLICATION, Scheme.RW_REPLICATION):
        return Fraction(1, r * (w + 1))
    return Fraction(1)
