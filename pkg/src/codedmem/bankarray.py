"""Physical bank contents, the single-port rule and parity row mapping."""

from dataclasses import dataclass, field
from typing import NamedTuple

from codedmem.codes import pack_row, unpack_row
from codedmem.errors import InvariantViolation, ShapeError

READ = "R"
WRITE = "W"
REFRESH = "F"


class Assignment(NamedTuple):
    bank: int
    op: str
    row: int
    value: int = None
    # who asked for the slot: ("req", ids) / ("recode", key) / ("encode", region) / ("refresh",)
    tag: tuple = ()


_new_assignment = tuple.__new__  # skips the keyword-default wrapper, hot path


@dataclass
class AccessPattern:
    """What every physical bank does during one memory cycle."""

    cycle: int
    mode: str = "-"
    assignments: list = field(default_factory=list)
    decode_recipes: dict = field(default_factory=dict)
    served: list = field(default_factory=list)
    _busy: set = field(default_factory=set, repr=False)

    def is_free(self, bank):
        return bank not in self._busy

    def full(self, num_banks):
        return len(self._busy) >= num_banks

    @property
    def busy(self):
        return frozenset(self._busy)

    def assign(self, bank, op, row, value=None, tag=()):
        if bank in self._busy:
            raise InvariantViolation(
                f"cycle {self.cycle}: bank {bank} booked twice (single-port violation)"
            )
        self._busy.add(bank)
        self.assignments.append(_new_assignment(Assignment, (bank, op, row, value, tag)))

    def summary(self):
        reads = sum(1 for a in self.assignments if a.op == READ)
        writes = len(self.assignments) - reads
        return f"banks={len(self.assignments)} reads={reads} writes={writes}"


class RowMap:
    """Maps (segment, logical data row) to a physical row inside a parity bank.

    The static map covers each segment's fixed coded range.  The dynamic map
    splits every bank into regions of ``region_rows`` rows and places active
    regions into slots of the segment's physical space; region -> slot is kept
    injective so no two logical rows share a parity row.
    """

    def __init__(self, layout, region_rows=None, num_slots=None):
        self.layout = layout
        self.region_rows = region_rows
        self.num_slots = num_slots
        self.active = {}  # region -> slot
        self._offsets = {key: seg.row_offset for key, seg in layout.segments}
        if region_rows is None:
            self.phys_row = layout.static_phys_row
        else:
            self.phys_row = self._dynamic_phys_row

    @property
    def dynamic(self):
        return self.region_rows is not None

    def _dynamic_phys_row(self, key, row):
        slot = self.active.get(row // self.region_rows)
        if slot is None:
            return None
        return self._offsets[key] + slot * self.region_rows + row % self.region_rows

    def slot_phys_row(self, key, slot, row):
        return self._offsets[key] + slot * self.region_rows + row % self.region_rows

    def activate(self, region, slot):
        if slot in self.active.values() and self.active.get(region) != slot:
            raise InvariantViolation(f"parity slot {slot} already holds another region")
        self.active[region] = slot

    def deactivate(self, region):
        return self.active.pop(region, None)

    def covers(self, row):
        if self.region_rows is None:
            return any(self.phys_row(key, row) is not None for key, _ in self.layout.segments)
        return (row // self.region_rows) in self.active


class BankState:
    """Materialized contents of every physical bank (rows are packed ints)."""

    def __init__(self, layout):
        self.layout = layout
        self.banks = [[0] * layout.depth(b) for b in range(layout.num_banks)]
        self.reads = 0
        self.writes = 0

    def read(self, bank, row):
        return self.banks[bank][row]

    def write(self, bank, row, value):
        self.banks[bank][row] = value

    def read_words(self, bank, row):
        return unpack_row(self.banks[bank][row], self.layout.W)

    def apply_pattern(self, pattern):
        """Execute one memory cycle; returns {bank: row value} for every read.

        A bank appearing twice is a scheduler bug and aborts the simulation.
        """
        seen = set()
        results = {}
        for a in pattern.assignments:
            if a.bank in seen:
                raise InvariantViolation(
                    f"cycle {pattern.cycle}: bank {a.bank} booked twice (single-port violation)"
                )
            seen.add(a.bank)
            if a.op == READ:
                results[a.bank] = self.banks[a.bank][a.row]
                self.reads += 1
            elif a.op == REFRESH:
                continue
            else:
                self.banks[a.bank][a.row] = a.value
                self.writes += 1
        return results

    def initialize_from_oracle(self, image, rowmap=None):
        """Load data banks from ``image`` (one list of L rows per data bank,
        rows either packed ints or W-word sequences) and encode every parity."""
        layout = self.layout
        if len(image) != layout.num_data_banks:
            raise ShapeError(
                f"image has {len(image)} banks, layout has {layout.num_data_banks}"
            )
        for b, rows in enumerate(image):
            if len(rows) != layout.L:
                raise ShapeError(f"bank {b}: {len(rows)} rows, expected {layout.L}")
            self.banks[b] = [self._as_int(r) for r in rows]
        self.encode_all(rowmap)

    def _as_int(self, row):
        if isinstance(row, int):
            return row
        row = tuple(row)
        if len(row) != self.layout.W:
            raise ShapeError(f"row of {len(row)} words, expected {self.layout.W}")
        return pack_row(row)

    def encode_all(self, rowmap=None):
        layout = self.layout
        phys_row = layout.static_phys_row if rowmap is None else rowmap.phys_row
        for key, seg in layout.segments:
            pbank = layout.parity_phys(key[0])
            for row in range(layout.L):
                prow = phys_row(key, row)
                if prow is None:
                    continue
                self.banks[pbank][prow] = self.encode_row(seg, row)

    def encode_row(self, seg, row):
        value = 0
        for s in seg.source_banks:
            value ^= self.banks[s][row]
        return value

    def snapshot(self, banks=None):
        """Golden-file dump: ``<bank> <row> <word0> ... <wordW-1>`` in hex."""
        W = self.layout.W
        lines = []
        for b in banks if banks is not None else range(len(self.banks)):
            for row, value in enumerate(self.banks[b]):
                words = " ".join(f"{w:016x}" for w in unpack_row(value, W))
                lines.append(f"{b} {row} {words}")
        return "\n".join(lines) + "\n"


def initialize_from_oracle(state, image, rowmap=None):
    state.initialize_from_oracle(image, rowmap)


def apply_pattern(state, pattern):
    return state.apply_pattern(pattern)
