"""Per data-row freshness tracking (the code status table).

Each (data bank, row) is in one of three states, encoded the same way the
controller figures draw them:

    00  ALL_FRESH     data bank and every covering parity agree
    01  DATA_FRESH    data bank is current, covering parities must be recoded
    10  PARITY_FRESH  a parity bank holds the current row verbatim; both the
                      data bank and the other parities are stale

For replication layouts the same table doubles as pointer storage: the
holder of a PARITY_FRESH row is the replica that has the fresh copy.
"""

from enum import IntEnum


class Status(IntEnum):
    ALL_FRESH = 0b00
    DATA_FRESH = 0b01
    PARITY_FRESH = 0b10

    @property
    def code(self):
        return format(int(self), "02b")


class CodeStatusTable:
    """Status entry for every row of every data bank.

    ``holder`` is the physical id of the parity bank owning the fresh copy and
    ``holder_segment`` the (parity id, segment index) pair, which matters for
    parity banks carrying more than one segment.
    """

    __slots__ = ("num_banks", "rows", "_status", "_holder")

    def __init__(self, num_banks, rows):
        self.num_banks = num_banks
        self.rows = rows
        self._status = [bytearray(rows) for _ in range(num_banks)]
        self._holder = {}

    def get(self, bank, row):
        return Status(self._status[bank][row])

    def raw(self, bank, row):
        # hot path: plain int, 0 means ALL_FRESH
        return self._status[bank][row]

    def holder(self, bank, row):
        """Physical parity bank holding the fresh copy, or None."""
        entry = self._holder.get((bank, row))
        return None if entry is None else entry[0]

    def holder_segment(self, bank, row):
        entry = self._holder.get((bank, row))
        return None if entry is None else entry[1]

    def set(self, bank, row, status, holder=None, segment=None):
        status = Status(status)
        if status is Status.PARITY_FRESH:
            if holder is None:
                raise ValueError(
                    f"PARITY_FRESH for bank {bank} row {row} needs a fresh holder"
                )
            self._holder[(bank, row)] = (holder, segment)
        else:
            self._holder.pop((bank, row), None)
        self._status[bank][row] = status

    def is_all_fresh(self):
        return not self._holder and not any(any(col) for col in self._status)

    def stale_rows(self):
        """Iterate (bank, row, status) for every entry that is not ALL_FRESH."""
        for bank, col in enumerate(self._status):
            if not any(col):
                continue
            for row, st in enumerate(col):
                if st:
                    yield bank, row, Status(st)

    def holders(self):
        """Mapping (bank, row) -> (holder bank, segment) for PARITY_FRESH rows."""
        return dict(self._holder)
