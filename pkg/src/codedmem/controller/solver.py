"""Cheapest set of bank reads that decodes a cluster of same-row targets.

A cluster lives inside one coding group at one row.  Every usable physical
read is an *equation* ``(bank, mask, is_data)``: reading ``bank`` yields the
XOR of the group-local data values in ``mask`` (a single bit for a direct or
replica read).  Decoding is peeling: an equation with exactly one unknown
left reveals it, and that value can feed the next equation in the same cycle.

Selection order: serve as many targets as possible, then use the fewest
banks, then the fewest data banks (they are what the next request in line
most likely needs), then the lexicographically smallest bank tuple.
"""

from functools import lru_cache


def _closure(eqs, idxs, known):
    steps = []
    pending = list(idxs)
    progress = True
    while progress and pending:
        progress = False
        rest = []
        for i in pending:
            m = eqs[i][1] & ~known
            if not m:
                continue
            if m & (m - 1) == 0:
                known |= m
                steps.append((i, m.bit_length() - 1))
                progress = True
            else:
                rest.append(i)
        pending = rest
    return known, steps


def _cheapest(eqs, useful, want, known, max_k):
    """Fewest equations whose peeling decodes ``want``.

    Breadth-first over (known bits, banks used); the bank set alone fixes
    the tie-break score, so states reached twice are merged.
    """
    if not want & ~known:
        return ()
    bank_bit = {}
    for i in useful:
        bank_bit.setdefault(eqs[i][0], 1 << len(bank_bit))
    level = {(known, 0): ((), ())}  # state -> (eq indices, steps)
    for _ in range(max_k):
        nxt = {}
        for (kn, used), (idxs, steps) in level.items():
            for i in useful:
                bb = bank_bit[eqs[i][0]]
                if used & bb:
                    continue
                m = eqs[i][1] & ~kn
                if not m or m & (m - 1):
                    continue
                state = (kn | m, used | bb)
                if state not in nxt:
                    nxt[state] = (idxs + (i,), steps + ((i, m.bit_length() - 1),))
        if not nxt:
            return None
        best = None
        for (kn, used), (idxs, steps) in nxt.items():
            if want & ~kn:
                continue
            banks = sorted(eqs[i][0] for i in idxs)
            score = (sum(eqs[i][2] for i in idxs), tuple(banks))
            if best is None or score < best[0]:
                best = (score, steps)
        if best is not None:
            return best[1]
        level = nxt
    return None


@lru_cache(maxsize=1 << 17)
def solve_cluster(eqs, targets, known, order, group_size):
    """Pick reads for ``targets`` (bit mask) given already ``known`` values.

    ``eqs`` must be sorted by bank; ``order`` lists target bits by priority
    (oldest request first) and decides which targets to drop when not all of
    them fit.  Returns ``(served_mask, steps)`` where steps are
    ``(equation index, decoded bit)`` in decode order.
    """
    useful = tuple(i for i, (_, m, _) in enumerate(eqs) if m & ~known)
    max_k = group_size - bin(known).count("1")
    reach, _ = _closure(eqs, useful, known)
    want = targets & reach
    if not want:
        return 0, ()
    steps = _cheapest(eqs, useful, want, known, max_k)
    if steps is None:
        # only happens when two equations share a bank; add targets greedily
        want = 0
        for bit in order:
            trial = want | (1 << bit)
            if trial & ~reach:
                continue
            s = _cheapest(eqs, useful, trial, known, max_k)
            if s is not None:
                want, steps = trial, s
        if not want:
            return 0, ()
    return want, steps
