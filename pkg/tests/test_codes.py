import itertools
import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from codedmem.bankarray import BankState
from codedmem.codes import (
    Address,
    Scheme,
    build_replication,
    build_scheme_i,
    build_scheme_ii,
    build_scheme_iii,
    build_uncoded,
    closed_form_rate,
    degraded_read_plans,
    pack_row,
    rate,
    unpack_row,
    xor_rows,
)
from codedmem.errors import ConfigError, ShapeError
from codedmem.status import CodeStatusTable, Status

from conftest import random_image


def names(layout, banks):
    return {layout.bank_name(b) for b in banks}


def source_sets(layout, group_banks):
    out = []
    for _, seg in layout.segments:
        if seg.source_banks[0] in group_banks:
            out.append("".join(layout.bank_name(b) for b in seg.source_banks))
    return out


# ---- uncoded ---------------------------------------------------------------

def test_uncoded_layout():
    lay = build_uncoded(8, 1024, 16)
    assert lay.num_data_banks == 8 and lay.num_parity_banks == 0
    assert rate(lay) == 1
    plans = degraded_read_plans(lay, Address(3, 100))
    assert len(plans) == 1 and plans[0].reads == ((3, 100),)


@pytest.mark.parametrize("args", [(0, 10, 1), (8, 0, 1), (8, 10, 0)])
def test_uncoded_rejects_zero_dims(args):
    with pytest.raises(ConfigError):
        build_uncoded(*args)


# ---- scheme I --------------------------------------------------------------

def test_scheme_i_alpha_one():
    lay = build_scheme_i(1024, 16, 1.0)
    assert lay.num_parity_banks == 12
    assert all(pb.depth_rows == 1024 for pb in lay.parity_banks)
    assert rate(lay) == Fraction(2, 5)


def test_scheme_i_rate_alpha_015():
    lay = build_scheme_i(1000, 1, 0.15)
    assert float(rate(lay)) == pytest.approx(2 / 2.45)
    assert float(rate(lay)) == pytest.approx(0.8163, abs=1e-4)


def test_scheme_i_pairs():
    lay = build_scheme_i(100, 1, 0.5)
    assert source_sets(lay, (0, 1, 2, 3)) == ["ab", "bc", "cd", "ad", "bd", "ac"]
    assert source_sets(lay, (4, 5, 6, 7)) == ["ef", "fg", "gh", "eh", "fh", "eg"]
    assert lay.groups == ((0, 1, 2, 3), (4, 5, 6, 7))


def test_scheme_i_plans_for_a5():
    lay = build_scheme_i(100, 1, 0.2)
    plans = degraded_read_plans(lay, Address(0, 5))
    assert [p.locality for p in plans] == [1, 2, 2, 2]
    partners = [names(lay, [b for b, _ in p.reads if b < 8]) - {"a"} for p in plans[1:]]
    assert sorted("".join(sorted(x)) for x in partners) == ["b", "c", "d"]
    # direct + three two-bank plans touch 7 distinct banks
    banks = [b for p in plans for b, _ in p.reads]
    assert len(banks) == len(set(banks)) == 7


def test_scheme_i_parity_rows():
    L, alpha = 1000, 0.25
    assert build_scheme_i(L, 1, alpha).parity_rows == 12 * alpha * L


def test_scheme_i_rejects_bad_alpha():
    for a in (0, -0.1, 1.5):
        with pytest.raises(ConfigError):
            build_scheme_i(100, 1, a)
    with pytest.raises(ConfigError):
        build_scheme_i(5, 1, 0.1)  # floor(alpha*L) == 0


def test_scheme_i_best_case_pairs_exist():
    # every parity the 10-read best case relies on is present in group one
    lay = build_scheme_i(100, 1, 0.2)
    have = set(source_sets(lay, (0, 1, 2, 3)))
    assert {"ab", "bc", "cd", "ad", "bd", "ac"} <= have


# ---- scheme II -------------------------------------------------------------

def test_scheme_ii_alpha_one_rate():
    assert rate(build_scheme_ii(1024, 16, 1.0)) == Fraction(2, 7)


def test_scheme_ii_overhead():
    lay = build_scheme_ii(1000, 1, 0.25)
    assert lay.parity_rows == 5000
    assert all(pb.depth_rows == 2 * 250 for pb in lay.parity_banks)
    assert len(lay.parity_banks) == 10


def test_scheme_ii_group_segments():
    lay = build_scheme_ii(100, 1, 0.2)
    sets = source_sets(lay, (0, 1, 2, 3))
    pairs = sorted(s for s in sets if len(s) == 2)
    singles = sorted(s for s in sets if len(s) == 1)
    assert pairs == sorted("".join(p) for p in itertools.combinations("abcd", 2))
    assert singles == ["a", "b", "c", "d"]


def test_scheme_ii_plans_include_replica():
    lay = build_scheme_ii(100, 1, 0.2)
    plans = degraded_read_plans(lay, Address(0, 1))
    assert plans[0].reads == ((0, 1),)
    assert plans[1].locality == 1  # the replica
    assert [p.locality for p in plans[2:]] == [2, 2, 2]
    # 5 plans, all through distinct banks except shared data partners
    assert len({p.reads[0][0] for p in plans}) == 5


def test_scheme_ii_five_reads_per_bank():
    # five reads of bank a in different rows: one plan each, all bank-disjoint
    lay = build_scheme_ii(100, 1, 0.2)
    chosen = [degraded_read_plans(lay, Address(0, r))[r] for r in range(5)]
    banks = [b for p in chosen for b, _ in p.reads]
    assert len(banks) == len(set(banks)) == 8


# ---- scheme III ------------------------------------------------------------

def test_scheme_iii_rate():
    assert rate(build_scheme_iii(1024, 16, 1.0)) == Fraction(1, 2)
    assert float(rate(build_scheme_iii(1000, 1, 0.15))) == pytest.approx(1 / 1.15)


def test_scheme_iii_triples():
    lay = build_scheme_iii(100, 1, 0.2)
    assert source_sets(lay, range(9)) == [
        "abc", "def", "ghz", "adg", "beh", "cfz", "aez", "bfg", "cdh"]
    assert lay.parity_rows == 9 * 20


def test_scheme_iii_companion_plans():
    lay = build_scheme_iii(100, 1, 0.2)
    plans = degraded_read_plans(lay, Address(0, 3))
    assert len(plans) == 4
    got = [names(lay, p.banks) for p in plans]
    assert got == [{"a"}, {"b", "c", "P0"}, {"d", "g", "P3"}, {"e", "z", "P6"}]
    assert all(p.locality == 3 for p in plans[1:])
    banks = [b for p in plans for b, _ in p.reads]
    assert len(banks) == len(set(banks))


def test_scheme_iii_eight_banks_drops_z():
    lay = build_scheme_iii(64, 1, 0.5, num_banks=8)
    assert lay.num_data_banks == 8
    for _, seg in lay.segments:
        assert 8 not in seg.source_banks
    st = BankState(lay)
    image = random_image(lay, 3)
    st.initialize_from_oracle(image)
    for bank in range(8):
        for row in range(32):
            for plan in degraded_read_plans(lay, Address(bank, row)):
                v = 0
                for b, r in plan.reads:
                    v ^= st.read(b, r)
                assert v == image[bank][row]


def test_scheme_iii_bad_bank_count():
    with pytest.raises(ConfigError):
        build_scheme_iii(100, 1, 0.2, num_banks=7)


# ---- replication -----------------------------------------------------------

def test_replication_rw():
    lay = build_replication(2, 1, 16, 1, 2)
    assert lay.num_banks == 8
    assert len(lay.replica_groups) == 2
    assert rate(lay) == Fraction(1, 4)
    assert lay.scheme is Scheme.RW_REPLICATION


def test_replication_read_only():
    lay = build_replication(2, 0, 16, 1, 2)
    assert lay.num_banks == 4
    assert lay.scheme is Scheme.READ_REPLICATION


def test_replication_rejects_r0():
    with pytest.raises(ConfigError):
        build_replication(0, 1, 16, 1, 2)


def test_replication_r_reads_servable():
    # any r reads of one logical bank can use r distinct copies
    r, w = 3, 1
    lay = build_replication(r, w, 8, 1, 2)
    for rows in itertools.combinations(range(8), r):
        plans = [degraded_read_plans(lay, Address(0, row)) for row in rows]
        copies = [p[i].reads[0][0] for i, p in enumerate(plans)]
        assert len(set(copies)) == r


# ---- xor and rows ----------------------------------------------------------

def test_xor_rows_identity_and_self_inverse():
    x = (1, 2, 3)
    assert xor_rows([x]) == x
    assert xor_rows([x, x]) == (0, 0, 0)
    assert xor_rows([], width=3) == (0, 0, 0)


def test_xor_rows_recovers_partner():
    rng = random.Random(5)
    a = tuple(rng.getrandbits(64) for _ in range(4))
    b = tuple(rng.getrandbits(64) for _ in range(4))
    p = xor_rows([a, b])
    assert xor_rows([a, p]) == b


def test_xor_rows_width_mismatch():
    with pytest.raises(ShapeError):
        xor_rows([(1, 2), (1, 2, 3)])
    with pytest.raises(ShapeError):
        xor_rows([(1, 2)], width=3)


@given(st.lists(st.integers(0, 2**64 - 1), min_size=1, max_size=16))
def test_pack_unpack_roundtrip(words):
    assert unpack_row(pack_row(words), len(words)) == tuple(words)


# ---- status-aware plans ----------------------------------------------------

def test_data_fresh_target_only_direct():
    lay = build_scheme_i(100, 1, 0.2)
    st_ = CodeStatusTable(8, 100)
    st_.set(0, 5, Status.DATA_FRESH)
    plans = degraded_read_plans(lay, Address(0, 5), st_)
    assert len(plans) == 1 and plans[0].reads == ((0, 5),)


def test_stale_partner_excludes_plan():
    lay = build_scheme_i(100, 1, 0.2)
    st_ = CodeStatusTable(8, 100)
    st_.set(1, 5, Status.DATA_FRESH)  # P(ab) row 5 is stale
    plans = degraded_read_plans(lay, Address(0, 5), st_)
    assert len(plans) == 3
    assert all(1 not in p.banks for p in plans)


def test_parity_fresh_target_holder_only():
    lay = build_scheme_i(100, 1, 0.2)
    st_ = CodeStatusTable(8, 100)
    st_.set(0, 5, Status.PARITY_FRESH, holder=8, segment=(0, 0))
    plans = degraded_read_plans(lay, Address(0, 5), st_)
    assert [p.reads for p in plans] == [((8, 5),)]


def test_outside_coded_range_only_direct():
    lay = build_scheme_i(100, 1, 0.2)
    assert len(degraded_read_plans(lay, Address(0, 50))) == 1


# ---- rates -----------------------------------------------------------------

ALPHAS = [round(0.05 * i, 2) for i in range(1, 21)]


@pytest.mark.parametrize("alpha", ALPHAS)
def test_rate_matches_closed_form(alpha):
    L = 1000
    for build, scheme in ((build_scheme_i, Scheme.SCHEME_I),
                          (build_scheme_ii, Scheme.SCHEME_II),
                          (build_scheme_iii, Scheme.SCHEME_III)):
        lay = build(L, 1, alpha)
        assert abs(float(rate(lay)) - float(closed_form_rate(scheme, alpha))) < 1e-12


def test_describe_format():
    lay = build_scheme_i(100, 1, 0.2)
    text = lay.describe()
    assert "P0 rows[0..20) = XOR(a,b)" in text
    assert "P11 rows[0..20) = XOR(e,g)" in text
    lay2 = build_scheme_ii(100, 1, 0.2)
    assert "P0 rows[20..40) = XOR(c,d)" in lay2.describe()


# ---- round trip property ---------------------------------------------------

LAYOUTS = [
    lambda: build_scheme_i(32, 2, 0.5),
    lambda: build_scheme_ii(32, 2, 0.5),
    lambda: build_scheme_iii(32, 2, 0.5),
    lambda: build_scheme_iii(32, 2, 0.5, num_banks=8),
    lambda: build_replication(2, 1, 32, 2, 3),
]


@pytest.mark.parametrize("make", LAYOUTS)
def test_every_plan_reconstructs_exhaustive(make):
    lay = make()
    st = BankState(lay)
    image = random_image(lay, 9)
    st.initialize_from_oracle(image)
    for bank in range(lay.num_data_banks):
        for row in range(lay.L):
            for plan in degraded_read_plans(lay, Address(bank, row)):
                v = 0
                for b, r in plan.reads:
                    v ^= st.read(b, r)
                assert v == image[bank][row]


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32), st.sampled_from(range(len(LAYOUTS))))
def test_random_plans_reconstruct(seed, which):
    lay = LAYOUTS[which]()
    st_ = BankState(lay)
    image = random_image(lay, seed)
    st_.initialize_from_oracle(image)
    rng = random.Random(seed)
    bank, row = rng.randrange(lay.num_data_banks), rng.randrange(lay.L)
    plan = rng.choice(degraded_read_plans(lay, Address(bank, row)))
    assert xor_rows([unpack_row(st_.read(b, r), lay.W) for b, r in plan.reads]) == \
        unpack_row(image[bank][row], lay.W)
