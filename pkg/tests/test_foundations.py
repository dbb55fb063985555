import itertools

import pytest
from hypothesis import given, strategies as st

from foundations import (
    FinFun, FinOrder, FinSet, NotWellFoundedError, SequenceCodeError, binary_sequences,
    decode_seq, encode_seq, pair, rank_of, unpair, well_founded_part,
)


@given(st.integers(0, 500), st.integers(0, 500))
def test_unpair_inverts_pair(a, b):
    assert unpair(pair(a, b)) == (a, b)


@given(st.lists(st.integers(0, 40), max_size=6))
def test_sequence_codes_decode(xs):
    assert decode_seq(encode_seq(xs)) == tuple(xs)


def test_empty_sequence_is_zero():
    assert encode_seq([]) == 0
    assert decode_seq(0) == ()


def test_decode_rejects_non_codes():
    # pair(0, 1) announces zero entries with a nonzero body
    with pytest.raises(SequenceCodeError):
        decode_seq(pair(0, 1))
    with pytest.raises(SequenceCodeError):
        decode_seq(-1)


def test_decode_respects_max_len():
    with pytest.raises(SequenceCodeError):
        decode_seq(encode_seq([1, 2, 3]), max_len=2)


def test_binary_sequences_count_and_order():
    seqs = binary_sequences(3)
    assert len(seqs) == 1 + 2 + 4 + 8
    assert seqs == sorted(seqs)
    assert seqs[0] == ()


def test_finset_operations():
    a = FinSet.of(4, [0, 2])
    b = FinSet.of(4, [2, 3])
    assert (a | b).members() == (0, 2, 3)
    assert (a & b).members() == (2,)
    assert (a - b).members() == (0,)
    assert a.least() == 0
    assert FinSet.empty(4).least() is None
    assert a.char() == FinFun((1, 0, 1, 0))
    assert a.prefix(2) == (1, 0)
    assert a.add(1).members() == (0, 1, 2)
    assert not a.issubset(b)


def test_finset_rejects_out_of_range():
    with pytest.raises(ValueError):
        FinSet.of(2, [2])
    with pytest.raises(ValueError):
        FinSet(2, 4)


def test_finfun_cons_and_prefix():
    f = FinFun((3, 4))
    assert f.cons(1) == FinFun((1, 3, 4))
    assert f.prefix(1) == (3,)
    with pytest.raises(IndexError):
        f(2)


def test_ranks_of_prewellordering():
    order = FinOrder.from_ranks({0: 1, 1: 0, 2: 1})
    assert order.is_prewellordering()
    assert order.ranks() == {0: 1, 1: 0, 2: 1}
    assert order.lt(1, 0)
    assert order.leq(0, 2) and order.leq(2, 0)
    assert order.initial_segment(1) == frozenset({1})


def test_cycle_is_not_well_founded():
    order = FinOrder.from_strict({0, 1, 2}, [(0, 1), (1, 0), (1, 2)])
    assert order.well_founded() == frozenset()
    with pytest.raises(NotWellFoundedError):
        rank_of(order, 2)


def test_well_founded_part_skips_descending_chain():
    order = FinOrder.from_strict({0, 1, 2}, [(0, 1), (1, 2), (2, 1)])
    assert well_founded_part(order).members() == (0,)


def test_codes_round_trip_relation():
    order = FinOrder.from_pairs([(0, 0), (0, 1), (1, 1)])
    assert FinOrder.from_codes(order.to_codes()).pairs == order.pairs


def rank_by_descent(strict, x, path=()):
    """Length of the longest ≺-descending chain below x, None on a cycle."""
    if x in path:
        return None
    below = [rank_by_descent(strict, z, path + (x,)) for z, w in strict if w == x]
    if None in below:
        return None
    return max((r + 1 for r in below), default=0)


@pytest.mark.parametrize('size', range(6))
def test_rank_of_exhaustive_on_prewellorderings(size):
    for ranks in itertools.product(range(size), repeat=size):
        if set(ranks) != set(range(max(ranks, default=-1) + 1)):
            continue
        order = FinOrder.from_ranks(dict(enumerate(ranks)))
        assert order.is_prewellordering()
        assert [rank_of(order, x) for x in range(size)] == list(ranks)


@pytest.mark.parametrize('size', range(4))
def test_rank_of_exhaustive_on_strict_relations(size):
    cells = [(z, w) for z in range(size) for w in range(size)]
    for bits in range(1 << len(cells)):
        strict = [c for i, c in enumerate(cells) if bits >> i & 1]
        order = FinOrder.from_strict(range(size), strict)
        for x in range(size):
            expected = rank_by_descent(strict, x)
            if expected is None:
                with pytest.raises(NotWellFoundedError):
                    rank_of(order, x)
            else:
                assert rank_of(order, x) == expected


def test_sequence_codes_are_injective_on_small_sequences():
    seqs = [s for k in range(5) for s in itertools.product(range(5), repeat=k)]
    codes = {encode_seq(s) for s in seqs}
    assert len(codes) == len(seqs)


@given(st.lists(st.integers(0, 60), max_size=8), st.lists(st.integers(0, 60), max_size=8))
def test_distinct_sequences_have_distinct_codes(xs, ys):
    assert (encode_seq(xs) == encode_seq(ys)) == (xs == ys)
