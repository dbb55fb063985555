import random

import pytest
from hypothesis import given, settings, strategies as st

import battery
from foundations import FinFun, FinOrder, FinSet, encode_seq
from induction import (
    NontrivialityError, PartialityError, PointFunctional, ProductivityError, StepFunctional,
    coded_step, e2_via_ind, i0, iterate, lfp, pigeonhole_pair, pwo_domain, pwo_translate,
    pwo_universe, simulated_lfp, stage_order, suslin_via_ind, tree_nodes,
)
from utils import enumerate_tables

tables2 = st.lists(st.integers(0, 3), min_size=4, max_size=4)


def test_chain_adds_one_element_per_stage(chain3):
    trace = iterate(chain3)
    assert trace.closed
    assert trace.alpha == 3
    assert [s.members() for s in trace.stages] == [(), (2,), (1, 2), (0, 1, 2)]
    assert trace.entry_stage(0) == 2
    assert chain3.is_monotone()


def test_non_monotone_functional_closes(flip2):
    trace = iterate(flip2)
    assert trace.closed
    assert trace.result == FinSet.full(2)
    assert trace.alpha == 1
    assert not flip2.is_monotone()


@given(tables2)
def test_iteration_reaches_a_closed_stage(table):
    F = StepFunctional.from_table(2, table)
    trace = iterate(F)
    assert trace.closed
    assert trace.alpha <= 2
    for lower, upper in zip(trace.stages, trace.stages[1:]):
        assert lower.issubset(upper) and lower != upper
    assert F.apply(trace.result).issubset(trace.result)


def test_undefined_stage_is_reported():
    F = StepFunctional.from_table(2, [1, None, 1, 1])
    trace = iterate(F)
    assert not trace.closed
    assert trace.failed_at == 1
    with pytest.raises(PartialityError) as info:
        lfp(F)
    assert info.value.stage == 1


def test_holes_off_trajectory_are_harmless():
    F = battery.trajectory_only_chain(3)
    assert not F.is_total()
    assert lfp(F) == FinSet.full(3)


def test_table_size_is_checked():
    with pytest.raises(ValueError):
        StepFunctional.from_table(2, [0, 1, 2])


def test_stage_order_ranks(chain3):
    order = stage_order(chain3)
    assert order.ranks() == {0: 2, 1: 1, 2: 0}
    assert order.is_prewellordering()


def test_e2_agrees_with_existential_on_small_tables():
    for size in range(7):
        for table in enumerate_tables(size):
            assert e2_via_ind(FinFun(tuple(table))) == int(any(table))


def test_e2_reads_positive_values(witness_fn):
    assert e2_via_ind(witness_fn) == 1
    assert e2_via_ind(FinFun((0, 3, 0))) == 1


def test_suslin_finds_full_path():
    assert suslin_via_ind(lambda code: 0, branching=2, depth=2) == 1


def test_suslin_without_path():
    # only the empty sequence has value 0
    assert suslin_via_ind(lambda code: int(code != 0), branching=2, depth=2) == 0


def test_i0_and_pigeonhole():
    G = PointFunctional.from_table(2, [1, 1, 1, 1])
    assert i0(G) == FinSet.of(2, [1])
    hole = pigeonhole_pair(G)
    assert hole.lower.issubset(hole.upper) and hole.lower != hole.upper
    assert G.apply(hole.lower) == G.apply(hole.upper)
    assert (hole.beta, hole.alpha) == (0, 1)


def test_point_functional_must_stay_in_base():
    with pytest.raises(ProductivityError):
        i0(PointFunctional.from_table(2, [5, 5, 5, 5]))


def test_single_valued_simulation(chain3, flip2):
    assert simulated_lfp(chain3) == lfp(chain3)
    assert simulated_lfp(flip2) == lfp(flip2)


@given(tables2.filter(lambda t: t[0] != 0))
def test_single_valued_simulation_on_tables(table):
    F = StepFunctional.from_table(2, table)
    assert simulated_lfp(F) == lfp(F)


def test_simulation_needs_nonempty_start():
    with pytest.raises(NontrivialityError):
        simulated_lfp(battery.identity_functional(2))


def test_coded_step_reads_first_argument():
    F = coded_step(2, lambda f: int(f(0) == 0))
    assert lfp(F) == FinSet.of(2, [0])


def test_coded_step_propagates_undefined():
    F = coded_step(2, lambda f: None)
    assert iterate(F).failed_at == 0


def test_pwo_translation_tracks_stages(chain3):
    closure = lfp(pwo_translate(chain3))
    assert closure.base_size == pwo_universe(3)
    assert FinOrder.from_codes(closure).pairs == stage_order(chain3).pairs
    assert pwo_domain(closure) == frozenset({0, 1, 2})


def test_pwo_translation_is_total_for_trajectory_only_functional():
    H = pwo_translate(battery.trajectory_only_chain(2))
    assert H.is_total()
    assert FinOrder.from_codes(lfp(H)).ranks() == {0: 1, 1: 0}


def has_path(values, branching, depth):
    """Depth-first search for a full-depth branch whose every prefix has value 0."""
    def walk(node):
        if values.get(encode_seq(node), 1) != 0:
            return False
        if len(node) == depth:
            return True
        return any(walk(node + (x,)) for x in range(branching))
    return walk(())


@pytest.mark.parametrize('depth', [1, 2])
def test_suslin_agrees_with_depth_first_search(depth):
    nodes = tree_nodes(2, depth)
    for table in enumerate_tables(len(nodes)):
        values = {encode_seq(s): v for s, v in zip(nodes, table)}
        tree = lambda code, values=values: values.get(code, 1)
        assert suslin_via_ind(tree, 2, depth) == int(has_path(values, 2, depth))


def test_suslin_agrees_with_depth_first_search_at_depth_three():
    nodes = tree_nodes(2, 3)
    for table in enumerate_tables(len(nodes)):
        values = {encode_seq(s): v for s, v in zip(nodes, table)}
        assert suslin_via_ind(lambda code: values.get(code, 1), 2, 3) == int(has_path(values, 2, 3))


@settings(max_examples=1000, deadline=None)
@given(st.lists(st.integers(0, 1), min_size=31, max_size=31))
def test_suslin_agrees_with_depth_first_search_at_depth_four(table):
    values = {encode_seq(s): v for s, v in zip(tree_nodes(2, 4), table)}
    assert suslin_via_ind(lambda code: values.get(code, 1), 2, 4) == int(has_path(values, 2, 4))


def test_monotone_closure_is_least_prefixed_point():
    for table in enumerate_tables(4, range(4)):
        F = StepFunctional.from_table(2, table)
        if not F.is_monotone():
            continue
        prefixed = [FinSet(2, m) for m in range(4) if F.apply(FinSet(2, m)).issubset(FinSet(2, m))]
        least = FinSet.full(2)
        for a in prefixed:
            least = least & a
        assert lfp(F) == least


@settings(max_examples=1000, deadline=None)
@given(st.lists(st.integers(0, 7), min_size=8, max_size=8).filter(lambda t: t[0] != 0))
def test_single_valued_simulation_at_three(table):
    F = StepFunctional.from_table(3, table)
    assert simulated_lfp(F) == lfp(F)


def test_exhaustive_checks_refuse_large_bases():
    F = StepFunctional.from_callable(9, lambda a: a)
    with pytest.raises(ValueError):
        F.is_total()


def closure_by_masks(table):
    """Iterate A ∪ F(A) on raw masks until F(A) ⊆ A."""
    a = 0
    while table[a] | a != a:
        a |= table[a]
    return a


@pytest.mark.parametrize('n', [0, 1, 2])
def test_lfp_exhaustive_on_small_bases(n):
    for table in enumerate_tables(1 << n, range(1 << n)):
        assert lfp(StepFunctional.from_table(n, table)).mask == closure_by_masks(table)


@pytest.mark.parametrize('n', [3, 4])
def test_lfp_on_random_tables(n):
    rng = random.Random(n)
    for _ in range(5000):
        table = [rng.randrange(1 << n) for _ in range(1 << n)]
        F = StepFunctional.from_table(n, table)
        trace = iterate(F)
        assert trace.result.mask == closure_by_masks(table)
        assert trace.alpha <= n


@pytest.mark.parametrize('n', [1, 2, 3])
def test_pigeonhole_exhaustive(n):
    for table in enumerate_tables(1 << n, range(n)):
        G = PointFunctional.from_table(n, table)
        hole = pigeonhole_pair(G)
        assert hole.lower.issubset(hole.upper) and hole.lower != hole.upper
        assert G.apply(hole.lower) == G.apply(hole.upper)
        assert G.apply(hole.upper) in hole.upper
        assert hole.upper == i0(G)
        assert len(hole.lower) == hole.beta < hole.alpha == len(hole.upper)


def assert_pwo_tracks(F):
    closure = lfp(pwo_translate(F))
    assert FinOrder.from_codes(closure).pairs == stage_order(F).pairs
    assert pwo_domain(closure) == frozenset(lfp(F).members())


def test_pwo_translation_exhaustive_at_two():
    for table in enumerate_tables(4, range(4)):
        assert_pwo_tracks(StepFunctional.from_table(2, table))


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(0, 7), min_size=8, max_size=8))
def test_pwo_translation_at_three(table):
    assert_pwo_tracks(StepFunctional.from_table(3, table))
