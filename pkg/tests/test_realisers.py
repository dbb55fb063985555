import itertools

import pytest
from hypothesis import given, settings, strategies as st

import battery
from foundations import FinFun, pair
from induction import StepFunctional, stage_order
from realisers import (
    Cover, DepthOracle, GFunctional, g_nxy, index_of, is_cover, leaf_of, pincherle,
    pincherle_witness, recover_pwo, strong_hb, total_preorders, weak_from_strong,
)


def depth_oracles(depth):
    return st.lists(st.integers(0, depth), min_size=1 << depth, max_size=1 << depth).map(
        lambda table: DepthOracle(depth, tuple(table)))


def test_leaf_indices_read_most_significant_bit_first():
    assert leaf_of(5, 3) == (1, 0, 1)
    assert index_of((1, 0, 1)) == 5
    assert [index_of(leaf) for leaf in DepthOracle.constant(2, 0).leaves()] == [0, 1, 2, 3]


def test_depth_oracle_validation():
    with pytest.raises(ValueError):
        DepthOracle(2, (0, 1, 2))
    with pytest.raises(ValueError):
        DepthOracle(1, (0, 2))


def test_depth_oracle_json():
    F = DepthOracle.from_function(2, lambda leaf: leaf[0] + 1)
    assert F.table == (1, 1, 2, 2)
    assert DepthOracle.from_json(F.to_json()) == F
    assert F.neighbourhood((1, 0)) == (1, 0)


def test_constant_zero_needs_one_leaf():
    F = DepthOracle.constant(3, 0)
    leaves = strong_hb(F)
    assert leaves == [(0, 0, 0)]
    assert weak_from_strong(F, leaves) == Cover(((),))


def test_constant_full_depth_needs_every_leaf():
    F = DepthOracle.constant(2, 2)
    assert len(strong_hb(F)) == 4
    assert weak_from_strong(F, strong_hb(F)).to_json() == ['00', '01', '10', '11']


def test_is_cover():
    assert is_cover(Cover(((0,), (1, 0), (1, 1))), 2)
    assert not is_cover(Cover(((0,), (1, 0))), 2)


@given(depth_oracles(3))
def test_strong_cover_yields_weak_cover(F):
    leaves = strong_hb(F)
    assert is_cover(weak_from_strong(F, leaves), F.depth)
    assert leaves == sorted(leaves)


@pytest.mark.parametrize('table,bound', [((0, 1), 0), ((1, 1), 1), ((1, 0), 0), ((2, 2, 1, 1), 2)])
def test_pincherle_bounds(table, bound):
    depth = len(table).bit_length() - 1
    assert pincherle(DepthOracle(depth, table)) == bound


@given(depth_oracles(2))
def test_pincherle_witness_respects_every_bound(F):
    G = pincherle_witness(F)
    for f in F.leaves():
        k = F(f)
        for g in F.leaves():
            if g[:k] == f[:k]:
                assert G(g) <= k
    assert max(G.table) == pincherle(F)


@given(st.integers(0, 3), st.integers(1, 3))
def test_pincherle_of_constant(value, depth):
    value = min(value, depth)
    assert pincherle(DepthOracle.constant(depth, value)) == value


def test_total_preorders_count():
    assert total_preorders(1) == frozenset({0, 1})
    assert len(total_preorders(2)) == 6


def test_case_analysis_on_true_relation():
    functional = GFunctional(battery.chain_functional(2), 2)
    true_mask = (1 << pair(0, 0)) | (1 << pair(1, 0)) | (1 << pair(1, 1))
    result = functional.analyse(true_mask)
    assert result.case == 4
    assert functional.value(9, 1, 0, true_mask) == 9
    assert functional.value(9, 0, 1, true_mask) == 0


def test_case_analysis_rejects_non_preorder():
    functional = GFunctional(battery.chain_functional(2), 2)
    # 0 ⪯ 1 without 0 ⪯ 0
    result = functional.analyse(1 << pair(0, 1))
    assert result.case == 1
    assert 1 <= result.value <= functional.codes


def test_case_analysis_on_wrong_first_stage():
    functional = GFunctional(battery.chain_functional(2), 2)
    # only 0 at rank 0, but the first stage is {1}
    result = functional.analyse(1 << pair(0, 0))
    assert result.case == 2
    assert result.value == max(pair(0, 1), pair(1, 0), pair(0, 0)) + 1


def test_case_analysis_on_proper_initial_segment():
    functional = GFunctional(battery.chain_functional(2), 2)
    result = functional.analyse(1 << pair(1, 1))
    assert result.case == 3
    assert result.value == pair(0, 0) + 1


def test_threshold_exceeds_spurious_values():
    functional = GFunctional(battery.chain_functional(2), 2)
    n = functional.threshold()
    assert 1 < n <= functional.codes + 1


def test_g_oracle_reads_characteristic_prefix():
    F = battery.chain_functional(2)
    bits = [1, 1, 0, 0, 1]
    assert g_nxy(7, 1, 0, F, 2)(FinFun(tuple(bits))) == 7
    assert g_nxy(7, 0, 1, F, 2)(FinFun(tuple(bits))) == 0


def test_recover_chain_order():
    assert recover_pwo(battery.chain_functional(2), 2) == stage_order(battery.chain_functional(2))


def test_recover_needs_functional_only_on_its_trajectory():
    F = battery.trajectory_only_chain(2)
    assert not F.is_total()
    assert recover_pwo(F, 2) == stage_order(F)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(0, 3), min_size=4, max_size=4))
def test_recover_matches_stage_order(table):
    F = StepFunctional.from_table(2, table)
    assert recover_pwo(F, 2) == stage_order(F)


def test_recover_checks_universe_size(chain3):
    with pytest.raises(ValueError):
        recover_pwo(chain3, 2)


def test_only_case_four_depends_on_n():
    functional = GFunctional(battery.chain_functional(2), 2)
    for mask in range(1 << functional.codes):
        case = functional.analyse(mask).case
        for x in range(2):
            for y in range(2):
                low, high = functional.value(3, x, y, mask), functional.value(10, x, y, mask)
                if case < 4:
                    assert low == high
                else:
                    assert (low, high) in ((3, 10), (0, 0))


@pytest.mark.parametrize('F', [battery.chain_functional(3), battery.trajectory_only_chain(3)],
                         ids=['chain', 'chain-on-trajectory'])
def test_recover_over_three_elements(F):
    assert recover_pwo(F, 3) == stage_order(F)


def least_bound_by_sweep(F):
    """Largest max(G) over every G: {0,1}^L -> [0..L] respecting the bounds of F."""
    leaves = F.leaves()
    best = 0
    for table in itertools.product(range(F.depth + 1), repeat=len(leaves)):
        G = dict(zip(leaves, table))
        if all(G[g] <= F(f) for f in leaves for g in leaves if g[:F(f)] == f[:F(f)]):
            best = max(best, max(table))
    return best


def test_pincherle_matches_exhaustive_sweep_at_depth_two():
    for table in itertools.product(range(3), repeat=4):
        F = DepthOracle(2, table)
        assert pincherle(F) == least_bound_by_sweep(F), table


@pytest.mark.slow
@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(0, 7), min_size=8, max_size=8))
def test_recover_matches_stage_order_over_three_elements(table):
    F = StepFunctional.from_table(3, table)
    assert recover_pwo(F, 3) == stage_order(F)
