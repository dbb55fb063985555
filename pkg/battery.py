"""Handwritten index battery shared by the tests, the self-test and the CLI."""
from __future__ import annotations

import random
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Union

from foundations import FinFun, FinSet, encode_seq
from induction import StepFunctional
from kleene import (
    Env, Type2Oracle, e2_oracle, reduction_index, s1, s2, s3, s4, s6, s7, s8_2, s8_3, s9,
    step_oracle,
)

NOT_AN_INDEX = encode_seq([5])


@dataclass(frozen=True)
class BatteryItem:
    """
    One computation with its expected partial-semantics outcome.

    expect is the value for terminating items, otherwise the CompResult kind.
    """

    name: str
    index: int
    env: Env
    expect: Union[int, str]
    tags: frozenset = field(default_factory=frozenset)

    @property
    def terminates(self) -> bool:
        return isinstance(self.expect, int)

    def split(self) -> tuple[Env, Optional[Type2Oracle]]:
        """The arguments without the first oracle, and that oracle (None when there is none)."""
        if not self.env.oracles:
            return self.env, None
        return self.env.with_oracles(self.env.oracles[1:]), self.env.oracles[0]


def diagonal_loop() -> tuple[int, Env]:
    """L = ⟨4,⟨9⟩,⟨3⟩⟩ applied to itself: {L}(L) = {⟨9⟩}(L, L) = {L}(L)."""
    loop = s4(s9(), s3())
    return loop, Env(nums=(loop,))


def nested_divergence(n: int = 1) -> tuple[int, Env]:
    """
    An induction whose every query reopens the same induction one level deeper.

    L' = ⟨8,3,X⟩ with X = ⟨4,⟨4,⟨9⟩,⟨3⟩⟩,⟨3⟩⟩ and arguments (L', L').
    """
    inner = s4(s4(s9(), s3()), s3())
    outer = s8_3(inner)
    return outer, Env(nums=(outer, outer), base_size=n)


def chain_functional(n: int) -> StepFunctional:
    """F(A) = {n-1} ∪ {k : k+1 ∈ A}; adds one element per stage, top down."""
    return StepFunctional.from_callable(
        n, lambda a: [n - 1] + [k for k in range(n - 1) if k + 1 in a], name=f'chain{n}',
    )


def identity_functional(n: int) -> StepFunctional:
    return StepFunctional.from_callable(n, lambda a: a, name='identity')


def trajectory_only_chain(n: int = 3) -> StepFunctional:
    """The chain functional, UNDEFINED everywhere off its own trajectory."""
    chain = chain_functional(n)
    table = [None] * (1 << n)
    a = FinSet.empty(n)
    while True:
        out = chain.apply(a)
        table[a.mask] = out.mask
        if out.issubset(a):
            break
        a = a | out
    return StepFunctional.from_table(n, table, name='chain-on-trajectory')


def looping_off_trajectory_oracle() -> Type2Oracle:
    """
    Over n=2: answers codes of ⟨2,[c ∈ F(A)]⟩ for the chain F on its trajectory and the
    diagonal loop code at the one off-trajectory set {0}.

    Indexed by the bitmask of c⌢χ_A: bit 0 is c, bits 1 and 2 are membership of 0 and 1.
    """
    loop, _ = diagonal_loop()
    table = [s2(0), s2(1), loop, loop, s2(1), s2(1), s2(1), s2(1)]
    return Type2Oracle.from_table(3, table, name='loop-off-trajectory')


def _reduction_env(oracle: Type2Oracle, n: int, *nums: int) -> Env:
    return Env((oracle,), (), tuple(nums), n)


@lru_cache(maxsize=1)
def battery() -> tuple[BatteryItem, ...]:
    loop, loop_env = diagonal_loop()
    nested, nested_env = nested_divergence()
    chain3 = step_oracle(chain_functional(3))
    chain2 = step_oracle(chain_functional(2))
    ind = reduction_index()
    sum_oracle = Type2Oracle.from_table(2, [0, 1, 1, 2], name='bitsum')
    selector = (NOT_AN_INDEX, NOT_AN_INDEX, s2(7), NOT_AN_INDEX)
    partial_holes = step_oracle(
        StepFunctional.from_table(2, [3, None, None, 3], name='undefined-off-trajectory'))

    return (
        BatteryItem('successor', s1(), Env(nums=(3,)), 4),
        BatteryItem('constant', s2(5), Env(), 5),
        BatteryItem('projection', s3(), Env(nums=(7,)), 7),
        BatteryItem('compose-succ-proj', s4(s1(), s3()), Env(nums=(2,)), 3),
        BatteryItem('compose-succ-succ', s4(s1(), s1()), Env(nums=(2,)), 4),
        BatteryItem('compose-proj-const', s4(s3(), s2(3)), Env(nums=(9,)), 3),
        BatteryItem('apply-function', s7(), Env(funs=(FinFun((7, 8, 9)),), nums=(1,)), 8),
        BatteryItem('swap-numbers', s6(s3(), (), (), (1, 0)), Env(nums=(4, 9)), 9),
        BatteryItem('dispatch-successor', s9(), Env(nums=(s1(), 5)), 6),
        BatteryItem('dispatch-selected', s4(s9(), s7()),
                    Env(funs=(FinFun(selector),), nums=(2,)), 7, frozenset({'selection'})),
        BatteryItem('oracle-successor', s8_2(s1()), Env(oracles=(sum_oracle,)), 2),
        BatteryItem('oracle-constant', s8_2(s2(0)), Env(oracles=(sum_oracle,)), 0),
        BatteryItem('e2-witness', ind, _reduction_env(e2_oracle(FinFun((0, 0, 1))), 3, 0), 1,
                    frozenset({'induction'})),
        BatteryItem('e2-zero', ind, _reduction_env(e2_oracle(FinFun((0, 0, 0))), 3, 0), 0,
                    frozenset({'induction'})),
        BatteryItem('identity-induction', ind, _reduction_env(step_oracle(identity_functional(2)), 2, 0),
                    0, frozenset({'induction'})),
        BatteryItem('chain-induction', ind, _reduction_env(chain3, 3, 0), 1, frozenset({'induction'})),
        BatteryItem('chain-out-of-range', ind, _reduction_env(chain3, 3, 5), 0, frozenset({'induction'})),
        BatteryItem('nested-induction', s8_3(ind), _reduction_env(chain2, 2, 0, 0), 1,
                    frozenset({'induction', 'nested'})),
        BatteryItem('partial-undefined-oracle', ind, _reduction_env(partial_holes, 2, 0), 1,
                    frozenset({'induction', 'partial'})),
        BatteryItem('partial-looping-dispatch', s8_3(s4(s9(), s8_2(s7()))),
                    _reduction_env(looping_off_trajectory_oracle(), 2, 0, loop), 1,
                    frozenset({'induction', 'partial'})),
        BatteryItem('partial-holes-off-trajectory', ind,
                    _reduction_env(step_oracle(trajectory_only_chain(3)), 3, 1), 1,
                    frozenset({'induction', 'partial'})),
        BatteryItem('not-an-index', NOT_AN_INDEX, Env(), 'NotAnIndex', frozenset({'divergent'})),
        BatteryItem('function-out-of-range', s7(), Env(funs=(FinFun((1,)),), nums=(3,)),
                    'OracleUndefined', frozenset({'divergent'})),
        BatteryItem('diagonal-loop', loop, loop_env, 'BudgetExceeded', frozenset({'divergent'})),
        BatteryItem('nested-divergence', nested, nested_env, 'BudgetExceeded',
                    frozenset({'divergent', 'induction'})),
    )


def terminating() -> list[BatteryItem]:
    return [item for item in battery() if item.terminates]


def by_name(name: str) -> BatteryItem:
    for item in battery():
        if item.name == name:
            return item
    raise KeyError(name)


def oracle_variants(F: Optional[Type2Oracle], count: int, seed: int = 0) -> list[Optional[Type2Oracle]]:
    """F followed by count random tables of its support over the values F itself answers."""
    if F is None:
        return [None]
    rng = random.Random(seed)
    size = 1 << F.support
    patterns = [FinFun(tuple(mask >> i & 1 for i in range(F.support))) for mask in range(size)]
    values = sorted({F(f) for f in patterns} - {None} | {0, 1})
    return [F] + [
        Type2Oracle.from_table(F.support, [rng.choice(values) for _ in range(size)], name=f'variant{i}')
        for i in range(count)
    ]
