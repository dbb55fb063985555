"""
The non-monotone induction operator and the constructions built directly on it.

A StepFunctional F over [0..n) is iterated from the empty set with f(β+1) = f(β) ∪ F(f(β))
until F(f(α)) ⊆ f(α). Every proper step adds an element, so α <= n and no limit stage occurs.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Iterable, NamedTuple, Optional, Sequence, Union

from config import config
from foundations import (
    EngineError, FinFun, FinOrder, FinSet, SequenceCodeError, binary_sequences,
    decode_seq, encode_seq, pair, unpair,
)

logger = logging.getLogger(__name__)

UNDEFINED = None


def _inputs(n: int) -> range:
    """Every input mask over [0..n), refusing bases too large to enumerate."""
    if n > config.INDUCT_MAX_EXHAUSTIVE_N:
        raise ValueError(f"cannot enumerate 2^{n} inputs (INDUCT_MAX_EXHAUSTIVE_N={config.INDUCT_MAX_EXHAUSTIVE_N})")
    return range(1 << n)


class PartialityError(EngineError):
    """The functional is undefined at a stage of its own trajectory."""

    def __init__(self, stage: int, message: Optional[str] = None):
        self.stage = stage
        super().__init__(message or f"functional undefined at stage {stage}")


class ProductivityError(EngineError):
    """A single-valued functional produced a value outside its base before closure."""

    def __init__(self, value: int, stage: int, base_size: int):
        self.value = value
        self.stage = stage
        super().__init__(f"value {value} at stage {stage} is outside [0..{base_size})")


class NontrivialityError(EngineError):
    """The simulation of a step functional requires F(∅) ≠ ∅."""


SetLike = Union[FinSet, Iterable[int], None]


# ============================================================================
# FUNCTIONALS
# ============================================================================

@dataclass(frozen=True, eq=False)
class StepFunctional:
    """
    F: subsets of [0..n) → subsets of [0..n), possibly UNDEFINED at some inputs.

    Backed either by an explicit table indexed by input bitmask (None entries are
    UNDEFINED) or by a callable returning a FinSet, an iterable of members, or None.
    """

    base_size: int
    fn: Optional[Callable[[FinSet], SetLike]] = None
    table: Optional[tuple] = None
    name: str = ''

    @classmethod
    def from_table(cls, n: int, table: Sequence[Optional[int]], name: str = '') -> StepFunctional:
        if len(table) != 1 << n:
            raise ValueError(f"table for n={n} needs {1 << n} entries, got {len(table)}")
        for m in table:
            if m is not None and not 0 <= m < 1 << n:
                raise ValueError(f"table entry {m} does not fit base {n}")
        return cls(n, table=tuple(table), name=name)

    @classmethod
    def from_callable(cls, n: int, fn: Callable[[FinSet], SetLike], name: str = '') -> StepFunctional:
        return cls(n, fn=fn, name=name)

    @classmethod
    def from_json(cls, data: dict) -> StepFunctional:
        return cls.from_table(int(data['n']), data['table'])

    def apply(self, a: FinSet) -> Optional[FinSet]:
        if a.base_size != self.base_size:
            raise ValueError(f"input over base {a.base_size}, functional over {self.base_size}")
        if self.table is not None:
            m = self.table[a.mask]
            return None if m is None else FinSet(self.base_size, m)
        out = self.fn(a)
        if out is None or isinstance(out, FinSet):
            return out
        return FinSet.of(self.base_size, out)

    __call__ = apply

    def tabulated(self) -> StepFunctional:
        """Materialize the table by evaluating every input."""
        n = self.base_size
        table = []
        for mask in _inputs(n):
            out = self.apply(FinSet(n, mask))
            table.append(None if out is None else out.mask)
        return StepFunctional.from_table(n, table, self.name)

    def is_total(self) -> bool:
        return all(self.apply(FinSet(self.base_size, m)) is not None for m in _inputs(self.base_size))

    def is_monotone(self) -> bool:
        n = self.base_size
        outs = [self.apply(FinSet(n, m)) for m in _inputs(n)]
        return all(
            outs[a] is not None and outs[b] is not None and outs[a].issubset(outs[b])
            for a in range(1 << n) for b in range(1 << n) if a & ~b == 0
        )

    def to_json(self) -> dict:
        table = self.table if self.table is not None else self.tabulated().table
        return {'n': self.base_size, 'table': list(table)}

    def __repr__(self):
        return f"StepFunctional(n={self.base_size}{', ' + self.name if self.name else ''})"


@dataclass(frozen=True, eq=False)
class PointFunctional:
    """G: subsets of [0..n) → naturals, total; drives H_G(A) = A ∪ {G(A)}."""

    base_size: int
    fn: Optional[Callable[[FinSet], int]] = None
    table: Optional[tuple] = None
    name: str = ''

    @classmethod
    def from_table(cls, n: int, table: Sequence[int], name: str = '') -> PointFunctional:
        if len(table) != 1 << n:
            raise ValueError(f"table for n={n} needs {1 << n} entries, got {len(table)}")
        return cls(n, table=tuple(int(v) for v in table), name=name)

    @classmethod
    def from_callable(cls, n: int, fn: Callable[[FinSet], int], name: str = '') -> PointFunctional:
        return cls(n, fn=fn, name=name)

    def apply(self, a: FinSet) -> int:
        if self.table is not None:
            return self.table[a.mask]
        return int(self.fn(a))

    __call__ = apply

    def to_json(self) -> dict:
        if self.table is None:
            raise ValueError("only table-backed point functionals serialize")
        return {'n': self.base_size, 'table': list(self.table)}


# ============================================================================
# ITERATION
# ============================================================================

@dataclass(frozen=True)
class IndTrace:
    """Stages f0 ⊊ f1 ⊊ ... of one induction, with the values F took on them."""

    base_size: int
    stages: tuple
    applied: tuple
    closed: bool
    failed_at: Optional[int] = None

    @property
    def alpha(self) -> int:
        return len(self.stages) - 1

    @property
    def result(self) -> FinSet:
        return self.stages[-1]

    def raise_for_partiality(self):
        if self.failed_at is not None:
            raise PartialityError(self.failed_at)

    def entry_stage(self, x: int) -> Optional[int]:
        """The β with x ∈ f(β+1) ∖ f(β), or None if x never enters."""
        for beta in range(len(self.stages) - 1):
            if x in self.stages[beta + 1] and x not in self.stages[beta]:
                return beta
        return None

    def to_json(self) -> dict:
        out = {
            'n': self.base_size,
            'stages': [s.mask for s in self.stages],
            'closed': self.closed,
        }
        if self.failed_at is not None:
            out['failed_at'] = self.failed_at
        return out


def iterate(F: StepFunctional) -> IndTrace:
    """
    Run the induction of F from ∅ up to the first stage F does not enlarge.

    Args:
        F: The step functional

    Returns:
        The trace; closed is False and failed_at is set when F is UNDEFINED at a stage
    """
    n = F.base_size
    stages = [FinSet.empty(n)]
    applied = []
    while True:
        current = stages[-1]
        out = F.apply(current)
        if out is None:
            logger.debug('%r undefined at stage %d', F, len(stages) - 1)
            return IndTrace(n, tuple(stages), tuple(applied), False, len(stages) - 1)
        applied.append(out)
        if out.issubset(current):
            return IndTrace(n, tuple(stages), tuple(applied), True)
        logger.debug('stage %d adds %r', len(stages) - 1, (out - current).members())
        stages.append(current | out)


def lfp(F: StepFunctional) -> FinSet:
    """𝓘(F): the closure stage of the induction."""
    trace = iterate(F)
    trace.raise_for_partiality()
    return trace.result


def stage_order(F: StepFunctional) -> FinOrder:
    """The prewellordering of lfp(F) by stage of entry."""
    trace = iterate(F)
    trace.raise_for_partiality()
    ranks = {x: trace.entry_stage(x) for x in trace.result}
    return FinOrder.from_ranks(ranks)


def _i0_stages(G: PointFunctional) -> tuple[list[FinSet], int]:
    n = G.base_size
    stages = [FinSet.empty(n)]
    while True:
        value = G.apply(stages[-1])
        if value in stages[-1]:
            return stages, value
        if not 0 <= value < n:
            raise ProductivityError(value, len(stages) - 1, n)
        stages.append(stages[-1].add(value))


def i0(G: PointFunctional) -> FinSet:
    """𝓘₀(G) = 𝓘(H_G) with H_G(A) = A ∪ {G(A)}."""
    stages, _ = _i0_stages(G)
    return stages[-1]


class Pigeonhole(NamedTuple):
    lower: FinSet
    upper: FinSet
    beta: int
    alpha: int


def pigeonhole_pair(G: PointFunctional) -> Pigeonhole:
    """
    Find A_β ⊊ A_α on the H_G trajectory with G(A_β) = G(A_α).

    The trajectory stops at the first A_α with G(A_α) ∈ A_α; that value entered at
    some earlier stage β, which is where G took it first.
    """
    stages, value = _i0_stages(G)
    alpha = len(stages) - 1
    beta = next(b for b in range(alpha) if value in stages[b + 1] and value not in stages[b])
    return Pigeonhole(stages[beta], stages[alpha], beta, alpha)


def coded_step(n: int, g: Callable[[FinFun], Optional[int]], name: str = '') -> StepFunctional:
    """
    F_G(A)(a) = min{G(a⌢χ_A), 1} for a < n.

    Undefined wherever g is undefined at one of the n points.
    """
    def step(a_set: FinSet) -> Optional[FinSet]:
        chi = a_set.char()
        members = []
        for a in range(n):
            value = g(chi.cons(a))
            if value is None:
                return None
            if value > 0:
                members.append(a)
        return FinSet.of(n, members)
    return StepFunctional.from_callable(n, step, name or 'coded')


# ============================================================================
# REDUCTIONS
# ============================================================================

def e2_functional(f: FinFun) -> StepFunctional:
    """F_f(A) = {k : f(k) > 0} ∪ {k : k+1 ∈ A}."""
    n = f.length
    witnesses = [k for k in range(n) if f(k) > 0]
    return StepFunctional.from_callable(
        n,
        lambda a: witnesses + [k for k in range(n - 1) if k + 1 in a],
        name='e2',
    )


def e2_via_ind(f: FinFun) -> int:
    """²E(f) computed as [0 ∈ 𝓘(F_f)]."""
    if f.length == 0:
        return 0
    return int(0 in lfp(e2_functional(f)))


def tree_nodes(branching: int, depth: int) -> list[tuple[int, ...]]:
    nodes = [()]
    frontier = [()]
    for _ in range(depth):
        frontier = [s + (x,) for s in frontier for x in range(branching)]
        nodes.extend(frontier)
    return sorted(nodes)


def zero_tree(tree: Callable[[int], int], branching: int, depth: int) -> set[tuple[int, ...]]:
    """T_f: sequences whose every prefix, the empty one included, has tree value 0."""
    members: set[tuple[int, ...]] = set()
    for s in tree_nodes(branching, depth):
        if tree(encode_seq(s)) == 0 and (not s or s[:-1] in members):
            members.add(s)
    return members


def suslin_via_ind(tree: Callable[[int], int], branching: int, depth: int) -> int:
    """
    Su(f) = 1 iff T_f has a path of the full depth.

    The induction adds a node of T_f above the depth bound once all its T_f-children are
    in; T_f has a depth-D path exactly when some node of T_f stays out, which ²E decides.

    Args:
        tree: Values on sequence codes over [0..branching) of length <= depth
        branching: Alphabet size
        depth: Maximal sequence length

    Returns:
        0 or 1
    """
    nodes = tree_nodes(branching, depth)
    index = {s: i for i, s in enumerate(nodes)}
    t_f = zero_tree(tree, branching, depth)
    children = {
        s: [index[s + (x,)] for x in range(branching) if s + (x,) in t_f]
        for s in t_f if len(s) < depth
    }

    def step(w: FinSet) -> list[int]:
        return [index[s] for s, kids in children.items() if all(k in w for k in kids)]

    captured = lfp(StepFunctional.from_callable(len(nodes), step, name='suslin'))
    outside = FinFun(tuple(int(s in t_f and index[s] not in captured) for s in nodes))
    return e2_via_ind(outside)


# ============================================================================
# SINGLE-VALUED SIMULATION
# ============================================================================

@dataclass(frozen=True)
class SequenceUniverse:
    """Codes of binary sequences of length <= width, all below base_size."""

    width: int
    base_size: int = field(init=False)

    def __post_init__(self):
        top = max(encode_seq(s) for s in binary_sequences(self.width))
        object.__setattr__(self, 'base_size', top + 1)

    def decode(self, code: int) -> Optional[tuple[int, ...]]:
        try:
            s = decode_seq(code, max_len=self.width)
        except SequenceCodeError:
            return None
        if any(bit not in (0, 1) for bit in s):
            return None
        return s


def single_valued_of(F: StepFunctional) -> PointFunctional:
    """
    A G over sets of coded binary sequences whose single-valued induction simulates F.

    Each round of the simulation emits the prefixes of the characteristic function of
    A ∪ F(A), shortest first, ending with the full-width prefix. A set whose sequences
    end in such a full-width prefix therefore holds completed rounds only (case 1); a
    set with a partial round after its last completed one is extended by one bit (case 2);
    anything else gets 0, which is also the code of the empty sequence and the value
    that closes the induction once F stops growing.
    """
    n = F.base_size
    first = F.apply(FinSet.empty(n))
    if first is None or not first:
        raise NontrivialityError(f"{F!r} has F(∅) = {first!r}")
    universe = SequenceUniverse(n)

    def g(b: FinSet) -> int:
        seqs = []
        for code in b:
            if code == 0:
                continue
            s = universe.decode(code)
            if s is None:
                return 0
            seqs.append(s)
        seqs.sort()
        complete = [i for i, s in enumerate(seqs) if len(s) == n]
        cut = complete[-1] + 1 if complete else 0
        settled, tail = seqs[:cut], seqs[cut:]
        a = FinSet.of(n, {k for s in settled for k, bit in enumerate(s) if bit})
        fa = F.apply(a)
        if fa is None:
            raise PartialityError(len(complete), f"F undefined at simulated stage {a!r}")
        target = (a | fa).prefix(n)
        if not tail:
            new = fa - a
            if not new:
                return 0
            return encode_seq(target[:new.least() + 1])
        if any(s != target[:len(s)] for s in tail):
            return 0
        return encode_seq(target[:len(tail[-1]) + 1])

    return PointFunctional.from_callable(universe.base_size, g, name='single-valued')


def decode_simulation(closure: FinSet, n: int) -> FinSet:
    """Bits set in the sequences of a simulated closure."""
    universe = SequenceUniverse(n)
    bits = set()
    for code in closure:
        s = universe.decode(code)
        if s:
            bits.update(k for k, bit in enumerate(s) if bit)
    return FinSet.of(n, bits)


def simulated_lfp(F: StepFunctional) -> FinSet:
    """lfp(F) recovered from 𝓘₀ of the single-valued simulation."""
    return decode_simulation(i0(single_valued_of(F)), F.base_size)


# ============================================================================
# PREWELLORDERING TRANSLATION
# ============================================================================

def pwo_universe(n: int) -> int:
    """Base size holding every pair code ⟨x,y⟩ with x, y < n."""
    return pair(n - 1, n - 1) + 1 if n else 0


@lru_cache(maxsize=None)
def total_preorders(base: int) -> frozenset:
    """Masks over pair codes of every total preorder on a subset of [0..base)."""
    out = set()
    for size in range(base + 1):
        for field_ in itertools.combinations(range(base), size):
            for ranks in itertools.product(range(size), repeat=size):
                if set(ranks) != set(range(max(ranks, default=-1) + 1)):
                    continue
                rank = dict(zip(field_, ranks))
                out.add(sum(1 << pair(z, w) for z in field_ for w in field_ if rank[z] <= rank[w]))
    return frozenset(out)


def _decode_relation(x: FinSet, n: int) -> Optional[FinOrder]:
    pairs = [unpair(c) for c in x]
    if any(z >= n or w >= n for z, w in pairs):
        return None
    return FinOrder.from_pairs(pairs)


def _end_extend(kept: Iterable[tuple[int, int]], lower: frozenset, new: Iterable[int]) -> list[int]:
    new = list(new)
    codes = [pair(z, w) for z, w in kept]
    codes.extend(pair(z, w) for z in list(lower) + new for w in new)
    return codes


def pwo_translate(F: StepFunctional) -> StepFunctional:
    """
    The total H on coded prewellorderings whose induction tracks the stages of F.

    H(R) compares R_γ with A_γ by recursion on γ. On agreement with closure it returns R
    restricted to R_γ; on the first disagreement, at γ+1, it returns R restricted to R_γ
    end-extended with F(A_γ) ∖ A_γ. Codes that are not prewellorderings map to themselves.
    F is only consulted at its own stages, so H is total whenever F is defined along its
    trajectory; a hole on the trajectory raises PartialityError.
    """
    n = F.base_size
    base = pwo_universe(n)

    def h(x: FinSet) -> FinSet:
        order = _decode_relation(x, n)
        if order is None or not order.is_prewellordering():
            return x
        a = FinSet.empty(n)
        gamma = 0
        while True:
            fa = F.apply(a)
            if fa is None:
                raise PartialityError(gamma)
            lower = order.initial_segment(gamma)
            kept = [(z, w) for z, w in order.pairs if z in lower and w in lower]
            if fa.issubset(a):
                return FinSet.of(base, (pair(z, w) for z, w in kept))
            a = a | fa
            if set(a) != set(order.initial_segment(gamma + 1)):
                logger.debug('H disagrees at stage %d', gamma + 1)
                return FinSet.of(base, _end_extend(kept, lower, (fa - FinSet.of(n, lower)).members()))
            gamma += 1

    return StepFunctional.from_callable(base, h, name='pwo')


def pwo_domain(x: FinSet) -> frozenset:
    """Field of the relation coded by a set of pair codes."""
    return FinOrder.from_codes(x).domain
