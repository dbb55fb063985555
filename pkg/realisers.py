"""
Covering realisers over finite-depth Cantor space.

A leaf is a binary tuple of length L; its index is read most significant bit first, so
leaf indices follow lexicographic order. The neighbourhood a DepthOracle F attaches to a
leaf f is the cylinder of f̄(F(f)).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional, Sequence

from foundations import FinFun, FinOrder, FinSet, pair, unpair
from induction import PartialityError, StepFunctional, pwo_universe, total_preorders
from kleene import Type2Oracle

logger = logging.getLogger(__name__)

Leaf = tuple


def leaf_of(index: int, depth: int) -> Leaf:
    return tuple(index >> (depth - 1 - i) & 1 for i in range(depth))


def index_of(leaf: Sequence[int]) -> int:
    out = 0
    for bit in leaf:
        out = out << 1 | bit
    return out


@dataclass(frozen=True)
class DepthOracle:
    """F: {0,1}^L → [0..L], tabulated over leaves in lexicographic order."""

    depth: int
    table: tuple

    def __post_init__(self):
        if len(self.table) != 1 << self.depth:
            raise ValueError(f"depth {self.depth} needs {1 << self.depth} values")
        bad = [v for v in self.table if not 0 <= v <= self.depth]
        if bad:
            raise ValueError(f"values {bad[:3]} outside [0..{self.depth}]")

    @classmethod
    def from_function(cls, depth: int, fn: Callable[[Leaf], int]) -> DepthOracle:
        return cls(depth, tuple(fn(leaf_of(i, depth)) for i in range(1 << depth)))

    @classmethod
    def constant(cls, depth: int, value: int) -> DepthOracle:
        return cls(depth, (value,) * (1 << depth))

    @classmethod
    def from_json(cls, data: dict) -> DepthOracle:
        return cls(int(data['L']), tuple(int(v) for v in data['table']))

    def __call__(self, leaf: Sequence[int]) -> int:
        return self.table[index_of(leaf)]

    def leaves(self) -> list[Leaf]:
        return [leaf_of(i, self.depth) for i in range(1 << self.depth)]

    def neighbourhood(self, leaf: Sequence[int]) -> Leaf:
        return tuple(leaf[:self(leaf)])

    def to_json(self) -> dict:
        return {'L': self.depth, 'table': list(self.table)}


@dataclass(frozen=True)
class Cover:
    prefixes: tuple

    def to_json(self) -> list:
        return [''.join(map(str, s)) for s in self.prefixes]


def is_cover(cover: Cover, depth: int) -> bool:
    """Every leaf of the given depth extends one of the prefixes."""
    return all(
        any(leaf[:len(s)] == s for s in cover.prefixes)
        for leaf in (leaf_of(i, depth) for i in range(1 << depth))
    )


# ============================================================================
# HEINE-BOREL AND PINCHERLE
# ============================================================================

def strong_hb(F: DepthOracle) -> list[Leaf]:
    """Leaves whose neighbourhoods cover {0,1}^L, picked greedily in leaf order."""
    covered = [False] * (1 << F.depth)
    chosen = []
    for i, leaf in enumerate(F.leaves()):
        if covered[i]:
            continue
        chosen.append(leaf)
        k = F.table[i]
        base = (i >> (F.depth - k)) << (F.depth - k)
        for j in range(base, base + (1 << (F.depth - k))):
            covered[j] = True
    logger.debug('strong cover of depth %d uses %d leaves', F.depth, len(chosen))
    return chosen


def weak_from_strong(F: DepthOracle, leaves: Sequence[Leaf]) -> Cover:
    """The cylinder codes f̄(F(f)) of a strong cover."""
    return Cover(tuple(F.neighbourhood(leaf) for leaf in leaves))


def _constrained_minima(F: DepthOracle) -> list[int]:
    # For every leaf g: the least F(f) over leaves f with ḡ(F(f)) = f̄(F(f)).
    L = F.depth
    hit = [set() for _ in range(L + 1)]
    for i, k in enumerate(F.table):
        hit[k].add(i >> (L - k))
    return [next(k for k in range(L + 1) if g >> (L - k) in hit[k]) for g in range(1 << L)]


def pincherle(F: DepthOracle) -> int:
    """
    The least N bounding every G with G(g) <= F(f) whenever ḡ(F(f)) = f̄(F(f)).

    Args:
        F: The local-boundedness data

    Returns:
        max over leaves g of the least constraint F puts on g
    """
    return max(_constrained_minima(F))


def pincherle_witness(F: DepthOracle) -> DepthOracle:
    """The largest bound-respecting G; its maximum is pincherle(F)."""
    return DepthOracle(F.depth, tuple(_constrained_minima(F)))


# ============================================================================
# RECOVERING THE PREWELLORDERING OF AN INDUCTION
# ============================================================================

@dataclass(frozen=True)
class CaseResult:
    case: int
    value: int
    well_founded: frozenset = frozenset()
    relation: frozenset = frozenset()


class GFunctional:
    """
    The case analysis behind G_{n,x,y} on sets X of pair codes ⟨z,w⟩ with z, w < B.

    A preordering here is total on its field, so that a finite prefix can refute it.
    Cases one to three depend on X alone and only apply F to stages of its own
    trajectory; the analysis is cached per X.
    """

    def __init__(self, F: StepFunctional, base: int):
        if F.base_size != base:
            raise ValueError(f"functional over {F.base_size}, pair universe over {base}")
        self.F = F
        self.base = base
        self.codes = pwo_universe(base)
        self._totals = total_preorders(base)
        self._analyse = lru_cache(maxsize=None)(self._analysis)

    def _least_bad_prefix(self, mask: int) -> Optional[int]:
        if mask in self._totals:
            return None
        agree = max((((t ^ mask) & -(t ^ mask)).bit_length() - 1 for t in self._totals), default=0)
        return agree + 1

    def _apply(self, members) -> FinSet:
        out = self.F.apply(FinSet.of(self.base, members))
        if out is None:
            raise PartialityError(-1, f"F undefined at {sorted(members)}")
        return set(out)

    def _level_defect(self, level: set, below: set) -> Optional[int]:
        # below is a true stage; level should be exactly what F adds to it.
        image = self._apply(below)
        if below | level == below | image:
            return None
        spurious = sorted(level - image)
        if spurious:
            z = spurious[0]
            fresh = sorted(image - below)
            if not fresh:
                return pair(z, z) + 1
            u = fresh[0]
            return max(pair(z, u), pair(u, z), pair(z, z)) + 1
        w = min(level)
        z = min(image - below - level)
        return pair(z, w) + 1

    def _analysis(self, mask: int) -> CaseResult:
        bad = self._least_bad_prefix(mask)
        if bad is not None:
            return CaseResult(1, bad)
        relation = frozenset(unpair(c) for c in range(self.codes) if mask >> c & 1)
        ranks = FinOrder.from_pairs(relation).ranks()
        field_ = frozenset(ranks)
        below: set = set()
        for r in range(max(ranks.values(), default=-1) + 1):
            level = {v for v, rv in ranks.items() if rv == r}
            value = self._level_defect(level, below)
            if value is not None:
                return CaseResult(2, value, field_, relation)
            below |= level
        growth = sorted(self._apply(field_) - field_)
        if growth:
            z = growth[0]
            return CaseResult(3, pair(z, z) + 1, field_, relation)
        return CaseResult(4, 0, field_, relation)

    def analyse(self, mask: int) -> CaseResult:
        return self._analyse(mask & ((1 << self.codes) - 1))

    def value(self, n: int, x: int, y: int, mask: int) -> int:
        result = self.analyse(mask)
        if result.case < 4:
            return result.value
        if x in result.well_founded and y in result.well_founded and (x, y) in result.relation:
            return n
        return 0

    def threshold(self) -> int:
        """One more than every case 1-3 output over the whole universe."""
        spurious = [self.analyse(mask) for mask in range(1 << self.codes)]
        return 1 + max((r.value for r in spurious if r.case < 4), default=0)

    def as_depth_oracle(self, n: int, x: int, y: int, depth: Optional[int] = None) -> DepthOracle:
        """G_{n,x,y} on leaves whose first pair-code bits present X."""
        depth = self.codes + 1 if depth is None else depth
        if depth < self.codes:
            raise ValueError(f"depth {depth} cannot present {self.codes} pair codes")

        def g(leaf: Leaf) -> int:
            return self.value(n, x, y, sum(bit << c for c, bit in enumerate(leaf[:self.codes])))

        return DepthOracle.from_function(depth, g)


def g_nxy(n: int, x: int, y: int, F: StepFunctional, B: int) -> Type2Oracle:
    """
    G_{n,x,y} as a type-2 oracle reading X as its characteristic prefix over pair codes.

    Only case 4 depends on n: it answers n when x and y lie in the well-founded part of
    ⪯_X and x ⪯_X y, otherwise 0.
    """
    functional = GFunctional(F, B)

    def ask(chi: FinFun) -> int:
        return functional.value(n, x, y, sum(min(v, 1) << c for c, v in enumerate(chi.values)))

    return Type2Oracle.from_callable(functional.codes, ask, name=f'G[{n},{x},{y}]')


def recover_pwo(F: StepFunctional, B: int,
                M: Callable[[DepthOracle], int] = pincherle) -> FinOrder:
    """
    Read the stage prewellordering of F off a Pincherle realiser M.

    x ⪯ y iff M(G_{n,x,y}) >= n, with n one more than any output of cases 1-3 and the
    oracles evaluated at depth one more than the number of pair codes.
    """
    functional = GFunctional(F, B)
    n = functional.threshold()
    pairs = [
        (x, y) for x in range(B) for y in range(B)
        if M(functional.as_depth_oracle(n, x, y)) >= n
    ]
    logger.info('recovered %d pairs with threshold %d', len(pairs), n)
    return FinOrder.from_pairs(pairs)
