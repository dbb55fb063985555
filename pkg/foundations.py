"""Finite combinatorial substrate: bitsets, sequence codes, finite functions and orders."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import isqrt
from typing import Iterable, Optional


class EngineError(Exception):
    """Root of every error raised by the engine."""


class SequenceCodeError(EngineError, ValueError):
    """A natural number that does not code a finite sequence."""


class BaseSizeMismatch(EngineError, ValueError):
    """Two FinSets over different truncated bases were combined."""


class NotWellFoundedError(EngineError, ValueError):
    """Rank requested for an element outside the well-founded part."""


# ============================================================================
# SEQUENCE CODING
# ============================================================================

def pair(a: int, b: int) -> int:
    """Cantor pairing ⟨a,b⟩ = (a+b)(a+b+1)/2 + b."""
    return (a + b) * (a + b + 1) // 2 + b


def unpair(z: int) -> tuple[int, int]:
    """Inverse of pair()."""
    if z < 0:
        raise SequenceCodeError(f"negative code {z}")
    w = (isqrt(8 * z + 1) - 1) // 2
    b = z - w * (w + 1) // 2
    return w - b, b


def encode_seq(xs: Iterable[int]) -> int:
    """
    Code a finite sequence of naturals.

    ⟨x1,...,xk⟩ = pair(k, pair(x1, pair(x2, ... pair(x(k-1), xk)...))) and ⟨⟩ = 0.

    Args:
        xs: The naturals to code

    Returns:
        The sequence code
    """
    xs = list(xs)
    if any(x < 0 for x in xs):
        raise SequenceCodeError(f"negative entry in {xs}")
    if not xs:
        return 0
    body = xs[-1]
    for x in reversed(xs[:-1]):
        body = pair(x, body)
    return pair(len(xs), body)


@lru_cache(maxsize=65536)
def _decode(code: int) -> tuple[int, ...]:
    k, body = unpair(code)
    if k == 0:
        if body != 0:
            raise SequenceCodeError(f"{code} is not a sequence code")
        return ()
    out = []
    for _ in range(k - 1):
        x, body = unpair(body)
        out.append(x)
    out.append(body)
    return tuple(out)


def decode_seq(code: int, max_len: Optional[int] = None) -> tuple[int, ...]:
    """
    Decode a sequence code.

    Args:
        code: The natural number to decode
        max_len: Refuse codes announcing more entries than this

    Returns:
        The coded tuple
    """
    if code < 0:
        raise SequenceCodeError(f"negative code {code}")
    if max_len is not None and unpair(code)[0] > max_len:
        raise SequenceCodeError(f"{code} codes a sequence longer than {max_len}")
    return _decode(code)


def binary_sequences(max_len: int) -> list[tuple[int, ...]]:
    """All binary sequences of length <= max_len in lexicographic order."""
    out: list[tuple[int, ...]] = [()]
    frontier: list[tuple[int, ...]] = [()]
    for _ in range(max_len):
        frontier = [s + (bit,) for s in frontier for bit in (0, 1)]
        out.extend(frontier)
    return sorted(out)


# ============================================================================
# FINITE SETS AND FUNCTIONS
# ============================================================================

@dataclass(frozen=True)
class FinSet:
    """A subset of [0..base_size) held as an integer bitmask."""

    base_size: int
    mask: int = 0

    def __post_init__(self):
        if self.base_size < 0 or self.mask < 0 or self.mask >> self.base_size:
            raise ValueError(f"mask {self.mask:#x} does not fit base {self.base_size}")

    @classmethod
    def empty(cls, n: int) -> FinSet:
        return cls(n, 0)

    @classmethod
    def full(cls, n: int) -> FinSet:
        return cls(n, (1 << n) - 1)

    @classmethod
    def of(cls, n: int, members: Iterable[int]) -> FinSet:
        mask = 0
        for x in members:
            if not 0 <= x < n:
                raise ValueError(f"{x} outside base {n}")
            mask |= 1 << x
        return cls(n, mask)

    def members(self) -> tuple[int, ...]:
        return tuple(i for i in range(self.base_size) if self.mask >> i & 1)

    def __iter__(self):
        return iter(self.members())

    def __len__(self):
        return self.mask.bit_count()

    def __contains__(self, x: int) -> bool:
        return 0 <= x < self.base_size and bool(self.mask >> x & 1)

    def _same_base(self, other: FinSet):
        if self.base_size != other.base_size:
            raise BaseSizeMismatch(f"base {self.base_size} vs {other.base_size}")

    def __or__(self, other: FinSet) -> FinSet:
        self._same_base(other)
        return FinSet(self.base_size, self.mask | other.mask)

    def __and__(self, other: FinSet) -> FinSet:
        self._same_base(other)
        return FinSet(self.base_size, self.mask & other.mask)

    def __sub__(self, other: FinSet) -> FinSet:
        self._same_base(other)
        return FinSet(self.base_size, self.mask & ~other.mask)

    def issubset(self, other: FinSet) -> bool:
        self._same_base(other)
        return self.mask & ~other.mask == 0

    def add(self, x: int) -> FinSet:
        return self | FinSet.of(self.base_size, [x])

    def least(self) -> Optional[int]:
        if not self.mask:
            return None
        return (self.mask & -self.mask).bit_length() - 1

    def char(self) -> FinFun:
        """Characteristic function over the whole base."""
        return FinFun(tuple(self.mask >> i & 1 for i in range(self.base_size)))

    def prefix(self, k: int) -> tuple[int, ...]:
        """The characteristic prefix of length k (bits in increasing element order)."""
        return tuple(self.mask >> i & 1 for i in range(k))

    def hex(self) -> str:
        return hex(self.mask)

    def __repr__(self):
        return f"FinSet({self.base_size}, {set(self.members()) or '{}'})"


@dataclass(frozen=True)
class FinFun:
    """A total function on [0..length) with natural values."""

    values: tuple[int, ...]

    @classmethod
    def of(cls, values: Iterable[int]) -> FinFun:
        return cls(tuple(int(v) for v in values))

    @property
    def length(self) -> int:
        return len(self.values)

    def __call__(self, i: int) -> int:
        if not 0 <= i < len(self.values):
            raise IndexError(f"argument {i} outside [0..{len(self.values)})")
        return self.values[i]

    def prefix(self, k: int) -> tuple[int, ...]:
        if not 0 <= k <= len(self.values):
            raise IndexError(f"prefix length {k} outside [0..{len(self.values)}]")
        return self.values[:k]

    def cons(self, a: int) -> FinFun:
        """a⌢f."""
        return FinFun((a,) + self.values)

    def __repr__(self):
        return f"FinFun{self.values}"


# ============================================================================
# ORDERS AND PREWELLORDERINGS
# ============================================================================

@dataclass(frozen=True)
class FinOrder:
    """
    A finite relation ⪯ on a domain of codes with its strict part ≺.

    The strict part is derived (x ≺ y iff x ⪯ y and not y ⪯ x) unless the order was
    declared by its strict relation directly with from_strict().
    """

    domain: frozenset
    pairs: frozenset
    strict_pairs: Optional[frozenset] = None

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[int, int]], domain: Optional[Iterable[int]] = None) -> FinOrder:
        pairs = frozenset((int(z), int(w)) for z, w in pairs)
        if domain is None:
            domain = {z for z, _ in pairs} | {w for _, w in pairs}
        return cls(frozenset(domain), pairs)

    @classmethod
    def from_strict(cls, domain: Iterable[int], strict: Iterable[tuple[int, int]]) -> FinOrder:
        strict = frozenset((int(z), int(w)) for z, w in strict)
        return cls(frozenset(domain), strict | {(x, x) for x in domain}, strict)

    @classmethod
    def from_codes(cls, codes: Iterable[int]) -> FinOrder:
        """Read a set of pair codes ⟨z,w⟩ as the relation z ⪯ w."""
        return cls.from_pairs(unpair(c) for c in codes)

    @classmethod
    def from_ranks(cls, ranks: dict[int, int]) -> FinOrder:
        """The prewellordering x ⪯ y iff rank(x) <= rank(y)."""
        return cls.from_pairs(
            ((x, y) for x in ranks for y in ranks if ranks[x] <= ranks[y]),
            domain=ranks,
        )

    @property
    def strict(self) -> frozenset:
        if self.strict_pairs is not None:
            return self.strict_pairs
        return frozenset((z, w) for z, w in self.pairs if (w, z) not in self.pairs)

    def leq(self, x: int, y: int) -> bool:
        return (x, y) in self.pairs

    def lt(self, x: int, y: int) -> bool:
        return (x, y) in self.strict

    def is_preorder(self) -> bool:
        if any((x, x) not in self.pairs for x in self.domain):
            return False
        succ: dict[int, set[int]] = {}
        for z, w in self.pairs:
            succ.setdefault(z, set()).add(w)
        return all((z, v) in self.pairs for z, w in self.pairs for v in succ.get(w, ()))

    def is_prewellordering(self) -> bool:
        if not self.is_preorder():
            return False
        if any((x, y) not in self.pairs and (y, x) not in self.pairs
               for x in self.domain for y in self.domain):
            return False
        return self.well_founded() == self.domain

    def _ranks(self) -> dict[int, int]:
        preds: dict[int, set[int]] = {x: set() for x in self.domain}
        for z, w in self.strict:
            if z in self.domain and w in self.domain:
                preds[w].add(z)
        ranks: dict[int, int] = {}
        while True:
            ready = [x for x in self.domain if x not in ranks and preds[x] <= ranks.keys()]
            if not ready:
                return ranks
            for x in ready:
                ranks[x] = max((ranks[p] + 1 for p in preds[x]), default=0)

    def well_founded(self) -> frozenset:
        """Elements all of whose ≺-descending chains are finite."""
        return frozenset(self._ranks())

    def rank_of(self, x: int) -> int:
        ranks = self._ranks()
        if x not in ranks:
            raise NotWellFoundedError(f"{x} is not in the well-founded part")
        return ranks[x]

    def ranks(self) -> dict[int, int]:
        return dict(sorted(self._ranks().items()))

    def initial_segment(self, beta: int) -> frozenset:
        """R_β: the elements of rank below β."""
        return frozenset(x for x, r in self._ranks().items() if r < beta)

    def to_codes(self) -> frozenset:
        return frozenset(pair(z, w) for z, w in self.pairs)

    def to_json(self) -> dict:
        return {
            'domain': sorted(self.domain),
            'pairs': sorted([z, w] for z, w in self.pairs),
        }


def well_founded_part(order: FinOrder) -> FinSet:
    """
    Least fixed point adding z once every strict predecessor of z is in.

    Args:
        order: Any FinOrder; it need not be a preorder

    Returns:
        The well-founded part over base max(domain)+1
    """
    base = max(order.domain, default=-1) + 1
    return FinSet.of(base, order.well_founded())


def rank_of(order: FinOrder, x: int) -> int:
    """Rank of x: 1 + max rank of its strict predecessors, 0 when minimal."""
    return order.rank_of(x)
