"""
Hyper-sequential calculations and the procedures built from them.

A calculation is a string of query entries (f, a, d): the query f, its answer a (or the LOG
mark STAR) and a denotation d naming the entry in the ordered representation. Blocks are
the intervals (start, end, level) of the blocking; level counts the blocks strictly around
the interval, so the whole string has level 0.

Denotations are pair codes:
    composition        inner entries d -> ⟨0,d⟩, outer entries d -> ⟨1,d⟩
    oracle application entries of argument c d -> ⟨c+1,d⟩, then the query itself at ⟨0,0⟩
    induction          a LOG head (h, STAR) at ⟨d1,0⟩, the query's entries d -> ⟨d1,d+1⟩,
                       d1 = ⟨x+1,c⟩ with x the least element entering at the next stage,
                       d1 = ⟨0,c⟩ at the closing stage
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Iterable, NamedTuple, Optional, Sequence, Union

from config import config
from foundations import EngineError, FinFun, FinSet, pair, unpair
from induction import PartialityError, StepFunctional, lfp
from kleene import (
    CompFrame, Env, KIndex, NotAnIndexError, Scheme, Type2Oracle, evaluate, parse,
    permuted_env, to_sexpr,
)
from utils import run_parallel

logger = logging.getLogger(__name__)

STAR = '*'
Answer = Union[int, str]


class NotAPrefixError(EngineError):
    """A prefix that no member of the family extends."""

    def __init__(self, position: int, message: Optional[str] = None):
        self.position = position
        super().__init__(message or f"not a prefix of the procedure at position {position}")


class CalculationError(EngineError):
    """A calculation asked of a computation that does not produce one."""


# ============================================================================
# STRINGS
# ============================================================================

@dataclass(frozen=True)
class QEntry:
    query: FinFun
    answer: Answer
    denotation: Optional[int] = None

    @property
    def is_log(self) -> bool:
        return self.answer == STAR

    @property
    def qa(self) -> tuple:
        return self.query.values, self.answer

    def to_json(self) -> dict:
        return {'f': list(self.query.values), 'a': self.answer, 'd': self.denotation}

    @classmethod
    def from_json(cls, data: dict) -> QEntry:
        answer = data['a'] if data['a'] == STAR else int(data['a'])
        d = data.get('d')
        return cls(FinFun.of(data['f']), answer, None if d is None else int(d))


@dataclass(frozen=True)
class CalcString:
    entries: tuple = ()
    value: Optional[int] = None
    blocks: tuple = ()

    def __len__(self):
        return len(self.entries)

    def qa(self) -> list[tuple]:
        return [e.qa for e in self.entries]

    def denotations(self) -> list[Optional[int]]:
        return [e.denotation for e in self.entries]

    def to_json(self) -> dict:
        return {
            'entries': [e.to_json() for e in self.entries],
            'value': self.value,
            'blocks': [list(b) for b in self.blocks],
        }

    @classmethod
    def from_json(cls, data: dict) -> CalcString:
        return cls(
            tuple(QEntry.from_json(e) for e in data.get('entries', [])),
            data.get('value'),
            tuple(tuple(b) for b in data.get('blocks', [])),
        )


def matches(s: CalcString, F: Type2Oracle) -> bool:
    """F answers every non-LOG query of s the way s records."""
    return all(F(e.query) == e.answer for e in s.entries if not e.is_log)


def _qa_of(prefix) -> list[tuple]:
    if isinstance(prefix, CalcString):
        return prefix.qa()
    out = []
    for item in prefix:
        if isinstance(item, QEntry):
            out.append(item.qa)
        else:
            q, a = item
            out.append((q.values if isinstance(q, FinFun) else tuple(q), a))
    return out


# ============================================================================
# BLOCKINGS
# ============================================================================

def _blocks(extents: Iterable[tuple[int, int]], length: int) -> tuple:
    spans = {(0, length)} | {(s, e) for s, e in extents if e > s}
    return tuple(sorted(
        (s, e, sum(1 for s2, e2 in spans if (s2, e2) != (s, e) and s2 <= s and e <= e2))
        for s, e in spans
    ))


def check_blocking(calc: CalcString) -> bool:
    """Whole-string block present, blocks nested or disjoint, one level per extent."""
    blocks = calc.blocks
    if (0, len(calc)) not in {(s, e) for s, e, _ in blocks}:
        return False
    by_extent: dict[tuple, set] = {}
    for s, e, level in blocks:
        by_extent.setdefault((s, e), set()).add(level)
        if not 0 <= s <= e <= len(calc):
            return False
    if any(len(levels) > 1 for levels in by_extent.values()):
        return False
    for s1, e1, _ in blocks:
        for s2, e2, _ in blocks:
            overlap = max(s1, s2) < min(e1, e2)
            nested = s1 <= s2 and e2 <= e1 or s2 <= s1 and e1 <= e2
            if overlap and not nested:
                return False
    return _blocks(((s, e) for s, e, _ in blocks), len(calc)) == tuple(sorted(blocks))


def position_levels(calc: CalcString) -> list[int]:
    """Number of blocks containing each position."""
    return [sum(1 for s, e, _ in calc.blocks if s <= i < e) for i in range(len(calc))]


def limsup_block_level(calc: CalcString, start: int = 0) -> int:
    """Largest block nesting met at or after start; an empty tail counts the whole string."""
    return max(position_levels(calc)[start:], default=1)


def prefix_levels(calc: CalcString) -> list[int]:
    """limsup_block_level of each prefix, in order of length."""
    out, best = [], 1
    for level in position_levels(calc):
        best = max(best, level)
        out.append(best)
    return out


def diverges_by_blocking(calc: CalcString, threshold: Optional[int] = None) -> bool:
    """An unfinished calculation whose blocks nest at least threshold deep."""
    threshold = config.INDUCT_DIVERGENCE_LEVEL if threshold is None else threshold
    return calc.value is None and limsup_block_level(calc) >= threshold


# ============================================================================
# COMPILING COMPUTATIONS
# ============================================================================

Piece = tuple  # (list[QEntry], list[(start, end)])


def _retag(piece: Piece, fn) -> Piece:
    entries, extents = piece
    return [replace(q, denotation=fn(q.denotation)) for q in entries], extents


def _concat(pieces: Iterable[Piece]) -> Piece:
    entries, extents = [], []
    for es, xs in pieces:
        extents.extend((s + len(entries), e + len(entries)) for s, e in xs)
        entries.extend(es)
    return entries, extents


def _least_new(before: int, after: int) -> int:
    new = after & ~before
    return (new & -new).bit_length() - 1


def _flatten(frame: CompFrame) -> Piece:
    idx = frame.index
    if idx is None:
        return [], []
    if idx.scheme is Scheme.S4:
        return _concat(
            _retag(_flatten(child), lambda d, t=child_no: pair(t, d))
            for child_no, child in enumerate(frame.children)
        )
    if idx.scheme in (Scheme.S6, Scheme.S9):
        return _flatten(frame.children[0]) if frame.children else ([], [])
    if idx.scheme is Scheme.S8_2:
        entries, extents = _concat(
            _retag(_flatten(child), lambda d, c=child.tag: pair(c + 1, d))
            for child in frame.children
        )
        if frame.detail.get('answer') is not None:
            entries.append(QEntry(frame.detail['query'], frame.detail['answer'], pair(0, 0)))
        return entries, extents
    if idx.scheme is Scheme.S8_3:
        return _flatten_induction(frame)
    return [], []


def _flatten_induction(frame: CompFrame) -> Piece:
    masks = {}
    for child in frame.children:
        stage, _, h = child.tag
        masks.setdefault(stage, sum(v << i for i, v in enumerate(h.values[1:])))
    pieces, stage_spans, position = [], [], 0
    for child in frame.children:
        stage, c, h = child.tag
        if stage + 1 in masks:
            d1 = pair(_least_new(masks[stage], masks[stage + 1]) + 1, c)
        else:
            d1 = pair(0, c)
        head = ([QEntry(h, STAR, pair(d1, 0))], [])
        piece = _concat([head, _retag(_flatten(child), lambda d, d1=d1: pair(d1, d + 1))])
        if not stage_spans or stage_spans[-1][0] != stage:
            stage_spans.append([stage, position, position])
        position += len(piece[0])
        stage_spans[-1][2] = position
        pieces.append(piece)
    entries, extents = _concat(pieces)
    return entries, extents + [(s, e) for _, s, e in stage_spans]


def _with_oracle(env: Env, F: Optional[Type2Oracle]) -> Env:
    return env if F is None else env.with_oracles((F,) + tuple(env.oracles))


def compile_computation(e: Union[int, KIndex], env: Env, F: Optional[Type2Oracle] = None,
                        budget: Optional[int] = None) -> CalcString:
    """
    The calculation of a terminating partial-semantics computation.

    Args:
        e: The index
        env: Arguments; F, when given, is put in front of the type-2 arguments
        F: The oracle whose answers the calculation records
        budget: Evaluation budget

    Returns:
        The entries with denotations, the blocks and the value
    """
    code = e.code if isinstance(e, KIndex) else int(e)
    root = evaluate(code, _with_oracle(env, F), budget)
    if not root.result.is_value:
        raise CalculationError(f"{to_sexpr(code)} gives {root.result.kind}")
    entries, extents = _flatten(root)
    return CalcString(tuple(entries), root.result.value, _blocks(extents, len(entries)))


def trace_calculation(e: Union[int, KIndex], env: Env, F: Optional[Type2Oracle] = None,
                      budget: Optional[int] = None) -> CalcString:
    """The part of the calculation performed before the computation stopped; value None unless it terminated."""
    code = e.code if isinstance(e, KIndex) else int(e)
    root = evaluate(code, _with_oracle(env, F), budget)
    entries, extents = _flatten(root)
    value = root.result.value if root.result.is_value else None
    return CalcString(tuple(entries), value, _blocks(extents, len(entries)))


def i_procedure_calc(G: Type2Oracle, b: int) -> CalcString:
    """
    The calculation of the induction procedure on G.

    Stage β asks a⌢χ(A_β) for a < n with n = support-1 and receives G's answer;
    each stage is one block.
    """
    n = G.support - 1
    a_set = FinSet.empty(n)
    entries, extents = [], []
    stage = 0
    while True:
        start = len(entries)
        answers = []
        for c in range(n):
            h = a_set.char().cons(c)
            answer = G(h)
            if answer is None:
                raise PartialityError(stage, f"G undefined at {h.values}")
            answers.append((h, answer))
        new = FinSet.of(n, (c for c, (_, v) in enumerate(answers) if v > 0))
        closing = new.issubset(a_set)
        x = None if closing else (new - a_set).least()
        for c, (h, answer) in enumerate(answers):
            entries.append(QEntry(h, answer, pair(0 if closing else x + 1, c)))
        extents.append((start, len(entries)))
        if closing:
            break
        a_set = a_set | new
        stage += 1
    return CalcString(tuple(entries), int(b in a_set), _blocks(extents, len(entries)))


# ============================================================================
# REPRESENTATIONS AND THE CHECKER
# ============================================================================

@dataclass(frozen=True)
class Representation:
    """Denotations D, a strict order on D, the entry at each denotation and the value."""

    D: frozenset
    order: frozenset
    entries: dict = field(default_factory=dict)
    value: Optional[int] = None

    def sequence(self) -> Optional[list[tuple]]:
        """The (d, f, a) in ≺ order, or None when ≺ is not a strict total order on D."""
        if set(self.entries) != set(self.D):
            return None
        preds = {d: 0 for d in self.D}
        for lo, hi in self.order:
            if lo not in preds or hi not in preds:
                return None
            preds[hi] += 1
        ds = sorted(self.D, key=lambda d: preds[d])
        if self.order != {(ds[i], ds[j]) for i in range(len(ds)) for j in range(i + 1, len(ds))}:
            return None
        return [(d, tuple(self.entries[d][0]), self.entries[d][1]) for d in ds]

    def to_json(self) -> dict:
        return {
            'D': sorted(self.D),
            'order': sorted([lo, hi] for lo, hi in self.order),
            'entries': {str(d): {'f': list(f), 'a': a} for d, (f, a) in sorted(self.entries.items())},
            'value': self.value,
        }

    @classmethod
    def from_json(cls, data: dict) -> Representation:
        entries = {
            int(d): (tuple(int(v) for v in e['f']), e['a'] if e['a'] == STAR else int(e['a']))
            for d, e in data.get('entries', {}).items()
        }
        return cls(
            frozenset(int(d) for d in data.get('D', [])),
            frozenset((int(lo), int(hi)) for lo, hi in data.get('order', [])),
            entries,
            data.get('value'),
        )


def representation_of(calc: CalcString) -> Representation:
    ds = calc.denotations()
    return Representation(
        frozenset(ds),
        frozenset((ds[i], ds[j]) for i in range(len(ds)) for j in range(i + 1, len(ds))),
        {e.denotation: (e.query.values, e.answer) for e in calc.entries},
        calc.value,
    )


def _rename(rep: Representation, old: int, new: int) -> Representation:
    def swap(d):
        return new if d == old else d
    return Representation(
        frozenset(swap(d) for d in rep.D),
        frozenset((swap(lo), swap(hi)) for lo, hi in rep.order),
        {swap(d): v for d, v in rep.entries.items()},
        rep.value,
    )


def mutations(rep: Representation, rng, count: int = 10) -> list[tuple[str, Representation]]:
    """
    Single edits of a representation: a fresh denotation, one query value bumped, or a
    LOG mark traded for an answer (or back).
    """
    if not rep.D:
        return []
    ds = sorted(rep.D)
    out = []
    for _ in range(count):
        d = rng.choice(ds)
        f, a = rep.entries[d]
        kind = rng.choice(('denotation', 'query', 'answer'))
        if kind == 'denotation':
            fresh = max(ds) + 1 + rng.randrange(8)
            out.append((f'denotation {d} -> {fresh}', _rename(rep, d, fresh)))
        elif kind == 'query' and f:
            i = rng.randrange(len(f))
            bumped = f[:i] + (f[i] + 1,) + f[i + 1:]
            out.append((f'query at {d}[{i}] bumped', replace(rep, entries={**rep.entries, d: (bumped, a)})))
        else:
            flipped = 0 if a == STAR else STAR
            out.append((f'answer at {d} -> {flipped}', replace(rep, entries={**rep.entries, d: (f, flipped)})))
    return out


@dataclass(frozen=True)
class Accept:
    value: int

    def to_json(self) -> dict:
        return {'result': 'Accept', 'value': self.value}


@dataclass(frozen=True)
class Reject:
    reason: str

    def to_json(self) -> dict:
        return {'result': 'Reject', 'reason': self.reason}


class _Rejected(Exception):
    pass


class _Checker:
    """Replays a computation against representation entries, reading answers from them."""

    def __init__(self, budget: int):
        self.budget = budget
        self.steps = 0

    def fail(self, message: str):
        raise _Rejected(message)

    def check(self, code: int, env: Env, items: list[tuple]) -> int:
        self.steps += 1
        if self.steps > self.budget:
            self.fail(f"checking budget of {self.budget} steps exhausted")
        try:
            idx = parse(code)
        except NotAnIndexError as e:
            self.fail(f"not an index: {e}")
        scheme = idx.scheme
        if scheme in (Scheme.S1, Scheme.S2, Scheme.S3, Scheme.S7):
            if items:
                self.fail(f"{scheme.value}: initial computation with {len(items)} entries")
            return self._initial(idx, env)
        if scheme is Scheme.S4:
            return self._composition(idx, env, items)
        if scheme is Scheme.S6:
            inner = permuted_env(idx, env)
            if inner is None:
                self.fail("S6: permutation lengths do not match")
            return self.check(idx.e1, inner, items)
        if scheme is Scheme.S9:
            if not env.nums:
                self.fail("S9: no index argument")
            return self.check(env.nums[0], env.with_nums(env.nums[1:]), items)
        if scheme is Scheme.S8_2:
            return self._oracle(idx, env, items)
        return self._induction(idx, env, items)

    def _initial(self, idx: KIndex, env: Env) -> int:
        scheme = idx.scheme
        if scheme is Scheme.S2:
            return idx.q
        if not env.nums:
            self.fail(f"{scheme.value}: no numeric argument")
        if scheme is Scheme.S1:
            return env.nums[0] + 1
        if scheme is Scheme.S3:
            return env.nums[0]
        if not env.funs or env.nums[0] >= env.funs[0].length:
            self.fail("S7: function argument missing or out of range")
        return env.funs[0](env.nums[0])

    def _composition(self, idx: KIndex, env: Env, items: list[tuple]) -> int:
        inner, outer = [], []
        for d, f, a in items:
            tag, rest = unpair(d)
            if tag == 0 and not outer:
                inner.append((rest, f, a))
            elif tag == 1:
                outer.append((rest, f, a))
            else:
                self.fail(f"S4: entry tagged {tag} out of place")
        v = self.check(idx.e2, env, inner)
        return self.check(idx.e1, env.with_nums((v,) + env.nums), outer)

    def _oracle(self, idx: KIndex, env: Env, items: list[tuple]) -> int:
        if not items:
            self.fail("S8.2: no terminal query")
        d, g, answer = items[-1]
        if d != pair(0, 0) or answer == STAR:
            self.fail("S8.2: last entry is not the terminal query ⟨0,0⟩")
        groups: list[list] = [[] for _ in g]
        last = 0
        for d, f, a in items[:-1]:
            tag, rest = unpair(d)
            c = tag - 1
            if not 0 <= c < len(g) or c < last:
                self.fail(f"S8.2: entry tagged {tag} out of place")
            last = c
            groups[c].append((rest, f, a))
        for c, group in enumerate(groups):
            v = self.check(idx.d, env.with_nums((c,) + env.nums), group)
            if v != g[c]:
                self.fail(f"S8.2: argument {c} computes {v}, query records {g[c]}")
        return answer

    def _induction(self, idx: KIndex, env: Env, items: list[tuple]) -> int:
        if not env.nums:
            self.fail("S8.3: no argument b")
        n, b, rest = env.base_size, env.nums[0], env.nums[1:]
        a_set = FinSet.empty(n)
        pos = 0
        while True:
            heads = []
            members = []
            for c in range(n):
                h = a_set.char().cons(c)
                if pos >= len(items):
                    self.fail(f"S8.3: query {h.values} missing")
                d, f, a = items[pos]
                d1, tail = unpair(d)
                if a != STAR or tail != 0 or f != h.values:
                    self.fail(f"S8.3: expected LOG head {h.values} at entry {pos}")
                pos += 1
                body = []
                while pos < len(items):
                    bd1, btail = unpair(items[pos][0])
                    if bd1 != d1 or btail == 0:
                        break
                    body.append((btail - 1, items[pos][1], items[pos][2]))
                    pos += 1
                inner = env.with_funs((h,) + env.funs).with_nums(rest)
                if self.check(idx.d, inner, body) > 0:
                    members.append(c)
                heads.append(d1)
            new = FinSet.of(n, members)
            closing = new.issubset(a_set)
            for c, d1 in enumerate(heads):
                want = pair(0, c) if closing else pair((new - a_set).least() + 1, c)
                if d1 != want:
                    self.fail(f"S8.3: head for {c} denotes {d1}, stage forces {want}")
            if closing:
                break
            a_set = a_set | new
        if pos != len(items):
            self.fail(f"S8.3: {len(items) - pos} entries after the closing stage")
        return int(b in a_set)


def validate_representation(e: Union[int, KIndex], env: Env, rep: Representation,
                            budget: Optional[int] = None) -> Union[Accept, Reject]:
    """
    Check a representation against a computation and force its value.

    The type-2 arguments in env only fix the argument count; every answer comes from the
    representation.
    """
    code = e.code if isinstance(e, KIndex) else int(e)
    items = rep.sequence()
    if items is None:
        return Reject("order is not a strict total order on D")
    answers: dict[tuple, Answer] = {}
    for _, f, a in items:
        if a != STAR and answers.setdefault(f, a) != a:
            return Reject(f"query {f} answered both {answers[f]} and {a}")
    checker = _Checker(budget if budget is not None else config.INDUCT_BUDGET)
    try:
        value = checker.check(code, env, items)
    except _Rejected as exc:
        logger.debug('representation rejected: %s', exc)
        return Reject(str(exc))
    if rep.value is not None and rep.value != value:
        return Reject(f"value {rep.value} recorded, {value} forced")
    return Accept(value)


# ============================================================================
# PROCEDURE FAMILIES
# ============================================================================

class NextQuery(NamedTuple):
    query: FinFun
    is_log: bool


class FinalValue(NamedTuple):
    value: int


class CounterexamplePair(NamedTuple):
    first: CalcString
    second: CalcString
    position: int


@dataclass(frozen=True)
class ProcedureFamily:
    """
    A finite set of calculations, optionally generated from an index.

    When index is set, NEXT replays the evaluator against the prefix, and members are the
    calculations over the oracles the family was materialized from.
    """

    members: tuple = ()
    index: Optional[int] = None
    env: Optional[Env] = None
    oracles: tuple = ()

    @classmethod
    def from_index(cls, e: Union[int, KIndex], env: Env,
                   oracles: Sequence[Optional[Type2Oracle]] = (None,),
                   budget: Optional[int] = None, max_workers: Optional[int] = None) -> ProcedureFamily:
        code = e.code if isinstance(e, KIndex) else int(e)

        def compile_one(F):
            try:
                return compile_computation(code, env, F, budget)
            except CalculationError as exc:
                logger.debug('oracle %r left out: %s', F, exc)
                return None

        members = []
        for _, calc in run_parallel(compile_one, list(oracles), max_workers=max_workers):
            if calc is not None and calc not in members:
                members.append(calc)
        logger.info('family of %s: %d members from %d oracles', to_sexpr(code), len(members), len(oracles))
        return cls(tuple(members), code, env, tuple(oracles))

    def agreeing(self, prefix) -> list[CalcString]:
        qa = _qa_of(prefix)
        return [m for m in self.members if len(m) >= len(qa) and m.qa()[:len(qa)] == qa]

    def to_json(self) -> dict:
        return {'members': [m.to_json() for m in self.members]}


def consistency_check(family: Union[ProcedureFamily, Iterable[CalcString]]) -> Union[bool, CounterexamplePair]:
    """
    Any two members first differ at an equal query with distinct proper answers.

    Returns:
        True, or the first violating pair with the position where it goes wrong
    """
    members = family.members if isinstance(family, ProcedureFamily) else tuple(family)
    unique = list(dict.fromkeys(members))
    for i, s in enumerate(unique):
        qs = s.qa()
        for t in unique[i + 1:]:
            qt = t.qa()
            k = next((j for j in range(min(len(qs), len(qt))) if qs[j] != qt[j]), None)
            if k is None:
                return CounterexamplePair(s, t, min(len(qs), len(qt)))
            (fs, as_), (ft, at) = qs[k], qt[k]
            if fs != ft or STAR in (as_, at):
                return CounterexamplePair(s, t, k)
    return True


def _answer(F: Optional[Type2Oracle], nxt: NextQuery) -> Optional[Answer]:
    if nxt.is_log:
        return STAR
    if F is None:
        raise CalculationError(f"no oracle to answer {nxt.query.values}")
    return F(nxt.query)


class _Halt(Exception):
    def __init__(self, nxt: NextQuery):
        self.nxt = nxt


class _ReplayTape:
    """
    Feeds a prefix to the evaluator.

    Past the end of the prefix it halts, or, when an oracle is given, keeps going along
    that oracle's answers and halts only where the oracle is undefined.
    """

    def __init__(self, prefix: list[tuple], F: Optional[Type2Oracle] = None, extend: bool = False):
        self.prefix = prefix
        self.F = F
        self.extend = extend
        self.pos = 0

    def _take(self, query: FinFun, is_log: bool) -> Answer:
        if self.pos == len(self.prefix):
            nxt = NextQuery(query, is_log)
            if not self.extend:
                raise _Halt(nxt)
            answer = _answer(self.F, nxt)
            if answer is None:
                raise _Halt(nxt)
            self.prefix.append((query.values, answer))
        q, a = self.prefix[self.pos]
        if q != query.values or (a == STAR) != is_log:
            raise NotAPrefixError(self.pos)
        self.pos += 1
        return a

    def log(self, h: FinFun):
        self._take(h, True)

    def ask(self, query: FinFun, oracle) -> int:
        return self._take(query, False)


def _shape(family: ProcedureFamily, F: Optional[Type2Oracle] = None) -> Optional[Type2Oracle]:
    if F is not None:
        return F
    return next((o for o in family.oracles if o is not None), None)


def replay_calculation(family: ProcedureFamily, prefix=(), F: Optional[Type2Oracle] = None) -> Optional[CalcString]:
    """
    The calculation of the family's index that starts with prefix and continues along F.

    Denotations and blocks come from the replayed computation itself, so F need not be
    one of the oracles the family was built from. None when F is undefined at a query
    the calculation reaches.
    """
    if family.index is None:
        raise CalculationError("replay needs a family generated from an index")
    qa = _qa_of(prefix)
    tape = _ReplayTape(qa, F, extend=True)
    try:
        root = evaluate(family.index, _with_oracle(family.env, _shape(family, F)), tape=tape)
    except _Halt as halt:
        logger.debug('oracle undefined at %s', halt.nxt.query.values)
        return None
    if not root.result.is_value:
        raise CalculationError(f"replay gives {root.result.kind}")
    if tape.pos != len(qa):
        raise NotAPrefixError(tape.pos, f"prefix runs {len(qa) - tape.pos} entries past the end")
    entries, extents = _flatten(root)
    return CalcString(tuple(entries), root.result.value, _blocks(extents, len(entries)))


def next_of(family: ProcedureFamily, prefix) -> Union[NextQuery, FinalValue]:
    """NEXT: the query after prefix with its LOG flag, or the value once prefix is complete."""
    qa = _qa_of(prefix)
    if family.index is not None:
        tape = _ReplayTape(qa)
        try:
            root = evaluate(family.index, _with_oracle(family.env, _shape(family)), tape=tape)
        except _Halt as halt:
            return halt.nxt
        if not root.result.is_value:
            raise CalculationError(f"replay gives {root.result.kind}")
        if tape.pos != len(qa):
            raise NotAPrefixError(tape.pos, f"prefix runs {len(qa) - tape.pos} entries past the end")
        return FinalValue(root.result.value)
    members = family.agreeing(qa)
    if not members:
        raise NotAPrefixError(len(qa))
    done = next((m for m in members if len(m) == len(qa)), None)
    if done is not None:
        return FinalValue(done.value)
    entry = members[0].entries[len(qa)]
    return NextQuery(entry.query, entry.is_log)


def denote(family: ProcedureFamily, prefix, position: int) -> Optional[int]:
    """DENOTE: the denotation at position once prefix settles it, else None."""
    members = family.agreeing(prefix)
    if not members:
        raise NotAPrefixError(len(_qa_of(prefix)))
    if position >= len(_qa_of(prefix)):
        return None
    ds = {m.entries[position].denotation for m in members}
    return ds.pop() if len(ds) == 1 else None


def block_of(family: ProcedureFamily, prefix) -> tuple:
    """BLOCK: the blocks closed within prefix on which every agreeing member concurs."""
    members = family.agreeing(prefix)
    if not members:
        raise NotAPrefixError(len(_qa_of(prefix)))
    k = len(_qa_of(prefix))
    common = set.intersection(*({b for b in m.blocks if b[1] <= k} for m in members))
    return tuple(sorted(common))


def redenote(family: ProcedureFamily, prefix, level: int) -> dict[int, int]:
    """REDENOTE: final denotations of the level-m block closing at the end of prefix."""
    k = len(_qa_of(prefix))
    block = next((b for b in block_of(family, prefix) if b[1] == k and b[2] == level), None)
    if block is None:
        return {}
    return {p: denote(family, prefix, p) for p in range(block[0], block[1])}


def delay_at(family: ProcedureFamily, calc: CalcString, beta: int) -> int:
    """
    The least γ such that agreeing with calc on positions up to β+γ forces the
    denotations up to β.
    """
    if not 0 <= beta < len(calc):
        raise IndexError(f"position {beta} outside the calculation")
    want = calc.denotations()[:beta + 1]
    for gamma in range(len(calc) - beta):
        agreeing = family.agreeing(calc.entries[:beta + gamma + 1])
        if all(m.denotations()[:beta + 1] == want for m in agreeing):
            return gamma
    return len(calc) - beta - 1


# ============================================================================
# HONEST HISTORIES
# ============================================================================

@dataclass(frozen=True)
class HistoryUniverse:
    """
    Atoms coding calculation prefixes: ('entry', d, f, a), ('order', d, d'), ('value', c).

    The atoms are those of the family's members and, for an index family, of the
    calculation along F, numbered in order of first appearance.
    """

    atoms: tuple
    index: dict

    @classmethod
    def of(cls, family: ProcedureFamily, F: Optional[Type2Oracle] = None) -> HistoryUniverse:
        calcs = list(family.members)
        if F is not None and family.index is not None:
            own = replay_calculation(family, (), F)
            if own is not None and own not in calcs:
                calcs.append(own)
        atoms: dict = {}
        for m in calcs:
            ds = m.denotations()
            for i, e in enumerate(m.entries):
                atoms.setdefault(('entry', e.denotation, e.query.values, e.answer), len(atoms))
                for d in ds[:i]:
                    atoms.setdefault(('order', d, e.denotation), len(atoms))
            atoms.setdefault(('value', m.value), len(atoms))
        return cls(tuple(atoms), atoms)

    @property
    def size(self) -> int:
        return len(self.atoms)

    def encode(self, atoms: Iterable[tuple]) -> FinSet:
        mask = 0
        for atom in atoms:
            if atom not in self.index:
                raise CalculationError(f"history atom {atom} outside the coded universe")
            mask |= 1 << self.index[atom]
        return FinSet(self.size, mask)

    def decode(self, x: FinSet) -> list[tuple]:
        return [self.atoms[i] for i in x]

    def prefix(self, x: FinSet) -> tuple[Optional[list[QEntry]], set]:
        """The entries X codes in order, or None when X codes no string; and its values."""
        atoms = self.decode(x)
        entries = [a for a in atoms if a[0] == 'entry']
        order = {(a[1], a[2]) for a in atoms if a[0] == 'order'}
        values = {a[1] for a in atoms if a[0] == 'value'}
        ds = [a[1] for a in entries]
        if len(set(ds)) != len(ds):
            return None, values
        by_d = {a[1]: a for a in entries}
        preds = {d: sum(1 for lo, hi in order if hi == d) for d in ds}
        seq = sorted(ds, key=lambda d: preds[d])
        if order != {(seq[i], seq[j]) for i in range(len(seq)) for j in range(i + 1, len(seq))}:
            return None, values
        return [QEntry(FinFun(by_d[d][2]), by_d[d][3], d) for d in seq], values


_STAY = 'stay'


def _member_step(family: ProcedureFamily, F: Optional[Type2Oracle], seq: list[QEntry]) -> Union[None, str, QEntry, FinalValue]:
    """The entry after seq in a family given by its members alone."""
    if not any(m.entries[:len(seq)] == tuple(seq) for m in family.members):
        return _STAY
    nxt = next_of(family, seq)
    if isinstance(nxt, FinalValue):
        return nxt
    answer = _answer(F, nxt)
    if answer is None:
        return None
    k = len(seq)
    ahead = [e.qa for e in seq] + [(nxt.query.values, answer)]
    while (d := denote(family, ahead, k)) is None:
        further = next_of(family, ahead)
        if isinstance(further, FinalValue):
            raise CalculationError(f"denotation at {k} never settles")
        a = _answer(F, further)
        if a is None:
            return None
        ahead.append((further.query.values, a))
    return QEntry(nxt.query, answer, d)


def _replay_step(family: ProcedureFamily, F: Optional[Type2Oracle], seq: list[QEntry]) -> Union[None, str, QEntry, FinalValue]:
    """The entry after seq, reading the calculation along F through to its end."""
    try:
        calc = replay_calculation(family, seq, F)
    except NotAPrefixError:
        return _STAY
    if calc is None:
        return None
    if calc.entries[:len(seq)] != tuple(seq):
        return _STAY
    if len(calc) == len(seq):
        return FinalValue(calc.value)
    return calc.entries[len(seq)]


def gamma_of(family: ProcedureFamily, F: Optional[Type2Oracle]) -> StepFunctional:
    """
    Γ_F over the history universe of the family and F.

    X coding no prefix of a calculation, or a finished one, is left as it is. Otherwise the
    next entry is added with its denotation, reading ahead along F's answers until the
    denotation settles; a complete prefix gets its value. A family generated from an index
    reads ahead by replaying the index, so F may lie outside the family.
    """
    universe = HistoryUniverse.of(family, F)
    advance = _replay_step if family.index is not None else _member_step

    def step(x: FinSet) -> Optional[FinSet]:
        seq, values = universe.prefix(x)
        if seq is None or values:
            return x
        nxt = advance(family, F, seq)
        if nxt is None:
            return None
        if nxt is _STAY:
            return x
        if isinstance(nxt, FinalValue):
            return x | universe.encode([('value', nxt.value)])
        new = [('entry', nxt.denotation, nxt.query.values, nxt.answer)]
        new += [('order', e.denotation, nxt.denotation) for e in seq]
        return x | universe.encode(new)

    return StepFunctional.from_callable(universe.size, step, name='gamma')


def honest_history(family: ProcedureFamily, F: Optional[Type2Oracle]) -> FinSet:
    """The least fixed point of Γ_F: the coded history of the calculation on F."""
    return lfp(gamma_of(family, F))


def decode_history(family: ProcedureFamily, x: FinSet, F: Optional[Type2Oracle] = None) -> CalcString:
    universe = HistoryUniverse.of(family, F)
    seq, values = universe.prefix(x)
    if seq is None or len(values) != 1:
        raise CalculationError("history does not code a finished calculation")
    entries = tuple(seq)
    calcs = list(family.members)
    if family.index is not None:
        calcs.append(replay_calculation(family, entries, F))
    blocks = next((m.blocks for m in calcs if m is not None and m.entries == entries), ())
    return CalcString(entries, values.pop(), blocks)
