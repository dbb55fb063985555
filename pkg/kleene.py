"""
Kleene schemes S1-S9 relative to the induction functional.

Indices are sequence codes: ⟨1⟩, ⟨2,q⟩, ⟨3⟩, ⟨4,e1,e2⟩, ⟨6,e1,τ1,τ2,τ3⟩, ⟨7⟩, ⟨8,2,d⟩, ⟨8,3,d⟩ and ⟨9⟩,
and nothing else; there is no S5. translate_p_to_t builds programs out of parsed nodes
rather than codes, so its output never widens the code space.

Evaluation never raises for semantic failures; it returns a CompResult and, when asked,
the CompFrame tree of the computation. Budgets count one step per scheme dispatch and one
per type-2 oracle call.
"""
from __future__ import annotations

import logging
import re
import sys
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import lru_cache
from typing import Any, Callable, Iterator, Optional, Sequence, Union

from config import config
from foundations import EngineError, FinFun, FinSet, SequenceCodeError, decode_seq, encode_seq
from induction import (
    PartialityError, PointFunctional, StepFunctional, coded_step, e2_functional, iterate,
    pwo_domain, pwo_translate, total_preorders, zero_tree, tree_nodes,
)

logger = logging.getLogger(__name__)


class NotAnIndexError(EngineError):
    """A code outside the nine index shapes."""


class NonTerminatingError(EngineError):
    """A norm was requested for a computation that does not terminate."""


class StageComparisonError(EngineError):
    """Neither computation settled within the comparison budget."""


class SelectionError(EngineError):
    """No candidate argument converges within budget."""


class ComputationTerminates(EngineError):
    """A divergence trace was requested for a terminating computation."""


# ============================================================================
# INDICES
# ============================================================================

class Scheme(Enum):
    S1 = 'S1'
    S2 = 'S2'
    S3 = 'S3'
    S4 = 'S4'
    S6 = 'S6'
    S7 = 'S7'
    S8_2 = 'S8.2'
    S8_3 = 'S8.3'
    S9 = 'S9'


INITIAL_SCHEMES = (Scheme.S1, Scheme.S2, Scheme.S3, Scheme.S7)
MAX_PERMUTATION = 64


@dataclass(frozen=True)
class KIndex:
    """
    A parsed index node.

    parse() only produces plain nodes whose sub-indices are codes. translate_p_to_t()
    produces translated nodes: code is the index they were translated from and the
    sub-indices are themselves programs.
    """

    code: int
    scheme: Scheme
    args: tuple = ()
    translated: bool = False

    @property
    def q(self) -> int:
        return self.args[0]

    @property
    def e1(self) -> int:
        return self.args[0]

    @property
    def e2(self) -> int:
        return self.args[1]

    @property
    def taus(self) -> tuple:
        return self.args[1:]

    @property
    def d(self) -> int:
        return self.args[0]


def _permutation(code: int) -> tuple[int, ...]:
    try:
        tau = decode_seq(code, max_len=MAX_PERMUTATION)
    except SequenceCodeError as exc:
        raise NotAnIndexError(f"permutation code {code}: {exc}") from exc
    if sorted(tau) != list(range(len(tau))):
        raise NotAnIndexError(f"{tau} is not a permutation")
    return tau


@lru_cache(maxsize=65536)
def parse(code: int) -> KIndex:
    """Parse a sequence code into one of the index shapes."""
    try:
        seq = decode_seq(code, max_len=5)
    except SequenceCodeError as exc:
        raise NotAnIndexError(str(exc)) from exc
    if seq == (1,):
        return KIndex(code, Scheme.S1)
    if len(seq) == 2 and seq[0] == 2:
        return KIndex(code, Scheme.S2, (seq[1],))
    if seq == (3,):
        return KIndex(code, Scheme.S3)
    if len(seq) == 3 and seq[0] == 4:
        return KIndex(code, Scheme.S4, seq[1:])
    if len(seq) == 5 and seq[0] == 6:
        return KIndex(code, Scheme.S6, (seq[1],) + tuple(_permutation(t) for t in seq[2:]))
    if seq == (7,):
        return KIndex(code, Scheme.S7)
    if len(seq) == 3 and seq[:2] == (8, 2):
        return KIndex(code, Scheme.S8_2, (seq[2],))
    if len(seq) == 3 and seq[:2] == (8, 3):
        return KIndex(code, Scheme.S8_3, (seq[2],))
    if seq == (9,):
        return KIndex(code, Scheme.S9)
    raise NotAnIndexError(f"{code} decodes to {seq}, not an index")


def s1() -> int:
    return encode_seq([1])


def s2(q: int) -> int:
    return encode_seq([2, q])


def s3() -> int:
    return encode_seq([3])


def s4(e1: int, e2: int) -> int:
    return encode_seq([4, e1, e2])


def s6(e1: int, tau1: Sequence[int] = (), tau2: Sequence[int] = (), tau3: Sequence[int] = ()) -> int:
    return encode_seq([6, e1, encode_seq(tau1), encode_seq(tau2), encode_seq(tau3)])


def s7() -> int:
    return encode_seq([7])


def s8_2(d: int) -> int:
    return encode_seq([8, 2, d])


def s8_3(d: int) -> int:
    return encode_seq([8, 3, d])


def s9() -> int:
    return encode_seq([9])


_HEADS = {
    'S1': Scheme.S1, 'S2': Scheme.S2, 'S3': Scheme.S3, 'S4': Scheme.S4, 'S6': Scheme.S6,
    'S7': Scheme.S7, 'S8.2': Scheme.S8_2, 'S8.3': Scheme.S8_3, 'S9': Scheme.S9,
}
_TOKEN = re.compile(r'\(|\)|[^\s()]+')
_RHO = re.compile(r'^\(\s*rho\s+(.*)\)$', re.S)


def to_sexpr(code: Union[int, KIndex]) -> str:
    """
    Print an index symbolically; codes that are not indices print as integers.

    A translated program prints as (rho E) with E its source index.
    """
    if isinstance(code, KIndex):
        if code.translated:
            return f"(rho {to_sexpr(code.code)})"
        code = code.code
    try:
        idx = parse(code)
    except NotAnIndexError:
        return str(code)
    head = idx.scheme.value
    if idx.scheme is Scheme.S2:
        return f"(S2 {idx.q})"
    if idx.scheme is Scheme.S4:
        return f"(S4 {to_sexpr(idx.e1)} {to_sexpr(idx.e2)})"
    if idx.scheme is Scheme.S6:
        perms = ' '.join('(' + ' '.join(map(str, t)) + ')' for t in idx.taus)
        return f"(S6 {to_sexpr(idx.e1)} {perms})"
    if idx.scheme in (Scheme.S8_2, Scheme.S8_3):
        return f"({head} {to_sexpr(idx.d)})"
    return f"({head})"


def parse_sexpr(text: str) -> int:
    """
    Read a symbolic index such as (S4 (S1) (S3)) into its code.

    Raw integers are accepted wherever an index is expected.
    """
    tokens = _TOKEN.findall(text)
    if not tokens:
        raise NotAnIndexError("empty index expression")
    pos = 0

    def expect(tok):
        nonlocal pos
        if pos >= len(tokens) or tokens[pos] != tok:
            found = tokens[pos] if pos < len(tokens) else 'end of input'
            raise NotAnIndexError(f"expected {tok!r} at token {pos}, found {found!r}")
        pos += 1

    def number():
        nonlocal pos
        if pos >= len(tokens) or not tokens[pos].isdigit():
            raise NotAnIndexError(f"expected a natural number at token {pos}")
        pos += 1
        return int(tokens[pos - 1])

    def perm():
        expect('(')
        out = []
        while pos < len(tokens) and tokens[pos] != ')':
            out.append(number())
        expect(')')
        return out

    def term():
        nonlocal pos
        if pos < len(tokens) and tokens[pos].isdigit():
            return number()
        expect('(')
        head = tokens[pos] if pos < len(tokens) else ''
        if head not in _HEADS:
            raise NotAnIndexError(f"unknown scheme {head!r}")
        pos += 1
        scheme = _HEADS[head]
        if scheme is Scheme.S2:
            code = s2(number())
        elif scheme is Scheme.S4:
            code = s4(term(), term())
        elif scheme is Scheme.S6:
            code = s6(term(), perm(), perm(), perm())
        elif scheme is Scheme.S8_2:
            code = s8_2(term())
        elif scheme is Scheme.S8_3:
            code = s8_3(term())
        elif scheme is Scheme.S9:
            code = s9()
        else:
            code = {'S1': s1, 'S3': s3, 'S7': s7}[head]()
        expect(')')
        return code

    code = term()
    if pos != len(tokens):
        raise NotAnIndexError(f"trailing input at token {pos}")
    return code


def read_index(text: str) -> Union[int, KIndex]:
    """Accept a raw integer code, a symbolic expression, or (rho E) for the translation of E."""
    text = text.strip()
    rho = _RHO.match(text)
    if rho:
        return translate_p_to_t(read_index(rho.group(1)))
    return int(text) if text.isdigit() else parse_sexpr(text)


# ============================================================================
# ARGUMENTS AND RESULTS
# ============================================================================

@dataclass(frozen=True, eq=False)
class Type2Oracle:
    """
    A type-2 argument consulting its input only below support.

    A table is indexed by the bitmask of min(v,1) over the first support values.
    None marks UNDEFINED.
    """

    support: int
    fn: Optional[Callable[[FinFun], Optional[int]]] = None
    table: Optional[tuple] = None
    name: str = ''

    @classmethod
    def from_table(cls, support: int, table: Sequence[Optional[int]], name: str = '') -> Type2Oracle:
        if len(table) != 1 << support:
            raise ValueError(f"oracle table for support {support} needs {1 << support} entries")
        return cls(support, table=tuple(table), name=name)

    @classmethod
    def from_callable(cls, support: int, fn: Callable[[FinFun], Optional[int]], name: str = '') -> Type2Oracle:
        return cls(support, fn=fn, name=name)

    @classmethod
    def from_json(cls, data: dict) -> Type2Oracle:
        return cls.from_table(int(data['support']), data['table'])

    def __call__(self, f: FinFun) -> Optional[int]:
        args = f.prefix(self.support)
        if self.table is not None:
            return self.table[sum(min(v, 1) << i for i, v in enumerate(args))]
        return self.fn(FinFun(args))

    def to_json(self) -> dict:
        if self.table is None:
            raise ValueError(f"oracle {self.name or id(self)} is not table-backed")
        return {'support': self.support, 'table': list(self.table)}

    def __repr__(self):
        return f"Type2Oracle(support={self.support}{', ' + self.name if self.name else ''})"


@dataclass(frozen=True)
class Env:
    """Argument lists F⃗, f⃗, a⃗ and the truncated base size n."""

    oracles: tuple = ()
    funs: tuple = ()
    nums: tuple = ()
    base_size: int = 0

    def with_nums(self, nums: Sequence[int]) -> Env:
        return replace(self, nums=tuple(nums))

    def with_funs(self, funs: Sequence[FinFun]) -> Env:
        return replace(self, funs=tuple(funs))

    def with_oracles(self, oracles: Sequence[Type2Oracle]) -> Env:
        return replace(self, oracles=tuple(oracles))

    @classmethod
    def from_json(cls, data: dict) -> Env:
        return cls(
            tuple(Type2Oracle.from_json(o) for o in data.get('oracles', [])),
            tuple(FinFun.of(f) for f in data.get('funs', [])),
            tuple(int(a) for a in data.get('nums', [])),
            int(data.get('n', 0)),
        )

    def to_json(self) -> dict:
        return {
            'oracles': [o.to_json() for o in self.oracles],
            'funs': [list(f.values) for f in self.funs],
            'nums': list(self.nums),
            'n': self.base_size,
        }


@dataclass(frozen=True)
class CompResult:
    @property
    def is_value(self) -> bool:
        return False

    @property
    def kind(self) -> str:
        return type(self).__name__

    def to_json(self) -> dict:
        out = {'result': self.kind}
        for name, value in vars(self).items():
            out[name] = value.to_json() if isinstance(value, CompResult) else value
        return out


@dataclass(frozen=True)
class Value(CompResult):
    value: int

    @property
    def is_value(self) -> bool:
        return True


@dataclass(frozen=True)
class NotAnIndex(CompResult):
    reason: str


@dataclass(frozen=True)
class OracleUndefined(CompResult):
    site: str


@dataclass(frozen=True)
class PartialInduction(CompResult):
    stage: int
    cause: Optional[CompResult] = None


@dataclass(frozen=True)
class BudgetExceeded(CompResult):
    steps: int


@dataclass(frozen=True)
class TotalityViolation(CompResult):
    point: tuple
    cause: CompResult


@dataclass(eq=False)
class CompFrame:
    """
    One node of a computation tree.

    tag locates the frame inside its parent: the argument a for an oracle application,
    (β, c, h) for an induction query.
    """

    code: Union[int, KIndex]
    env: Env
    index: Optional[KIndex] = None
    children: list = field(default_factory=list)
    result: Optional[CompResult] = None
    norm: Optional[int] = None
    tag: Any = None
    detail: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            'index': to_sexpr(self.code),
            'scheme': self.index.scheme.value if self.index else None,
            'nums': list(self.env.nums),
            'result': self.result.to_json() if self.result else None,
            'norm': self.norm,
        }


# ============================================================================
# EVALUATION
# ============================================================================

class _OutOfBudget(Exception):
    pass


def _ensure_recursion_limit(budget: int):
    wanted = max(config.INDUCT_RECURSION_LIMIT, 4 * budget + 1000)
    if sys.getrecursionlimit() < wanted:
        sys.setrecursionlimit(wanted)


def _code(e: Union[int, KIndex]) -> int:
    return e.code if isinstance(e, KIndex) else int(e)


def _program(e: Union[int, KIndex]) -> Union[int, KIndex]:
    return e if isinstance(e, KIndex) and e.translated else _code(e)


class Evaluator:
    """
    Recursive S1-S9 evaluator building CompFrame trees.

    total=False gives the partial semantics: an induction only consults its argument at
    the points of its own trajectory. total=True demands the argument of every induction
    be defined at every (c, f) with c < n and f ∈ {0,1}^n first; a translated induction
    demands the same of its prewellordering functional H.

    A tape, when given, observes the calculation: tape.log(h) before each induction query,
    tape.ask(query, oracle) in place of each type-2 oracle call.
    """

    def __init__(self, budget: Optional[int] = None, total: bool = False, tape=None):
        self.budget = budget if budget is not None else config.INDUCT_BUDGET
        if self.budget <= 0:
            raise ValueError("budget must be positive")
        self.total = total
        self.tape = tape
        self.steps = 0
        self._dispatch = {
            Scheme.S1: self._s1, Scheme.S2: self._s2, Scheme.S3: self._s3,
            Scheme.S4: self._s4, Scheme.S6: self._s6, Scheme.S7: self._s7,
            Scheme.S8_2: self._s8_2, Scheme.S8_3: self._s8_3, Scheme.S9: self._s9,
        }

    def run(self, e: Union[int, KIndex], env: Env) -> CompFrame:
        _ensure_recursion_limit(self.budget)
        root = CompFrame(_program(e), env)
        try:
            self._eval(root)
        except _OutOfBudget:
            logger.info('budget of %d steps exhausted at %s', self.budget, to_sexpr(root.code))
        return root

    def _tick(self):
        self.steps += 1
        if self.steps > self.budget:
            raise _OutOfBudget()

    def _settle(self, frame: CompFrame, result: CompResult) -> CompResult:
        frame.result = result
        if result.is_value:
            frame.norm = max((c.norm + 1 for c in frame.children), default=0)
        return result

    def _eval(self, frame: CompFrame) -> CompResult:
        try:
            self._tick()
            try:
                idx = frame.code if isinstance(frame.code, KIndex) else parse(frame.code)
            except NotAnIndexError as exc:
                return self._settle(frame, NotAnIndex(str(exc)))
            frame.index = idx
            result = self._dispatch[idx.scheme](idx, frame)
        except _OutOfBudget:
            frame.result = BudgetExceeded(self.budget)
            raise
        return self._settle(frame, result)

    def _sub(self, frame: CompFrame, code: Union[int, KIndex], env: Env, tag: Any = None) -> CompResult:
        child = CompFrame(code, env, tag=tag)
        frame.children.append(child)
        return self._eval(child)

    def _s1(self, idx, frame):
        if not frame.env.nums:
            return NotAnIndex("S1 needs a numeric argument")
        return Value(frame.env.nums[0] + 1)

    def _s2(self, idx, frame):
        return Value(idx.q)

    def _s3(self, idx, frame):
        if not frame.env.nums:
            return NotAnIndex("S3 needs a numeric argument")
        return Value(frame.env.nums[0])

    def _s4(self, idx, frame):
        env = frame.env
        inner = self._sub(frame, idx.e2, env)
        if not inner.is_value:
            return inner
        return self._sub(frame, idx.e1, env.with_nums((inner.value,) + env.nums))

    def _s6(self, idx, frame):
        env = permuted_env(idx, frame.env)
        if env is None:
            return NotAnIndex("S6 permutation lengths do not match the argument lists")
        return self._sub(frame, idx.e1, env)

    def _s7(self, idx, frame):
        env = frame.env
        if not env.funs or not env.nums:
            return NotAnIndex("S7 needs a function and a numeric argument")
        f, a = env.funs[0], env.nums[0]
        if a >= f.length:
            return OracleUndefined(f"f1({a}) outside length {f.length}")
        return Value(f(a))

    def _s8_2(self, idx, frame):
        env = frame.env
        if not env.oracles:
            return NotAnIndex("S8.2 needs a type-2 argument")
        oracle = env.oracles[0]
        values = []
        for a in range(oracle.support):
            r = self._sub(frame, idx.d, env.with_nums((a,) + env.nums), tag=a)
            if not r.is_value:
                return r
            values.append(r.value)
        query = FinFun(tuple(values))
        self._tick()
        answer = self.tape.ask(query, oracle) if self.tape else oracle(query)
        frame.detail.update(query=query, answer=answer)
        if answer is None:
            return OracleUndefined(f"F1 at {query.values}")
        return Value(answer)

    def _s9(self, idx, frame):
        env = frame.env
        if not env.nums:
            return NotAnIndex("S9 needs an index argument")
        d = env.nums[0]
        if idx.translated:
            d = translate_p_to_t(d)
        return self._sub(frame, d, env.with_nums(env.nums[1:]))

    def _s8_3(self, idx, frame):
        env = frame.env
        if not env.nums:
            return NotAnIndex("S8.3 needs the argument b")
        n, b, rest = env.base_size, env.nums[0], env.nums[1:]
        if self.total and idx.translated:
            return self._induct_translated(idx, frame, n, b, rest)
        if self.total:
            return self._induct_total(idx, frame, n, b, rest)
        return self._induct_partial(idx, frame, n, b, rest)

    def _query(self, frame, d, env, rest, h, stage):
        if self.tape:
            self.tape.log(h)
        inner = env.with_funs((h,) + env.funs).with_nums(rest)
        return self._sub(frame, d, inner, tag=(stage, h(0), h))

    def _induct_partial(self, idx, frame, n, b, rest):
        stage_of: dict[int, int] = {}
        failure: list[CompResult] = []

        def g(h: FinFun) -> Optional[int]:
            mask = sum(v << i for i, v in enumerate(h.values[1:]))
            stage = stage_of.setdefault(mask, len(stage_of))
            r = self._query(frame, idx.d, frame.env, rest, h, stage)
            if not r.is_value:
                failure.append(r)
                return None
            return r.value

        trace = iterate(coded_step(n, g))
        frame.detail['stages'] = [s.mask for s in trace.stages]
        if not trace.closed:
            return PartialInduction(trace.failed_at, failure[-1] if failure else None)
        return Value(int(b in trace.result))

    def _induct_total(self, idx, frame, n, b, rest):
        values = {}
        for c in range(n):
            for mask in range(1 << n):
                h = FinSet(n, mask).char().cons(c)
                r = self._query(frame, idx.d, frame.env, rest, h, None)
                if not r.is_value:
                    return TotalityViolation((c, mask), r)
                values[(c, mask)] = r.value

        def step(a: FinSet) -> list[int]:
            return [c for c in range(n) if values[(c, a.mask)] > 0]

        trace = iterate(StepFunctional.from_callable(n, step))
        frame.detail['stages'] = [s.mask for s in trace.stages]
        return Value(int(b in trace.result))

    def _induct_translated(self, idx, frame, n, b, rest):
        answers: dict[tuple, Optional[int]] = {}
        failure: list[CompResult] = []

        def g(h: FinFun) -> Optional[int]:
            if h.values not in answers:
                r = self._query(frame, idx.d, frame.env, rest, h, None)
                answers[h.values] = r.value if r.is_value else None
                if not r.is_value:
                    failure.append(r)
            return answers[h.values]

        H = pwo_translate(coded_step(n, g))
        # H is the identity off prewellorderings
        for mask in sorted(total_preorders(n)):
            try:
                H.apply(FinSet(H.base_size, mask))
            except PartialityError:
                return TotalityViolation((mask,), failure[-1])
        trace = iterate(H)
        frame.detail['stages'] = [s.mask for s in trace.stages]
        return Value(int(b in pwo_domain(trace.result)))


def permuted_env(idx: KIndex, env: Env) -> Optional[Env]:
    """new[i] = old[τ[i]] for each argument list; None when a length does not match."""
    lists = (env.oracles, env.funs, env.nums)
    if any(len(t) != len(xs) for t, xs in zip(idx.taus, lists)):
        return None
    oracles, funs, nums = (tuple(xs[i] for i in t) for t, xs in zip(idx.taus, lists))
    return Env(oracles, funs, nums, env.base_size)


def evaluate(e: Union[int, KIndex], env: Env, budget: Optional[int] = None,
             total: bool = False, tape=None) -> CompFrame:
    """Run one computation and return the root of its frame tree."""
    return Evaluator(budget, total=total, tape=tape).run(e, env)


def eval_p(e: Union[int, KIndex], env: Env, budget: Optional[int] = None) -> CompResult:
    """{e}_p: inductions need their argument only along their own trajectory."""
    return evaluate(e, env, budget).result


def eval_t(e: Union[int, KIndex], env: Env, budget: Optional[int] = None) -> CompResult:
    """{e}_t: inductions need their argument total on all (c, f) first."""
    return evaluate(e, env, budget, total=True).result


def norm(e: Union[int, KIndex], env: Env, budget: Optional[int] = None) -> int:
    """
    Ordinal norm of a terminating computation.

    0 for initial schemes, otherwise one more than the largest norm among the immediate
    subcomputations.
    """
    root = evaluate(e, env, budget)
    if not root.result.is_value:
        raise NonTerminatingError(f"{to_sexpr(root.code)} gives {root.result.kind}")
    return root.norm


def moschovakis_trace(e: Union[int, KIndex], env: Env, budget: Optional[int] = None) -> list[CompFrame]:
    """
    The chain of unsettled frames from the root, always taking the leftmost one.

    Every frame on the chain has only settled (Value) siblings to its left.
    """
    frame = evaluate(e, env, budget)
    if frame.result.is_value:
        raise ComputationTerminates(f"{to_sexpr(frame.code)} = {frame.result.value}")
    chain = [frame]
    while True:
        frame = next((c for c in frame.children if not c.result.is_value), None)
        if frame is None:
            return chain
        chain.append(frame)


# ============================================================================
# TRANSLATION TO TOTAL SEMANTICS
# ============================================================================

Program = Union[int, KIndex]


def fix(step: Callable[[Callable[[int], Program], int], Program]) -> Callable[[int], Program]:
    """Tie the knot: rec(x) = step(rec, x), memoized."""
    @lru_cache(maxsize=None)
    def rec(code: int) -> Program:
        return step(rec, code)
    return rec


def _rho_step(rho: Callable[[int], Program], code: int) -> Program:
    try:
        idx = parse(code)
    except NotAnIndexError:
        return code
    if idx.scheme in INITIAL_SCHEMES:
        return code
    if idx.scheme is Scheme.S4:
        args = (rho(idx.e1), rho(idx.e2))
    elif idx.scheme is Scheme.S6:
        args = (rho(idx.e1),) + idx.taus
    elif idx.scheme is Scheme.S9:
        args = ()
    else:
        args = (rho(idx.d),)
    return replace(idx, args=args, translated=True)


_rho = fix(_rho_step)


def translate_p_to_t(e: Program) -> Program:
    """
    ρ(e): a program whose total-semantics value equals the partial-semantics value of e.

    Every scheme maps homomorphically onto a translated node. A translated induction runs
    the induction of the prewellordering functional H tracking F_G, and the total semantics
    checks H, rather than G, at every point first; H only consults G along its trajectory.
    A translated S9 applies ρ to the index it receives at run time. Initial schemes and
    codes that are not indices are their own translation.
    """
    if isinstance(e, KIndex) and e.translated:
        raise NotAnIndexError(f"{to_sexpr(e)} is already translated")
    return _rho(_code(e))


# ============================================================================
# STAGE COMPARISON
# ============================================================================

Computation = tuple  # (code, Env)
_DONE = 'done'
_STUCK = 'stuck'


class _Unfolding:
    """Lazily generated immediate subcomputations of one computation."""

    def __init__(self, generator: Iterator[Computation]):
        self._gen = generator
        self.children: list[Computation] = []
        self.outcome: Optional[str] = None

    def child(self, i: int) -> Optional[Computation]:
        while len(self.children) <= i and self.outcome is None:
            try:
                self.children.append(next(self._gen))
            except StopIteration as stop:
                self.outcome = stop.value
        return self.children[i] if i < len(self.children) else None


class StageComparator:
    """
    Decide ‖c1‖ <= ‖c2‖ by simultaneous unfolding when at least one side terminates.

    ‖c1‖ <= ‖c2‖ iff every child x of c1 has ‖x‖ < ‖c2‖, and ‖x‖ < ‖c2‖ iff some child y of
    c2 has ‖x‖ <= ‖y‖. A child's value is only computed once the comparison has shown it
    to lie below a terminating computation, so the divergent side is never run to the end.
    """

    def __init__(self, budget: Optional[int] = None, results: Optional[dict] = None):
        self.remaining = budget if budget is not None else config.INDUCT_COMPARE_BUDGET
        self._results = results if results is not None else {}
        self._unfoldings: dict[Computation, _Unfolding] = {}
        self._leq_memo: dict[tuple, bool] = {}
        self._strategies = {
            (Scheme.S4, Scheme.S8_3): self._composition_vs_induction,
            (Scheme.S8_2, Scheme.S8_3): self._oracle_vs_induction,
            (Scheme.S8_3, Scheme.S8_3): self._induction_vs_induction,
        }

    def result(self, comp: Computation) -> CompResult:
        if comp not in self._results:
            frame = evaluate(comp[0], comp[1], max(self.remaining, 1))
            self.remaining -= frame_steps(frame)
            if isinstance(frame.result, BudgetExceeded):
                raise StageComparisonError(f"comparison budget exhausted at {to_sexpr(comp[0])}")
            self._results[comp] = frame.result
        return self._results[comp]

    def diverges(self, comp: Computation) -> bool:
        return not self.result(comp).is_value

    def _unfold(self, comp: Computation) -> _Unfolding:
        if comp not in self._unfoldings:
            self._unfoldings[comp] = _Unfolding(self._children(comp))
        return self._unfoldings[comp]

    def _children(self, comp: Computation):
        code, env = comp
        try:
            idx = parse(code)
        except NotAnIndexError:
            return _STUCK
        if idx.scheme in INITIAL_SCHEMES or idx.scheme is Scheme.S9 and not env.nums:
            return _DONE if self.result(comp).is_value else _STUCK
        if idx.scheme is Scheme.S4:
            inner = (idx.e2, env)
            yield inner
            if self.diverges(inner):
                return _STUCK
            outer = (idx.e1, env.with_nums((self.result(inner).value,) + env.nums))
            yield outer
            return _STUCK if self.diverges(outer) else _DONE
        if idx.scheme in (Scheme.S6, Scheme.S9):
            if idx.scheme is Scheme.S6:
                child_env = permuted_env(idx, env)
                if child_env is None:
                    return _STUCK
                child = (idx.e1, child_env)
            else:
                child = (env.nums[0], env.with_nums(env.nums[1:]))
            yield child
            return _STUCK if self.diverges(child) else _DONE
        if idx.scheme is Scheme.S8_2:
            if not env.oracles:
                return _STUCK
            oracle = env.oracles[0]
            values = []
            for a in range(oracle.support):
                child = (idx.d, env.with_nums((a,) + env.nums))
                yield child
                if self.diverges(child):
                    return _STUCK
                values.append(self.result(child).value)
            return _STUCK if oracle(FinFun(tuple(values))) is None else _DONE
        if not env.nums:
            return _STUCK
        n, rest = env.base_size, env.nums[1:]
        a = FinSet.empty(n)
        while True:
            new = []
            for c in range(n):
                child = (idx.d, Env(env.oracles, (a.char().cons(c),) + env.funs, rest, n))
                yield child
                if self.diverges(child):
                    return _STUCK
                if self.result(child).value > 0:
                    new.append(c)
            step = FinSet.of(n, new)
            if step.issubset(a):
                return _DONE
            a = a | step

    def leq(self, c1: Computation, c2: Computation) -> bool:
        key = (c1, c2)
        if key not in self._leq_memo:
            if c1 == c2:
                self._leq_memo[key] = True
            else:
                strategy = self._strategies.get((_scheme(c1), _scheme(c2)), self._generic)
                self._leq_memo[key] = strategy(c1, c2)
        return self._leq_memo[key]

    def lt(self, x: Computation, c2: Computation, start: int = 0) -> bool:
        """‖x‖ < ‖c2‖, trying c2's children from start onward, then the earlier ones."""
        u2 = self._unfold(c2)
        for i in range(start, len(u2.children)):
            if self.leq(x, u2.children[i]):
                return True
        for i in range(min(start, len(u2.children))):
            if self.leq(x, u2.children[i]):
                return True
        i = len(u2.children)
        while (y := u2.child(i)) is not None:
            if self.leq(x, y):
                return True
            i += 1
        if u2.outcome == _STUCK:
            return not self.diverges(x)
        return False

    def _finish(self, u1: _Unfolding, c2: Computation) -> bool:
        if u1.outcome == _STUCK:
            return self.diverges(c2)
        return True

    def _generic(self, c1: Computation, c2: Computation) -> bool:
        u1 = self._unfold(c1)
        i = 0
        while (x := u1.child(i)) is not None:
            if not self.lt(x, c2):
                return False
            i += 1
        return self._finish(u1, c2)

    def _dominator(self, x: Computation, c2: Computation, default: int = 0) -> int:
        """Position of the first unfolded child of c2 already known to dominate x."""
        children = self._unfold(c2).children
        return next((j for j, y in enumerate(children) if self._leq_memo.get((x, y))), default)

    def _composition_vs_induction(self, c1: Computation, c2: Computation) -> bool:
        """
        Two rounds against the queries of an induction.

        Round one places the inner computation below some query y of c2. Round two places
        the outer computation, searching c2 from y onward before wrapping around.
        """
        u1 = self._unfold(c1)
        inner = u1.child(0)
        if inner is None:
            return self._finish(u1, c2)
        if not self.lt(inner, c2):
            logger.debug('composition exceeds induction in round 1')
            return False
        anchor = self._dominator(inner, c2)
        outer = u1.child(1)
        if outer is not None and not self.lt(outer, c2, start=anchor):
            logger.debug('composition exceeds induction in round 2')
            return False
        u1.child(2)
        return self._finish(u1, c2)

    def _oracle_vs_induction(self, c1: Computation, c2: Computation) -> bool:
        """
        Dominate the oracle's arguments one by one, stepping through the induction.

        The cursor into c2 only moves forward: each argument is first matched against the
        query that dominated its predecessor and the ones after it.
        """
        u1 = self._unfold(c1)
        cursor = 0
        a = 0
        while (x := u1.child(a)) is not None:
            if not self.lt(x, c2, start=cursor):
                logger.debug('oracle argument %d exceeds the induction', a)
                return False
            cursor = self._dominator(x, c2, cursor)
            a += 1
        return self._finish(u1, c2)

    def _induction_vs_induction(self, c1: Computation, c2: Computation) -> bool:
        """
        Interleave two inductions stage by stage.

        A query of c1 is matched against the part of c2 unfolded so far, latest stage first,
        and c2 is only unfolded further when none of those dominates it.
        """
        u1 = self._unfold(c1)
        u2 = self._unfold(c2)
        width = max(c1[1].base_size, 1)
        i = 0
        while (x := u1.child(i)) is not None:
            seen = len(u2.children)
            if not any(self.leq(x, y) for y in reversed(u2.children[:seen])) \
                    and not self.lt(x, c2, start=seen):
                logger.debug('stage %d of the first induction is not dominated', i // width)
                return False
            i += 1
        return self._finish(u1, c2)


def _scheme(comp: Computation) -> Optional[Scheme]:
    try:
        return parse(comp[0]).scheme
    except NotAnIndexError:
        return None


def frame_steps(frame: CompFrame) -> int:
    """Steps a finished evaluation used: one per frame plus one per oracle call."""
    total, stack = 0, [frame]
    while stack:
        f = stack.pop()
        total += 1 + ('answer' in f.detail)
        stack.extend(f.children)
    return total


def stage_compare(c1: Computation, c2: Computation, budget: Optional[int] = None) -> int:
    """1 iff ‖c1‖ <= ‖c2‖; at least one side has to terminate."""
    c1 = (_code(c1[0]), c1[1])
    c2 = (_code(c2[0]), c2[1])
    return int(StageComparator(budget).leq(c1, c2))


def gandy_select(e: Union[int, KIndex], env: Env, n: Optional[int] = None,
                 budget: Optional[int] = None) -> int:
    """
    Select k < n with {e}(k, a⃗) convergent.

    Candidate k wins when its norm is strictly below every earlier candidate's and at most
    every later candidate's; a comparison that runs out of budget disqualifies k.
    """
    code = _code(e)
    n = env.base_size if n is None else n
    candidates = [(code, env.with_nums((k,) + env.nums)) for k in range(n)]
    results: dict = {}
    for k, ck in enumerate(candidates):
        try:
            wins = all(
                StageComparator(budget, results).leq(ck, cj) if j > k
                else not StageComparator(budget, results).leq(cj, ck)
                for j, cj in enumerate(candidates) if j != k
            )
            if wins and StageComparator(budget, results).result(ck).is_value:
                logger.debug('candidate %d selected', k)
                return k
        except StageComparisonError as exc:
            logger.debug('candidate %d rejected: %s', k, exc)
    raise SelectionError(f"no k < {n} converges for {to_sexpr(code)}")


# ============================================================================
# REDUCTIONS AS INDICES
# ============================================================================

def reduction_index() -> int:
    """⟨8,3,⟨8,2,⟨7⟩⟩⟩: the induction of a step functional supplied as the first oracle."""
    return s8_3(s8_2(s7()))


def step_oracle(F: StepFunctional) -> Type2Oracle:
    """The oracle O with O(c⌢χ_A) = [c ∈ F(A)], support n+1."""
    n = F.base_size

    def ask(h: FinFun) -> Optional[int]:
        out = F.apply(FinSet.of(n, (i for i in range(n) if h(i + 1))))
        return None if out is None else int(h(0) in out)

    return Type2Oracle.from_callable(n + 1, ask, name=F.name or 'step')


def ind_by_index(F: StepFunctional, b: int, budget: Optional[int] = None) -> CompResult:
    """[b ∈ 𝓘(F)] computed by running reduction_index()."""
    env = Env((step_oracle(F),), (), (b,), F.base_size)
    return eval_p(reduction_index(), env, budget)


def e2_oracle(f: FinFun) -> Type2Oracle:
    return step_oracle(e2_functional(f))


def suslin_oracle(tree: Callable[[int], int], branching: int, depth: int) -> tuple[Type2Oracle, int, bool]:
    """
    Oracle for the capture induction of the zero tree, its size, and whether the root is in T_f.

    Su(f) = 1 iff the root lies in T_f and the induction leaves it uncaptured; the root has
    index 0 among the nodes.
    """
    nodes = tree_nodes(branching, depth)
    index = {s: i for i, s in enumerate(nodes)}
    t_f = zero_tree(tree, branching, depth)
    children = {
        s: [index[s + (x,)] for x in range(branching) if s + (x,) in t_f]
        for s in t_f if len(s) < depth
    }
    step = StepFunctional.from_callable(
        len(nodes),
        lambda w: [index[s] for s, kids in children.items() if all(k in w for k in kids)],
        name='suslin',
    )
    return step_oracle(step), len(nodes), () in t_f


def single_valued_oracle(G: PointFunctional) -> Type2Oracle:
    """Oracle for H_G(A) = A ∪ {G(A)}; H_G is undefined where G leaves [0..n)."""
    n = G.base_size

    def step(a: FinSet) -> Optional[list[int]]:
        value = G.apply(a)
        if value in a:
            return list(a)
        if not 0 <= value < n:
            logger.debug('G left the base at %s with %d', a, value)
            return None
        return list(a) + [value]

    return step_oracle(StepFunctional.from_callable(n, step, name='single-valued'))
