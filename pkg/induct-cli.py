#!/usr/bin/env python3
"""
Induction engine CLI - run inductions, Kleene computations, calculations and realisers.

Usage:
    ./induct-cli.py <command> [subcommand] [options]

Commands:
    induct      - Iterate a step functional to its closure stage
    eval        - Evaluate an index under partial or total semantics
    procedure   - Calculations: compile, validate, honest, delay, consistency
    realiser    - Covering realisers: hb, pincherle, recover
    selftest    - Run the small exhaustive sweeps in parallel

Every JSON output carries "version": 1. Indices are given as integers or in the
symbolic form, e.g. "(S4 (S1) (S3))".
"""

import argparse
import os
import random
import sys
from enum import IntEnum

from tabulate import tabulate

# Add project directory to path
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from config import config
from foundations import EngineError, FinFun
from induction import PartialityError, StepFunctional, e2_via_ind, iterate, stage_order
from kleene import (
    ComputationTerminates, Env, NotAnIndexError, Type2Oracle, eval_p, evaluate,
    moschovakis_trace, read_index, to_sexpr, translate_p_to_t,
)
from procedures import (
    Accept, CalculationError, ProcedureFamily, Representation, compile_computation,
    consistency_check, decode_history, delay_at, honest_history, mutations,
    representation_of, validate_representation,
)
from realisers import (
    DepthOracle, is_cover, pincherle, pincherle_witness, recover_pwo, strong_hb,
    weak_from_strong,
)
from utils import InputError, dump_json, enumerate_tables, load_input, run_parallel
import battery


class ExitCode(IntEnum):
    OK = 0
    FAILURE = 1
    BAD_INPUT = 2
    PARTIALITY = 3
    NOT_AN_INDEX = 4
    ORACLE_UNDEFINED = 5
    PARTIAL_INDUCTION = 6
    BUDGET_EXCEEDED = 7
    TOTALITY_VIOLATION = 8


RESULT_EXIT = {
    'Value': ExitCode.OK,
    'NotAnIndex': ExitCode.NOT_AN_INDEX,
    'OracleUndefined': ExitCode.ORACLE_UNDEFINED,
    'PartialInduction': ExitCode.PARTIAL_INDUCTION,
    'BudgetExceeded': ExitCode.BUDGET_EXCEEDED,
    'TotalityViolation': ExitCode.TOTALITY_VIOLATION,
}


def emit(args, payload, rows=None, headers=None):
    """Print a payload as JSON, or as a table when --format table is chosen and rows exist."""
    if args.format == 'table' and rows is not None:
        print(tabulate(rows, headers=headers, tablefmt='simple'))
        return
    text = dump_json(payload, args.out)
    if args.out:
        print(f"Wrote {args.out}")
    else:
        print(text)


def load_env(args):
    """The argument environment from --env, with --n overriding its base size."""
    env = Env.from_json(load_input(args.env, 'env')) if args.env else Env()
    if args.n is not None:
        env = Env(env.oracles, env.funs, env.nums, args.n)
    return env


def load_oracle(path):
    data = load_input(path, 'oracle')
    return Type2Oracle.from_json(data)


def parse_index(text):
    try:
        return read_index(text)
    except NotAnIndexError as e:
        raise InputError(f"index {text!r}: {e}")


def oracle_family(support, values):
    return [Type2Oracle.from_table(support, t, name=f'table{i}')
            for i, t in enumerate(enumerate_tables(1 << support, values))]


# ============================================================================
# INDUCT COMMAND
# ============================================================================

def cmd_induct(args):
    """Iterate a step functional given as {"n": .., "table": [..]}."""
    data = load_input(args.file, 'step_functional')
    F = StepFunctional.from_json(data)
    trace = iterate(F)

    payload = {
        'n': trace.base_size,
        'stages': [s.hex() for s in trace.stages],
        'closed': trace.closed,
        'alpha': trace.alpha,
    }
    if trace.failed_at is not None:
        payload['failed_at'] = trace.failed_at
    rows = [[beta, s.hex(), sorted(s.members())] for beta, s in enumerate(trace.stages)]
    emit(args, payload, rows, ['Stage', 'Mask', 'Members'])

    if not trace.closed:
        print(f"Error: step functional undefined at stage {trace.failed_at}", file=sys.stderr)
        sys.exit(ExitCode.PARTIALITY)


# ============================================================================
# EVAL COMMAND
# ============================================================================

def cmd_eval(args):
    """Evaluate an index; --total selects the total semantics."""
    code = parse_index(args.index)
    env = load_env(args)
    root = evaluate(code, env, args.budget, total=args.total)
    result = root.result

    payload = {
        'index': to_sexpr(code),
        'semantics': 'total' if args.total else 'partial',
        **result.to_json(),
    }
    if args.norm and result.is_value:
        payload['norm'] = root.norm
    if args.trace:
        try:
            chain = moschovakis_trace(code, env, args.budget)
            payload['trace'] = [frame.to_json() for frame in chain]
        except ComputationTerminates:
            payload['trace'] = []

    rows = [[k, v] for k, v in payload.items() if k != 'trace']
    emit(args, payload, rows, ['Field', 'Value'])
    exit_code = RESULT_EXIT[result.kind]
    if exit_code:
        sys.exit(exit_code)


# ============================================================================
# PROCEDURE COMMANDS
# ============================================================================

def cmd_procedure_compile(args):
    """Compile the calculation of a terminating computation."""
    code = parse_index(args.index)
    F = load_oracle(args.oracle) if args.oracle else None
    calc = compile_computation(code, load_env(args), F, args.budget)
    payload = {
        'index': to_sexpr(code),
        'calculation': calc.to_json(),
        'representation': representation_of(calc).to_json(),
    }
    rows = [[i, list(e.query.values), e.answer, e.denotation] for i, e in enumerate(calc.entries)]
    emit(args, payload, rows, ['Pos', 'Query', 'Answer', 'Denotation'])


def cmd_procedure_validate(args):
    """Check a representation file against an index; Reject is a result, not an error."""
    code = parse_index(args.index)
    env = load_env(args)
    rep = Representation.from_json(load_input(args.repr, 'representation'))
    verdict = validate_representation(code, env, rep, args.budget)
    payload = {'index': to_sexpr(code), **verdict.to_json()}

    if args.fuzz:
        rng = random.Random(args.seed)
        edits = mutations(rep, rng, args.fuzz)
        accepted = [desc for desc, m in edits
                    if isinstance(validate_representation(code, env, m, args.budget), Accept)]
        payload['fuzz'] = {'mutations': len(edits), 'accepted': accepted}

    emit(args, payload, [[k, v] for k, v in payload.items()], ['Field', 'Value'])


def _family(args, code, env):
    oracles = oracle_family(args.support, args.values) if args.support is not None else [None]
    return ProcedureFamily.from_index(code, env, oracles, args.budget)


def cmd_procedure_honest(args):
    """Run Γ_F to its closure and decode the history."""
    code = parse_index(args.index)
    env = load_env(args)
    F = load_oracle(args.oracle) if args.oracle else None
    family = ProcedureFamily.from_index(code, env, [F], args.budget)
    history = honest_history(family, F)
    calc = decode_history(family, history, F)
    payload = {
        'index': to_sexpr(code),
        'history': history.hex(),
        'atoms': len(history),
        'value': calc.value,
        'calculation': calc.to_json(),
    }
    emit(args, payload, [[k, v] for k, v in payload.items() if k != 'calculation'], ['Field', 'Value'])


def cmd_procedure_delay(args):
    """Delays of one member of the family over all oracle tables."""
    code = parse_index(args.index)
    env = load_env(args)
    family = _family(args, code, env)
    if not family.members:
        raise CalculationError("no oracle in the family makes the computation terminate")
    F = load_oracle(args.oracle) if args.oracle else None
    calc = compile_computation(code, env, F, args.budget) if F else family.members[0]
    delays = [delay_at(family, calc, beta) for beta in range(len(calc))]
    payload = {'index': to_sexpr(code), 'members': len(family.members), 'delays': delays}
    rows = [[i, e.denotation, d] for i, (e, d) in enumerate(zip(calc.entries, delays))]
    emit(args, payload, rows, ['Pos', 'Denotation', 'Delay'])


def cmd_procedure_consistency(args):
    """Branching consistency of the family over all oracle tables."""
    code = parse_index(args.index)
    family = _family(args, code, load_env(args))
    verdict = consistency_check(family)
    payload = {'index': to_sexpr(code), 'members': len(family.members), 'consistent': verdict is True}
    if verdict is not True:
        payload['counterexample'] = {
            'first': verdict.first.to_json(),
            'second': verdict.second.to_json(),
            'position': verdict.position,
        }
    emit(args, payload, [[k, v] for k, v in payload.items() if k != 'counterexample'], ['Field', 'Value'])


# ============================================================================
# REALISER COMMANDS
# ============================================================================

def _depth_oracle(path):
    return DepthOracle.from_json(load_input(path, 'depth_oracle'))


def cmd_realiser_hb(args):
    """A strong cover and the weak cover read off it."""
    F = _depth_oracle(args.file)
    leaves = strong_hb(F)
    cover = weak_from_strong(F, leaves)
    payload = {
        'L': F.depth,
        'leaves': [''.join(map(str, leaf)) for leaf in leaves],
        'cover': cover.to_json(),
        'is_cover': is_cover(cover, F.depth),
    }
    rows = [[''.join(map(str, leaf)), s or '()'] for leaf, s in zip(leaves, cover.to_json())]
    emit(args, payload, rows, ['Leaf', 'Cylinder'])


def cmd_realiser_pincherle(args):
    F = _depth_oracle(args.file)
    payload = {'L': F.depth, 'N': pincherle(F)}
    if args.witness:
        payload['witness'] = pincherle_witness(F).to_json()
    emit(args, payload, [[k, v] for k, v in payload.items() if k != 'witness'], ['Field', 'Value'])


def cmd_realiser_recover(args):
    """Recover the stage prewellordering from the Pincherle realiser."""
    data = load_input(args.file, 'step_functional')
    F = StepFunctional.from_json(data)
    recovered = recover_pwo(F, F.base_size)
    expected = stage_order(F)
    payload = {
        'B': F.base_size,
        'recovered': recovered.to_json(),
        'stage_order': expected.to_json(),
        'agree': recovered == expected,
    }
    rows = [[x, y, recovered.leq(x, y), expected.leq(x, y)]
            for x in range(F.base_size) for y in range(F.base_size)]
    emit(args, payload, rows, ['x', 'y', 'Recovered', 'Stages'])


# ============================================================================
# SELFTEST COMMAND
# ============================================================================

def _check_e2():
    cases = [FinFun(t) for k in range(7) for t in enumerate_tables(k)]
    bad = [f.values for f in cases if e2_via_ind(f) != int(any(f.values))]
    return not bad, f"{len(cases)} functions, {len(bad)} disagreements"


def _check_battery():
    bad = []
    for item in battery.battery():
        result = eval_p(item.index, item.env)
        got = result.value if result.is_value else result.kind
        if got != item.expect:
            bad.append(item.name)
    return not bad, f"{len(battery.battery())} items, mismatches {bad}"


def _check_translation():
    bad = [item.name for item in battery.terminating()
           if evaluate(translate_p_to_t(item.index), item.env, total=True).result != eval_p(item.index, item.env)]
    return not bad, f"{len(battery.terminating())} items, mismatches {bad}"


def _check_validator():
    bad = []
    for item in battery.terminating():
        calc = compile_computation(item.index, item.env)
        verdict = validate_representation(item.index, item.env, representation_of(calc))
        if verdict != Accept(item.expect):
            bad.append(item.name)
    return not bad, f"{len(battery.terminating())} items, mismatches {bad}"


def _check_consistency():
    bad, members = [], 0
    for item in battery.battery():
        env, F = item.split()
        family = ProcedureFamily.from_index(item.index, env, battery.oracle_variants(F, 8), 2000, max_workers=1)
        members += len(family.members)
        if consistency_check(family) is not True:
            bad.append(item.name)
    return not bad, f"{len(battery.battery())} families, {members} members, inconsistent {bad}"


def _check_pincherle():
    bad = 0
    tables = enumerate_tables(4, (0, 1, 2))
    for table in tables:
        F = DepthOracle(2, tuple(table))
        if max(pincherle_witness(F).table) != pincherle(F) or _least_bound(F) != pincherle(F):
            bad += 1
    return not bad, f"{len(tables)} oracles at L=2, {bad} failures"


def _least_bound(F):
    """The Pincherle bound by sweeping every G: {0,1}^L -> [0..L]."""
    leaves = F.leaves()
    best = 0
    for table in enumerate_tables(len(leaves), range(F.depth + 1)):
        G = dict(zip(leaves, table))
        if all(G[g] <= F(f) for f in leaves for g in leaves if g[:F(f)] == f[:F(f)]):
            best = max(best, max(table))
    return best


def _check_recover():
    tables = enumerate_tables(4, range(4))
    bad = 0
    for table in tables:
        F = StepFunctional.from_table(2, table)
        if recover_pwo(F, 2) != stage_order(F):
            bad += 1
    return not bad, f"{len(tables)} step functionals at B=2, {bad} disagreements"


def _check_history():
    bad = []
    for item in battery.terminating():
        env, F = item.split()
        family = ProcedureFamily.from_index(item.index, env, [F], max_workers=1)
        if decode_history(family, honest_history(family, F)) != family.members[0]:
            bad.append(item.name)
    return not bad, f"{len(battery.terminating())} items, mismatches {bad}"


SELFTEST_CHECKS = {
    'e2-exhaustive': _check_e2,
    'battery-eval': _check_battery,
    'rho-translation': _check_translation,
    'validator-roundtrip': _check_validator,
    'consistency-battery': _check_consistency,
    'pincherle-L2': _check_pincherle,
    'recover-B2': _check_recover,
    'honest-history': _check_history,
}


def cmd_selftest(args):
    """Run every check in parallel and print a summary table."""
    results = run_parallel(lambda fn: fn(), SELFTEST_CHECKS, max_workers=args.workers, label='Selftest')
    rows = [[name, 'ok' if ok else 'FAIL', detail] for name, (ok, detail) in results]
    payload = {'checks': {name: {'ok': ok, 'detail': detail} for name, (ok, detail) in results}}
    emit(args, payload, rows, ['Check', 'Status', 'Detail'])
    if not all(ok for _, (ok, _) in results):
        sys.exit(ExitCode.FAILURE)


# ============================================================================
# MAIN
# ============================================================================

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--budget', type=int, default=None, help='Evaluation step budget')
    common.add_argument('--seed', type=int, default=config.INDUCT_SEED, help='Random seed')
    common.add_argument('--out', '-o', help='Write JSON output to this file')
    common.add_argument('--format', choices=['json', 'table'], default='json')

    envargs = argparse.ArgumentParser(add_help=False)
    envargs.add_argument('index', help='Index code or symbolic form')
    envargs.add_argument('--env', help='Environment JSON {"oracles", "funs", "nums", "n"}')
    envargs.add_argument('--n', type=int, help='Truncated base size')

    family = argparse.ArgumentParser(add_help=False)
    family.add_argument('--support', type=int, help='Enumerate every oracle table of this support')
    family.add_argument('--values', type=lambda s: tuple(int(v) for v in s.split(',')), default=(0, 1),
                        help='Oracle values, comma separated (default 0,1)')

    parser = argparse.ArgumentParser(
        description='Induction engine CLI - non-monotone inductions and Kleene computations',
        formatter_class=argparse.RawDescriptionHelpFormatter
    )
    subparsers = parser.add_subparsers(dest='command', help='Command')

    # ---- INDUCT ----
    p = subparsers.add_parser('induct', parents=[common], help='Iterate a step functional')
    p.add_argument('file', help='StepFunctional JSON {"n", "table"}')
    p.set_defaults(func=cmd_induct)

    # ---- EVAL ----
    p = subparsers.add_parser('eval', parents=[common, envargs], help='Evaluate an index')
    semantics = p.add_mutually_exclusive_group()
    semantics.add_argument('--total', action='store_true', help='Total semantics')
    semantics.add_argument('--partial', dest='total', action='store_false', help='Partial semantics (default)')
    p.add_argument('--norm', action='store_true', help='Include the norm of a terminating computation')
    p.add_argument('--trace', action='store_true', help='Include the leftmost divergence chain')
    p.set_defaults(func=cmd_eval)

    # ---- PROCEDURE ----
    procedure_parser = subparsers.add_parser('procedure', help='Calculations and procedures')
    procedure_sub = procedure_parser.add_subparsers(dest='subcommand')

    # procedure compile
    p = procedure_sub.add_parser('compile', parents=[common, envargs], help='Compile a calculation')
    p.add_argument('--oracle', help='Type2Oracle JSON put in front of the type-2 arguments')
    p.set_defaults(func=cmd_procedure_compile)

    # procedure validate
    p = procedure_sub.add_parser('validate', parents=[common, envargs], help='Check a representation')
    p.add_argument('--repr', required=True, help='Representation JSON')
    p.add_argument('--fuzz', type=int, default=0, help='Also try this many single-edit mutations')
    p.set_defaults(func=cmd_procedure_validate)

    # procedure honest
    p = procedure_sub.add_parser('honest', parents=[common, envargs], help='Honest history on one oracle')
    p.add_argument('--oracle', help='Type2Oracle JSON')
    p.set_defaults(func=cmd_procedure_honest)

    # procedure delay
    p = procedure_sub.add_parser('delay', parents=[common, envargs, family], help='Delays over a family')
    p.add_argument('--oracle', help='Type2Oracle JSON selecting the member to report')
    p.set_defaults(func=cmd_procedure_delay)

    # procedure consistency
    p = procedure_sub.add_parser('consistency', parents=[common, envargs, family],
                                 help='Branching consistency of a family')
    p.set_defaults(func=cmd_procedure_consistency)

    # ---- REALISER ----
    realiser_parser = subparsers.add_parser('realiser', help='Covering realisers')
    realiser_sub = realiser_parser.add_subparsers(dest='subcommand')

    # realiser hb
    p = realiser_sub.add_parser('hb', parents=[common], help='Strong and weak covers')
    p.add_argument('file', help='DepthOracle JSON {"L", "table"}')
    p.set_defaults(func=cmd_realiser_hb)

    # realiser pincherle
    p = realiser_sub.add_parser('pincherle', parents=[common], help='Pincherle bound')
    p.add_argument('file', help='DepthOracle JSON {"L", "table"}')
    p.add_argument('--witness', action='store_true', help='Include the bound-attaining G')
    p.set_defaults(func=cmd_realiser_pincherle)

    # realiser recover
    p = realiser_sub.add_parser('recover', parents=[common], help='Recover a stage prewellordering')
    p.add_argument('file', help='StepFunctional JSON {"n", "table"}')
    p.set_defaults(func=cmd_realiser_recover)

    # ---- SELFTEST ----
    p = subparsers.add_parser('selftest', parents=[common], help='Run the exhaustive sweeps')
    p.add_argument('--workers', type=int, default=None, help='Parallel workers')
    p.set_defaults(func=cmd_selftest)

    return parser, {'procedure': procedure_parser, 'realiser': realiser_parser}


def main(argv=None):
    parser, groups = build_parser()
    args = parser.parse_args(argv)

    if not args.command:
        parser.print_help()
        sys.exit(ExitCode.FAILURE)

    if not hasattr(args, 'func'):
        # Print subcommand help
        groups[args.command].print_help()
        sys.exit(ExitCode.FAILURE)

    config.init_logging()

    try:
        args.func(args)
    except (InputError, KeyError, ValueError, TypeError) as e:
        print(f"Error: {e}", file=sys.stderr)
        sys.exit(ExitCode.BAD_INPUT)
    except PartialityError as e:
        print(f"Error: {e}", file=sys.stderr)
        sys.exit(ExitCode.PARTIALITY)
    except EngineError as e:
        print(f"Error: {e}", file=sys.stderr)
        sys.exit(ExitCode.FAILURE)


if __name__ == '__main__':
    main()
