import json

import jsonschema
import pytest

import battery
from kleene import moschovakis_trace, s1, s8_2
from utils import InputError, load_input, load_schema


def write(tmp_path, name, data):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return str(path)


def run(cli, capsys, *argv):
    cli.main(list(argv))
    out = capsys.readouterr().out
    return json.loads(out[out.index('{'):])


def exit_code(cli, *argv):
    with pytest.raises(SystemExit) as exc:
        cli.main(list(argv))
    return exc.value.code


def test_induct_chain(cli, capsys, tmp_path):
    payload = run(cli, capsys, 'induct', write(tmp_path, 'chain.json', {'n': 2, 'table': [2, 2, 3, 3]}))
    assert payload['version'] == 1
    assert payload['stages'] == ['0x0', '0x2', '0x3']
    assert payload['closed'] is True
    assert payload['alpha'] == 2


def test_induct_identity_closes_at_once(cli, capsys, tmp_path):
    payload = run(cli, capsys, 'induct', write(tmp_path, 'id.json', {'n': 2, 'table': [0, 1, 2, 3]}))
    assert payload['stages'] == ['0x0']
    assert payload['closed'] is True


def test_induct_undefined_stage_exits_with_partiality(cli, tmp_path):
    path = write(tmp_path, 'holes.json', {'n': 2, 'table': [None, 1, 1, 1]})
    assert exit_code(cli, 'induct', path) == cli.ExitCode.PARTIALITY


def test_induct_table_format(cli, capsys, tmp_path):
    cli.main(['induct', write(tmp_path, 'chain.json', {'n': 2, 'table': [2, 2, 3, 3]}), '--format', 'table'])
    out = capsys.readouterr().out
    assert 'Stage' in out
    assert '0x3' in out


def test_induct_writes_out_file(cli, capsys, tmp_path):
    target = tmp_path / 'trace.json'
    cli.main(['induct', write(tmp_path, 'chain.json', {'n': 2, 'table': [2, 2, 3, 3]}), '--out', str(target)])
    assert capsys.readouterr().out.strip() == f"Wrote {target}"
    assert json.loads(target.read_text())['alpha'] == 2


def test_bad_json_is_bad_input(cli, tmp_path):
    path = tmp_path / 'broken.json'
    path.write_text('{"n": 2,')
    assert exit_code(cli, 'induct', str(path)) == cli.ExitCode.BAD_INPUT


def test_missing_key_is_bad_input(cli, tmp_path):
    assert exit_code(cli, 'induct', write(tmp_path, 'f.json', {'n': 2})) == cli.ExitCode.BAD_INPUT


def test_eval_symbolic_index(cli, capsys, tmp_path):
    env = write(tmp_path, 'env.json', {'nums': [2]})
    payload = run(cli, capsys, 'eval', '(S4 (S1) (S3))', '--env', env, '--norm')
    assert payload['result'] == 'Value'
    assert payload['value'] == 3
    assert payload['norm'] == 1
    assert payload['semantics'] == 'partial'


def test_eval_constant(cli, capsys):
    assert run(cli, capsys, 'eval', '(S2 5)')['value'] == 5


def test_eval_not_an_index_exit_code(cli):
    assert exit_code(cli, 'eval', '26') == cli.ExitCode.NOT_AN_INDEX


def test_eval_unparsable_index(cli):
    assert exit_code(cli, 'eval', '(S4 (S1)') == cli.ExitCode.BAD_INPUT


def test_eval_budget_exceeded_with_trace(cli, capsys, tmp_path):
    loop, env = battery.diagonal_loop()
    path = write(tmp_path, 'env.json', env.to_json())
    assert exit_code(cli, 'eval', str(loop), '--env', path, '--budget', '1000', '--trace') \
        == cli.ExitCode.BUDGET_EXCEEDED
    payload = json.loads(capsys.readouterr().out)
    assert payload['result'] == 'BudgetExceeded'
    chain = moschovakis_trace(loop, env, 1000)
    assert len(payload['trace']) == len(chain) > 100
    for shown, frame in zip(payload['trace'], chain):
        assert shown == frame.to_json()
        assert shown['result']['result'] != 'Value'
    for parent, child in zip(chain, chain[1:]):
        position = next(i for i, c in enumerate(parent.children) if c is child)
        left = parent.children[:position]
        assert all(sibling.result.is_value for sibling in left)


def test_procedure_compile_and_validate(cli, capsys, tmp_path):
    oracle = {'support': 2, 'table': [0, 1, 1, 2]}
    index = str(s8_2(s1()))
    compiled = run(cli, capsys, 'procedure', 'compile', index, '--oracle', write(tmp_path, 'F.json', oracle))
    assert compiled['calculation']['value'] == 2

    rep = write(tmp_path, 'rep.json', compiled['representation'])
    env = write(tmp_path, 'env.json', {'oracles': [oracle]})
    verdict = run(cli, capsys, 'procedure', 'validate', index, '--env', env, '--repr', rep, '--fuzz', '5')
    assert verdict['result'] == 'Accept'
    assert verdict['value'] == 2
    assert verdict['fuzz']['mutations'] == 5


def test_procedure_consistency(cli, capsys):
    payload = run(cli, capsys, 'procedure', 'consistency', str(s8_2(s1())),
                  '--support', '2', '--values', '0,1,2')
    assert payload['consistent'] is True
    assert payload['members'] == 3


def test_procedure_group_without_subcommand(cli):
    assert exit_code(cli, 'procedure') == cli.ExitCode.FAILURE


def test_realiser_hb_constant_zero(cli, capsys, tmp_path):
    payload = run(cli, capsys, 'realiser', 'hb', write(tmp_path, 'F.json', {'L': 2, 'table': [0, 0, 0, 0]}))
    assert payload['leaves'] == ['00']
    assert payload['cover'] == ['']
    assert payload['is_cover'] is True


def test_realiser_pincherle_constant(cli, capsys, tmp_path):
    path = write(tmp_path, 'F.json', {'L': 2, 'table': [2, 2, 2, 2]})
    payload = run(cli, capsys, 'realiser', 'pincherle', path, '--witness')
    assert payload['N'] == 2
    assert max(payload['witness']['table']) == 2


def test_realiser_pincherle_rejects_out_of_range(cli, tmp_path):
    path = write(tmp_path, 'F.json', {'L': 1, 'table': [0, 3]})
    assert exit_code(cli, 'realiser', 'pincherle', path) == cli.ExitCode.BAD_INPUT


def test_realiser_recover_chain(cli, capsys, tmp_path):
    payload = run(cli, capsys, 'realiser', 'recover', write(tmp_path, 'chain.json', {'n': 2, 'table': [2, 2, 3, 3]}))
    assert payload['agree'] is True
    assert payload['B'] == 2


def test_no_command_prints_help(cli, capsys):
    assert exit_code(cli) == cli.ExitCode.FAILURE
    assert 'usage' in capsys.readouterr().out


def test_selftest_reports_every_check(cli, capsys, monkeypatch):
    monkeypatch.setattr(cli, 'SELFTEST_CHECKS', {'a': lambda: (True, 'fine'), 'b': lambda: (True, 'also fine')})
    payload = run(cli, capsys, 'selftest', '--workers', '2')
    assert set(payload['checks']) == {'a', 'b'}
    assert all(check['ok'] for check in payload['checks'].values())


def test_selftest_failure_exits_nonzero(cli, monkeypatch):
    monkeypatch.setattr(cli, 'SELFTEST_CHECKS', {'bad': lambda: (False, 'broken')})
    assert exit_code(cli, 'selftest', '--workers', '1') == cli.ExitCode.FAILURE


def test_eval_translated_program_under_total_semantics(cli, capsys, tmp_path):
    holes = {'support': 3, 'table': [1, 1, None, None, None, None, 1, 1]}
    env = write(tmp_path, 'env.json', {'oracles': [holes], 'nums': [0], 'n': 2})
    assert exit_code(cli, 'eval', '(S8.3 (S8.2 (S7)))', '--env', env, '--total') \
        == cli.ExitCode.TOTALITY_VIOLATION
    capsys.readouterr()
    payload = run(cli, capsys, 'eval', '(rho (S8.3 (S8.2 (S7))))', '--env', env, '--total')
    assert payload['index'] == '(rho (S8.3 (S8.2 (S7))))'
    assert payload['value'] == 1


def test_eval_rejects_retired_translated_shapes(cli):
    assert exit_code(cli, 'eval', '(S9t)') == cli.ExitCode.BAD_INPUT
    assert exit_code(cli, 'eval', '(rho (rho (S9)))') == cli.ExitCode.BAD_INPUT


@pytest.mark.parametrize('command,data', [
    (('induct',), {'n': 2, 'table': [2, 2, '3', 3]}),
    (('induct',), {'n': -1, 'table': [0]}),
    (('realiser', 'hb'), {'L': 2, 'table': [0, 0, -1, 0]}),
    (('realiser', 'recover'), [2, 2, 3, 3]),
    (('eval', '(S1)', '--env'), {'nums': [1], 'oracles': [{'support': 1}]}),
])
def test_schema_violations_are_bad_input(cli, tmp_path, command, data):
    path = write(tmp_path, 'input.json', data)
    assert exit_code(cli, *command, path) == cli.ExitCode.BAD_INPUT


def test_representation_schema_rejects_bad_answers(cli, tmp_path):
    rep = write(tmp_path, 'rep.json', {'D': [0], 'order': [], 'entries': {'0': {'f': [1], 'a': '?'}}})
    assert exit_code(cli, 'procedure', 'validate', '(S1)', '--repr', rep) == cli.ExitCode.BAD_INPUT


def test_schema_message_names_the_offending_field(tmp_path):
    path = write(tmp_path, 'F.json', {'L': 1, 'table': [0, 'x']})
    with pytest.raises(InputError, match=r'table\[1\]'):
        load_input(path, 'depth_oracle')


def test_outputs_validate_against_shipped_schemas(cli, capsys, tmp_path):
    chain = run(cli, capsys, 'induct', write(tmp_path, 'chain.json', {'n': 2, 'table': [2, 2, 3, 3]}))
    jsonschema.validate(chain, load_schema('induct_output'))

    env = write(tmp_path, 'env.json', {'nums': [2]})
    value = run(cli, capsys, 'eval', '(S4 (S1) (S3))', '--env', env, '--norm')
    jsonschema.validate(value, load_schema('eval_output'))

    loop, loop_env = battery.diagonal_loop()
    path = write(tmp_path, 'loop.json', loop_env.to_json())
    assert exit_code(cli, 'eval', str(loop), '--env', path, '--budget', '60', '--trace') \
        == cli.ExitCode.BUDGET_EXCEEDED
    jsonschema.validate(json.loads(capsys.readouterr().out), load_schema('eval_output'))


@pytest.mark.parametrize('name', ['e2-exhaustive', 'consistency-battery', 'pincherle-L2'])
def test_selftest_sweeps_pass(cli, name):
    ok, detail = cli.SELFTEST_CHECKS[name]()
    assert ok, detail
