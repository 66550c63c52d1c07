import json
from unittest.mock import MagicMock

import pytest

from src.conf.config import settings
from src.exceptions import SolverError
from src.fem.elements import clear_cache
from src.routes import commands
from src.routes.commands import EXIT_FAIL, EXIT_PASS, EXIT_USAGE, applied_tolerances, build_parser, load_config, main
from src.schemas import CheckResult, Family, Method, RateRow, Tolerances, ValidationReport
from src.services import study


def test_unknown_command():
    with pytest.raises(SystemExit):
        main(['frobnicate'])


def test_box_and_mesh_are_exclusive(tmp_path):
    with pytest.raises(SystemExit):
        main(['solve', '--box', '2', '--mesh', str(tmp_path / 'mesh.txt')])


def test_validate_writes_reports(out_dir):
    code = main(['validate', '--d', '2', '--k', '1', '--family', 'linear-phi-split', '--out', str(out_dir)])

    assert code == EXIT_PASS
    header = (out_dir / 'validate.csv').read_text().splitlines()[0]
    assert header == 'name,passed,value,detail'
    summary = json.loads((out_dir / 'validate.json').read_text())
    assert summary['family'] == 'linear-phi-split'
    assert all(check['passed'] for check in summary['checks'])


def test_config_merged_with_flags(tmp_path):
    path = tmp_path / 'run.json'
    path.write_text(json.dumps({'d': 2, 'k': 2, 'lambda': 5.0, 'levels': 3, 'mesh': {'box': 1},
                                'tolerances': {'rank_tol': 1e-9}}))

    config = load_config(build_parser().parse_args(['solve', '--config', str(path), '--levels', '1']))

    assert config.lam == 5.0
    assert config.levels == 1
    assert config.mesh.box == 1
    assert config.family == Family.high_psi
    assert config.tolerances.rank_tol == 1e-9


def test_lambda_flag_overrides_config(tmp_path):
    path = tmp_path / 'run.json'
    path.write_text(json.dumps({'lambda': 5.0}))

    config = load_config(build_parser().parse_args(['solve', '--config', str(path), '--lambda', '100']))

    assert config.lam == 100.0


def test_unreadable_config(tmp_path):
    path = tmp_path / 'broken.json'
    path.write_text('{"d": ')

    assert main(['validate', '--config', str(path)]) == EXIT_USAGE
    assert main(['validate', '--config', str(tmp_path / 'missing.json')]) == EXIT_USAGE


def test_inadmissible_combinations():
    assert main(['solve', '--method', 'stabilized', '--family', 'high-psi']) == EXIT_USAGE
    assert main(['solve', '--method', 'hybrid', '--k', '1']) == EXIT_USAGE
    assert main(['validate', '--family', 'linear-rm', '--k', '2']) == EXIT_USAGE
    assert main(['validate', '--d', '4']) == EXIT_USAGE


def test_pair_checked_against_degree(out_dir):
    assert main(['infsup', '--k', '1', '--pair', 'psi', '--box', '1', '--levels', '1', '--out', str(out_dir)]) \
        == EXIT_USAGE
    assert main(['infsup', '--k', '1', '--pair', 'nn', '--box', '1', '--levels', '1']) == EXIT_USAGE
    assert main(['solve', '--method', 'linear-pair', '--k', '1', '--pair', 'psi', '--box', '1']) == EXIT_USAGE
    assert not (out_dir / 'infsup.csv').exists()


def test_mesh_dimension_mismatch(mesh_file, out_dir):
    code = main(['infsup', '--d', '3', '--mesh', str(mesh_file), '--out', str(out_dir)])

    assert code == EXIT_USAGE
    assert not (out_dir / 'infsup.csv').exists()


def test_failed_validation(monkeypatch, out_dir):
    report = ValidationReport(d=2, k=1, family=Family.linear_phi_split, seed=1,
                              checks=[CheckResult(name='conformity', passed=False, detail='jump 1e-3')])
    run_validation = MagicMock(return_value=report)
    monkeypatch.setattr(commands.verify, 'run_validation', run_validation)

    code = main(['validate', '--k', '1', '--out', str(out_dir)])

    assert code == EXIT_FAIL
    run_validation.assert_called_once_with(2, 1, Family.linear_phi_split)
    assert 'conformity,false' in (out_dir / 'validate.csv').read_text()


def test_numerical_failure(monkeypatch, out_dir):
    monkeypatch.setattr(study, 'solve_level', MagicMock(side_effect=SolverError('singular element block')))

    code = main(['solve', '--box', '1', '--out', str(out_dir)])

    assert code == EXIT_FAIL
    assert not (out_dir / 'solve.json').exists()


def test_solve_linear_pair(out_dir):
    code = main(['solve', '--method', 'linear-pair', '--k', '1', '--box', '1', '--out', str(out_dir)])

    assert code == EXIT_PASS
    header = (out_dir / 'solve.csv').read_text().splitlines()[0].split(',')
    assert header[:4] == ['h', 'dofs', 'residual', 'min_pivot']
    assert 'err_sigma_L2' in header
    summary = json.loads((out_dir / 'solve.json').read_text())
    assert summary['method'] == Method.linear_pair.value
    assert summary['errors']['err_super_1h'] is None


def test_infsup_single_level(out_dir):
    code = main(['infsup', '--k', '1', '--family', 'linear-rm', '--box', '1', '--levels', '1', '--out', str(out_dir)])

    assert code == EXIT_PASS
    summary = json.loads((out_dir / 'infsup.json').read_text())
    assert summary['pair'] == 'rm'
    assert len(summary['beta']) == 1
    assert summary['beta'][0] > 0


def test_tolerances_are_restored():
    original = settings.rank_tol

    with applied_tolerances(Tolerances(rank_tol=1e-6, jump_tol=1e-9)):
        assert settings.rank_tol == 1e-6
        assert settings.jump_tol == 1e-9

    assert settings.rank_tol == original


def test_csv_cell_format(tmp_path):
    path = study.write_csv([{'a': 1.0, 'b': True, 'c': None, 'd': 3}], tmp_path / 'rows.csv')

    assert path.read_text() == 'a,b,c,d\n1.0000000000e+00,true,,3\n'


def test_rates():
    coarse = RateRow(level=0, h=0.5, dofs=10, err_sigma_L2=0.08, err_sigma_Hdiv=0.4, err_u_L2=0.02)
    fine = RateRow(level=1, h=0.25, dofs=40, err_sigma_L2=0.01, err_sigma_Hdiv=0.1, err_u_L2=0.01)

    rates = study.rates(coarse, fine)

    assert rates['err_sigma_L2'] == pytest.approx(3.0)
    assert rates['err_sigma_Hdiv'] == pytest.approx(2.0)
    assert rates['err_u_L2'] == pytest.approx(1.0)
    assert 'err_super_1h' not in rates


@pytest.mark.slow
def test_convergence_command(out_dir):
    code = main(['convergence', '--method', 'linear-pair', '--k', '1', '--box', '1', '--levels', '2',
                 '--out', str(out_dir)])

    assert code == EXIT_PASS
    lines = (out_dir / 'convergence.csv').read_text().splitlines()
    assert len(lines) == 3
    assert 'rate_sigma_L2' in lines[0].split(',')
    summary = json.loads((out_dir / 'convergence.json').read_text())
    assert summary['rows'][1]['rates']['err_sigma_L2'] > 1.0


def test_reports_are_reproducible(tmp_path):
    args = ['solve', '--method', 'linear-pair', '--k', '1', '--box', '1']
    for name in ('first', 'second'):
        clear_cache()
        assert main(args + ['--out', str(tmp_path / name)]) == EXIT_PASS

    for stem in ('solve.csv', 'solve.json'):
        assert (tmp_path / 'first' / stem).read_bytes() == (tmp_path / 'second' / stem).read_bytes()


def test_plain_pair_is_reported_not_failed(out_dir):
    code = main(['infsup', '--k', '2', '--pair', 'plain', '--box', '1', '--levels', '1', '--out', str(out_dir)])

    assert code == EXIT_PASS
    summary = json.loads((out_dir / 'infsup.json').read_text())
    assert summary['pair'] == 'plain'
    assert len(summary['beta']) == 1
