import pytest

from soft_annihilation import cli
from soft_annihilation.configfile import ConfigFile
from soft_annihilation.errors import DomainError
from soft_annihilation.report import process_csv_data, read_manifest


def run_main(argv):
    with pytest.raises(SystemExit) as exit_info:
        cli.main(argv)
    return exit_info.value.code


def test_unknown_study_is_a_usage_error(tmp_path):
    out = tmp_path / 'reports'
    assert run_main(['percolate', '--out', str(out)]) == cli.EXIT_USAGE
    assert not out.exists()


@pytest.mark.parametrize('ladder', ['400,100', '1', 'many'])
def test_bad_ladder(tmp_path, ladder):
    out = tmp_path / 'reports'
    assert run_main(['lln', '--n-ladder', ladder, '--out', str(out)]) \
        == cli.EXIT_USAGE
    assert not out.exists()


def test_too_few_replicas(tmp_path):
    assert run_main(['fluct', '--replicas', '1', '--out', str(tmp_path)]) \
        == cli.EXIT_USAGE


def test_missing_config_file(tmp_path):
    assert run_main(['simulate', '--config', str(tmp_path / 'none.cfg'),
                     '--out', str(tmp_path)]) == cli.EXIT_USAGE


def test_output_path_must_be_a_directory(tmp_path):
    target = tmp_path / 'file'
    target.write_text('')
    assert run_main(['kernel-check', '--out', str(target)]) == cli.EXIT_USAGE


def test_kernel_check(tmp_path):
    assert run_main(['kernel-check', '--out', str(tmp_path)]) == cli.EXIT_OK
    header, rows = process_csv_data(tmp_path / 'kernel.csv')
    assert header[0] == 'quantity'
    assert {'symmetry', 'conservation', 'chapman_kolmogorov'} \
        <= {row[0] for row in rows}
    manifest = read_manifest(tmp_path / 'manifest.txt')
    assert manifest['study'] == 'kernel'
    assert manifest['verdict'] == 'pass'
    assert 'numpy' in manifest and 'started' in manifest


def test_pde(tmp_path):
    assert run_main(['pde', '--out', str(tmp_path)]) == cli.EXIT_OK
    assert (tmp_path / 'pde.csv').is_file()
    assert (tmp_path / 'pde_solution.csv').is_file()
    assert read_manifest(tmp_path / 'manifest.txt')['verdict'] == 'pass'


def simulate(out, *extra):
    return run_main(['simulate', '--n-ladder', '20', '--replicas', '3',
                     '--T', '0.02', '--seed', '5', '--out', str(out), *extra])


def test_simulate_is_reproducible(tmp_path):
    first, second, parallel = (tmp_path / name for name in 'abc')
    for out, extra in ((first, ()), (second, ()), (parallel, ('--workers', '2'))):
        assert simulate(out, *extra) in (cli.EXIT_OK, cli.EXIT_FAILED)
    for name in ('simulate_20.csv', 'simulate_20_replicas.csv',
                 'simulate_20_snapshots.csv'):
        reference = (first / name).read_bytes()
        assert (second / name).read_bytes() == reference
        assert (parallel / name).read_bytes() == reference
    manifest = read_manifest(first / 'manifest.txt')
    assert manifest['seed'] == '5'
    assert 'step_cost_exponent' in manifest
    assert manifest['check.pruned_rates_exact_N_20'] == 'pass'


def test_config_file_feeds_the_experiment(tmp_path):
    path = tmp_path / 'run.cfg'
    path.write_text('T = 0.01\nseed = 3\n')
    config = ConfigFile().parse(path)
    spec = cli.ExperimentSpec('simulate', n_ladder=(10,), replicas=2,
                              config=config, out=tmp_path)
    assert spec.horizon == 0.01
    assert spec.seed_value == 3
    spec.seed = 9
    assert spec.sim_config(10).seed == 9
    assert spec.sim_config(10, annihilation=False).annihilation is False


def test_experiment_spec_validation():
    with pytest.raises(DomainError):
        cli.ExperimentSpec('nonsense')
    with pytest.raises(DomainError):
        cli.ExperimentSpec('lln', bins=0)
    with pytest.raises(DomainError):
        cli.ExperimentSpec('lln', workers=0)
    assert cli.ExperimentSpec('kernel', replicas=1).replicas == 1
