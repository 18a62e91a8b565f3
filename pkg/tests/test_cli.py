"""Tests for the command-line pipeline."""
import json
import math
import shutil

import pandas as pd
import pytest

from services.forecast_service import ForecastService


def _scaled_model(paths, tmp_path, factor):
    """Copy of the bundled error model with every sigma multiplied by `factor`."""
    with open(paths['error_model']) as fh:
        data = json.load(fh)
    for b in data['bins']:
        b['sigma'] *= factor
    path = tmp_path / f'error_model_x{factor:g}.json'
    path.write_text(json.dumps(data))
    return str(path)


def _sweep_args(paths, network, out, *extra):
    return ['sweep', '--network', paths[network], '--profiles', paths['profiles'],
            '--error-model', paths['error_model'], '--out', str(out), *extra]


@pytest.fixture
def feeder123_dispatch(runner, paths, tmp_path):
    """Dispatch detail of a P = 0.976 sweep on the large feeder."""
    dispatch = tmp_path / 'dispatch.json'
    result = runner.invoke(args=_sweep_args(
        paths, 'feeder123', tmp_path / 'regions.csv', '--der-config', paths['der_config'],
        '--p-levels', '0.976', '--dispatch', str(dispatch)))
    assert result.exit_code == 0, result.output
    return str(dispatch)


# ===========================================
# fit-errors
# ===========================================

def test_fit_errors(runner, paths, tmp_path):
    out = tmp_path / 'model.json'
    histogram = tmp_path / 'histogram.csv'
    result = runner.invoke(args=['fit-errors', '--history', paths['history'], '--out', str(out),
                                 '--histogram', str(histogram)])
    assert result.exit_code == 0, result.output
    assert 'sigma' in result.output

    model = ForecastService.load_model(str(out))
    assert model.bins[-1].hi == 1.0
    bins = pd.read_csv(histogram).groupby('bin_lo')['count'].sum()
    assert bins.tolist() == [b.count for b in model.bins]
    manifest = json.loads((tmp_path / 'model.json.manifest.json').read_text())
    assert manifest['command'] == 'fit-errors'
    assert 'history' in manifest['inputs']


def test_fit_errors_without_daylight(runner, tmp_path):
    history = tmp_path / 'night.csv'
    history.write_text('timestamp,forecast_kw,actual_kw,capacity_kw\n' +
                       ''.join(f'2023-01-01T{h:02d}:00:00,0,0,1000\n' for h in range(24)))
    result = runner.invoke(args=['fit-errors', '--history', str(history),
                                 '--out', str(tmp_path / 'model.json')])
    assert result.exit_code == 3
    assert 'Error' in result.output


# ===========================================
# sweep
# ===========================================

def test_sweep_writes_outputs(runner, paths, tmp_path):
    out = tmp_path / 'regions.csv'
    dispatch = tmp_path / 'dispatch.json'
    svg = tmp_path / 'band.svg'
    solar = tmp_path / 'solar.csv'
    result = runner.invoke(args=_sweep_args(
        paths, 'feeder123', out, '--der-config', paths['der_config'],
        '--dispatch', str(dispatch), '--svg', str(svg), '--solar-profile', str(solar)))
    assert result.exit_code == 0, result.output
    assert 'Wrote 72 regions' in result.output

    table = pd.read_csv(out)
    assert list(table.columns) == ['hour', 'probability', 'q_sub_max_kvar', 'q_sub_min_kvar', 'status',
                                   'q_sub_base_kvar']
    assert table['q_sub_base_kvar'].notna().all()
    assert len(table) == 72
    assert (table['status'] == 'optimal').all()
    assert (table['q_sub_min_kvar'] <= table['q_sub_max_kvar']).all()

    detail = json.loads(dispatch.read_text())
    assert len(detail['ders']) == 102
    assert len(detail['regions'][0]['dispatch_max_kvar']) == 102
    assert svg.read_text().startswith('<svg')
    profile = pd.read_csv(solar)
    assert list(profile.columns) == ['hour', 'probability', 'forecast_kw', 'p_hat_kw']
    assert len(profile) == 72
    peak = profile[profile['hour'] == 12].sort_values('probability')
    assert peak['p_hat_kw'].is_monotonic_increasing
    assert (profile[profile['forecast_kw'] == 0]['p_hat_kw'] == 0).all()
    for path in (out, dispatch, svg, solar):
        assert (tmp_path / f'{path.name}.manifest.json').exists()


def test_sweep_warns_on_infeasible_hours(runner, paths, tmp_path):
    """Test an unreachable voltage floor is reported per hour without failing the run."""
    out = tmp_path / 'regions.csv'
    result = runner.invoke(args=_sweep_args(paths, 'two_bus', out, '--p-levels', '0.5',
                                            '--v-min', '1.01'))
    assert result.exit_code == 0, result.output
    assert 'Warning: hour 12 P=0.5 is infeasible' in result.output
    table = pd.read_csv(out)
    assert (table['status'] == 'infeasible').all()
    assert table['q_sub_max_kvar'].isna().all()


def test_sweep_missing_network(runner, paths, tmp_path):
    args = _sweep_args(paths, 'two_bus', tmp_path / 'regions.csv')
    args[args.index('--network') + 1] = str(tmp_path / 'absent.json')
    result = runner.invoke(args=args)
    assert result.exit_code == 2
    assert 'Cannot read network file' in result.output


@pytest.mark.parametrize('levels', ['1.5', 'abc'])
def test_sweep_bad_probability_levels(runner, paths, tmp_path, levels):
    result = runner.invoke(args=_sweep_args(paths, 'two_bus', tmp_path / 'regions.csv',
                                            '--p-levels', levels))
    assert result.exit_code == 2


def test_sweep_config_file(runner, paths, tmp_path):
    """Test settings from a JSON config file reach the sweep."""
    settings = tmp_path / 'settings.json'
    settings.write_text(json.dumps({'P_LEVELS': [0.84], 'V_MIN': 1.01}))
    out = tmp_path / 'regions.csv'
    result = runner.invoke(args=_sweep_args(paths, 'two_bus', out, '--config', str(settings)))
    assert result.exit_code == 0, result.output
    table = pd.read_csv(out)
    assert set(table['probability']) == {0.84}
    assert (table['status'] == 'infeasible').all()


def test_sweep_solver_failure(runner, paths, tmp_path):
    """Test a simplex that runs out of iterations stops the sweep with status 4."""
    settings = tmp_path / 'settings.json'
    settings.write_text(json.dumps({'LP_MAX_ITER': 0}))
    result = runner.invoke(args=_sweep_args(paths, 'ieee13', tmp_path / 'regions.csv',
                                            '--config', str(settings)))
    assert result.exit_code == 4
    assert 'Simplex stopped' in result.output
    assert not (tmp_path / 'regions.csv').exists()


# ===========================================
# validate
# ===========================================

def test_validate_acceptance_at_high_confidence(runner, paths, tmp_path, feeder123_dispatch):
    """Test the P = 0.976 regions hold their 2.4% risk against the model they were built with."""
    out = tmp_path / 'report.json'
    result = runner.invoke(args=[
        'validate', '--network', paths['feeder123'], '--dispatch', feeder123_dispatch,
        '--error-model', paths['error_model'], '--alpha', '0.024', '--samples', '10000',
        '--out', str(out)])
    assert result.exit_code == 0, result.output
    assert 'All 24 checked regions pass' in result.output

    reports = json.loads(out.read_text())
    assert len(reports) == 24
    assert reports[0]['n'] == 10000
    bound = 0.024 + 3 * math.sqrt(0.024 * 0.976 / 10000)
    assert all(r['per_der_max_rate'] <= bound for r in reports)


def test_validate_fails_on_inflated_dispatch(runner, paths, tmp_path, feeder123_dispatch):
    """Test doubling every stored VAR setpoint pushes inverters past their rating."""
    with open(feeder123_dispatch) as fh:
        data = json.load(fh)
    for region in data['regions']:
        for key in ('dispatch_max_kvar', 'dispatch_min_kvar'):
            region[key] = [2 * q for q in region[key]]
    inflated = tmp_path / 'inflated.json'
    inflated.write_text(json.dumps(data))

    result = runner.invoke(args=[
        'validate', '--network', paths['feeder123'], '--dispatch', str(inflated),
        '--error-model', paths['error_model'], '--alpha', '0.024'])
    assert result.exit_code == 5
    assert 'FAIL' in result.output


def test_validate_fails_with_wider_spread(runner, paths, tmp_path, feeder123_dispatch):
    """Test realized output five times more spread out breaks the risk bound."""
    result = runner.invoke(args=[
        'validate', '--network', paths['feeder123'], '--dispatch', feeder123_dispatch,
        '--error-model', _scaled_model(paths, tmp_path, 5), '--alpha', '0.024'])
    assert result.exit_code == 5
    assert 'FAIL' in result.output
    assert 'exceed their violation bound' in result.output


def test_validate_zero_solar_day(runner, paths, tmp_path):
    """Test a day without sun validates cleanly: nothing can exceed its rating."""
    profiles = pd.read_csv(paths['profiles'])
    profiles['solar_forecast_norm'] = 0.0
    dark = tmp_path / 'dark.csv'
    profiles.to_csv(dark, index=False)

    dispatch = tmp_path / 'dispatch.json'
    args = _sweep_args(paths, 'two_bus', tmp_path / 'regions.csv', '--p-levels', '0.976',
                       '--dispatch', str(dispatch))
    args[args.index('--profiles') + 1] = str(dark)
    assert runner.invoke(args=args).exit_code == 0

    out = tmp_path / 'report.json'
    result = runner.invoke(args=['validate', '--network', paths['two_bus'], '--dispatch', str(dispatch),
                                 '--error-model', paths['error_model'], '--out', str(out)])
    assert result.exit_code == 0, result.output
    reports = json.loads(out.read_text())
    assert len(reports) == 24
    assert all(r['hardware_violation_rate'] == 0 for r in reports)


def test_validate_with_nothing_to_check(runner, paths, tmp_path):
    """Test an alpha matching no region fails instead of passing vacuously."""
    dispatch = tmp_path / 'dispatch.json'
    assert runner.invoke(args=_sweep_args(paths, 'two_bus', tmp_path / 'regions.csv', '--p-levels', '0.5',
                                          '--dispatch', str(dispatch))).exit_code == 0

    result = runner.invoke(args=['validate', '--network', paths['two_bus'], '--dispatch', str(dispatch),
                                 '--error-model', paths['error_model'], '--alpha', '0.024'])
    assert result.exit_code == 5
    assert 'nothing was checked' in result.output
    assert 'regions pass' not in result.output


def test_validate_malformed_dispatch(runner, paths, tmp_path):
    dispatch = tmp_path / 'dispatch.json'
    dispatch.write_text('{"ders": []}')
    result = runner.invoke(args=['validate', '--network', paths['two_bus'], '--dispatch', str(dispatch),
                                 '--error-model', paths['error_model']])
    assert result.exit_code == 2


# ===========================================
# pf
# ===========================================

def test_pf_writes_voltages(runner, paths, tmp_path):
    out = tmp_path / 'voltages.json'
    result = runner.invoke(args=['pf', '--network', paths['two_bus'], '--out', str(out)])
    assert result.exit_code == 0, result.output
    assert 'converged after' in result.output
    data = json.loads(out.read_text())
    assert data['voltages'][0]['node_phase'] == 'load.a'
    assert (tmp_path / 'voltages.json.manifest.json').exists()


def test_pf_with_injections(runner, paths, tmp_path):
    injections = tmp_path / 'inj.csv'
    injections.write_text('bus,phase,p_kw,q_kvar\nload,a,100,50\n')
    out = tmp_path / 'voltages.json'
    result = runner.invoke(args=['pf', '--network', paths['two_bus'], '--injections', str(injections),
                                 '--out', str(out)])
    assert result.exit_code == 0, result.output
    data = json.loads(out.read_text())
    assert data['voltages'][0]['magnitude'] == pytest.approx(1.0, abs=1e-9)


def test_pf_not_converged(runner, paths):
    result = runner.invoke(args=['pf', '--network', paths['ieee13'], '--max-iter', '1'])
    assert result.exit_code == 4
    assert 'NOT converged' in result.output


# ===========================================
# plot and rerun
# ===========================================

def test_plot_from_table(runner, paths, tmp_path):
    table = tmp_path / 'regions.csv'
    result = runner.invoke(args=_sweep_args(paths, 'feeder123', table, '--der-config', paths['der_config']))
    assert result.exit_code == 0, result.output

    svg = tmp_path / 'replot.svg'
    result = runner.invoke(args=['plot', '--table', str(table), '--out', str(svg)])
    assert result.exit_code == 0, result.output
    text = svg.read_text()
    assert text.startswith('<svg')
    assert 'P = 0.976' in text


def test_plot_rejects_other_csv(runner, paths, tmp_path):
    result = runner.invoke(args=['plot', '--table', paths['profiles'], '--out', str(tmp_path / 'x.svg')])
    assert result.exit_code == 2


def test_rerun_reproduces_table(runner, paths, tmp_path):
    """Test replaying a sweep manifest gives a byte-identical region table."""
    first = tmp_path / 'first'
    first.mkdir()
    out = first / 'regions.csv'
    result = runner.invoke(args=_sweep_args(paths, 'feeder123', out, '--der-config', paths['der_config'],
                                            '--p-levels', '0.5,0.976'))
    assert result.exit_code == 0, result.output

    result = runner.invoke(args=['rerun', f'{out}.manifest.json', '--out-dir', str(tmp_path / 'second')])
    assert result.exit_code == 0, result.output
    assert 'changed' not in result.output
    assert (tmp_path / 'second' / 'regions.csv').read_bytes() == out.read_bytes()


def test_rerun_warns_on_changed_input(runner, paths, tmp_path):
    profiles = tmp_path / 'profiles.csv'
    shutil.copy(paths['profiles'], profiles)
    out = tmp_path / 'regions.csv'
    args = _sweep_args(paths, 'two_bus', out, '--p-levels', '0.5')
    args[args.index('--profiles') + 1] = str(profiles)
    assert runner.invoke(args=args).exit_code == 0

    profiles.write_text(profiles.read_text().replace('\n12,0.7,', '\n12,0.71,'))
    result = runner.invoke(args=['rerun', f'{out}.manifest.json', '--out-dir', str(tmp_path / 'again')])
    assert result.exit_code == 0, result.output
    assert 'Warning: input profiles changed' in result.output


def test_rerun_missing_manifest(runner, tmp_path):
    result = runner.invoke(args=['rerun', str(tmp_path / 'absent.manifest.json')])
    assert result.exit_code == 2
