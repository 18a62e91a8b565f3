import click
from flask import Blueprint, current_app

from blueprints import config_option, apply_config, pipeline_command
from models.manifest import RunManifest
from services.exceptions import ValidationFailed
from services.forecast_service import ForecastService
from services.manifest_service import ManifestService
from services.network_service import NetworkService
from services.report_service import ReportService
from services.validation_service import ValidationService

bp = Blueprint('validate', __name__, cli_group=None)


@bp.cli.command('validate')
@click.option('--network', required=True, help='Feeder JSON')
@click.option('--dispatch', required=True, help='Dispatch detail JSON from sweep')
@click.option('--error-model', required=True, help='Error model JSON')
@click.option('--alpha', type=float, default=None,
              help='Only check regions built for this risk (default: each region at 1 - P)')
@click.option('--samples', type=int, default=None, help='Monte Carlo samples per region')
@click.option('--seed', type=int, default=None, help='Random seed')
@click.option('--check-voltages/--no-check-voltages', default=None,
              help='Also rerun the nonlinear power flow per sample')
@click.option('--draw', type=click.Choice(['shared', 'independent']), default=None,
              help='One deviate shared by all DERs, or one per DER')
@click.option('--out', default=None, help='Report JSON to write')
@config_option
@pipeline_command
def validate(network, dispatch, error_model, alpha, samples, seed, check_voltages, draw,
             out, config_file):
    """Monte Carlo check of the hardware chance constraint."""
    apply_config(config_file, MC_SAMPLES=samples, MC_SEED=seed,
                 MC_CHECK_VOLTAGES=check_voltages,
                 MC_SHARED_DRAW=None if draw is None else draw == 'shared')
    cfg = current_app.config

    net = NetworkService.load_network(network)
    model = ForecastService.load_model(error_model)
    ders, regions = ReportService.read_dispatch(dispatch)
    reports = ValidationService.validate_regions(
        net, regions, ders, model, n_samples=cfg['MC_SAMPLES'], seed=cfg['MC_SEED'],
        alpha=alpha, check_voltages=cfg['MC_CHECK_VOLTAGES'], shared_draw=cfg['MC_SHARED_DRAW'])

    for report in reports:
        verdict = 'pass' if report.passed else 'FAIL'
        click.echo(f'hour {report.hour:2d} P={report.probability:g}: '
                   f'rate {report.hardware_violation_rate:.4f} '
                   f'(alpha {report.alpha:.4f} +/- {report.ci_halfwidth:.4f}) {verdict}')

    if out:
        ReportService.write_json([report.to_dict() for report in reports], out)
        ManifestService.record(
            RunManifest.VALIDATE,
            inputs={'network': network, 'dispatch': dispatch, 'error_model': error_model},
            options={'network': network, 'dispatch': dispatch, 'error_model': error_model,
                     'alpha': alpha, 'samples': cfg['MC_SAMPLES'], 'seed': cfg['MC_SEED'],
                     'check_voltages': cfg['MC_CHECK_VOLTAGES'],
                     'draw': 'shared' if cfg['MC_SHARED_DRAW'] else 'independent', 'out': out},
            outputs=[out],
        )

    failed = [r for r in reports if not r.passed]
    if failed:
        raise ValidationFailed(f'{len(failed)} of {len(reports)} regions exceed their violation bound')
    click.echo(f'All {len(reports)} checked regions pass')
