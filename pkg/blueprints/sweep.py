import click
from flask import Blueprint, current_app

from blueprints import config_option, apply_config, pipeline_command
from models.manifest import RunManifest
from services.exceptions import ParseError
from services.flexibility_service import FlexibilityService
from services.forecast_service import ForecastService
from services.manifest_service import ManifestService
from services.network_service import NetworkService
from services.report_service import ReportService

bp = Blueprint('sweep', __name__, cli_group=None)


def parse_levels(text):
    """Comma-separated probability levels, e.g. '0.5,0.84,0.976'."""
    try:
        levels = tuple(float(part) for part in text.split(',') if part.strip())
    except ValueError as exc:
        raise ParseError(f'Probability levels "{text}" are not numbers') from exc
    if not levels:
        raise ParseError('At least one probability level is required')
    return levels


@bp.cli.command('sweep')
@click.option('--network', required=True, help='Feeder JSON')
@click.option('--profiles', required=True, help='24-hour profile CSV')
@click.option('--error-model', required=True, help='Error model JSON from fit-errors')
@click.option('--der-config', default=None, help='DER placement overrides JSON')
@click.option('--p-levels', default=None, help='Comma-separated probability levels')
@click.option('--v-min', type=float, default=None, help='Lower voltage limit (p.u.)')
@click.option('--v-max', type=float, default=None, help='Upper voltage limit (p.u.)')
@click.option('--threads', type=int, default=None, help='Worker threads')
@click.option('--out', required=True, help='Region table CSV to write')
@click.option('--dispatch', default=None, help='Also write dispatch detail JSON here')
@click.option('--svg', default=None, help='Also write the band plot here')
@click.option('--solar-profile', default=None,
              help='Also write the feeder-total adjusted solar output per probability level (CSV) here')
@config_option
@pipeline_command
def sweep(network, profiles, error_model, der_config, p_levels, v_min, v_max, threads,
          out, dispatch, svg, solar_profile, config_file):
    """Flexibility regions for 24 hours and every probability level."""
    apply_config(config_file, V_MIN=v_min, V_MAX=v_max, THREADS=threads,
                 P_LEVELS=parse_levels(p_levels) if p_levels else None)
    cfg = current_app.config
    levels = tuple(cfg['P_LEVELS'])

    net = NetworkService.load_network(network)
    current_app.logger.info(f'Loaded {net!r}')
    model = ForecastService.load_model(error_model)
    table = FlexibilityService.read_profiles(profiles)
    overrides = FlexibilityService.load_der_config(der_config) if der_config else None
    ders = FlexibilityService.place_ders(net, table, overrides)
    current_app.logger.info(f'Placed {len(ders)} DERs')

    regions = FlexibilityService.sweep(net, model, table, ders, levels, threads=cfg['THREADS'])
    for region in regions:
        if not region.is_feasible:
            click.echo(f'Warning: hour {region.hour} P={region.probability:g} is infeasible '
                       f'(limit at {region.infeasible_at})', err=True)

    outputs = [out]
    ReportService.write_region_table(regions, out)
    if dispatch:
        ReportService.write_dispatch(regions, ders, dispatch)
        outputs.append(dispatch)
    if svg:
        ReportService.write_svg(ReportService.region_frame(regions), svg)
        outputs.append(svg)
    if solar_profile:
        ReportService.write_solar_profile(regions, solar_profile)
        outputs.append(solar_profile)
    click.echo(f'Wrote {len(regions)} regions to {out}')

    ManifestService.record(
        RunManifest.SWEEP,
        inputs={'network': network, 'profiles': profiles, 'error_model': error_model,
                'der_config': der_config},
        options={'network': network, 'profiles': profiles, 'error_model': error_model,
                 'der_config': der_config, 'p_levels': ','.join(f'{p:g}' for p in levels),
                 'v_min': cfg['V_MIN'], 'v_max': cfg['V_MAX'], 'threads': cfg['THREADS'],
                 'out': out, 'dispatch': dispatch, 'svg': svg, 'solar_profile': solar_profile},
        outputs=outputs,
    )
