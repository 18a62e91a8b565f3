import click
from flask import Blueprint, current_app

from blueprints import config_option, apply_config, pipeline_command
from models.manifest import RunManifest
from services.exceptions import NotConvergedError
from services.manifest_service import ManifestService
from services.network_service import NetworkService
from services.power_flow_service import PowerFlowService
from services.report_service import ReportService

bp = Blueprint('pf', __name__, cli_group=None)


@bp.cli.command('pf')
@click.option('--network', required=True, help='Feeder JSON')
@click.option('--injections', default=None, help='Generation CSV (bus,phase,p_kw,q_kvar)')
@click.option('--load-mult', type=float, default=1.0, help='Multiplier on nameplate loads')
@click.option('--tol', type=float, default=None, help='Power mismatch tolerance (p.u.)')
@click.option('--max-iter', type=int, default=None, help='Iteration limit')
@click.option('--out', default=None, help='Voltage JSON to write')
@config_option
@pipeline_command
def pf(network, injections, load_mult, tol, max_iter, out, config_file):
    """Nonlinear power flow for one set of injections."""
    apply_config(config_file, PF_TOLERANCE=tol, PF_MAX_ITER=max_iter)
    cfg = current_app.config

    net = NetworkService.load_network(network)
    if injections:
        p_inj, q_inj = PowerFlowService.read_injections(injections, net)
    else:
        p_inj = q_inj = None
    solution = PowerFlowService.solve_pf(net, p_inj, q_inj, load_mult=load_mult)

    mags = solution.magnitudes
    click.echo(f'{"converged" if solution.converged else "NOT converged"} after '
               f'{solution.iterations} iterations, mismatch {solution.max_mismatch:.3g}')
    click.echo(f'|V| range {mags.min():.6f} .. {mags.max():.6f} p.u., '
               f'slack {solution.slack_power.real * net.s_base:.6g} kW '
               f'{solution.slack_power.imag * net.s_base:.6g} kVAr')

    if out:
        ReportService.write_json(solution.to_dict(), out)
        ManifestService.record(
            RunManifest.PF,
            inputs={'network': network, 'injections': injections},
            options={'network': network, 'injections': injections, 'load_mult': load_mult,
                     'tol': cfg['PF_TOLERANCE'], 'max_iter': cfg['PF_MAX_ITER'], 'out': out},
            outputs=[out],
        )
    if not solution.converged:
        raise NotConvergedError(f'Power flow did not converge in {solution.iterations} iterations')
