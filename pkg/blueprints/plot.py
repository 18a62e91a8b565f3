import click
from flask import Blueprint

from blueprints import config_option, apply_config, pipeline_command
from models.manifest import RunManifest
from services.manifest_service import ManifestService
from services.report_service import ReportService

bp = Blueprint('plot', __name__, cli_group=None)


@bp.cli.command('plot')
@click.option('--table', required=True, help='Region table CSV from sweep')
@click.option('--out', required=True, help='SVG file to write')
@config_option
@pipeline_command
def plot(table, out, config_file):
    """Re-render the flexibility band plot from a region table."""
    apply_config(config_file)
    ReportService.write_svg(ReportService.read_region_table(table), out)
    click.echo(f'Wrote {out}')
    ManifestService.record(
        RunManifest.PLOT,
        inputs={'table': table},
        options={'table': table, 'out': out},
        outputs=[out],
    )
