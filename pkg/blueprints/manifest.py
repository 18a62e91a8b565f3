import os

import click
from flask import Blueprint, current_app

from blueprints import pipeline_command
from services.exceptions import ParseError
from services.manifest_service import ManifestService

bp = Blueprint('manifest', __name__, cli_group=None)

# Options that name files a command writes
OUTPUT_OPTIONS = ('out', 'dispatch', 'svg', 'solar_profile', 'histogram')


@bp.cli.command('rerun')
@click.argument('manifest_file')
@click.option('--out-dir', default=None, help='Write the outputs here instead of their recorded paths')
@pipeline_command
def rerun(manifest_file, out_dir):
    """Replay a recorded run with its recorded settings."""
    manifest = ManifestService.load(manifest_file)
    command = current_app.cli.commands.get(manifest.command)
    if command is None:
        raise ParseError(f'Manifest names unknown command {manifest.command!r}')

    for role in ManifestService.changed_inputs(manifest):
        click.echo(f'Warning: input {role} changed since the recorded run', err=True)

    settings = dict(manifest.parameters.get('settings', {}))
    if 'P_LEVELS' in settings:
        settings['P_LEVELS'] = tuple(settings['P_LEVELS'])
    current_app.config.update(settings)

    options = dict(manifest.parameters.get('options', {}))
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        for key in OUTPUT_OPTIONS:
            if options.get(key):
                options[key] = os.path.join(out_dir, os.path.basename(options[key]))

    current_app.logger.info(f'Replaying {manifest.command} recorded {manifest.created_at}')
    click.get_current_context().invoke(command, config_file=None, **options)
