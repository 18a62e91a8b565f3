# Blueprints package
# Individual blueprints are imported in app.py to avoid circular imports
import json
import os
from functools import wraps

import click
from flask import current_app

from services.exceptions import CapabilityError, ParseError

config_option = click.option(
    '--config', 'config_file', type=click.Path(dir_okay=False), default=None,
    help='JSON file of settings; command-line flags take precedence')


def apply_config(config_file, **overrides):
    """Layer a JSON config file and then explicit flags over the defaults."""
    if config_file:
        try:
            current_app.config.from_file(os.path.abspath(config_file), load=json.load)
        except (OSError, json.JSONDecodeError) as exc:
            raise ParseError(f'Cannot load config {config_file}: {exc}') from exc
    for key, value in overrides.items():
        if value is not None:
            current_app.config[key] = value


def pipeline_command(f):
    """Decorator mapping pipeline failures to their exit status."""
    @wraps(f)
    def decorated_function(*args, **kwargs):
        try:
            return f(*args, **kwargs)
        except CapabilityError as exc:
            current_app.logger.error(f'{type(exc).__name__}: {exc}')
            click.echo(f'Error: {exc}', err=True)
            click.get_current_context().exit(exc.exit_code)
    return decorated_function
