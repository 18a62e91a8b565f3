import os
import json

from flask import Flask

from config import config

__version__ = '1.0.0'


def create_app(config_name=None, config_file=None):
    """Application factory."""
    if config_name is None:
        config_name = os.environ.get('FLASK_ENV', 'default')

    app = Flask(__name__)
    app.config.from_object(config[config_name])

    # JSON config file sits between class defaults and command-line flags
    if config_file:
        app.config.from_file(os.path.abspath(config_file), load=json.load)

    app.config['TOOL_VERSION'] = __version__
    app.logger.setLevel(app.config['LOG_LEVEL'])
    config[config_name].init_app(app)

    # Register blueprints (each one contributes top-level CLI commands)
    from blueprints.forecast import bp as forecast_bp
    from blueprints.sweep import bp as sweep_bp
    from blueprints.validate import bp as validate_bp
    from blueprints.pf import bp as pf_bp
    from blueprints.plot import bp as plot_bp
    from blueprints.manifest import bp as manifest_bp

    app.register_blueprint(forecast_bp)
    app.register_blueprint(sweep_bp)
    app.register_blueprint(validate_bp)
    app.register_blueprint(pf_bp)
    app.register_blueprint(plot_bp)
    app.register_blueprint(manifest_bp)

    return app


# Create app instance for `flask --app app <command>`
app = create_app()
