import click
from flask import Blueprint, current_app

from blueprints import config_option, apply_config, pipeline_command
from models.manifest import RunManifest
from services.forecast_service import ForecastService
from services.manifest_service import ManifestService

bp = Blueprint('forecast', __name__, cli_group=None)


@bp.cli.command('fit-errors')
@click.option('--history', required=True, help='Historical forecast CSV')
@click.option('--out', required=True, help='Error model JSON to write')
@click.option('--bins', type=int, default=None, help='Equal-width forecast bins')
@click.option('--min-count', type=int, default=None, help='Minimum samples per bin')
@click.option('--histogram', default=None, help='Also write per-bin error histograms (CSV) here')
@config_option
@pipeline_command
def fit_errors(history, out, bins, min_count, histogram, config_file):
    """Fit per-bin Gaussian forecast errors from history."""
    apply_config(config_file, ERROR_BINS=bins, ERROR_MIN_COUNT=min_count)
    bins = current_app.config['ERROR_BINS']
    min_count = current_app.config['ERROR_MIN_COUNT']

    records = ForecastService.read_history(history)
    f_norm, rel_err = ForecastService.clean_and_normalize(records)
    model = ForecastService.fit_error_model(f_norm, rel_err, n_bins=bins, min_count=min_count)
    ForecastService.save_model(model, out)
    current_app.logger.info(f'Fitted {len(model)} bins from {len(f_norm)} daylight records')

    click.echo(f'{"center":>8} {"mu":>9} {"sigma":>9} {"count":>6}')
    for center, mu, sigma, count in model.summary():
        click.echo(f'{center:8.4f} {mu:9.4f} {sigma:9.4f} {count:6d}')

    outputs = [out]
    if histogram:
        frame = ForecastService.error_histograms(
            model, f_norm, rel_err, n_classes=current_app.config['ERROR_HIST_CLASSES'])
        frame.to_csv(histogram, index=False, float_format=current_app.config['CSV_FLOAT_FORMAT'],
                     lineterminator='\n')
        outputs.append(histogram)

    ManifestService.record(
        RunManifest.FIT_ERRORS,
        inputs={'history': history},
        options={'history': history, 'out': out, 'bins': bins, 'min_count': min_count,
                 'histogram': histogram},
        outputs=outputs,
    )
