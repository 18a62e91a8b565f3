import os

import pytest

from app import create_app
from services.flexibility_service import FlexibilityService
from services.forecast_service import ForecastService
from services.network_service import NetworkService

DATA_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), 'data')


def data_path(*parts):
    return os.path.join(DATA_DIR, *parts)


@pytest.fixture
def app():
    """Create application for testing."""
    app = create_app('testing')

    with app.app_context():
        yield app


@pytest.fixture
def runner(app):
    """Create test CLI runner."""
    return app.test_cli_runner()


@pytest.fixture
def paths():
    """Locations of the bundled fixtures."""
    return {
        'two_bus': data_path('feeders', 'two_bus.json'),
        'three_bus': data_path('feeders', 'three_bus.json'),
        'ieee13': data_path('feeders', 'ieee13_like.json'),
        'feeder123': data_path('feeders', 'feeder123.json'),
        'profiles': data_path('profiles', 'day_ahead.csv'),
        'history': data_path('history', 'solar_history.csv'),
        'error_model': data_path('error_model.json'),
        'der_config': data_path('der_config.json'),
    }


@pytest.fixture
def two_bus(app, paths):
    return NetworkService.load_network(paths['two_bus'])


@pytest.fixture
def three_bus(app, paths):
    return NetworkService.load_network(paths['three_bus'])


@pytest.fixture
def ieee13(app, paths):
    return NetworkService.load_network(paths['ieee13'])


@pytest.fixture
def feeder123(app, paths):
    return NetworkService.load_network(paths['feeder123'])


@pytest.fixture
def error_model(app, paths):
    return ForecastService.load_model(paths['error_model'])


@pytest.fixture
def profiles(app, paths):
    return FlexibilityService.read_profiles(paths['profiles'])


@pytest.fixture
def feeder123_ders(feeder123, profiles, paths):
    """Equal-capacity DERs on every loaded node-phase of the large feeder."""
    der_config = FlexibilityService.load_der_config(paths['der_config'])
    return FlexibilityService.place_ders(feeder123, profiles, der_config)
