import os
from dotenv import load_dotenv

load_dotenv()


class Config:
    """Base configuration."""
    LOG_LEVEL = 'INFO'

    # Worker threads for sweeps and Monte Carlo
    THREADS = int(os.environ.get('VARCAP_THREADS', 1))

    # ===========================================
    # Forecast error model
    # ===========================================
    ERROR_BINS = 12
    # Normal fit needs more than 20 observations per group
    ERROR_MIN_COUNT = 20
    # Error classes per bin in the histogram summary
    ERROR_HIST_CLASSES = 20

    # ===========================================
    # Flexibility region
    # ===========================================
    V_MIN = 0.95
    V_MAX = 1.05
    P_LEVELS = (0.5, 0.84, 0.976)
    VOLTAGE_CHECK_TOL = 1e-7

    # DER placement (IEEE 1547-2018: active output capped at 90% of kVA)
    SOLAR_PENETRATION = 0.9
    INVERTER_OVERSIZE = 1.1
    OPERATIONAL_P_CAP = 0.9

    # ===========================================
    # Simplex
    # ===========================================
    LP_PIVOT_TOL = 1e-9
    LP_FEAS_TOL = 1e-7
    LP_MAX_ITER = 50_000
    LP_REFACTOR_EVERY = 50

    # ===========================================
    # Power flow oracle
    # ===========================================
    PF_TOLERANCE = 1e-8
    PF_MAX_ITER = 100

    # ===========================================
    # Monte Carlo validation
    # ===========================================
    MC_SAMPLES = 10_000
    MC_SEED = 20240101
    MC_CHECK_VOLTAGES = False
    MC_SHARED_DRAW = True

    # Output
    CSV_FLOAT_FORMAT = '%.6g'

    @classmethod
    def init_app(cls, app):
        pass


class DevelopmentConfig(Config):
    """Development configuration."""
    DEBUG = True
    LOG_LEVEL = 'DEBUG'


class TestingConfig(Config):
    """Testing configuration."""
    TESTING = True
    THREADS = 1
    MC_SAMPLES = 2_000


class ProductionConfig(Config):
    """Production configuration."""
    DEBUG = False

    @classmethod
    def init_app(cls, app):
        # Log to stderr in production
        import logging
        from logging import StreamHandler
        from flask.logging import default_handler
        app.logger.removeHandler(default_handler)
        handler = StreamHandler()
        handler.setLevel(logging.INFO)
        handler.setFormatter(logging.Formatter('%(levelname)s %(name)s: %(message)s'))
        app.logger.addHandler(handler)


config = {
    'development': DevelopmentConfig,
    'testing': TestingConfig,
    'production': ProductionConfig,
    'default': DevelopmentConfig
}
