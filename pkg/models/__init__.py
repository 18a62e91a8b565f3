# Import all models for easy access
from models.network import Bus, Line, NetworkModel, LinearSensitivity
from models.forecast import ForecastRecord, ErrorBin, ErrorModel
from models.der import DerSpec, ScenarioHour, QBounds
from models.flexibility import FlexibilityRegion
from models.lp import LpProblem, LpSolution
from models.power_flow import PfSolution
from models.validation import McConfig, McReport
from models.manifest import RunManifest

__all__ = [
    'Bus',
    'Line',
    'NetworkModel',
    'LinearSensitivity',
    'ForecastRecord',
    'ErrorBin',
    'ErrorModel',
    'DerSpec',
    'ScenarioHour',
    'QBounds',
    'FlexibilityRegion',
    'LpProblem',
    'LpSolution',
    'PfSolution',
    'McConfig',
    'McReport',
    'RunManifest'
]
