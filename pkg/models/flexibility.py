import math
from dataclasses import dataclass, field

import numpy as np


def _float_or_none(value):
    return None if value is None or (isinstance(value, float) and math.isnan(value)) else value


@dataclass(frozen=True, eq=False)
class FlexibilityRegion:
    """
    Substation VAR range for one hour and one probability level.

    Positive q_sub is VAR demanded from the transmission grid, negative is
    injection toward it. Dispatch vectors are per-DER q_g in kVAr.
    """
    hour: int
    probability: float
    q_sub_max: float
    q_sub_min: float
    dispatch_max: np.ndarray = field(repr=False, default=None)
    dispatch_min: np.ndarray = field(repr=False, default=None)
    binding_max: tuple = ()
    binding_min: tuple = ()
    q_sub_base: float = float('nan')
    status: str = 'optimal'
    load_mult: float = 1.0
    p_hat: np.ndarray = field(repr=False, default=None)
    forecast_kw: np.ndarray = field(repr=False, default=None)
    infeasible_at: str = None

    @property
    def is_feasible(self):
        return self.status == 'optimal'

    def contains(self, other, tol=1e-6):
        """True when `other` lies inside this region."""
        return (other.q_sub_max <= self.q_sub_max + tol
                and other.q_sub_min >= self.q_sub_min - tol)

    def dispatches(self):
        """Both extreme dispatches, keyed by extreme."""
        return {'max': self.dispatch_max, 'min': self.dispatch_min}

    def to_dict(self):
        """Convert to the dispatch-detail representation."""
        def as_list(arr):
            return None if arr is None else [float(v) for v in arr]

        return {
            'hour': self.hour,
            'probability': self.probability,
            'status': self.status,
            'load_mult': self.load_mult,
            'q_sub_max_kvar': _float_or_none(self.q_sub_max),
            'q_sub_min_kvar': _float_or_none(self.q_sub_min),
            'q_sub_base_kvar': _float_or_none(self.q_sub_base),
            'forecast_kw': as_list(self.forecast_kw),
            'p_hat_kw': as_list(self.p_hat),
            'dispatch_max_kvar': as_list(self.dispatch_max),
            'dispatch_min_kvar': as_list(self.dispatch_min),
            'binding_max': list(self.binding_max),
            'binding_min': list(self.binding_min),
            'infeasible_at': self.infeasible_at,
        }

    @classmethod
    def from_dict(cls, data):
        def as_array(values):
            return None if values is None else np.asarray(values, dtype=float)

        def as_number(value):
            return float('nan') if value is None else float(value)

        return cls(
            hour=int(data['hour']),
            probability=float(data['probability']),
            status=data.get('status', 'optimal'),
            load_mult=float(data.get('load_mult', 1.0)),
            q_sub_max=as_number(data.get('q_sub_max_kvar')),
            q_sub_min=as_number(data.get('q_sub_min_kvar')),
            q_sub_base=as_number(data.get('q_sub_base_kvar')),
            forecast_kw=as_array(data.get('forecast_kw')),
            p_hat=as_array(data.get('p_hat_kw')),
            dispatch_max=as_array(data.get('dispatch_max_kvar')),
            dispatch_min=as_array(data.get('dispatch_min_kvar')),
            binding_max=tuple(data.get('binding_max', ())),
            binding_min=tuple(data.get('binding_min', ())),
            infeasible_at=data.get('infeasible_at'),
        )

    def __repr__(self):
        return (f'<FlexibilityRegion h={self.hour} P={self.probability:g} '
                f'[{self.q_sub_min:.6g}, {self.q_sub_max:.6g}] {self.status}>')
