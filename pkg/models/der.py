from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class DerSpec:
    """Single-phase inverter-interfaced solar unit."""
    bus: str
    phase: str
    s_rating: float         # inverter apparent-power rating (kVA)
    p_peak: float           # peak active output (kW), at most 90% of s_rating
    capacity_kw: float      # installed PV capacity used to normalize forecasts

    @property
    def key(self):
        return f'{self.bus}.{self.phase}'

    def p_cap(self, cap_fraction=0.9):
        """Operational active-power ceiling (kW)."""
        return cap_fraction * self.s_rating

    def to_dict(self):
        return {
            'bus': self.bus,
            'phase': self.phase,
            's_rating_kva': self.s_rating,
            'p_peak_kw': self.p_peak,
            'capacity_kw': self.capacity_kw,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            bus=str(data['bus']),
            phase=data['phase'],
            s_rating=float(data['s_rating_kva']),
            p_peak=float(data['p_peak_kw']),
            capacity_kw=float(data['capacity_kw']),
        )

    def __repr__(self):
        return f'<DerSpec {self.key} S={self.s_rating:g} kVA>'


@dataclass(frozen=True, eq=False)
class ScenarioHour:
    """Inputs of one hourly solve: quantile-shifted generation and load level."""
    hour: int
    p_hat: np.ndarray       # per-DER adjusted generation (kW)
    load_mult: float
    probability: float

    def __repr__(self):
        return f'<ScenarioHour h={self.hour} P={self.probability:g}>'


@dataclass(frozen=True)
class QBounds:
    """Symmetric reactive limits of one DER (kVAr)."""
    q_lo: float
    q_hi: float
