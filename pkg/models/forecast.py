from dataclasses import dataclass
from datetime import datetime


@dataclass(frozen=True)
class ForecastRecord:
    """One hour of historical solar forecast against the realized output."""
    timestamp: datetime
    forecast_kw: float
    actual_kw: float
    capacity_kw: float

    @property
    def is_night(self):
        return self.forecast_kw == 0

    def __repr__(self):
        return f'<ForecastRecord {self.timestamp} {self.forecast_kw:g}/{self.capacity_kw:g} kW>'


@dataclass(frozen=True)
class ErrorBin:
    """Gaussian relative-error statistics for one normalized-forecast range (lo, hi]."""
    lo: float
    hi: float
    count: int
    mu: float
    sigma: float

    @property
    def center(self):
        return 0.5 * (self.lo + self.hi)

    def contains(self, f_norm):
        return self.lo < f_norm <= self.hi

    def to_dict(self):
        return {
            'lo': self.lo,
            'hi': self.hi,
            'count': self.count,
            'mu': self.mu,
            'sigma': self.sigma,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            lo=float(data['lo']),
            hi=float(data['hi']),
            count=int(data['count']),
            mu=float(data['mu']),
            sigma=float(data['sigma']),
        )


# No generation means no error
ZERO_BIN = ErrorBin(lo=0.0, hi=0.0, count=0, mu=0.0, sigma=0.0)


@dataclass(frozen=True)
class ErrorModel:
    """Ordered, contiguous bins covering (0, 1]."""
    bins: tuple

    def __len__(self):
        return len(self.bins)

    def summary(self):
        """Rows of (bin center, mean error, standard deviation, count)."""
        return [(b.center, b.mu, b.sigma, b.count) for b in self.bins]

    def to_dict(self):
        return {'bins': [b.to_dict() for b in self.bins]}

    @classmethod
    def from_dict(cls, data):
        return cls(bins=tuple(ErrorBin.from_dict(b) for b in data['bins']))

    def __repr__(self):
        return f'<ErrorModel {len(self.bins)} bins>'
