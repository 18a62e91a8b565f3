from dataclasses import dataclass, field

from services.exceptions import DomainError


@dataclass(frozen=True)
class McConfig:
    """Monte Carlo settings; alpha is the risk factor of the hardware chance constraint."""
    n_samples: int
    seed: int
    alpha: float
    check_voltages: bool = False
    shared_draw: bool = True

    def __post_init__(self):
        if self.n_samples < 100:
            raise DomainError('Monte Carlo needs at least 100 samples')
        if not 0 < self.alpha < 1:
            raise DomainError('alpha must lie strictly between 0 and 1')


@dataclass(frozen=True)
class McReport:
    """Empirical behaviour of one flexibility region under sampled solar output."""
    hour: int
    probability: float
    n: int
    seed: int
    hardware_violation_rate: float
    per_der_max_rate: float
    ci_halfwidth: float
    alpha: float
    voltage_violation_rate: float = None
    indeterminate: int = 0
    per_der_rates: tuple = field(default=(), repr=False)

    @property
    def passed(self):
        return self.hardware_violation_rate <= self.alpha + self.ci_halfwidth

    def to_dict(self):
        return {
            'hour': self.hour,
            'probability': self.probability,
            'n': self.n,
            'seed': self.seed,
            'hardware_violation_rate': self.hardware_violation_rate,
            'per_der_max_rate': self.per_der_max_rate,
            'voltage_violation_rate': self.voltage_violation_rate,
            'indeterminate': self.indeterminate,
            'ci_halfwidth': self.ci_halfwidth,
            'pass': self.passed,
        }
