from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True, eq=False)
class PfSolution:
    """Nonlinear power-flow result; voltages indexed like the feeder's node-phases."""
    v: np.ndarray                   # complex phase voltages (p.u.)
    converged: bool
    iterations: int
    max_mismatch: float             # p.u.
    slack_power: complex = 0j       # total complex power delivered by the slack (p.u.)
    losses: complex = 0j            # total series losses (p.u.)
    demand: complex = 0j            # net demand served at the solved voltages (p.u.)
    mismatch_history: tuple = field(default=(), repr=False)
    labels: tuple = field(default=(), repr=False)

    @property
    def magnitudes(self):
        return np.abs(self.v)

    @property
    def squared(self):
        return np.abs(self.v) ** 2

    def to_dict(self):
        return {
            'converged': self.converged,
            'iterations': self.iterations,
            'max_mismatch': self.max_mismatch,
            'slack_power': [self.slack_power.real, self.slack_power.imag],
            'losses': [self.losses.real, self.losses.imag],
            'demand': [self.demand.real, self.demand.imag],
            'voltages': [
                {'node_phase': label, 'magnitude': float(abs(v)),
                 'angle_deg': float(np.degrees(np.angle(v)))}
                for label, v in zip(self.labels, self.v)
            ],
        }

    def __repr__(self):
        state = 'converged' if self.converged else 'not converged'
        return f'<PfSolution {state} in {self.iterations} it, mismatch={self.max_mismatch:.3g}>'
