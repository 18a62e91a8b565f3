from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lu_solve

PHASES = 'abc'

# Slack phasor angles for phases a, b, c
PHASE_ANGLES = np.deg2rad([0.0, -120.0, 120.0])


@dataclass(frozen=True, eq=False)
class Bus:
    """Feeder bus with per-phase nameplate load and load composition."""
    id: str
    phases: str
    load_kw: tuple = (0.0, 0.0, 0.0)
    load_kvar: tuple = (0.0, 0.0, 0.0)
    a0: tuple = (1.0, 1.0, 1.0)
    a1: tuple = (0.0, 0.0, 0.0)

    @property
    def phase_indices(self):
        return [PHASES.index(ph) for ph in self.phases]

    @property
    def has_load(self):
        return any(self.load_kw[i] or self.load_kvar[i] for i in self.phase_indices)

    def to_dict(self):
        """Convert to the network file representation."""
        return {
            'id': self.id,
            'phases': self.phases,
            'load_kw': list(self.load_kw),
            'load_kvar': list(self.load_kvar),
            'a0': list(self.a0),
            'a1': list(self.a1),
        }

    def __repr__(self):
        return f'<Bus {self.id} ({self.phases})>'


@dataclass(frozen=True, eq=False)
class Line:
    """Series branch with a 3x3 phase impedance block in ohms."""
    from_bus: str
    to_bus: str
    z: np.ndarray

    @property
    def r_ohm(self):
        return self.z.real

    @property
    def x_ohm(self):
        return self.z.imag

    def to_dict(self):
        """Convert to the network file representation."""
        return {
            'from': self.from_bus,
            'to': self.to_bus,
            'r_ohm': self.z.real.tolist(),
            'x_ohm': self.z.imag.tolist(),
        }

    def __repr__(self):
        return f'<Line {self.from_bus}->{self.to_bus}>'


@dataclass(frozen=True, eq=False)
class NetworkModel:
    """
    Validated radial feeder.

    Node-phases (every existing bus-phase except the slack) are numbered in
    breadth-first order from the slack, phases a->b->c within a bus. `path`
    is the bus-injection to branch-current incidence: path[i, k] = 1 when
    node-phase k is fed through the line-phase that ends at node-phase i.
    """
    buses: tuple
    lines: tuple
    slack_bus: str
    v0: np.ndarray          # slack squared voltage per phase (p.u.^2)
    s_base: float           # per-phase power base (kVA)
    v_base: float           # line-to-neutral voltage base (kV)
    bus_order: tuple = ()
    node_phases: tuple = ()
    path: np.ndarray = field(default=None, repr=False)
    parent_line: dict = field(default_factory=dict, repr=False)

    @property
    def z_base(self):
        """Impedance base in ohms."""
        return self.v_base ** 2 * 1000.0 / self.s_base

    @property
    def bus_map(self):
        return {bus.id: bus for bus in self.buses}

    @property
    def n_node_phases(self):
        return len(self.node_phases)

    @property
    def node_phase_index(self):
        return {np_: i for i, np_ in enumerate(self.node_phases)}

    def index_of(self, bus_id, phase):
        try:
            return self.node_phase_index[(bus_id, phase)]
        except KeyError:
            raise KeyError(f'{bus_id}.{phase} is not a node-phase of this feeder') from None

    @property
    def phase_of(self):
        """Phase number (0, 1, 2) of every node-phase."""
        return np.array([PHASES.index(ph) for _, ph in self.node_phases], dtype=int)

    def _per_node_phase(self, attr):
        buses = self.bus_map
        return np.array([
            getattr(buses[bus_id], attr)[PHASES.index(ph)]
            for bus_id, ph in self.node_phases
        ], dtype=float)

    @property
    def p_load(self):
        """Nameplate active load per node-phase (p.u.)."""
        return self._per_node_phase('load_kw') / self.s_base

    @property
    def q_load(self):
        """Nameplate reactive load per node-phase (p.u.)."""
        return self._per_node_phase('load_kvar') / self.s_base

    @property
    def a0(self):
        return self._per_node_phase('a0')

    @property
    def a1(self):
        return self._per_node_phase('a1')

    @property
    def v0_node_phases(self):
        """Slack squared voltage seen by each node-phase."""
        return self.v0[self.phase_of]

    @property
    def slack_phasors(self):
        return np.sqrt(self.v0) * np.exp(1j * PHASE_ANGLES)

    @property
    def total_load_kw(self):
        return float(self._per_node_phase('load_kw').sum())

    def labels(self):
        return [f'{bus_id}.{ph}' for bus_id, ph in self.node_phases]

    def to_dict(self):
        """Convert to the network file representation."""
        return {
            's_base_kva': self.s_base,
            'v_base_kv': self.v_base,
            'slack': self.slack_bus,
            'v0_pu': np.sqrt(self.v0).tolist(),
            'buses': [bus.to_dict() for bus in self.buses],
            'lines': [line.to_dict() for line in self.lines],
        }

    def __repr__(self):
        return (f'<NetworkModel slack={self.slack_bus} buses={len(self.buses)} '
                f'node_phases={self.n_node_phases}>')


@dataclass(frozen=True, eq=False)
class LinearSensitivity:
    """
    Affine map from generation injections to squared voltage magnitudes.

    y = K^-1 [R (p_g - p_l a0) + X (q_g - q_l a0) + base_term], with the
    loads and K evaluated at `load_mult` times nameplate.
    """
    r_eq: np.ndarray
    x_eq: np.ndarray
    k_matrix: np.ndarray
    k_lu: tuple = field(repr=False)
    base_term: np.ndarray = field(repr=False)
    p_load: np.ndarray = field(repr=False)
    q_load: np.ndarray = field(repr=False)
    a0: np.ndarray = field(repr=False)
    a1: np.ndarray = field(repr=False)
    load_mult: float = 1.0
    condition: float = 1.0

    @property
    def size(self):
        return self.r_eq.shape[0]

    def solve_k(self, rhs):
        """Apply K^-1 to a vector or to the columns of a matrix."""
        return lu_solve(self.k_lu, rhs)

    def load_q(self, y):
        """Voltage-dependent reactive load per node-phase at squared voltages y."""
        return self.q_load * (self.a0 + self.a1 * y)

    def __repr__(self):
        return f'<LinearSensitivity n={self.size} load_mult={self.load_mult:g}>'
