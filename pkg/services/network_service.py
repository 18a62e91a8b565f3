import json

import networkx as nx
import numpy as np
from scipy.linalg import lu_factor

from models.network import PHASES, Bus, Line, NetworkModel, LinearSensitivity
from services.exceptions import (
    ParseError, TopologyError, NetworkValueError, SingularSensitivityError, DimensionError,
)

# Phase rotation a = exp(-j 2pi/3); GAMMA[i][j] = a^(i-j)
_ROTATION = np.exp(-2j * np.pi / 3)
GAMMA = np.array([[_ROTATION ** (i - j) for j in range(3)] for i in range(3)])

# K is rejected above this condition number
MAX_CONDITION = 1e12

_SYMMETRY_TOL = 1e-9
_MIX_TOL = 1e-9


class NetworkService:
    """Feeder parsing and the linearized three-phase voltage model."""

    # ===========================================
    # Parsing
    # ===========================================

    @classmethod
    def load_network(cls, path):
        """Read and validate a feeder description from a JSON file."""
        try:
            with open(path) as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ParseError(f'Cannot read network file {path}: {exc}') from exc
        except json.JSONDecodeError as exc:
            raise ParseError(f'Network file {path} is not valid JSON: {exc}') from exc
        return cls.parse_network(data)

    @classmethod
    def parse_network(cls, data):
        """Validate a feeder dictionary and number its node-phases."""
        if not isinstance(data, dict):
            raise ParseError('Network description must be a JSON object')
        for key in ('s_base_kva', 'v_base_kv', 'slack', 'buses', 'lines'):
            if key not in data:
                raise ParseError(f'Network description is missing "{key}"')

        s_base = _positive(data['s_base_kva'], 's_base_kva')
        v_base = _positive(data['v_base_kv'], 'v_base_kv')
        v0_mag = np.asarray(data.get('v0_pu', [1.0, 1.0, 1.0]), dtype=float)
        if v0_mag.shape != (3,) or np.any(v0_mag <= 0):
            raise NetworkValueError('v0_pu must hold three positive magnitudes')

        buses = {}
        for raw in data['buses']:
            bus = cls._parse_bus(raw)
            if bus.id in buses:
                raise ParseError(f'Duplicate bus id {bus.id}')
            buses[bus.id] = bus

        slack = str(data['slack'])
        if slack not in buses:
            raise TopologyError(f'Slack bus {slack} is not defined')
        if len(buses) < 2:
            raise TopologyError('Feeder needs at least one bus besides the slack')
        if buses[slack].has_load:
            raise NetworkValueError(f'Slack bus {slack} cannot carry load')

        lines = [cls._parse_line(raw, buses) for raw in data['lines']]
        bus_order, oriented = cls._orient(buses, lines, slack)

        # Node-phases in breadth-first order, phases a->b->c
        node_phases = tuple(
            (bus_id, ph) for bus_id in bus_order[1:] for ph in buses[bus_id].phases
        )
        index = {np_: i for i, np_ in enumerate(node_phases)}

        # Column k marks every node-phase whose upstream line carries injection k
        n = len(node_phases)
        path = np.zeros((n, n))
        parent_line = {line.to_bus: line for line in oriented}
        for bus_id in bus_order[1:]:
            parent = parent_line[bus_id].from_bus
            for ph in buses[bus_id].phases:
                k = index[(bus_id, ph)]
                if parent != slack:
                    path[:, k] = path[:, index[(parent, ph)]]
                path[k, k] = 1.0

        return NetworkModel(
            buses=tuple(buses[b] for b in bus_order),
            lines=tuple(oriented),
            slack_bus=slack,
            v0=v0_mag ** 2,
            s_base=s_base,
            v_base=v_base,
            bus_order=tuple(bus_order),
            node_phases=node_phases,
            path=path,
            parent_line=parent_line,
        )

    @staticmethod
    def _parse_bus(raw):
        try:
            bus_id = str(raw['id'])
            phases = str(raw.get('phases', PHASES))
        except (KeyError, TypeError) as exc:
            raise ParseError(f'Bad bus entry {raw!r}') from exc
        if not phases or any(ph not in PHASES for ph in phases) or len(set(phases)) != len(phases):
            raise ParseError(f'Bus {bus_id} has invalid phases "{phases}"')
        phases = ''.join(ph for ph in PHASES if ph in phases)

        def per_phase(key, default):
            values = raw.get(key)
            if values is None:
                return (default,) * 3
            if isinstance(values, (int, float)):
                values = [values] * len(phases)
            values = [float(v) for v in values]
            if len(values) == 3:
                full = values
            elif len(values) == len(phases):
                full = [default] * 3
                for ph, value in zip(phases, values):
                    full[PHASES.index(ph)] = value
            else:
                raise ParseError(f'Bus {bus_id}: "{key}" needs {len(phases)} or 3 values')
            return tuple(full)

        load_kw = per_phase('load_kw', 0.0)
        load_kvar = per_phase('load_kvar', 0.0)
        if 'a0' in raw:
            a0 = per_phase('a0', 1.0)
            a1 = per_phase('a1', 0.0) if 'a1' in raw else tuple(1.0 - v for v in a0)
        elif 'a1' in raw:
            a1 = per_phase('a1', 0.0)
            a0 = tuple(1.0 - v for v in a1)
        else:
            a0, a1 = (1.0, 1.0, 1.0), (0.0, 0.0, 0.0)

        for i, ph in enumerate(PHASES):
            present = ph in phases
            if not present and (load_kw[i] or load_kvar[i]):
                raise NetworkValueError(f'Bus {bus_id} has load on absent phase {ph}')
            if present:
                if abs(a0[i] + a1[i] - 1.0) > _MIX_TOL:
                    raise NetworkValueError(f'Bus {bus_id}.{ph}: a0 + a1 must equal 1')
                if a0[i] < 0 or a1[i] < 0:
                    raise NetworkValueError(f'Bus {bus_id}.{ph}: load fractions must be nonnegative')
        return Bus(id=bus_id, phases=phases, load_kw=load_kw,
                   load_kvar=load_kvar, a0=a0, a1=a1)

    @staticmethod
    def _parse_line(raw, buses):
        try:
            from_bus, to_bus = str(raw['from']), str(raw['to'])
            r = np.asarray(raw['r_ohm'], dtype=float)
            x = np.asarray(raw['x_ohm'], dtype=float)
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f'Bad line entry {raw!r}') from exc
        for end in (from_bus, to_bus):
            if end not in buses:
                raise TopologyError(f'Line {from_bus}-{to_bus} references unknown bus {end}')
        if from_bus == to_bus:
            raise TopologyError(f'Line {from_bus}-{to_bus} is a self loop')
        if r.shape != (3, 3) or x.shape != (3, 3):
            raise ParseError(f'Line {from_bus}-{to_bus}: impedance must be 3x3')

        z = r + 1j * x
        scale = max(np.abs(z).max(), 1.0)
        if np.abs(z - z.T).max() > _SYMMETRY_TOL * scale:
            raise NetworkValueError(f'Line {from_bus}-{to_bus}: impedance matrix is not symmetric')
        if np.any(np.diag(r) < 0):
            raise NetworkValueError(f'Line {from_bus}-{to_bus}: negative resistance')
        return Line(from_bus=from_bus, to_bus=to_bus, z=z)

    @staticmethod
    def _orient(buses, lines, slack):
        """Breadth-first bus order from the slack and lines oriented parent->child."""
        graph = nx.MultiGraph()
        graph.add_nodes_from(buses)
        for i, line in enumerate(lines):
            graph.add_edge(line.from_bus, line.to_bus, key=i)

        if not nx.is_connected(graph):
            reached = nx.node_connected_component(graph, slack)
            missing = sorted(set(buses) - reached)
            raise TopologyError(f'Buses not reachable from the slack: {", ".join(missing)}')
        if graph.number_of_edges() != len(buses) - 1:
            raise TopologyError('Feeder contains a loop; a radial tree is required')

        by_pair = {frozenset((line.from_bus, line.to_bus)): line for line in lines}
        order = [slack]
        oriented = []
        for parent, child in nx.bfs_edges(graph, slack):
            line = by_pair[frozenset((parent, child))]
            parent_phases, child_phases = buses[parent].phases, buses[child].phases
            if not set(child_phases) <= set(parent_phases):
                raise TopologyError(
                    f'Bus {child} phases "{child_phases}" are not a subset of '
                    f'its parent {parent} phases "{parent_phases}"')
            absent = [PHASES.index(ph) for ph in PHASES if ph not in child_phases]
            if absent and (np.abs(line.z[absent, :]).max() > 0 or np.abs(line.z[:, absent]).max() > 0):
                raise NetworkValueError(f'Line {parent}-{child} has impedance on absent phases')
            order.append(child)
            oriented.append(Line(from_bus=parent, to_bus=child, z=line.z))
        return order, oriented

    # ===========================================
    # Linear model
    # ===========================================

    @staticmethod
    def build_coefficients(z):
        """
        Rotated resistance and reactance blocks of one line.

        Returns (Zp, Zq) with Zp = 2 Re(GAMMA * conj z) and Zq = -2 Im(GAMMA * conj z).
        Entries for absent phases stay zero because z is zero there.
        """
        rotated = GAMMA * np.conj(z)
        return 2.0 * rotated.real, -2.0 * rotated.imag

    @classmethod
    def impedance_sensitivity(cls, net):
        """Equivalent matrices R and X in p.u. (independent of loading)."""
        n = net.n_node_phases
        zp_d = np.zeros((n, n))
        zq_d = np.zeros((n, n))
        index = net.node_phase_index
        bus_map = net.bus_map
        for line in net.lines:
            zp, zq = cls.build_coefficients(line.z / net.z_base)
            phases = bus_map[line.to_bus].phases
            rows = [index[(line.to_bus, ph)] for ph in phases]
            cols = [PHASES.index(ph) for ph in phases]
            zp_d[np.ix_(rows, rows)] = zp[np.ix_(cols, cols)]
            zq_d[np.ix_(rows, rows)] = zq[np.ix_(cols, cols)]
        t = net.path
        return t.T @ zp_d @ t, t.T @ zq_d @ t

    @classmethod
    def build_sensitivity(cls, net, load_mult=1.0, impedances=None):
        """
        Voltage sensitivity of the feeder at `load_mult` times nameplate load.

        `impedances` may pass a precomputed (R, X) pair to skip rebuilding it.
        """
        r_eq, x_eq = impedances if impedances is not None else cls.impedance_sensitivity(net)
        p_load = net.p_load * load_mult
        q_load = net.q_load * load_mult
        a0, a1 = net.a0, net.a1

        # K = I + R diag(p_l a1) + X diag(q_l a1)
        k_matrix = np.eye(net.n_node_phases) + r_eq * (p_load * a1) + x_eq * (q_load * a1)
        condition = float(np.linalg.cond(k_matrix)) if k_matrix.size else 1.0
        if not np.isfinite(condition) or condition > MAX_CONDITION:
            raise SingularSensitivityError(
                f'Voltage sensitivity matrix is singular (condition {condition:.3g})',
                condition=condition)

        return LinearSensitivity(
            r_eq=r_eq,
            x_eq=x_eq,
            k_matrix=k_matrix,
            k_lu=lu_factor(k_matrix),
            base_term=net.v0_node_phases,
            p_load=p_load,
            q_load=q_load,
            a0=a0,
            a1=a1,
            load_mult=load_mult,
            condition=condition,
        )

    @staticmethod
    def predict_voltages(sens, p_gen, q_gen):
        """Squared voltage magnitudes for generation injections in p.u."""
        p_gen = np.asarray(p_gen, dtype=float)
        q_gen = np.asarray(q_gen, dtype=float)
        n = sens.size
        if p_gen.shape != (n,) or q_gen.shape != (n,):
            raise DimensionError(
                f'Injection vectors must have length {n}, got {p_gen.shape} and {q_gen.shape}')
        rhs = (sens.r_eq @ (p_gen - sens.p_load * sens.a0)
               + sens.x_eq @ (q_gen - sens.q_load * sens.a0)
               + sens.base_term)
        return sens.solve_k(rhs)

    @staticmethod
    def branch_impedance(net):
        """Block-diagonal impedance of the line-phase feeding each node-phase (p.u.)."""
        n = net.n_node_phases
        z_d = np.zeros((n, n), dtype=complex)
        index = net.node_phase_index
        bus_map = net.bus_map
        for line in net.lines:
            phases = bus_map[line.to_bus].phases
            rows = [index[(line.to_bus, ph)] for ph in phases]
            cols = [PHASES.index(ph) for ph in phases]
            z_d[np.ix_(rows, rows)] = (line.z / net.z_base)[np.ix_(cols, cols)]
        return z_d

    @classmethod
    def path_impedance(cls, net, z_branch=None):
        """Complex path impedance between node-phases, used by the power flow."""
        z_d = z_branch if z_branch is not None else cls.branch_impedance(net)
        t = net.path
        return t.T @ z_d @ t


def _positive(value, name):
    try:
        value = float(value)
    except (TypeError, ValueError) as exc:
        raise ParseError(f'{name} must be a number') from exc
    if value <= 0:
        raise NetworkValueError(f'{name} must be positive')
    return value
