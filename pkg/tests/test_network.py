"""Tests for feeder parsing and the linear voltage model."""
import copy
import json

import numpy as np
import pytest

from services import network_service
from services.exceptions import (
    ParseError, TopologyError, NetworkValueError, SingularSensitivityError, DimensionError,
)
from services.network_service import NetworkService, GAMMA
from services.power_flow_service import PowerFlowService


@pytest.fixture
def three_bus_data(paths):
    with open(paths['three_bus']) as fh:
        return json.load(fh)


def _zero_block():
    return [[0.0] * 3 for _ in range(3)]


def test_node_phase_numbering(three_bus):
    """Test node-phases follow breadth-first order with phases a, b, c."""
    assert three_bus.node_phases == (
        ('n1', 'a'), ('n1', 'b'), ('n1', 'c'), ('n2', 'a'), ('n2', 'b'), ('n2', 'c'))
    assert three_bus.labels()[4] == 'n2.b'
    assert three_bus.index_of('n2', 'c') == 5


def test_path_matrix(three_bus):
    """Test injections at n2 flow through the n1 line-phases."""
    eye = np.eye(3)
    expected = np.block([[eye, eye], [np.zeros((3, 3)), eye]])
    np.testing.assert_array_equal(three_bus.path, expected)


def test_path_matrix_on_lateral_phases(ieee13):
    """Test a single-phase lateral only loads its own phase upstream."""
    k = ieee13.index_of('611', 'c')
    upstream = {ieee13.labels()[i] for i in np.flatnonzero(ieee13.path[:, k])}
    assert upstream == {'632.c', '671.c', '684.c', '611.c'}


def test_per_unit_conversion(two_bus):
    """Test impedance and load bases."""
    assert two_bus.z_base == pytest.approx(5.76)
    assert two_bus.p_load == pytest.approx([0.1])
    assert two_bus.q_load == pytest.approx([0.05])


def test_coefficients_of_balanced_line():
    """Test a diagonal impedance gives Zp = 2r and Zq = 2x."""
    z = np.diag([0.01 + 0.02j] * 3)
    zp, zq = NetworkService.build_coefficients(z)
    np.testing.assert_allclose(zp, np.diag([0.02] * 3), atol=1e-15)
    np.testing.assert_allclose(zq, np.diag([0.04] * 3), atol=1e-15)


def test_coefficients_mix_mutual_terms():
    """Test mutual impedance enters both Zp and Zq through the phase rotation."""
    z = np.full((3, 3), 0.001 + 0.003j)
    np.fill_diagonal(z, 0.01 + 0.02j)
    zp, zq = NetworkService.build_coefficients(z)
    rotated = GAMMA[0, 1] * np.conj(z[0, 1])
    assert zp[0, 1] == pytest.approx(2 * rotated.real)
    assert zq[0, 1] == pytest.approx(-2 * rotated.imag)
    assert zp[0, 1] != pytest.approx(zp[1, 0])


def test_two_bus_injection_raises_voltage(two_bus):
    """Test y = 1 + 2 r p for an unloaded two-bus feeder."""
    sens = NetworkService.build_sensitivity(two_bus, load_mult=0.0)
    y = NetworkService.predict_voltages(sens, [0.1], [0.0])
    assert y[0] == pytest.approx(1.002, abs=1e-12)


def test_two_bus_load_drop(two_bus):
    """Test nameplate load lowers y by 2 (r p + x q)."""
    sens = NetworkService.build_sensitivity(two_bus)
    y = NetworkService.predict_voltages(sens, [0.0], [0.0])
    assert y[0] == pytest.approx(1.0 - 2 * (0.01 * 0.1 + 0.02 * 0.05), abs=1e-12)


def test_zero_injection_no_load_is_flat(three_bus):
    """Test the slack voltage propagates when nothing flows."""
    sens = NetworkService.build_sensitivity(three_bus, load_mult=0.0)
    y = NetworkService.predict_voltages(sens, np.zeros(6), np.zeros(6))
    np.testing.assert_allclose(y, np.ones(6))


def test_constant_power_loads_give_identity_k(three_bus_data):
    """Test K reduces to the identity without voltage-dependent load."""
    for bus in three_bus_data['buses']:
        bus.pop('a0', None)
        bus.pop('a1', None)
    net = NetworkService.parse_network(three_bus_data)
    sens = NetworkService.build_sensitivity(net)
    np.testing.assert_allclose(sens.k_matrix, np.eye(6), rtol=0, atol=1e-12)


def test_predicted_voltages_are_affine(ieee13):
    """Test the voltage responses to two injection patterns add up."""
    n = ieee13.n_node_phases
    rng = np.random.default_rng(3)
    p1, q1, p2, q2 = rng.uniform(-0.02, 0.02, size=(4, n))
    sens = NetworkService.build_sensitivity(ieee13, 0.8)

    base = NetworkService.predict_voltages(sens, np.zeros(n), np.zeros(n))
    first = NetworkService.predict_voltages(sens, p1, q1) - base
    second = NetworkService.predict_voltages(sens, p2, q2) - base
    both = NetworkService.predict_voltages(sens, p1 + p2, q1 + q2) - base
    np.testing.assert_allclose(both, first + second, rtol=0, atol=1e-12)


def test_large_feeder_dimensions(feeder123):
    n = feeder123.n_node_phases
    assert len(feeder123.buses) == 123
    assert len(feeder123.lines) == 122
    assert n == sum(len(bus.phases) for bus in feeder123.buses if bus.id != feeder123.slack_bus)
    assert feeder123.path.shape == (n, n)

    sens = NetworkService.build_sensitivity(feeder123)
    assert sens.r_eq.shape == sens.x_eq.shape == sens.k_matrix.shape == (n, n)
    assert sens.p_load.shape == (n,)
    assert len(feeder123.labels()) == n


def test_predict_voltages_checks_length(three_bus):
    sens = NetworkService.build_sensitivity(three_bus)
    with pytest.raises(DimensionError):
        NetworkService.predict_voltages(sens, np.zeros(5), np.zeros(6))


def test_sensitivity_reuses_impedances(ieee13):
    """Test passing precomputed R, X gives the same model."""
    impedances = NetworkService.impedance_sensitivity(ieee13)
    direct = NetworkService.build_sensitivity(ieee13, 0.7)
    reused = NetworkService.build_sensitivity(ieee13, 0.7, impedances)
    np.testing.assert_array_equal(direct.k_matrix, reused.k_matrix)


def test_ill_conditioned_k_is_rejected(three_bus, monkeypatch):
    monkeypatch.setattr(network_service, 'MAX_CONDITION', 0.5)
    with pytest.raises(SingularSensitivityError) as excinfo:
        NetworkService.build_sensitivity(three_bus)
    assert excinfo.value.condition >= 1.0
    assert excinfo.value.exit_code == 4


@pytest.mark.parametrize('fixture', ['two_bus', 'three_bus', 'ieee13'])
def test_linearization_accuracy(fixture, request):
    """Test linear squared voltages track the nonlinear power flow."""
    net = request.getfixturevalue(fixture)
    n = net.n_node_phases

    def error(load_mult):
        sens = NetworkService.build_sensitivity(net, load_mult)
        y_lin = NetworkService.predict_voltages(sens, np.zeros(n), np.zeros(n))
        pf = PowerFlowService.solve_pf(net, load_mult=load_mult)
        assert pf.converged
        return np.max(np.abs(y_lin - pf.squared))

    full, light = error(1.0), error(0.1)
    assert full <= 0.01
    assert light < full / 10


def test_linearization_with_generation(ieee13):
    """Test accuracy holds with solar and VAR injections at half load."""
    n = ieee13.n_node_phases
    rng = np.random.default_rng(7)
    p_gen = rng.uniform(0.0, 0.05, n)
    q_gen = rng.uniform(-0.03, 0.03, n)
    sens = NetworkService.build_sensitivity(ieee13, 0.5)
    y_lin = NetworkService.predict_voltages(sens, p_gen, q_gen)
    pf = PowerFlowService.solve_pf(ieee13, p_gen, q_gen, load_mult=0.5)
    assert pf.converged
    assert np.max(np.abs(y_lin - pf.squared)) <= 0.01


# ===========================================
# Validation of the feeder description
# ===========================================

def test_load_network_missing_file(tmp_path):
    with pytest.raises(ParseError):
        NetworkService.load_network(str(tmp_path / 'absent.json'))


def test_load_network_bad_json(tmp_path):
    path = tmp_path / 'broken.json'
    path.write_text('{"buses": [')
    with pytest.raises(ParseError):
        NetworkService.load_network(str(path))


def test_missing_key(three_bus_data):
    del three_bus_data['slack']
    with pytest.raises(ParseError, match='slack'):
        NetworkService.parse_network(three_bus_data)


def test_duplicate_bus(three_bus_data):
    three_bus_data['buses'].append(copy.deepcopy(three_bus_data['buses'][1]))
    with pytest.raises(ParseError, match='Duplicate'):
        NetworkService.parse_network(three_bus_data)


def test_loop_is_rejected(three_bus_data):
    """Test a closing line between the slack and n2 is reported as a loop."""
    extra = copy.deepcopy(three_bus_data['lines'][0])
    extra['to'] = 'n2'
    three_bus_data['lines'].append(extra)
    with pytest.raises(TopologyError, match='loop'):
        NetworkService.parse_network(three_bus_data)


def test_unreachable_bus_is_named(three_bus_data):
    three_bus_data['buses'].append({'id': 'island', 'phases': 'abc'})
    with pytest.raises(TopologyError, match='island'):
        NetworkService.parse_network(three_bus_data)


def test_child_phases_must_nest(three_bus_data):
    """Test a three-phase bus cannot hang off a single-phase one."""
    three_bus_data['buses'][1] = {'id': 'n1', 'phases': 'a'}
    three_bus_data['lines'][0]['r_ohm'] = [[0.0576, 0, 0], [0, 0, 0], [0, 0, 0]]
    three_bus_data['lines'][0]['x_ohm'] = [[0.1152, 0, 0], [0, 0, 0], [0, 0, 0]]
    with pytest.raises(TopologyError, match='subset'):
        NetworkService.parse_network(three_bus_data)


def test_asymmetric_impedance(three_bus_data):
    three_bus_data['lines'][1]['x_ohm'][0][1] = 0.5
    with pytest.raises(NetworkValueError, match='symmetric'):
        NetworkService.parse_network(three_bus_data)


def test_negative_resistance(three_bus_data):
    three_bus_data['lines'][1]['r_ohm'][2][2] = -0.01
    with pytest.raises(NetworkValueError, match='negative'):
        NetworkService.parse_network(three_bus_data)


def test_impedance_on_absent_phase(three_bus_data):
    three_bus_data['buses'][2] = {'id': 'n2', 'phases': 'ab'}
    with pytest.raises(NetworkValueError, match='absent'):
        NetworkService.parse_network(three_bus_data)


def test_load_mix_must_sum_to_one(three_bus_data):
    three_bus_data['buses'][2]['a1'] = [0.5, 0.5, 0.5]
    with pytest.raises(NetworkValueError, match='a0 \\+ a1'):
        NetworkService.parse_network(three_bus_data)


def test_load_mix_defaults_from_a1(three_bus_data):
    """Test a0 is completed from a1 when only a1 is given."""
    del three_bus_data['buses'][2]['a0']
    net = NetworkService.parse_network(three_bus_data)
    assert net.bus_map['n2'].a0 == pytest.approx((0.6, 0.6, 0.6))


def test_load_on_absent_phase(three_bus_data):
    three_bus_data['buses'].append({'id': 'n3', 'phases': 'a', 'load_kw': [0, 5.0, 0]})
    three_bus_data['lines'].append({'from': 'n2', 'to': 'n3', 'r_ohm': _zero_block(),
                                    'x_ohm': _zero_block()})
    with pytest.raises(NetworkValueError, match='absent phase'):
        NetworkService.parse_network(three_bus_data)


def test_slack_cannot_carry_load(three_bus_data):
    three_bus_data['buses'][0]['load_kw'] = [10.0, 0, 0]
    with pytest.raises(NetworkValueError, match='Slack'):
        NetworkService.parse_network(three_bus_data)


def test_unknown_line_end(three_bus_data):
    three_bus_data['lines'][1]['to'] = 'nowhere'
    with pytest.raises(TopologyError, match='unknown bus'):
        NetworkService.parse_network(three_bus_data)


def test_network_round_trip(three_bus):
    """Test the file representation parses back to the same feeder."""
    again = NetworkService.parse_network(three_bus.to_dict())
    assert again.node_phases == three_bus.node_phases
    np.testing.assert_allclose(again.path, three_bus.path)
    np.testing.assert_allclose(again.p_load, three_bus.p_load)
