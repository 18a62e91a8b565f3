import numpy as np
import pandas as pd
from flask import current_app

from models.power_flow import PfSolution
from services.exceptions import ParseError, DimensionError, DomainError, NotConvergedError
from services.network_service import NetworkService

INJECTION_COLUMNS = ('bus', 'phase', 'p_kw', 'q_kvar')


class PowerFlowService:
    """Nonlinear unbalanced power flow used to check the linear model."""

    @staticmethod
    def solve_pf(net, p_inj=None, q_inj=None, load_mult=1.0, tol=None, max_iter=None, z_path=None):
        """
        Backward/forward sweep in matrix form.

        Injection currents follow from the net demand at the present voltages
        (loads evaluated as p_l (a0 + a1 |V|^2)), and the voltages from the
        slack minus the path-impedance drops. Returns the last iterate with
        converged=False when the tolerance is not reached.
        """
        cfg = current_app.config
        tol = tol if tol is not None else cfg.get('PF_TOLERANCE', 1e-8)
        max_iter = max_iter if max_iter is not None else cfg.get('PF_MAX_ITER', 100)
        if tol <= 0 or max_iter < 1:
            raise DomainError('Power flow needs a positive tolerance and at least one iteration')

        n = net.n_node_phases
        p_inj = np.zeros(n) if p_inj is None else np.asarray(p_inj, dtype=float)
        q_inj = np.zeros(n) if q_inj is None else np.asarray(q_inj, dtype=float)
        if p_inj.shape != (n,) or q_inj.shape != (n,):
            raise DimensionError(f'Injection vectors must have length {n}')

        z_branch = NetworkService.branch_impedance(net)
        z_path = z_path if z_path is not None else NetworkService.path_impedance(net, z_branch)
        v_source = net.slack_phasors[net.phase_of]
        s_load = (net.p_load + 1j * net.q_load) * load_mult
        s_gen = p_inj + 1j * q_inj
        a0, a1 = net.a0, net.a1

        def demand(v):
            return s_load * (a0 + a1 * np.abs(v) ** 2) - s_gen

        v = v_source.copy()
        history = []
        current = np.zeros(n, dtype=complex)
        converged = False
        for iteration in range(1, max_iter + 1):
            current = np.conj(demand(v) / v)
            v = v_source - z_path @ current
            mismatch = float(np.max(np.abs(v * np.conj(current) - demand(v)), initial=0.0))
            history.append(mismatch)
            if mismatch <= tol:
                converged = True
                break

        if any(later > earlier for earlier, later in zip(history[1:], history[2:])):
            current_app.logger.warning('Power flow mismatch did not decrease monotonically')
        if not converged:
            current_app.logger.warning(
                f'Power flow stopped after {max_iter} iterations, mismatch {history[-1]:.3g}')

        slack_power = complex(np.sum(v_source * np.conj(current)))
        branch_current = net.path @ current
        losses = complex(np.sum((z_branch @ branch_current) * np.conj(branch_current)))
        return PfSolution(
            v=v,
            converged=converged,
            iterations=len(history),
            max_mismatch=history[-1],
            slack_power=slack_power,
            losses=losses,
            demand=complex(np.sum(demand(v))),
            mismatch_history=tuple(history),
            labels=tuple(net.labels()),
        )

    @staticmethod
    def check_limits(solution, v_lo, v_hi, allowance=0.0):
        """Node-phases whose voltage magnitude leaves [v_lo - allowance, v_hi + allowance]."""
        if not solution.converged:
            raise NotConvergedError('Voltage limits checked on a power flow that did not converge')
        mags = solution.magnitudes
        outside = (mags < v_lo - allowance) | (mags > v_hi + allowance)
        return [solution.labels[i] if solution.labels else i for i in np.flatnonzero(outside)]

    @staticmethod
    def read_injections(path, net):
        """Per node-phase generation (p.u.) from a `bus,phase,p_kw,q_kvar` CSV."""
        try:
            frame = pd.read_csv(path, dtype={'bus': str, 'phase': str})
        except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
            raise ParseError(f'Cannot read injections {path}: {exc}') from exc
        missing = [col for col in INJECTION_COLUMNS if col not in frame.columns]
        if missing:
            raise ParseError(f'Injections {path} are missing columns: {", ".join(missing)}')

        p_inj = np.zeros(net.n_node_phases)
        q_inj = np.zeros(net.n_node_phases)
        for row in frame.itertuples(index=False):
            try:
                i = net.index_of(row.bus, row.phase)
            except KeyError as exc:
                raise ParseError(f'Injections {path}: {exc.args[0]}') from exc
            p_inj[i] += float(row.p_kw) / net.s_base
            q_inj[i] += float(row.q_kvar) / net.s_base
        return p_inj, q_inj
