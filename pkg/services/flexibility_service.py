import json
import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pandas as pd
from flask import current_app

from models.der import DerSpec, ScenarioHour, QBounds
from models.flexibility import FlexibilityRegion
from models.lp import LpProblem, OPTIMAL, INFEASIBLE
from services.exceptions import (
    ParseError, DomainError, DimensionError, SolverError, InfeasibleError,
)
from services.forecast_service import ForecastService
from services.lp_service import LpService
from services.network_service import NetworkService

PROFILE_COLUMNS = ('hour', 'load_mult', 'solar_forecast_norm')
HOURS = 24


class FlexibilityService:
    """Chance-constrained VAR capability of the feeder seen from the substation."""

    # ===========================================
    # Inputs
    # ===========================================

    @staticmethod
    def read_profiles(path):
        """Day-ahead profile CSV as a DataFrame indexed by hour 0..23."""
        try:
            frame = pd.read_csv(path)
        except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
            raise ParseError(f'Cannot read profiles {path}: {exc}') from exc

        missing = [col for col in PROFILE_COLUMNS if col not in frame.columns]
        if missing:
            raise ParseError(f'Profiles {path} are missing columns: {", ".join(missing)}')
        if len(frame) != HOURS:
            raise ParseError(f'Profiles {path} must have {HOURS} rows, found {len(frame)}')
        try:
            frame = frame.astype({'hour': int, 'load_mult': float, 'solar_forecast_norm': float})
        except (ValueError, TypeError) as exc:
            raise ParseError(f'Profiles {path} have malformed values: {exc}') from exc

        if sorted(frame['hour']) != list(range(HOURS)):
            raise ParseError(f'Profiles {path} must cover hours 0 to {HOURS - 1} once each')
        if (frame['load_mult'] < 0).any():
            raise ParseError(f'Profiles {path}: load_mult must be nonnegative')
        solar = frame['solar_forecast_norm']
        if ((solar < 0) | (solar > 1)).any():
            raise ParseError(f'Profiles {path}: solar_forecast_norm must lie in [0, 1]')
        return frame.set_index('hour').sort_index()

    @staticmethod
    def load_der_config(path):
        try:
            with open(path) as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ParseError(f'Cannot read DER config {path}: {exc}') from exc
        except json.JSONDecodeError as exc:
            raise ParseError(f'DER config {path} is not valid JSON: {exc}') from exc
        if not isinstance(data, dict):
            raise ParseError(f'DER config {path} must be a JSON object')
        return data

    @staticmethod
    def place_ders(net, profiles, der_config=None, penetration=None, oversize=None,
                   cap_fraction=None):
        """
        One single-phase DER on every loaded node-phase.

        Installed capacity totals `penetration` times the peak nameplate load
        and is shared equally; ratings are `oversize` times capacity. The DER
        config may override penetration, oversize and individual buses, or
        exclude buses.
        """
        der_config = der_config or {}
        cfg = current_app.config
        penetration = der_config.get('penetration', penetration if penetration is not None
                                     else cfg.get('SOLAR_PENETRATION', 0.9))
        oversize = der_config.get('oversize', oversize if oversize is not None
                                  else cfg.get('INVERTER_OVERSIZE', 1.1))
        cap_fraction = cap_fraction if cap_fraction is not None else cfg.get('OPERATIONAL_P_CAP', 0.9)
        if penetration < 0 or oversize <= 0:
            raise DomainError('Penetration must be nonnegative and oversize positive')

        excluded = {str(b) for b in der_config.get('exclude', ())}
        overrides = {str(k): v for k, v in der_config.get('buses', {}).items()}
        for bus_id in overrides.keys() | excluded:
            if bus_id not in net.bus_map:
                raise ParseError(f'DER config names unknown bus {bus_id}')

        buses = net.bus_map
        sites = [(bus_id, ph) for bus_id, ph in net.node_phases
                 if bus_id not in excluded and buses[bus_id].load_kw['abc'.index(ph)] > 0]
        if not sites:
            return []

        peak_load = net.total_load_kw * float(profiles['load_mult'].max())
        share = penetration * peak_load / len(sites)

        ders = []
        for bus_id, ph in sites:
            spec = overrides.get(bus_id, {})
            capacity = float(spec.get('capacity_kw', share))
            s_rating = float(spec.get('s_rating_kva', oversize * capacity))
            p_peak = float(spec.get('p_peak_kw', min(capacity, cap_fraction * s_rating)))
            if s_rating <= 0 or capacity <= 0 or p_peak < 0:
                raise DomainError(f'DER at {bus_id}.{ph} needs positive rating and capacity')
            if p_peak > cap_fraction * s_rating + 1e-9:
                raise DomainError(
                    f'DER at {bus_id}.{ph}: peak output {p_peak:g} kW exceeds '
                    f'{cap_fraction:.0%} of its {s_rating:g} kVA rating')
            ders.append(DerSpec(bus=bus_id, phase=ph, s_rating=s_rating,
                                p_peak=p_peak, capacity_kw=capacity))
        return ders

    @staticmethod
    def build_scenario(ders, error_model, hour, load_mult, solar_norm, probability, cap_fraction=0.9):
        """Quantile-shifted generation of every DER for one hour and probability level."""
        forecast = np.array([solar_norm * der.capacity_kw for der in ders])
        p_hat = np.array([
            ForecastService.adjust_forecast(error_model, f, der.capacity_kw, probability,
                                            der.p_cap(cap_fraction))
            for der, f in zip(ders, forecast)
        ])
        return ScenarioHour(hour=hour, p_hat=p_hat, load_mult=load_mult,
                            probability=probability), forecast

    # ===========================================
    # Optimization
    # ===========================================

    @staticmethod
    def reformulate_bounds(der, p_hat):
        """Reactive box left on the inverter circle at active output p_hat (kW)."""
        if p_hat < 0:
            raise DomainError(f'Active output {p_hat} kW is negative')
        if p_hat > der.s_rating * (1 + 1e-12):
            raise DomainError(f'Active output {p_hat:g} kW exceeds the {der.s_rating:g} kVA rating of {der.key}')
        q_hi = math.sqrt(max(der.s_rating ** 2 - p_hat ** 2, 0.0))
        return QBounds(q_lo=-q_hi, q_hi=q_hi)

    @staticmethod
    def der_incidence(net, ders):
        """Node-phase index of each DER."""
        index = []
        for der in ders:
            try:
                index.append(net.index_of(der.bus, der.phase))
            except KeyError as exc:
                raise ParseError(f'DER {der.key} does not sit on a node-phase of the feeder') from exc
        return np.array(index, dtype=int)

    @staticmethod
    def assemble_lp(sens, scenario, bounds, der_index, s_base, v_lo, v_hi, sense, labels=()):
        """
        LP over per-DER q (p.u.) for the expression  sum(q_g) - sum(q_l(y)).

        Returns (problem, y0, H) where y = y0 + H q is the squared-voltage
        prediction at the scenario's active injections.
        """
        n_der = len(der_index)
        if len(bounds) != n_der or scenario.p_hat.shape != (n_der,):
            raise DimensionError(
                f'{n_der} DERs but {len(bounds)} bounds and {scenario.p_hat.shape[0]} outputs')
        if not v_lo < v_hi:
            raise DomainError('v_lo must be below v_hi')

        n = sens.size
        incidence = np.zeros((n, n_der))
        incidence[der_index, np.arange(n_der)] = 1.0

        p_gen = incidence @ (scenario.p_hat / s_base)
        y0 = NetworkService.predict_voltages(sens, p_gen, np.zeros(n))
        h = sens.solve_k(sens.x_eq @ incidence) if n_der else np.zeros((n, 0))

        c = 1.0 - h.T @ (sens.q_load * sens.a1)
        c0 = -float(np.sum(sens.load_q(y0)))
        a_ub = np.vstack([h, -h])
        b_ub = np.concatenate([v_hi ** 2 - y0, y0 - v_lo ** 2])
        row_labels = tuple(f'v_hi:{lb}' for lb in labels) + tuple(f'v_lo:{lb}' for lb in labels)

        problem = LpProblem(
            c=c,
            a_ub=a_ub,
            b_ub=b_ub,
            lo=np.array([b.q_lo for b in bounds]) / s_base,
            hi=np.array([b.q_hi for b in bounds]) / s_base,
            sense=sense,
            c0=c0,
            row_labels=row_labels,
        )
        return problem, y0, h

    @classmethod
    def compute_fr(cls, net, sens, scenario, bounds, ders, v_lo=None, v_hi=None,
                   voltage_tol=None, forecast_kw=None):
        """
        Extreme substation VAR for one hour and probability level.

        q_sub = -(sum q_g - sum q_l) in kVAr: positive is drawn from the
        transmission grid. Raises InfeasibleError when no dispatch keeps the
        predicted voltages inside [v_lo, v_hi].
        """
        cfg = current_app.config
        v_lo = v_lo if v_lo is not None else cfg.get('V_MIN', 0.95)
        v_hi = v_hi if v_hi is not None else cfg.get('V_MAX', 1.05)
        voltage_tol = voltage_tol if voltage_tol is not None else cfg.get('VOLTAGE_CHECK_TOL', 1e-7)

        der_index = cls.der_incidence(net, ders)
        labels = net.labels()
        s_base = net.s_base

        extremes = {}
        for sense in ('min', 'max'):
            problem, y0, h = cls.assemble_lp(sens, scenario, bounds, der_index, s_base,
                                             v_lo, v_hi, sense, labels)
            solution = LpService.solve_lp(problem)
            if solution.status == INFEASIBLE:
                row = problem.row_label(solution.worst_row)
                raise InfeasibleError(
                    f'Hour {scenario.hour} P={scenario.probability:g}: voltage limits cannot be met '
                    f'(worst {row}, violation {solution.infeasibility:.3g})',
                    node_phase=row.split(':', 1)[-1], violation=solution.infeasibility)
            if solution.status != OPTIMAL:
                raise SolverError(f'Hour {scenario.hour}: LP ended {solution.status}')

            y = y0 + h @ solution.x
            if np.any(y > v_hi ** 2 + voltage_tol) or np.any(y < v_lo ** 2 - voltage_tol):
                raise SolverError(f'Hour {scenario.hour}: dispatch breaks the voltage limits it was solved for')

            binding = [problem.row_label(i) for i in solution.active_rows]
            binding += [f'q_hi:{ders[j].key}' for j in solution.at_upper]
            binding += [f'q_lo:{ders[j].key}' for j in solution.at_lower]
            extremes[sense] = (solution, tuple(binding), problem.c0)

        sol_min, binding_max, c0 = extremes['min']
        sol_max, binding_min, _ = extremes['max']

        return FlexibilityRegion(
            hour=scenario.hour,
            probability=scenario.probability,
            q_sub_max=-sol_min.objective * s_base,
            q_sub_min=-sol_max.objective * s_base,
            dispatch_max=sol_min.x * s_base,
            dispatch_min=sol_max.x * s_base,
            binding_max=binding_max,
            binding_min=binding_min,
            q_sub_base=-c0 * s_base,
            load_mult=scenario.load_mult,
            p_hat=scenario.p_hat,
            forecast_kw=forecast_kw,
        )

    @staticmethod
    def infeasible_region(scenario, error, forecast_kw=None):
        nan = float('nan')
        return FlexibilityRegion(
            hour=scenario.hour,
            probability=scenario.probability,
            q_sub_max=nan,
            q_sub_min=nan,
            status=INFEASIBLE,
            load_mult=scenario.load_mult,
            p_hat=scenario.p_hat,
            forecast_kw=forecast_kw,
            infeasible_at=error.node_phase,
        )

    # ===========================================
    # 24-hour sweep
    # ===========================================

    @classmethod
    def sweep(cls, net, error_model, profiles, ders, p_levels, threads=None):
        """
        Flexibility regions for every hour and probability level.

        Results are ordered by (hour, probability) whatever the completion
        order; infeasible hours are kept as status 'infeasible'.
        """
        if not p_levels:
            raise DomainError('At least one probability level is required')
        for p in p_levels:
            if not 0 < p < 1:
                raise DomainError(f'Probability level {p} must lie strictly between 0 and 1')

        app = current_app._get_current_object()
        cfg = app.config
        threads = threads or cfg.get('THREADS', 1)
        cap_fraction = cfg.get('OPERATIONAL_P_CAP', 0.9)

        impedances = NetworkService.impedance_sensitivity(net)
        sensitivities = {}
        for load_mult in sorted(set(profiles['load_mult'])):
            sensitivities[load_mult] = NetworkService.build_sensitivity(net, load_mult, impedances)

        jobs = [(hour, row.load_mult, row.solar_forecast_norm, p)
                for hour, row in profiles.iterrows() for p in sorted(p_levels)]

        def solve(job):
            hour, load_mult, solar_norm, probability = job
            with app.app_context():
                scenario, forecast = cls.build_scenario(
                    ders, error_model, int(hour), float(load_mult), float(solar_norm),
                    probability, cap_fraction)
                bounds = [cls.reformulate_bounds(der, p) for der, p in zip(ders, scenario.p_hat)]
                try:
                    return cls.compute_fr(net, sensitivities[load_mult], scenario, bounds, ders,
                                          forecast_kw=forecast)
                except InfeasibleError as exc:
                    app.logger.warning(str(exc))
                    return cls.infeasible_region(scenario, exc, forecast)

        app.logger.info(f'Sweeping {len(jobs)} (hour, P) cases on {threads} thread(s)')
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                regions = list(pool.map(solve, jobs))
        else:
            regions = [solve(job) for job in jobs]

        regions.sort(key=lambda r: (r.hour, r.probability))
        infeasible = sum(not r.is_feasible for r in regions)
        app.logger.info(f'Sweep finished: {len(regions) - infeasible} optimal, {infeasible} infeasible')
        return regions
