import math

import numpy as np
from flask import current_app

from models.validation import McConfig, McReport
from services.exceptions import DomainError, DimensionError, NothingValidatedError
from services.forecast_service import ForecastService
from services.flexibility_service import FlexibilityService
from services.network_service import NetworkService
from services.power_flow_service import PowerFlowService

# Normal quantile for the two-sided 95% interval on a violation rate
Z_95 = 1.96


class ValidationService:
    """Monte Carlo check of flexibility regions against sampled solar output."""

    @staticmethod
    def standard_normals(seed, n_samples, slot):
        """
        Deviates of one Philox stream; sample i is always the i-th value.

        Slot 0 is the common-mode stream, slot j + 1 belongs to DER j.
        """
        bit_gen = np.random.Philox(key=seed, counter=[0, 0, slot, 0])
        return np.random.Generator(bit_gen).standard_normal(n_samples)

    @classmethod
    def sample_generation(cls, region, ders, error_model, mc_config, cap_fraction=0.9):
        """
        Realized active output per sample and DER (kW), shape (n, n_der).

        Each DER draws rel = mu + sigma * xi from the bin of its forecast and
        produces forecast (1 + rel), clamped to [0, p_cap].
        """
        forecast = region.forecast_kw
        if forecast is None or len(forecast) != len(ders):
            raise DimensionError('Region must carry one forecast per DER')

        n = mc_config.n_samples
        if mc_config.shared_draw:
            common = cls.standard_normals(mc_config.seed, n, 0)

        samples = np.zeros((n, len(ders)))
        for j, der in enumerate(ders):
            if forecast[j] == 0:
                continue
            b = ForecastService.lookup_bin(error_model, forecast[j] / der.capacity_kw)
            xi = common if mc_config.shared_draw else cls.standard_normals(mc_config.seed, n, j + 1)
            p = forecast[j] * (1.0 + b.mu + b.sigma * xi)
            samples[:, j] = np.clip(p, 0.0, der.p_cap(cap_fraction))
        return samples

    @staticmethod
    def hardware_violations(dispatch, samples, ders):
        """Boolean (n, n_der): q^2 > S^2 - p^2 for the fixed dispatch."""
        s_sq = np.array([der.s_rating ** 2 for der in ders])
        headroom = s_sq - samples ** 2
        return np.asarray(dispatch) ** 2 > headroom + 1e-9 * s_sq

    @classmethod
    def validate_fr(cls, net, region, ders, error_model, mc_config, v_lo=None, v_hi=None):
        """Empirical violation rates of a region's extreme dispatches."""
        if not region.is_feasible:
            raise DomainError(f'Hour {region.hour} P={region.probability:g} has no feasible region')
        cfg = current_app.config
        cap_fraction = cfg.get('OPERATIONAL_P_CAP', 0.9)
        v_lo = v_lo if v_lo is not None else cfg.get('V_MIN', 0.95)
        v_hi = v_hi if v_hi is not None else cfg.get('V_MAX', 1.05)

        samples = cls.sample_generation(region, ders, error_model, mc_config, cap_fraction)
        n = mc_config.n_samples

        worst = None
        for name, dispatch in region.dispatches().items():
            violated = cls.hardware_violations(dispatch, samples, ders)
            rate = float(np.mean(violated.any(axis=1))) if ders else 0.0
            per_der = violated.mean(axis=0) if ders else np.zeros(0)
            if worst is None or rate > worst[1]:
                worst = (name, rate, per_der)
        _, rate, per_der = worst

        voltage_rate, indeterminate = None, 0
        if mc_config.check_voltages:
            voltage_rate, indeterminate = cls._voltage_check(
                net, region, ders, samples, v_lo, v_hi)

        report = McReport(
            hour=region.hour,
            probability=region.probability,
            n=n,
            seed=mc_config.seed,
            hardware_violation_rate=rate,
            per_der_max_rate=float(per_der.max(initial=0.0)),
            ci_halfwidth=Z_95 * math.sqrt(mc_config.alpha * (1 - mc_config.alpha) / n),
            alpha=mc_config.alpha,
            voltage_violation_rate=voltage_rate,
            indeterminate=indeterminate,
            per_der_rates=tuple(float(r) for r in per_der),
        )
        verdict = 'pass' if report.passed else 'FAIL'
        current_app.logger.info(
            f'Hour {region.hour} P={region.probability:g}: violation rate '
            f'{rate:.4f} vs alpha {mc_config.alpha:.4f} +/- {report.ci_halfwidth:.4f} ({verdict})')
        return report

    @staticmethod
    def _voltage_check(net, region, ders, samples, v_lo, v_hi):
        """
        Rerun the nonlinear power flow for every sample and both extremes.

        Reactive output is scaled back onto the inverter circle first. A
        sample counts once if either extreme leaves the voltage band; runs
        that do not converge are indeterminate.
        """
        der_index = FlexibilityService.der_incidence(net, ders)
        s_rating = np.array([der.s_rating for der in ders])
        z_path = NetworkService.path_impedance(net)
        n_np = net.n_node_phases

        violations, indeterminate = 0, 0
        for p in samples:
            room = np.sqrt(np.maximum(s_rating ** 2 - p ** 2, 0.0))
            outside, unknown = False, False
            for dispatch in region.dispatches().values():
                q = np.sign(dispatch) * np.minimum(np.abs(dispatch), room)
                p_inj = np.zeros(n_np)
                q_inj = np.zeros(n_np)
                np.add.at(p_inj, der_index, p / net.s_base)
                np.add.at(q_inj, der_index, q / net.s_base)
                pf = PowerFlowService.solve_pf(net, p_inj, q_inj, load_mult=region.load_mult,
                                               z_path=z_path)
                if not pf.converged:
                    unknown = True
                    continue
                if PowerFlowService.check_limits(pf, v_lo, v_hi):
                    outside = True
            if unknown and not outside:
                indeterminate += 1
            elif outside:
                violations += 1

        decided = len(samples) - indeterminate
        rate = violations / decided if decided else float('nan')
        return rate, indeterminate

    @classmethod
    def validate_regions(cls, net, regions, ders, error_model, n_samples=None, seed=None,
                         alpha=None, check_voltages=None, shared_draw=None):
        """
        Validate every feasible region.

        With `alpha` unset each region is checked at its own risk 1 - P;
        otherwise only regions whose 1 - P equals alpha are checked.
        Raises NothingValidatedError when no region is left to check.
        """
        cfg = current_app.config
        n_samples = n_samples if n_samples is not None else cfg.get('MC_SAMPLES', 10_000)
        seed = seed if seed is not None else cfg.get('MC_SEED', 20240101)
        check_voltages = check_voltages if check_voltages is not None else cfg.get('MC_CHECK_VOLTAGES', False)
        shared_draw = shared_draw if shared_draw is not None else cfg.get('MC_SHARED_DRAW', True)

        reports = []
        for region in regions:
            risk = 1.0 - region.probability
            if alpha is not None and abs(risk - alpha) > 1e-6:
                continue
            if not region.is_feasible:
                current_app.logger.warning(
                    f'Skipping hour {region.hour} P={region.probability:g}: region is infeasible')
                continue
            mc_config = McConfig(n_samples=n_samples, seed=seed, alpha=risk,
                                 check_voltages=check_voltages, shared_draw=shared_draw)
            reports.append(cls.validate_fr(net, region, ders, error_model, mc_config))

        if not reports:
            wanted = f' at alpha {alpha:g}' if alpha is not None else ''
            raise NothingValidatedError(
                f'No feasible region{wanted} among {len(regions)}; nothing was checked')
        return reports
