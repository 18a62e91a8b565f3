import json
import math

import numpy as np
import pandas as pd
from flask import current_app
from scipy.special import ndtr

from models.forecast import ForecastRecord, ErrorBin, ErrorModel, ZERO_BIN
from services.exceptions import ParseError, DomainError, InsufficientDataError

HISTORY_COLUMNS = ('timestamp', 'forecast_kw', 'actual_kw', 'capacity_kw')
HISTOGRAM_COLUMNS = ['bin_lo', 'bin_hi', 'err_lo', 'err_hi', 'count', 'fitted_count']

# Rational approximation of the standard normal quantile (Acklam)
_A = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
      1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_B = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
      6.680131188771972e+01, -1.328068155288572e+01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
      -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
      3.754408661907416e+00)
_P_LOW = 0.02425

_SQRT_2PI = math.sqrt(2.0 * math.pi)


class ForecastService:
    """Solar forecast error statistics and quantile-shifted generation."""

    @staticmethod
    def read_history(path):
        """Parse the historical forecast CSV into ForecastRecords."""
        try:
            frame = pd.read_csv(path)
        except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
            raise ParseError(f'Cannot read history file {path}: {exc}') from exc

        missing = [col for col in HISTORY_COLUMNS if col not in frame.columns]
        if missing:
            raise ParseError(f'History file {path} is missing columns: {", ".join(missing)}')

        try:
            timestamps = pd.to_datetime(frame['timestamp'])
            values = frame[['forecast_kw', 'actual_kw', 'capacity_kw']].astype(float)
        except (ValueError, TypeError) as exc:
            raise ParseError(f'History file {path} has malformed values: {exc}') from exc

        if values.isna().any().any():
            raise ParseError(f'History file {path} has empty cells')
        if (values['capacity_kw'] <= 0).any():
            raise ParseError(f'History file {path}: capacity_kw must be positive')
        if (values[['forecast_kw', 'actual_kw']] < 0).any().any():
            raise ParseError(f'History file {path}: power values must be nonnegative')

        return [
            ForecastRecord(timestamp=ts.to_pydatetime(), forecast_kw=f, actual_kw=a, capacity_kw=c)
            for ts, f, a, c in zip(timestamps, values['forecast_kw'],
                                   values['actual_kw'], values['capacity_kw'])
        ]

    @staticmethod
    def clean_and_normalize(records):
        """
        Drop night rows and compute (f_norm, rel_err) pairs.

        Returns two arrays. Forecasts above capacity are clipped to f_norm = 1.
        """
        if not records:
            raise InsufficientDataError('No forecast records supplied')

        day = [r for r in records if not r.is_night]
        if not day:
            raise InsufficientDataError('Every record has a zero forecast; nothing left after cleaning')

        forecast = np.array([r.forecast_kw for r in day])
        actual = np.array([r.actual_kw for r in day])
        capacity = np.array([r.capacity_kw for r in day])

        f_norm = forecast / capacity
        clipped = int(np.count_nonzero(f_norm > 1.0))
        if clipped:
            current_app.logger.warning(f'{clipped} records forecast above capacity; clipped to 1')
            f_norm = np.minimum(f_norm, 1.0)

        rel_err = (actual - forecast) / forecast
        current_app.logger.debug(f'Kept {len(day)} of {len(records)} records after night removal')
        return f_norm, rel_err

    @staticmethod
    def fit_error_model(f_norm, rel_err, n_bins=12, min_count=20):
        """
        Group errors into equal-width forecast bins and fit a normal per bin.

        Bins short of `min_count` samples are merged into whichever neighbour
        holds fewer samples (left on ties) until every bin qualifies.
        """
        f_norm = np.asarray(f_norm, dtype=float)
        rel_err = np.asarray(rel_err, dtype=float)
        if n_bins < 1:
            raise DomainError('n_bins must be at least 1')
        if f_norm.shape != rel_err.shape:
            raise DomainError('f_norm and rel_err must have the same length')
        if np.any(f_norm <= 0) or np.any(f_norm > 1):
            raise DomainError('Normalized forecasts must lie in (0, 1]')
        if len(f_norm) < min_count:
            raise InsufficientDataError(
                f'{len(f_norm)} samples cannot fill a bin of at least {min_count}')

        edges = np.linspace(0.0, 1.0, n_bins + 1)
        # Bin i covers (edges[i], edges[i+1]]
        which = np.clip(np.searchsorted(edges, f_norm, side='left') - 1, 0, n_bins - 1)
        groups = [[edges[i], edges[i + 1], rel_err[which == i]] for i in range(n_bins)]

        while len(groups) > 1:
            short = next((i for i, g in enumerate(groups) if len(g[2]) < min_count), None)
            if short is None:
                break
            if short == 0:
                other = 1
            elif short == len(groups) - 1:
                other = short - 1
            else:
                left, right = len(groups[short - 1][2]), len(groups[short + 1][2])
                other = short - 1 if left <= right else short + 1
            lo_i, hi_i = sorted((short, other))
            merged = [groups[lo_i][0], groups[hi_i][1],
                      np.concatenate([groups[lo_i][2], groups[hi_i][2]])]
            groups[lo_i:hi_i + 1] = [merged]

        bins = []
        for lo, hi, errors in groups:
            sigma = float(np.std(errors, ddof=1)) if len(errors) > 1 else 0.0
            bins.append(ErrorBin(lo=float(lo), hi=float(hi), count=len(errors),
                                 mu=float(np.mean(errors)), sigma=sigma))
        return ErrorModel(bins=tuple(bins))

    @staticmethod
    def error_histograms(model, f_norm, rel_err, n_classes=20):
        """
        Per-bin histogram of relative errors next to the fitted normal.

        One row per (bin, error class) with the observed count and the count
        the bin's N(mu, sigma) predicts for that class.
        """
        if n_classes < 1:
            raise DomainError('n_classes must be at least 1')
        f_norm = np.asarray(f_norm, dtype=float)
        rel_err = np.asarray(rel_err, dtype=float)
        if f_norm.shape != rel_err.shape:
            raise DomainError('f_norm and rel_err must have the same length')

        rows = []
        for b in model.bins:
            errors = rel_err[(f_norm > b.lo) & (f_norm <= b.hi)]
            if errors.size == 0:
                continue
            counts, edges = np.histogram(errors, bins=n_classes)
            if b.sigma > 0:
                mass = np.diff(ndtr((edges - b.mu) / b.sigma))
            else:
                mass = ((edges[:-1] <= b.mu) & (b.mu <= edges[1:])).astype(float)
                mass /= max(mass.sum(), 1.0)
            for k in range(n_classes):
                rows.append((b.lo, b.hi, edges[k], edges[k + 1], int(counts[k]), errors.size * mass[k]))
        return pd.DataFrame(rows, columns=HISTOGRAM_COLUMNS)

    @staticmethod
    def lookup_bin(model, f_norm):
        """Bin whose (lo, hi] range holds f_norm; zero forecasts get ZERO_BIN."""
        if f_norm == 0:
            return ZERO_BIN
        if not 0 < f_norm <= 1:
            raise DomainError(f'Normalized forecast {f_norm} is outside (0, 1]')
        for b in model.bins:
            if b.contains(f_norm):
                return b
        # Rounding at the top edge
        return model.bins[-1]

    @staticmethod
    def normal_cdf(z):
        return ndtr(z)

    @staticmethod
    def inv_norm_cdf(probability):
        """Standard normal quantile, |Phi(z) - P| <= 1e-9."""
        p = float(probability)
        if not 0.0 < p < 1.0:
            raise DomainError(f'Probability {probability} must lie strictly between 0 and 1')

        if p < _P_LOW:
            q = math.sqrt(-2.0 * math.log(p))
            z = (((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / \
                ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0)
        elif p <= 1.0 - _P_LOW:
            q = p - 0.5
            r = q * q
            z = (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q / \
                (((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0)
        else:
            q = math.sqrt(-2.0 * math.log(1.0 - p))
            z = -(((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / \
                ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0)

        # One Newton step on Phi
        density = math.exp(-0.5 * z * z) / _SQRT_2PI
        z -= (float(ndtr(z)) - p) / density
        return z

    @classmethod
    def adjust_forecast(cls, model, forecast_kw, capacity_kw, probability, p_cap_kw):
        """Quantile-shifted generation forecast(1 + mu + z sigma), clamped to [0, p_cap]."""
        if forecast_kw < 0:
            raise DomainError('Forecast must be nonnegative')
        if p_cap_kw <= 0:
            raise DomainError('Operational cap must be positive')
        z = cls.inv_norm_cdf(probability)
        if forecast_kw == 0:
            return 0.0
        b = cls.lookup_bin(model, forecast_kw / capacity_kw)
        p_hat = forecast_kw * (1.0 + b.mu + z * b.sigma)
        return float(min(max(p_hat, 0.0), p_cap_kw))

    @staticmethod
    def save_model(model, path):
        with open(path, 'w') as fh:
            json.dump(model.to_dict(), fh, indent=2)

    @staticmethod
    def load_model(path):
        """Read an error model JSON and check that its bins tile (0, 1]."""
        try:
            with open(path) as fh:
                model = ErrorModel.from_dict(json.load(fh))
        except OSError as exc:
            raise ParseError(f'Cannot read error model {path}: {exc}') from exc
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise ParseError(f'Error model {path} is malformed: {exc}') from exc

        if not model.bins:
            raise ParseError(f'Error model {path} has no bins')
        previous = 0.0
        for b in model.bins:
            if abs(b.lo - previous) > 1e-9 or b.hi <= b.lo or b.sigma < 0:
                raise ParseError(f'Error model {path}: bins must be contiguous over (0, 1]')
            previous = b.hi
        if abs(previous - 1.0) > 1e-9:
            raise ParseError(f'Error model {path}: bins must end at 1')
        return model
