import json
import math

import numpy as np
import pandas as pd
from flask import current_app, render_template_string

from models.der import DerSpec
from models.flexibility import FlexibilityRegion
from services.exceptions import ParseError

TABLE_COLUMNS = ['hour', 'probability', 'q_sub_max_kvar', 'q_sub_min_kvar', 'status',
                 'q_sub_base_kvar']
# q_sub_base_kvar is optional when reading a table back
REQUIRED_COLUMNS = TABLE_COLUMNS[:5]

PROFILE_COLUMNS = ['hour', 'probability', 'forecast_kw', 'p_hat_kw']

# Band fill per probability level, lowest level first
BAND_COLORS = ('#9ecae1', '#4292c6', '#08519c', '#08306b')


class ReportService:
    """Result files: region table, dispatch detail and the band plot."""

    TEMPLATES = {
        'flexibility_svg': '''<svg xmlns="http://www.w3.org/2000/svg" width="{{ width }}" height="{{ height }}" viewBox="0 0 {{ width }} {{ height }}" font-family="sans-serif" font-size="11">
  <rect x="0" y="0" width="{{ width }}" height="{{ height }}" fill="white"/>
  <text x="{{ width / 2 }}" y="18" text-anchor="middle" font-size="13">Substation VAR flexibility by hour</text>
{% for tick in y_ticks %}  <line x1="{{ left }}" y1="{{ tick.y }}" x2="{{ right }}" y2="{{ tick.y }}" stroke="#e0e0e0"/>
  <text x="{{ left - 6 }}" y="{{ tick.y + 4 }}" text-anchor="end">{{ tick.label }}</text>
{% endfor %}{% for tick in x_ticks %}  <text x="{{ tick.x }}" y="{{ bottom + 16 }}" text-anchor="middle">{{ tick.label }}</text>
{% endfor %}{% for band in bands %}{% for polygon in band.polygons %}  <polygon points="{{ polygon }}" fill="{{ band.color }}" fill-opacity="0.55" stroke="{{ band.color }}"/>
{% endfor %}{% endfor %}{% if zero_y is not none %}  <line x1="{{ left }}" y1="{{ zero_y }}" x2="{{ right }}" y2="{{ zero_y }}" stroke="black" stroke-width="0.8"/>
{% endif %}{% for segment in base_line %}  <path d="{{ segment }}" fill="none" stroke="black" stroke-width="1.2" stroke-dasharray="5,4"/>
{% endfor %}  <line x1="{{ left }}" y1="{{ top }}" x2="{{ left }}" y2="{{ bottom }}" stroke="black"/>
  <line x1="{{ left }}" y1="{{ bottom }}" x2="{{ right }}" y2="{{ bottom }}" stroke="black"/>
  <text x="{{ (left + right) / 2 }}" y="{{ height - 8 }}" text-anchor="middle">hour</text>
  <text x="14" y="{{ (top + bottom) / 2 }}" text-anchor="middle" transform="rotate(-90 14 {{ (top + bottom) / 2 }})">q_sub (kVAr)</text>
{% for band in bands %}  <rect x="{{ right - 110 }}" y="{{ top + 6 + loop.index0 * 16 }}" width="12" height="10" fill="{{ band.color }}"/>
  <text x="{{ right - 92 }}" y="{{ top + 15 + loop.index0 * 16 }}">P = {{ band.label }}</text>
{% endfor %}</svg>
''',
    }

    # ===========================================
    # Region table
    # ===========================================

    @staticmethod
    def region_frame(regions):
        return pd.DataFrame(
            [[r.hour, r.probability, r.q_sub_max, r.q_sub_min, r.status, r.q_sub_base]
             for r in regions],
            columns=TABLE_COLUMNS,
        )

    @classmethod
    def write_region_table(cls, regions, path, float_format=None):
        float_format = float_format or current_app.config.get('CSV_FLOAT_FORMAT', '%.6g')
        cls.region_frame(regions).to_csv(path, index=False, float_format=float_format,
                                         na_rep='nan', lineterminator='\n')

    @staticmethod
    def read_region_table(path):
        try:
            frame = pd.read_csv(path)
        except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
            raise ParseError(f'Cannot read region table {path}: {exc}') from exc
        if list(frame.columns[:len(REQUIRED_COLUMNS)]) != REQUIRED_COLUMNS:
            raise ParseError(f'Region table {path} must have columns {",".join(TABLE_COLUMNS)}')
        return frame

    # ===========================================
    # Adjusted solar profile
    # ===========================================

    @staticmethod
    def solar_profile_frame(regions):
        """Feeder-total forecast and quantile-shifted output per hour and probability level."""
        return pd.DataFrame(
            [[r.hour, r.probability,
              float(np.sum(r.forecast_kw)) if r.forecast_kw is not None else float('nan'),
              float(np.sum(r.p_hat)) if r.p_hat is not None else float('nan')]
             for r in regions],
            columns=PROFILE_COLUMNS,
        )

    @classmethod
    def write_solar_profile(cls, regions, path, float_format=None):
        float_format = float_format or current_app.config.get('CSV_FLOAT_FORMAT', '%.6g')
        cls.solar_profile_frame(regions).to_csv(path, index=False, float_format=float_format,
                                                na_rep='nan', lineterminator='\n')

    # ===========================================
    # Dispatch detail
    # ===========================================

    @staticmethod
    def write_dispatch(regions, ders, path):
        data = {
            'ders': [der.to_dict() for der in ders],
            'regions': [region.to_dict() for region in regions],
        }
        with open(path, 'w') as fh:
            json.dump(data, fh, indent=2)
            fh.write('\n')

    @staticmethod
    def read_dispatch(path):
        """DERs and regions from a dispatch detail file."""
        try:
            with open(path) as fh:
                data = json.load(fh)
            ders = [DerSpec.from_dict(d) for d in data['ders']]
            regions = [FlexibilityRegion.from_dict(r) for r in data['regions']]
        except OSError as exc:
            raise ParseError(f'Cannot read dispatch file {path}: {exc}') from exc
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise ParseError(f'Dispatch file {path} is malformed: {exc}') from exc
        return ders, regions

    @staticmethod
    def write_json(data, path):
        with open(path, 'w') as fh:
            json.dump(data, fh, indent=2)
            fh.write('\n')

    # ===========================================
    # Plot
    # ===========================================

    @classmethod
    def render_svg(cls, table, width=720, height=360):
        """
        Bands of [q_sub_min, q_sub_max] per probability level against hour.

        The widest (lowest P) band is drawn first. The dashed path is the base
        case with every DER at zero VAR, taken from the lowest P level.
        Infeasible hours leave gaps.
        """
        left, right, top, bottom = 70, width - 20, 30, height - 40
        levels = sorted(table['probability'].unique())
        has_base = 'q_sub_base_kvar' in table.columns

        value_columns = ['q_sub_max_kvar', 'q_sub_min_kvar'] + (['q_sub_base_kvar'] if has_base else [])
        values = table[value_columns].to_numpy(dtype=float)
        finite = values[np.isfinite(values)]
        lo, hi = (float(finite.min()), float(finite.max())) if finite.size else (-1.0, 1.0)
        if hi - lo < 1e-9:
            lo, hi = lo - 1.0, hi + 1.0
        pad = 0.05 * (hi - lo)
        lo, hi = lo - pad, hi + pad

        def x_of(hour):
            return left + (right - left) * hour / 23.0

        def y_of(q):
            return bottom - (bottom - top) * (q - lo) / (hi - lo)

        def segments(frame):
            """Runs of consecutive hours with finite extremes."""
            runs, run = [], []
            for row in frame.itertuples(index=False):
                if math.isfinite(row.q_sub_max_kvar) and math.isfinite(row.q_sub_min_kvar):
                    if run and row.hour != run[-1].hour + 1:
                        runs.append(run)
                        run = []
                    run.append(row)
                elif run:
                    runs.append(run)
                    run = []
            if run:
                runs.append(run)
            return runs

        bands, base_line = [], []
        for i, level in enumerate(levels):
            frame = table[table['probability'] == level].sort_values('hour')
            polygons = []
            for run in segments(frame):
                upper = [f'{x_of(r.hour):.2f},{y_of(r.q_sub_max_kvar):.2f}' for r in run]
                lower = [f'{x_of(r.hour):.2f},{y_of(r.q_sub_min_kvar):.2f}' for r in reversed(run)]
                polygons.append(' '.join(upper + lower))
                if i == 0 and has_base:
                    points = [f'{x_of(r.hour):.2f},{y_of(r.q_sub_base_kvar):.2f}'
                              for r in run if math.isfinite(r.q_sub_base_kvar)]
                    if points:
                        base_line.append('M ' + ' L '.join(points))
            bands.append({'label': f'{level:g}', 'color': BAND_COLORS[i % len(BAND_COLORS)],
                          'polygons': polygons})

        step = (hi - lo) / 5
        y_ticks = [{'y': round(y_of(lo + k * step), 2), 'label': f'{lo + k * step:.0f}'} for k in range(6)]
        x_ticks = [{'x': round(x_of(h), 2), 'label': str(h)} for h in range(0, 24, 3)]
        zero_y = round(y_of(0.0), 2) if lo < 0 < hi else None

        return render_template_string(
            cls.TEMPLATES['flexibility_svg'],
            width=width, height=height, left=left, right=right, top=top, bottom=bottom,
            bands=bands, base_line=base_line, y_ticks=y_ticks, x_ticks=x_ticks, zero_y=zero_y,
        )

    @classmethod
    def write_svg(cls, table, path):
        with open(path, 'w') as fh:
            fh.write(cls.render_svg(table))
