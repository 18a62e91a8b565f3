import hashlib
import json
import os

from flask import current_app

from models.manifest import RunManifest
from services.exceptions import ParseError

MANIFEST_SUFFIX = '.manifest.json'

# Config keys recorded with every run
RECORDED_SETTINGS = (
    'ERROR_BINS', 'ERROR_MIN_COUNT', 'ERROR_HIST_CLASSES', 'V_MIN', 'V_MAX', 'P_LEVELS', 'VOLTAGE_CHECK_TOL',
    'SOLAR_PENETRATION', 'INVERTER_OVERSIZE', 'OPERATIONAL_P_CAP',
    'LP_PIVOT_TOL', 'LP_FEAS_TOL', 'LP_MAX_ITER', 'LP_REFACTOR_EVERY',
    'PF_TOLERANCE', 'PF_MAX_ITER', 'MC_SAMPLES', 'MC_SEED', 'MC_CHECK_VOLTAGES',
    'MC_SHARED_DRAW', 'CSV_FLOAT_FORMAT',
)


class ManifestService:
    """Provenance records written next to every output file."""

    @staticmethod
    def file_hash(path):
        digest = hashlib.sha256()
        with open(path, 'rb') as fh:
            for chunk in iter(lambda: fh.read(1 << 16), b''):
                digest.update(chunk)
        return digest.hexdigest()

    @staticmethod
    def manifest_path(output_path):
        return f'{output_path}{MANIFEST_SUFFIX}'

    @staticmethod
    def current_settings():
        cfg = current_app.config
        settings = {}
        for key in RECORDED_SETTINGS:
            value = cfg.get(key)
            settings[key] = list(value) if isinstance(value, tuple) else value
        return settings

    @classmethod
    def record(cls, command, inputs, options, outputs):
        """
        Write a manifest beside each output.

        `inputs` maps a role to a file path (None entries are skipped) and
        `options` holds the command's own arguments.
        """
        manifest = RunManifest(
            command=command,
            inputs={
                role: {'path': os.path.abspath(path), 'sha256': cls.file_hash(path)}
                for role, path in inputs.items() if path
            },
            parameters={'options': options, 'settings': cls.current_settings()},
            outputs=[os.path.abspath(path) for path in outputs],
            tool_version=current_app.config.get('TOOL_VERSION', ''),
        ).stamp()

        for path in outputs:
            with open(cls.manifest_path(path), 'w') as fh:
                json.dump(manifest.to_dict(), fh, indent=2)
                fh.write('\n')
        current_app.logger.debug(f'Recorded {command} run for {len(outputs)} output(s)')
        return manifest

    @staticmethod
    def load(path):
        try:
            with open(path) as fh:
                return RunManifest.from_dict(json.load(fh))
        except OSError as exc:
            raise ParseError(f'Cannot read manifest {path}: {exc}') from exc
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ParseError(f'Manifest {path} is malformed: {exc}') from exc

    @classmethod
    def changed_inputs(cls, manifest):
        """Roles whose input file no longer matches its recorded hash."""
        changed = []
        for role, entry in manifest.inputs.items():
            path = entry['path']
            if not os.path.exists(path) or cls.file_hash(path) != entry['sha256']:
                changed.append(role)
        return changed
