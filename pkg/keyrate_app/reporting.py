import dataclasses
import logging
from dataclasses import dataclass, field
from pathlib import Path

import pandas as pd
import yaml

from . import __version__
from .keyrate_service import CSV_COLUMNS

logger = logging.getLogger(__name__)

MANIFEST_PREFIX = '# '
FLOAT_FORMAT = '%.9e'


@dataclass
class RunManifest:
    """Provenance block written at the top of every output file."""
    config_path: str
    command: str
    distance_range: str = ''
    mode: str = ''
    output_path: str = ''
    seed: int = None
    version: str = __version__
    options: dict = field(default_factory=dict)

    def to_dict(self):
        return dataclasses.asdict(self)

    def header_lines(self):
        lines = []
        for key, value in self.to_dict().items():
            if key == 'options':
                for name in sorted(value):
                    lines.append(f"{MANIFEST_PREFIX}option.{name}: {value[name]}")
            else:
                lines.append(f"{MANIFEST_PREFIX}{key}: {'' if value is None else value}")
        return lines


def read_manifest(path):
    """Manifest keys from the comment header of a written file."""
    manifest = {}
    with open(path, encoding='utf-8') as fh:
        for line in fh:
            if not line.startswith(MANIFEST_PREFIX):
                break
            key, _, value = line[len(MANIFEST_PREFIX):].rstrip('\n').partition(': ')
            manifest[key] = value
    return manifest


def _emit(frame, fh, manifest):
    fh.write('\n'.join(manifest.header_lines()) + '\n')
    frame.to_csv(fh, index=False, float_format=FLOAT_FORMAT, na_rep='', lineterminator='\n')


def _write_frame(frame, path, manifest):
    """Write to ``path``; a file-like object is written in place."""
    if hasattr(path, 'write'):
        _emit(frame, path, manifest)
        return path
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8', newline='') as fh:
        _emit(frame, fh, manifest)
    return path


def write_sweep_csv(points, path, manifest):
    frame = pd.DataFrame([point.as_row() for point in points], columns=list(CSV_COLUMNS))
    frame = frame.astype(float)
    path = _write_frame(frame, path, manifest)
    logger.info(f"Wrote {len(frame)} rows to {path}")
    return path


def write_fixture_csv(rows, path, manifest):
    return _write_frame(pd.DataFrame(rows), path, manifest)


def write_report_yaml(points, path, manifest):
    """Per-distance diagnostics (decoy bounds, active constraints) as YAML."""
    report = {
        'manifest': manifest.to_dict(),
        'points': [
            {
                'distance_km': point.distance_km,
                'mu_opt': point.mu_opt,
                'rate_untrusted': point.rate_untrusted,
                'rate_trusted': point.rate_trusted,
                'raw_rate': point.raw_rate,
                'throughput_bps': point.throughput_bps,
                'delta_frac': point.delta_frac,
                'epsilon_sample': point.epsilon_sample,
                'decoy': point.diagnostics,
            }
            for point in points
        ],
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as fh:
        yaml.safe_dump(report, fh, sort_keys=False)
    logger.info(f"Wrote diagnostics report to {path}")
    return path
