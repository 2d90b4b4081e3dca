"""
Result files written by the msb command.

Every float in a CSV is written with CSV_FLOAT_FORMAT; JSON documents are
indented and key-sorted. Each run directory also gets a manifest.json.
"""

import csv
import json
import platform
from pathlib import Path
from typing import Dict, Iterable, List, Sequence

import numpy as np
import psutil

from msb_lab.versioning import get_artifact_version

from ..constants import CSV_FLOAT_FORMAT

RATES_HEADER = ['N', 'rep', 'statistic', 'converged', 'seed']
SUMMARY_HEADER = ['N', 'mean', 'variance', 'mse', 'stderr', 'n_reps']
SLOPE_HEADER = ['slope', 'intercept', 'r2', 'n_points']
QUANTILES_HEADER = ['N', 'q50', 'q90', 'observable']
GAMMA_HEADER = ['epsilon', 's_eps', 's_exact', 'upper_bound', 'w2_to_exact', 'sweeps', 'converged']
STABILITY_HEADER = ['delta', 'aggregate_w2', 'w1_barycenter', 'rhs', 'c_fitted']


def _cell(value):
    if isinstance(value, (bool, np.bool_)):
        return 'true' if value else 'false'
    if isinstance(value, (float, np.floating)):
        return format(float(value), CSV_FLOAT_FORMAT)
    return value


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> int:
    """Write a header and rows; returns the number of data rows."""
    count = 0
    with open(path, 'w', newline='', encoding='utf-8') as handle:
        writer = csv.writer(handle, lineterminator='\n')
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in row])
            count += 1
    return count


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, np.generic):
        return value.item()
    return value


def write_json(path: Path, document: Dict) -> None:
    with open(path, 'w', encoding='utf-8') as handle:
        json.dump(_jsonable(document), handle, indent=2, sort_keys=True)
        handle.write('\n')


def read_json(path: Path) -> Dict:
    with open(path, encoding='utf-8') as handle:
        return json.load(handle)


def write_rate_files(out: Path, rate, prefix: str = '') -> List[Path]:
    """rates.csv, summary.csv and slope.csv of one RateResult, optionally prefixed."""
    rates = out / f'{prefix}rates.csv'
    summary = out / f'{prefix}summary.csv'
    slope = out / f'{prefix}slope.csv'
    write_csv(rates, RATES_HEADER, (
        (r.N, r.rep, r.statistic, r.converged, r.seed) for r in rate.records
    ))
    write_csv(summary, SUMMARY_HEADER, (
        (s.N, s.mean, s.variance, s.mse, s.stderr, s.n_reps) for s in rate.summary
    ))
    fit = rate.fit
    write_csv(slope, SLOPE_HEADER, [(fit.slope, fit.intercept, fit.r2, fit.n_points)])
    return [rates, summary, slope]


def write_concentration_files(out: Path, result) -> List[Path]:
    written = []
    if result.barycenter is not None:
        written += write_rate_files(out, result.barycenter)
    written += write_rate_files(out, result.coupling, prefix='coupling_')
    quantiles = out / 'quantiles.csv'
    write_csv(quantiles, QUANTILES_HEADER, ((q.N, q.q50, q.q90, q.observable) for q in result.quantiles))
    return written + [quantiles]


def write_gamma_file(out: Path, result) -> List[Path]:
    path = out / 'gamma.csv'
    write_csv(path, GAMMA_HEADER, (
        (r.epsilon, r.s_eps, r.s_exact, r.upper_bound, r.w2_to_exact, r.sweeps, r.converged)
        for r in result.rows
    ))
    return [path]


def write_stability_file(out: Path, result) -> List[Path]:
    path = out / 'stability.csv'
    write_csv(path, STABILITY_HEADER, (
        (r.delta, r.aggregate_w2, r.w1_barycenter, r.rhs, r.c_fitted) for r in result.rows
    ))
    return [path]


def host_facts() -> Dict:
    """Machine facts recorded with every run."""
    memory = psutil.virtual_memory()
    return {
        'platform': platform.platform(),
        'python': platform.python_version(),
        'numpy': np.__version__,
        'cpu_count': psutil.cpu_count(logical=True),
        'physical_cpus': psutil.cpu_count(logical=False),
        'memory_total': memory.total,
    }


def build_manifest(command: str, config_hash: str, seed: int, wall_time: float,
                   files: Sequence[Path], extra: Dict = None) -> Dict:
    return {
        'command': command,
        'config_hash': config_hash,
        'seed': seed,
        'version': get_artifact_version(),
        'wall_time_seconds': wall_time,
        'files': sorted(Path(f).name for f in files),
        'host': host_facts(),
        **(extra or {}),
    }
