"""
EdgeForge Reporting Module
JSON, CSV and PNG artifacts for experiment and sweep reports
"""

import json
import os
from typing import Dict, Iterable, List, Sequence

import pandas as pd

from core.experiment import DiagnosticRow, MetricsReport, sweep_series
from utils.chart_generator import generate_line_chart
from utils.colors import log_success, log_warning
from utils.errors import EmptyInputError, ReportWriteError, SchemaError

REPORT_FORMAT = 'edgeforge-report'
REPORT_VERSION = 1

# Stable column orders
REPORT_COLUMNS = ['axis', 'value', 'variant', 'seed', 'f1', 'precision', 'recall', 'valid_f1',
                  'final_train_loss', 'final_test_loss', 'epochs']
CURVE_COLUMNS = ['axis', 'value', 'variant', 'seed', 'epoch', 'train_loss', 'test_loss',
                 'edges_used', 'dropped']
TIMING_COLUMNS = ['axis', 'value', 'variant', 'seed', 'epoch', 'seconds']
SERIES_COLUMNS = ['axis', 'value', 'variant', 'f1_mean', 'f1_std', 'minutes_mean']
DIAGNOSTIC_COLUMNS = ['variant', 'depth', 'epoch', 'edges', 'nodes', 'components', 'lambda',
                      'contraction', 's', 'd_M', 'epsilon', 'l_hat']


# ==================== TABLES ====================

def report_rows(reports: Sequence[MetricsReport]) -> List[dict]:
    rows = []
    for report in reports:
        for r in report.results:
            rows.append({
                'axis': report.axis,
                'value': report.value,
                'variant': r.variant,
                'seed': r.seed,
                'f1': r.f1,
                'precision': r.precision,
                'recall': r.recall,
                'valid_f1': r.valid_f1,
                'final_train_loss': r.train_loss[-1],
                'final_test_loss': r.test_loss[-1],
                'epochs': len(r.train_loss),
            })
    return rows


def curve_rows(reports: Sequence[MetricsReport]) -> List[dict]:
    rows = []
    for report in reports:
        for r in report.results:
            for i, (train, test) in enumerate(zip(r.train_loss, r.test_loss)):
                rows.append({
                    'axis': report.axis, 'value': report.value, 'variant': r.variant, 'seed': r.seed,
                    'epoch': i + 1, 'train_loss': train, 'test_loss': test,
                    'edges_used': r.edges_used[i], 'dropped': r.dropped[i],
                })
    return rows


def timing_rows(reports: Sequence[MetricsReport]) -> List[dict]:
    return [
        {'axis': report.axis, 'value': report.value, 'variant': r.variant, 'seed': r.seed,
         'epoch': i + 1, 'seconds': seconds}
        for report in reports for r in report.results
        for i, seconds in enumerate(r.epoch_seconds)
    ]


def mean_curves(report: MetricsReport) -> Dict[str, Dict[str, List[float]]]:
    """Seed-averaged train/test loss per variant"""
    curves = {}
    for variant in report.variants:
        rows = report.for_variant(variant)
        length = min(len(r.train_loss) for r in rows)
        curves[variant] = {
            'train': [sum(r.train_loss[i] for r in rows) / len(rows) for i in range(length)],
            'test': [sum(r.test_loss[i] for r in rows) / len(rows) for i in range(length)],
        }
    return curves


# ==================== WRITERS ====================

def _write_csv(path, rows, columns):
    pd.DataFrame(rows, columns=columns).to_csv(path, index=False, lineterminator='\n')


def _write_json(path, payload):
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write('\n')


def _write_png(path, data):
    with open(path, 'wb') as f:
        f.write(data)


def _charts(reports: Sequence[MetricsReport]) -> Dict[str, bytes]:
    charts = {}
    first = reports[0]
    series = {}
    for variant, curve in mean_curves(first).items():
        series[f"{variant} train"] = [(i + 1, y) for i, y in enumerate(curve['train'])]
        series[f"{variant} test"] = [(i + 1, y) for i, y in enumerate(curve['test'])]
    png = generate_line_chart("Loss per epoch", series, "epoch", "loss")
    if png is not None:
        charts['loss_curves.png'] = png

    if any(r.axis for r in reports):
        rows = sweep_series(reports)
        axis = rows[0]['axis']
        for metric, label in (('f1_mean', 'test F1'), ('minutes_mean', 'training minutes')):
            by_variant = {}
            for row in rows:
                by_variant.setdefault(row['variant'], []).append((float(row['value']), row[metric]))
            png = generate_line_chart(f"{label} vs {axis}", by_variant, axis, label)
            if png is not None:
                charts[f"sweep_{metric.split('_')[0]}.png"] = png
    return charts


def emit_report(reports: Sequence[MetricsReport], out_dir, charts: bool = True) -> List[str]:
    """Write report.json, report.csv, curves.csv, timing.json/csv, series.csv and charts.

    report.json, report.csv and curves.csv carry no wall-clock values and are
    byte-identical for identical runs.
    """
    reports = list(reports)
    if not reports:
        raise EmptyInputError("no reports to emit")

    written = []
    try:
        os.makedirs(out_dir, exist_ok=True)

        def path(name):
            written.append(os.path.join(out_dir, name))
            return written[-1]

        _write_json(path('report.json'), {
            'format': REPORT_FORMAT,
            'version': REPORT_VERSION,
            'reports': [r.to_dict() for r in reports],
        })
        _write_csv(path('report.csv'), report_rows(reports), REPORT_COLUMNS)
        _write_csv(path('curves.csv'), curve_rows(reports), CURVE_COLUMNS)
        _write_json(path('timing.json'), {
            'reports': [
                {'axis': r.axis, 'value': r.value, 'aggregate': {
                    variant: {'training_minutes': entry['training_minutes'],
                              'epoch_seconds': entry['epoch_seconds']}
                    for variant, entry in r.aggregate(include_timing=True).items()
                }, 'results': [
                    {'variant': s.variant, 'seed': s.seed, 'epoch_seconds': s.epoch_seconds}
                    for s in r.results
                ]}
                for r in reports
            ],
        })
        _write_csv(path('timing.csv'), timing_rows(reports), TIMING_COLUMNS)
        if any(r.axis for r in reports):
            _write_csv(path('series.csv'), sweep_series(reports), SERIES_COLUMNS)

        if charts:
            rendered = _charts(reports)
            if not rendered:
                log_warning("Pillow not installed, skipping charts")
            for name, data in sorted(rendered.items()):
                _write_png(path(name), data)
    except OSError as e:
        raise ReportWriteError(f"cannot write report to {out_dir}: {e}", path=str(out_dir)) from e

    log_success(f"Wrote {len(written)} report file(s) to {out_dir}")
    return written


def emit_diagnostics(rows: Iterable[DiagnosticRow], out_dir) -> List[str]:
    """diagnostics.json and diagnostics.csv for the depth diagnostics"""
    rows = [row.to_dict() for row in rows]
    if not rows:
        raise EmptyInputError("no diagnostic rows to emit")
    try:
        os.makedirs(out_dir, exist_ok=True)
        json_path = os.path.join(out_dir, 'diagnostics.json')
        csv_path = os.path.join(out_dir, 'diagnostics.csv')
        _write_json(json_path, {'diagnostics': rows})
        _write_csv(csv_path, rows, DIAGNOSTIC_COLUMNS)
    except OSError as e:
        raise ReportWriteError(f"cannot write diagnostics to {out_dir}: {e}", path=str(out_dir)) from e
    log_success(f"Wrote {len(rows)} diagnostic row(s) to {out_dir}")
    return [json_path, csv_path]


# ==================== READERS ====================

def load_reports(path) -> List[MetricsReport]:
    """Read report.json (or a directory holding one)"""
    if os.path.isdir(path):
        path = os.path.join(path, 'report.json')
    try:
        with open(path, encoding='utf-8') as f:
            payload = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise SchemaError(f"cannot read report {path}: {e}") from e
    if payload.get('format') != REPORT_FORMAT:
        raise SchemaError(f"{path} is not an {REPORT_FORMAT} file")
    reports = [MetricsReport.from_dict(entry) for entry in payload['reports']]
    _attach_timing(reports, os.path.join(os.path.dirname(path), 'timing.json'))
    return reports


def _attach_timing(reports: List[MetricsReport], path) -> None:
    """Fill epoch_seconds from the timing.json written next to report.json"""
    try:
        with open(path, encoding='utf-8') as f:
            timing = json.load(f).get('reports', [])
    except (OSError, json.JSONDecodeError):
        log_warning(f"No readable timing at {path}, training times load as zero")
        return
    if len(timing) != len(reports):
        raise SchemaError(f"{path} lists {len(timing)} report(s), report.json lists {len(reports)}")
    for report, entry in zip(reports, timing):
        seconds = {(row['variant'], row['seed']): row['epoch_seconds'] for row in entry.get('results', [])}
        for result in report.results:
            recorded = seconds.get((result.variant, result.seed))
            if recorded is None or len(recorded) != len(result.train_loss):
                raise SchemaError(f"{path} has no matching timing for {result.variant} seed {result.seed}")
            result.epoch_seconds = [float(s) for s in recorded]


def merge_reports(groups: Iterable[Sequence[MetricsReport]]) -> List[MetricsReport]:
    """Concatenate report lists; sweep points are ordered by (axis, value)"""
    merged = [report for group in groups for report in group]
    if not merged:
        raise EmptyInputError("no reports to merge")
    if all(r.axis for r in merged):
        merged.sort(key=lambda r: (r.axis, float(r.value)))
    return merged
