"""
Tests for core.reporting
"""

import json

import pandas as pd
import pytest

from core.experiment import DiagnosticRow, MetricsReport, SeedResult
from core.reporting import (
    CURVE_COLUMNS,
    REPORT_COLUMNS,
    emit_diagnostics,
    emit_report,
    load_reports,
    mean_curves,
    merge_reports,
)
from core.spectral_diagnostics import SmoothingReport
from utils.errors import EmptyInputError, ReportWriteError, SchemaError


def seed_result(variant, seed, epochs=3, seconds=0.5, f1=0.4):
    return SeedResult(
        variant=variant,
        seed=seed,
        f1=f1,
        precision=0.5,
        recall=f1,
        valid_f1=f1 / 2,
        train_loss=[1.0 / (e + 1) for e in range(epochs)],
        test_loss=[1.2 / (e + 1) for e in range(epochs)],
        edges_used=[100 - e for e in range(epochs)],
        dropped=[0] + [1] * (epochs - 1),
        epoch_seconds=[seconds] * epochs,
    )


def make_report(seconds=0.5, axis=None, value=None):
    results = [seed_result('baseline', s, seconds=seconds, f1=0.3 + s / 10) for s in (0, 1)]
    results += [seed_result('oes', s, seconds=seconds, f1=0.35 + s / 10) for s in (0, 1)]
    return MetricsReport(config={'kind': 'GIN', 'depth': 2}, results=results, axis=axis, value=value)


def test_report_files(tmp_path):
    paths = emit_report([make_report()], tmp_path, charts=False)
    names = sorted(p.split('/')[-1] for p in paths)
    assert names == ['curves.csv', 'report.csv', 'report.json', 'timing.csv', 'timing.json']
    report = pd.read_csv(tmp_path / 'report.csv')
    assert list(report.columns) == REPORT_COLUMNS
    assert len(report) == 4
    curves = pd.read_csv(tmp_path / 'curves.csv')
    assert list(curves.columns) == CURVE_COLUMNS
    assert len(curves) == 12
    assert curves['epoch'].tolist()[:3] == [1, 2, 3]


def test_json_round_trip(tmp_path):
    original = make_report()
    emit_report([original], tmp_path, charts=False)
    (loaded,) = load_reports(tmp_path)
    assert loaded.to_dict() == original.to_dict()
    payload = json.loads((tmp_path / 'report.json').read_text())
    assert payload['format'] == 'edgeforge-report'
    assert payload['reports'][0]['aggregate']['oes']['f1']['mean'] == pytest.approx(0.4)


def test_timing_survives_reload_and_merge(tmp_path):
    original = make_report(seconds=1.5)
    emit_report([original], tmp_path / 'run', charts=False)
    (merged,) = merge_reports([load_reports(tmp_path / 'run')])
    for before, after in zip(original.results, merged.results):
        assert after.epoch_seconds == before.epoch_seconds
        assert after.training_minutes == pytest.approx(0.075)

    emit_report([merged], tmp_path / 'again', charts=False)
    assert (tmp_path / 'again' / 'timing.csv').read_bytes() == (tmp_path / 'run' / 'timing.csv').read_bytes()
    timing = json.loads((tmp_path / 'again' / 'timing.json').read_text())
    assert timing['reports'][0]['aggregate']['oes']['training_minutes']['mean'] == pytest.approx(0.075)


def test_reload_without_timing_file(tmp_path):
    emit_report([make_report(seconds=1.5)], tmp_path, charts=False)
    (tmp_path / 'timing.json').unlink()
    (loaded,) = load_reports(tmp_path)
    assert all(r.epoch_seconds == [0.0] * 3 for r in loaded.results)


def test_reload_rejects_foreign_timing(tmp_path):
    emit_report([make_report()], tmp_path, charts=False)
    (tmp_path / 'timing.json').write_text('{"reports": []}')
    with pytest.raises(SchemaError):
        load_reports(tmp_path)


def test_wall_clock_stays_out_of_deterministic_files(tmp_path):
    emit_report([make_report(seconds=0.5)], tmp_path / 'a', charts=False)
    emit_report([make_report(seconds=9.0)], tmp_path / 'b', charts=False)
    for name in ('report.json', 'report.csv', 'curves.csv'):
        assert (tmp_path / 'a' / name).read_bytes() == (tmp_path / 'b' / name).read_bytes()
    assert (tmp_path / 'a' / 'timing.csv').read_bytes() != (tmp_path / 'b' / 'timing.csv').read_bytes()


def test_timing_summary(tmp_path):
    emit_report([make_report(seconds=3.0)], tmp_path, charts=False)
    timing = json.loads((tmp_path / 'timing.json').read_text())
    minutes = timing['reports'][0]['aggregate']['oes']['training_minutes']
    assert minutes['mean'] == pytest.approx(0.15)
    assert minutes['std'] == 0.0


def test_sweep_writes_series(tmp_path):
    reports = [make_report(axis='depth', value=v) for v in (2, 4)]
    paths = emit_report(reports, tmp_path, charts=False)
    assert str(tmp_path / 'series.csv') in paths
    series = pd.read_csv(tmp_path / 'series.csv')
    assert len(series) == 4
    assert sorted(series['value'].unique().tolist()) == [2, 4]


def test_charts_are_png(tmp_path):
    pytest.importorskip('PIL')
    reports = [make_report(axis='ratio', value=v) for v in (10, 20)]
    emit_report(reports, tmp_path)
    for name in ('loss_curves.png', 'sweep_f1.png', 'sweep_minutes.png'):
        assert (tmp_path / name).read_bytes().startswith(b'\x89PNG')


def test_mean_curves():
    curves = mean_curves(make_report())
    assert curves['oes']['train'] == pytest.approx([1.0, 0.5, 1 / 3])


def test_emit_nothing(tmp_path):
    with pytest.raises(EmptyInputError):
        emit_report([], tmp_path)


def test_unwritable_directory(tmp_path):
    blocker = tmp_path / 'file'
    blocker.write_text('x')
    with pytest.raises(ReportWriteError):
        emit_report([make_report()], blocker / 'out', charts=False)


def test_load_rejects_other_json(tmp_path):
    (tmp_path / 'report.json').write_text('{"format": "something-else"}')
    with pytest.raises(SchemaError):
        load_reports(tmp_path)
    with pytest.raises(SchemaError):
        load_reports(tmp_path / 'missing.json')


def test_merge_orders_sweep_points():
    merged = merge_reports([[make_report(axis='depth', value=8)], [make_report(axis='depth', value=2)]])
    assert [r.value for r in merged] == [2, 8]
    with pytest.raises(EmptyInputError):
        merge_reports([])


def test_diagnostics_files(tmp_path):
    report = SmoothingReport(lambda_=0.8, s=1.5, d_M=2.0, l_hat='unbounded', components=1,
                             epsilon=1e-3, contraction=0.8, nodes=10)
    paths = emit_diagnostics([DiagnosticRow('oes', 4, 0, 20, report)], tmp_path)
    assert len(paths) == 2
    table = pd.read_csv(tmp_path / 'diagnostics.csv')
    assert table.loc[0, 'lambda'] == pytest.approx(0.8)
    assert table.loc[0, 'l_hat'] == 'unbounded'
