"""
Tests for core.data_pipeline
"""

from decimal import Decimal

import networkx as nx
import numpy as np
import pytest

from core.data_pipeline import (
    IBM_HEADER,
    account_count,
    dataset_stats,
    encode_features,
    load_bundle,
    parse_transactions,
    prepare_bundle,
    save_bundle,
    serialize_transactions,
    synthesize_dataset,
    temporal_split,
)
from utils.errors import InfeasiblePatternError, RowParseError, SchemaError, SplitError


def csv_bytes(rows):
    """rows of (timestamp, src, dst, amount, label[, currency[, format]])"""
    lines = [','.join(IBM_HEADER)]
    for row in rows:
        ts, src, dst, amount, label = row[:5]
        currency = row[5] if len(row) > 5 else 'US Dollar'
        fmt = row[6] if len(row) > 6 else 'ACH'
        lines.append(f"{ts},10,{src},20,{dst},{amount},{currency},{amount},{currency},{fmt},{label}")
    return ('\n'.join(lines) + '\n').encode('utf-8')


def minute_rows(n, start_label=0):
    return [(f"2022/09/01 {i // 60:02d}:{i % 60:02d}", f"A{i % 7}", f"A{(i + 3) % 11}", 100 + i,
             (i + start_label) % 2) for i in range(n)]


# ==================== PARSING ====================

def test_header_only_gives_no_records():
    assert parse_transactions(csv_bytes([])) == []


def test_single_laundering_row():
    records = parse_transactions(csv_bytes([('2022/09/01 00:20', '8000EBD30', '8000EBD31', '3195403.00', 1)]))
    assert len(records) == 1
    r = records[0]
    assert r.is_laundering == 1
    assert r.amount == Decimal('3195403.00')
    assert (r.src_node, r.dst_node) == (0, 1)
    assert r.dst_account == '8000EBD31'


def test_same_account_different_bank_is_different_node():
    data = b"Timestamp,From Bank,Account,To Bank,Account,Amount Received,Receiving Currency," \
           b"Amount Paid,Payment Currency,Payment Format,Is Laundering\n" \
           b"2022/09/01 00:00,1,X,2,X,5,Euro,5,Euro,ACH,0\n"
    records = parse_transactions(data)
    assert records[0].src_node != records[0].dst_node
    assert account_count(records) == 2


def test_paid_amount_preferred_received_as_fallback():
    data = ','.join(IBM_HEADER) + '\n' \
        + '2022/09/01 00:00,1,A,2,B,90.00,Euro,100.00,US Dollar,Wire,0\n' \
        + '2022/09/01 00:01,1,A,2,B,75.50,Yen,,,Wire,0\n'
    first, second = parse_transactions(data.encode())
    assert (first.amount, first.currency) == (Decimal('100.00'), 'US Dollar')
    assert (second.amount, second.currency) == (Decimal('75.50'), 'Yen')


@pytest.mark.parametrize('stamp, expected', [
    ('1662000000', 1662000000),
    ('2022/09/01 00:00', 1661990400),
    ('2022/09/01 00:00:30', 1661990430),
    ('2022-09-01T00:01:00Z', 1661990460),
])
def test_timestamp_formats(stamp, expected):
    records = parse_transactions(csv_bytes([(stamp, 'A', 'B', 1, 0)]))
    assert records[0].timestamp == expected


def test_empty_input_is_schema_error():
    with pytest.raises(SchemaError):
        parse_transactions(b'')


def test_missing_label_column():
    data = b"Timestamp,From Bank,Account,To Bank,Account,Amount Paid\n2022/09/01 00:00,1,A,2,B,5\n"
    with pytest.raises(SchemaError) as info:
        parse_transactions(data)
    assert 'Is Laundering' in str(info.value)


@pytest.mark.parametrize('row', [
    ('2022/09/01 00:00', 'A', 'B', 5, 2),
    ('yesterday', 'A', 'B', 5, 0),
    ('2022/09/01 00:00', 'A', 'B', 'ten', 0),
    ('2022/09/01 00:00', 'A', 'B', -3, 0),
])
def test_bad_row_names_the_row(row):
    good = ('2022/09/01 00:00', 'A', 'B', 5, 0)
    with pytest.raises(RowParseError) as info:
        parse_transactions(csv_bytes([good, good, row]))
    assert info.value.row == 3
    assert str(info.value).startswith('row 3:')


def test_account_count_matches_distinct_pairs(small_csv):
    records = parse_transactions(small_csv)
    pairs = {r.src_key for r in records} | {r.dst_key for r in records}
    assert account_count(records) == len(pairs)
    assert dataset_stats(records)['transactions'] == 400


def test_serialize_then_parse_is_identity(small_csv):
    records = parse_transactions(small_csv)
    assert parse_transactions(serialize_transactions(records)) == records


def test_serialize_keeps_seconds():
    records = parse_transactions(csv_bytes([('2022/09/01 00:00:30', 'A', 'B', '1.5', 0)]))
    assert parse_transactions(serialize_transactions(records)) == records


# ==================== SPLIT ====================

def test_hundred_records_split_sixty_twenty_twenty():
    bundle = temporal_split(parse_transactions(csv_bytes(minute_rows(100))))
    assert bundle.window_sizes == (60, 20, 20)
    assert bundle.valid_graph.edge_count == 80
    assert bundle.test_graph.edge_count == 100
    assert bundle.valid_eval_mask.tolist() == list(range(60, 80))
    assert bundle.test_eval_mask.tolist() == list(range(80, 100))


def test_graphs_are_nested_prefixes(small_bundle):
    train, valid, test = small_bundle.train_graph, small_bundle.valid_graph, small_bundle.test_graph
    assert np.array_equal(valid.edge_keys[:train.edge_count], train.edge_keys)
    assert np.array_equal(test.edge_keys[:valid.edge_count], valid.edge_keys)
    assert train.node_count == valid.node_count == test.node_count
    assert small_bundle.window_sizes == (240, 80, 80)


def test_split_orders_by_time_then_row():
    rows = [('2022/09/01 00:05', 'A', 'B', 1, 0)] * 3 + [('2022/09/01 00:01', 'C', 'D', 1, 1)] * 2
    bundle = temporal_split(parse_transactions(csv_bytes(rows)))
    assert bundle.test_graph.edge_keys.tolist() == [4, 5, 1, 2, 3]
    assert bundle.train_graph.edge_keys.tolist() == [4, 5, 1]


def test_split_needs_five_records():
    with pytest.raises(SplitError):
        temporal_split(parse_transactions(csv_bytes(minute_rows(4))))


def test_split_boundaries_are_monotone(small_bundle):
    first, second = small_bundle.boundaries
    times = [r.timestamp for r in small_bundle.records]
    assert first <= second <= times[-1]
    assert times == sorted(times)


# ==================== ENCODING ====================

def test_unseen_currency_goes_to_other_bucket():
    rows = [r + ('US Dollar',) for r in minute_rows(8)] + [
        ('2022/09/01 01:00', 'A1', 'A2', 10, 0, 'Yen'),
        ('2022/09/01 01:01', 'A1', 'A2', 10, 0, 'Yen'),
    ]
    bundle = encode_features(temporal_split(parse_transactions(csv_bytes(rows))))
    state = bundle.encoder_state
    assert state.currencies == ['US Dollar']
    features = bundle.test_graph.edge_features
    assert features.shape[1] == state.edge_dim
    other = 2 + len(state.currencies)
    assert features[9, other] == 1.0
    assert features[0, 2] == 1.0


def test_constant_amounts_encode_to_zero():
    rows = [(ts, s, d, 50, y) for ts, s, d, _, y in minute_rows(10)]
    bundle = encode_features(temporal_split(parse_transactions(csv_bytes(rows))))
    assert np.array_equal(bundle.test_graph.edge_features[:, 0], np.zeros(10))


def test_encoder_ignores_later_windows():
    base = minute_rows(20)
    changed = base[:12] + [(ts, s, d, 10 ** 6, y) for ts, s, d, _, y in base[12:]]
    a = prepare_bundle(csv_bytes(base)).encoder_state
    b = prepare_bundle(csv_bytes(changed)).encoder_state
    assert a == b


def test_features_attached_to_every_graph(small_bundle):
    dim = small_bundle.encoder_state.edge_dim
    for g in (small_bundle.train_graph, small_bundle.valid_graph, small_bundle.test_graph):
        assert g.edge_features.shape == (g.edge_count, dim)
        assert g.node_features.shape == (g.node_count, 3)
    np.testing.assert_array_equal(small_bundle.test_graph.edge_features[:240], small_bundle.train_graph.edge_features)


# ==================== SYNTHETIC ====================

def test_synthetic_is_deterministic():
    assert synthesize_dataset(3, 40, 200) == synthesize_dataset(3, 40, 200)
    assert synthesize_dataset(3, 40, 200) != synthesize_dataset(4, 40, 200)


def test_synthetic_counts():
    stats = dataset_stats(parse_transactions(synthesize_dataset(1, 80, 500, illicit_ratio=0.1)))
    assert stats['transactions'] == 500
    assert stats['illicit'] == 50
    assert stats['accounts'] <= 80


def test_synthetic_without_laundering():
    records = parse_transactions(synthesize_dataset(2, 30, 120, illicit_ratio=0.0))
    assert all(r.is_laundering == 0 for r in records)
    assert all(r.src_key != r.dst_key for r in records)


def test_planted_five_cycle():
    data = synthesize_dataset(5, 50, 100, illicit_ratio=0.05, pattern_mix={'cycle': 1.0}, cycle_length=5)
    illicit = [r for r in parse_transactions(data) if r.is_laundering]
    ring = nx.DiGraph([(r.src_node, r.dst_node) for r in illicit])
    assert len(illicit) == 5
    assert ring.number_of_nodes() == 5
    assert nx.is_strongly_connected(ring)


def test_infeasible_cycle():
    with pytest.raises(InfeasiblePatternError):
        synthesize_dataset(0, 4, 100, cycle_length=6)
    with pytest.raises(InfeasiblePatternError):
        synthesize_dataset(0, 1, 10)


# ==================== PERSISTENCE ====================

def test_bundle_save_and_load(tmp_path, small_bundle):
    save_bundle(small_bundle, tmp_path / 'bundle')
    loaded = load_bundle(tmp_path / 'bundle')
    assert loaded.encoder_state == small_bundle.encoder_state
    assert loaded.boundaries == small_bundle.boundaries
    assert np.array_equal(loaded.test_eval_mask, small_bundle.test_eval_mask)
    for name in ('train_graph', 'valid_graph', 'test_graph'):
        a, b = getattr(loaded, name), getattr(small_bundle, name)
        assert np.array_equal(a.src, b.src)
        assert np.array_equal(a.edge_keys, b.edge_keys)
        assert np.array_equal(a.edge_features, b.edge_features)


def test_load_rejects_foreign_directory(tmp_path):
    (tmp_path / 'bundle.json').write_text('{"format": "other"}')
    with pytest.raises(SchemaError):
        load_bundle(tmp_path)
