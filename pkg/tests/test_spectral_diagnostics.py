"""
Tests for core.spectral_diagnostics
"""

import math

import networkx as nx
import numpy as np
import pytest

from conftest import connected_graph, cycle_graph
from core.multigraph import build_graph
from core.spectral_diagnostics import (
    UNBOUNDED,
    contraction_factor,
    effective_resistance,
    estimate_s,
    estimate_spectral_norm,
    resistance_eigenvalue_bound,
    relaxed_smoothing_layer,
    resistance_matrix,
    second_largest_eigenvalue,
    smoothing_decay_probe,
    smoothing_report,
    subspace_basis,
    subspace_distance,
    symmetric_weights,
    edge_removal_verifier,
)
from utils.config import Config
from utils.errors import DiagnosticsError, NodeIndexError, ShapeError, SizeGuardError


def dense_oracle(g):
    """Normalized augmented adjacency and Laplacian built straight from the edge list"""
    n = g.node_count
    a = np.eye(n)
    lap = np.zeros((n, n))
    for u, v in zip(g.src.tolist(), g.dst.tolist()):
        if u == v:
            a[u, u] += 1
            continue
        a[u, v] += 1
        a[v, u] += 1
        lap[u, v] -= 1
        lap[v, u] -= 1
        lap[u, u] += 1
        lap[v, v] += 1
    d = a.sum(axis=1)
    a_hat = a / np.sqrt(np.outer(d, d))
    return a_hat, lap, d


# ==================== EIGENVALUES ====================

def test_single_node_eigenvalue_is_zero():
    assert second_largest_eigenvalue(build_graph(1, [])) == 0.0


def test_disconnected_eigenvalue_is_one():
    assert second_largest_eigenvalue(build_graph(4, [(0, 1), (2, 3)])) == 1.0


def test_complete_graph_eigenvalue_is_zero():
    edges = [(u, v) for u in range(5) for v in range(u + 1, 5)]
    assert second_largest_eigenvalue(build_graph(5, edges)) == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize('n', [4, 5, 8])
def test_cycle_eigenvalue(n):
    expected = (1 + 2 * math.cos(2 * math.pi / n)) / 3
    assert second_largest_eigenvalue(build_graph(n, cycle_graph(n))) == pytest.approx(expected, abs=1e-12)


def test_direction_does_not_matter():
    forward = build_graph(5, [(0, 1), (1, 2), (2, 3), (3, 4), (4, 0), (0, 2)])
    backward = build_graph(5, [(1, 0), (2, 1), (3, 2), (4, 3), (0, 4), (2, 0)])
    assert second_largest_eigenvalue(forward) == pytest.approx(second_largest_eigenvalue(backward), abs=1e-12)


def test_self_loop_counted_once():
    w = symmetric_weights(build_graph(2, [(0, 0), (0, 1), (0, 1)]))
    assert w.tolist() == [[1.0, 2.0], [2.0, 0.0]]


# ==================== RESISTANCE ====================

def test_parallel_edges_halve_resistance():
    assert effective_resistance(build_graph(2, [(0, 1), (1, 0)]), 0, 1) == pytest.approx(0.5)


def test_cycle_neighbor_resistance():
    g = build_graph(6, cycle_graph(6))
    assert effective_resistance(g, 0, 1) == pytest.approx(5 / 6)
    assert effective_resistance(g, 0, 3) == pytest.approx(1.5)


def test_tree_resistance_is_path_length(rng):
    for _ in range(20):
        g = connected_graph(rng, int(rng.integers(2, 12)))
        reference = nx.Graph()
        reference.add_edges_from(zip(g.src.tolist(), g.dst.tolist()))
        r = resistance_matrix(g)
        lengths = dict(nx.all_pairs_shortest_path_length(reference))
        for s in range(g.node_count):
            for t in range(g.node_count):
                assert r[s, t] == pytest.approx(lengths[s][t], abs=1e-9)


def test_resistance_across_components_is_infinite():
    g = build_graph(4, [(0, 1), (2, 3)])
    assert effective_resistance(g, 0, 3) == math.inf
    assert np.isinf(resistance_matrix(g)[1, 2])


def test_resistance_pair_errors():
    g = build_graph(3, [(0, 1), (1, 2)])
    with pytest.raises(DiagnosticsError):
        effective_resistance(g, 1, 1)
    with pytest.raises(NodeIndexError):
        effective_resistance(g, 0, 3)


# ==================== RESISTANCE BOUND ====================

def test_resistance_bound_on_random_connected_graphs(rng):
    for _ in range(100):
        n = int(rng.integers(2, 13))
        g = connected_graph(rng, n, extra_edges=int(rng.integers(0, 2 * n)))
        a_hat, lap, degrees = dense_oracle(g)
        lam = np.linalg.eigvalsh(a_hat)[::-1][1]
        pinv = np.linalg.pinv(lap)
        assert second_largest_eigenvalue(g) == pytest.approx(lam, abs=1e-9)
        for s in range(n):
            for t in range(s + 1, n):
                r = pinv[s, s] + pinv[t, t] - 2 * pinv[s, t]
                check = resistance_eigenvalue_bound(g, s, t)
                assert check.resistance == pytest.approx(r, rel=1e-8)
                assert check.bound == pytest.approx(1 - (1 / r) * (1 / degrees[s] + 1 / degrees[t]), abs=1e-8)
                assert check.holds
                assert lam >= check.bound - 1e-9


def test_bound_across_components_is_flagged():
    check = resistance_eigenvalue_bound(build_graph(4, [(0, 1), (2, 3)]), 0, 2)
    assert check.cross_component
    assert check.bound == 1.0
    assert check.holds


# ==================== SUBSPACE ====================

def test_root_degree_vector_has_zero_distance(rng):
    g = connected_graph(rng, 8, extra_edges=5)
    _, _, degrees = dense_oracle(g)
    assert subspace_distance(np.sqrt(degrees), g) == pytest.approx(0.0, abs=1e-12)


def test_basis_is_orthonormal():
    basis = subspace_basis(build_graph(6, [(0, 1), (2, 3), (3, 4)])).basis
    assert basis.shape == (6, 3)
    np.testing.assert_allclose(basis.T @ basis, np.eye(3), atol=1e-12)


def test_distance_row_mismatch():
    with pytest.raises(ShapeError):
        subspace_distance(np.ones((3, 2)), build_graph(4, [(0, 1)]))


# ==================== SMOOTHING LAYER ====================

def test_smoothing_layer_exact_power():
    assert relaxed_smoothing_layer(8.0, 1.0, 1.0, 0.5) == 3


def test_smoothing_layer_rounds_up():
    assert relaxed_smoothing_layer(1.0, 0.1, 1.0, 0.5) == 4


def test_smoothing_layer_already_close():
    assert relaxed_smoothing_layer(0.5, 1.0, 2.0, 0.9) == 0


def test_smoothing_layer_unbounded():
    assert relaxed_smoothing_layer(1.0, 0.1, 2.0, 0.6) == UNBOUNDED
    assert relaxed_smoothing_layer(1.0, 0.1, 1.0, 1.0) == UNBOUNDED


def test_smoothing_layer_bad_inputs():
    with pytest.raises(DiagnosticsError):
        relaxed_smoothing_layer(1.0, 0.0, 1.0, 0.5)
    with pytest.raises(DiagnosticsError):
        relaxed_smoothing_layer(1.0, 0.1, -1.0, 0.5)


def test_spectral_norm_matches_svd(rng):
    for _ in range(10):
        w = rng.normal(size=(6, 4))
        assert estimate_spectral_norm(w) == pytest.approx(np.linalg.norm(w, 2), rel=1e-4)
    assert estimate_spectral_norm(np.zeros((3, 3))) == 0.0
    assert estimate_s([np.eye(2), 3 * np.eye(2)]) == pytest.approx(3.0)


def test_report_for_smoothed_features(rng):
    g = connected_graph(rng, 10, extra_edges=6)
    _, _, degrees = dense_oracle(g)
    report = smoothing_report(g, np.sqrt(degrees)[:, None] * [1.0, -2.0], s=1.0, epsilon=1e-3)
    assert report.l_hat == 0
    assert report.components == 1
    assert set(report.to_dict()) >= {'lambda', 's', 'd_M', 'l_hat'}


def test_decay_probe_stays_under_bound(rng):
    for _ in range(20):
        g = connected_graph(rng, int(rng.integers(3, 12)), extra_edges=4)
        q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
        rows = smoothing_decay_probe(g, rng.normal(size=(g.node_count, 3)), 0.9 * q, steps=20)
        assert len(rows) == 21
        assert contraction_factor(g) < 1
        for _, observed, bound in rows:
            assert observed <= bound * (1 + 1e-6) + 1e-12


def test_dense_routines_guard_size(monkeypatch):
    monkeypatch.setattr(Config, 'MAX_SPECTRAL_NODES', 5)
    with pytest.raises(SizeGuardError):
        symmetric_weights(build_graph(6, cycle_graph(6)))


# ==================== EDGE-REMOVAL VERIFIER ====================

def test_verifier_monotone_under_removal(rng):
    for _ in range(100):
        n = int(rng.integers(3, 13))
        g = connected_graph(rng, n, extra_edges=n)
        order = rng.permutation(g.edge_count)
        drop_sets = np.array_split(order[: g.edge_count // 2], 3)
        rows = edge_removal_verifier(g, drop_sets, epsilon=1e-3, s=1.0)
        assert len(rows) == 4
        assert rows[0].removed == 0
        assert all(row.holds for row in rows)
        counts = [row.components for row in rows]
        assert counts == sorted(counts)
        for row in rows:
            assert row.rank == n - row.components


def test_verifier_cutting_bridge_raises_components():
    g = build_graph(4, [(0, 1), (1, 2), (2, 3)])
    rows = edge_removal_verifier(g, [[1]], epsilon=1e-3, s=1.0)
    assert rows[0].components == 1
    assert rows[1].components == 2
    assert rows[1].eigenvalue == 1.0
    assert rows[1].holds
