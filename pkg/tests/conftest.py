"""
Shared fixtures for the EdgeForge test suite
"""

import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from core.data_pipeline import prepare_bundle, synthesize_dataset  # noqa: E402
from core.multigraph import build_graph  # noqa: E402
from utils.config import Config  # noqa: E402


def pytest_addoption(parser):
    parser.addoption('--runslow', action='store_true', default=False, help='run slow desk-scale tests')


def pytest_configure(config):
    config.addinivalue_line('markers', 'slow: desk-scale end-to-end run, needs --runslow')


def pytest_collection_modifyitems(config, items):
    if config.getoption('--runslow'):
        return
    skip_slow = pytest.mark.skip(reason='needs --runslow')
    for item in items:
        if 'slow' in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(autouse=True)
def quiet_epochs(monkeypatch):
    monkeypatch.setattr(Config, 'LOG_EPOCHS', False)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_graph(rng, nodes, edges, node_dim=0, edge_dim=0, self_loops=True):
    src = rng.integers(0, nodes, size=edges)
    dst = rng.integers(0, nodes, size=edges)
    if not self_loops and nodes > 1:
        dst = np.where(dst == src, (dst + 1) % nodes, dst)
    return build_graph(
        nodes,
        np.stack([src, dst], axis=1),
        node_features=rng.normal(size=(nodes, node_dim)) if node_dim else None,
        edge_features=rng.normal(size=(edges, edge_dim)) if edge_dim else None,
        edge_labels=rng.integers(0, 2, size=edges),
    )


def connected_graph(rng, nodes, extra_edges=0):
    """Random spanning tree plus extra edges, random directions"""
    edges = []
    for v in range(1, nodes):
        u = int(rng.integers(0, v))
        edges.append((u, v) if rng.random() < 0.5 else (v, u))
    for _ in range(extra_edges):
        u, v = rng.integers(0, nodes, size=2)
        edges.append((int(u), int(v)))
    return build_graph(nodes, edges)


def cycle_graph(n, offset=0):
    return [(offset + i, offset + (i + 1) % n) for i in range(n)]


@pytest.fixture(scope='session')
def small_csv():
    return synthesize_dataset(seed=7, n_accounts=60, n_transactions=400, illicit_ratio=0.1)


@pytest.fixture(scope='session')
def small_bundle(small_csv):
    return prepare_bundle(small_csv)
