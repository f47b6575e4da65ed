"""
EdgeForge Multigraph Module
Directed multigraph storage with parallel edges, ego networks and edge removal
"""

from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, List, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components as _cc

from utils.errors import (
    GraphConstructionError,
    InvalidInputError,
    NodeIndexError,
    ShapeError,
    UnknownEdgeError,
)


def _frozen(array):
    array = np.ascontiguousarray(array)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class DirectedMultigraph:
    """Immutable directed multigraph. Edge ids are positions in src/dst."""

    node_count: int
    src: np.ndarray
    dst: np.ndarray
    node_features: np.ndarray
    edge_features: np.ndarray
    edge_labels: np.ndarray
    edge_keys: np.ndarray

    @property
    def edge_count(self) -> int:
        return int(self.src.shape[0])

    # ==================== INDICES ====================

    @cached_property
    def _in_csr(self):
        order = np.argsort(self.dst, kind='stable')
        ptr = np.zeros(self.node_count + 1, dtype=np.int64)
        np.cumsum(np.bincount(self.dst, minlength=self.node_count), out=ptr[1:])
        return ptr, order

    @cached_property
    def _out_csr(self):
        order = np.argsort(self.src, kind='stable')
        ptr = np.zeros(self.node_count + 1, dtype=np.int64)
        np.cumsum(np.bincount(self.src, minlength=self.node_count), out=ptr[1:])
        return ptr, order

    @cached_property
    def in_index(self) -> Tuple[Tuple[Tuple[int, int], ...], ...]:
        """Per node: incoming (neighbor, edge_id) pairs, ascending edge_id"""
        ptr, order = self._in_csr
        return tuple(
            tuple((int(self.src[e]), int(e)) for e in order[ptr[v]:ptr[v + 1]])
            for v in range(self.node_count)
        )

    @cached_property
    def out_index(self) -> Tuple[Tuple[Tuple[int, int], ...], ...]:
        """Per node: outgoing (neighbor, edge_id) pairs, ascending edge_id"""
        ptr, order = self._out_csr
        return tuple(
            tuple((int(self.dst[e]), int(e)) for e in order[ptr[v]:ptr[v + 1]])
            for v in range(self.node_count)
        )

    @cached_property
    def in_degree(self) -> np.ndarray:
        return _frozen(np.bincount(self.dst, minlength=self.node_count).astype(np.int64))

    @cached_property
    def out_degree(self) -> np.ndarray:
        return _frozen(np.bincount(self.src, minlength=self.node_count).astype(np.int64))

    # ==================== SPARSE OPERATORS ====================

    def _selector(self, endpoints):
        e = self.edge_count
        return sp.csr_matrix(
            (np.ones(e), (np.arange(e), endpoints)),
            shape=(e, self.node_count),
        )

    @cached_property
    def src_selector(self) -> sp.csr_matrix:
        """|E| x N, row e picks the sender of e"""
        return self._selector(self.src)

    @cached_property
    def dst_selector(self) -> sp.csr_matrix:
        """|E| x N, row e picks the receiver of e"""
        return self._selector(self.dst)

    @cached_property
    def in_aggregator(self) -> sp.csr_matrix:
        """N x |E|, sums edge rows into their receivers"""
        return self.dst_selector.T.tocsr()

    @cached_property
    def in_mean_aggregator(self) -> sp.csr_matrix:
        """N x |E|, averages edge rows into their receivers (isolated rows stay 0)"""
        if self.node_count == 0:
            return self.in_aggregator
        deg = self.in_degree.astype(np.float64)
        scale = np.divide(1.0, deg, out=np.zeros_like(deg), where=deg > 0)
        return (sp.diags(scale) @ self.in_aggregator).tocsr()

    @cached_property
    def in_adjacency(self) -> sp.csr_matrix:
        """N x N, entry [v, u] counts edges u -> v"""
        return (self.in_aggregator @ self.src_selector).tocsr()

    @cached_property
    def undirected_adjacency(self) -> sp.csr_matrix:
        """N x N boolean reachability in either direction"""
        a = self.in_adjacency
        return ((a + a.T) > 0).astype(np.int8).tocsr()

    def with_features(self, node_features=None, edge_features=None) -> 'DirectedMultigraph':
        """Copy with replaced feature matrices"""
        return build_graph(
            self.node_count,
            np.stack([self.src, self.dst], axis=1),
            node_features=self.node_features if node_features is None else node_features,
            edge_features=self.edge_features if edge_features is None else edge_features,
            edge_labels=self.edge_labels,
            edge_keys=self.edge_keys,
        )


@dataclass(frozen=True, eq=False)
class EgoNetwork:
    subgraph: DirectedMultigraph
    center_local_index: int
    hop_radius: int
    center_mark: np.ndarray
    node_ids: np.ndarray
    edge_ids: np.ndarray


# ==================== CONSTRUCTION ====================

def _as_matrix(values, rows, what):
    if values is None:
        return np.zeros((rows, 0), dtype=np.float64)
    matrix = np.asarray(values, dtype=np.float64)
    if matrix.ndim == 1 and rows == matrix.shape[0]:
        matrix = matrix.reshape(rows, 1)
    if matrix.ndim != 2 or matrix.shape[0] != rows:
        raise ShapeError(f"{what} must have {rows} rows, got shape {matrix.shape}")
    return matrix


def build_graph(
    node_count: int,
    edge_list,
    node_features=None,
    edge_features=None,
    edge_labels=None,
    edge_keys=None,
) -> DirectedMultigraph:
    """Build a multigraph; edge_id is the position in edge_list."""
    if int(node_count) != node_count or node_count < 0:
        raise GraphConstructionError(f"node_count must be a nonnegative integer, got {node_count}")
    node_count = int(node_count)

    edges = np.asarray(edge_list, dtype=np.int64) if len(edge_list) else np.zeros((0, 2), dtype=np.int64)
    if edges.ndim != 2 or edges.shape[1] != 2:
        raise ShapeError(f"edge_list must be (src, dst) pairs, got shape {edges.shape}")
    src, dst = edges[:, 0].copy(), edges[:, 1].copy()

    bad = np.flatnonzero((src < 0) | (src >= node_count) | (dst < 0) | (dst >= node_count))
    if bad.size:
        e = int(bad[0])
        raise GraphConstructionError(
            f"edge {e} ({src[e]} -> {dst[e]}) references a node outside [0, {node_count})",
            edge_id=e,
        )

    e_count = src.shape[0]
    node_features = _as_matrix(node_features, node_count, 'node_features')
    edge_features = _as_matrix(edge_features, e_count, 'edge_features')

    if edge_labels is None:
        labels = np.zeros(e_count, dtype=np.int8)
    else:
        labels = np.asarray(edge_labels).astype(np.int8).reshape(-1)
        if labels.shape[0] != e_count:
            raise ShapeError(f"edge_labels has {labels.shape[0]} entries for {e_count} edges")
        if np.any((labels != 0) & (labels != 1)):
            raise GraphConstructionError("edge_labels must be 0 (negative) or 1 (positive)")

    if edge_keys is None:
        keys = np.arange(e_count, dtype=np.int64)
    else:
        keys = np.asarray(edge_keys, dtype=np.int64).reshape(-1)
        if keys.shape[0] != e_count:
            raise ShapeError(f"edge_keys has {keys.shape[0]} entries for {e_count} edges")

    return DirectedMultigraph(
        node_count=node_count,
        src=_frozen(src),
        dst=_frozen(dst),
        node_features=_frozen(node_features),
        edge_features=_frozen(edge_features),
        edge_labels=_frozen(labels),
        edge_keys=_frozen(keys),
    )


# ==================== QUERIES ====================

def _check_node(g, v):
    if isinstance(v, (bool, np.bool_)) or int(v) != v or not 0 <= v < g.node_count:
        raise NodeIndexError(f"node {v} out of range [0, {g.node_count})", node=v)
    return int(v)


def neighbors(g: DirectedMultigraph, v: int, direction: str = 'in') -> List[Tuple[int, int]]:
    """(neighbor, edge_id) pairs of v in ascending edge_id order"""
    v = _check_node(g, v)
    if direction == 'in':
        return list(g.in_index[v])
    elif direction == 'out':
        return list(g.out_index[v])
    raise InvalidInputError(f"direction must be 'in' or 'out', got '{direction}'")


def degrees(g: DirectedMultigraph) -> Tuple[np.ndarray, np.ndarray]:
    """(in_degree, out_degree); a self-loop counts once in each"""
    return g.in_degree, g.out_degree


def induced_subgraph(g: DirectedMultigraph, nodes: Iterable[int]):
    """Subgraph on a node subset -> (graph, original node ids, original edge ids)"""
    node_ids = np.unique(np.asarray(list(nodes), dtype=np.int64))
    for v in node_ids:
        _check_node(g, v)
    local = np.full(g.node_count, -1, dtype=np.int64)
    local[node_ids] = np.arange(node_ids.size)

    keep = np.flatnonzero((local[g.src] >= 0) & (local[g.dst] >= 0))
    sub = build_graph(
        node_ids.size,
        np.stack([local[g.src[keep]], local[g.dst[keep]]], axis=1),
        node_features=g.node_features[node_ids],
        edge_features=g.edge_features[keep],
        edge_labels=g.edge_labels[keep],
        edge_keys=g.edge_keys[keep],
    )
    return sub, node_ids, keep


def ego_network(g: DirectedMultigraph, v: int, k: int, directed: bool = False) -> EgoNetwork:
    """k-hop ego network of v.

    Undirected reachability by default. With directed=True only nodes with a
    directed path of length <= k into v are kept.
    """
    v = _check_node(g, v)
    if int(k) != k or k < 0:
        raise InvalidInputError(f"hop radius must be a nonnegative integer, got {k}")

    # [u, v] counts u -> v when directed
    adjacency = g.in_adjacency.T.tocsr() if directed else g.undirected_adjacency
    visited = np.zeros(g.node_count, dtype=bool)
    visited[v] = True
    frontier = visited.copy()
    for _ in range(int(k)):
        reached = (adjacency @ frontier.astype(np.int64)) > 0
        frontier = reached & ~visited
        if not frontier.any():
            break
        visited |= frontier

    sub, node_ids, edge_ids = induced_subgraph(g, np.flatnonzero(visited))
    center = int(np.searchsorted(node_ids, v))
    mark = np.zeros(node_ids.size, dtype=np.int8)
    mark[center] = 1
    return EgoNetwork(
        subgraph=sub,
        center_local_index=center,
        hop_radius=int(k),
        center_mark=_frozen(mark),
        node_ids=_frozen(node_ids),
        edge_ids=_frozen(edge_ids),
    )


# ==================== MUTATION-AS-CONSTRUCTION ====================

def remove_edges(g: DirectedMultigraph, edge_ids: Iterable[int]) -> Tuple[DirectedMultigraph, np.ndarray]:
    """Drop edges -> (new graph, old->new edge id map with -1 for removed)"""
    ids = np.asarray(sorted(set(int(e) for e in edge_ids)), dtype=np.int64)
    if ids.size and (ids[0] < 0 or ids[-1] >= g.edge_count):
        bad = ids[0] if ids[0] < 0 else ids[-1]
        raise UnknownEdgeError(f"edge {bad} not in graph with {g.edge_count} edges", edge_id=int(bad))

    keep_mask = np.ones(g.edge_count, dtype=bool)
    keep_mask[ids] = False
    keep = np.flatnonzero(keep_mask)

    edge_map = np.full(g.edge_count, -1, dtype=np.int64)
    edge_map[keep] = np.arange(keep.size)

    pruned = build_graph(
        g.node_count,
        np.stack([g.src[keep], g.dst[keep]], axis=1),
        node_features=g.node_features,
        edge_features=g.edge_features[keep],
        edge_labels=g.edge_labels[keep],
        edge_keys=g.edge_keys[keep],
    )
    return pruned, _frozen(edge_map)


def relabel_nodes(g: DirectedMultigraph, permutation: Sequence[int]) -> DirectedMultigraph:
    """Rename node i to permutation[i]; edge order is kept"""
    perm = np.asarray(permutation, dtype=np.int64)
    if perm.shape != (g.node_count,) or not np.array_equal(np.sort(perm), np.arange(g.node_count)):
        raise InvalidInputError("permutation must be a rearrangement of range(node_count)")
    features = np.empty_like(g.node_features)
    features[perm] = g.node_features
    return build_graph(
        g.node_count,
        np.stack([perm[g.src], perm[g.dst]], axis=1),
        node_features=features,
        edge_features=g.edge_features,
        edge_labels=g.edge_labels,
        edge_keys=g.edge_keys,
    )


def connected_components(g: DirectedMultigraph) -> Tuple[np.ndarray, int]:
    """Weak components -> (per-node id dense in [0, M), M)"""
    if g.node_count == 0:
        return np.zeros(0, dtype=np.int64), 0
    count, labels = _cc(g.undirected_adjacency, directed=False)
    return labels.astype(np.int64), int(count)

