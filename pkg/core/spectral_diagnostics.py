"""
EdgeForge Spectral Diagnostics Module
Over-smoothing checks on small graphs: eigenvalue of the augmented normalized
adjacency, effective resistance, the resistance lower bound on that eigenvalue,
subspace distance, relaxed smoothing layer and an edge-removal verifier.

All routines are dense and limited to Config.MAX_SPECTRAL_NODES nodes.
"""

import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from core.multigraph import DirectedMultigraph, connected_components, induced_subgraph, remove_edges
from utils.config import Config
from utils.errors import DiagnosticsError, NodeIndexError, ShapeError, SizeGuardError

UNBOUNDED = 'unbounded'
TOLERANCE = 1e-9


def _guard(g: DirectedMultigraph):
    if g.node_count > Config.MAX_SPECTRAL_NODES:
        raise SizeGuardError(
            f"spectral diagnostics are dense; graph has {g.node_count} nodes "
            f"(limit {Config.MAX_SPECTRAL_NODES})",
            nodes=g.node_count,
        )


# ==================== MATRICES ====================

def symmetric_weights(g: DirectedMultigraph) -> np.ndarray:
    """A + A^T with parallel edges as weights and each self-loop counted once"""
    _guard(g)
    n = g.node_count
    counts = np.zeros((n, n))
    np.add.at(counts, (g.src, g.dst), 1.0)
    weights = counts + counts.T
    weights[np.diag_indices(n)] = np.diag(counts)
    return weights


def augmented_adjacency(g: DirectedMultigraph) -> np.ndarray:
    return symmetric_weights(g) + np.eye(g.node_count)


def augmented_degrees(g: DirectedMultigraph) -> np.ndarray:
    return augmented_adjacency(g).sum(axis=1)


def normalized_adjacency(g: DirectedMultigraph) -> np.ndarray:
    """D^-1/2 (A + I) D^-1/2 of the symmetrized graph"""
    a = augmented_adjacency(g)
    scale = 1.0 / np.sqrt(a.sum(axis=1))
    return a * scale[:, None] * scale[None, :]


def laplacian(g: DirectedMultigraph) -> np.ndarray:
    """Unit-resistor Laplacian; self-loops carry no current"""
    w = symmetric_weights(g)
    w[np.diag_indices(g.node_count)] = 0.0
    return np.diag(w.sum(axis=1)) - w


# ==================== EIGENVALUES ====================

def spectrum(g: DirectedMultigraph) -> np.ndarray:
    """Eigenvalues of the normalized augmented adjacency, descending"""
    if g.node_count == 0:
        return np.zeros(0)
    return np.linalg.eigvalsh(normalized_adjacency(g))[::-1]


def second_largest_eigenvalue(g: DirectedMultigraph) -> float:
    if g.node_count < 1:
        raise DiagnosticsError("second largest eigenvalue needs at least one node")
    if g.node_count == 1:
        return 0.0
    _, components = connected_components(g)
    if components >= 2:
        # one unit eigenvalue per component
        return 1.0
    return float(np.clip(spectrum(g)[1], -1.0, 1.0))


def contraction_factor(g: DirectedMultigraph) -> float:
    """Largest |eigenvalue| outside the unit eigenspace"""
    if g.node_count <= 1:
        return 0.0
    _, components = connected_components(g)
    rest = spectrum(g)[components:]
    return float(np.abs(rest).max()) if rest.size else 0.0


# ==================== RESISTANCE ====================

def laplacian_pseudoinverse(g: DirectedMultigraph) -> np.ndarray:
    """L+ assembled per component as (L_c + J/n_c)^-1 - J/n_c"""
    L = laplacian(g)
    labels, count = connected_components(g)
    pinv = np.zeros_like(L)
    for c in range(count):
        nodes = np.flatnonzero(labels == c)
        if nodes.size == 1:
            continue
        block = L[np.ix_(nodes, nodes)]
        j = np.full(block.shape, 1.0 / nodes.size)
        pinv[np.ix_(nodes, nodes)] = np.linalg.inv(block + j) - j
    return pinv


def resistance_matrix(g: DirectedMultigraph) -> np.ndarray:
    """All-pairs effective resistance, +inf across components"""
    lp = laplacian_pseudoinverse(g)
    diag = np.diag(lp)
    r = diag[:, None] + diag[None, :] - 2 * lp
    labels, _ = connected_components(g)
    r[labels[:, None] != labels[None, :]] = np.inf
    r[np.diag_indices(g.node_count)] = 0.0
    return np.maximum(r, 0.0)


def _check_pair(g, s, t):
    for v in (s, t):
        if not 0 <= v < g.node_count:
            raise NodeIndexError(f"node {v} out of range [0, {g.node_count})", node=v)
    if s == t:
        raise DiagnosticsError("effective resistance needs two distinct nodes")


def effective_resistance(g: DirectedMultigraph, src: int, dst: int) -> float:
    _check_pair(g, src, dst)
    labels, _ = connected_components(g)
    if labels[src] != labels[dst]:
        return math.inf
    lp = laplacian_pseudoinverse(g)
    return float(max(lp[src, src] + lp[dst, dst] - 2 * lp[src, dst], 0.0))


@dataclass(frozen=True)
class BoundCheck:
    bound: float
    holds: bool
    eigenvalue: float
    resistance: float
    cross_component: bool


def _component_eigenvalue(g, labels, component):
    sub, _, _ = induced_subgraph(g, np.flatnonzero(labels == component))
    return second_largest_eigenvalue(sub)


def resistance_eigenvalue_bound(g: DirectedMultigraph, s_node: int, t_node: int) -> BoundCheck:
    """1 - (1/R_st)(1/d_s + 1/d_t) against the eigenvalue of the pair's component.

    Degrees count the added self-loop. Pairs in different components get
    the R -> inf limit, bound 1, and are flagged.
    """
    _check_pair(g, s_node, t_node)
    labels, _ = connected_components(g)
    if labels[s_node] != labels[t_node]:
        lam = second_largest_eigenvalue(g)
        return BoundCheck(1.0, lam >= 1.0 - TOLERANCE, lam, math.inf, True)

    degrees = augmented_degrees(g)
    r = effective_resistance(g, s_node, t_node)
    bound = 1.0 - (1.0 / r) * (1.0 / degrees[s_node] + 1.0 / degrees[t_node])
    lam = _component_eigenvalue(g, labels, labels[s_node])
    return BoundCheck(float(bound), lam >= bound - TOLERANCE, lam, r, False)


# ==================== SUBSPACE ====================

@dataclass(frozen=True)
class SubspaceBasis:
    """N x M, one sqrt-degree indicator column per component, orthonormal"""
    basis: np.ndarray

    @property
    def dimension(self) -> int:
        return int(self.basis.shape[1])


def subspace_basis(g: DirectedMultigraph) -> SubspaceBasis:
    labels, count = connected_components(g)
    root_degree = np.sqrt(augmented_degrees(g))
    basis = np.zeros((g.node_count, count))
    for c in range(count):
        column = np.where(labels == c, root_degree, 0.0)
        basis[:, c] = column / np.linalg.norm(column)
    return SubspaceBasis(basis)


def subspace_distance(H, components: Union[SubspaceBasis, DirectedMultigraph]) -> float:
    """Frobenius norm of H minus its projection onto the component subspace"""
    basis = components if isinstance(components, SubspaceBasis) else subspace_basis(components)
    H = np.asarray(H, dtype=np.float64)
    if H.ndim == 1:
        H = H.reshape(-1, 1)
    if H.shape[0] != basis.basis.shape[0]:
        raise ShapeError(f"H has {H.shape[0]} rows for a basis over {basis.basis.shape[0]} nodes")
    e = basis.basis
    return float(np.linalg.norm(H - e @ (e.T @ H)))


# ==================== SMOOTHING LAYER ====================

def relaxed_smoothing_layer(d_M: float, epsilon: float, s: float, lam: float) -> Union[int, str]:
    """ceil(log(eps / d_M) / log(s * lam)), 0 when already within eps"""
    if epsilon <= 0 or s <= 0 or d_M <= 0:
        raise DiagnosticsError(f"epsilon, d_M and s must be positive (got {epsilon}, {d_M}, {s})")
    if epsilon >= d_M:
        return 0
    if lam <= 0 or s * lam >= 1:
        return UNBOUNDED
    return int(math.ceil(math.log(epsilon / d_M) / math.log(s * lam) - 1e-12))


def estimate_spectral_norm(matrix, tol: float = 1e-8, max_iter: int = 10000, seed: int = 0) -> float:
    """Largest singular value by power iteration on W^T W"""
    w = np.asarray(matrix, dtype=np.float64)
    if w.size == 0 or not np.any(w):
        return 0.0
    v = np.random.default_rng(seed).normal(size=w.shape[1])
    v /= np.linalg.norm(v)
    sigma = 0.0
    for _ in range(max_iter):
        u = w.T @ (w @ v)
        norm = np.linalg.norm(u)
        if norm == 0:
            return 0.0
        v = u / norm
        estimate = math.sqrt(norm)
        if abs(estimate - sigma) <= tol * max(estimate, 1.0):
            return estimate
        sigma = estimate
    return sigma


def estimate_s(matrices: Iterable[np.ndarray]) -> float:
    norms = [estimate_spectral_norm(w) for w in matrices]
    return max(norms) if norms else 0.0


# ==================== REPORTS ====================

@dataclass
class SmoothingReport:
    lambda_: float
    s: float
    d_M: float
    l_hat: Union[int, str]
    components: int
    epsilon: float
    contraction: float = 0.0
    nodes: int = 0

    def to_dict(self) -> dict:
        row = asdict(self)
        row['lambda'] = row.pop('lambda_')
        return row


def smoothing_report(g: DirectedMultigraph, H, s: float, epsilon: float) -> SmoothingReport:
    _guard(g)
    basis = subspace_basis(g)
    d_m = subspace_distance(H, basis)
    lam = second_largest_eigenvalue(g)
    l_hat = 0 if d_m == 0 else relaxed_smoothing_layer(d_m, epsilon, s, lam)
    return SmoothingReport(
        lambda_=lam,
        s=float(s),
        d_M=d_m,
        l_hat=l_hat,
        components=basis.dimension,
        epsilon=float(epsilon),
        contraction=contraction_factor(g),
        nodes=g.node_count,
    )


def smoothing_decay_probe(g: DirectedMultigraph, H0, W, steps: int) -> List[Tuple[int, float, float]]:
    """Linear propagation H <- A_hat H W.

    Returns (k, d_M after k steps, (s * mu)^k * d_M(H0)) where mu is the
    contraction factor and s the spectral norm of W.
    """
    a_hat = normalized_adjacency(g)
    basis = subspace_basis(g)
    W = np.asarray(W, dtype=np.float64)
    factor = estimate_spectral_norm(W) * contraction_factor(g)
    H = np.asarray(H0, dtype=np.float64)
    d0 = subspace_distance(H, basis)
    rows = [(0, d0, d0)]
    for k in range(1, steps + 1):
        H = a_hat @ H @ W
        rows.append((k, subspace_distance(H, basis), factor ** k * d0))
    return rows


# ==================== EDGE-REMOVAL VERIFIER ====================

@dataclass
class VerifierStep:
    step: int
    removed: int
    components: int
    rank: int
    eigenvalue: float
    l_hat: Union[int, str]
    resistance_monotone: bool
    components_monotone: bool
    allowance_monotone: bool
    allowances: List[float] = field(default_factory=list)
    bounds: List[float] = field(default_factory=list)

    @property
    def holds(self) -> bool:
        return self.resistance_monotone and self.components_monotone and self.allowance_monotone


def _tracked_pairs(g):
    pairs = {(int(min(u, v)), int(max(u, v))) for u, v in zip(g.src, g.dst) if u != v}
    return sorted(pairs)


def _allowances(r, degrees, pairs):
    out = []
    for s, t in pairs:
        res = r[s, t]
        out.append(0.0 if not np.isfinite(res) else (1.0 / res) * (1.0 / degrees[s] + 1.0 / degrees[t]))
    return out


def edge_removal_verifier(g: DirectedMultigraph, drop_sets: Sequence[Iterable[int]], epsilon: float, s: float,
                     H=None, pairs: Optional[Sequence[Tuple[int, int]]] = None) -> List[VerifierStep]:
    """Remove the cumulative union of drop sets step by step and check:

    resistance between every pair never decreases, the component count never
    decreases, and the resistance allowance (1/R)(1/d_s + 1/d_t) under the
    original degrees never increases for tracked pairs. Drop sets hold ids of
    the original graph. Row 0 describes the untouched graph.
    """
    _guard(g)
    H = np.ones((g.node_count, 1)) if H is None else np.asarray(H, dtype=np.float64)
    pairs = _tracked_pairs(g) if pairs is None else [(int(a), int(b)) for a, b in pairs]
    degrees = augmented_degrees(g)

    def describe(graph, step, removed, previous):
        r = resistance_matrix(graph)
        _, m = connected_components(graph)
        allowances = _allowances(r, degrees, pairs)
        bounds = [1.0 - a for a in _allowances(r, augmented_degrees(graph), pairs)]
        lam = second_largest_eigenvalue(graph) if graph.node_count else 0.0
        d_m = subspace_distance(H, graph)
        l_hat = 0 if d_m == 0 else relaxed_smoothing_layer(d_m, epsilon, s, lam)
        if previous is None:
            flags = (True, True, True)
        else:
            prev_r, prev_m, prev_allow = previous
            finite = np.isfinite(prev_r)
            with np.errstate(invalid='ignore'):
                r_ok = bool(np.all(r[finite] >= prev_r[finite] - TOLERANCE))
            flags = (
                r_ok,
                m >= prev_m,
                all(a <= p + TOLERANCE for a, p in zip(allowances, prev_allow)),
            )
        row = VerifierStep(step, removed, m, graph.node_count - m, lam, l_hat, *flags,
                           allowances=allowances, bounds=bounds)
        return row, (r, m, allowances)

    rows = []
    row, state = describe(g, 0, 0, None)
    rows.append(row)
    removed = set()
    for step, drop in enumerate(drop_sets, start=1):
        removed |= {int(e) for e in drop}
        current, _ = remove_edges(g, removed)
        row, state = describe(current, step, len(removed), state)
        rows.append(row)
    return rows
