"""
EdgeForge GNN Layers Module
GIN with edge features, ego-ID GIN, GN-block edge updates and the edge readout head
"""

from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from core.multigraph import DirectedMultigraph, EgoNetwork, build_graph, ego_network
from core.tensor_ad import (
    MlpSpec,
    ParameterSet,
    Tensor,
    apply_activation,
    concat,
    init_mlp,
    layer_norm,
    mlp_apply,
    spmm,
)
from utils.config import Config
from utils.errors import ConfigError, InvalidInputError, ShapeError

MODEL_KINDS = ('GIN', 'GIN_EGO', 'GIN_EU')
EGO_MODES = ('fast', 'exact')
GN_SCHEDULES = ('per_layer', 'once')


def _glorot(rng, fan_in, fan_out):
    limit = np.sqrt(6.0 / max(fan_in + fan_out, 1))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def _check_rows(t: Optional[Tensor], rows: int, what: str):
    if t is not None and (t.ndim != 2 or t.shape[0] != rows):
        raise ShapeError(f"{what} must have {rows} rows, got shape {t.shape}")


def _self_scale(params, layer, H):
    if layer.learn_epsilon:
        return H * (params[layer.epsilon_name] + 1.0)
    return H * (1.0 + layer.epsilon)


# =============================================================================
# GIN
# =============================================================================

@dataclass
class GinLayer:
    """h'(v) = phi((1 + eps) h(v) + sum over in-edges of h(u) + h(u,v) W_mix)"""
    params: ParameterSet
    prefix: str
    hidden: int
    edge_dim: int
    update: MlpSpec
    learn_epsilon: bool = False
    epsilon: float = 0.0

    @property
    def epsilon_name(self):
        return f"{self.prefix}.eps"

    @property
    def mix_name(self):
        return f"{self.prefix}.W_mix"

    @classmethod
    def create(cls, params, prefix, hidden, edge_dim, rng, learn_epsilon=False, epsilon=0.0,
               activation='relu', update_sizes=None):
        update = init_mlp(params, MlpSpec(f"{prefix}.phi", update_sizes or (hidden, hidden, hidden),
                                          activation=activation), rng)
        if edge_dim:
            params.add(f"{prefix}.W_mix", _glorot(rng, edge_dim, hidden))
        if learn_epsilon:
            params.add(f"{prefix}.eps", np.full((1, 1), epsilon))
        return cls(params, prefix, hidden, edge_dim, update, learn_epsilon, epsilon)


def gin_forward(layer: GinLayer, g: DirectedMultigraph, H: Tensor, E_feat: Optional[Tensor] = None) -> Tensor:
    _check_rows(H, g.node_count, 'node matrix')
    if H.shape[1] != layer.update.sizes[0]:
        raise ShapeError(f"{layer.prefix} expects width {layer.update.sizes[0]}, got {H.shape[1]}")
    messages = spmm(g.src_selector, H)
    if layer.edge_dim and E_feat is not None:
        _check_rows(E_feat, g.edge_count, 'edge matrix')
        messages = messages + E_feat @ layer.params[layer.mix_name]
    z = _self_scale(layer.params, layer, H) + spmm(g.in_aggregator, messages)
    return mlp_apply(layer.params, z, layer.update)


# =============================================================================
# GIN + EGO IDS
# =============================================================================

@dataclass
class EgoGinLayer:
    """Messages from a node's ego center go through theta_1, all others through theta_0"""
    params: ParameterSet
    prefix: str
    hidden: int
    edge_dim: int
    update: MlpSpec
    learn_epsilon: bool = False
    epsilon: float = 0.0

    @property
    def epsilon_name(self):
        return f"{self.prefix}.eps"

    def theta_name(self, labeled: bool):
        return f"{self.prefix}.theta{int(labeled)}"

    def theta_edge_name(self, labeled: bool):
        return f"{self.prefix}.theta{int(labeled)}_edge"

    @classmethod
    def create(cls, params, prefix, hidden, edge_dim, rng, learn_epsilon=False, epsilon=0.0,
               activation='relu'):
        for labeled in (False, True):
            params.add(f"{prefix}.theta{int(labeled)}", _glorot(rng, hidden, hidden))
            if edge_dim:
                params.add(f"{prefix}.theta{int(labeled)}_edge", _glorot(rng, edge_dim, hidden))
        update = init_mlp(params, MlpSpec(f"{prefix}.phi", (hidden, hidden, hidden), activation=activation), rng)
        if learn_epsilon:
            params.add(f"{prefix}.eps", np.full((1, 1), epsilon))
        return cls(params, prefix, hidden, edge_dim, update, learn_epsilon, epsilon)

    def theta(self, labeled, h, he=None):
        out = h @ self.params[self.theta_name(labeled)]
        if self.edge_dim and he is not None:
            out = out + he @ self.params[self.theta_edge_name(labeled)]
        return out


def ego_layer_forward(layer: EgoGinLayer, g: DirectedMultigraph, H: Tensor, E_feat: Optional[Tensor],
                      center_of: np.ndarray) -> Tensor:
    """Ego pass where center_of[w] is the center of w's ego network.

    Both the self term and every message go through theta, so with
    theta0 == theta1 == theta this equals a GIN pass over H @ theta.
    Identity thetas reproduce GIN on the raw H.
    """
    _check_rows(H, g.node_count, 'node matrix')
    _check_rows(E_feat, g.edge_count, 'edge matrix')
    center_of = np.asarray(center_of, dtype=np.int64)

    from_center = (g.src == center_of[g.dst]).astype(np.float64).reshape(-1, 1)
    h_src = spmm(g.src_selector, H)
    messages = (layer.theta(True, h_src, E_feat) * from_center
                + layer.theta(False, h_src, E_feat) * (1.0 - from_center))

    is_center = (np.arange(g.node_count) == center_of).astype(np.float64).reshape(-1, 1)
    own = layer.theta(True, H) * is_center + layer.theta(False, H) * (1.0 - is_center)

    z = _self_scale(layer.params, layer, own) + spmm(g.in_aggregator, messages)
    return mlp_apply(layer.params, z, layer.update)


def ego_forward(layer: EgoGinLayer, ego: EgoNetwork, H: Tensor, E_feat: Optional[Tensor] = None) -> Tensor:
    marks = np.asarray(ego.center_mark)
    if marks.sum() != 1:
        raise InvalidInputError(f"ego network must flag exactly one center, found {int(marks.sum())}")
    center = int(np.flatnonzero(marks)[0])
    center_of = np.full(ego.subgraph.node_count, center, dtype=np.int64)
    return ego_layer_forward(layer, ego.subgraph, H, E_feat, center_of)


@dataclass(frozen=True)
class EgoUnion:
    """Disjoint union of every node's ego network"""
    graph: DirectedMultigraph
    center_of: np.ndarray
    center_rows: np.ndarray


def ego_union(g: DirectedMultigraph, hops: int, directed: bool = False) -> EgoUnion:
    sources, targets, node_rows, edge_rows, centers, center_rows = [], [], [], [], [], []
    offset = 0
    for v in range(g.node_count):
        ego = ego_network(g, v, hops, directed=directed)
        n = ego.subgraph.node_count
        sources.append(ego.subgraph.src + offset)
        targets.append(ego.subgraph.dst + offset)
        node_rows.append(ego.node_ids)
        edge_rows.append(ego.edge_ids)
        centers.append(np.full(n, offset + ego.center_local_index, dtype=np.int64))
        center_rows.append(offset + ego.center_local_index)
        offset += n

    node_rows = np.concatenate(node_rows) if node_rows else np.zeros(0, dtype=np.int64)
    edge_rows = np.concatenate(edge_rows) if edge_rows else np.zeros(0, dtype=np.int64)
    edges = (np.stack([np.concatenate(sources), np.concatenate(targets)], axis=1)
             if sources else np.zeros((0, 2), dtype=np.int64))
    union = build_graph(
        offset,
        edges,
        node_features=g.node_features[node_rows],
        edge_features=g.edge_features[edge_rows],
        edge_labels=g.edge_labels[edge_rows],
        edge_keys=g.edge_keys[edge_rows],
    )
    return EgoUnion(
        graph=union,
        center_of=np.concatenate(centers) if centers else np.zeros(0, dtype=np.int64),
        center_rows=np.asarray(center_rows, dtype=np.int64),
    )


# =============================================================================
# GN BLOCK
# =============================================================================

@dataclass
class GnBlock:
    """Edge -> node -> global update with mean aggregation between stages"""
    params: ParameterSet
    prefix: str
    node_dim: int
    edge_dim: int
    global_dim: int
    edge_update: MlpSpec
    node_update: MlpSpec
    global_update: MlpSpec
    aggregator: str = 'mean'

    @classmethod
    def create(cls, params, prefix, node_dim, edge_dim, global_dim, rng, activation='relu',
               aggregator='mean', bias=True):
        if aggregator not in ('mean', 'sum'):
            raise InvalidInputError(f"aggregator must be 'mean' or 'sum', got '{aggregator}'")
        phi_e = MlpSpec(f"{prefix}.phi_e", (edge_dim + 2 * node_dim + global_dim, edge_dim),
                        final_activation=activation, bias=bias)
        phi_v = MlpSpec(f"{prefix}.phi_v", (edge_dim + node_dim + global_dim, node_dim),
                        final_activation=activation, bias=bias)
        phi_g = MlpSpec(f"{prefix}.phi_g", (edge_dim + node_dim + global_dim, global_dim),
                        final_activation=activation, bias=bias)
        for spec in (phi_e, phi_v, phi_g):
            init_mlp(params, spec, rng)
        return cls(params, prefix, node_dim, edge_dim, global_dim, phi_e, phi_v, phi_g, aggregator)


def gn_block_forward(block: GnBlock, g: DirectedMultigraph, H: Tensor, E_feat: Tensor,
                     global_attr: Optional[Tensor] = None) -> Tuple[Tensor, Tensor, Tensor]:
    """Returns (edge features, node features, global attribute), all updated"""
    _check_rows(H, g.node_count, 'node matrix')
    _check_rows(E_feat, g.edge_count, 'edge matrix')
    if global_attr is None:
        global_attr = Tensor(np.zeros((1, block.global_dim)))
    if global_attr.shape != (1, block.global_dim):
        raise ShapeError(f"global attribute must be 1 x {block.global_dim}, got {global_attr.shape}")
    p = block.params

    # 1. edges see their own state, both endpoints and the global attribute
    edge_in = concat([E_feat, spmm(g.src_selector, H), spmm(g.dst_selector, H),
                      global_attr.expand_rows(g.edge_count)])
    edges = mlp_apply(p, edge_in, block.edge_update)

    # 2. per-receiver aggregation of incoming edges
    aggregator = g.in_mean_aggregator if block.aggregator == 'mean' else g.in_aggregator
    incoming = spmm(aggregator, edges)

    # 3. nodes
    node_in = concat([incoming, H, global_attr.expand_rows(g.node_count)])
    nodes = mlp_apply(p, node_in, block.node_update)

    # 4-5. global aggregation over edges and nodes
    edge_summary = _global_pool(edges, g.edge_count, block.edge_dim, block.aggregator)
    node_summary = _global_pool(nodes, g.node_count, block.node_dim, block.aggregator)

    # 6. global
    new_global = mlp_apply(p, concat([edge_summary, node_summary, global_attr]), block.global_update)
    return edges, nodes, new_global


def _global_pool(x: Tensor, rows: int, width: int, aggregator: str) -> Tensor:
    if rows == 0:
        return Tensor(np.zeros((1, width)))
    if aggregator == 'mean':
        return x.mean(axis=0, keepdims=True)
    return x.sum(axis=0, keepdims=True)


# =============================================================================
# MODEL STACK
# =============================================================================

@dataclass
class ModelConfig:
    kind: str = 'GIN'
    depth: int = 2
    node_dim: int = 3
    edge_dim: int = 0
    hidden: int = 64
    learn_epsilon: bool = False
    epsilon: float = 0.0
    ego_mode: str = 'fast'
    ego_hops: int = 2
    ego_directed: bool = False
    gn_schedule: str = 'per_layer'
    readout_edge_features: bool = True
    activation: str = 'relu'
    norm: bool = True
    residual: bool = True
    seed: int = 0

    def validate(self):
        if self.kind not in MODEL_KINDS:
            raise ConfigError(f"model kind must be one of {MODEL_KINDS}, got '{self.kind}'")
        if not Config.MIN_DEPTH <= self.depth <= Config.MAX_DEPTH:
            raise ConfigError(f"depth must be within {Config.MIN_DEPTH}..{Config.MAX_DEPTH}, got {self.depth}")
        if self.hidden < 1 or self.node_dim < 1 or self.edge_dim < 0:
            raise ConfigError("hidden and node_dim must be positive, edge_dim nonnegative")
        if self.ego_mode not in EGO_MODES:
            raise ConfigError(f"ego_mode must be one of {EGO_MODES}, got '{self.ego_mode}'")
        if self.gn_schedule not in GN_SCHEDULES:
            raise ConfigError(f"gn_schedule must be one of {GN_SCHEDULES}, got '{self.gn_schedule}'")
        if self.ego_hops < 0:
            raise ConfigError("ego_hops must be nonnegative")
        return self


@dataclass
class Embedding:
    """Node states and the edge state seen by the readout"""
    nodes: Tensor
    edges: Optional[Tensor]
    global_attr: Optional[Tensor] = None


class ModelStack:
    """Encoders, `depth` message-passing layers and the edge readout"""

    def __init__(self, config: ModelConfig):
        self.config = config.validate()
        self.params = ParameterSet()
        rng = np.random.default_rng(config.seed)
        H = config.hidden

        node_in = config.node_dim + (1 if config.kind == 'GIN_EGO' else 0)
        self.node_encoder = init_mlp(self.params, MlpSpec('enc.node', (node_in, H)), rng)
        self.edge_encoder = (init_mlp(self.params, MlpSpec('enc.edge', (config.edge_dim, H)), rng)
                             if config.edge_dim else None)
        # EU carries a hidden-width edge state even without raw edge features
        edge_width = H if (config.edge_dim or config.kind == 'GIN_EU') else 0

        self.layers: List = []
        self.blocks: List[GnBlock] = []
        for k in range(config.depth):
            if config.kind == 'GIN_EGO':
                layer = EgoGinLayer.create(self.params, f"layer{k}", H, edge_width, rng,
                                           config.learn_epsilon, config.epsilon, config.activation)
            else:
                layer = GinLayer.create(self.params, f"layer{k}", H, edge_width, rng,
                                        config.learn_epsilon, config.epsilon, config.activation)
            self.layers.append(layer)
        if config.kind == 'GIN_EU':
            blocks = config.depth if config.gn_schedule == 'per_layer' else 1
            for k in range(blocks):
                self.blocks.append(GnBlock.create(self.params, f"gn{k}", H, H, H, rng, config.activation))

        readout_in = 2 * H + (H if self.uses_edge_readout else 0)
        self.readout_m = init_mlp(self.params, MlpSpec('readout.m', (readout_in, H, H),
                                                       activation=config.activation,
                                                       final_activation=config.activation), rng)
        self.readout_sigma = init_mlp(self.params, MlpSpec('readout.sigma', (H, 2)), rng)

    @property
    def uses_edge_readout(self) -> bool:
        cfg = self.config
        return cfg.readout_edge_features and (cfg.edge_dim > 0 or cfg.kind == 'GIN_EU')

    def weight_matrices(self) -> List[np.ndarray]:
        """Message-passing weights (layers and GN blocks), for spectral-norm estimates"""
        return [t.data for name, t in self.params.items()
                if name.startswith(('layer', 'gn')) and t.ndim == 2 and min(t.shape) > 1
                and not name.endswith('.bias')]

    # ==================== PIECES ====================

    def encode(self, g: DirectedMultigraph, center_mark: Optional[np.ndarray] = None):
        x = g.node_features
        if x.shape[1] != self.config.node_dim:
            raise ShapeError(f"model expects {self.config.node_dim} node features, got {x.shape[1]}")
        if self.config.kind == 'GIN_EGO':
            mark = np.ones(g.node_count) if center_mark is None else center_mark
            x = np.concatenate([x, np.asarray(mark, dtype=np.float64).reshape(-1, 1)], axis=1)
        H = mlp_apply(self.params, Tensor(x), self.node_encoder)

        E = None
        if self.edge_encoder is not None:
            if g.edge_features.shape[1] != self.config.edge_dim:
                raise ShapeError(f"model expects {self.config.edge_dim} edge features, "
                                 f"got {g.edge_features.shape[1]}")
            E = mlp_apply(self.params, Tensor(g.edge_features), self.edge_encoder)
        elif self.config.kind == 'GIN_EU':
            E = Tensor(np.zeros((g.edge_count, self.config.hidden)))
        return H, E

    def post_layer(self, previous: Tensor, update: Tensor) -> Tensor:
        cfg = self.config
        out = apply_activation(layer_norm(update) if cfg.norm else update, cfg.activation)
        return (previous + out) * 0.5 if cfg.residual else out

    def layer_step(self, k, g, H, E, center_of=None):
        layer = self.layers[k]
        if isinstance(layer, EgoGinLayer):
            if center_of is None:
                center_of = np.arange(g.node_count)
            return self.post_layer(H, ego_layer_forward(layer, g, H, E, center_of))
        return self.post_layer(H, gin_forward(layer, g, H, E))

    def block_step(self, k, g, H, E, global_attr):
        edges, _, global_attr = gn_block_forward(self.blocks[k], g, H, E, global_attr)
        return self.post_layer(E, edges), global_attr

    # ==================== FULL PASS ====================

    def embed(self, g: DirectedMultigraph) -> Embedding:
        cfg = self.config
        if cfg.kind == 'GIN_EGO' and cfg.ego_mode == 'exact':
            return self._embed_exact_ego(g)

        H, E = self.encode(g)
        global_attr = Tensor(np.zeros((1, cfg.hidden))) if cfg.kind == 'GIN_EU' else None
        for k in range(cfg.depth):
            H = self.layer_step(k, g, H, E)
            if cfg.kind == 'GIN_EU' and cfg.gn_schedule == 'per_layer':
                E, global_attr = self.block_step(k, g, H, E, global_attr)
        if cfg.kind == 'GIN_EU' and cfg.gn_schedule == 'once':
            E, global_attr = self.block_step(0, g, H, E, global_attr)
        return Embedding(H, E, global_attr)

    def _embed_exact_ego(self, g: DirectedMultigraph) -> Embedding:
        cfg = self.config
        union = ego_union(g, cfg.ego_hops, cfg.ego_directed)
        marks = (np.arange(union.graph.node_count) == union.center_of).astype(np.float64)
        H, E_union = self.encode(union.graph, center_mark=marks)
        for k in range(cfg.depth):
            H = self.layer_step(k, union.graph, H, E_union, union.center_of)
        _, E = self.encode(g)
        return Embedding(H.index_rows(union.center_rows), E)


def edge_readout(stack: ModelStack, g: DirectedMultigraph, H: Tensor,
                 E_feat: Optional[Tensor] = None) -> Tuple[Tensor, np.ndarray]:
    """logits |E| x 2 (column 0 positive) and predicted labels (1 = positive)"""
    _check_rows(H, g.node_count, 'node matrix')
    parts = [spmm(g.src_selector, H), spmm(g.dst_selector, H)]
    if stack.uses_edge_readout:
        if E_feat is None:
            raise ShapeError("edge readout is configured with edge features but none were given")
        _check_rows(E_feat, g.edge_count, 'edge matrix')
        parts.append(E_feat)
    hidden = mlp_apply(stack.params, concat(parts), stack.readout_m)
    logits = mlp_apply(stack.params, hidden, stack.readout_sigma)
    return logits, predict_labels(logits.data)


def predict_labels(logits) -> np.ndarray:
    """1 where the positive score is strictly larger; ties go negative"""
    logits = np.asarray(logits, dtype=np.float64)
    return (logits[:, 0] > logits[:, 1]).astype(np.int8)


def model_forward(stack: ModelStack, g: DirectedMultigraph) -> Tensor:
    embedding = stack.embed(g)
    logits, _ = edge_readout(stack, g, embedding.nodes, embedding.edges)
    return logits
