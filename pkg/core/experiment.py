"""
EdgeForge Experiment Module
Training loop with OES gating, evaluation, multi-seed runs, sweeps and depth diagnostics
"""

import os
import time
from dataclasses import asdict, dataclass, field, fields, replace
from multiprocessing import Pool
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from core.data_pipeline import (
    DatasetBundle,
    load_bundle,
    prepare_bundle,
    synthesize_dataset,
)
from core.gnn_layers import ModelConfig, ModelStack, model_forward, predict_labels
from core.multigraph import DirectedMultigraph
from core.oes_sampler import OesConfig, SampleOutcome, apply_oes
from core.spectral_diagnostics import SmoothingReport, estimate_s, smoothing_report
from core.tensor_ad import adam_step, backward, no_grad, weighted_cross_entropy
from utils.colors import Colors, create_progress_bar, log_info, log_success, log_tagged
from utils.config import Config
from utils.database import RunDatabase
from utils.errors import (
    ConfigError,
    EdgeForgeError,
    EmptyInputError,
    NonFiniteError,
    ShapeError,
    SplitError,
)

SWEEP_AXES = ('depth', 'percentile', 'ratio', 'epochs')
BASELINE = 'baseline'
OES = 'oes'


# =============================================================================
# CONFIGURATION
# =============================================================================

@dataclass(frozen=True)
class SynthSpec:
    seed: int = 0
    n_accounts: int = 2000
    n_transactions: int = 20000
    illicit_ratio: float = 0.05
    cycle_length: Optional[int] = None


@dataclass(frozen=True)
class RunConfig:
    kind: str = 'GIN'
    depth: int = 2
    hidden: int = 64
    epochs_total: int = 60
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    seeds: Tuple[int, ...] = Config.DEFAULT_SEEDS
    oes: Optional[OesConfig] = field(default_factory=OesConfig)
    compare_oes: bool = False
    workers: int = 1
    metrics_db: Optional[str] = None
    dataset: Optional[str] = None
    synth: SynthSpec = field(default_factory=SynthSpec)
    early_stop_patience: int = 0
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

    def __post_init__(self):
        object.__setattr__(self, 'seeds', tuple(int(s) for s in self.seeds))
        if not self.seeds:
            raise ConfigError("seeds must not be empty")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError(f"seeds must be distinct, got {self.seeds}")
        if self.epochs_total < 1:
            raise ConfigError(f"epochs_total must be positive, got {self.epochs_total}")
        if self.lr < 0:
            raise ConfigError(f"lr must be nonnegative, got {self.lr}")
        if self.workers < 1:
            raise ConfigError(f"workers must be positive, got {self.workers}")
        if self.early_stop_patience < 0:
            raise ConfigError("early_stop_patience must be nonnegative (0 disables)")
        if self.compare_oes and self.oes is None:
            raise ConfigError("compare_oes needs an OES configuration")
        # depth, kind and the remaining model fields
        self.model_config(1, 0, 0)

    def model_config(self, node_dim: int, edge_dim: int, seed: int) -> ModelConfig:
        return ModelConfig(
            kind=self.kind, depth=self.depth, node_dim=node_dim, edge_dim=edge_dim,
            hidden=self.hidden, learn_epsilon=self.learn_epsilon, epsilon=self.epsilon,
            ego_mode=self.ego_mode, ego_hops=self.ego_hops, ego_directed=self.ego_directed,
            gn_schedule=self.gn_schedule, readout_edge_features=self.readout_edge_features,
            activation=self.activation, norm=self.norm, residual=self.residual, seed=seed,
        ).validate()

    def variants(self) -> List[Tuple[str, Optional[OesConfig]]]:
        """(name, oes) pairs, baseline first"""
        if self.oes is None:
            return [(BASELINE, None)]
        if self.compare_oes:
            return [(BASELINE, None), (OES, self.oes)]
        return [(OES, self.oes)]

    def to_dict(self) -> dict:
        data = asdict(self)
        data['seeds'] = list(self.seeds)
        return data


_BOOL_WORDS = {'1': True, 'true': True, 'yes': True, 'on': True,
               '0': False, 'false': False, 'no': False, 'off': False}


# fields whose default is None but whose values are typed
_OPTIONAL_TEMPLATES = {'cycle_length': 0, 'metrics_db': '', 'dataset': ''}


def _coerce(key, value, template, optional=False):
    """Convert a config-file string to the type of `template`"""
    if not isinstance(value, str):
        return value
    text = value.strip()
    if optional and text.lower() in ('none', ''):
        return None
    try:
        if isinstance(template, bool):
            return _BOOL_WORDS[text.lower()]
        if isinstance(template, int):
            return int(text)
        if isinstance(template, float):
            return float(text)
        if isinstance(template, tuple):
            return tuple(int(part) for part in text.replace(',', ' ').split())
    except (KeyError, ValueError):
        raise ConfigError(f"'{key}' has a malformed value '{value}'", key=key) from None
    return text


def _build(cls, prefix, items, defaults, reserved=()):
    names = {f.name for f in fields(cls)} - set(reserved)
    kwargs = {}
    for key, value in items.items():
        if key not in names:
            raise ConfigError(f"unknown configuration key '{prefix}{key}'", key=f"{prefix}{key}")
        template = getattr(defaults, key)
        optional = template is None or key in _OPTIONAL_TEMPLATES
        if template is None:
            template = _OPTIONAL_TEMPLATES.get(key)
        kwargs[key] = _coerce(prefix + key, value, template, optional)
    return kwargs


def run_config_from_mapping(mapping: Dict[str, object], base: Optional[RunConfig] = None) -> RunConfig:
    """Turn a flat key=value mapping (dotted keys for oes.* and synth.*) into a RunConfig"""
    base = base or RunConfig()
    top, nested = {}, {'oes': {}, 'synth': {}}
    for key, value in mapping.items():
        head, _, rest = key.partition('.')
        if rest:
            if head not in nested:
                raise ConfigError(f"unknown configuration section '{head}'", key=key)
            nested[head][rest] = value
        else:
            top[key] = value

    oes_switch = top.pop('oes', None)
    try:
        kwargs = _build(RunConfig, '', top, base, reserved=('synth',))
        enabled = base.oes is not None if oes_switch is None else _coerce('oes', oes_switch, True)
        oes = None
        if enabled:
            oes_base = base.oes or OesConfig()
            oes = replace(oes_base, **_build(OesConfig, 'oes.', nested['oes'], oes_base))
        elif nested['oes']:
            raise ConfigError("oes.* keys given while OES is switched off")
        synth = replace(base.synth, **_build(SynthSpec, 'synth.', nested['synth'], base.synth))
        return replace(base, oes=oes, synth=synth, **kwargs)
    except TypeError as e:
        raise ConfigError(f"invalid configuration: {e}") from e


# =============================================================================
# DATA
# =============================================================================

def load_run_bundle(config: RunConfig) -> DatasetBundle:
    """Bundle directory, CSV file, or the synthetic dataset when no dataset is set"""
    path = config.dataset
    if path and os.path.isdir(path):
        return load_bundle(path)
    if path:
        return prepare_bundle(path)
    synth = config.synth
    log_info(f"Synthesizing {synth.n_transactions} transactions over {synth.n_accounts} accounts "
             f"(seed {synth.seed}, illicit {synth.illicit_ratio:.1%})")
    return prepare_bundle(synthesize_dataset(
        synth.seed, synth.n_accounts, synth.n_transactions, synth.illicit_ratio,
        cycle_length=synth.cycle_length,
    ))


def check_eval_isolation(bundle: DatasetBundle) -> None:
    """Eval masks lie strictly after the training window and inside their graphs"""
    n_train = bundle.train_graph.edge_count
    n_valid = bundle.valid_graph.edge_count
    valid, test = bundle.valid_eval_mask, bundle.test_eval_mask
    if valid.size and (valid.min() < n_train or valid.max() >= n_valid):
        raise SplitError("validation mask reaches outside its window")
    if test.size and (test.min() < n_valid or test.max() >= bundle.test_graph.edge_count):
        raise SplitError("test mask reaches outside its window")
    if not np.array_equal(bundle.valid_graph.edge_keys[:n_train], bundle.train_graph.edge_keys):
        raise SplitError("training transactions are not a prefix of the validation graph")
    if not np.array_equal(bundle.test_graph.edge_keys[:n_valid], bundle.valid_graph.edge_keys):
        raise SplitError("validation transactions are not a prefix of the test graph")


# =============================================================================
# TRAINING
# =============================================================================

@dataclass
class TrainState:
    """Everything one seed's training run carries between epochs"""
    stack: ModelStack
    config: RunConfig
    oes: Optional[OesConfig]
    train_graph: DirectedMultigraph
    graph: DirectedMultigraph
    origin_ids: np.ndarray
    logits: np.ndarray
    measured: np.ndarray
    seed: int = 0
    epoch: int = 0


@dataclass
class EpochMetrics:
    epoch: int
    train_loss: float
    test_loss: float
    edges_used: int
    dropped: int
    seconds: float
    sample: Optional[SampleOutcome] = None


def init_state(config: RunConfig, bundle: DatasetBundle, seed: int,
               oes: Optional[OesConfig] = None) -> TrainState:
    g = bundle.train_graph
    stack = ModelStack(config.model_config(g.node_features.shape[1], g.edge_features.shape[1], seed))
    if oes is not None:
        oes = replace(oes, rng_seed=seed)
    return TrainState(
        stack=stack,
        config=config,
        oes=oes,
        train_graph=g,
        graph=g,
        origin_ids=np.arange(g.edge_count, dtype=np.int64),
        logits=np.zeros((g.edge_count, 2)),
        measured=np.zeros(g.edge_count, dtype=bool),
        seed=seed,
    )


def class_weights(labels) -> np.ndarray:
    """(1, negatives / positives) indexed by label; (1, 1) when a class is absent"""
    labels = np.asarray(labels).reshape(-1)
    positives = int(labels.sum())
    negatives = labels.size - positives
    if positives == 0 or negatives == 0:
        return np.ones(2)
    return np.array([1.0, negatives / positives])


def _masked_loss(stack, graph, mask, weights) -> float:
    with no_grad():
        logits = model_forward(stack, graph)
    rows = np.asarray(mask, dtype=np.int64)
    if rows.size == 0:
        return 0.0
    return weighted_cross_entropy(logits.index_rows(rows), graph.edge_labels[rows], weights).item()


def _select_graph(state: TrainState, epoch: int) -> Optional[SampleOutcome]:
    oes = state.oes
    if oes is None or epoch > oes.active_epochs:
        if oes is not None and oes.mode == 'per_epoch_fresh' and state.graph is not state.train_graph:
            state.graph = state.train_graph
            state.origin_ids = np.arange(state.train_graph.edge_count, dtype=np.int64)
        return None
    if not state.measured.any():
        # first epoch: no logits yet
        return None

    if oes.mode == 'cumulative':
        outcome = apply_oes(state.graph, state.logits[state.origin_ids], None, oes, epoch)
        state.origin_ids = state.origin_ids[outcome.edge_map >= 0]
    else:
        outcome = apply_oes(state.train_graph, state.logits, None, oes, epoch, measured=state.measured)
        state.origin_ids = np.flatnonzero(outcome.edge_map >= 0).astype(np.int64)
    state.graph = outcome.retained_graph
    return outcome


def train_epoch(state: TrainState, bundle: DatasetBundle, epoch: int) -> EpochMetrics:
    """One optimizer step on the (possibly OES-reduced) training graph"""
    started = time.perf_counter()
    outcome = _select_graph(state, epoch)
    graph = state.graph
    if graph.edge_count == 0:
        raise EmptyInputError(f"epoch {epoch}: no training edges left", epoch=epoch)

    weights = class_weights(graph.edge_labels)
    try:
        logits = model_forward(state.stack, graph)
        loss = weighted_cross_entropy(logits, graph.edge_labels, weights)
        gradients = backward(loss, state.stack.params)
    except NonFiniteError as e:
        details = dict(e.details, epoch=epoch, seed=state.seed)
        raise NonFiniteError(f"epoch {epoch}: {e.message}", **details) from e
    train_loss = loss.item()
    if not np.isfinite(train_loss):
        raise NonFiniteError(f"epoch {epoch}: loss is {train_loss}", epoch=epoch, seed=state.seed)

    cfg = state.config
    adam_step(state.stack.params, gradients, lr=cfg.lr, betas=(cfg.beta1, cfg.beta2))
    state.logits[state.origin_ids] = logits.data
    state.measured[state.origin_ids] = True
    seconds = time.perf_counter() - started
    state.epoch = epoch

    test_loss = _masked_loss(state.stack, bundle.test_graph, bundle.test_eval_mask, weights)
    return EpochMetrics(
        epoch=epoch,
        train_loss=train_loss,
        test_loss=test_loss,
        edges_used=graph.edge_count,
        dropped=int(outcome.dropped_ids.size) if outcome is not None else 0,
        seconds=seconds,
        sample=outcome,
    )


# =============================================================================
# EVALUATION
# =============================================================================

@dataclass(frozen=True)
class Scores:
    precision: float
    recall: float
    f1: float


def f1_from_predictions(predictions, labels) -> Scores:
    """Positive class = laundering (label 1); F1 is 0 when precision + recall is 0"""
    y_hat = np.asarray(predictions).reshape(-1).astype(np.int64)
    y = np.asarray(labels).reshape(-1).astype(np.int64)
    if y_hat.size != y.size:
        raise ShapeError(f"{y_hat.size} predictions for {y.size} labels")
    if y.size == 0:
        raise EmptyInputError("cannot score an empty prediction set")
    tp = int(np.sum((y_hat == 1) & (y == 1)))
    fp = int(np.sum((y_hat == 1) & (y == 0)))
    fn = int(np.sum((y_hat == 0) & (y == 1)))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return Scores(precision, recall, f1)


def evaluate(state, graph: DirectedMultigraph, eval_mask) -> Scores:
    """Precision, recall and F1 on the masked edges of `graph`"""
    mask = np.asarray(eval_mask, dtype=np.int64).reshape(-1)
    if mask.size == 0:
        raise EmptyInputError("evaluation mask is empty")
    stack = state.stack if isinstance(state, TrainState) else state
    with no_grad():
        logits = model_forward(stack, graph)
    return f1_from_predictions(predict_labels(logits.data[mask]), graph.edge_labels[mask])


# =============================================================================
# RUNS
# =============================================================================

@dataclass
class SeedResult:
    variant: str
    seed: int
    f1: float
    precision: float
    recall: float
    valid_f1: float
    train_loss: List[float]
    test_loss: List[float]
    edges_used: List[int]
    dropped: List[int]
    epoch_seconds: List[float]

    @property
    def training_minutes(self) -> float:
        return sum(self.epoch_seconds) / 60.0

    def to_dict(self, include_timing: bool = False) -> dict:
        data = asdict(self)
        if include_timing:
            data['training_minutes'] = self.training_minutes
        else:
            data.pop('epoch_seconds')
        return data


def _mean_std(values) -> Dict[str, float]:
    values = np.asarray(values, dtype=np.float64)
    return {'mean': float(values.mean()), 'std': float(values.std())}


@dataclass
class MetricsReport:
    config: dict
    results: List[SeedResult]
    axis: Optional[str] = None
    value: Optional[float] = None

    @property
    def variants(self) -> List[str]:
        seen = []
        for r in self.results:
            if r.variant not in seen:
                seen.append(r.variant)
        return seen

    def for_variant(self, variant: str) -> List[SeedResult]:
        return [r for r in self.results if r.variant == variant]

    def aggregate(self, include_timing: bool = False) -> Dict[str, dict]:
        """Per variant mean and population std over seeds"""
        summary = {}
        for variant in self.variants:
            rows = self.for_variant(variant)
            entry = {
                'seeds': len(rows),
                'f1': _mean_std([r.f1 for r in rows]),
                'precision': _mean_std([r.precision for r in rows]),
                'recall': _mean_std([r.recall for r in rows]),
                'valid_f1': _mean_std([r.valid_f1 for r in rows]),
                'final_gap': _mean_std([r.test_loss[-1] - r.train_loss[-1] for r in rows]),
            }
            if include_timing:
                entry['training_minutes'] = _mean_std([r.training_minutes for r in rows])
                entry['epoch_seconds'] = _mean_std([s for r in rows for s in r.epoch_seconds])
            summary[variant] = entry
        return summary

    def to_dict(self, include_timing: bool = False) -> dict:
        return {
            'config': self.config,
            'axis': self.axis,
            'value': self.value,
            'aggregate': self.aggregate(include_timing),
            'results': [r.to_dict(include_timing) for r in self.results],
        }

    @classmethod
    def from_dict(cls, data: dict) -> 'MetricsReport':
        results = []
        for row in data['results']:
            row = dict(row)
            row.pop('training_minutes', None)
            row.setdefault('epoch_seconds', [0.0] * len(row['train_loss']))
            results.append(SeedResult(**row))
        return cls(config=data['config'], results=results, axis=data.get('axis'), value=data.get('value'))


def run_seed(config: RunConfig, bundle: DatasetBundle, variant: str, oes: Optional[OesConfig],
             seed: int) -> SeedResult:
    """Train and score one (variant, seed) pair"""
    db = RunDatabase(config.metrics_db) if config.metrics_db else None
    run_id = db.start_run(variant, seed, config.to_dict()) if db else None
    state = init_state(config, bundle, seed, oes)
    history: List[EpochMetrics] = []
    best_valid, stale = -1.0, 0

    try:
        for epoch in range(1, config.epochs_total + 1):
            metrics = train_epoch(state, bundle, epoch)
            history.append(metrics)
            if db:
                db.log_epoch(run_id, epoch, metrics.train_loss, metrics.test_loss,
                             metrics.edges_used, metrics.seconds)
                if metrics.sample is not None:
                    db.log_oes_sample(run_id, metrics.sample.summary())
            if Config.LOG_EPOCHS:
                log_tagged('EPOCH', f"{variant}/seed {seed} epoch {epoch}: train {metrics.train_loss:.4f} "
                                    f"test {metrics.test_loss:.4f} edges {metrics.edges_used} "
                                    f"dropped {metrics.dropped}", Colors.BLUE)
                if metrics.sample is not None:
                    s = metrics.sample
                    log_tagged('OES', f"epoch {epoch}: threshold {s.threshold}, eligible {s.eligible_ids.size}, "
                                        f"dropped {s.dropped_ids.size}, retained {s.retained_graph.edge_count}")
            if config.early_stop_patience and bundle.valid_eval_mask.size:
                valid_f1 = evaluate(state, bundle.valid_graph, bundle.valid_eval_mask).f1
                if valid_f1 > best_valid:
                    best_valid, stale = valid_f1, 0
                else:
                    stale += 1
                    if stale >= config.early_stop_patience:
                        log_info(f"{variant}/seed {seed}: early stop at epoch {epoch}")
                        break

        test = evaluate(state, bundle.test_graph, bundle.test_eval_mask)
        valid = (evaluate(state, bundle.valid_graph, bundle.valid_eval_mask)
                 if bundle.valid_eval_mask.size else Scores(0.0, 0.0, 0.0))
    except EdgeForgeError as e:
        e.details.setdefault('seed', seed)
        e.details.setdefault('variant', variant)
        if db:
            db.end_run(run_id, e.to_json(), status='failed')
        raise

    result = SeedResult(
        variant=variant,
        seed=seed,
        f1=test.f1,
        precision=test.precision,
        recall=test.recall,
        valid_f1=valid.f1,
        train_loss=[m.train_loss for m in history],
        test_loss=[m.test_loss for m in history],
        edges_used=[m.edges_used for m in history],
        dropped=[m.dropped for m in history],
        epoch_seconds=[m.seconds for m in history],
    )
    if db:
        db.end_run(run_id, result.to_dict(include_timing=True))
    return result


def _seed_job(args):
    return run_seed(*args)


def run_experiment(config: RunConfig, bundle: Optional[DatasetBundle] = None) -> MetricsReport:
    """Every variant over every seed; results ordered by (variant, seed)"""
    bundle = bundle or load_run_bundle(config)
    check_eval_isolation(bundle)
    jobs = [(config, bundle, name, oes, seed) for name, oes in config.variants() for seed in config.seeds]
    log_info(f"Running {config.kind} depth {config.depth}: "
             f"{len(config.variants())} variant(s) x {len(config.seeds)} seed(s)")

    if config.workers > 1 and len(jobs) > 1:
        with Pool(min(config.workers, len(jobs))) as pool:
            results = pool.map(_seed_job, jobs)
    else:
        results = [_seed_job(job) for job in jobs]

    order = {name: i for i, (name, _) in enumerate(config.variants())}
    results.sort(key=lambda r: (order[r.variant], r.seed))
    report = MetricsReport(config=config.to_dict(), results=results)
    for variant, entry in report.aggregate().items():
        log_success(f"{variant}: F1 {entry['f1']['mean']:.4f} ± {entry['f1']['std']:.4f}")
    return report


def apply_axis(base: RunConfig, axis: str, value) -> RunConfig:
    """Copy of base with one sweep parameter changed"""
    if axis not in SWEEP_AXES:
        raise ConfigError(f"sweep axis must be one of {SWEEP_AXES}, got '{axis}'")
    if axis == 'depth':
        return replace(base, depth=int(value))
    if base.oes is None:
        raise ConfigError(f"sweeping '{axis}' needs OES switched on")
    if axis == 'percentile':
        return replace(base, oes=replace(base.oes, percentile=float(value)))
    if axis == 'ratio':
        return replace(base, oes=replace(base.oes, sample_ratio=float(value) / 100))
    return replace(base, oes=replace(base.oes, active_epochs=int(value)))


def sweep(base: RunConfig, axis: str, values: Sequence, bundle: Optional[DatasetBundle] = None) -> List[MetricsReport]:
    """One run_experiment per value; everything else stays at base"""
    if not len(values):
        raise ConfigError("sweep needs at least one value")
    configs = [apply_axis(base, axis, v) for v in values]
    bundle = bundle or load_run_bundle(base)
    reports = []
    for i, (value, config) in enumerate(zip(values, configs)):
        log_tagged('SWEEP', f"{create_progress_bar(100 * i / len(configs))} {axis} = {value}", Colors.CYAN)
        report = run_experiment(config, bundle)
        report.axis, report.value = axis, value
        reports.append(report)
    return reports


def sweep_series(reports: Sequence[MetricsReport]) -> List[dict]:
    """F1 and training minutes per axis value and variant"""
    rows = []
    for report in reports:
        for variant, entry in report.aggregate(include_timing=True).items():
            rows.append({
                'axis': report.axis,
                'value': report.value,
                'variant': variant,
                'f1_mean': entry['f1']['mean'],
                'f1_std': entry['f1']['std'],
                'minutes_mean': entry['training_minutes']['mean'],
            })
    return rows


# =============================================================================
# DEPTH DIAGNOSTICS
# =============================================================================

@dataclass
class DiagnosticRow:
    variant: str
    depth: int
    epoch: int
    edges: int
    report: SmoothingReport

    def to_dict(self) -> dict:
        row = {'variant': self.variant, 'depth': self.depth, 'epoch': self.epoch, 'edges': self.edges}
        row.update(self.report.to_dict())
        return row


def diagnose_depths(config: RunConfig, depths: Sequence[int], epochs: Sequence[int] = (0,),
                    epsilon: float = 1e-3, bundle: Optional[DatasetBundle] = None) -> List[DiagnosticRow]:
    """Smoothing reports of the final node states, per variant, depth and checkpoint epoch.

    Epoch 0 is the untrained model; the graph is the training graph as OES left it.
    """
    bundle = bundle or load_run_bundle(config)
    checkpoints = sorted(set(int(e) for e in epochs))
    if not depths or not checkpoints or checkpoints[0] < 0:
        raise ConfigError("diagnose needs depths and nonnegative checkpoint epochs")
    seed = config.seeds[0]
    rows = []
    for variant, oes in config.variants():
        for depth in depths:
            run = replace(config, depth=int(depth))
            state = init_state(run, bundle, seed, oes)
            for epoch in range(0, checkpoints[-1] + 1):
                if epoch:
                    train_epoch(state, bundle, epoch)
                if epoch in checkpoints:
                    with no_grad():
                        H = state.stack.embed(state.graph).nodes.data
                    report = smoothing_report(state.graph, H, estimate_s(state.stack.weight_matrices()), epsilon)
                    rows.append(DiagnosticRow(variant, int(depth), epoch, state.graph.edge_count, report))
            log_info(f"{variant} depth {depth}: lambda {rows[-1].report.lambda_:.4f}, "
                     f"l_hat {rows[-1].report.l_hat}")
    return rows
