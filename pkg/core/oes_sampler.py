"""
EdgeForge OES Module
One-side edge sampling: confidence scoring, percentile threshold,
correctness filter, ratio sampling and graph replacement
"""

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

import numpy as np

from core.gnn_layers import predict_labels
from core.multigraph import DirectedMultigraph, remove_edges
from core.tensor_ad import softmax_rows
from utils.errors import ConfigError, EmptyInputError, NonFiniteError, ShapeError

OES_MODES = ('cumulative', 'per_epoch_fresh')
CONFIDENCE_MODES = ('softmax', 'raw')
STRATEGIES = ('confidence', 'random')


@dataclass(frozen=True)
class OesConfig:
    percentile: float = 99.0
    sample_ratio: float = 0.10
    active_epochs: int = 20
    rng_seed: int = 0
    mode: str = 'cumulative'
    confidence: str = 'softmax'
    # 'random' drops the same expected number of edges uniformly (edge-agnostic baseline)
    strategy: str = 'confidence'

    def __post_init__(self):
        if not 0 <= self.percentile <= 100:
            raise ConfigError(f"percentile must be within 0..100, got {self.percentile}")
        if not 0 <= self.sample_ratio <= 1:
            raise ConfigError(f"sample_ratio must be within 0..1, got {self.sample_ratio}")
        if int(self.active_epochs) != self.active_epochs or self.active_epochs < 0:
            raise ConfigError(f"active_epochs must be a nonnegative integer, got {self.active_epochs}")
        if self.mode not in OES_MODES:
            raise ConfigError(f"mode must be one of {OES_MODES}, got '{self.mode}'")
        if self.confidence not in CONFIDENCE_MODES:
            raise ConfigError(f"confidence must be one of {CONFIDENCE_MODES}, got '{self.confidence}'")
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"strategy must be one of {STRATEGIES}, got '{self.strategy}'")

    @property
    def nominal_drop_rate(self) -> float:
        return (1 - self.percentile / 100) * self.sample_ratio


@dataclass(frozen=True, eq=False)
class SampleOutcome:
    epoch: int
    threshold: Optional[float]
    eligible_ids: np.ndarray
    dropped_ids: np.ndarray
    retained_graph: DirectedMultigraph
    edge_map: np.ndarray
    nominal_retained: int
    active: bool

    def summary(self) -> dict:
        """Row for the run's metrics log"""
        return {
            'epoch': self.epoch,
            'threshold': self.threshold,
            'eligible': int(self.eligible_ids.size),
            'dropped': int(self.dropped_ids.size),
            'retained': self.retained_graph.edge_count,
            'nominal_retained': self.nominal_retained,
        }


# ==================== SCORING ====================

def edge_confidences(logits, mode: str = 'softmax') -> np.ndarray:
    """Per-edge max class score"""
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 2 or logits.shape[1] != 2:
        raise ShapeError(f"logits must be |E| x 2, got {logits.shape}")
    if not np.all(np.isfinite(logits)):
        raise NonFiniteError("non-finite logits passed to edge_confidences")
    if logits.shape[0] == 0:
        return np.zeros(0)
    if mode == 'raw':
        return logits.max(axis=1)
    return softmax_rows(logits).max(axis=1)


def edge_confidence(logits_row, mode: str = 'softmax') -> float:
    return float(edge_confidences(np.asarray(logits_row, dtype=np.float64).reshape(1, 2), mode)[0])


def percentile_threshold(confidences, p: float) -> float:
    """Nearest-rank percentile: the ceil(p/100 * n)-th smallest value"""
    values = np.sort(np.asarray(confidences, dtype=np.float64).reshape(-1))
    n = values.size
    if n == 0:
        raise EmptyInputError("percentile of an empty confidence set")
    if not 0 <= p <= 100:
        raise ConfigError(f"percentile must be within 0..100, got {p}")
    # decimal percentiles such as 99.9 must rank as written, not as their binary expansion
    rank = math.ceil(Fraction(p).limit_denominator(10**6) * n / 100)
    return float(values[min(max(rank, 1), n) - 1])


def eligible_edges(confidences, predictions, labels, threshold: float) -> np.ndarray:
    """Edge ids with confidence >= threshold and a correct prediction"""
    c = np.asarray(confidences, dtype=np.float64).reshape(-1)
    y_hat = np.asarray(predictions).reshape(-1)
    y = np.asarray(labels).reshape(-1)
    if not c.size == y_hat.size == y.size:
        raise ShapeError(f"length mismatch: {c.size} confidences, {y_hat.size} predictions, {y.size} labels")
    return np.flatnonzero((c >= threshold) & (y_hat == y)).astype(np.int64)


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


# ==================== SAMPLING ====================

def identity_outcome(g: DirectedMultigraph, epoch: int) -> SampleOutcome:
    empty = np.zeros(0, dtype=np.int64)
    return SampleOutcome(
        epoch=epoch,
        threshold=None,
        eligible_ids=empty,
        dropped_ids=empty,
        retained_graph=g,
        edge_map=np.arange(g.edge_count, dtype=np.int64),
        nominal_retained=g.edge_count,
        active=False,
    )


def apply_oes(g: DirectedMultigraph, logits, labels, config: OesConfig, epoch: int,
              rng: Optional[np.random.Generator] = None,
              measured: Optional[np.ndarray] = None) -> SampleOutcome:
    """Drop a ratio of confidently-correct edges for the first n epochs.

    `measured` masks edges that have a logit; unmeasured edges are never eligible.
    """
    logits = np.asarray(logits, dtype=np.float64)
    if logits.shape != (g.edge_count, 2):
        raise ShapeError(f"logits must be {g.edge_count} x 2, got {logits.shape}")
    labels = g.edge_labels if labels is None else np.asarray(labels).reshape(-1)
    if labels.size != g.edge_count:
        raise ShapeError(f"{labels.size} labels for {g.edge_count} edges")

    if epoch > config.active_epochs or g.edge_count == 0:
        return identity_outcome(g, epoch)

    if rng is None:
        rng = np.random.default_rng([config.rng_seed, epoch])
    candidates = (np.arange(g.edge_count) if measured is None
                  else np.flatnonzero(np.asarray(measured, dtype=bool)))
    nominal_count = _round_half_up(config.nominal_drop_rate * g.edge_count)

    if candidates.size == 0:
        return identity_outcome(g, epoch)

    if config.strategy == 'random':
        threshold = None
        eligible = candidates.astype(np.int64)
        count = min(nominal_count, eligible.size)
    else:
        confidences = edge_confidences(logits[candidates], config.confidence)
        threshold = percentile_threshold(confidences, config.percentile)
        local = eligible_edges(confidences, predict_labels(logits[candidates]), labels[candidates], threshold)
        eligible = candidates[local].astype(np.int64)
        count = min(_round_half_up(config.sample_ratio * eligible.size), eligible.size)

    dropped = np.sort(rng.choice(eligible, size=count, replace=False)).astype(np.int64)
    retained, edge_map = remove_edges(g, dropped)
    return SampleOutcome(
        epoch=epoch,
        threshold=threshold,
        eligible_ids=eligible,
        dropped_ids=dropped,
        retained_graph=retained,
        edge_map=edge_map,
        nominal_retained=nominal_count,
        active=True,
    )
