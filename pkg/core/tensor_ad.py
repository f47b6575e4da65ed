"""
EdgeForge Tensor Module
Dense float64 tensors with reverse-mode gradients, Adam, MLPs and checkpoints

Checkpoint container (JSON, UTF-8):

    {
      "format": "edgeforge-checkpoint",
      "version": 1,
      "step": <adam step counter>,
      "parameters": [
        {"name": "<param name>", "shape": [d0, d1, ...], "values": [row-major floats]}
      ]
    }

Parameters appear in registration order.
"""

import contextlib
import json
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from utils.errors import (
    ConfigError,
    EmptyInputError,
    InvalidInputError,
    NonFiniteError,
    ShapeError,
)

CHECKPOINT_FORMAT = 'edgeforge-checkpoint'
CHECKPOINT_VERSION = 1

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Evaluate without recording operations"""
    global _grad_enabled
    previous = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = previous


def _unbroadcast(grad, shape):
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _lift(value):
    return value if isinstance(value, Tensor) else Tensor(value)


class Tensor:
    """Float64 array node in a recorded computation"""

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = None
        self.name = name
        self._prev = ()
        self._backward = None
        self._op = 'leaf'

    # ==================== BASICS ====================

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self):
        return float(self.data.reshape(-1)[0])

    def numpy(self):
        return self.data.copy()

    def detach(self):
        return Tensor(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self._op}, requires_grad={self.requires_grad})"

    @staticmethod
    def _make(data, prev, op, backward):
        if not np.all(np.isfinite(data)):
            raise NonFiniteError(f"non-finite value produced by {op}", op=op)
        track = _grad_enabled and any(p.requires_grad for p in prev)
        out = Tensor.__new__(Tensor)
        out.data = np.asarray(data, dtype=np.float64)
        out.requires_grad = track
        out.grad = None
        out.name = None
        out._prev = ()
        out._backward = None
        out._op = op
        if track:
            out._prev = prev
            out._backward = backward
        return out

    # ==================== ARITHMETIC ====================

    def __add__(self, other):
        other = _lift(other)
        a_shape, b_shape = self.shape, other.shape
        return Tensor._make(
            self.data + other.data, (self, other), 'add',
            lambda g: (_unbroadcast(g, a_shape), _unbroadcast(g, b_shape)),
        )

    __radd__ = __add__

    def __neg__(self):
        return Tensor._make(-self.data, (self,), 'neg', lambda g: (-g,))

    def __sub__(self, other):
        return self + (-_lift(other))

    def __rsub__(self, other):
        return _lift(other) + (-self)

    def __mul__(self, other):
        other = _lift(other)
        a, b = self.data, other.data
        return Tensor._make(
            a * b, (self, other), 'mul',
            lambda g: (_unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape)),
        )

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        if isinstance(scalar, Tensor):
            return self * scalar ** -1.0
        return self * (1.0 / scalar)

    def __pow__(self, exponent):
        a = self.data
        p = float(exponent)
        return Tensor._make(
            a ** p, (self,), 'pow',
            lambda g: (g * p * a ** (p - 1.0),),
        )

    def __matmul__(self, other):
        other = _lift(other)
        if self.ndim != 2 or other.ndim != 2 or self.shape[1] != other.shape[0]:
            raise ShapeError(f"matmul shapes {self.shape} and {other.shape} do not align")
        a, b = self.data, other.data
        return Tensor._make(
            a @ b, (self, other), 'matmul',
            lambda g: (g @ b.T, a.T @ g),
        )

    # ==================== REDUCTIONS ====================

    def sum(self, axis=None, keepdims=False):
        shape = self.shape

        def backward(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, shape).copy(),)

        return Tensor._make(self.data.sum(axis=axis, keepdims=keepdims), (self,), 'sum', backward)

    def mean(self, axis=None, keepdims=False):
        count = self.data.size if axis is None else self.shape[axis]
        if count == 0:
            raise EmptyInputError("mean over an empty axis")
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    # ==================== ELEMENTWISE ====================

    def relu(self):
        mask = self.data > 0
        return Tensor._make(self.data * mask, (self,), 'relu', lambda g: (g * mask,))

    def tanh(self):
        t = np.tanh(self.data)
        return Tensor._make(t, (self,), 'tanh', lambda g: (g * (1.0 - t * t),))

    def exp(self):
        e = np.exp(self.data)
        return Tensor._make(e, (self,), 'exp', lambda g: (g * e,))

    def log_softmax(self):
        """Row-wise log-softmax over the last axis"""
        shifted = self.data - self.data.max(axis=-1, keepdims=True)
        logz = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
        out = shifted - logz
        probs = np.exp(out)
        return Tensor._make(
            out, (self,), 'log_softmax',
            lambda g: (g - probs * g.sum(axis=-1, keepdims=True),),
        )

    # ==================== INDEXING / LAYOUT ====================

    def index_rows(self, rows):
        rows = np.asarray(rows, dtype=np.int64)
        shape = self.shape

        def backward(g):
            full = np.zeros(shape)
            np.add.at(full, rows, g)
            return (full,)

        return Tensor._make(self.data[rows], (self,), 'index_rows', backward)

    def pick(self, cols):
        """out[i] = self[i, cols[i]]"""
        cols = np.asarray(cols, dtype=np.int64)
        rows = np.arange(self.shape[0])
        shape = self.shape

        def backward(g):
            full = np.zeros(shape)
            full[rows, cols] = g
            return (full,)

        return Tensor._make(self.data[rows, cols], (self,), 'pick', backward)

    def expand_rows(self, n):
        """Repeat a 1 x H row n times"""
        if self.ndim != 2 or self.shape[0] != 1:
            raise ShapeError(f"expand_rows needs a 1 x H tensor, got {self.shape}")
        return Tensor._make(
            np.repeat(self.data, n, axis=0), (self,), 'expand_rows',
            lambda g: (g.sum(axis=0, keepdims=True),),
        )


# ==================== FREE FUNCTIONS ====================

def concat(tensors: Sequence[Tensor], axis: int = 1) -> Tensor:
    tensors = [_lift(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    try:
        data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as e:
        raise ShapeError(f"cannot concatenate shapes {[t.shape for t in tensors]}") from e
    cuts = np.cumsum(sizes)[:-1]
    return Tensor._make(data, tuple(tensors), 'concat', lambda g: tuple(np.split(g, cuts, axis=axis)))


def spmm(matrix: sp.spmatrix, x: Tensor) -> Tensor:
    """Constant sparse matrix times tensor"""
    if matrix.shape[1] != x.shape[0]:
        raise ShapeError(f"sparse {matrix.shape} cannot multiply {x.shape}")
    transposed = matrix.T.tocsr()
    return Tensor._make(
        np.asarray(matrix @ x.data), (x,), 'spmm',
        lambda g: (np.asarray(transposed @ g),),
    )


def layer_norm(x: Tensor, eps: float = 1e-5) -> Tensor:
    """Row-wise normalization without affine terms"""
    centered = x - x.mean(axis=1, keepdims=True)
    variance = (centered * centered).mean(axis=1, keepdims=True)
    return centered * (variance + eps) ** -0.5


ACTIVATIONS: Dict[str, Callable[[Tensor], Tensor]] = {
    'relu': Tensor.relu,
    'tanh': Tensor.tanh,
    'identity': lambda t: t,
}


def apply_activation(x: Tensor, name: str) -> Tensor:
    try:
        return ACTIVATIONS[name](x)
    except KeyError:
        raise InvalidInputError(f"unknown activation '{name}'") from None


def softmax_rows(values) -> np.ndarray:
    """Row-wise softmax of a plain array"""
    values = np.asarray(values, dtype=np.float64)
    shifted = values - values.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


# ==================== BACKWARD ====================

def _topological_order(root):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._prev:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(loss: Tensor, params: Optional['ParameterSet'] = None) -> Dict[str, np.ndarray]:
    """Populate .grad for every requires_grad tensor reachable from loss.

    With params, returns name -> gradient; unreachable parameters get zeros.
    """
    if loss.data.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")

    if params is not None:
        params.zero_grad()

    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(_topological_order(loss)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.requires_grad:
            node.grad = g if node.grad is None else node.grad + g
        if node._backward is None:
            continue
        for parent, pg in zip(node._prev, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            if not np.all(np.isfinite(pg)):
                raise NonFiniteError(f"non-finite gradient flowing out of {node._op}", op=node._op)
            key = id(parent)
            grads[key] = pg if key not in grads else grads[key] + pg

    if params is None:
        return {}
    return {
        name: (t.grad.copy() if t.grad is not None else np.zeros_like(t.data))
        for name, t in params.items()
    }


# ==================== PARAMETERS + ADAM ====================

class ParameterSet:
    """Named trainable tensors plus Adam state"""

    def __init__(self):
        self._params: Dict[str, Tensor] = {}
        self.m: Dict[str, np.ndarray] = {}
        self.v: Dict[str, np.ndarray] = {}
        self.step = 0

    def add(self, name: str, value) -> Tensor:
        if name in self._params:
            raise InvalidInputError(f"parameter '{name}' already registered")
        tensor = Tensor(value, requires_grad=True, name=name)
        self._params[name] = tensor
        self.m[name] = np.zeros_like(tensor.data)
        self.v[name] = np.zeros_like(tensor.data)
        return tensor

    def __getitem__(self, name) -> Tensor:
        return self._params[name]

    def __contains__(self, name):
        return name in self._params

    def __iter__(self):
        return iter(self._params)

    def __len__(self):
        return len(self._params)

    def names(self):
        return list(self._params)

    def items(self):
        return self._params.items()

    def zero_grad(self):
        for tensor in self._params.values():
            tensor.grad = None

    def set_value(self, name, value):
        value = np.asarray(value, dtype=np.float64)
        if value.shape != self._params[name].shape:
            raise ShapeError(f"'{name}' has shape {self._params[name].shape}, got {value.shape}")
        self._params[name].data = value.copy()

    def snapshot(self) -> Dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self._params.items()}

    def count(self) -> int:
        return int(sum(t.data.size for t in self._params.values()))


def adam_step(params: ParameterSet, gradients: Dict[str, np.ndarray], lr: float = 1e-3,
              betas: Tuple[float, float] = (0.9, 0.999), eps: float = 1e-8) -> ParameterSet:
    """One bias-corrected Adam update, in place"""
    b1, b2 = betas
    for name, g in gradients.items():
        if g.shape != params[name].shape:
            raise ShapeError(f"gradient for '{name}' has shape {g.shape}, expected {params[name].shape}")

    params.step += 1
    t = params.step
    for name, tensor in params.items():
        g = gradients.get(name)
        if g is None:
            g = np.zeros_like(tensor.data)
        params.m[name] = b1 * params.m[name] + (1 - b1) * g
        params.v[name] = b2 * params.v[name] + (1 - b2) * g * g
        m_hat = params.m[name] / (1 - b1 ** t)
        v_hat = params.v[name] / (1 - b2 ** t)
        tensor.data = tensor.data - lr * m_hat / (np.sqrt(v_hat) + eps)
    return params


# ==================== FINITE DIFFERENCES ====================

def finite_difference_oracle(f: Callable[[np.ndarray], float], x, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar function"""
    if h <= 0:
        raise InvalidInputError(f"step h must be positive, got {h}")
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = grad.reshape(-1)
    for i in range(x.size):
        plus, minus = x.copy().reshape(-1), x.copy().reshape(-1)
        plus[i] += h
        minus[i] -= h
        f_plus = _scalar(f(plus.reshape(x.shape)))
        f_minus = _scalar(f(minus.reshape(x.shape)))
        flat[i] = (f_plus - f_minus) / (2 * h)
    return grad


def _scalar(value):
    if isinstance(value, Tensor):
        return value.item()
    return float(value)


def numeric_gradients(loss_fn: Callable[[], Tensor], params: ParameterSet, h: float = 1e-5,
                      names: Optional[Iterable[str]] = None) -> Dict[str, np.ndarray]:
    """Finite-difference gradient of loss_fn() for each parameter"""
    result = {}
    for name in (names or params.names()):
        tensor = params[name]
        base = tensor.data.copy()

        def f(x, tensor=tensor):
            tensor.data = x
            with no_grad():
                return loss_fn()

        result[name] = finite_difference_oracle(f, base, h)
        tensor.data = base
    return result


def gradient_check_error(analytic, numeric) -> float:
    """||a - n|| / (||a|| + ||n||), 0 when both vanish"""
    a = np.asarray(analytic, dtype=np.float64).reshape(-1)
    n = np.asarray(numeric, dtype=np.float64).reshape(-1)
    denom = np.linalg.norm(a) + np.linalg.norm(n)
    if denom < 1e-12:
        return 0.0
    return float(np.linalg.norm(a - n) / denom)


# ==================== MLP ====================

@dataclass(frozen=True)
class MlpSpec:
    """Layer sizes include the input width: (in, hidden..., out)"""
    prefix: str
    sizes: Tuple[int, ...]
    activation: str = 'relu'
    final_activation: str = 'identity'
    bias: bool = True

    def __post_init__(self):
        if len(self.sizes) < 2:
            raise InvalidInputError(f"MLP '{self.prefix}' needs at least one layer, got sizes {self.sizes}")

    def weight_name(self, i):
        return f"{self.prefix}.{i}.weight"

    def bias_name(self, i):
        return f"{self.prefix}.{i}.bias"


def init_mlp(params: ParameterSet, spec: MlpSpec, rng: np.random.Generator) -> MlpSpec:
    """Register Glorot-uniform weights and zero biases"""
    for i, (fan_in, fan_out) in enumerate(zip(spec.sizes[:-1], spec.sizes[1:])):
        limit = np.sqrt(6.0 / max(fan_in + fan_out, 1))
        params.add(spec.weight_name(i), rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        if spec.bias:
            params.add(spec.bias_name(i), np.zeros((1, fan_out)))
    return spec


def mlp_apply(params: ParameterSet, x: Tensor, spec: MlpSpec) -> Tensor:
    """Affine then activation per layer; the last layer uses final_activation"""
    if x.ndim != 2 or x.shape[1] != spec.sizes[0]:
        raise ShapeError(f"MLP '{spec.prefix}' expects width {spec.sizes[0]}, got shape {x.shape}")
    layers = len(spec.sizes) - 1
    for i in range(layers):
        x = x @ params[spec.weight_name(i)]
        if spec.bias:
            x = x + params[spec.bias_name(i)]
        x = apply_activation(x, spec.final_activation if i == layers - 1 else spec.activation)
    return x


# ==================== LOSS ====================

def weighted_cross_entropy(logits: Tensor, labels, class_weights) -> Tensor:
    """Mean of w[label] * -log softmax(logits)[label].

    Column 0 holds the positive score, column 1 the negative score.
    Labels are 1 for positive and 0 for negative; class_weights is indexed by label.
    """
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if logits.ndim != 2 or logits.shape[1] != 2:
        raise ShapeError(f"logits must be B x 2, got {logits.shape}")
    batch = logits.shape[0]
    if batch == 0:
        raise EmptyInputError("cross-entropy over an empty batch")
    if labels.shape[0] != batch:
        raise ShapeError(f"{labels.shape[0]} labels for {batch} logits")
    if np.any((labels != 0) & (labels != 1)):
        raise InvalidInputError("labels must be 0 or 1")
    weights = np.asarray(class_weights, dtype=np.float64)
    if weights.shape != (2,) or np.any(weights <= 0):
        raise InvalidInputError(f"class_weights must be two positive values, got {class_weights}")

    picked = logits.log_softmax().pick(1 - labels)
    return -(picked * weights[labels]).sum() * (1.0 / batch)


# ==================== CHECKPOINTS ====================

def checkpoint_dict(params: ParameterSet) -> dict:
    return {
        'format': CHECKPOINT_FORMAT,
        'version': CHECKPOINT_VERSION,
        'step': params.step,
        'parameters': [
            {'name': name, 'shape': list(t.shape), 'values': t.data.reshape(-1).tolist(),
             'm': params.m[name].reshape(-1).tolist(), 'v': params.v[name].reshape(-1).tolist()}
            for name, t in params.items()
        ],
    }


def save_checkpoint(params: ParameterSet, path) -> None:
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(checkpoint_dict(params), f)


def load_checkpoint(params: ParameterSet, path) -> ParameterSet:
    """Load values into an already-initialized ParameterSet"""
    with open(path, encoding='utf-8') as f:
        payload = json.load(f)
    if payload.get('format') != CHECKPOINT_FORMAT or payload.get('version') != CHECKPOINT_VERSION:
        raise ConfigError(f"{path} is not an {CHECKPOINT_FORMAT} v{CHECKPOINT_VERSION} file")
    stored = {entry['name']: entry for entry in payload['parameters']}
    if set(stored) != set(params.names()):
        raise ConfigError(f"checkpoint parameters do not match the model: {sorted(set(stored) ^ set(params.names()))}")
    has_moments = all('m' in entry and 'v' in entry for entry in stored.values())
    for name, entry in stored.items():
        shape = entry['shape']
        params.set_value(name, np.asarray(entry['values'], dtype=np.float64).reshape(shape))
        if has_moments:
            params.m[name] = np.asarray(entry['m'], dtype=np.float64).reshape(shape)
            params.v[name] = np.asarray(entry['v'], dtype=np.float64).reshape(shape)
        else:
            params.m[name] = np.zeros(shape)
            params.v[name] = np.zeros(shape)
    # bias correction restarts along with zeroed moments
    params.step = int(payload.get('step', 0)) if has_moments else 0
    return params
