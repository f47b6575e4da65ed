"""
Tests for core.tensor_ad
"""

import json
import math

import numpy as np
import pytest

from conftest import random_graph
from core.gnn_layers import ModelConfig, ModelStack, model_forward
from core.tensor_ad import (
    MlpSpec,
    ParameterSet,
    Tensor,
    adam_step,
    backward,
    checkpoint_dict,
    finite_difference_oracle,
    gradient_check_error,
    init_mlp,
    layer_norm,
    load_checkpoint,
    mlp_apply,
    no_grad,
    numeric_gradients,
    save_checkpoint,
    softmax_rows,
    weighted_cross_entropy,
)
from utils.errors import EmptyInputError, InvalidInputError, NonFiniteError, ShapeError


# ==================== MLP ====================

def test_mlp_identity():
    params = ParameterSet()
    spec = init_mlp(params, MlpSpec('m', (3, 3)), np.random.default_rng(0))
    params.set_value('m.0.weight', np.eye(3))
    x = np.array([[1.0, -2.0, 3.0], [0.5, 0.0, -1.0]])
    assert np.array_equal(mlp_apply(params, Tensor(x), spec).data, x)


def test_mlp_zero_weights_gives_bias():
    params = ParameterSet()
    spec = init_mlp(params, MlpSpec('m', (2, 4)), np.random.default_rng(0))
    params.set_value('m.0.weight', np.zeros((2, 4)))
    params.set_value('m.0.bias', np.array([[1.0, 2.0, 3.0, 4.0]]))
    out = mlp_apply(params, Tensor(np.ones((3, 2))), spec)
    assert np.array_equal(out.data, np.tile([1.0, 2.0, 3.0, 4.0], (3, 1)))


def test_mlp_matches_matmul(rng):
    params = ParameterSet()
    spec = init_mlp(params, MlpSpec('m', (4, 5, 2)), rng)
    x = rng.normal(size=(6, 4))
    w0, b0 = params['m.0.weight'].data, params['m.0.bias'].data
    w1, b1 = params['m.1.weight'].data, params['m.1.bias'].data
    expected = np.maximum(x @ w0 + b0, 0) @ w1 + b1
    np.testing.assert_allclose(mlp_apply(params, Tensor(x), spec).data, expected, rtol=1e-12)


def test_mlp_shape_mismatch():
    params = ParameterSet()
    spec = init_mlp(params, MlpSpec('m', (4, 2)), np.random.default_rng(0))
    with pytest.raises(ShapeError):
        mlp_apply(params, Tensor(np.ones((2, 3))), spec)


def test_duplicate_parameter_name():
    params = ParameterSet()
    params.add('w', np.zeros(2))
    with pytest.raises(InvalidInputError):
        params.add('w', np.zeros(2))


# ==================== LOSS ====================

def test_uniform_logits_cost_ln2():
    loss = weighted_cross_entropy(Tensor(np.zeros((5, 2))), [0, 1, 0, 1, 1], [1.0, 1.0])
    assert loss.item() == pytest.approx(math.log(2), abs=1e-15)


def test_confident_correct_logits_cost_nothing():
    # label 1 is column 0
    logits = Tensor(np.array([[50.0, -50.0], [-50.0, 50.0]]))
    assert weighted_cross_entropy(logits, [1, 0], [1.0, 1.0]).item() < 1e-20


def test_weighted_loss_matches_loop(rng):
    logits = rng.normal(size=(20, 2))
    labels = rng.integers(0, 2, size=20)
    weights = [1.0, 5.0]
    total = 0.0
    for row, y in zip(logits, labels):
        column = 0 if y == 1 else 1
        log_p = row[column] - math.log(math.exp(row[0]) + math.exp(row[1]))
        total += -weights[y] * log_p
    loss = weighted_cross_entropy(Tensor(logits), labels, weights)
    assert loss.item() == pytest.approx(total / 20, rel=1e-12)


def test_empty_batch():
    with pytest.raises(EmptyInputError):
        weighted_cross_entropy(Tensor(np.zeros((0, 2))), [], [1.0, 1.0])


def test_softmax_rows(rng):
    p = softmax_rows(rng.normal(scale=10, size=(50, 2)))
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)
    assert np.all((p > 0) & (p < 1))


# ==================== BACKWARD ====================

def test_sum_gradient_is_ones():
    x = Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
    backward(x.sum())
    assert np.array_equal(x.grad, np.ones((2, 3)))


def test_unreachable_parameter_gets_zero():
    params = ParameterSet()
    used = params.add('used', np.array([[2.0]]))
    params.add('unused', np.array([[1.0, 1.0]]))
    grads = backward((used * used).sum(), params)
    assert grads['used'].tolist() == [[4.0]]
    assert grads['unused'].tolist() == [[0.0, 0.0]]


def test_backward_needs_scalar():
    x = Tensor(np.ones((2, 2)), requires_grad=True)
    with pytest.raises(ShapeError):
        backward(x * 2.0)


def test_backward_is_linear(rng):
    a = rng.normal(size=(3, 3))
    x = Tensor(rng.normal(size=(3, 3)), requires_grad=True)
    backward((x * x).sum())
    first = x.grad.copy()
    x.grad = None
    backward((Tensor(a) @ x).sum())
    second = x.grad.copy()
    x.grad = None
    backward((x * x).sum() + (Tensor(a) @ x).sum())
    np.testing.assert_allclose(x.grad, first + second, rtol=1e-12)


def test_non_finite_names_the_op():
    x = Tensor(np.array([[1000.0]]), requires_grad=True)
    with pytest.raises(NonFiniteError) as info:
        x.exp()
    assert info.value.details['op'] == 'exp'


def test_no_grad_records_nothing():
    x = Tensor(np.ones((2, 2)), requires_grad=True)
    with no_grad():
        y = (x * 3.0).sum()
    assert not y.requires_grad


def test_layer_norm_rows(rng):
    x = Tensor(rng.normal(size=(4, 6)))
    out = layer_norm(x).data
    np.testing.assert_allclose(out.mean(axis=1), 0.0, atol=1e-12)
    np.testing.assert_allclose(out.std(axis=1), 1.0, atol=1e-3)


# ==================== ADAM ====================

def test_adam_zero_gradient_keeps_values(rng):
    params = ParameterSet()
    params.add('w', rng.normal(size=(3, 2)))
    before = params.snapshot()
    adam_step(params, {'w': np.zeros((3, 2))}, lr=0.1)
    assert np.array_equal(params['w'].data, before['w'])
    assert params.step == 1


def test_adam_first_step_moves_by_lr():
    params = ParameterSet()
    params.add('w', np.array([[1.0]]))
    adam_step(params, {'w': np.array([[4.0]])}, lr=0.01)
    assert params['w'].data[0, 0] == pytest.approx(1.0 - 0.01, abs=1e-9)


def test_adam_minimizes_square():
    params = ParameterSet()
    params.add('w', np.array([[1.0]]))
    for _ in range(50):
        grads = backward((params['w'] * params['w']).sum(), params)
        adam_step(params, grads, lr=0.1)
    assert abs(params['w'].data[0, 0]) < 1.0


def test_adam_shape_check():
    params = ParameterSet()
    params.add('w', np.zeros((2, 2)))
    with pytest.raises(ShapeError):
        adam_step(params, {'w': np.zeros((3, 2))})


# ==================== FINITE DIFFERENCES ====================

def test_finite_difference_square():
    grad = finite_difference_oracle(lambda x: float((x ** 2).sum()), np.array([3.0]), h=1e-5)
    assert grad[0] == pytest.approx(6.0, abs=1e-6)


def test_finite_difference_constant():
    assert np.array_equal(finite_difference_oracle(lambda x: 7.0, np.ones((2, 3))), np.zeros((2, 3)))


def test_finite_difference_needs_positive_step():
    with pytest.raises(InvalidInputError):
        finite_difference_oracle(lambda x: 0.0, np.ones(2), h=0.0)


def test_mlp_gradients_match_finite_differences(rng):
    params = ParameterSet()
    spec = init_mlp(params, MlpSpec('m', (3, 4, 2), activation='tanh'), rng)
    x = Tensor(rng.normal(size=(7, 3)))
    labels = rng.integers(0, 2, size=7)

    def loss_fn():
        return weighted_cross_entropy(mlp_apply(params, x, spec), labels, [1.0, 3.0])

    analytic = backward(loss_fn(), params)
    numeric = numeric_gradients(loss_fn, params)
    for name in params:
        assert gradient_check_error(analytic[name], numeric[name]) <= 1e-4


def test_gin_stack_gradients_match_finite_differences():
    rng = np.random.default_rng(5)
    g = random_graph(rng, 10, 18, node_dim=3, edge_dim=2)
    stack = ModelStack(ModelConfig(kind='GIN', depth=2, node_dim=3, edge_dim=2, hidden=4,
                                   activation='tanh', learn_epsilon=True, seed=3))

    def loss_fn():
        return weighted_cross_entropy(model_forward(stack, g), g.edge_labels, [1.0, 2.0])

    analytic = backward(loss_fn(), stack.params)
    numeric = numeric_gradients(loss_fn, stack.params)
    worst = max(gradient_check_error(analytic[n], numeric[n]) for n in stack.params)
    assert worst <= 1e-4


def test_gradient_check_error_zero_vectors():
    assert gradient_check_error(np.zeros(3), np.zeros(3)) == 0.0


# ==================== CHECKPOINTS ====================

def test_checkpoint_restores_values(tmp_path, rng):
    params = ParameterSet()
    init_mlp(params, MlpSpec('m', (3, 2)), rng)
    params.step = 7
    path = tmp_path / 'model.json'
    save_checkpoint(params, path)

    fresh = ParameterSet()
    init_mlp(fresh, MlpSpec('m', (3, 2)), np.random.default_rng(99))
    load_checkpoint(fresh, path)
    assert fresh.step == 7
    for name in params:
        assert np.array_equal(fresh[name].data, params[name].data)


def test_resumed_adam_matches_uninterrupted_run(tmp_path, rng):
    grads = [{'m.0.weight': rng.normal(size=(3, 2)), 'm.0.bias': rng.normal(size=(1, 2))} for _ in range(6)]

    straight = ParameterSet()
    init_mlp(straight, MlpSpec('m', (3, 2)), np.random.default_rng(5))
    for g in grads:
        adam_step(straight, g, lr=0.01)

    first = ParameterSet()
    init_mlp(first, MlpSpec('m', (3, 2)), np.random.default_rng(5))
    for g in grads[:3]:
        adam_step(first, g, lr=0.01)
    path = tmp_path / 'mid.json'
    save_checkpoint(first, path)

    resumed = ParameterSet()
    init_mlp(resumed, MlpSpec('m', (3, 2)), np.random.default_rng(0))
    load_checkpoint(resumed, path)
    assert resumed.step == 3
    for g in grads[3:]:
        adam_step(resumed, g, lr=0.01)
    for name in straight:
        np.testing.assert_allclose(resumed[name].data, straight[name].data, rtol=0, atol=1e-12)


def test_checkpoint_without_moments_restarts_bias_correction(tmp_path, rng):
    params = ParameterSet()
    init_mlp(params, MlpSpec('m', (3, 2)), rng)
    adam_step(params, {'m.0.weight': np.ones((3, 2))})
    payload = checkpoint_dict(params)
    for entry in payload['parameters']:
        entry.pop('m')
        entry.pop('v')
    path = tmp_path / 'bare.json'
    path.write_text(json.dumps(payload))

    fresh = ParameterSet()
    init_mlp(fresh, MlpSpec('m', (3, 2)), rng)
    load_checkpoint(fresh, path)
    assert fresh.step == 0
    assert all(not fresh.m[name].any() and not fresh.v[name].any() for name in fresh)
