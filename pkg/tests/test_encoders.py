import numpy as np
import pytest

from hatealign import encoders
from hatealign.encoders import MlpConfig, backward, encode_normalized, forward, init_mlp
from hatealign.errors import ConfigError, DimensionError, StructuralError
from hatealign.tensorcore import finite_diff_grad, make_rng, relative_error


def test_init_is_deterministic_with_zero_biases_and_bounded_weights():
    cfg = MlpConfig(4, [8], 3, init_scale=1.0)
    p1, p2 = init_mlp(cfg, make_rng(7)), init_mlp(cfg, make_rng(7))
    for a, b in zip(p1.arrays(), p2.arrays()):
        assert a.tobytes() == b.tobytes()
    assert all(np.all(b == 0) for b in p1.biases)
    for w in p1.weights:
        assert np.max(np.abs(w)) <= 1.0 / np.sqrt(w.shape[0])


@pytest.mark.parametrize("kwargs", [
    dict(input_dim=0), dict(input_dim=3, dropout_rate=1.0), dict(input_dim=3, activation="gelu"),
])
def test_config_validation(kwargs):
    with pytest.raises(ConfigError):
        MlpConfig(**kwargs)


def test_zero_weights_give_zero_embeddings():
    cfg = MlpConfig(4, [8], 3)
    p = init_mlp(cfg, make_rng(0)).with_flat(np.zeros(init_mlp(cfg, make_rng(0)).flat().size))
    out, _ = forward(p, make_rng(1).uniform(-1, 1, (5, 4)))
    np.testing.assert_array_equal(out, 0.0)


def test_eval_forward_is_bitwise_deterministic():
    p = init_mlp(MlpConfig(4, [8, 6], 3), make_rng(0))
    x = make_rng(1).uniform(-1, 1, (5, 4))
    assert forward(p, x)[0].tobytes() == forward(p, x)[0].tobytes()


def test_forward_rejects_wrong_width():
    p = init_mlp(MlpConfig(4, [8], 3), make_rng(0))
    with pytest.raises(DimensionError):
        forward(p, np.ones((2, 5)))


def test_dropout_mean_matches_eval_output():
    # one hidden layer + linear output: E[train output] equals eval output
    p = init_mlp(MlpConfig(4, [8], 3, dropout_rate=0.5, init_scale=2.0), make_rng(0))
    x = make_rng(1).uniform(-1, 1, (1, 4))
    rng = make_rng(2)
    draws = np.array([forward(p, x, True, rng)[0][0] for _ in range(10_000)])
    ref = forward(p, x)[0][0]
    assert np.max(np.abs(draws.mean(axis=0) - ref)) / np.max(np.abs(ref)) < 0.05


def test_zero_upstream_gradient_gives_zero_gradients():
    p = init_mlp(MlpConfig(4, [8], 3), make_rng(0))
    out, cache = forward(p, np.ones((2, 4)))
    grads, d_in = backward(p, cache, np.zeros_like(out))
    assert all(np.all(g == 0) for g in grads) and np.all(d_in == 0)


def test_single_linear_layer_weight_gradient_closed_form():
    p = init_mlp(MlpConfig(4, [], 3), make_rng(0))
    x = make_rng(1).uniform(-1, 1, (5, 4))
    d_out = make_rng(2).uniform(-1, 1, (5, 3))
    _, cache = forward(p, x)
    grads, _ = backward(p, cache, d_out)
    np.testing.assert_allclose(grads[0], x.T @ d_out, rtol=1e-14)


def test_cache_is_single_use_and_bound_to_params():
    p = init_mlp(MlpConfig(4, [8], 3), make_rng(0))
    q = init_mlp(MlpConfig(4, [8], 3), make_rng(1))
    out, cache = forward(p, np.ones((2, 4)))
    with pytest.raises(StructuralError):
        backward(q, cache, out)
    backward(p, cache, out)
    with pytest.raises(StructuralError):
        backward(p, cache, out)


@pytest.mark.parametrize("hidden", [[], [5], [5, 4]])
@pytest.mark.parametrize("activation", ["tanh", "relu"])
@pytest.mark.parametrize("seed", range(10))
def test_backward_matches_finite_differences(hidden, activation, seed):
    rng = make_rng(seed)
    cfg = MlpConfig(3, hidden, 4, activation, dropout_rate=0.25, init_scale=1.5)
    p = init_mlp(cfg, rng)
    # random biases too: zero biases can park a ReLU exactly on its kink
    p = p.with_flat(rng.uniform(-1, 1, p.flat().size))
    x = rng.uniform(-1, 1, (4, 3))
    r = rng.uniform(-1, 1, (4, 4))
    _, cache = forward(p, x, True, make_rng(99))
    grads, d_x = backward(p, cache, r)
    flat = np.concatenate([p.flat(), x.ravel()])
    n = p.flat().size

    def f(v):
        return np.sum(forward(p.with_flat(v[:n]), v[n:].reshape(4, 3), True, make_rng(99))[0] * r)

    analytic = np.concatenate([g.ravel() for g in grads] + [d_x.ravel()])
    assert relative_error(analytic, finite_diff_grad(f, flat, 1e-6)) < 1e-5


def test_encode_normalized_unit_rows_and_scale_invariance():
    p = init_mlp(MlpConfig(4, [8], 3), make_rng(0))
    x = make_rng(1).uniform(-1, 1, (6, 4))
    out, _ = encode_normalized(p, x)
    np.testing.assert_allclose(np.linalg.norm(out, axis=1), 1.0, atol=1e-9)
    for c in (10.0, 0.3):
        scaled = encoders.MlpParams(p.config, p.weights[:-1] + [p.weights[-1] * c], p.biases)
        np.testing.assert_allclose(encode_normalized(scaled, x)[0], out, atol=1e-12)


def test_encode_normalized_gradient_matches_finite_differences():
    rng = make_rng(5)
    p = init_mlp(MlpConfig(3, [5], 4), rng)
    x = rng.uniform(-1, 1, (3, 3))
    r = rng.uniform(-1, 1, (3, 4))
    _, cache = encode_normalized(p, x)
    grads, _ = backward(p, cache, r)
    num = finite_diff_grad(lambda v: np.sum(encode_normalized(p.with_flat(v), x)[0] * r), p.flat(), 1e-6)
    assert relative_error(np.concatenate([g.ravel() for g in grads]), num) < 1e-5
