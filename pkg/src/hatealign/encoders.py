"""MLP encoders over precomputed feature vectors, with hand-written backward."""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DimensionError, StructuralError
from .tensorcore import (
    NORM_EPS,
    as_matrix,
    check_finite,
    row_l2_normalize,
    row_l2_normalize_backward,
)

ACTIVATIONS = ("tanh", "relu")


@dataclass(frozen=True)
class MlpConfig:
    input_dim: int
    hidden_dims: tuple = (64, 32)
    output_dim: int = 16
    activation: str = "tanh"
    dropout_rate: float = 0.2
    init_scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        if self.input_dim < 1 or self.output_dim < 1 or any(h < 1 for h in self.hidden_dims):
            raise ConfigError(f"all layer widths must be >= 1: {self}")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"activation must be one of {ACTIVATIONS}, got {self.activation!r}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError(f"dropout_rate must lie in [0, 1), got {self.dropout_rate}")
        if self.init_scale < 0:
            raise ConfigError("init_scale must be non-negative")

    @property
    def layer_dims(self):
        return (self.input_dim, *self.hidden_dims, self.output_dim)

    def to_dict(self):
        return {
            "input_dim": self.input_dim,
            "hidden_dims": list(self.hidden_dims),
            "output_dim": self.output_dim,
            "activation": self.activation,
            "dropout_rate": self.dropout_rate,
            "init_scale": self.init_scale,
        }


@dataclass
class MlpParams:
    config: MlpConfig
    weights: list
    biases: list

    def __post_init__(self):
        dims = self.config.layer_dims
        if len(self.weights) != len(dims) - 1 or len(self.biases) != len(dims) - 1:
            raise StructuralError("layer count does not match config")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (dims[i], dims[i + 1]) or b.shape != (dims[i + 1],):
                raise StructuralError(
                    f"layer {i}: got W{w.shape} b{b.shape}, expected W{(dims[i], dims[i + 1])}"
                )

    def arrays(self):
        """Flat list ``[W0, b0, W1, b1, ...]``."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    @classmethod
    def from_arrays(cls, config, arrays):
        arrays = list(arrays)
        return cls(config, [np.asarray(a, dtype=np.float64) for a in arrays[0::2]],
                   [np.asarray(a, dtype=np.float64) for a in arrays[1::2]])

    def flat(self):
        return np.concatenate([a.ravel() for a in self.arrays()])

    def with_flat(self, vector):
        vector = np.asarray(vector, dtype=np.float64)
        arrays, pos = [], 0
        for a in self.arrays():
            arrays.append(vector[pos:pos + a.size].reshape(a.shape).copy())
            pos += a.size
        if pos != vector.size:
            raise StructuralError(f"flat vector has {vector.size} entries, need {pos}")
        return MlpParams.from_arrays(self.config, arrays)


@dataclass
class ForwardCache:
    params_id: int
    inputs: list = field(default_factory=list)
    pre_acts: list = field(default_factory=list)
    masks: list = field(default_factory=list)
    norm: tuple = None
    consumed: bool = False


def init_mlp(config, rng):
    """Uniform ±init_scale/sqrt(fan_in) weights, zero biases."""
    dims = config.layer_dims
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = config.init_scale / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpParams(config, weights, biases)


def _activate(kind, z):
    return np.tanh(z) if kind == "tanh" else np.maximum(z, 0.0)


def _activate_grad(kind, z):
    if kind == "tanh":
        t = np.tanh(z)
        return 1.0 - t * t
    return (z > 0).astype(np.float64)


def forward(params, x, train_mode=False, rng=None):
    """Run the MLP. Hidden layers use the configured activation and (in train
    mode) inverted dropout; the output layer is linear."""
    cfg = params.config
    x = as_matrix(x)
    if x.shape[1] != cfg.input_dim:
        raise DimensionError(f"input has {x.shape[1]} columns, encoder expects {cfg.input_dim}")
    use_dropout = train_mode and cfg.dropout_rate > 0
    if use_dropout and rng is None:
        raise ValueError("train-mode dropout needs an rng")
    cache = ForwardCache(params_id=id(params))
    h = x
    n_layers = len(params.weights)
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        cache.inputs.append(h)
        with np.errstate(over="ignore", invalid="ignore"):  # caught by check_finite below
            z = h @ w + b
        cache.pre_acts.append(z)
        if i == n_layers - 1:
            h = z
            break
        h = _activate(cfg.activation, z)
        if use_dropout:
            keep = 1.0 - cfg.dropout_rate
            mask = (rng.random(h.shape) < keep) / keep
            h = h * mask
        else:
            mask = None
        cache.masks.append(mask)
    return check_finite(h, "encoder output"), cache


def backward(params, cache, d_out):
    """Return ``(grads, d_in)``; ``grads`` is aligned with ``params.arrays()``.

    If the cache came from :func:`encode_normalized`, ``d_out`` is the gradient
    with respect to the normalized embeddings.
    """
    if cache.consumed:
        raise StructuralError("forward cache already consumed by a backward pass")
    if cache.params_id != id(params) or len(cache.pre_acts) != len(params.weights):
        raise StructuralError("forward cache does not belong to these parameters")
    cache.consumed = True
    d = np.asarray(d_out, dtype=np.float64)
    expected = cache.pre_acts[-1].shape
    if cache.norm is not None:
        if d.shape != expected:
            raise DimensionError(f"d_out shape {d.shape} != embedding shape {expected}")
        d = row_l2_normalize_backward(cache.norm, d)
    if d.shape != expected:
        raise DimensionError(f"d_out shape {d.shape} != embedding shape {expected}")
    kind = params.config.activation
    n_layers = len(params.weights)
    grads = [None] * (2 * n_layers)
    for i in reversed(range(n_layers)):
        if i < n_layers - 1:
            mask = cache.masks[i]
            if mask is not None:
                d = d * mask
            d = d * _activate_grad(kind, cache.pre_acts[i])
        grads[2 * i] = cache.inputs[i].T @ d
        grads[2 * i + 1] = d.sum(axis=0)
        d = d @ params.weights[i].T
    return grads, d


def encode_normalized(params, x, train_mode=False, rng=None, eps=NORM_EPS):
    emb, cache = forward(params, x, train_mode, rng)
    unit, cache.norm = row_l2_normalize(emb, eps)
    return unit, cache
