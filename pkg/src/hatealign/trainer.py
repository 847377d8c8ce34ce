"""Adam, the two training stages and checkpoint persistence."""

import hashlib
import json
import math
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from . import encoders
from .contrastive import ContrastiveConfig, pretrain_step_loss
from .data import stack
from .downstream import (
    DownstreamConfig,
    bce_loss,
    classifier_config,
    classify,
    classify_backward,
    fuse,
    fuse_backward,
    sample_triplets,
    total_loss,
    triplet_loss,
)
from .errors import (
    CheckpointParseError,
    CheckpointShapeError,
    CheckpointVersionError,
    ConfigError,
    NonFiniteError,
    StructuralError,
    ValidationError,
)
from .tensorcore import derive_seed, make_rng

CHECKPOINT_VERSION = 1
GROUPS = ("audio", "text", "classifier")


class NonFiniteLossError(NonFiniteError):
    def __init__(self, stage, epoch, batch, value, detail=""):
        msg = f"{stage}: non-finite loss {value!r} at epoch {epoch}, batch {batch}"
        super().__init__(f"{msg} ({detail})" if detail else msg)
        self.stage, self.epoch, self.batch, self.value = stage, epoch, batch, value


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    batch_size: int = 32
    epochs: int = 5
    pretrain_epochs: int = 5
    seed: int = 0
    hidden_dims: tuple = (64, 32)
    embed_dim: int = 16
    activation: str = "tanh"
    dropout: float = 0.2
    init_scale: float = 1.0
    classifier_hidden: tuple = (32,)

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(self.hidden_dims))
        object.__setattr__(self, "classifier_hidden", tuple(self.classifier_hidden))
        if not self.learning_rate >= 0:
            raise ConfigError("learning_rate must be >= 0")
        if self.batch_size < 2:
            raise ConfigError("batch_size must be >= 2")
        if self.epochs < 1 or self.pretrain_epochs < 0:
            raise ConfigError("epochs must be >= 1 and pretrain_epochs >= 0")
        if self.embed_dim < 2:
            raise ConfigError("embed_dim must be >= 2")

    def encoder_config(self, input_dim):
        return encoders.MlpConfig(input_dim, self.hidden_dims, self.embed_dim,
                                  self.activation, self.dropout, self.init_scale)

    def head_config(self):
        return classifier_config(self.embed_dim, self.classifier_hidden, self.activation,
                                 self.dropout, self.init_scale)


@dataclass
class ModelBundle:
    audio: encoders.MlpParams
    text: encoders.MlpParams
    classifier: encoders.MlpParams
    renormalize_fused: bool = True

    def __post_init__(self):
        m = self.audio.config.output_dim
        if self.text.config.output_dim != m:
            raise StructuralError("audio and text encoders must share the embedding dimension")
        if m < 2:
            raise StructuralError("embedding dimension must be >= 2")
        if self.classifier.config.input_dim != 2 * m or self.classifier.config.output_dim != 1:
            raise StructuralError(f"classifier must map {2 * m} -> 1")

    @property
    def embed_dim(self):
        return self.audio.config.output_dim

    def group(self, name):
        return getattr(self, name)

    def fingerprint(self, groups=GROUPS):
        h = hashlib.sha256()
        for name in groups:
            for a in self.group(name).arrays():
                h.update(np.ascontiguousarray(a).tobytes())
        return h.hexdigest()[:16]


def init_bundle(d_a, d_t, cfg, seed=None, renormalize_fused=True):
    rng = make_rng(derive_seed(cfg.seed if seed is None else seed, "init"))
    return ModelBundle(
        encoders.init_mlp(cfg.encoder_config(d_a), rng),
        encoders.init_mlp(cfg.encoder_config(d_t), rng),
        encoders.init_mlp(cfg.head_config(), rng),
        renormalize_fused,
    )


@dataclass
class AdamState:
    m: list
    v: list
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, arrays):
        return cls([np.zeros_like(a) for a in arrays], [np.zeros_like(a) for a in arrays])


def adam_step(params, grads, state, lr):
    """One bias-corrected Adam update. Returns ``(new_params, new_state)``."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise StructuralError("params, grads and optimizer state differ in length")
    t = state.step + 1
    b1, b2 = state.beta1, state.beta2
    new_p, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape or p.shape != m.shape:
            raise StructuralError(f"shape mismatch: param {p.shape}, grad {g.shape}, moment {m.shape}")
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1 ** t)
        v_hat = v / (1.0 - b2 ** t)
        new_p.append(p - lr * m_hat / (np.sqrt(v_hat) + state.eps))
        new_m.append(m)
        new_v.append(v)
    return new_p, AdamState(new_m, new_v, t, b1, b2, state.eps)


class _Optimizer:
    # one Adam state per parameter group
    def __init__(self, bundle, groups, lr):
        self.lr = lr
        self.states = {g: AdamState.zeros_like(bundle.group(g).arrays()) for g in groups}

    def apply(self, bundle, grads):
        for name, g in grads.items():
            params = bundle.group(name)
            new, self.states[name] = adam_step(params.arrays(), g, self.states[name], self.lr)
            setattr(bundle, name, encoders.MlpParams.from_arrays(params.config, new))


def _batches(n, batch_size, rng):
    order = rng.permutation(n)
    return [order[i:i + batch_size] for i in range(0, n, batch_size)]


def pretrain_batch(bundle, audio, text, labels, ccfg, rng=None, train_mode=True):
    """Contrastive loss and gradients for both encoders on one batch."""
    ea, cache_a = encoders.encode_normalized(bundle.audio, audio, train_mode, rng)
    et, cache_t = encoders.encode_normalized(bundle.text, text, train_mode, rng)
    loss, d_ea, d_et = pretrain_step_loss(ea, et, labels, ccfg)
    grads_a, _ = encoders.backward(bundle.audio, cache_a, d_ea)
    grads_t, _ = encoders.backward(bundle.text, cache_t, d_et)
    return loss, {"audio": grads_a, "text": grads_t}


@dataclass
class StepResult:
    total: float
    bce: float
    triplet: float
    probs: np.ndarray
    grads: dict = field(default_factory=dict)


def finetune_batch(bundle, audio, text, labels, languages, dcfg, rng=None, train_mode=True,
                   zero_grad=frozenset()):
    """Weighted triplet + BCE loss with gradients for all three groups.

    ``zero_grad`` may contain 'bce' and/or 'triplet' to drop that component's
    gradient while still reporting its value (used by trajectory tests).
    """
    m = bundle.embed_dim
    ea, cache_a = encoders.encode_normalized(bundle.audio, audio, train_mode, rng)
    et, cache_t = encoders.encode_normalized(bundle.text, text, train_mode, rng)
    fused, fuse_cache = fuse(ea, et, dcfg.renormalize_fused)
    probs, g_cache = classify(bundle.classifier, fused, train_mode, rng)
    l_bce, d_probs = bce_loss(probs, labels)
    triplets = sample_triplets(labels, languages, rng if rng is not None else make_rng(0), dcfg)
    l_trip, d_fused_trip = triplet_loss(fused, triplets, dcfg.margin)
    total = total_loss(l_trip, l_bce, dcfg.alpha)

    w_bce = 0.0 if "bce" in zero_grad else 1.0 - dcfg.alpha
    w_trip = 0.0 if "triplet" in zero_grad else dcfg.alpha
    grads_g, d_fused = classify_backward(bundle.classifier, g_cache, w_bce * d_probs)
    d_fused = d_fused + w_trip * d_fused_trip
    d_ea, d_et = fuse_backward(fuse_cache, d_fused, m)
    grads_a, _ = encoders.backward(bundle.audio, cache_a, d_ea)
    grads_t, _ = encoders.backward(bundle.text, cache_t, d_et)
    return StepResult(total, l_bce, l_trip, probs,
                      {"audio": grads_a, "text": grads_t, "classifier": grads_g})


def _check_records(records, stage):
    if not records:
        raise ValidationError(f"{stage}: no training records")


def pretrain(bundle, records, cfg, ccfg=ContrastiveConfig(), log=None):
    """Stage 1. Returns ``(new_bundle, per-epoch mean loss list)``."""
    _check_records(records, "pretrain")
    audio, text, labels, _ = stack(records)
    bundle = ModelBundle(bundle.audio, bundle.text, bundle.classifier, bundle.renormalize_fused)
    rng = make_rng(derive_seed(cfg.seed, "pretrain"))
    opt = _Optimizer(bundle, ("audio", "text"), cfg.learning_rate)
    trace = []
    for epoch in range(cfg.pretrain_epochs):
        losses = []
        for b, idx in enumerate(_batches(len(records), cfg.batch_size, rng)):
            try:
                loss, grads = pretrain_batch(bundle, audio[idx], text[idx], labels[idx], ccfg, rng)
            except NonFiniteError as exc:
                raise NonFiniteLossError("pretrain", epoch, b, math.nan, str(exc)) from exc
            if not math.isfinite(loss):
                raise NonFiniteLossError("pretrain", epoch, b, loss)
            opt.apply(bundle, grads)
            losses.append(loss)
        trace.append(float(np.mean(losses)))
        if log:
            log(f"pretrain epoch {epoch + 1}: loss {trace[-1]:.6f}")
    return bundle, trace


def finetune(bundle, records, cfg, dcfg=DownstreamConfig(), log=None, zero_grad=frozenset()):
    """Stage 2. Returns ``(new_bundle, traces)`` where ``traces`` maps
    total/bce/triplet/accuracy to per-epoch means."""
    _check_records(records, "finetune")
    audio, text, labels, languages = stack(records)
    bundle = ModelBundle(bundle.audio, bundle.text, bundle.classifier, dcfg.renormalize_fused)
    rng = make_rng(derive_seed(cfg.seed, "finetune"))
    opt = _Optimizer(bundle, GROUPS, cfg.learning_rate)
    traces = {"total": [], "bce": [], "triplet": [], "accuracy": []}
    for epoch in range(cfg.epochs):
        sums = {"total": [], "bce": [], "triplet": []}
        correct = 0
        for b, idx in enumerate(_batches(len(records), cfg.batch_size, rng)):
            try:
                step = finetune_batch(bundle, audio[idx], text[idx], labels[idx], languages[idx],
                                      dcfg, rng, zero_grad=zero_grad)
            except NonFiniteError as exc:
                raise NonFiniteLossError("finetune", epoch, b, math.nan, str(exc)) from exc
            if not math.isfinite(step.total):
                raise NonFiniteLossError("finetune", epoch, b, step.total)
            opt.apply(bundle, step.grads)
            sums["total"].append(step.total)
            sums["bce"].append(step.bce)
            sums["triplet"].append(step.triplet)
            correct += int(np.sum((step.probs >= 0.5) == (labels[idx] == 1)))
        for key, vals in sums.items():
            traces[key].append(float(np.mean(vals)))
        traces["accuracy"].append(correct / len(records))
        if log:
            log(f"finetune epoch {epoch + 1}: total {traces['total'][-1]:.6f} "
                f"bce {traces['bce'][-1]:.6f} triplet {traces['triplet'][-1]:.6f}")
    return bundle, traces


# checkpoints

def _tensor_json(a):
    values = ", ".join(format(float(v), ".17g") for v in np.ravel(a))
    return f'{{"shape": {json.dumps(list(a.shape))}, "values": [{values}]}}'


def checkpoint_text(bundle):
    configs = {name: bundle.group(name).config.to_dict() for name in GROUPS}
    configs["fusion"] = {"renormalize_fused": bool(bundle.renormalize_fused)}
    tensors = []
    for name in GROUPS:
        for i, a in enumerate(bundle.group(name).arrays()):
            kind = "W" if i % 2 == 0 else "b"
            tensors.append(f'"{name}.{kind}{i // 2}": {_tensor_json(a)}')
    return ('{"format_version": %d, "configs": %s, "tensors": {%s}}\n'
            % (CHECKPOINT_VERSION, json.dumps(configs, sort_keys=True), ", ".join(tensors)))


def save_checkpoint(bundle, path):
    text = checkpoint_text(bundle)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".ckpt-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_checkpoint(path):
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except (ValueError, UnicodeDecodeError) as exc:
        raise CheckpointParseError(f"{path}: {exc}") from None
    if not isinstance(doc, dict) or "format_version" not in doc:
        raise CheckpointParseError(f"{path}: not a checkpoint document")
    if doc["format_version"] != CHECKPOINT_VERSION:
        raise CheckpointVersionError(f"{path}: format_version {doc['format_version']!r}, "
                                     f"expected {CHECKPOINT_VERSION}")
    try:
        configs, tensors = doc["configs"], doc["tensors"]
        groups = {}
        for name in GROUPS:
            cfg = encoders.MlpConfig(**configs[name])
            arrays = []
            for i in range(len(cfg.layer_dims) - 1):
                for kind in ("W", "b"):
                    key = f"{name}.{kind}{i}"
                    arrays.append(_load_tensor(key, tensors[key], cfg, i, kind))
            groups[name] = encoders.MlpParams.from_arrays(cfg, arrays)
    except (KeyError, TypeError) as exc:
        raise CheckpointParseError(f"{path}: missing or malformed entry {exc}") from None
    try:
        renorm = configs.get("fusion", {}).get("renormalize_fused", True)
        return ModelBundle(groups["audio"], groups["text"], groups["classifier"], bool(renorm))
    except StructuralError as exc:
        raise CheckpointShapeError(str(exc)) from None


def _load_tensor(key, entry, cfg, layer, kind):
    dims = cfg.layer_dims
    expected = (dims[layer], dims[layer + 1]) if kind == "W" else (dims[layer + 1],)
    shape = tuple(entry["shape"])
    values = np.asarray(entry["values"], dtype=np.float64)
    if shape != expected:
        raise CheckpointShapeError(f"tensor {key}: shape {shape} does not chain (expected {expected})")
    if values.size != int(np.prod(shape)):
        raise CheckpointShapeError(f"tensor {key}: {values.size} values for shape {shape}")
    if not np.all(np.isfinite(values)):
        raise CheckpointShapeError(f"tensor {key}: non-finite values")
    return values.reshape(shape)
