"""Stage-2 pieces: fusion, the sigmoid classifier head, BCE, cross-language
triplet sampling, the triplet hinge loss and the weighted total."""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import encoders
from .contrastive import check_binary
from .errors import ConfigError, DimensionError, StructuralError
from .tensorcore import as_matrix, row_l2_normalize, row_l2_normalize_backward

TRIPLET_MODES = ("hate_anchored", "symmetric")
PROB_CLAMP = 1e-12


@dataclass(frozen=True)
class DownstreamConfig:
    alpha: float = 0.5
    margin: float = 0.5
    triplet_mode: str = "hate_anchored"
    renormalize_fused: bool = True

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha must lie in [0, 1], got {self.alpha}")
        if not self.margin > 0:
            raise ConfigError(f"margin must be > 0, got {self.margin}")
        if self.triplet_mode not in TRIPLET_MODES:
            raise ConfigError(f"triplet_mode must be one of {TRIPLET_MODES}, got {self.triplet_mode!r}")


class Triplet(NamedTuple):
    anchor: int
    positive: int
    negative: int


def fuse(e_a, e_t, renormalize=True):
    """Concatenate modality embeddings row-wise, optionally L2-normalizing.

    Accepts vectors or batches. Returns ``(fused, cache)`` where ``cache`` is
    ``None`` when no renormalization took place.
    """
    e_a = np.asarray(e_a, dtype=np.float64)
    e_t = np.asarray(e_t, dtype=np.float64)
    single = e_a.ndim == 1
    e_a, e_t = np.atleast_2d(e_a), np.atleast_2d(e_t)
    if e_a.shape != e_t.shape:
        raise DimensionError(f"audio embedding {e_a.shape} vs text embedding {e_t.shape}")
    fused = np.concatenate([e_a, e_t], axis=1)
    cache = None
    if renormalize:
        fused, cache = row_l2_normalize(fused)
    return (fused[0] if single else fused), cache


def fuse_backward(cache, d_fused, m):
    """Split the fused gradient back into (d_e_a, d_e_t)."""
    d = np.asarray(d_fused, dtype=np.float64)
    if cache is not None:
        d = row_l2_normalize_backward(cache, d)
    return d[:, :m], d[:, m:]


def classifier_config(embed_dim, hidden_dims=(32,), activation="tanh", dropout_rate=0.2, init_scale=1.0):
    return encoders.MlpConfig(2 * embed_dim, tuple(hidden_dims), 1, activation, dropout_rate, init_scale)


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def classify(g, e, train_mode=False, rng=None):
    """Hate probabilities for a batch of fused embeddings.

    Returns ``(probs, cache)``; feed ``cache`` to :func:`classify_backward`.
    """
    e = as_matrix(e)
    if e.shape[1] != g.config.input_dim:
        raise DimensionError(f"fused embedding has {e.shape[1]} columns, classifier expects {g.config.input_dim}")
    logits, cache = encoders.forward(g, e, train_mode, rng)
    probs = sigmoid(logits[:, 0])
    return probs, (cache, probs)


def classify_backward(g, cache, d_probs):
    fcache, probs = cache
    d_logits = (np.asarray(d_probs, dtype=np.float64) * probs * (1.0 - probs))[:, None]
    return encoders.backward(g, fcache, d_logits)


def bce_loss(y_hat, y):
    """Mean binary cross-entropy and its gradient w.r.t. the probabilities."""
    y = check_binary(y).astype(np.float64)
    p = np.clip(np.asarray(y_hat, dtype=np.float64), PROB_CLAMP, 1.0 - PROB_CLAMP)
    if p.shape != y.shape:
        raise DimensionError(f"{p.shape} probabilities for {y.shape} labels")
    n = y.size
    loss = -np.mean(y * np.log(p) + (1.0 - y) * np.log1p(-p))
    d_p = (p - y) / (p * (1.0 - p)) / n
    return float(loss), d_p


def _triplets_for(anchor_class, labels, languages, rng):
    out = []
    for lang in sorted(set(languages.tolist())):
        same = np.flatnonzero((labels == anchor_class) & (languages == lang))
        negs = np.flatnonzero((labels != anchor_class) & (languages != lang))
        if same.size < 2 or negs.size == 0:
            continue
        for a in same:
            others = same[same != a]
            p = others[rng.integers(others.size)]
            n = negs[rng.integers(negs.size)]
            out.append(Triplet(int(a), int(p), int(n)))
    return out


def sample_triplets(labels, languages, rng, cfg=DownstreamConfig()):
    """One triplet per eligible anchor.

    Anchors and positives are hate samples sharing a language; the negative is
    a non-hate sample from another language. ``symmetric`` mode also emits the
    mirrored non-hate-anchored triplets. Returns ``[]`` if nothing qualifies.
    """
    y = check_binary(labels)
    langs = np.asarray(languages)
    if langs.shape != y.shape:
        raise DimensionError(f"{langs.size} language tags for {y.size} labels")
    triplets = _triplets_for(1, y, langs, rng)
    if cfg.triplet_mode == "symmetric":
        triplets += _triplets_for(0, y, langs, rng)
    return triplets


def triplet_loss(embeddings, triplets, margin):
    """Mean hinge max(0, |a-p|^2 - |a-n|^2 + margin) and its (sub)gradient."""
    e = as_matrix(embeddings)
    grad = np.zeros_like(e)
    if not triplets:
        return 0.0, grad
    idx = np.asarray(triplets, dtype=np.int64).reshape(-1, 3)
    if idx.min() < 0 or idx.max() >= e.shape[0]:
        raise StructuralError(f"triplet index out of range for {e.shape[0]} embeddings")
    a, p, n = e[idx[:, 0]], e[idx[:, 1]], e[idx[:, 2]]
    d_ap = np.sum((a - p) ** 2, axis=1)
    d_an = np.sum((a - n) ** 2, axis=1)
    hinge = d_ap - d_an + margin
    active = hinge > 0
    count = len(idx)
    loss = float(np.sum(np.where(active, hinge, 0.0)) / count)
    w = active[:, None] / count
    np.add.at(grad, idx[:, 0], w * 2.0 * (n - p))
    np.add.at(grad, idx[:, 1], w * -2.0 * (a - p))
    np.add.at(grad, idx[:, 2], w * 2.0 * (a - n))
    return loss, grad


def total_loss(l_triplet, l_bce, alpha):
    if not 0.0 <= alpha <= 1.0:
        raise ConfigError(f"alpha must lie in [0, 1], got {alpha}")
    return alpha * l_triplet + (1.0 - alpha) * l_bce
