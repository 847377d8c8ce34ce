"""Analytic-vs-central-difference checks for every differentiable piece."""

import numpy as np

from . import encoders
from .contrastive import ContrastiveConfig, build_masks, supcon_loss
from .downstream import (
    DownstreamConfig,
    bce_loss,
    classifier_config,
    classify,
    classify_backward,
    triplet_loss,
)
from .tensorcore import derive_seed, finite_diff_grad, make_rng, relative_error, row_l2_normalize, \
    row_l2_normalize_backward
from .trainer import ModelBundle, finetune_batch, pretrain_batch

TOLERANCE = 1e-5
STEP = 1e-6


def _mlp_case(n_layers, activation, rng, normalized=False):
    hidden = [5, 4][: n_layers - 1]
    cfg = encoders.MlpConfig(3, hidden, 3, activation, dropout_rate=0.3 if hidden else 0.0, init_scale=1.5)
    params = encoders.init_mlp(cfg, rng)
    params = params.with_flat(rng.uniform(-1, 1, params.flat().size))
    x = rng.uniform(-1, 1, (4, 3))
    r = rng.uniform(-1, 1, (4, 3))
    mask_seed = int(rng.integers(2**32))
    run = encoders.encode_normalized if normalized else encoders.forward

    def loss(p, xx):
        out, cache = run(p, xx, True, make_rng(mask_seed))
        return float(np.sum(out * r)), cache

    _, cache = loss(params, x)
    grads, d_x = encoders.backward(params, cache, r)
    analytic = np.concatenate([g.ravel() for g in grads] + [d_x.ravel()])
    n_p = params.flat().size

    def f(v):
        return loss(params.with_flat(v[:n_p]), v[n_p:].reshape(x.shape))[0]

    numeric = finite_diff_grad(f, np.concatenate([params.flat(), x.ravel()]), STEP)
    return analytic, numeric


def _normalize_case(rng):
    x = rng.uniform(-1, 1, (4, 5))
    r = rng.uniform(-1, 1, (4, 5))
    out, cache = row_l2_normalize(x)
    analytic = row_l2_normalize_backward(cache, r)
    numeric = finite_diff_grad(lambda v: np.sum(row_l2_normalize(v.reshape(x.shape))[0] * r), x, STEP)
    return analytic, numeric


def _supcon_case(rng):
    n = 5
    s = rng.uniform(-1, 1, (n, n))
    masks = build_masks(rng.integers(0, 2, n))
    cfg = ContrastiveConfig(float(rng.uniform(0.1, 1.0)))
    _, analytic = supcon_loss(s, masks, cfg)
    numeric = finite_diff_grad(lambda v: supcon_loss(v.reshape(n, n), masks, cfg)[0], s, STEP)
    return analytic, numeric


def _triplet_case(rng):
    e = rng.uniform(-1, 1, (6, 4))
    triplets = [tuple(rng.permutation(6)[:3]) for _ in range(5)]
    margin = float(rng.uniform(0.1, 1.0))
    _, analytic = triplet_loss(e, triplets, margin)
    numeric = finite_diff_grad(lambda v: triplet_loss(v.reshape(e.shape), triplets, margin)[0], e, STEP)
    return analytic, numeric


def _bce_case(rng):
    p = rng.uniform(0.05, 0.95, 7)
    y = rng.integers(0, 2, 7)
    _, analytic = bce_loss(p, y)
    numeric = finite_diff_grad(lambda v: bce_loss(v, y)[0], p, STEP)
    return analytic, numeric


def _classifier_case(rng):
    cfg = classifier_config(3, (4,), "tanh", 0.0, 1.5)
    g = encoders.init_mlp(cfg, rng)
    g = g.with_flat(rng.uniform(-1, 1, g.flat().size))
    e = rng.uniform(-1, 1, (5, 6))
    y = rng.integers(0, 2, 5)

    def loss(p, ee):
        probs, cache = classify(p, ee)
        return bce_loss(probs, y) + (cache,)

    _, d_p, cache = loss(g, e)
    grads, d_e = classify_backward(g, cache, d_p)
    analytic = np.concatenate([a.ravel() for a in grads] + [d_e.ravel()])
    n_p = g.flat().size
    numeric = finite_diff_grad(
        lambda v: loss(g.with_flat(v[:n_p]), v[n_p:].reshape(e.shape))[0],
        np.concatenate([g.flat(), e.ravel()]), STEP)
    return analytic, numeric


def _small_bundle(rng, activation="tanh"):
    enc_a = encoders.MlpConfig(5, (6,), 3, activation, 0.2, 1.5)
    enc_t = encoders.MlpConfig(4, (6,), 3, activation, 0.2, 1.5)
    bundle = ModelBundle(encoders.init_mlp(enc_a, rng), encoders.init_mlp(enc_t, rng),
                         encoders.init_mlp(classifier_config(3, (4,), activation, 0.2, 1.5), rng))
    return bundle


def _bundle_flat(bundle, groups):
    return np.concatenate([bundle.group(g).flat() for g in groups])


def _bundle_with(bundle, groups, vector):
    parts, pos = {}, 0
    for g in groups:
        size = bundle.group(g).flat().size
        parts[g] = bundle.group(g).with_flat(vector[pos:pos + size])
        pos += size
    merged = {g: parts.get(g, bundle.group(g)) for g in ("audio", "text", "classifier")}
    return ModelBundle(**merged)


def _pretrain_case(rng):
    bundle = _small_bundle(rng)
    audio, text = rng.uniform(-1, 1, (6, 5)), rng.uniform(-1, 1, (6, 4))
    labels = np.array([1, 0, 1, 1, 0, 0])
    ccfg = ContrastiveConfig(0.5)
    seed = int(rng.integers(2**32))
    groups = ("audio", "text")
    _, grads = pretrain_batch(bundle, audio, text, labels, ccfg, make_rng(seed))
    analytic = np.concatenate([a.ravel() for g in groups for a in grads[g]])
    numeric = finite_diff_grad(
        lambda v: pretrain_batch(_bundle_with(bundle, groups, v), audio, text, labels, ccfg, make_rng(seed))[0],
        _bundle_flat(bundle, groups), STEP)
    return analytic, numeric


def _finetune_case(rng):
    bundle = _small_bundle(rng)
    audio, text = rng.uniform(-1, 1, (8, 5)), rng.uniform(-1, 1, (8, 4))
    labels = np.array([1, 1, 0, 0, 1, 1, 0, 0])
    languages = np.array(["hi", "hi", "hi", "ta", "ta", "ta", "ta", "hi"], dtype=object)
    dcfg = DownstreamConfig(alpha=0.5, margin=1.5, triplet_mode="symmetric")
    seed = int(rng.integers(2**32))
    groups = ("audio", "text", "classifier")
    step = finetune_batch(bundle, audio, text, labels, languages, dcfg, make_rng(seed))
    analytic = np.concatenate([a.ravel() for g in groups for a in step.grads[g]])
    numeric = finite_diff_grad(
        lambda v: finetune_batch(_bundle_with(bundle, groups, v), audio, text, labels, languages, dcfg,
                                 make_rng(seed)).total,
        _bundle_flat(bundle, groups), STEP)
    return analytic, numeric


def _components():
    comps = {}
    for n_layers in (1, 2, 3):
        for act in ("tanh", "relu"):
            comps[f"mlp_{n_layers}layer_{act}"] = (lambda rng, n=n_layers, a=act: _mlp_case(n, a, rng))
    comps["row_l2_normalize"] = _normalize_case
    comps["encode_normalized"] = lambda rng: _mlp_case(3, "tanh", rng, normalized=True)
    comps["supcon_loss"] = _supcon_case
    comps["triplet_loss"] = _triplet_case
    comps["bce_loss"] = _bce_case
    comps["classifier_bce"] = _classifier_case
    comps["pretrain_end_to_end"] = _pretrain_case
    comps["finetune_end_to_end"] = _finetune_case
    return comps


COMPONENTS = tuple(_components())


def run_gradchecks(seed=0, n_seeds=10, corrupt=None, components=None):
    """Max relative error per component over ``n_seeds`` random draws.

    ``corrupt`` names a component whose analytic gradient is scaled by 1.01
    before comparison (negative control).
    """
    comps = _components()
    names = components or list(comps)
    results = {}
    for name in names:
        worst = 0.0
        for i in range(n_seeds):
            rng = make_rng(derive_seed(seed, f"{name}:{i}"))
            analytic, numeric = comps[name](rng)
            if name == corrupt:
                analytic = np.asarray(analytic) * 1.01
            worst = max(worst, relative_error(analytic, numeric))
        results[name] = worst
    return results
