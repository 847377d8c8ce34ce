"""Stage-1 objective: cross-modal similarity, label masks and a symmetric
masked supervised-contrastive loss with its exact gradient."""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionError, ValidationError
from .tensorcore import as_matrix


@dataclass(frozen=True)
class ContrastiveConfig:
    temperature: float = 0.1

    def __post_init__(self):
        if not self.temperature > 0:
            raise ConfigError(f"temperature must be > 0, got {self.temperature}")


@dataclass(frozen=True)
class PairMasks:
    m_pos: np.ndarray
    m_neg: np.ndarray


def similarity_matrix(ea_hat, et_hat):
    """S[i, j] = <audio_i, text_j> for unit-row embedding matrices."""
    ea_hat = as_matrix(ea_hat)
    et_hat = as_matrix(et_hat)
    if ea_hat.shape != et_hat.shape:
        raise DimensionError(f"audio embeddings {ea_hat.shape} vs text embeddings {et_hat.shape}")
    return ea_hat @ et_hat.T


def check_binary(labels):
    y = np.asarray(labels)
    if y.ndim != 1:
        raise ValidationError("labels must be a 1-d vector")
    if not np.all((y == 0) | (y == 1)):
        bad = y[~((y == 0) | (y == 1))][0]
        raise ValidationError(f"labels must be 0 or 1, found {bad!r}")
    return y.astype(np.int64)


def build_masks(labels):
    y = check_binary(labels)
    if y.size < 1:
        raise ValidationError("need at least one label")
    m_pos = (y[:, None] == y[None, :]).astype(np.float64)
    return PairMasks(m_pos, 1.0 - m_pos)


def _log_softmax_rows(z):
    shifted = z - z.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def _directional(z, m_pos):
    # one direction (rows): loss and gradient w.r.t. logits z
    n = z.shape[0]
    log_p = _log_softmax_rows(z)
    pos_count = m_pos.sum(axis=1, keepdims=True)
    loss = -np.sum(m_pos * log_p / pos_count) / n
    d_z = -(m_pos / pos_count - np.exp(log_p)) / n
    return loss, d_z


def supcon_loss(s, masks, cfg=ContrastiveConfig()):
    """Symmetric masked SupCon over a cross-modal similarity matrix.

    L = (L_row + L_col) / 2, where each direction averages, over anchors, the
    mean negative log-softmax of that anchor's same-label entries at
    temperature tau. Returns ``(loss, d_s)``.
    """
    if not cfg.temperature > 0:
        raise ConfigError(f"temperature must be > 0, got {cfg.temperature}")
    s = as_matrix(s)
    n = s.shape[0]
    if s.shape != (n, n) or masks.m_pos.shape != (n, n):
        raise DimensionError(f"similarity {s.shape} and masks {masks.m_pos.shape} must be square and equal")
    tau = cfg.temperature
    z = s / tau
    loss_row, dz_row = _directional(z, masks.m_pos)
    loss_col, dz_col = _directional(z.T, masks.m_pos.T)
    loss = 0.5 * (loss_row + loss_col)
    d_s = 0.5 * (dz_row + dz_col.T) / tau
    return float(loss), d_s


def pretrain_step_loss(ea_hat, et_hat, labels, cfg=ContrastiveConfig()):
    """Loss and gradients w.r.t. both unit-row embedding matrices."""
    ea_hat = as_matrix(ea_hat)
    et_hat = as_matrix(et_hat)
    s = similarity_matrix(ea_hat, et_hat)
    masks = build_masks(labels)
    if masks.m_pos.shape[0] != s.shape[0]:
        raise DimensionError(f"{len(labels)} labels for a batch of {s.shape[0]}")
    loss, d_s = supcon_loss(s, masks, cfg)
    return loss, d_s @ et_hat, d_s.T @ ea_hat
