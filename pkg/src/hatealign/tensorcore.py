"""Dense float64 helpers, seeded randomness and a central-difference checker.

Matrices are plain ``numpy.ndarray`` objects of dtype float64. Randomness
comes from ``numpy.random.Generator`` over the PCG64 bit generator: the same
integer seed always yields the same stream on a given numpy version.
Sub-seeds for named stages are derived with :func:`derive_seed`, which hashes
``"<master>:<name>"`` with SHA-256 and keeps the first 8 bytes (big endian).
"""

import hashlib

import numpy as np

from .errors import DimensionError, NonFiniteError

NORM_EPS = 1e-12


def make_rng(seed):
    """Return a PCG64-backed generator for ``seed`` (a non-negative int)."""
    return np.random.Generator(np.random.PCG64(int(seed)))


def derive_seed(master, name):
    digest = hashlib.sha256(f"{int(master)}:{name}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def as_matrix(x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise DimensionError(f"expected a 2-d matrix, got shape {x.shape}")
    return x


def check_finite(x, what="matrix"):
    if not np.all(np.isfinite(x)):
        raise NonFiniteError(f"{what} contains NaN or Inf")
    return x


def matmul(a, b):
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"cannot multiply {a.shape} by {b.shape}")
    return check_finite(a @ b, "matmul result")


def row_l2_normalize(x, eps=NORM_EPS):
    """Scale each row to unit L2 norm.

    Rows whose norm is below ``eps`` are returned unchanged and contribute a
    zero gradient in :func:`row_l2_normalize_backward`. Returns
    ``(normalized, cache)``.
    """
    x = as_matrix(x)
    if x.shape[1] < 1:
        raise DimensionError("row_l2_normalize needs at least one column")
    with np.errstate(over="ignore"):
        norms = np.sqrt(np.sum(x * x, axis=1))
    big = np.isinf(norms) & np.all(np.isfinite(x), axis=1)
    if big.any():
        # x*x overflowed; rescale by the row max first
        scale = np.max(np.abs(x[big]), axis=1)
        norms[big] = scale * np.sqrt(np.sum((x[big] / scale[:, None]) ** 2, axis=1))
    ok = norms >= eps
    safe = np.where(ok, norms, 1.0)
    out = np.where(ok[:, None], x / safe[:, None], x)
    return out, (out, safe, ok)


def row_l2_normalize_backward(cache, d_out):
    """Pull ``d_out`` back through the normalization: (I - x̂x̂ᵀ) d / ‖x‖."""
    out, norms, ok = cache
    d_out = np.asarray(d_out, dtype=np.float64)
    if d_out.shape != out.shape:
        raise DimensionError(f"gradient shape {d_out.shape} != output shape {out.shape}")
    radial = np.sum(out * d_out, axis=1, keepdims=True)
    d_x = (d_out - out * radial) / norms[:, None]
    d_x[~ok] = 0.0
    return d_x


def finite_diff_grad(f, x, h=1e-6):
    """Central-difference gradient of scalar ``f`` at flat vector ``x``."""
    if h <= 0:
        raise ValueError("step h must be positive")
    x = np.array(x, dtype=np.float64).ravel()
    grad = np.zeros_like(x)
    for i in range(x.size):
        orig = x[i]
        x[i] = orig + h
        f_plus = float(f(x.copy()))
        x[i] = orig - h
        f_minus = float(f(x.copy()))
        x[i] = orig
        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            raise NonFiniteError(f"non-finite function value at coordinate {i}")
        grad[i] = (f_plus - f_minus) / (2.0 * h)
    return grad


def relative_error(analytic, numeric, floor=1e-8):
    """Max-norm relative error, with an absolute floor for near-zero gradients."""
    analytic = np.ravel(np.asarray(analytic, dtype=np.float64))
    numeric = np.ravel(np.asarray(numeric, dtype=np.float64))
    scale = max(np.max(np.abs(analytic), initial=0.0), np.max(np.abs(numeric), initial=0.0), floor)
    return float(np.max(np.abs(analytic - numeric), initial=0.0) / scale)
