"""Pure numpy fallback for the fused kernels.

Every function here has a twin in ``_fused.pyx`` with the same
signature and semantics. Inputs are C-contiguous float64 arrays
(2-d where a row dimension is mentioned); callers are responsible
for reshaping higher-rank tensors down to rows.
"""

import numpy as np


def layer_norm_fwd(x, gain, bias, eps):
    """Normalize each row of x to zero mean / unit variance, then affine.

    Returns (y, mean, rstd); mean and rstd are kept for the backward pass.
    """
    mean = x.mean(axis=1)
    var = x.var(axis=1)
    rstd = 1.0 / np.sqrt(var + eps)
    xhat = (x - mean[:, None]) * rstd[:, None]
    y = xhat * gain + bias
    return y, mean, rstd


def layer_norm_bwd(dy, x, gain, mean, rstd):
    xhat = (x - mean[:, None]) * rstd[:, None]
    dgain = (dy * xhat).sum(axis=0)
    dbias = dy.sum(axis=0)
    dxhat = dy * gain
    m1 = dxhat.mean(axis=1)
    m2 = (dxhat * xhat).mean(axis=1)
    dx = (dxhat - m1[:, None] - xhat * m2[:, None]) * rstd[:, None]
    return dx, dgain, dbias


def softmax_fwd(x):
    """Row softmax with max subtraction for overflow safety."""
    m = x.max(axis=1, keepdims=True)
    e = np.exp(x - m)
    return e / e.sum(axis=1, keepdims=True)


def softmax_bwd(y, dy):
    inner = (dy * y).sum(axis=1, keepdims=True)
    return y * (dy - inner)


def cross_entropy_fwd(logits, targets):
    """Per-row negative log likelihood of the target class, in nats.

    Returns (nll, probs); probs is the row softmax, cached for backward.
    """
    m = logits.max(axis=1, keepdims=True)
    z = logits - m
    lse = np.log(np.exp(z).sum(axis=1))
    nll = lse - z[np.arange(logits.shape[0]), targets]
    probs = np.exp(z - lse[:, None])
    return nll, probs


def cross_entropy_bwd(probs, targets, scale):
    d = probs * scale
    d[np.arange(probs.shape[0]), targets] -= scale
    return d


def embedding_bwd(ids, dy, n_rows):
    """Scatter-add rows of dy into a (n_rows, d) gradient table."""
    dw = np.zeros((n_rows, dy.shape[1]), dtype=dy.dtype)
    np.add.at(dw, ids, dy)
    return dw
