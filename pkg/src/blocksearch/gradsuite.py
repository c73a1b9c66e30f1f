"""Finite-difference oracle suite over every differentiable op and
both non-trivial block forwards.

Each case builds a random scalar-valued function around one operation
and compares reverse-mode gradients against central differences. The
suite is the package's ground truth for backward-pass correctness; the
CLI ``gradcheck`` command and the acceptance tests both run it.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .blocks import attn_forward, ff_forward, init_attention_params, init_feed_forward_params
from .config import ModelConfig
from .tensor import Tensor, grad_check

TOLERANCE = 1e-5


def _weighted_sum(rng, shape):
    w = Tensor(rng.normal(size=shape))
    return lambda y: T.tsum(T.mul(y, w))


def _case_matmul(rng):
    m, k, n = rng.integers(2, 10, size=3)
    a = Tensor(rng.normal(size=(m, k)), requires_grad=True)
    b = Tensor(rng.normal(size=(k, n)))
    reduce = _weighted_sum(rng, (m, n))
    return a, lambda t: reduce(T.matmul(t, b))


def _case_matmul_rhs(rng):
    m, k, n = rng.integers(2, 10, size=3)
    a = Tensor(rng.normal(size=(m, k)))
    b = Tensor(rng.normal(size=(k, n)), requires_grad=True)
    reduce = _weighted_sum(rng, (m, n))
    return b, lambda t: reduce(T.matmul(a, t))


def _case_add(rng):
    shape = tuple(rng.integers(2, 8, size=2))
    a = Tensor(rng.normal(size=shape), requires_grad=True)
    b = Tensor(rng.normal(size=shape[-1:]))  # row broadcast
    reduce = _weighted_sum(rng, shape)
    return a, lambda t: reduce(T.add(t, b))


def _case_mul(rng):
    shape = tuple(rng.integers(2, 8, size=2))
    a = Tensor(rng.normal(size=shape), requires_grad=True)
    b = Tensor(rng.normal(size=shape))
    reduce = _weighted_sum(rng, shape)
    return a, lambda t: reduce(T.mul(t, b))


def _case_scale(rng):
    shape = tuple(rng.integers(2, 8, size=2))
    a = Tensor(rng.normal(size=shape), requires_grad=True)
    s = float(rng.normal())
    reduce = _weighted_sum(rng, shape)
    return a, lambda t: reduce(T.scale(t, s))


def _case_relu(rng):
    shape = tuple(rng.integers(2, 8, size=2))
    # keep values away from the kink, where finite differences lie
    vals = rng.normal(size=shape)
    vals = np.where(np.abs(vals) < 0.05, 0.2, vals)
    a = Tensor(vals, requires_grad=True)
    reduce = _weighted_sum(rng, shape)
    return a, lambda t: reduce(T.relu(t))


def _case_layer_norm(rng):
    rows, d = int(rng.integers(2, 6)), int(rng.integers(2, 16))
    x = Tensor(rng.normal(size=(rows, d)), requires_grad=True)
    g = Tensor(rng.normal(size=d))
    b = Tensor(rng.normal(size=d))
    reduce = _weighted_sum(rng, (rows, d))
    return x, lambda t: reduce(T.layer_norm(t, g, b))


def _case_softmax(rng):
    rows, d = int(rng.integers(2, 6)), int(rng.integers(2, 12))
    x = Tensor(rng.normal(size=(rows, d)), requires_grad=True)
    reduce = _weighted_sum(rng, (rows, d))
    return x, lambda t: reduce(T.softmax(t, axis=-1))


def _case_cross_entropy(rng):
    rows, v = int(rng.integers(2, 8)), int(rng.integers(2, 12))
    x = Tensor(rng.normal(size=(rows, v)), requires_grad=True)
    targets = rng.integers(0, v, size=rows)
    return x, lambda t: T.cross_entropy(t, targets)


def _case_embedding(rng):
    v, d = int(rng.integers(3, 10)), int(rng.integers(2, 8))
    table = Tensor(rng.normal(size=(v, d)), requires_grad=True)
    ids = rng.integers(0, v, size=(2, 5))
    reduce = _weighted_sum(rng, (2, 5, d))
    return table, lambda t: reduce(T.embedding_lookup(t, ids))


def _case_concat(rng):
    d = int(rng.integers(2, 6))
    a = Tensor(rng.normal(size=(3, d)), requires_grad=True)
    b = Tensor(rng.normal(size=(2, d)))
    reduce = _weighted_sum(rng, (5, d))
    return a, lambda t: reduce(T.concat([t, b], axis=0))


def _case_reshape_transpose(rng):
    a = Tensor(rng.normal(size=(3, 4, 2)), requires_grad=True)
    reduce = _weighted_sum(rng, (4, 6))
    return a, lambda t: reduce(T.reshape(T.transpose(t, (1, 0, 2)), (4, 6)))


def _case_getitem(rng):
    a = Tensor(rng.normal(size=(4, 5)), requires_grad=True)
    reduce = _weighted_sum(rng, (5,))
    return a, lambda t: reduce(t[2])


def _tiny_config(rng) -> ModelConfig:
    return ModelConfig(
        d_model=int(rng.integers(4, 9)),
        n_head=2,
        d_head=int(rng.integers(2, 5)),
        d_inner=int(rng.integers(4, 13)),
        tgt_len=5,
        mem_len=3,
        clamp_len=4,
        dropout=0.0,
        vocab_size=11,
        n_layers=1,
    )


def _case_attn_block(rng):
    cfg = _tiny_config(rng)
    params = init_attention_params(cfg, rng)
    mem = rng.normal(size=(3, cfg.d_model))
    x = Tensor(rng.normal(size=(5, cfg.d_model)), requires_grad=True)
    reduce = _weighted_sum(rng, (5, cfg.d_model))
    return x, lambda t: reduce(attn_forward(t, mem, params, cfg))


def _case_attn_block_params(rng):
    cfg = _tiny_config(rng)
    params = init_attention_params(cfg, rng)
    mem = rng.normal(size=(3, cfg.d_model))
    x = Tensor(rng.normal(size=(5, cfg.d_model)))
    reduce = _weighted_sum(rng, (5, cfg.d_model))
    # check one projection matrix; the rest share the same graph paths
    return params.w_v, lambda t: reduce(attn_forward(x, mem, params, cfg))


def _case_ff_block(rng):
    cfg = _tiny_config(rng)
    params = init_feed_forward_params(cfg, rng)
    x = Tensor(rng.normal(size=(5, cfg.d_model)), requires_grad=True)
    reduce = _weighted_sum(rng, (5, cfg.d_model))
    return x, lambda t: reduce(ff_forward(t, params, cfg))


CASES = {
    "matmul_lhs": _case_matmul,
    "matmul_rhs": _case_matmul_rhs,
    "add": _case_add,
    "mul": _case_mul,
    "scale": _case_scale,
    "relu": _case_relu,
    "layer_norm": _case_layer_norm,
    "softmax": _case_softmax,
    "cross_entropy": _case_cross_entropy,
    "embedding_lookup": _case_embedding,
    "concat": _case_concat,
    "reshape_transpose": _case_reshape_transpose,
    "getitem": _case_getitem,
    "attn_forward": _case_attn_block,
    "attn_forward_params": _case_attn_block_params,
    "ff_forward": _case_ff_block,
}


def run_suite(n_seeds: int = 100, seed0: int = 0) -> dict[str, float]:
    """Worst finite-difference relative error per case over n_seeds."""
    worst = {name: 0.0 for name in CASES}
    for s in range(n_seeds):
        rng = np.random.default_rng(seed0 + s)
        for name, build in CASES.items():
            x, f = build(rng)
            err = grad_check(f, x, eps=1e-5)
            if err > worst[name]:
                worst[name] = err
    return worst
