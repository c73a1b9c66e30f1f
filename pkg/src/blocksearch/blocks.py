"""The three searchable layer blocks and segment-memory management.

Each non-trivial block is a pre-norm residual: the sublayer reads a
layer-normalized copy of its input and its output is added back onto
the untouched input, so zero-initialized sublayer weights make the
block an exact identity.

Attention is causal multi-head attention over the current segment plus
a cache of previous-segment hidden states ("memory"). Position enters
through a learned per-head bias indexed by the clipped key-to-query
distance, which keeps translation invariance and works unchanged when
memory extends the key range.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .config import ModelConfig
from .errors import ShapeError
from .tensor import Tensor

INIT_STD = 0.02
MASK_VALUE = -1e30  # finite stand-in for -inf; exp() underflows to exactly 0


class BlockKind(enum.Enum):
    """The per-layer choices; order doubles as the argmax tie-break order."""

    SELF_ATTENTION = "s"
    FEED_FORWARD = "f"
    IDENTITY = "i"


# Column order of architecture logit rows and of mixing weights.
CHOICES = (BlockKind.SELF_ATTENTION, BlockKind.FEED_FORWARD, BlockKind.IDENTITY)


@dataclass
class AttentionParams:
    w_q: Tensor
    b_q: Tensor
    w_k: Tensor
    b_k: Tensor
    w_v: Tensor
    b_v: Tensor
    w_o: Tensor
    b_o: Tensor
    ln_gain: Tensor
    ln_bias: Tensor
    rel_bias: Tensor  # (clamp_len + 1, n_head), row = clipped distance

    def tensors(self) -> list[Tensor]:
        return [
            self.w_q, self.b_q, self.w_k, self.b_k, self.w_v, self.b_v,
            self.w_o, self.b_o, self.ln_gain, self.ln_bias, self.rel_bias,
        ]


@dataclass
class FeedForwardParams:
    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor
    ln_gain: Tensor
    ln_bias: Tensor

    def tensors(self) -> list[Tensor]:
        return [self.w1, self.b1, self.w2, self.b2, self.ln_gain, self.ln_bias]


def _param(arr) -> Tensor:
    return Tensor(arr, requires_grad=True)


def init_attention_params(config: ModelConfig, rng: np.random.Generator) -> AttentionParams:
    d, h = config.d_model, config.n_head * config.d_head
    return AttentionParams(
        w_q=_param(rng.normal(0.0, INIT_STD, (d, h))),
        b_q=_param(np.zeros(h)),
        w_k=_param(rng.normal(0.0, INIT_STD, (d, h))),
        b_k=_param(np.zeros(h)),
        w_v=_param(rng.normal(0.0, INIT_STD, (d, h))),
        b_v=_param(np.zeros(h)),
        w_o=_param(rng.normal(0.0, INIT_STD, (h, d))),
        b_o=_param(np.zeros(d)),
        ln_gain=_param(np.ones(d)),
        ln_bias=_param(np.zeros(d)),
        rel_bias=_param(np.zeros((config.clamp_len + 1, config.n_head))),
    )


def init_feed_forward_params(config: ModelConfig, rng: np.random.Generator) -> FeedForwardParams:
    d, di = config.d_model, config.d_inner
    return FeedForwardParams(
        w1=_param(rng.normal(0.0, INIT_STD, (d, di))),
        b1=_param(np.zeros(di)),
        w2=_param(rng.normal(0.0, INIT_STD, (di, d))),
        b2=_param(np.zeros(d)),
        ln_gain=_param(np.ones(d)),
        ln_bias=_param(np.zeros(d)),
    )


class MemoryState:
    """Per-layer caches of previous-segment hidden states.

    Entries are plain arrays (never tape nodes), so no gradient can
    flow into a previous segment. Length along the time axis never
    exceeds mem_len.
    """

    def __init__(self, n_layers: int, mem_len: int):
        self.mem_len = mem_len
        self.layers: list[np.ndarray | None] = [None] * n_layers

    def layer(self, i: int) -> np.ndarray | None:
        return self.layers[i]

    def length(self) -> int:
        m = self.layers[0]
        return 0 if m is None else m.shape[-2]

    def update_layer(self, i: int, new_hidden: np.ndarray) -> None:
        self.layers[i] = update_memory(self.layers[i], new_hidden, self.mem_len)

    def reset(self) -> None:
        self.layers = [None] * len(self.layers)


def update_memory(mem: np.ndarray | None, new_hidden, mem_len: int) -> np.ndarray | None:
    """Keep the trailing ``mem_len`` rows of [mem ; new_hidden], detached.

    ``new_hidden`` may be a Tensor or array; the result is always a
    fresh array (a copy), so later parameter updates cannot alias it.
    """
    if isinstance(new_hidden, Tensor):
        new_hidden = new_hidden.data
    if mem_len == 0:
        return None
    if mem is None:
        cat = np.array(new_hidden, copy=True)
    else:
        cat = np.concatenate([mem, new_hidden], axis=-2)
    if cat.shape[-2] > mem_len:
        cat = np.ascontiguousarray(cat[..., -mem_len:, :])
    return cat


def _split_heads(x: Tensor, n_head: int, d_head: int) -> Tensor:
    # (..., T, n_head*d_head) -> (..., n_head, T, d_head)
    lead = x.shape[:-2]
    t = x.shape[-2]
    y = T.reshape(x, lead + (t, n_head, d_head))
    axes = tuple(range(len(lead))) + (len(lead) + 1, len(lead), len(lead) + 2)
    return T.transpose(y, axes)


def _merge_heads(x: Tensor) -> Tensor:
    # (..., n_head, T, d_head) -> (..., T, n_head*d_head)
    lead = x.shape[:-3]
    n_head, t, d_head = x.shape[-3:]
    axes = tuple(range(len(lead))) + (len(lead) + 1, len(lead), len(lead) + 2)
    y = T.transpose(x, axes)
    return T.reshape(y, lead + (t, n_head * d_head))


def causal_mask(tgt_len: int, mem_len: int) -> np.ndarray:
    """(T, M+T) additive mask: 0 where key <= query position, else MASK_VALUE."""
    t = np.arange(tgt_len)[:, None]
    j = np.arange(mem_len + tgt_len)[None, :]
    return np.where(j <= mem_len + t, 0.0, MASK_VALUE)


def relative_index(tgt_len: int, mem_len: int, clamp_len: int) -> np.ndarray:
    """(T, M+T) clipped key-to-query distances for the position bias."""
    t = np.arange(tgt_len)[:, None]
    j = np.arange(mem_len + tgt_len)[None, :]
    return np.clip(mem_len + t - j, 0, clamp_len)


def attn_forward(
    x: Tensor,
    mem: np.ndarray | None,
    params: AttentionParams,
    config: ModelConfig,
    rng: np.random.Generator | None = None,
    train: bool = False,
    clamp_len: int | None = None,
) -> Tensor:
    """Pre-norm residual causal self-attention with segment memory.

    Queries come from the normalized current segment; keys and values
    from the normalized concatenation [mem ; segment]. ``clamp_len``
    optionally lowers the distance clip at evaluation time (it can
    never exceed the bias table the block was built with).
    """
    d = config.d_model
    if x.shape[-1] != d:
        raise ShapeError(f"input last dim {x.shape[-1]} != d_model {d}")
    if mem is not None and mem.shape[-1] != d:
        raise ShapeError(f"memory last dim {mem.shape[-1]} != d_model {d}")
    n_head, d_head = config.n_head, config.d_head
    tgt = x.shape[-2]
    m = 0 if mem is None else mem.shape[-2]
    table_clamp = params.rel_bias.shape[0] - 1
    clip = table_clamp if clamp_len is None else min(clamp_len, table_clamp)

    h = T.layer_norm(x, params.ln_gain, params.ln_bias)
    if m > 0:
        hm = T.layer_norm(Tensor(mem), params.ln_gain, params.ln_bias)
        kv_in = T.concat([hm, h], axis=-2)
    else:
        kv_in = h

    q = T.add(T.matmul(h, params.w_q), params.b_q)
    k = T.add(T.matmul(kv_in, params.w_k), params.b_k)
    v = T.add(T.matmul(kv_in, params.w_v), params.b_v)

    qh = _split_heads(q, n_head, d_head)  # (..., H, T, dh)
    kh = _split_heads(k, n_head, d_head)  # (..., H, M+T, dh)
    vh = _split_heads(v, n_head, d_head)

    kt_axes = tuple(range(kh.ndim - 2)) + (kh.ndim - 1, kh.ndim - 2)
    scores = T.scale(T.matmul(qh, T.transpose(kh, kt_axes)), 1.0 / math.sqrt(d_head))

    idx = relative_index(tgt, m, clip)
    bias = T.embedding_lookup(params.rel_bias, idx.reshape(-1))  # (T*(M+T), H)
    bias = T.transpose(T.reshape(bias, (tgt, m + tgt, n_head)), (2, 0, 1))
    scores = T.add(scores, bias)  # broadcasts over any batch dims
    scores = T.add(scores, Tensor(causal_mask(tgt, m)))

    attw = T.softmax(scores, axis=-1)
    if train and config.dropout > 0.0:
        attw = T.dropout(attw, config.dropout, rng, train=True)

    ctx = _merge_heads(T.matmul(attw, vh))
    out = T.add(T.matmul(ctx, params.w_o), params.b_o)
    return T.add(x, out)


def ff_forward(
    x: Tensor,
    params: FeedForwardParams,
    config: ModelConfig,
    rng: np.random.Generator | None = None,
    train: bool = False,
) -> Tensor:
    """Pre-norm residual position-wise feed-forward block."""
    if x.shape[-1] != config.d_model:
        raise ShapeError(f"input last dim {x.shape[-1]} != d_model {config.d_model}")
    h = T.layer_norm(x, params.ln_gain, params.ln_bias)
    a = T.relu(T.add(T.matmul(h, params.w1), params.b1))
    if train and config.dropout > 0.0:
        a = T.dropout(a, config.dropout, rng, train=True)
    z = T.add(T.matmul(a, params.w2), params.b2)
    if train and config.dropout > 0.0:
        z = T.dropout(z, config.dropout, rng, train=True)
    return T.add(x, z)


def identity_forward(x: Tensor) -> Tensor:
    """The do-nothing block: returns its input object unchanged."""
    return x
