"""Fixed-architecture language modeling: training and evaluation.

A model is an embedding, a stack of blocks given by an ArchSpec, and
an (untied) output projection. Segments are processed left to right
with per-layer memory carried between them, so context flows across
segment boundaries without gradient.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .archspec import ArchSpec
from .blocks import (
    BlockKind,
    MemoryState,
    attn_forward,
    ff_forward,
    identity_forward,
    init_attention_params,
    init_feed_forward_params,
)
from .config import EvalConfig, ModelConfig
from .data import SegmentBatcher
from .errors import ConfigError, TrainingAbort
from .optim import grad_norm, make_optimizer
from .tensor import Tensor


class LanguageModel:
    """Embedding + fixed block stack + output head."""

    def __init__(self, spec: ArchSpec, config: ModelConfig, rng: np.random.Generator):
        self.spec = spec
        self.config = config
        d, v = config.d_model, config.vocab_size
        self.embedding = Tensor(rng.normal(0.0, 0.02, (v, d)), requires_grad=True)
        self.head_w = Tensor(rng.normal(0.0, 0.02, (d, v)), requires_grad=True)
        self.head_b = Tensor(np.zeros(v), requires_grad=True)
        self.layers = []
        for kind in spec:
            if kind is BlockKind.SELF_ATTENTION:
                self.layers.append((kind, init_attention_params(config, rng)))
            elif kind is BlockKind.FEED_FORWARD:
                self.layers.append((kind, init_feed_forward_params(config, rng)))
            else:
                self.layers.append((kind, None))

    def parameters(self) -> list[Tensor]:
        out = [self.embedding, self.head_w, self.head_b]
        for _, params in self.layers:
            if params is not None:
                out.extend(params.tensors())
        return out

    def new_memory(self, mem_len: int | None = None) -> MemoryState:
        n = mem_len if mem_len is not None else self.config.mem_len
        return MemoryState(len(self.layers), n)

    def forward(self, ids: np.ndarray, memory: MemoryState | None = None,
                rng: np.random.Generator | None = None, train: bool = False,
                clamp_len: int | None = None) -> Tensor:
        """ids (B, T) -> logits (B, T, V); updates ``memory`` in place."""
        x = T.embedding_lookup(self.embedding, ids)
        for l, (kind, params) in enumerate(self.layers):
            mem = memory.layer(l) if memory is not None else None
            if kind is BlockKind.SELF_ATTENTION:
                y = attn_forward(x, mem, params, self.config, rng, train, clamp_len)
            elif kind is BlockKind.FEED_FORWARD:
                y = ff_forward(x, params, self.config, rng, train)
            else:
                y = identity_forward(x)
            if memory is not None:
                memory.update_layer(l, x.data)
            x = y
        return T.add(T.matmul(x, self.head_w), self.head_b)


@dataclass
class TrainResult:
    model: LanguageModel
    loss_curve: list[float]


def train_fixed(spec: ArchSpec, corpus_ids, config: ModelConfig, steps: int,
                seed: int, batch_size: int = 16, lr: float = 1e-2,
                weight_decay: float = 0.0, optimizer: str = "sgd",
                cosine_decay: bool = True) -> TrainResult:
    """Train a fixed-architecture model on a token stream.

    Deterministic for a given (spec, corpus, config, seed). Raises
    TrainingAbort with diagnostics if the loss goes non-finite.
    """
    if any(k is BlockKind.IDENTITY for k in spec):
        raise ConfigError("train_fixed needs an identity-free spec; compact() first")
    rng = np.random.default_rng(seed)
    model = LanguageModel(spec, config, rng)
    opt = make_optimizer(optimizer, model.parameters(), lr, weight_decay)
    batcher = SegmentBatcher(corpus_ids, batch_size, config.tgt_len)
    memory = model.new_memory()
    curve = []
    for step in range(steps):
        if cosine_decay:
            opt.lr = lr * 0.5 * (1.0 + math.cos(math.pi * step / max(1, steps)))
        inp, tgt, wrapped = batcher.next_batch()
        if wrapped:
            memory.reset()
        logits = model.forward(inp, memory, rng, train=True)
        loss = T.cross_entropy(logits, tgt)
        value = loss.item()
        if not math.isfinite(value):
            raise TrainingAbort(step, opt.lr, grad_norm(model.parameters()))
        opt.zero_grad()
        loss.backward()
        opt.step()
        curve.append(value)
    return TrainResult(model, curve)


@dataclass
class EvalReport:
    """Held-out likelihood summary; ppl and bpc are pure functions of
    the mean negative log likelihood (nats/token)."""

    mean_nll: float
    ppl: float
    bpc: float
    tokens_evaluated: int
    tgt_len: int
    mem_len: int
    clamp_len: int

    @staticmethod
    def from_nll(mean_nll: float, tokens: int, eval_config: EvalConfig) -> "EvalReport":
        return EvalReport(
            mean_nll=mean_nll,
            ppl=math.exp(mean_nll),
            bpc=mean_nll / math.log(2.0),
            tokens_evaluated=tokens,
            tgt_len=eval_config.tgt_len,
            mem_len=eval_config.mem_len,
            clamp_len=eval_config.clamp_len,
        )

    def to_dict(self) -> dict:
        return {
            "mean_nll": self.mean_nll,
            "ppl": self.ppl,
            "bpc": self.bpc,
            "tokens_evaluated": self.tokens_evaluated,
            "tgt_len": self.tgt_len,
            "mem_len": self.mem_len,
            "clamp_len": self.clamp_len,
        }


def evaluate(model: LanguageModel, corpus_ids, eval_config: EvalConfig) -> EvalReport:
    """Sliding evaluation with memory carried across segments.

    Side-effect free: no gradients, no parameter or RNG state touched;
    repeated calls return identical reports.
    """
    ids = np.asarray(corpus_ids, dtype=np.int64)
    if ids.size == 0:
        raise ConfigError("evaluation corpus is empty")
    bs = min(eval_config.batch_size, max(1, ids.size // (eval_config.tgt_len + 1)))
    batcher = SegmentBatcher(ids, bs, eval_config.tgt_len)
    memory = model.new_memory(eval_config.mem_len)
    total_nll = 0.0
    total_tokens = 0
    for _ in range(batcher.steps_per_pass):
        inp, tgt, _ = batcher.next_batch()
        logits = model.forward(
            inp, memory, rng=None, train=False, clamp_len=eval_config.clamp_len
        )
        loss = T.cross_entropy(logits, tgt)
        total_nll += loss.item() * inp.size
        total_tokens += inp.size
    return EvalReport.from_nll(total_nll / total_tokens, total_tokens, eval_config)
