"""The searchable network: every layer holds all candidate blocks.

In mixed mode a layer's output is the convex combination of its block
outputs, weighted by a Gumbel-Softmax over that layer's architecture
logits; the combination is what makes the architecture distribution
differentiable, and its cost is linear in the number of candidate
blocks. In one-hot mode only the selected block runs and no gradient
touches the logits, which must match a standalone fixed-architecture
model exactly.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from . import tensor as T
from .archspec import ArchSpec
from .blocks import (
    CHOICES,
    BlockKind,
    MemoryState,
    attn_forward,
    ff_forward,
    identity_forward,
    init_attention_params,
    init_feed_forward_params,
)
from .config import ModelConfig
from .errors import ContractError
from .tensor import Tensor

# Optional test hook: a callable (shape) -> ndarray replacing Gumbel draws.
NoiseHook = Callable[[tuple], np.ndarray]


def sample_gumbel(rng: np.random.Generator, shape) -> np.ndarray:
    u = rng.random(shape)
    return -np.log(-np.log(u))


def gumbel_softmax(logits_row, tau: float, rng: np.random.Generator,
                   noise_hook: NoiseHook | None = None) -> Tensor:
    """Gumbel-Softmax relaxation of a categorical draw over one row.

    weights = softmax((logits + g) / tau) with g standard Gumbel noise;
    differentiable in the logits (the noise is a constant). tau large
    flattens toward uniform, tau small sharpens toward one-hot.
    """
    if tau <= 0:
        raise ContractError(f"tau must be > 0, got {tau}")
    row = logits_row if isinstance(logits_row, Tensor) else Tensor(logits_row)
    draw = noise_hook if noise_hook is not None else lambda s: sample_gumbel(rng, s)
    g = np.asarray(draw(row.shape), dtype=row.data.dtype)
    return T.softmax(T.scale(T.add(row, Tensor(g)), 1.0 / tau), axis=-1)


def mix_weights(arch_logits: Tensor, tau: float, rng: np.random.Generator,
                noise_hook: NoiseHook | None = None) -> Tensor:
    """All layers at once: (L, C) logits -> (L, C) row-stochastic weights."""
    if tau <= 0:
        raise ContractError(f"tau must be > 0, got {tau}")
    draw = noise_hook if noise_hook is not None else lambda s: sample_gumbel(rng, s)
    g = np.asarray(draw(arch_logits.shape), dtype=arch_logits.data.dtype)
    return T.softmax(T.scale(T.add(arch_logits, Tensor(g)), 1.0 / tau), axis=-1)


class SuperNet:
    """L layers, each holding one instance of every candidate block
    plus a row of architecture logits (initialized uniform, i.e. zero)."""

    def __init__(self, config: ModelConfig, rng: np.random.Generator,
                 choices: Sequence[BlockKind] = CHOICES):
        self.config = config
        self.choices = tuple(choices)
        self.n_layers = config.n_layers
        self.layers = []
        for _ in range(self.n_layers):
            blocks = {}
            for kind in self.choices:
                if kind is BlockKind.SELF_ATTENTION:
                    blocks[kind] = init_attention_params(config, rng)
                elif kind is BlockKind.FEED_FORWARD:
                    blocks[kind] = init_feed_forward_params(config, rng)
            self.layers.append(blocks)
        self.arch_logits = Tensor(
            np.zeros((self.n_layers, len(self.choices))), requires_grad=True
        )

    def block_parameters(self) -> list[Tensor]:
        out = []
        for layer in self.layers:
            for kind in self.choices:
                if kind in layer:
                    out.extend(layer[kind].tensors())
        return out

    def new_memory(self) -> MemoryState:
        return MemoryState(self.n_layers, self.config.mem_len)

    def _run_block(self, kind: BlockKind, layer, x, mem, rng, train):
        if kind is BlockKind.SELF_ATTENTION:
            return attn_forward(x, mem, layer[kind], self.config, rng, train)
        if kind is BlockKind.FEED_FORWARD:
            return ff_forward(x, layer[kind], self.config, rng, train)
        return identity_forward(x)

    def forward_mixed(self, x: Tensor, memory: MemoryState | None,
                      tau: float, rng: np.random.Generator,
                      train: bool = False,
                      noise_hook: NoiseHook | None = None) -> Tensor:
        """Evaluate every block per layer and blend by Gumbel-Softmax weights.

        Per-layer memory is updated (detached) from the mixed stream
        feeding that layer, whatever the attention block's weight.
        """
        weights = mix_weights(self.arch_logits, tau, rng, noise_hook)
        for l, layer in enumerate(self.layers):
            mem = memory.layer(l) if memory is not None else None
            parts = []
            for c, kind in enumerate(self.choices):
                y = self._run_block(kind, layer, x, mem, rng, train)
                parts.append(T.mul(weights[(l, c)], y))
            mixed = parts[0]
            for p in parts[1:]:
                mixed = T.add(mixed, p)
            if memory is not None:
                memory.update_layer(l, x.data)
            x = mixed
        return x

    def forward_one_hot(self, x: Tensor, memory: MemoryState | None,
                        spec: ArchSpec, rng: np.random.Generator | None = None,
                        train: bool = False) -> Tensor:
        """Run only the selected block per layer; no gradient reaches
        the architecture logits (they are not part of the graph)."""
        if len(spec) != self.n_layers:
            raise ContractError(
                f"spec length {len(spec)} != supernet layers {self.n_layers}"
            )
        for l, (layer, kind) in enumerate(zip(self.layers, spec)):
            if kind not in self.choices:
                raise ContractError(f"spec uses {kind} not in supernet choices")
            mem = memory.layer(l) if memory is not None else None
            y = self._run_block(kind, layer, x, mem, rng, train)
            if memory is not None:
                memory.update_layer(l, x.data)
            x = y
        return x


def sample_architecture(arch_logits, choices: Sequence[BlockKind] = CHOICES) -> ArchSpec:
    """Most probable block per layer; ties resolve to the earliest
    entry in ``choices`` (attention before feed-forward before identity)."""
    logits = arch_logits.data if isinstance(arch_logits, Tensor) else np.asarray(arch_logits)
    picks = np.argmax(logits, axis=1)  # argmax takes the first max: tie-break order
    return ArchSpec(choices[int(i)] for i in picks)


def has_argmax_ties(arch_logits) -> bool:
    logits = arch_logits.data if isinstance(arch_logits, Tensor) else np.asarray(arch_logits)
    row_max = logits.max(axis=1, keepdims=True)
    return bool(((logits == row_max).sum(axis=1) > 1).any())


def convergence_check(history: Sequence[ArchSpec]) -> bool:
    """True iff the trailing ceil(0.75 * N) snapshots are all equal,
    N being the number of architecture snapshots taken so far."""
    n = len(history)
    if n == 0:
        raise ContractError("convergence_check needs a nonempty history")
    window = -(-3 * n // 4)  # ceil(0.75 n)
    tail = history[n - window :]
    return all(s == tail[0] for s in tail[1:])
