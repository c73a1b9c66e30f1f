"""Analytic parameter and FLOP counts per block and per architecture.

Parameter counts enumerate exactly the tensors the implemented blocks
allocate (a test cross-checks them against live allocation), plus the
embedding matrix and the tied output softmax's vocabulary bias.

FLOP counts use the 2*m*n*k multiply-add convention and deliberately
model the *reference* segment-recurrent attention layer rather than
this package's simplified position bias: queries are projected over
the new segment, keys/values over memory plus segment (the cache
stores hidden states, so key/value projections are recomputed), the
relative-position embedding is projected over the full key range, and
three T x (M+T) head einsums are counted (content score, position
score, weighted sum). Softmax/layernorm/relu element costs are ignored
(sub-1% at these shapes). The final vocabulary softmax is reported
separately (``softmax_flops``) because it is architecture-independent;
``block_flops`` is the architecture-comparison number.

``cached_kv=True`` switches to marginal-cost counting (all projections
over the new segment only), which is also what the complexity-scaling
report uses: cache-rebuild projections are linear in length with a
large constant and would mask the quadratic interaction term at
practical lengths.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .archspec import ArchSpec, count_blocks, format as format_spec
from .blocks import BlockKind
from .config import CostQuery, ModelConfig
from .errors import ContractError


@dataclass
class BlockCost:
    index: int
    kind: BlockKind
    params: int
    flops: int


@dataclass
class CostReport:
    total_params: int = 0
    total_flops: int = 0
    per_block: list[BlockCost] = field(default_factory=list)
    embedding_params: int = 0
    softmax_params: int = 0
    softmax_flops: int = 0

    @property
    def block_params(self) -> int:
        return sum(b.params for b in self.per_block)

    @property
    def block_flops(self) -> int:
        return sum(b.flops for b in self.per_block)


def attention_params(config: ModelConfig) -> int:
    d, h = config.d_model, config.n_head * config.d_head
    proj = 3 * d * h + h * d          # q/k/v and output weights
    biases = 3 * h + d
    norm = 2 * d
    rel = config.n_head * (config.clamp_len + 1)
    return proj + biases + norm + rel


def feed_forward_params(config: ModelConfig) -> int:
    d, di = config.d_model, config.d_inner
    return d * di + di + di * d + d + 2 * d


def block_params(kind: BlockKind, config: ModelConfig) -> int:
    if kind is BlockKind.SELF_ATTENTION:
        return attention_params(config)
    if kind is BlockKind.FEED_FORWARD:
        return feed_forward_params(config)
    return 0


def attention_flops(config: ModelConfig, query: CostQuery, cached_kv: bool = False) -> int:
    d, h = config.d_model, config.n_head * config.d_head
    t, m, b = query.tgt_len, query.mem_len, query.batch_size
    k = t + m
    span = t if cached_kv else k
    proj_q = 2 * t * d * h
    proj_k = 2 * span * d * h
    proj_v = 2 * span * d * h
    proj_o = 2 * t * h * d
    einsums = 3 * 2 * t * k * h  # content score, position score, weighted sum
    per_seq = proj_q + proj_k + proj_v + proj_o + einsums
    # the relative-position projection is batch-independent
    rel_proj = 2 * span * d * h
    return b * per_seq + rel_proj


def feed_forward_flops(config: ModelConfig, query: CostQuery) -> int:
    d, di = config.d_model, config.d_inner
    return query.batch_size * 2 * query.tgt_len * d * di * 2


def block_flops(kind: BlockKind, config: ModelConfig, query: CostQuery,
                cached_kv: bool = False) -> int:
    if kind is BlockKind.SELF_ATTENTION:
        return attention_flops(config, query, cached_kv)
    if kind is BlockKind.FEED_FORWARD:
        return feed_forward_flops(config, query)
    return 0


def softmax_flops(config: ModelConfig, query: CostQuery) -> int:
    return query.batch_size * 2 * query.tgt_len * config.d_model * config.vocab_size


def count_params(spec: ArchSpec, config: ModelConfig) -> CostReport:
    """Parameter side of a cost report (flops left zero)."""
    report = CostReport()
    for i, kind in enumerate(spec):
        report.per_block.append(BlockCost(i, kind, block_params(kind, config), 0))
    report.embedding_params = config.vocab_size * config.d_model
    report.softmax_params = config.vocab_size  # tied weights; bias only
    report.total_params = (
        report.block_params + report.embedding_params + report.softmax_params
    )
    return report


def count_flops(spec: ArchSpec, config: ModelConfig, query: CostQuery,
                cached_kv: bool = False) -> CostReport:
    """FLOP side of a cost report (params left zero)."""
    query.validate()
    report = CostReport()
    for i, kind in enumerate(spec):
        report.per_block.append(
            BlockCost(i, kind, 0, block_flops(kind, config, query, cached_kv))
        )
    report.softmax_flops = softmax_flops(config, query)
    report.total_flops = report.block_flops + report.softmax_flops
    return report


def analyze(spec: ArchSpec, config: ModelConfig, query: CostQuery,
            cached_kv: bool = False) -> CostReport:
    """Both sides at once; parts always sum to the totals."""
    report = count_params(spec, config)
    flops = count_flops(spec, config, query, cached_kv)
    for bc, fc in zip(report.per_block, flops.per_block):
        bc.flops = fc.flops
    report.softmax_flops = flops.softmax_flops
    report.total_flops = flops.total_flops
    return report


@dataclass
class ScalingRow:
    tgt_len: int
    mem_len: int
    flops: int


@dataclass
class ScalingReport:
    kind: BlockKind
    rows: list[ScalingRow]
    exponent: float


def scaling_report(kind: BlockKind, config: ModelConfig, lengths,
                   mem_ratio: float = 10.0, cached_kv: bool = True) -> ScalingReport:
    """Block FLOPs across sequence lengths plus a fitted growth exponent.

    ``mem_ratio`` scales memory with the segment (default 10, the
    inference-measurement proportion 640/64). The exponent is the
    log-log least-squares slope; identity blocks cost zero at every
    length and report exponent 0.
    """
    lengths = [int(x) for x in lengths]
    if len(lengths) < 3:
        raise ContractError("scaling_report needs at least 3 lengths")
    if any(b <= a for a, b in zip(lengths, lengths[1:])):
        raise ContractError("lengths must be strictly ascending")
    rows = []
    for t in lengths:
        q = CostQuery(tgt_len=t, mem_len=int(round(mem_ratio * t)), batch_size=1)
        rows.append(ScalingRow(q.tgt_len, q.mem_len, block_flops(kind, config, q, cached_kv)))
    if all(r.flops == 0 for r in rows):
        return ScalingReport(kind, rows, 0.0)
    xs = np.log([r.tgt_len for r in rows])
    ys = np.log([r.flops for r in rows])
    exponent = float(np.polyfit(xs, ys, 1)[0])
    return ScalingReport(kind, rows, exponent)


@dataclass
class ComparisonRow:
    arch: str
    n_attn: int
    n_ff: int
    params: int
    gflops: float
    ratio: float


def compare_archs(specs, config: ModelConfig, query: CostQuery,
                  cached_kv: bool = False) -> list[ComparisonRow]:
    """Side-by-side cost rows; ratio is block GFLOPs versus the first spec."""
    specs = list(specs)
    if len(specs) < 2:
        raise ContractError("compare_archs needs at least 2 specs")
    rows = []
    base = None
    for spec in specs:
        report = analyze(spec, config, query, cached_kv)
        counts = count_blocks(spec)
        gflops = report.block_flops / 1e9
        if base is None:
            base = gflops
        rows.append(
            ComparisonRow(
                arch=format_spec(spec),
                n_attn=counts.n_attention,
                n_ff=counts.n_ff,
                params=report.total_params,
                gflops=gflops,
                ratio=gflops / base if base else math.nan,
            )
        )
    return rows
