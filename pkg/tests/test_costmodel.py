import numpy as np
import pytest

from blocksearch.archspec import ArchSpec, parse
from blocksearch.blocks import (
    BlockKind,
    init_attention_params,
    init_feed_forward_params,
)
from blocksearch.config import CostQuery, ModelConfig
from blocksearch.costmodel import (
    analyze,
    attention_flops,
    block_flops,
    compare_archs,
    count_flops,
    count_params,
    feed_forward_params,
    scaling_report,
)
from blocksearch.errors import ContractError

S, F, I = BlockKind.SELF_ATTENTION, BlockKind.FEED_FORWARD, BlockKind.IDENTITY

BASE = ModelConfig()  # table-reproduction defaults
QUERY = CostQuery(tgt_len=64, mem_len=640, batch_size=1)


class TestParams:
    def test_ff_hand_count(self):
        cfg = ModelConfig(d_model=4, n_head=1, d_head=4, d_inner=8, tgt_len=2,
                          mem_len=0, clamp_len=0, dropout=0.0, vocab_size=5, n_layers=1)
        # 4*8 + 8 + 8*4 + 4 + 2*4 = 84
        assert feed_forward_params(cfg) == 84

    def test_published_baseline_within_5pct(self):
        report = count_params(parse("(sf)x16"), BASE)
        assert report.total_params == pytest.approx(192e6, rel=0.05)

    def test_published_par_within_5pct(self):
        report = count_params(parse("(sfff)x6 (f)x8"), BASE)
        assert report.total_params == pytest.approx(200e6, rel=0.05)

    def test_identity_blocks_cost_nothing(self):
        spec = ArchSpec([S, I, F, I])
        report = count_params(spec, BASE)
        assert report.per_block[1].params == 0
        assert report.per_block[3].params == 0

    def test_totals_equal_sum_of_parts(self):
        spec = parse("(sff)x5 (f)x9")
        report = analyze(spec, BASE, QUERY)
        assert report.total_params == (
            sum(b.params for b in report.per_block)
            + report.embedding_params + report.softmax_params
        )
        assert report.total_flops == (
            sum(b.flops for b in report.per_block) + report.softmax_flops
        )

    def test_analytic_counts_match_live_allocation_exactly(self):
        # brute-force enumeration of the tensors the blocks actually allocate
        rng = np.random.default_rng(0)
        for d_model in (4, 8):
            cfg = ModelConfig(d_model=d_model, n_head=2, d_head=3, d_inner=7,
                              tgt_len=4, mem_len=2, clamp_len=5, dropout=0.0,
                              vocab_size=11, n_layers=1)
            attn = init_attention_params(cfg, rng)
            assert sum(t.size for t in attn.tensors()) == count_params(
                ArchSpec([S]), cfg).per_block[0].params
            ff = init_feed_forward_params(cfg, rng)
            assert sum(t.size for t in ff.tensors()) == count_params(
                ArchSpec([F]), cfg).per_block[0].params


class TestFlops:
    def test_published_baseline_within_15pct(self):
        report = count_flops(parse("(sf)x16"), BASE, QUERY)
        assert report.block_flops == pytest.approx(27e9, rel=0.15)

    def test_published_par_within_15pct(self):
        report = count_flops(parse("(sfff)x6 (f)x8"), BASE, QUERY)
        assert report.block_flops == pytest.approx(17e9, rel=0.15)

    def test_published_ratio_within_8pct(self):
        base = count_flops(parse("(sf)x16"), BASE, QUERY).block_flops
        par = count_flops(parse("(sfff)x6 (f)x8"), BASE, QUERY).block_flops
        assert par / base == pytest.approx(17.0 / 27.0, rel=0.08)

    def test_all_identity_is_softmax_only(self):
        report = count_flops(ArchSpec([I] * 4), BASE, QUERY)
        assert report.block_flops == 0
        assert report.total_flops == report.softmax_flops > 0

    def test_batch_scales_block_flops(self):
        q1 = CostQuery(64, 640, 1)
        q4 = CostQuery(64, 640, 4)
        f1 = block_flops(F, BASE, q1)
        f4 = block_flops(F, BASE, q4)
        assert f4 == 4 * f1

    def test_monotone_in_added_blocks(self):
        spec = parse("(sf)x2")
        bigger_f = parse("(sf)x2 (f)x1")
        bigger_s = parse("(sf)x2 (s)x1")
        base = analyze(spec, BASE, QUERY)
        for bigger in (bigger_f, bigger_s):
            rep = analyze(bigger, BASE, QUERY)
            assert rep.total_params > base.total_params
            assert rep.block_flops > base.block_flops

    def test_swapping_attention_for_ff_cuts_flops(self):
        with_attn = count_flops(parse("(sf)x2"), BASE, QUERY).block_flops
        without = count_flops(parse("(ff)x1 (sf)x1 (f)x1"), BASE, QUERY).block_flops
        assert without < with_attn

    def test_cached_kv_is_cheaper(self):
        full = attention_flops(BASE, QUERY, cached_kv=False)
        cached = attention_flops(BASE, QUERY, cached_kv=True)
        assert cached < full


class TestScaling:
    LENGTHS = [256, 512, 1024, 2048, 4096]

    def test_attention_is_nearly_quadratic(self):
        rep = scaling_report(S, BASE, self.LENGTHS)
        assert 1.8 <= rep.exponent <= 2.0

    def test_feed_forward_is_linear(self):
        rep = scaling_report(F, BASE, self.LENGTHS)
        assert 0.98 <= rep.exponent <= 1.02

    def test_identity_all_zero(self):
        rep = scaling_report(I, BASE, self.LENGTHS)
        assert all(r.flops == 0 for r in rep.rows)
        assert rep.exponent == 0.0

    def test_needs_three_lengths(self):
        with pytest.raises(ContractError):
            scaling_report(S, BASE, [64, 128])
        with pytest.raises(ContractError):
            scaling_report(S, BASE, [64, 64, 128])


class TestCompare:
    def test_published_pair_ratio(self):
        rows = compare_archs(
            [parse("(sf)x16"), parse("(sfff)x6 (f)x8")], BASE, QUERY)
        assert rows[0].ratio == 1.0
        assert rows[1].ratio == pytest.approx(0.63, rel=0.08)

    def test_identical_specs_ratio_exactly_one(self):
        rows = compare_archs([parse("(sf)x4"), parse("(sf)x4")], BASE, QUERY)
        assert rows[1].ratio == 1.0

    def test_24_layer_pair_direction(self):
        cfg = ModelConfig(n_layers=24)
        rows = compare_archs(
            [parse("(sf)x12"), parse("(sff)x5 (f)x9")], cfg, QUERY)
        assert rows[1].gflops < rows[0].gflops

    def test_additivity_of_block_costs(self):
        a = parse("(sf)x3")
        b = parse("(fff)x2")
        ab = ArchSpec(list(a) + list(b))
        ra = analyze(a, BASE, QUERY)
        rb = analyze(b, BASE, QUERY)
        rab = analyze(ab, BASE, QUERY)
        assert rab.block_params == ra.block_params + rb.block_params
        assert rab.block_flops == ra.block_flops + rb.block_flops
        # shared embedding/softmax counted once
        assert rab.total_params == (
            ra.total_params + rb.total_params
            - rb.embedding_params - rb.softmax_params
        )
