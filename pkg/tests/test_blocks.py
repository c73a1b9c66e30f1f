import numpy as np
import pytest

from blocksearch import tensor as T
from blocksearch.blocks import (
    BlockKind,
    MemoryState,
    attn_forward,
    ff_forward,
    identity_forward,
    init_attention_params,
    init_feed_forward_params,
    update_memory,
)
from blocksearch.config import ModelConfig
from blocksearch.errors import ShapeError
from blocksearch.tensor import Tensor


def tiny_config(**kw) -> ModelConfig:
    base = dict(d_model=8, n_head=2, d_head=4, d_inner=16, tgt_len=6, mem_len=4,
                clamp_len=5, dropout=0.0, vocab_size=13, n_layers=2)
    base.update(kw)
    return ModelConfig(**base).validate()


def zeroed(params):
    for t in params.tensors():
        t.data[...] = 0.0
    return params


class TestAttention:
    def test_single_token_no_memory_weight_is_one(self):
        cfg = tiny_config()
        rng = np.random.default_rng(0)
        params = init_attention_params(cfg, rng)
        x = Tensor(rng.normal(size=(1, cfg.d_model)))
        # T=1, M=0: softmax over a single key is exactly 1, so the output
        # is x + proj(v) with v from that single position; just check it runs
        # and the attention row count is right via the causal invariant below.
        y = attn_forward(x, None, params, cfg)
        assert y.shape == (1, cfg.d_model)
        # residual with zero weights
        y0 = attn_forward(x, None, zeroed(init_attention_params(cfg, rng)), cfg)
        assert np.array_equal(y0.data, x.data)

    def test_zero_weights_is_exact_identity(self):
        cfg = tiny_config()
        rng = np.random.default_rng(1)
        params = zeroed(init_attention_params(cfg, rng))
        x = Tensor(rng.normal(size=(6, cfg.d_model)))
        mem = rng.normal(size=(4, cfg.d_model))
        y = attn_forward(x, mem, params, cfg)
        assert np.array_equal(y.data, x.data)

    def test_causal_masking_bitwise(self):
        cfg = tiny_config()
        rng = np.random.default_rng(2)
        params = init_attention_params(cfg, rng)
        params.rel_bias.data[...] = rng.normal(size=params.rel_bias.shape)
        mem = rng.normal(size=(4, cfg.d_model))
        x = rng.normal(size=(6, cfg.d_model))
        base = attn_forward(Tensor(x), mem, params, cfg).data
        for t in range(1, 6):
            bumped = x.copy()
            bumped[t:] += rng.normal(size=bumped[t:].shape)
            out = attn_forward(Tensor(bumped), mem, params, cfg).data
            assert np.array_equal(out[:t], base[:t]), f"leak at position {t}"

    def test_attention_rows_sum_to_one(self):
        # constant value vectors turn the weighted sum into a row sum of the
        # attention weights: with v == 1 for every key and w_o == I, the
        # block output is x + rowsum, so rowsum == 1 iff rows normalize.
        cfg = tiny_config()
        rng = np.random.default_rng(3)
        params = init_attention_params(cfg, rng)
        params.rel_bias.data[...] = rng.normal(size=params.rel_bias.shape)
        params.w_v.data[...] = 0.0
        params.b_v.data[...] = 1.0
        params.w_o.data[...] = np.eye(cfg.n_head * cfg.d_head)
        params.b_o.data[...] = 0.0
        x = rng.normal(size=(5, cfg.d_model))
        mem = rng.normal(size=(3, cfg.d_model))
        y = attn_forward(Tensor(x), mem, params, cfg)
        assert np.abs((y.data - x) - 1.0).max() < 1e-12

    def test_memory_changes_output_and_mismatch_raises(self):
        cfg = tiny_config()
        rng = np.random.default_rng(4)
        params = init_attention_params(cfg, rng)
        x = Tensor(rng.normal(size=(5, cfg.d_model)))
        y0 = attn_forward(x, None, params, cfg).data
        mem = rng.normal(size=(4, cfg.d_model))
        y1 = attn_forward(x, mem, params, cfg).data
        assert not np.allclose(y0, y1)
        with pytest.raises(ShapeError):
            attn_forward(x, rng.normal(size=(4, cfg.d_model + 1)), params, cfg)

    def test_batched_matches_per_lane(self):
        cfg = tiny_config()
        rng = np.random.default_rng(5)
        params = init_attention_params(cfg, rng)
        xb = rng.normal(size=(3, 5, cfg.d_model))
        memb = rng.normal(size=(3, 4, cfg.d_model))
        out_b = attn_forward(Tensor(xb), memb, params, cfg).data
        for b in range(3):
            out_1 = attn_forward(Tensor(xb[b]), memb[b], params, cfg).data
            assert np.allclose(out_b[b], out_1, atol=1e-12)


class TestFeedForward:
    def test_zero_weights_is_exact_identity(self):
        cfg = tiny_config()
        rng = np.random.default_rng(0)
        params = zeroed(init_feed_forward_params(cfg, rng))
        x = Tensor(rng.normal(size=(6, cfg.d_model)))
        assert np.array_equal(ff_forward(x, params, cfg).data, x.data)

    def test_position_wise(self):
        cfg = tiny_config()
        rng = np.random.default_rng(1)
        params = init_feed_forward_params(cfg, rng)
        x = rng.normal(size=(6, cfg.d_model))
        base = ff_forward(Tensor(x), params, cfg).data
        bumped = x.copy()
        bumped[2] += 1.0
        out = ff_forward(Tensor(bumped), params, cfg).data
        changed = np.any(out != base, axis=1)
        assert changed[2]
        assert not changed[[0, 1, 3, 4, 5]].any()

    def test_hand_trace_tiny(self):
        # d_model=2, d_inner=2, hand-set weights
        cfg = ModelConfig(d_model=2, n_head=1, d_head=2, d_inner=2, tgt_len=2,
                          mem_len=0, clamp_len=0, dropout=0.0, vocab_size=3,
                          n_layers=1)
        params = init_feed_forward_params(cfg, np.random.default_rng(0))
        params.w1.data[...] = [[1.0, -1.0], [0.0, 1.0]]
        params.b1.data[...] = [0.5, 0.0]
        params.w2.data[...] = [[2.0, 0.0], [1.0, 1.0]]
        params.b2.data[...] = [0.0, -1.0]
        params.ln_gain.data[...] = 1.0
        params.ln_bias.data[...] = 0.0
        x = np.array([[3.0, 1.0]])
        # layer norm of [3,1]: mean 2, var 1 -> [1,-1] (eps tiny)
        h = np.array([[1.0, -1.0]])
        h = (x - x.mean()) / np.sqrt(x.var() + 1e-5)
        a = np.maximum(h @ params.w1.data + params.b1.data, 0.0)
        expected = x + a @ params.w2.data + params.b2.data
        y = ff_forward(Tensor(x), params, cfg)
        assert np.allclose(y.data, expected, atol=1e-12)


class TestIdentity:
    def test_identity_is_same_object(self):
        x = Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
        assert identity_forward(x) is x

    def test_identity_grad_is_ones(self):
        x = Tensor(np.arange(4.0), requires_grad=True)
        T.tsum(identity_forward(x)).backward()
        assert np.array_equal(x.grad, np.ones(4))

    def test_identity_composition(self):
        x = Tensor(np.ones(3))
        assert identity_forward(identity_forward(x)) is x


class TestMemory:
    def test_mem_len_zero_always_empty(self):
        assert update_memory(None, np.ones((3, 4)), 0) is None

    def test_fill_from_empty(self):
        new = np.arange(12.0).reshape(3, 4)
        mem = update_memory(None, new, 5)
        assert np.array_equal(mem, new)

    def test_sliding_window(self):
        old = np.arange(16.0).reshape(4, 4)  # rows 0..3
        new = np.arange(100.0, 112.0).reshape(3, 4)  # rows n0..n2
        mem = update_memory(old, new, 5)
        expected = np.concatenate([old[2:], new])
        assert np.array_equal(mem, expected)

    def test_memory_is_detached_copy(self):
        x = Tensor(np.ones((2, 3)), requires_grad=True)
        mem = update_memory(None, x, 4)
        x.data[...] = 7.0
        assert np.all(mem == 1.0)

    def test_two_segment_gradient_is_zero_through_memory(self):
        cfg = tiny_config()
        rng = np.random.default_rng(8)
        params = init_attention_params(cfg, rng)
        seg1 = Tensor(rng.normal(size=(4, cfg.d_model)), requires_grad=True)
        state = MemoryState(1, cfg.mem_len)
        state.update_layer(0, seg1.data)
        seg2 = Tensor(rng.normal(size=(4, cfg.d_model)), requires_grad=True)
        out = attn_forward(seg2, state.layer(0), params, cfg)
        T.tsum(out).backward()
        assert seg1.grad is None  # no path at all
        assert seg2.grad is not None
