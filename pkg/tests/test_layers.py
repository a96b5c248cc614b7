from __future__ import annotations

import numpy as np
import pytest
import torch
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import attention_loop, ffn_loop, layer_norm_loop, batch_norm_loop, multihead_loop
from ltsf_lab.layers import (BatchNorm, FeedForward, MultiHeadAttention, RevIN, batch_norm, build_mask, ffn,
                             layer_norm, mhca, mhsa, patchify, revin_denormalize, revin_normalize,
                             scaled_dot_attention, unpatchify)

F64 = torch.float64
finite = st.floats(-50, 50, allow_nan=False, allow_infinity=False)


def t(a):
    return torch.as_tensor(np.asarray(a, dtype=np.float64))


# --- patching ----------------------------------------------------------------------


def test_patchify_examples():
    assert patchify(t([1, 2, 3, 4]), 2).tolist() == [[1, 2], [3, 4]]
    assert patchify(torch.zeros(512), 16).shape == (32, 16)
    assert patchify(torch.zeros(120), 6).shape == (20, 6)
    with pytest.raises(ValueError):
        patchify(torch.zeros(10), 4)


@given(arrays(np.float64, st.integers(1, 8).map(lambda k: 3 * k), elements=finite))
def test_unpatchify_inverts_patchify(x):
    assert torch.equal(unpatchify(patchify(t(x), 3)), t(x))


# --- masks -------------------------------------------------------------------------


def test_mask_examples():
    assert build_mask("bi", 3, 0).all()
    assert torch.equal(build_mask("uni", 0, 3), torch.tril(torch.ones(3, 3, dtype=torch.bool)))
    hybrid = build_mask("hybrid", 2, 2).int().tolist()
    assert hybrid == [[1, 1, 0, 0], [1, 1, 0, 0], [1, 1, 1, 0], [1, 1, 1, 1]]
    with pytest.raises(ValueError):
        build_mask("uni", 0, 0)
    with pytest.raises(ValueError):
        build_mask("sideways", 1, 1)


@given(st.sampled_from(["bi", "uni", "hybrid"]), st.integers(0, 6), st.integers(0, 6))
def test_mask_invariants(kind, p_lb, p_fc):
    if p_lb + p_fc == 0:
        return
    m = build_mask(kind, p_lb, p_fc).numpy()
    assert m.any(axis=1).all()
    for q in range(p_lb + p_fc):
        for k in range(p_lb + p_fc):
            expect = {"bi": True, "uni": k <= q,
                      "hybrid": k < p_lb if q < p_lb else k <= q}[kind]
            assert m[q, k] == expect


# --- attention ---------------------------------------------------------------------


def test_attention_trivial_cases():
    v = t([[3.0, -1.0]])
    out, w = scaled_dot_attention(t([[0.3, 0.2]]), t([[5.0, 1.0]]), v)
    assert torch.equal(out, v) and w.item() == 1.0
    out, _ = scaled_dot_attention(t([[1.0, 0.0]]), t([[0.0, 1.0], [0.0, -1.0]]), t([[2.0, 4.0], [6.0, 0.0]]))
    assert torch.allclose(out, t([[4.0, 2.0]]))


def test_attention_rejects_fully_masked_row():
    mask = torch.tensor([[True, False], [False, False]])
    with pytest.raises(ValueError):
        scaled_dot_attention(torch.ones(2, 2), torch.ones(2, 2), torch.ones(2, 2), mask)


@given(st.integers(1, 5), st.integers(1, 4), st.sampled_from(["bi", "uni", "hybrid"]), st.integers(0, 2**31))
def test_attention_matches_loop_and_rows_sum_to_one(p, dk, kind, seed):
    rng = np.random.default_rng(seed)
    q, k, v = (rng.normal(size=(p, dk)) for _ in range(3))
    mask = build_mask(kind, p // 2, p - p // 2)
    out, w = scaled_dot_attention(t(q), t(k), t(v), mask)
    assert np.abs(out.numpy() - attention_loop(q, k, v, mask.numpy())).max() < 1e-6
    assert np.abs(w.sum(-1).numpy() - 1).max() < 1e-9
    assert (w[~mask] == 0).all()


def test_mhsa_single_head_is_attention_then_output_projection():
    torch.manual_seed(0)
    attn = MultiHeadAttention(4, 1).to(F64)
    x = torch.randn(1, 5, 4, dtype=F64)
    mask = build_mask("uni", 0, 5)
    inner, _ = scaled_dot_attention(attn.w_q(x), attn.w_k(x), attn.w_v(x), mask)
    assert torch.allclose(mhsa(x, mask, attn), attn.w_o(inner), atol=1e-12)


def test_mhsa_identical_heads_match_duplicated_single_head():
    torch.manual_seed(1)
    d = 4
    one = MultiHeadAttention(d // 2, 1).to(F64)
    two = MultiHeadAttention(d, 2).to(F64)
    x_half = torch.randn(1, 4, d // 2, dtype=F64)
    x = torch.cat([x_half, torch.zeros_like(x_half)], dim=-1)
    with torch.no_grad():
        for name in ("w_q", "w_k", "w_v"):
            w = getattr(one, name).weight
            block = torch.zeros(d, d, dtype=F64)
            block[:2, :2] = w
            block[2:, :2] = w  # second head computes the same projection from the same inputs
            getattr(two, name).weight.copy_(block)
        two.w_o.weight.copy_(torch.eye(d, dtype=F64))
    mask = build_mask("bi", 4, 0)
    q, k, v = one.w_q(x_half), one.w_k(x_half), one.w_v(x_half)
    single, _ = scaled_dot_attention(q, k, v, mask)
    assert torch.allclose(mhsa(x, mask, two), torch.cat([single, single], dim=-1), atol=1e-12)


def test_mhsa_and_mhca_match_loops():
    torch.manual_seed(2)
    attn = MultiHeadAttention(6, 3).to(F64)
    w = [m.weight.detach().numpy() for m in (attn.w_q, attn.w_k, attn.w_v, attn.w_o)]
    x = np.random.default_rng(0).normal(size=(4, 6))
    mem = np.random.default_rng(1).normal(size=(7, 6))
    mask = build_mask("hybrid", 2, 2)
    assert np.abs(mhsa(t(x)[None], mask, attn)[0].detach().numpy()
                  - multihead_loop(x, x, *w, 3, mask.numpy())).max() < 1e-6
    assert np.abs(mhca(t(x)[None], t(mem)[None], attn)[0].detach().numpy()
                  - multihead_loop(x, mem, *w, 3)).max() < 1e-6


def test_mhca_trivial_cases():
    torch.manual_seed(3)
    attn = MultiHeadAttention(4, 2).to(F64)
    dec = torch.randn(1, 3, 4, dtype=F64)
    enc = torch.randn(1, 1, 4, dtype=F64)
    expected = attn.w_o(attn.w_v(enc)).expand(1, 3, 4)
    assert torch.allclose(mhca(dec, enc, attn), expected, atol=1e-12)
    assert torch.equal(mhca(dec, dec, attn), mhsa(dec, build_mask("bi", 3, 0), attn))
    with pytest.raises(ValueError):
        mhca(dec, torch.randn(1, 2, 5, dtype=F64), attn)
    with pytest.raises(ValueError):
        MultiHeadAttention(5, 2)


# --- feed-forward ------------------------------------------------------------------


def test_ffn_examples():
    ff = FeedForward(3, 3).to(F64)
    with torch.no_grad():
        for p in ff.parameters():
            p.zero_()
    x = torch.rand(2, 3, dtype=F64) + 0.1
    assert torch.equal(ffn(x, ff), torch.zeros_like(x))
    with torch.no_grad():
        ff.lin1.weight.copy_(torch.eye(3))
        ff.lin2.weight.copy_(torch.eye(3))
    assert torch.equal(ffn(x, ff), x)


@given(st.integers(0, 2**31))
def test_ffn_matches_loop(seed):
    torch.manual_seed(seed % 1000)
    ff = FeedForward(4, 6).to(F64)
    with torch.no_grad():
        ff.lin1.bias.normal_()
        ff.lin2.bias.normal_()
    x = np.random.default_rng(seed).normal(size=(3, 4))
    ref = ffn_loop(x, *(p.detach().numpy() for p in (ff.lin1.weight, ff.lin1.bias, ff.lin2.weight, ff.lin2.bias)))
    assert np.abs(ffn(t(x), ff).detach().numpy() - ref).max() < 1e-9


# --- norms -------------------------------------------------------------------------


def test_layer_norm_examples():
    one, zero = torch.ones(4, dtype=F64), torch.zeros(4, dtype=F64)
    assert torch.equal(layer_norm(t([[2, 2, 2, 2]]), one, zero), torch.zeros(1, 4, dtype=F64))
    x = t([[-1.0, 1.0, -1.0, 1.0]])
    assert torch.allclose(layer_norm(x, one, zero), x, atol=1e-6)


@given(st.integers(0, 2**31), st.floats(0.01, 100))
def test_norm_statistics(seed, scale):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(3, 4, 5)) * scale + rng.normal() * 10
    one, zero = torch.ones(5, dtype=F64), torch.zeros(5, dtype=F64)
    ln = layer_norm(t(x), one, zero).numpy()
    assert np.abs(ln.mean(-1)).max() < 1e-6 and np.abs(ln.var(-1) - 1).max() < 1e-4
    bn = batch_norm(t(x), one, zero, training=True).numpy()
    assert np.abs(bn.mean((0, 1))).max() < 1e-6 and np.abs(bn.var((0, 1)) - 1).max() < 1e-4
    g, b = rng.normal(size=5), rng.normal(size=5)
    assert np.abs(layer_norm(t(x), t(g), t(b)).numpy() - layer_norm_loop(x, g, b)).max() < 1e-6
    assert np.abs(batch_norm(t(x), t(g), t(b)).numpy() - batch_norm_loop(x, g, b)).max() < 1e-6


def test_batch_norm_modes():
    bn = BatchNorm(3).to(F64)
    x = torch.randn(4, 5, 3, dtype=F64) * 2 + 1
    bn.train()
    bn(x)
    assert torch.allclose(bn.running_mean, 0.1 * x.mean((0, 1)))
    assert torch.allclose(bn.running_var, 0.9 + 0.1 * x.var((0, 1), unbiased=False))
    with pytest.raises(ValueError):
        bn(x[:1])
    bn.eval()
    y = bn(x[:1])  # batch of one is fine with running statistics
    expected = (x[:1] - bn.running_mean) / bn.running_var.sqrt()
    assert torch.allclose(y, expected)
    with pytest.raises(ValueError):
        batch_norm(x, torch.ones(3), torch.zeros(3), training=False)


# --- RevIN -------------------------------------------------------------------------


def test_revin_example():
    x = t([[1.0, 2.0, 3.0]])
    y, stats = revin_normalize(x)
    assert abs(y.mean().item()) < 1e-15
    assert torch.allclose(revin_denormalize(y, stats), x, atol=1e-9)


@given(arrays(np.float64, (2, 16), elements=finite), st.floats(0.1, 5), st.floats(-3, 3))
def test_revin_round_trip(x, gamma, beta):
    rev = RevIN(affine=True).to(F64)
    with torch.no_grad():
        rev.gamma.fill_(gamma)
        rev.beta.fill_(beta)
    y, stats = rev.normalize(t(x))
    assert np.abs(rev.denormalize(y, stats).detach().numpy() - x).max() < 1e-9


def test_revin_constant_instance_is_floored_and_stats_detached():
    x = torch.full((1, 8), 5.0, dtype=F64, requires_grad=True)
    y, (mean, std) = revin_normalize(x)
    assert torch.equal(y.detach(), torch.zeros(1, 8, dtype=F64))
    assert std.item() == 1e-8 and not mean.requires_grad
