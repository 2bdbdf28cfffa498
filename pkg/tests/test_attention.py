import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import oracles
from pihot.attention import (DepthGuidedAttention, ObjectContactAttention, feature_attention,
                             tokens, untokens)


def _rand(rng, *shape):
    return rng.standard_normal(shape)


def _rel_err(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-12))


def test_single_token():
    x = np.array([[1.0, 0.0]])
    np.testing.assert_array_equal(feature_attention(x, x, x), [[1.0, 0.0]])


def test_identical_keys_average_values():
    rng = np.random.default_rng(0)
    q = _rand(rng, 4, 3)
    k = np.tile(_rand(rng, 1, 3), (5, 1))
    v = _rand(rng, 5, 3)
    out = feature_attention(q, k, v)
    np.testing.assert_allclose(out, np.tile(v.mean(axis=0), (4, 1)), rtol=1e-12, atol=1e-14)


def test_matches_loop_oracle():
    rng = np.random.default_rng(1)
    q, k, v = _rand(rng, 6, 4), _rand(rng, 5, 4), _rand(rng, 5, 4)
    expected = oracles.attention(q.tolist(), k.tolist(), v.tolist())
    assert _rel_err(feature_attention(q, k, v), expected) < 1e-10


def test_value_width_may_differ():
    rng = np.random.default_rng(2)
    q, k, v = _rand(rng, 3, 2), _rand(rng, 4, 2), _rand(rng, 4, 5)
    out = feature_attention(q, k, v)
    assert out.shape == (3, 5)
    assert _rel_err(out, oracles.attention(q.tolist(), k.tolist(), v.tolist())) < 1e-10


@pytest.mark.parametrize("shapes", [((2, 3), (4, 2), (4, 3)), ((2, 3), (4, 3), (5, 3))])
def test_shape_errors(shapes):
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError):
        feature_attention(*(rng.random(s) for s in shapes))


def test_weight_rows_sum_to_one():
    rng = np.random.default_rng(3)
    q, k = _rand(rng, 7, 4) * 3, _rand(rng, 6, 4) * 3
    weights = feature_attention(q, k, np.eye(6))
    np.testing.assert_allclose(weights.sum(axis=1), 1.0, atol=1e-12)
    assert (weights >= 0).all()


token_sets = st.tuples(st.integers(1, 5), st.integers(1, 6), st.integers(1, 4)).flatmap(
    lambda s: st.tuples(
        arrays(np.float64, (s[0], s[2]), elements=st.floats(-3, 3)),
        arrays(np.float64, (s[1], s[2]), elements=st.floats(-3, 3)),
        arrays(np.float64, (s[1], s[2]), elements=st.floats(-3, 3)),
    ))


@given(token_sets)
def test_rows_are_convex_combinations(qkv):
    q, k, v = qkv
    out = feature_attention(q, k, v)
    assert (out >= v.min(axis=0) - 1e-12).all()
    assert (out <= v.max(axis=0) + 1e-12).all()


@given(token_sets, st.randoms(use_true_random=False))
@settings(max_examples=50)
def test_key_value_permutation_invariance(qkv, rnd):
    q, k, v = qkv
    perm = list(range(k.shape[0]))
    rnd.shuffle(perm)
    np.testing.assert_allclose(feature_attention(q, k[perm], v[perm]),
                               feature_attention(q, k, v), rtol=1e-10, atol=1e-12)


@given(token_sets, arrays(np.float64, 4, elements=st.floats(-2, 2)))
@settings(max_examples=50)
def test_logit_shift_invariance(qkv, u):
    q, k, v = qkv
    # adding the same vector to every key shifts row i of the logits by q_i . u
    shifted = k + u[: k.shape[1]]
    np.testing.assert_allclose(feature_attention(q, shifted, v), feature_attention(q, k, v),
                               rtol=1e-9, atol=1e-10)


def test_hand_backward_matches_finite_differences():
    rng = np.random.default_rng(4)
    q0, k0, v0 = _rand(rng, 4, 3), _rand(rng, 4, 3), _rand(rng, 4, 3)
    probe = _rand(rng, 4, 3)  # random linear read-out makes the output scalar

    q, k, v = (torch.tensor(a, requires_grad=True) for a in (q0, k0, v0))
    (feature_attention(q, k, v) * torch.from_numpy(probe)).sum().backward()

    def scalar(which):
        def f(flat):
            args = [q0, k0, v0]
            args[which] = np.array(flat).reshape(4, 3)
            return float((np.array(oracles.attention(*(a.tolist() for a in args))) * probe).sum())
        return f

    for which, t in enumerate((q, k, v)):
        num = oracles.central_difference(scalar(which), [q0, k0, v0][which].ravel().tolist(), 1e-5)
        ana = t.grad.numpy().ravel()
        assert _rel_err(ana, num) < 1e-4 or np.max(np.abs(ana - num)) < 1e-9


def test_autograd_gradcheck():
    rng = np.random.default_rng(5)
    args = [torch.tensor(_rand(rng, 2, 5, 3), requires_grad=True) for _ in range(3)]
    assert torch.autograd.gradcheck(feature_attention, args)


def test_tokens_roundtrip():
    x = torch.arange(2 * 3 * 4 * 5, dtype=torch.float64).reshape(2, 3, 4, 5)
    t = tokens(x)
    assert t.shape == (2, 20, 3)
    assert t[0, 6].tolist() == x[0, :, 1, 1].tolist()
    assert torch.equal(untokens(t, 4, 5), x)


def _conv_params(conv):
    w = conv.weight.detach().double()[:, :, 0, 0].tolist()
    if conv.bias is None:
        return w, [0.0] * len(w)
    return w, conv.bias.detach().double().tolist()


def _staged_oracle(block, q_src, kv_src):
    """Projection oracle then attention oracle, image by image."""
    qw, qb = _conv_params(block.query)
    kw, kb = _conv_params(block.key)
    vw, vb = _conv_params(block.value)
    outs = []
    for qs, ks in zip(q_src.tolist(), kv_src.tolist()):
        q = oracles.flatten_tokens(oracles.conv1x1(qs, qw, qb))
        k = oracles.flatten_tokens(oracles.conv1x1(ks, kw, kb))
        v = oracles.flatten_tokens(oracles.conv1x1(ks, vw, vb))
        outs.append(oracles.attention(q, k, v))
    return np.array(outs)


def _randomize_biases(block, seed):
    g = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for conv in (block.query, block.value):
            conv.bias.copy_(torch.randn(conv.bias.shape, generator=g, dtype=conv.bias.dtype))


def test_ipi_matches_staged_oracle():
    torch.manual_seed(0)
    block = ObjectContactAttention(8).double()
    _randomize_biases(block, 1)
    x_o = torch.randn(2, 8, 4, 4, dtype=torch.float64)
    x_c = torch.randn(2, 8, 4, 4, dtype=torch.float64)
    got = tokens(block(x_o, x_c)).detach().numpy()
    assert _rel_err(got, _staged_oracle(block, x_o, x_c)) < 1e-10


def test_ipi_attn_dim_option():
    block = ObjectContactAttention(8, attn_dim=3)
    assert block.query.out_channels == 3 and block.value.out_channels == 8
    assert block(torch.randn(1, 8, 2, 2), torch.randn(1, 8, 2, 2)).shape == (1, 8, 2, 2)


def test_ipi_constant_contact_features():
    torch.manual_seed(1)
    block = ObjectContactAttention(6).double()
    x_o = torch.randn(1, 6, 3, 5, dtype=torch.float64)
    x_c = torch.randn(1, 6, 1, 1, dtype=torch.float64).expand(1, 6, 3, 5)
    out = block(x_o, x_c)
    torch.testing.assert_close(out, out[..., :1, :1].expand_as(out), rtol=1e-12, atol=1e-12)


def test_ipi_single_token_is_value_projection():
    torch.manual_seed(2)
    block = ObjectContactAttention(5).double()
    x_o = torch.randn(3, 5, 1, 1, dtype=torch.float64)
    x_c = torch.randn(3, 5, 1, 1, dtype=torch.float64)
    torch.testing.assert_close(block(x_o, x_c), block.value(x_c), rtol=1e-12, atol=1e-12)


def test_ipi_shape_mismatch():
    block = ObjectContactAttention(4)
    with pytest.raises(ValueError):
        block(torch.zeros(1, 4, 2, 2), torch.zeros(1, 4, 2, 3))


def test_idsi_matches_staged_oracle():
    torch.manual_seed(3)
    block = DepthGuidedAttention(8).double()
    _randomize_biases(block, 2)
    d_s = torch.rand(2, 1, 4, 4, dtype=torch.float64)
    o_a = torch.randn(2, 8, 4, 4, dtype=torch.float64)
    got = tokens(block(d_s, o_a)).detach().numpy()
    assert _rel_err(got, _staged_oracle(block, d_s, o_a)) < 1e-10


def test_idsi_constant_and_single_token():
    torch.manual_seed(4)
    block = DepthGuidedAttention(4).double()
    d_s = torch.rand(1, 1, 3, 3, dtype=torch.float64)
    o_a = torch.randn(1, 4, 1, 1, dtype=torch.float64).expand(1, 4, 3, 3)
    out = block(d_s, o_a)
    torch.testing.assert_close(out, out[..., :1, :1].expand_as(out), rtol=1e-12, atol=1e-12)
    one = torch.randn(2, 4, 1, 1, dtype=torch.float64)
    torch.testing.assert_close(block(torch.rand(2, 1, 1, 1, dtype=torch.float64), one),
                               block.value(one), rtol=1e-12, atol=1e-12)


def test_idsi_accepts_3d_map_and_rejects_mismatch():
    block = DepthGuidedAttention(4)
    assert block(torch.rand(1, 3, 3), torch.randn(1, 4, 3, 3)).shape == (1, 4, 3, 3)
    with pytest.raises(ValueError):
        block(torch.rand(1, 1, 2, 3), torch.randn(1, 4, 3, 3))
