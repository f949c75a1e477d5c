"""NN blocks: shapes, layer norm statistics, dropout, attention bias."""
from __future__ import annotations

import numpy as np
import pytest

from ms2metgan.numkit import (
    AttentionBlock,
    DenseLayer,
    LayerNorm,
    Prng,
    Tensor,
    dropout,
    grad_check,
    layer_norm_forward,
    linear_forward,
    multihead_attention,
    tanh,
    uniform_init,
)


def test_linear_forward_matches_affine_oracle():
    layer = DenseLayer(weight=Tensor([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]), bias=Tensor([0.5, -0.5, 0.0]))
    out = linear_forward(layer, Tensor([[1.0, 1.0]]))
    np.testing.assert_allclose(out.data, [[3.5, 6.5, 11.0]])


def test_uniform_init_bounds_follow_fan_in():
    prng = Prng(3)
    t = uniform_init(prng, (50, 16), fan_in=16)
    assert np.all(np.abs(t.data) <= 0.25)
    assert np.abs(t.data).max() > 0.2


def test_layer_norm_population_statistics():
    ln = LayerNorm.create(4, eps=0.0)
    x = Tensor([[2.0, 4.0, 6.0, 8.0]])
    out = layer_norm_forward(ln, x).data
    # population variance of [2,4,6,8] is 5, not the n-1 estimate 20/3
    expected = (np.array([2.0, 4.0, 6.0, 8.0]) - 5.0) / np.sqrt(5.0)
    np.testing.assert_allclose(out, expected[None, :], atol=1e-12)


def test_layer_norm_gradients():
    prng = Prng(11)
    ln = LayerNorm.create(6)
    x = Tensor(prng.uniform((3, 6), -2, 2))

    def loss():
        out = layer_norm_forward(ln, x)
        return (out * out).mean()

    assert grad_check(loss, [ln.gamma, ln.beta], h=1e-5) < 1e-6


def test_dropout_identity_when_not_training():
    x = Tensor(np.ones((4, 4)))
    out = dropout(x, 0.5, Prng(1), training=False)
    assert out is x


def test_dropout_scales_kept_units():
    x = Tensor(np.ones((200, 200)))
    out = dropout(x, 0.25, Prng(9), training=True).data
    kept = out > 0
    assert 0.70 < kept.mean() < 0.80
    np.testing.assert_allclose(out[kept], 1.0 / 0.75)


def test_attention_preserves_shape_batched_and_flat():
    prng = Prng(5)
    block = AttentionBlock.create(prng, dim=8, heads=2)
    flat = multihead_attention(block, Tensor(prng.uniform((5, 8), -1, 1)))
    assert flat.shape == (5, 8)
    batched = multihead_attention(block, Tensor(prng.uniform((3, 5, 8), -1, 1)))
    assert batched.shape == (3, 5, 8)


def test_attention_bias_shifts_weights():
    prng = Prng(6)
    block = AttentionBlock.create(prng, dim=4, heads=1)
    x = Tensor(prng.uniform((3, 4), -1, 1))
    base = multihead_attention(block, x).data
    bias = np.zeros((1, 3, 3))
    bias[:, :, 0] = 50.0  # force all attention onto token 0
    biased = multihead_attention(block, x, bias=Tensor(bias)).data
    assert not np.allclose(base, biased)


def test_attention_rejects_indivisible_heads():
    with pytest.raises(ValueError):
        AttentionBlock.create(Prng(0), dim=6, heads=4)


def test_attention_block_gradients():
    prng = Prng(13)
    block = AttentionBlock.create(prng, dim=6, heads=2)
    x = Tensor(prng.uniform((4, 6), -1, 1))

    def loss():
        out = multihead_attention(block, x)
        return (out * out).mean()

    params = list(block.params("blk").values())
    assert grad_check(loss, params, h=1e-3, order=4) < 1e-4


def test_single_token_attention_is_v_projection_plus_residual_path():
    # softmax over one token is exactly [1.0], so attention output before
    # the residual equals that token's V projection through the output map
    prng = Prng(21)
    block = AttentionBlock.create(prng, dim=4, heads=2)
    x = Tensor(prng.uniform((1, 4), -1, 1))
    v = linear_forward(block.wv, x)
    merged = linear_forward(block.wo, v)
    expected = layer_norm_forward(block.ln1, x + merged)
    ff = linear_forward(block.ff2, tanh(linear_forward(block.ff1, expected)))
    expected = layer_norm_forward(block.ln2, expected + ff)
    np.testing.assert_allclose(
        multihead_attention(block, x).data, expected.data, atol=1e-12
    )


def test_equal_tokens_attend_identically():
    prng = Prng(22)
    block = AttentionBlock.create(prng, dim=6, heads=3)
    row = prng.uniform((6,), -1, 1)
    x = Tensor(np.stack([row, row, row]))
    out = multihead_attention(block, x).data
    np.testing.assert_allclose(out[0], out[1], atol=1e-12)
    np.testing.assert_allclose(out[1], out[2], atol=1e-12)


def test_dropout_rejects_p_of_one():
    with pytest.raises(ValueError):
        dropout(Tensor(np.ones(3)), 1.0, Prng(0), training=True)
