import math

import numpy as np
import pytest

from vntpp import autodiff as ad
from vntpp.autodiff import Tensor
from vntpp.encoder import (
    EncoderConfig,
    attention_mask,
    causal_self_attention,
    embed_events,
    encode,
    init_encoder_params,
    temporal_encoding,
)
from vntpp.errors import ShapeError

SMALL = EncoderConfig(D=8, H=2, d_k=3, d_v=5, n_layers=2, dropout=0.1, d_ff=16)


def small_params(cfg=SMALL, seed=0):
    return init_encoder_params(cfg, np.random.default_rng(seed))


def rand_x(B, P, D, seed=1):
    return np.random.default_rng(seed).normal(size=(B, P, D))


def test_temporal_encoding_values():
    pe0 = temporal_encoding(0.0, 6)
    np.testing.assert_array_equal(pe0, [0, 1, 0, 1, 0, 1])
    assert temporal_encoding(1.0, 4)[0] == pytest.approx(0.841471, abs=1e-6)
    # odd index l uses the exponent (l - 1) / D
    assert temporal_encoding(2.0, 4)[3] == pytest.approx(math.cos(2.0 / 10000 ** (2 / 4)), rel=1e-14)
    big = temporal_encoding(np.linspace(0, 1e4, 101), 16)
    assert big.shape == (101, 16) and np.all(np.abs(big) <= 1.0)


def test_embed_events():
    types = np.array([[0, 1, 0, 3]])
    times = np.array([[0.5, 1.0, 2.5, 0.0]])
    zero = embed_events(types, times, Tensor(np.zeros((4, 6)))).data
    np.testing.assert_allclose(zero, temporal_encoding(times, 6))
    U = Tensor(np.random.default_rng(0).normal(size=(4, 6)))
    out = embed_events(types, times, U).data
    np.testing.assert_allclose(out[0, 2] - out[0, 0], temporal_encoding(2.5, 6) - temporal_encoding(0.5, 6),
                               atol=1e-14)
    # padding slot: row K plus PE(0)
    np.testing.assert_allclose(out[0, 3], U.data[3] + temporal_encoding(0.0, 6))
    with pytest.raises(IndexError):
        embed_events(np.array([[4]]), np.array([[0.0]]), U)


def test_single_position_attention_is_value_projection():
    p = small_params()
    x = rand_x(2, 1, SMALL.D)
    out = causal_self_attention(Tensor(x), attention_mask(np.ones((2, 1), bool)), p, "enc.0", SMALL).data
    expect = (x @ p["enc.0.wv"].data) @ p["enc.0.wo"].data
    np.testing.assert_allclose(out, expect, rtol=1e-12)


def test_constant_logits_give_uniform_causal_average():
    p = small_params()
    p["enc.0.wq"].data[:] = 0.0
    x = rand_x(1, 5, SMALL.D)
    out = causal_self_attention(Tensor(x), attention_mask(np.ones((1, 5), bool)), p, "enc.0", SMALL).data
    v = x @ p["enc.0.wv"].data
    prefix_mean = np.cumsum(v, axis=1) / np.arange(1, 6)[None, :, None]
    np.testing.assert_allclose(out, prefix_mean @ p["enc.0.wo"].data, rtol=1e-10, atol=1e-12)


def test_attention_shape_error():
    with pytest.raises(ShapeError):
        causal_self_attention(Tensor(np.zeros((1, 3, 7))), attention_mask(np.ones((1, 3), bool)), small_params(),
                              "enc.0", SMALL)


@pytest.mark.parametrize("j", [0, 2, 4])
def test_causality_exact(j):
    p = small_params()
    x = rand_x(2, 6, SMALL.D)
    mask = np.ones((2, 6), bool)
    base = encode(Tensor(x), mask, p, SMALL).data
    x2 = x.copy()
    x2[:, j + 1:] += np.random.default_rng(9).normal(size=x2[:, j + 1:].shape) * 5
    pert = encode(Tensor(x2), mask, p, SMALL).data
    np.testing.assert_array_equal(base[:, : j + 1], pert[:, : j + 1])
    assert not np.allclose(base[:, j + 1:], pert[:, j + 1:])


def test_batch_permutation_and_padding_invariance():
    p = small_params()
    x = rand_x(3, 4, SMALL.D)
    mask = np.array([[1, 1, 1, 1], [1, 1, 0, 0], [1, 1, 1, 0]], bool)
    out = encode(Tensor(x), mask, p, SMALL).data
    perm = [2, 0, 1]
    np.testing.assert_allclose(encode(Tensor(x[perm]), mask[perm], p, SMALL).data, out[perm], rtol=0, atol=1e-14)
    # padded positions are zero; extra padded columns leave real outputs alone
    assert np.all(out[1, 2:] == 0) and np.all(out[2, 3] == 0)
    xp = np.concatenate([x, rand_x(3, 3, SMALL.D, seed=5)], axis=1)
    mp = np.concatenate([mask, np.zeros((3, 3), bool)], axis=1)
    outp = encode(Tensor(xp), mp, p, SMALL).data
    np.testing.assert_allclose(outp[:, :4][mask], out[mask], rtol=0, atol=1e-14)


def test_eval_deterministic_train_stochastic():
    p = small_params()
    x = Tensor(rand_x(2, 5, SMALL.D))
    mask = np.ones((2, 5), bool)
    np.testing.assert_array_equal(encode(x, mask, p, SMALL).data, encode(x, mask, p, SMALL).data)
    a = encode(x, mask, p, SMALL, train=True, rng=np.random.default_rng(0)).data
    b = encode(x, mask, p, SMALL, train=True, rng=np.random.default_rng(1)).data
    assert not np.allclose(a, b)
    with pytest.raises(ValueError):
        encode(x, mask, p, SMALL, train=True)


def test_paper_config_shape():
    cfg = EncoderConfig()
    assert (cfg.D, cfg.H, cfg.d_k, cfg.d_v, cfg.n_layers, cfg.dropout, cfg.d_ff) == (64, 4, 16, 16, 2, 0.1, 256)
    p = init_encoder_params(cfg, np.random.default_rng(0))
    out = encode(Tensor(rand_x(3, 7, 64)), np.ones((3, 7), bool), p, cfg)
    assert out.shape == (3, 7, 64)


def test_config_validation():
    with pytest.raises(ValueError):
        EncoderConfig(D=0)
    with pytest.raises(ValueError):
        EncoderConfig(dropout=1.0)


def test_encoder_gradients():
    cfg = EncoderConfig(D=4, H=2, d_k=2, d_v=3, n_layers=1, dropout=0.0, d_ff=6)
    p = init_encoder_params(cfg, np.random.default_rng(3))
    x = Tensor(rand_x(2, 3, 4), requires_grad=True)
    mask = np.array([[1, 1, 1], [1, 1, 0]], bool)
    R = np.random.default_rng(4).normal(size=(2, 3, 4))
    params = dict(p, x=x)
    rep = ad.grad_check(lambda: (encode(x, mask, p, cfg) * R).sum(), params, tol=1e-4)
    assert rep.passed, str(rep)
