import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import toy_dataset
from vntpp.autodiff import Tensor
from vntpp.data import make_batch
from vntpp.encoder import EncoderConfig
from vntpp.errors import ShapeError, ValidationError
from vntpp.model import (
    VNTPP,
    ForwardOutput,
    LatentPosterior,
    ModelConfig,
    intensity,
    intensity_np,
    kl_divergence,
    reconstruction_terms,
    sample_latent,
)

TINY = EncoderConfig(D=8, H=2, d_k=4, d_v=4, n_layers=1, dropout=0.1, d_ff=16)


def tiny_model(variant="exponential", J=3, K=3, seed=0):
    return VNTPP(ModelConfig(K=K, variant=variant, J=J, encoder=TINY, seed=seed))


def post_of(mu, var):
    mu = np.atleast_1d(np.asarray(mu, float))
    return LatentPosterior(Tensor(mu.reshape(1, 1, -1)), Tensor(np.log(np.asarray(var, float)).reshape(1, 1, -1)))


# ----------------------------------------------------------------- posterior
def test_zero_affine_gives_prior_and_zero_kl():
    m = tiny_model()
    for k in ("post.w_mu", "post.w_lv"):
        m.params[k].data[:] = 0.0
    batch = make_batch(list(toy_dataset(4)), 3)
    post, mask = m.posterior(batch)
    assert np.all(post.mu.data == 0) and np.all(post.log_var.data == 0)
    np.testing.assert_array_equal(post.sigma, 1.0)
    assert kl_divergence(post, mask) == 0.0


@pytest.mark.parametrize("J", [10, 20, 40])
def test_posterior_shapes(J):
    m = tiny_model(J=J)
    batch = make_batch(list(toy_dataset(5)), 3)
    post, _ = m.posterior(batch)
    assert post.mu.shape == (5, batch.max_len, J) == post.log_var.shape
    ext, _ = m.posterior(batch, extend=True)
    assert ext.mu.shape == (5, batch.max_len + 1, J)


def test_posterior_depends_only_on_earlier_events():
    m = tiny_model()
    ds = list(toy_dataset(1, seed=3))
    s = ds[0]
    full = m.latent_means([s], extend=False)[0]
    for n in range(1, len(s)):
        pre = m.latent_means([s.prefix(n)], extend=True)[0]
        np.testing.assert_allclose(pre, full[: n + 1], rtol=0, atol=1e-12)


# ----------------------------------------------------------------- sampling
def test_sample_latent_modes():
    post = post_of([0.3, -1.0], [0.5, 2.0])
    np.testing.assert_array_equal(sample_latent(post, np.zeros((1, 1, 2))).data, post.mu.data)
    assert sample_latent(post, train=False, rng=np.random.default_rng(0)) is post.mu
    with pytest.raises(ShapeError):
        sample_latent(post, np.zeros((1, 2, 2)))


def test_sample_latent_moments():
    n = 10_000
    post = LatentPosterior(Tensor(np.ones((1, n, 1))), Tensor(np.full((1, n, 1), math.log(4.0))))
    z = sample_latent(post, rng=np.random.default_rng(2024)).data.ravel()
    assert abs(z.mean() - 1.0) < 0.06
    assert abs(z.std() - 2.0) < 0.05


# ----------------------------------------------------------------- intensity heads
def test_intensity_examples():
    head = {"w": np.zeros((2, 3)), "beta": np.zeros(3), "alpha": np.zeros(3)}
    np.testing.assert_allclose(intensity(np.zeros(2), head, 7.0, "linear"), [math.log(2)] * 3, rtol=1e-15)
    head["alpha"] = np.ones(3)
    np.testing.assert_allclose(intensity(np.zeros(2), head, 0.0, "exponential"), [1.313262] * 3, atol=1e-6)


@given(st.floats(-50, 50), st.floats(-5, 5), st.floats(0, 100), st.sampled_from(["linear", "exponential"]))
def test_intensity_positive(base, alpha, dt, variant):
    assert intensity_np(np.array([base]), np.array([alpha]), dt, variant)[0] > 0


@pytest.mark.parametrize("variant", ["linear", "exponential"])
def test_intensity_non_increasing_for_positive_alpha(variant):
    rng = np.random.default_rng(1)
    base, alpha = rng.normal(size=4), rng.uniform(0.1, 3.0, 4)
    lam = intensity_np(base, alpha, np.linspace(0, 20, 500), variant)
    # mathematically non-increasing; allow a few ulps of softplus rounding once exp(-alpha dt) vanishes
    assert np.all(np.diff(lam, axis=0) <= 4 * np.spacing(lam[:-1]))


# ----------------------------------------------------------------- KL
@pytest.mark.parametrize("mu,var,expect", [([0.0], [1.0], 0.0), ([1.0], [1.0], 0.5),
                                           ([0.0], [2.0], 0.5 * (1 - math.log(2)))])
def test_kl_examples(mu, var, expect):
    assert kl_divergence(post_of(mu, var)) == pytest.approx(expect, abs=1e-12)


@given(st.lists(st.tuples(st.floats(-3, 3), st.floats(-3, 3)), min_size=1, max_size=6))
def test_kl_non_negative_and_zero_only_at_prior(pairs):
    mu = np.array([p[0] for p in pairs])
    lv = np.array([p[1] for p in pairs])
    kl = kl_divergence(LatentPosterior(Tensor(mu.reshape(1, 1, -1)), Tensor(lv.reshape(1, 1, -1))))
    assert kl >= 0.0
    if kl < 1e-12:
        assert np.all(np.abs(mu) < 1e-5) and np.all(np.abs(lv) < 1e-5)


def test_kl_respects_mask():
    mu = np.ones((1, 3, 2))
    post = LatentPosterior(Tensor(mu), Tensor(np.zeros((1, 3, 2))))
    assert kl_divergence(post, np.array([[True, True, False]])) == pytest.approx(2.0)


# ----------------------------------------------------------------- reconstruction
def _fake_output(logits, time_pred, gaps, types):
    B, P, K = logits.shape
    mask = np.ones((B, P), bool)
    dummy = Tensor(np.zeros((B, P, 1)))
    return ForwardOutput(LatentPosterior(dummy, dummy), dummy, Tensor(np.zeros((B, P, K))), Tensor(logits),
                         Tensor(time_pred), mask, mask, types, gaps, np.zeros((B, P)))


def test_reconstruction_uniform_logits_and_exact_gaps():
    K, P = 4, 5
    gaps = np.random.default_rng(0).uniform(0.1, 2, (1, P))
    out = _fake_output(np.zeros((1, P, K)), gaps.copy(), gaps, np.zeros((1, P), np.int64))
    val = reconstruction_terms(out, K).data[0]
    assert val == pytest.approx(P * (-math.log(K) - 0.5 * math.log(2 * math.pi)), rel=1e-14)
    off = _fake_output(np.zeros((1, P, K)), gaps + 0.3, gaps, np.zeros((1, P), np.int64))
    assert reconstruction_terms(off, K).data[0] < val


def test_forward_shapes():
    m = tiny_model(K=3)
    batch = make_batch(list(toy_dataset(4)), 3)
    out = m.forward(batch, train=True, rng=np.random.default_rng(0))
    B, L = batch.types.shape
    assert out.type_logits.shape == (B, L, 3) and out.time_pred.shape == (B, L)
    assert out.z.shape == (B, L, 3) and out.base.shape == (B, L, 3)
    np.testing.assert_allclose(out.gaps[batch.mask], np.concatenate([s.gaps() for s in toy_dataset(4)]))
    with pytest.raises(ValueError):
        m.forward(batch, train=True)


def test_eval_forward_deterministic():
    m = tiny_model()
    batch = make_batch(list(toy_dataset(3)), 3)
    a = m.forward(batch)
    b = m.forward(batch, rng=np.random.default_rng(5))
    np.testing.assert_array_equal(a.base.data, b.base.data)
    np.testing.assert_array_equal(a.z.data, a.posterior.mu.data)


def test_intensity_on_grid_is_right_continuous():
    m = tiny_model()
    s = toy_dataset(1, seed=2)[0]
    base = m.head_bases([s])[0]
    lam = m.intensity_on_grid(s, s.times)
    np.testing.assert_allclose(lam, intensity_np(base[1:], m.params["head.alpha"].data, np.zeros(len(s)), "exponential"))


def test_save_load_roundtrip(tmp_path):
    m = tiny_model("linear")
    m.mean_gap = 0.37
    path = m.save(tmp_path / "m.npz")
    m2 = VNTPP.load(path)
    assert m2.cfg == m.cfg and m2.mean_gap == 0.37
    for k in m.params:
        np.testing.assert_array_equal(m.params[k].data, m2.params[k].data)
    assert ModelConfig.from_json(m.cfg.to_json()) == m.cfg


def test_config_validation():
    with pytest.raises(ValidationError):
        ModelConfig(K=2, variant="cubic")
    with pytest.raises(ValidationError):
        ModelConfig(K=0)
