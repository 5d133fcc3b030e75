import math
import zlib

import numpy as np
import pytest

from vntpp import autodiff as ad
from vntpp.autodiff import Tensor
from vntpp.errors import NonFiniteError, NotScalar, ShapeError, ValidationError


def P(x, name=None):
    return Tensor(np.array(x, dtype=float), requires_grad=True, name=name)


# ----------------------------------------------------------------- forward values
def test_forward_examples():
    assert ad.softplus(Tensor(0.0)).item() == pytest.approx(math.log(2), abs=1e-15)
    np.testing.assert_allclose(ad.softmax(Tensor([1.0, 1.0, 1.0])).data, [1 / 3] * 3, rtol=1e-15)
    x = np.arange(6.0).reshape(2, 3)
    np.testing.assert_array_equal((Tensor(x) @ np.eye(3)[:, :2]).data, x[:, :2])
    np.testing.assert_array_equal((Tensor(np.eye(2)) @ x).data, x)
    np.testing.assert_allclose(ad.layer_norm(Tensor(np.full(5, 3.7))).data, np.zeros(5), atol=1e-12)


def test_softplus_is_overflow_safe():
    y = ad.softplus(Tensor([-800.0, 0.0, 800.0])).data
    assert y[0] == 0.0 and y[2] == 800.0


def test_shape_errors_report_both_shapes():
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(4, 2\)"):
        Tensor(np.ones((2, 3))) @ Tensor(np.ones((4, 2)))
    with pytest.raises(ShapeError):
        Tensor(np.ones(3)) + Tensor(np.ones(4))
    with pytest.raises(ShapeError):
        ad.reshape(Tensor(np.ones(6)), (4, 2))


def test_non_finite_fails_fast():
    with pytest.raises(NonFiniteError):
        ad.log(Tensor([-1.0]))
    with ad.check_finite(False):
        assert np.isnan(ad.log(Tensor([-1.0])).data[0])


# ----------------------------------------------------------------- backward
def test_backward_examples():
    w = P([1.0, 2.0, 3.0])
    (w * w).sum().backward()
    np.testing.assert_array_equal(w.grad, [2.0, 4.0, 6.0])
    x = P(0.0)
    ad.softplus(x).backward()
    assert x.grad == pytest.approx(0.5, abs=1e-15)


def test_backward_needs_scalar():
    with pytest.raises(NotScalar):
        ad.backward(P([1.0, 2.0]) * 2.0)


def test_grads_accumulate_until_zeroed_and_are_deterministic():
    w = P([0.3, -1.2])

    def run():
        ad.backward((ad.exp(w) * w).sum())

    run()
    g1 = w.grad.copy()
    run()
    np.testing.assert_allclose(w.grad, 2 * g1, rtol=1e-14)
    w.zero_grad()
    run()
    np.testing.assert_array_equal(w.grad, g1)


def test_tape_cleared_after_backward():
    w = P([1.0])
    loss = (w * 3.0).sum()
    assert len(ad.current_tape().nodes) > 0
    loss.backward()
    assert len(ad.current_tape().nodes) == 0


def test_no_grad_records_nothing():
    w = P([1.0])
    with ad.no_grad():
        y = w * 2.0
    assert not y.requires_grad and len(ad.current_tape().nodes) == 0


# ----------------------------------------------------------------- primitives vs finite differences
def _richardson_grad(f, p, h=1e-3):
    """Central differences at h and h/2 combined by Richardson extrapolation (error O(h^4))."""
    out = np.zeros(p.shape)
    flat, g = p.data.reshape(-1), out.reshape(-1)

    def central(i, step):
        orig = flat[i]
        flat[i] = orig + step
        fp = f().item()
        flat[i] = orig - step
        fm = f().item()
        flat[i] = orig
        return (fp - fm) / (2 * step)

    with ad.no_grad():
        for i in range(flat.size):
            g[i] = (4 * central(i, h / 2) - central(i, h)) / 3
    return out


def _fd_check(build, inputs, rng):
    """Worst relative error between the VJP of a random projection of ``build`` and finite differences."""
    params = [P(v) for v in inputs]
    R = rng.normal(size=build(*params).shape)

    def f():
        return (build(*params) * R).sum()

    ad.current_tape().clear()
    f().backward()
    worst = 0.0
    for p in params:
        analytic = p.grad if p.grad is not None else np.zeros(p.shape)
        worst = max(worst, ad.relative_error(analytic, _richardson_grad(f, p)))
    return worst


def _away_from_zero(x):
    return np.where(np.abs(x) < 1e-2, 0.5, x)


PRIMITIVES = {
    "matmul": (lambda a, b: a @ b, lambda r: [r.normal(size=(2, 3, 4)), r.normal(size=(4, 2))]),
    "matmul_batched": (lambda a, b: a @ b, lambda r: [r.normal(size=(2, 3, 4)), r.normal(size=(2, 4, 3))]),
    "add": (lambda a, b: a + b, lambda r: [r.normal(size=(3, 4)), r.normal(size=(4,))]),
    "mul": (lambda a, b: a * b, lambda r: [r.normal(size=(3, 4)), r.normal(size=(3, 1))]),
    "sub": (lambda a, b: a - b, lambda r: [r.normal(size=(2, 3)), r.normal(size=(2, 3))]),
    "concat": (lambda a, b: ad.concat([a, b], axis=1), lambda r: [r.normal(size=(2, 3)), r.normal(size=(2, 2))]),
    "slice": (lambda a: a[1:, ::2], lambda r: [r.normal(size=(3, 5))]),
    "gather": (lambda a: a[np.array([0, 2, 2])], lambda r: [r.normal(size=(3, 4))]),
    "transpose": (lambda a: a.transpose(2, 0, 1), lambda r: [r.normal(size=(2, 3, 4))]),
    "reshape": (lambda a: a.reshape(3, 4), lambda r: [r.normal(size=(2, 6))]),
    "embedding": (lambda t: ad.embedding_lookup(t, np.array([[0, 2], [2, 1]])), lambda r: [r.normal(size=(3, 4))]),
    "softmax": (ad.softmax, lambda r: [r.normal(size=(3, 5))]),
    "log_softmax": (ad.log_softmax, lambda r: [r.normal(size=(3, 5))]),
    "softplus": (ad.softplus, lambda r: [3 * r.normal(size=(4, 3))]),
    "exp": (ad.exp, lambda r: [r.normal(size=(4, 3))]),
    "log": (ad.log, lambda r: [r.uniform(0.2, 3.0, size=(4, 3))]),
    "relu": (ad.relu, lambda r: [_away_from_zero(r.normal(size=(4, 3)))]),
    "layer_norm": (lambda x, g, b: ad.layer_norm(x, g, b),
                   lambda r: [r.normal(size=(3, 6)), r.normal(size=6), r.normal(size=6)]),
    "dropout_eval": (lambda x: ad.dropout(x, 0.7, train=False), lambda r: [r.normal(size=(3, 4))]),
    "sum": (lambda x: x.sum(axis=1), lambda r: [r.normal(size=(3, 4, 2))]),
    "mean": (lambda x: x.mean(axis=(0, 2), keepdims=True), lambda r: [r.normal(size=(3, 4, 2))]),
    "masked_fill": (lambda x: ad.masked_fill(x, np.array([True, False, True, False]), -3.0),
                    lambda r: [r.normal(size=(2, 4))]),
}


@pytest.mark.parametrize("name", sorted(PRIMITIVES))
def test_primitive_vjp_matches_finite_differences(name):
    build, sample = PRIMITIVES[name]
    rng = np.random.default_rng(zlib.crc32(name.encode()))
    worst = 0.0
    for _ in range(100):
        worst = max(worst, _fd_check(build, sample(rng), rng))
    assert worst < 1e-5, f"{name}: {worst:.2e}"


def test_dropout_train_is_fixed_mask_linear_map():
    rng_state = 12
    x = P(np.random.default_rng(0).normal(size=(4, 5)))
    R = np.random.default_rng(1).normal(size=(4, 5))
    rep = ad.grad_check(lambda: (ad.dropout(x, 0.6, True, np.random.default_rng(rng_state)) * R).sum(), {"x": x})
    assert rep.passed


# ----------------------------------------------------------------- grad_check
def test_grad_check_quadratic():
    A = np.random.default_rng(2).normal(size=(4, 4))
    x = P(np.random.default_rng(3).normal(size=4))
    rep = ad.grad_check(lambda: (x.reshape(1, 4) @ (Tensor(A) @ x.reshape(4, 1))).sum(), {"x": x}, tol=1e-9)
    assert rep.max_error < 1e-9


def test_grad_check_softmax_matmul():
    W = P(np.random.default_rng(4).normal(size=(3, 4)))
    X = np.random.default_rng(5).normal(size=(5, 3))
    R = np.random.default_rng(6).normal(size=(5, 4))
    rep = ad.grad_check(lambda: (ad.softmax(Tensor(X) @ W) * R).sum(), {"W": W})
    assert rep.max_error < 1e-6


def test_grad_check_flags_corrupted_vjp():
    x = P([0.4, 1.1])

    def bad_square(t):
        return ad.custom((t,), t.data ** 2, lambda g: (g * 2.1 * t.data,), "bad_square")

    rep = ad.grad_check(lambda: bad_square(x).sum(), {"x": x})
    assert not rep.passed and "x" in rep.failures()
    assert "FAIL" in str(rep)


def test_grad_check_step_bounds():
    x = P([1.0])
    for h in (1e-8, 1e-2):
        with pytest.raises(ValueError):
            ad.grad_check(lambda: (x * x).sum(), {"x": x}, h=h)


def test_relative_error_floor():
    assert ad.relative_error(np.array([0.0]), np.array([1e-10])) == pytest.approx(1e-2)
    assert ad.relative_error(np.array([2.0]), np.array([2.0])) == 0.0


# ----------------------------------------------------------------- adam
def test_adam_first_step():
    w = P([0.0])
    w.grad = np.array([1.0])
    st = ad.AdamState(lr=1e-3)
    ad.adam_step(st, {"w": w})
    assert w.data[0] == pytest.approx(-1e-3, rel=1e-6)
    np.testing.assert_array_equal(w.grad, [1.0])  # grads untouched


def test_adam_zero_grad_zero_update():
    w = P([0.7, -0.2])
    w.grad = np.zeros(2)
    ad.adam_step(ad.AdamState(), {"w": w})
    np.testing.assert_array_equal(w.data, [0.7, -0.2])


def test_adam_two_identical_steps():
    """Closed form: m_hat = g and v_hat = g^2 after any number of identical grads."""
    g, lr, eps = 0.3, 1e-2, 1e-8
    w = P([1.0])
    st = ad.AdamState(lr=lr, eps=eps)
    steps = []
    for _ in range(2):
        before = w.data.copy()
        w.grad = np.array([g])
        ad.adam_step(st, {"w": w})
        steps.append(float(before[0] - w.data[0]))
    expect = lr * g / (abs(g) + eps)
    assert steps[0] == pytest.approx(expect, rel=1e-12)
    assert steps[1] <= steps[0] + 1e-15
    assert steps[1] == pytest.approx(expect, rel=1e-9)
    assert st.step == 2


def test_clip_grad_norm():
    a, b = P([3.0]), P([4.0])
    a.grad, b.grad = np.array([3.0]), np.array([4.0])
    pre = ad.clip_grad_norm({"a": a, "b": b}, 1.0)
    assert pre == pytest.approx(5.0)
    assert ad.global_grad_norm({"a": a, "b": b}) == pytest.approx(1.0, rel=1e-9)


# ----------------------------------------------------------------- dropout
def test_dropout_modes():
    x = Tensor(np.ones((200, 200)))
    assert ad.dropout(x, 0.8, train=False) is x
    y = ad.dropout(x, 0.8, train=True, rng=np.random.default_rng(0)).data
    kept = y[y > 0]
    np.testing.assert_allclose(kept, 1 / 0.8)
    assert abs(y.mean() - 1.0) < 0.02
    with pytest.raises(ValueError):
        ad.dropout(x, 0.0, True)


# ----------------------------------------------------------------- checkpoints
def test_checkpoint_roundtrip_with_adam(tmp_path):
    params = {"w": P(np.random.default_rng(0).normal(size=(3, 2))), "b": P([0.1, 0.2])}
    st = ad.AdamState(lr=5e-4)
    for p in params.values():
        p.grad = np.ones(p.shape)
    ad.adam_step(st, params)
    path = ad.save_checkpoint(tmp_path / "c.npz", params, {"epoch": 3}, st)
    arrays, meta, st2 = ad.load_checkpoint(path)
    assert meta == {"epoch": 3}
    for k in params:
        np.testing.assert_array_equal(arrays[k], params[k].data)
        np.testing.assert_array_equal(st2.m[k], st.m[k])
        np.testing.assert_array_equal(st2.v[k], st.v[k])
    assert (st2.step, st2.lr) == (1, 5e-4)


def test_checkpoint_format_tag(tmp_path):
    np.savez(tmp_path / "x.npz", a=np.ones(2))
    with pytest.raises(ValidationError):
        ad.load_checkpoint(tmp_path / "x.npz")
