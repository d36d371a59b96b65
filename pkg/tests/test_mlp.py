import numpy as np
import pytest
from hypothesis import given, strategies as st

from parity_distill.boolean_fourier import cube_points, majority
from parity_distill.mlp import (TwoLayerMlp, bias_grid, grad_inner_distill, grad_inner_hinge, grad_outer_hinge,
                                hinge_grads, hinge_loss, load_checkpoint, phi_b, save_checkpoint, symmetric_init)

H = 1e-5


def random_model(r, m=6, d=5, scale=0.7):
    return TwoLayerMlp(r.normal(size=(m, d)) * scale, r.normal(size=m) * 0.3, r.normal(size=m))


def smooth_instance(seed, m=6, d=5, n=8):
    """Model and batch with every pre-activation and margin away from a kink."""
    r = np.random.default_rng(seed)
    while True:
        model = random_model(r, m, d)
        X = r.choice([-1.0, 1.0], size=(n, d))
        y = r.choice([-1.0, 1.0], size=n)
        Z = model.preact(X)
        f = model.forward(X)
        if np.abs(Z).min() > 1e-3 and np.abs(1 - f * y).min() > 1e-3:
            return model, X, y


def central_diff(fn, P):
    G = np.zeros_like(P)
    for idx in np.ndindex(P.shape):
        old = P[idx]
        P[idx] = old + H
        up = fn()
        P[idx] = old - H
        down = fn()
        P[idx] = old
        G[idx] = (up - down) / (2 * H)
    return G


def rel_err(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)


# --- init ---------------------------------------------------------------------

def test_bias_grid():
    assert bias_grid(2).tolist() == [-0.5, 0.0, 0.5]
    assert len(bias_grid(5)) == 9


def test_symmetric_init_m2():
    model = symmetric_init(2, 3, 2, np.random.default_rng(0))
    assert np.array_equal(model.W[1], -model.W[0])
    assert model.b[1] == model.b[0] and model.b[0] in (-0.5, 0.0, 0.5)
    assert model.a[1] == -model.a[0] and abs(model.a[0]) == 0.5
    assert model.has_symmetric_pairing()


def test_symmetric_init_rejects_odd_width():
    with pytest.raises(ValueError):
        symmetric_init(3, 4, 2, np.random.default_rng(0))


@given(st.integers(1, 20).map(lambda h: 2 * h), st.integers(1, 12), st.integers(2, 6), st.integers(0, 2**31 - 1))
def test_init_properties(m, d, k, seed):
    r = np.random.default_rng(seed)
    model = symmetric_init(m, d, k, r)
    assert model.has_symmetric_pairing()
    assert np.all(np.abs(model.b) <= 1 - 1 / k + 1e-15)
    assert set(np.unique(model.W)) <= {-1.0, 1.0}
    X = r.choice([-1.0, 1.0], size=(100, d))
    assert np.abs(model.forward(-X) + model.forward(X)).max() <= 1e-12
    assert abs(model.forward(np.zeros(d))) <= 1e-15


# --- forward / hidden -------------------------------------------------------------

def test_forward_examples():
    m = TwoLayerMlp(np.array([[1.0, 0.0]]), [0.5], [2.0])
    assert m.forward(np.array([1.0, 1.0])) == 3.0
    assert TwoLayerMlp(np.ones((3, 2)), np.zeros(3), np.zeros(3)).forward(np.ones(2)) == 0.0


def test_forward_shape_mismatch():
    m = TwoLayerMlp(np.ones((3, 2)), np.zeros(3), np.ones(3))
    with pytest.raises(ValueError):
        m.forward(np.ones(3))
    with pytest.raises(ValueError):
        TwoLayerMlp(np.ones((3, 2)), np.zeros(2), np.ones(3))
    with pytest.raises(ValueError):
        TwoLayerMlp(np.ones((3, 2)), np.zeros(3), [1.0, np.nan, 0.0])


def test_hidden_examples(rng):
    assert np.array_equal(TwoLayerMlp(np.zeros((4, 3)), np.zeros(4), np.ones(4)).hidden(np.ones(3)), np.zeros(4))
    assert TwoLayerMlp([[1.0]], [-2.0], [1.0]).hidden(np.array([1.0])).tolist() == [0.0]
    model = random_model(rng)
    assert (model.hidden(rng.normal(size=(50, 5))) >= 0).all()


def test_forward_blockwise_matches_direct(rng):
    model = random_model(rng, m=64, d=7)
    X = rng.choice([-1.0, 1.0], size=(100_000, 7))
    assert np.allclose(model.forward(X), np.maximum(X @ model.W.T + model.b, 0) @ model.a)


# --- phi_b ------------------------------------------------------------------------

def test_phi_b_examples():
    assert phi_b(2.0, 1.0) == 3.0
    for b in (-1.0, 0.0, 0.4):
        assert phi_b(0.0, b) == 0.0


def test_phi_b_odd_and_monotone(rng):
    t, b = rng.normal(size=1000) * 3, rng.uniform(-1, 1, size=1000)
    assert np.array_equal(phi_b(-t, b), -phi_b(t, b))
    t1, t2, bb = rng.normal(size=10_000) * 3, rng.normal(size=10_000) * 3, rng.uniform(-1, 1, 10_000)
    lo, hi = np.minimum(t1, t2), np.maximum(t1, t2)
    assert (phi_b(lo, bb) <= phi_b(hi, bb)).all()


# --- losses and gradients ---------------------------------------------------------

def test_hinge_examples():
    m = TwoLayerMlp([[1.0]], [0.0], [0.5])
    assert hinge_loss(m, np.array([1.0]), 1.0) == 0.5
    m2 = TwoLayerMlp([[1.0]], [0.0], [2.0])
    assert hinge_loss(m2, np.array([1.0]), 1.0) == 0.0
    m3 = TwoLayerMlp([[1.0]], [0.0], [-1.0])
    assert hinge_loss(m3, np.array([1.0]), 1.0) == 2.0


def test_flat_region_gives_zero_gradient(rng):
    model = TwoLayerMlp(rng.normal(size=(4, 3)), np.full(4, 5.0), np.full(4, 1.0))
    X = rng.choice([-1.0, 1.0], size=(10, 3))
    y = np.ones(10)  # f > 1 everywhere
    assert np.array_equal(grad_inner_hinge(model, X, y), np.zeros((4, 3)))
    assert np.array_equal(grad_outer_hinge(model, X, y), np.zeros(4))


def test_margin_exactly_one_is_flat():
    model = TwoLayerMlp([[1.0, 0.0]], [0.0], [1.0])
    x = np.array([[1.0, 1.0]])
    assert np.array_equal(grad_inner_hinge(model, x, [1.0]), np.zeros((1, 2)))


def test_single_sample_closed_form():
    model = TwoLayerMlp([[0.3, -0.2, 0.1]], [0.1], [0.4])
    x, y = np.array([[1.0, -1.0, 1.0]]), np.array([1.0])
    assert np.allclose(grad_inner_hinge(model, x, y), -0.4 * 1.0 * x)
    h = model.hidden(x[0])[0]
    assert np.allclose(grad_outer_hinge(model, x, y), [-h])


def test_relu_derivative_at_zero_is_one():
    # pre-activation exactly 0 counts as active
    model = TwoLayerMlp([[1.0, -1.0]], [0.0], [0.5])
    g = grad_inner_hinge(model, np.array([[1.0, 1.0]]), [1.0])
    assert np.allclose(g, -0.5 * np.array([[1.0, 1.0]]))


def test_empty_batch_rejected():
    model = TwoLayerMlp(np.ones((2, 3)), np.zeros(2), np.ones(2))
    with pytest.raises(ValueError):
        grad_inner_hinge(model, np.zeros((0, 3)), np.zeros(0))
    with pytest.raises(ValueError):
        grad_outer_hinge(model, np.zeros((0, 3)), np.zeros(0))
    with pytest.raises(ValueError):
        grad_inner_distill(model, np.zeros((0, 2)), np.zeros((0, 3)))


@given(st.integers(0, 2**31 - 1))
def test_hinge_gradients_match_finite_differences(seed):
    model, X, y = smooth_instance(seed)
    loss = lambda: float(hinge_loss(model, X, y).mean())
    assert rel_err(grad_inner_hinge(model, X, y), central_diff(loss, model.W)) < 1e-5
    assert rel_err(grad_outer_hinge(model, X, y), central_diff(loss, model.a)) < 1e-5


@given(st.integers(0, 2**31 - 1))
def test_distill_gradient_matches_finite_differences(seed):
    model, X, _ = smooth_instance(seed)
    G = np.random.default_rng(seed + 1).normal(size=(X.shape[0], model.m))
    loss = lambda: float(-(model.hidden(X) * G).sum(1).mean())
    assert rel_err(grad_inner_distill(model, G, X), central_diff(loss, model.W)) < 1e-5


def test_distill_examples(rng):
    model = random_model(rng)
    X = rng.choice([-1.0, 1.0], size=(5, 5))
    assert np.array_equal(grad_inner_distill(model, np.zeros((5, 6)), X), np.zeros((6, 5)))
    dead = TwoLayerMlp([[1.0, 1.0], [1.0, 0.0]], [-5.0, 0.5], [1.0, 1.0])
    g = grad_inner_distill(dead, lambda xs: np.ones((len(xs), 2)), np.array([[1.0, 1.0]]))
    assert np.array_equal(g[0], [0.0, 0.0]) and np.array_equal(g[1], [-1.0, -1.0])
    with pytest.raises(ValueError):
        grad_inner_distill(model, np.zeros((5, 3)), X)


def test_hinge_grads_agrees_with_separate_functions(rng):
    model, X, y = smooth_instance(3, m=10, d=8, n=40)
    dW, da, loss = hinge_grads(model, X, y)
    assert np.allclose(dW, grad_inner_hinge(model, X, y))
    assert np.allclose(da, grad_outer_hinge(model, X, y))
    assert loss == pytest.approx(hinge_loss(model, X, y).mean())


@pytest.mark.parametrize("d", [5, 9, 11])
def test_indicator_identity_odd_d(d):
    # 1{w.x + b >= 0} = (1 + Maj(w * x)) / 2 for |b| < 1 whenever w.x cannot vanish
    r = np.random.default_rng(d)
    X = cube_points(d)
    for _ in range(5):
        w = r.choice([-1.0, 1.0], size=d)
        b = r.uniform(-0.99, 0.99)
        assert np.array_equal((X @ w + b >= 0).astype(float), (1 + majority(X * w)) / 2)


@pytest.mark.parametrize("d", [4, 10, 12])
def test_indicator_identity_even_d_fails_only_on_ties(d):
    r = np.random.default_rng(d)
    X = cube_points(d)
    w = r.choice([-1.0, 1.0], size=d)
    for b in (0.5, 0.0, -0.5):
        lhs = (X @ w + b >= 0).astype(float)
        rhs = (1 + majority(X * w)) / 2
        diff = lhs != rhs
        assert np.all(X[diff] @ w == 0)
        assert diff.any() == (b < 0)


def test_checkpoint_roundtrip(tmp_path, rng):
    model = random_model(rng, m=7, d=4)
    p = tmp_path / "m.txt"
    save_checkpoint(model, p)
    raw = p.read_bytes()
    assert b"\r" not in raw and raw.splitlines()[0] == b"7 4"
    back = load_checkpoint(p)
    assert np.array_equal(back.W, model.W) and np.array_equal(back.b, model.b) and np.array_equal(back.a, model.a)


def test_pairing_sign_detects_both_relations():
    W = np.array([[1.0, -1.0], [1.0, -1.0]])
    same = TwoLayerMlp(W, [0.5, 0.5], [1.0, -1.0])
    assert same.pairing_sign() == 1 and not same.has_symmetric_pairing()
    assert TwoLayerMlp(W * [[1], [-1]], [0.5, 0.5], [1.0, -1.0]).pairing_sign() == -1
    assert TwoLayerMlp(W, [0.5, 0.4], [1.0, -1.0]).pairing_sign() is None
