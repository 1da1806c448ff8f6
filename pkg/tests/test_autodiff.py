import numpy as np
import pytest

from motionscore import autodiff as ad
from motionscore.autodiff import Tape, Tensor, backward, grad_check
from motionscore.optim import Adam, AdamConfig, AdamState, adam_step


def conv_oracle(x, w, b, dilation):
    """Nested-loop reference for the centered dilated convolution."""
    cin, t = x.shape
    cout, _, k = w.shape
    pad = dilation * (k - 1) // 2
    xp = np.zeros((cin, t + 2 * pad))
    xp[:, pad : pad + t] = x
    y = np.zeros((cout, t))
    for o in range(cout):
        for tt in range(t):
            acc = b[o]
            for i in range(cin):
                for j in range(k):
                    acc += w[o, i, j] * xp[i, tt + j * dilation]
            y[o, tt] = acc
    return y


# --- forward oracles ---------------------------------------------------------

def test_conv_matches_bruteforce_oracle():
    rng = np.random.default_rng(0)
    for _ in range(20):
        cin, cout, k, t = rng.integers(1, 5), rng.integers(1, 5), 2 * rng.integers(1, 3) + 1, rng.integers(1, 12)
        d = int(rng.integers(1, 5))
        x = rng.normal(size=(cin, t))
        w = rng.normal(size=(cout, cin, k))
        b = rng.normal(size=cout)
        out = ad.dilated_conv1d(Tape(), Tensor(x), Tensor(w), Tensor(b), dilation=d)
        np.testing.assert_allclose(out.data, conv_oracle(x, w, b, d), atol=1e-12)


def test_conv_hand_case_left_tap():
    # k=3, d=2, kernel weight only on the left tap: output is the input
    # shifted right by 2 with zero fill
    out = ad.dilated_conv1d(
        Tape(),
        Tensor(np.array([[1.0, 2, 3, 4, 5, 6]])),
        Tensor(np.array([[[1.0, 0, 0]]])),
        Tensor(np.zeros(1)),
        dilation=2,
    )
    np.testing.assert_allclose(out.data, [[0.0, 0, 1, 2, 3, 4]], atol=1e-15)


def test_conv_zero_weights_zero_output():
    x = Tensor(np.random.default_rng(1).normal(size=(3, 7)))
    out = ad.dilated_conv1d(Tape(), x, Tensor(np.zeros((2, 3, 3))), Tensor(np.zeros(2)))
    np.testing.assert_array_equal(out.data, np.zeros((2, 7)))


def test_conv_preserves_length_for_all_k_d():
    rng = np.random.default_rng(2)
    for k in (1, 3, 5, 7):
        for d in (1, 2, 4, 8):
            for t in (1, 2, 9):
                x = Tensor(rng.normal(size=(2, t)))
                w = Tensor(rng.normal(size=(2, 2, k)))
                out = ad.dilated_conv1d(Tape(), x, w, Tensor(np.zeros(2)), dilation=d)
                assert out.data.shape == (2, t)


def test_softmax_uniform_and_rows_sum():
    out = ad.softmax(Tape(), Tensor(np.zeros(4)), axis=0)
    np.testing.assert_allclose(out.data, np.full(4, 0.25), atol=1e-15)
    rng = np.random.default_rng(3)
    m = ad.softmax(Tape(), Tensor(rng.normal(size=(5, 8))), axis=1)
    np.testing.assert_allclose(m.data.sum(axis=1), np.ones(5), atol=1e-12)
    assert (m.data >= 0).all()


def test_shape_mismatch_errors():
    with pytest.raises(ValueError):
        ad.linear(Tape(), Tensor(np.zeros(3)), Tensor(np.zeros((2, 4))), Tensor(np.zeros(2)))
    with pytest.raises(ValueError):
        ad.matmul(Tape(), Tensor(np.zeros((2, 3))), Tensor(np.zeros((4, 2))))
    with pytest.raises(ValueError):
        ad.residual_add(Tape(), Tensor(np.zeros(3)), Tensor(np.zeros(4)))
    with pytest.raises(ValueError):
        ad.dilated_conv1d(Tape(), Tensor(np.zeros((2, 5))), Tensor(np.zeros((1, 3, 3))), Tensor(np.zeros(1)))


# --- backward: closed forms -----------------------------------------------------

def test_sum_of_squares_gradient_exact():
    rng = np.random.default_rng(4)
    x = Tensor(rng.normal(size=7), requires_grad=True)
    tape = Tape()
    loss = ad.dot(tape, x, x)  # same tensor on both sides: fan-out accumulation
    backward(tape, loss)
    np.testing.assert_allclose(x.grad, 2 * x.data, atol=1e-15)


def test_softmax_cross_entropy_gradient_is_p_minus_t():
    rng = np.random.default_rng(5)
    logits = Tensor(rng.normal(size=10), requires_grad=True)
    t = rng.random(10)
    t /= t.sum()
    tape = Tape()
    loss = ad.softmax_cross_entropy(tape, logits, t)
    backward(tape, loss)
    z = logits.data - logits.data.max()
    p = np.exp(z) / np.exp(z).sum()
    np.testing.assert_allclose(logits.grad, p - t, atol=1e-12)


def test_residual_fanout_accumulates():
    x = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    tape = Tape()
    y = ad.residual_add(tape, x, x)
    loss = ad.dot(tape, y, Tensor(np.ones(2)))
    backward(tape, loss)
    np.testing.assert_allclose(x.grad, [2.0, 2.0])


def test_unused_parameter_gets_zero_gradient():
    used = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    unused = Tensor(np.array([5.0]), requires_grad=True)
    tape = Tape()
    loss = ad.dot(tape, used, used)
    backward(tape, loss)
    np.testing.assert_array_equal(unused.grad, np.zeros(1))


def test_backward_rejects_non_scalar():
    x = Tensor(np.zeros(3), requires_grad=True)
    tape = Tape()
    y = ad.relu(tape, x)
    with pytest.raises(ValueError, match="scalar"):
        backward(tape, y)


def test_nonnormalized_targets_rejected():
    with pytest.raises(ValueError, match="sum to 1"):
        ad.softmax_cross_entropy(Tape(), Tensor(np.zeros(4)), np.array([0.5, 0.5, 0.5, 0.5]))


# --- gradient checks per primitive -----------------------------------------------

SEEDS = range(20)


def _rand(rng, *shape):
    return rng.normal(size=shape)


def _flat_dot(tape, y, row_probe):
    """Scalar readout of a 2-D tensor via primitives: (y @ c) . row_probe,
    with a fixed non-uniform column weighting c."""
    cols = y.data.shape[1]
    pooled = ad.matmul(tape, y, Tensor(np.linspace(0.5, 1.5, cols)))  # (rows,)
    return ad.dot(tape, pooled, row_probe)


def test_gradcheck_dilated_conv():
    for seed in SEEDS:
        rng = np.random.default_rng(seed)
        x = Tensor(_rand(rng, 3, 8), requires_grad=True)
        w = Tensor(_rand(rng, 2, 3, 3) * 0.5, requires_grad=True)
        b = Tensor(_rand(rng, 2) * 0.1, requires_grad=True)
        probe = Tensor(_rand(rng, 2))
        d = int(rng.integers(1, 4))

        def f(tape):
            return _flat_dot(tape, ad.dilated_conv1d(tape, x, w, b, dilation=d), probe)

        assert grad_check(f, [x, w, b]) < 1e-4


def test_gradcheck_pointwise_and_linear_and_matmul():
    for seed in SEEDS:
        rng = np.random.default_rng(100 + seed)
        x2 = Tensor(_rand(rng, 4, 6), requires_grad=True)
        w2 = Tensor(_rand(rng, 3, 4), requires_grad=True)
        b2 = Tensor(_rand(rng, 3), requires_grad=True)
        p2 = Tensor(_rand(rng, 3))
        assert grad_check(lambda tape: _flat_dot(tape, ad.pointwise_conv(tape, x2, w2, b2), p2), [x2, w2, b2]) < 1e-4

        xv = Tensor(_rand(rng, 5), requires_grad=True)
        wv = Tensor(_rand(rng, 3, 5), requires_grad=True)
        bv = Tensor(_rand(rng, 3), requires_grad=True)
        assert grad_check(lambda tape: ad.dot(tape, ad.linear(tape, xv, wv, bv), Tensor(np.array([0.3, -0.2, 0.9]))), [xv, wv, bv]) < 1e-4

        a = Tensor(_rand(rng, 4, 3), requires_grad=True)
        m = Tensor(_rand(rng, 3, 2), requires_grad=True)
        assert grad_check(lambda tape: _flat_dot(tape, ad.matmul(tape, a, m), Tensor(np.ones(4))), [a, m]) < 1e-4

        v = Tensor(_rand(rng, 3), requires_grad=True)
        assert grad_check(lambda tape: ad.dot(tape, ad.matmul(tape, a, v), Tensor(np.ones(4))), [a, v]) < 1e-4


def test_gradcheck_relu_softmax_scale_transpose():
    for seed in SEEDS:
        rng = np.random.default_rng(200 + seed)
        # keep relu inputs away from the kink so the FD oracle is valid
        xr = Tensor(np.where(rng.random(8) < 0.5, -1, 1) * rng.uniform(0.2, 1.5, 8), requires_grad=True)
        pr8 = Tensor(rng.normal(size=8))
        assert grad_check(lambda tape: ad.dot(tape, ad.relu(tape, xr), pr8), [xr]) < 1e-4

        xs = Tensor(_rand(rng, 6), requires_grad=True)
        ps = Tensor(rng.normal(size=6))
        assert grad_check(lambda tape: ad.dot(tape, ad.softmax(tape, xs, axis=0), ps), [xs]) < 1e-4

        xm = Tensor(_rand(rng, 3, 4), requires_grad=True)
        assert grad_check(lambda tape: _flat_dot(tape, ad.softmax(tape, xm, axis=1), Tensor(np.ones(3))), [xm]) < 1e-4
        assert grad_check(lambda tape: _flat_dot(tape, ad.scale(tape, xm, 0.37), Tensor(np.ones(3))), [xm]) < 1e-4
        assert grad_check(lambda tape: _flat_dot(tape, ad.transpose(tape, xm), Tensor(np.ones(4))), [xm]) < 1e-4


def test_gradcheck_concat_weighted_sum_residual():
    for seed in SEEDS:
        rng = np.random.default_rng(300 + seed)
        a = Tensor(_rand(rng, 3), requires_grad=True)
        b = Tensor(_rand(rng, 4), requires_grad=True)
        probe = Tensor(rng.normal(size=7))
        assert grad_check(lambda tape: ad.dot(tape, ad.concat(tape, [a, b], axis=0), probe), [a, b]) < 1e-4

        w = Tensor(_rand(rng, 5), requires_grad=True)
        v = Tensor(_rand(rng, 5, 3), requires_grad=True)
        pv = Tensor(rng.normal(size=3))
        assert grad_check(lambda tape: ad.dot(tape, ad.weighted_sum(tape, w, v), pv), [w, v]) < 1e-4

        r1 = Tensor(_rand(rng, 6), requires_grad=True)
        r2 = Tensor(_rand(rng, 6), requires_grad=True)
        pr = Tensor(rng.normal(size=6))
        assert grad_check(lambda tape: ad.dot(tape, ad.residual_add(tape, r1, r2), pr), [r1, r2]) < 1e-4


def test_gradcheck_cross_entropy():
    for seed in SEEDS:
        rng = np.random.default_rng(400 + seed)
        logits = Tensor(_rand(rng, 10), requires_grad=True)
        t = rng.random(10)
        t /= t.sum()
        assert grad_check(lambda tape: ad.softmax_cross_entropy(tape, logits, t), [logits]) < 1e-4


def test_gradcheck_dropout_with_fixed_mask():
    for seed in range(5):
        rng_x = np.random.default_rng(500 + seed)
        x = Tensor(rng_x.normal(size=(4, 5)), requires_grad=True)

        def f(tape):
            y = ad.dropout(tape, x, 0.4, train=True, rng=np.random.default_rng(99))
            return _flat_dot(tape, y, Tensor(np.ones(4)))

        assert grad_check(f, [x]) < 1e-4


def test_gradcheck_linear_function_near_machine_eps():
    x = Tensor(np.array([0.3, -0.7, 1.1]), requires_grad=True)
    err = grad_check(lambda tape: ad.dot(tape, x, Tensor(np.array([2.0, -1.0, 0.5]))), [x])
    assert err < 1e-9


# --- dropout semantics -----------------------------------------------------------

def test_dropout_eval_is_identity():
    x = Tensor(np.random.default_rng(6).normal(size=(3, 4)))
    out = ad.dropout(Tape(), x, 0.5, train=False)
    assert out is x


def test_dropout_train_preserves_expectation():
    rng = np.random.default_rng(7)
    x = Tensor(np.ones(100_000))
    out = ad.dropout(Tape(), x, 0.3, train=True, rng=rng)
    assert abs(out.data.mean() - 1.0) < 0.01  # inverted scaling, 1% tolerance
    kept = out.data[out.data > 0]
    np.testing.assert_allclose(kept, 1.0 / 0.7, atol=1e-12)


def test_dropout_needs_rng_in_train():
    with pytest.raises(ValueError, match="rng"):
        ad.dropout(Tape(), Tensor(np.ones(3)), 0.3, train=True)


# --- determinism ------------------------------------------------------------------

def test_forward_deterministic_given_seed():
    def build(seed):
        rng = np.random.default_rng(seed)
        x = Tensor(rng.normal(size=(3, 6)))
        w = Tensor(rng.normal(size=(2, 3, 3)))
        y = ad.dilated_conv1d(Tape(), x, w, Tensor(np.zeros(2)), dilation=2)
        return y.data

    np.testing.assert_array_equal(build(42), build(42))


# --- Adam --------------------------------------------------------------------------

def test_adam_zero_gradient_keeps_params():
    p = Tensor(np.array([1.0, -2.0]), requires_grad=True)
    opt = Adam([p], AdamConfig(lr=0.1))
    opt.step()
    np.testing.assert_array_equal(p.data, [1.0, -2.0])
    assert opt.state.t == 1


def test_adam_single_step_hand_formula():
    # g=1, lr=0.1: m_hat=1, v_hat=1 -> delta = -0.1 / (1 + 1e-8)
    p = Tensor(np.array([0.0]), requires_grad=True)
    p.grad = np.array([1.0])
    opt = Adam([p], AdamConfig(lr=0.1))
    opt.step()
    expected = -0.1 * 1.0 / (np.sqrt(1.0) + 1e-8)
    np.testing.assert_allclose(p.data, [expected], atol=1e-15)


def test_adam_two_identical_steps_scripted():
    # constant gradient keeps m_hat = v_hat = 1 at every step
    p = Tensor(np.array([0.0]), requires_grad=True)
    opt = Adam([p], AdamConfig(lr=0.1))
    for _ in range(2):
        p.grad = np.array([1.0])
        opt.step()
    lr, eps = 0.1, 1e-8
    m = v = 0.0
    theta = 0.0
    for t in (1, 2):
        m = 0.9 * m + 0.1 * 1.0
        v = 0.999 * v + 0.001 * 1.0
        mhat = m / (1 - 0.9**t)
        vhat = v / (1 - 0.999**t)
        theta -= lr * mhat / (np.sqrt(vhat) + eps)
    np.testing.assert_allclose(p.data, [theta], atol=1e-15)
    assert opt.state.t == 2


def test_adam_functional_form_matches_class():
    rng = np.random.default_rng(8)
    data = rng.normal(size=4)
    grads = [rng.normal(size=4) for _ in range(3)]

    p1 = Tensor(data.copy(), requires_grad=True)
    opt = Adam([p1], AdamConfig(lr=0.05))
    for g in grads:
        p1.grad = g.copy()
        opt.step()

    p2 = Tensor(data.copy(), requires_grad=True)
    state = AdamState(m=[np.zeros(4)], v=[np.zeros(4)])
    for g in grads:
        adam_step([p2], [g.copy()], state, AdamConfig(lr=0.05))
    np.testing.assert_allclose(p1.data, p2.data, atol=1e-15)


def test_adam_shape_mismatch():
    p = Tensor(np.zeros(3), requires_grad=True)
    state = AdamState(m=[np.zeros(3)], v=[np.zeros(3)])
    with pytest.raises(ValueError, match="shape"):
        adam_step([p], [np.zeros(4)], state, AdamConfig())
