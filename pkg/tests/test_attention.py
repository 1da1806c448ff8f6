import numpy as np
import pytest

from motionscore import autodiff as ad
from motionscore.autodiff import Tape, Tensor, grad_check
from motionscore.attention import (
    AttentionConfig,
    FusionConfig,
    attention_pool,
    fuse_predict,
    init_attention_params,
    init_fusion_params,
    score_from_logits,
)


def pool(h, cfg=None, params=None, seed=0):
    cfg = cfg or AttentionConfig(num_heads=2)
    params = params or init_attention_params(cfg, h.shape[0], np.random.default_rng(seed))
    pooled, imp = attention_pool(Tape(), Tensor(h), params, cfg)
    return pooled.data, imp, params, cfg


def test_constant_sequence_uniform_importance():
    h = np.tile(np.array([[0.3], [1.2], [-0.5], [0.9]]), (1, 4))
    _, imp, _, _ = pool(h)
    np.testing.assert_allclose(imp, [0.25, 0.25, 0.25, 0.25], atol=1e-12)


def test_single_frame_degenerate():
    h = np.random.default_rng(1).normal(size=(6, 1))
    pooled, imp, params, cfg = pool(h)
    np.testing.assert_allclose(imp, [1.0], atol=1e-15)
    # pooled equals the projected single-frame value vector
    dh = cfg.resolved_head_dim(6)
    heads = []
    for head in range(cfg.num_heads):
        v = h[:, 0] @ params[f"head{head}.wv"].data
        heads.append(v)
    expected = params["out.w"].data @ np.concatenate(heads) + params["out.b"].data
    np.testing.assert_allclose(pooled, expected, atol=1e-12)


def test_hand_set_parameters_match_scalar_oracle():
    # F=2, one head, head_dim 2: everything computable by hand with numpy
    cfg = AttentionConfig(num_heads=1, head_dim=2)
    h = np.array([[1.0, 2.0, -1.0], [0.5, -0.5, 1.5]])  # (F=2, T=3)
    params = {
        "head0.q": Tensor(np.array([1.0, -0.5]), True),
        "head0.wk": Tensor(np.array([[0.2, 0.1], [-0.3, 0.4]]), True),
        "head0.wv": Tensor(np.array([[1.0, 0.0], [0.0, 1.0]]), True),
        "out.w": Tensor(np.eye(2), True),
        "out.b": Tensor(np.zeros(2), True),
    }
    pooled, imp = attention_pool(Tape(), Tensor(h), params, cfg)
    x = h.T
    k = x @ params["head0.wk"].data
    scores = k @ np.array([1.0, -0.5]) / np.sqrt(2)
    e = np.exp(scores - scores.max())
    alpha = e / e.sum()
    v = x @ params["head0.wv"].data
    expected = alpha @ v
    np.testing.assert_allclose(imp, alpha, atol=1e-12)
    np.testing.assert_allclose(pooled.data, expected, atol=1e-12)


def test_importance_is_distribution():
    rng = np.random.default_rng(2)
    for _ in range(25):
        t = int(rng.integers(1, 40))
        h = rng.normal(size=(8, t)) * rng.uniform(0.1, 5)
        _, imp, _, _ = pool(h, seed=int(rng.integers(1000)))
        assert (imp >= 0).all()
        assert abs(imp.sum() - 1.0) < 1e-9


def test_permutation_covariance():
    rng = np.random.default_rng(3)
    h = rng.normal(size=(8, 11))
    pooled, imp, params, cfg = pool(h)
    perm = rng.permutation(11)
    pooled_p, imp_p, _, _ = pool(h[:, perm], params=params, cfg=cfg)
    np.testing.assert_allclose(imp_p, imp[perm], atol=1e-12)
    np.testing.assert_allclose(pooled_p, pooled, atol=1e-12)


# --- score decoding ----------------------------------------------------------

def test_score_uniform_logits():
    assert score_from_logits(np.zeros(10)) == pytest.approx(5.5)


def test_score_spike_at_class_7():
    logits = np.zeros(10)
    logits[6] = 50.0
    assert score_from_logits(logits) == pytest.approx(7.0, abs=1e-9)


def test_score_two_high_classes_oracle():
    logits = np.zeros(10)
    logits[8] = 2.0
    logits[9] = 2.0
    p = np.exp(logits - logits.max())
    p /= p.sum()
    expected = float(p @ np.arange(1, 11))
    assert score_from_logits(logits) == pytest.approx(expected, abs=1e-12)
    # direct closed form: (36 + 19 e^2) / (8 + 2 e^2)
    e2 = np.exp(2.0)
    assert expected == pytest.approx((36 + 19 * e2) / (8 + 2 * e2), abs=1e-12)


def test_score_always_in_range_and_monotone():
    rng = np.random.default_rng(4)
    for _ in range(100):
        z = rng.normal(size=10) * 5
        s = score_from_logits(z)
        assert 1.0 <= s <= 10.0
    z = rng.normal(size=10)
    s0 = score_from_logits(z)
    z2 = z.copy()
    z2[9] += 3.0  # more mass on the top class must raise the expectation
    assert score_from_logits(z2) > s0


# --- fusion head -------------------------------------------------------------

def test_fusion_zero_weights_zero_logits():
    cfg = FusionConfig(hidden_sizes=())
    params = init_fusion_params(cfg, pooled_dim=4, rng=np.random.default_rng(0))
    for p in params.values():
        p.data[...] = 0.0
    logits = fuse_predict(Tape(), Tensor(np.ones(4)), np.ones(19), params, cfg)
    np.testing.assert_array_equal(logits.data, np.zeros(10))


def test_fusion_single_linear_layer_is_affine_oracle():
    cfg = FusionConfig(hidden_sizes=())
    rng = np.random.default_rng(5)
    params = init_fusion_params(cfg, pooled_dim=4, rng=rng)
    pooled = rng.normal(size=4)
    g = rng.normal(size=19)
    logits = fuse_predict(Tape(), Tensor(pooled), g, params, cfg)
    expected = params["fc0.w"].data @ np.concatenate([pooled, g]) + params["fc0.b"].data
    np.testing.assert_allclose(logits.data, expected, atol=1e-12)


def test_fusion_feature_order_is_normative():
    cfg = FusionConfig(hidden_sizes=())
    rng = np.random.default_rng(6)
    params = init_fusion_params(cfg, pooled_dim=4, rng=rng)
    pooled = Tensor(rng.normal(size=4))
    g = rng.normal(size=19)
    base = fuse_predict(Tape(), pooled, g, params, cfg).data
    permuted = fuse_predict(Tape(), pooled, g[::-1].copy(), params, cfg).data
    assert not np.allclose(base, permuted)


def test_fusion_wrong_global_count():
    cfg = FusionConfig()
    params = init_fusion_params(cfg, pooled_dim=4, rng=np.random.default_rng(0))
    with pytest.raises(ValueError, match="19"):
        fuse_predict(Tape(), Tensor(np.zeros(4)), np.zeros(18), params, cfg)


def test_gradcheck_attention_and_fusion():
    acfg = AttentionConfig(num_heads=2)
    fcfg = FusionConfig(hidden_sizes=(6,))
    rng = np.random.default_rng(7)
    h = Tensor(rng.normal(size=(4, 5)))
    g = rng.normal(size=19)
    ap = init_attention_params(acfg, 4, rng)
    fp = init_fusion_params(fcfg, 4, rng)
    targets = rng.random(10)
    targets /= targets.sum()

    def f(tape):
        pooled, _ = attention_pool(tape, h, ap, acfg)
        logits = fuse_predict(tape, pooled, g, fp, fcfg)
        return ad.softmax_cross_entropy(tape, logits, targets)

    # make sure no relu input sits near the kink, then check all parameters
    tape = Tape()
    f(tape)
    margins = [
        np.abs(parents[0].data).min()
        for op, _out, parents, _pull in tape.records
        if op == "relu"
    ]
    assert min(margins) > 1e-3
    err = grad_check(f, list(ap.values()) + list(fp.values()))
    assert err < 1e-4
