import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from colagnn import diffcore as dc
from colagnn.diffcore import Tensor
from colagnn.model import (ATTENTION_NAMES, ColaGNN, ColaGnnConfig, attention_scores, fuse_attention, glorot_init,
                           message_pass, normalize_rows, parameter_count, parameter_shapes, predict, rnn_encode,
                           temporal_conv)

from conftest import TINY


def params_for(shapes, fill=None, rng=None):
    rng = rng or np.random.default_rng(0)
    out = {}
    for k, s in shapes.items():
        data = np.full(s, fill, dtype=float) if fill is not None else rng.normal(size=s)
        out[k] = Tensor(data, requires_grad=True, name=k)
    return out


def rnn_params(D, **over):
    p = params_for({"rnn_w": (D,), "rnn_U": (D, D), "rnn_b": (D,)}, fill=0.0)
    for k, v in over.items():
        p[k].data = np.asarray(v, dtype=float)
    return p


def attn_params(D, da, N, **over):
    shapes = {"attn_Ws": (da, D), "attn_Wt": (da, D), "attn_v": (da,), "attn_bs": (da,), "attn_bv": (),
              "gate_Wm": (N, N), "gate_bm": ()}
    p = params_for(shapes, rng=np.random.default_rng(7))
    for k, v in over.items():
        p[k].data = np.asarray(v, dtype=float)
    return p


class TestRnn:
    def test_zero_params(self):
        H = rnn_encode(Tensor(np.random.default_rng(0).normal(size=(3, 6))), rnn_params(4))
        assert H.shape == (3, 4) and not H.data.any()

    def test_single_step_bias(self):
        b = np.array([0.3, -1.0])
        H = rnn_encode(Tensor(np.arange(3.0)[:, None]), rnn_params(2, rnn_b=b))
        np.testing.assert_allclose(H.data, np.tile(np.tanh(b), (3, 1)))

    def test_matches_loop(self):
        rng = np.random.default_rng(1)
        p = params_for({"rnn_w": (3,), "rnn_U": (3, 3), "rnn_b": (3,)}, rng=rng)
        x = rng.normal(size=(2, 5))
        h = np.zeros((2, 3))
        for t in range(5):
            h = np.tanh(x[:, t:t + 1] * p["rnn_w"].data + h @ p["rnn_U"].data.T + p["rnn_b"].data)
        np.testing.assert_allclose(rnn_encode(Tensor(x), p).data, h, atol=1e-14)

    def test_gradient(self):
        rng = np.random.default_rng(2)
        p = params_for({"rnn_w": (3,), "rnn_U": (3, 3), "rnn_b": (3,)}, rng=rng)
        x = Tensor(rng.normal(size=(4, 5)))
        assert dc.finite_diff_check(lambda: dc.tsum(dc.tanh(rnn_encode(x, p))), p).passed


class TestAttention:
    def test_zero_v(self):
        p = attn_params(3, 2, 4, attn_v=np.zeros(2), attn_bv=0.7)
        A = attention_scores(Tensor(np.random.default_rng(0).normal(size=(4, 3))), p)
        np.testing.assert_array_equal(A.data, np.full((4, 4), 0.7))

    def test_identical_rows(self):
        A = attention_scores(Tensor(np.tile([0.2, -0.4, 1.0], (5, 1))), attn_params(3, 2, 5))
        assert np.ptp(A.data) == 0

    def test_closed_form_zero(self):
        p = attn_params(3, 4, 2, attn_Ws=np.zeros((4, 3)), attn_Wt=np.zeros((4, 3)), attn_bs=np.zeros(4),
                        attn_v=np.ones(4), attn_bv=0.0)
        assert not attention_scores(Tensor(np.ones((2, 3))), p).data.any()

    def test_asymmetric_in_general(self):
        A = attention_scores(Tensor(np.random.default_rng(4).normal(size=(4, 3))), attn_params(3, 2, 4))
        assert not np.allclose(A.data, A.data.T)

    def test_matches_loops(self):
        rng = np.random.default_rng(5)
        p = attn_params(3, 2, 4)
        H = rng.normal(size=(4, 3))
        elu = lambda z: np.where(z > 0, z, np.expm1(np.minimum(z, 0)))
        ref = np.array([[p["attn_v"].data @ elu(p["attn_Ws"].data @ H[i] + p["attn_Wt"].data @ H[j]
                                                  + p["attn_bs"].data) + p["attn_bv"].data
                         for j in range(4)] for i in range(4)])
        np.testing.assert_allclose(attention_scores(Tensor(H), p).data, ref, atol=1e-14)


class TestNormalizeRows:
    def test_three_four(self):
        np.testing.assert_allclose(normalize_rows(Tensor([[3.0, 4.0]])).data, [[0.6, 0.8]])

    def test_zero_row(self):
        assert not normalize_rows(Tensor(np.zeros((2, 3)))).data.any()

    def test_norm_equal_eps(self):
        out = normalize_rows(Tensor([[1e-12, 0.0]]), 2, 1e-12)
        np.testing.assert_allclose(out.data, [[1.0, 0.0]])

    def test_p1(self):
        np.testing.assert_allclose(normalize_rows(Tensor([[1.0, -3.0]]), 1.0).data, [[0.25, -0.75]])


class TestFuse:
    def test_equal_operands(self):
        adj = np.eye(3) * 0.5 + 0.1
        _, fused = fuse_attention(Tensor(adj), adj, attn_params(2, 1, 3))
        np.testing.assert_allclose(fused.data, adj, atol=1e-15)

    def test_saturated_gate(self):
        rng = np.random.default_rng(0)
        A, adj = rng.normal(size=(3, 3)), np.eye(3)
        M, fused = fuse_attention(Tensor(A), adj, attn_params(2, 1, 3, gate_Wm=np.zeros((3, 3)), gate_bm=50.0))
        np.testing.assert_allclose(M.data, 1.0, atol=1e-20)
        np.testing.assert_allclose(fused.data, adj, atol=1e-20)

    def test_half_gate(self):
        rng = np.random.default_rng(1)
        A, adj = rng.normal(size=(3, 3)), np.full((3, 3), 1 / 3)
        M, fused = fuse_attention(Tensor(A), adj, attn_params(2, 1, 3, gate_Wm=np.zeros((3, 3)), gate_bm=0.0))
        np.testing.assert_array_equal(M.data, 0.5)
        np.testing.assert_allclose(fused.data, (A + adj) / 2, atol=1e-15)


class TestTemporalConv:
    def test_full_width_ones(self):
        x = np.array([[1.0, 2.0, 3.0], [-5.0, 1.0, 1.0]])
        np.testing.assert_array_equal(temporal_conv(Tensor(x), Tensor(np.ones((1, 3)))).data, [[6.0], [0.0]])

    def test_zero_filters(self):
        assert not temporal_conv(Tensor(np.ones((2, 5))), Tensor(np.zeros((3, 2)))).data.any()

    def test_hand(self):
        assert temporal_conv(Tensor([[1.0, -2.0, 3.0]]), Tensor([[1.0, 0.0]])).data[0, 0] == 1.0

    def test_q_larger_than_window(self):
        with pytest.raises(dc.ShapeError):
            parameter_shapes(ColaGnnConfig(filter_len=9), 3, 8)


class TestMessagePassAndHead:
    def test_identity_propagation(self):
        H0 = np.abs(np.random.default_rng(0).normal(size=(4, 3)))
        p = {"graph_W0": Tensor(np.eye(3)), "graph_b0": Tensor(np.zeros(3))}
        np.testing.assert_allclose(message_pass(Tensor(H0), np.eye(4), p, 1).data, H0)

    def test_isolated_nodes(self):
        b = np.array([0.5, -1.0])
        p = {"graph_W0": Tensor(np.ones((2, 3))), "graph_b0": Tensor(b)}
        out = message_pass(Tensor(np.ones((4, 3))), np.zeros((4, 4)), p, 1)
        np.testing.assert_allclose(out.data, np.tile([0.5, np.expm1(-1.0)], (4, 1)))

    def test_width_mismatch(self):
        p = {"graph_W0": Tensor(np.ones((2, 5))), "graph_b0": Tensor(np.zeros(2))}
        with pytest.raises(dc.ShapeError, match="layer 0"):
            message_pass(Tensor(np.ones((4, 3))), np.eye(4), p, 1)

    def test_constant_head(self):
        p = {"out_theta": Tensor(np.zeros(5)), "out_b": Tensor(2.5)}
        y = predict(Tensor(np.ones((3, 2))), Tensor(np.ones((3, 3))), p)
        np.testing.assert_array_equal(y.data, [2.5, 2.5, 2.5])

    def test_graph_block_zeroed(self):
        theta = np.array([1.0, 2.0, 7.0, 7.0])
        p = {"out_theta": Tensor(theta), "out_b": Tensor(0.0)}
        Hr = np.array([[1.0, 1.0], [0.5, 0.0]])
        np.testing.assert_allclose(predict(Tensor(Hr), Tensor(np.zeros((2, 2))), p).data, Hr @ theta[:2])


class TestCounts:
    def test_default_count(self):
        assert parameter_count(ColaGnnConfig(), 49, 20) == 3714

    def test_shapes_sum(self):
        shapes = parameter_shapes(ColaGnnConfig(), 49, 20)
        D, da, K, N, W = 20, 10, 10, 49, 20
        expected = (D + D * D + D) + (2 * da * D + da + da + 1 + N * N + 1) + K * W \
            + (K * K + K) * 2 + (D + K + 1)
        assert sum(int(np.prod(s)) for s in shapes.values()) == expected

    def test_glorot_bound_and_determinism(self):
        a = glorot_init((20, 10), np.random.default_rng(9))
        assert np.abs(a).max() <= np.sqrt(6 / 30)
        np.testing.assert_array_equal(a, glorot_init((20, 10), np.random.default_rng(9)))


class TestForward:
    def test_tiny_gradient(self, tiny_model):
        x = np.random.default_rng(0).random((4, 5, 8))
        y = np.random.default_rng(1).random((4, 5))
        rep = dc.finite_diff_check(lambda: dc.sum_abs(tiny_model(x) - Tensor(y)), tiny_model.params)
        assert rep.passed, rep.max_rel_error

    def test_eval_deterministic(self, tiny_model):
        x = np.random.default_rng(0).random((2, 5, 8))
        np.testing.assert_array_equal(tiny_model.predict_array(x), tiny_model.predict_array(x))

    def test_dropout_only_in_training(self, tiny_model):
        x = np.random.default_rng(0).random((2, 5, 8))
        a = tiny_model(x, training=True, rng=np.random.default_rng(1)).data
        b = tiny_model(x, training=True, rng=np.random.default_rng(2)).data
        assert not np.array_equal(a, b)

    def test_batch_equals_single(self, tiny_model):
        x = np.random.default_rng(5).random((3, 5, 8))
        batch = tiny_model.predict_array(x)
        for i in range(3):
            np.testing.assert_allclose(tiny_model.predict_array(x[i]), batch[i], atol=1e-14)

    def test_no_loc_identity_decouples(self):
        cfg = ColaGnnConfig(**TINY, use_location_attention=False)
        m = ColaGNN(cfg, np.eye(5), 8, rng=0)
        x = np.random.default_rng(0).random((5, 8))
        base = m.predict_array(x)
        x2 = x.copy()
        x2[3] += 1.0
        changed = m.predict_array(x2) != base
        assert changed[3] and not changed[[0, 1, 2, 4]].any()

    def test_every_parameter_matters(self, tiny_model):
        x = Tensor(np.random.default_rng(0).random((3, 5, 8)))
        for p in tiny_model.params.values():
            p.zero_grad()
        dc.tsum(tiny_model(x)).backward()
        grads = np.concatenate([p.grad.ravel() for p in tiny_model.params.values()])
        assert np.mean(grads != 0) >= 0.99

    def test_attention_shapes(self, tiny_model):
        att = tiny_model.attention(np.random.default_rng(0).random((5, 8)))
        assert att.raw.shape == att.gate.shape == att.fused.shape == (5, 5)

    def test_no_attention_refused(self):
        m = ColaGNN(ColaGnnConfig(**TINY, use_location_attention=False), np.eye(5), 8, rng=0)
        assert not set(ATTENTION_NAMES) & set(m.params)
        with pytest.raises(ValueError, match="without location attention"):
            m.attention(np.zeros((5, 8)))

    def test_bad_input_shape(self, tiny_model):
        with pytest.raises(dc.ShapeError):
            tiny_model.predict_array(np.zeros((5, 7)))


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 7), st.integers(1, 4), st.integers(2, 6), st.integers(0, 10_000))
def test_fused_is_between_operands(n, da, D, seed):
    rng = np.random.default_rng(seed)
    p = attn_params(D, da, n)
    for k in p:
        p[k].data = rng.normal(size=p[k].shape) * 2
    A = normalize_rows(attention_scores(Tensor(rng.normal(size=(n, D))), p))
    adj = np.eye(n)
    M, fused = fuse_attention(A, adj, p)
    lo, hi = np.minimum(A.data, adj), np.maximum(A.data, adj)
    assert ((M.data > 0) & (M.data < 1)).all()
    assert (fused.data >= lo - 1e-12).all() and (fused.data <= hi + 1e-12).all()
