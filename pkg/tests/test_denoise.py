"""Edge-weight inference: affinity, reference semantics, cosine weights."""

import numpy as np
import pytest

from breaknet.denoise import (
    PHI,
    DenoiseParams,
    compute_affinity,
    compute_reference,
    denoise_backward,
    denoise_forward,
    denoise_graph,
    infer_edge_weights,
)
from breaknet.embedding import ArticleFeatures
from breaknet.graph import build_graph
from breaknet.numerics import ParamStore, grad_check
from tests.util import (
    make_rng,
    naive_affinity,
    naive_edge_weights,
    naive_reference,
)


def random_params(rng, d):
    return DenoiseParams(
        rng.standard_normal((d, d)) / d,
        rng.standard_normal((d, d)) / d,
        rng.standard_normal((d, d)) / d,
    )


def random_channels(rng, n, d):
    x_node = rng.standard_normal((n, d))
    x_node /= np.linalg.norm(x_node, axis=1, keepdims=True)
    x_seq = rng.standard_normal((n, d))
    x_seq /= np.linalg.norm(x_seq, axis=1, keepdims=True)
    return x_node, x_seq


class TestDenoiseParams:
    def test_from_store_round_trip(self, rng):
        store = ParamStore()
        arrays = {name: rng.standard_normal((4, 4)) for name in PHI}
        for name, arr in arrays.items():
            store.add(name, arr)
        params = DenoiseParams.from_store(store)
        np.testing.assert_array_equal(params.w_affinity, arrays[PHI[0]])
        np.testing.assert_array_equal(params.w_node, arrays[PHI[1]])
        np.testing.assert_array_equal(params.w_seq, arrays[PHI[2]])
        assert params.d == 4


class TestAffinity:
    @pytest.mark.parametrize("trial", range(15))
    def test_matches_naive_loops(self, trial):
        rng = make_rng(1100 + trial)
        n, d = int(rng.integers(2, 6)), int(rng.integers(2, 5))
        x_node, x_seq = random_channels(rng, n, d)
        params = random_params(rng, d)
        got = compute_affinity(x_node, x_seq, params)
        want = naive_affinity(x_node, x_seq, params.w_affinity)
        np.testing.assert_allclose(got, want, rtol=0, atol=1e-12)

    def test_bounded_by_tanh(self, rng):
        x_node, x_seq = random_channels(rng, 6, 5)
        aff = compute_affinity(x_node, x_seq, random_params(rng, 5))
        assert np.all(aff > -1.0) and np.all(aff < 1.0)

    def test_shape_validation(self, rng):
        params = random_params(rng, 4)
        with pytest.raises(ValueError, match="width"):
            compute_affinity(np.zeros((3, 5)), np.zeros((3, 5)), params)
        with pytest.raises(ValueError, match="shapes differ"):
            compute_affinity(np.zeros((3, 4)), np.zeros((2, 4)), params)
        with pytest.raises(ValueError, match="2-d"):
            compute_affinity(np.zeros(4), np.zeros(4), params)


class TestReference:
    @pytest.mark.parametrize("trial", range(10))
    def test_matches_naive_loops(self, trial):
        rng = make_rng(1200 + trial)
        n, d = int(rng.integers(2, 5)), int(rng.integers(2, 4))
        x_node, x_seq = random_channels(rng, n, d)
        params = random_params(rng, d)
        aff = compute_affinity(x_node, x_seq, params)
        got = compute_reference(x_node, x_seq, aff, params)
        want = naive_reference(x_node, x_seq, aff, params.w_node, params.w_seq)
        np.testing.assert_allclose(got, want, rtol=0, atol=1e-12)

    def test_affinity_shape_checked(self, rng):
        x_node, x_seq = random_channels(rng, 4, 3)
        params = random_params(rng, 3)
        with pytest.raises(ValueError, match="affinity shape"):
            compute_reference(x_node, x_seq, np.zeros((3, 3)), params)


class TestEdgeWeights:
    @pytest.mark.parametrize("trial", range(15))
    def test_matches_naive_loops(self, trial):
        rng = make_rng(1300 + trial)
        n, d = int(rng.integers(2, 7)), int(rng.integers(2, 5))
        x_node = rng.standard_normal((n, d))
        reference = rng.standard_normal((n, d))
        got = infer_edge_weights(x_node, reference)
        np.testing.assert_allclose(got, naive_edge_weights(x_node, reference),
                                   rtol=0, atol=1e-12)

    def test_range_and_diagonal(self, rng):
        x_node, _ = random_channels(rng, 8, 4)
        reference = rng.standard_normal((8, 4))
        w = infer_edge_weights(x_node, reference)
        assert w.min() >= 0.0 and w.max() <= 1.0
        np.testing.assert_array_equal(np.diag(w), np.zeros(8))

    def test_zero_rows_give_zero_weights(self, rng):
        x_node, _ = random_channels(rng, 4, 3)
        reference = rng.standard_normal((4, 3))
        x_node[1] = 0.0
        reference[2] = 0.0
        w = infer_edge_weights(x_node, reference)
        np.testing.assert_array_equal(w[1, :], np.zeros(4))
        np.testing.assert_array_equal(w[:, 2], np.zeros(4))

    def test_identical_unit_rows_saturate(self):
        # cos(x, x) = 1, so off-diagonal weights hit the upper clamp exactly
        x = np.tile(np.array([[0.6, 0.8]]), (3, 1))
        w = infer_edge_weights(x, x.copy())
        np.testing.assert_allclose(w, np.ones((3, 3)) - np.eye(3), atol=1e-12)


class TestDenoiseGraph:
    def test_composition_and_graph_masking(self, rng):
        n, d = 5, 4
        x_node, x_seq = random_channels(rng, n, d)
        params = random_params(rng, d)
        g = build_graph(ArticleFeatures(x_node, x_seq, n, 0))
        g2, out = denoise_graph(g, x_seq, params)
        np.testing.assert_allclose(out.affinity,
                                   compute_affinity(x_node, x_seq, params), atol=0)
        np.testing.assert_allclose(
            out.reference,
            compute_reference(x_node, x_seq, out.affinity, params), atol=0)
        np.testing.assert_allclose(out.edge_weights,
                                   infer_edge_weights(x_node, out.reference), atol=0)
        np.testing.assert_array_equal(g2.edge_weights, out.edge_weights)
        # original all-ones weights untouched
        np.testing.assert_array_equal(g.edge_weights, np.ones((n, n)) - np.eye(n))


class TestDenoiseBackward:
    def test_tape_matches_forward_stages(self, rng):
        x_node, x_seq = random_channels(rng, 4, 3)
        params = random_params(rng, 3)
        tape = denoise_forward(x_node, x_seq, params)
        np.testing.assert_allclose(tape.affinity,
                                   compute_affinity(x_node, x_seq, params), atol=0)
        np.testing.assert_allclose(tape.edge_weights,
                                   infer_edge_weights(x_node, tape.reference), atol=0)
        np.testing.assert_allclose(tape.x_norms, np.linalg.norm(x_node, axis=1),
                                   atol=1e-15)

    def test_parameter_gradients_pass_grad_check(self):
        rng = make_rng(1400)
        n, d = 4, 3
        x_node, x_seq = random_channels(rng, n, d)
        # random projection makes the scalar objective sensitive to every edge
        probe = rng.standard_normal((n, n))
        store = ParamStore()
        for name in PHI:
            store.add(name, rng.standard_normal((d, d)) / d)
        store.add("in.x_node", x_node)
        store.add("in.x_seq", x_seq)

        def fn(s):
            params = DenoiseParams.from_store(s)
            tape = denoise_forward(s.value("in.x_node"), s.value("in.x_seq"), params)
            value = float(np.sum(tape.edge_weights * probe))
            grads, d_x_node, d_x_seq = denoise_backward(tape, params, probe)
            grads = dict(grads)
            grads["in.x_node"] = d_x_node
            grads["in.x_seq"] = d_x_seq
            return value, grads

        report = grad_check(fn, store)
        assert report.passed, report.summary()
