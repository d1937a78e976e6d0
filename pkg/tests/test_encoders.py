"""Graph and sequence encoders, KL alignment, classification, ablations."""

import numpy as np
import pytest

from breaknet.data import NewsArticle
from breaknet.denoise import PHI, DenoiseParams, denoise_graph
from breaknet.embedding import ArticleFeatures, HashVectorizer, embed_article
from breaknet.encoders import (
    ABLATIONS,
    PROB_CLAMP,
    ModelParams,
    article_loss_and_grads,
    bce_loss,
    gcn_forward,
    kl_loss,
    mlp_forward,
    model_forward,
    pool_and_classify,
    prepare_article,
    theta_names,
)
from breaknet.graph import build_graph
from breaknet.numerics import ParamStore
from breaknet.trainer import TrainConfig, init_params
from tests.util import (
    make_rng,
    naive_bce,
    naive_gcn_forward,
    naive_kl,
)


def small_config(ablate="full", d=8, h=4, seed=99):
    return TrainConfig(d=d, h=h, seed=seed, ablate=ablate)


def params_of(cfg, d_img=None):
    store = init_params(cfg, d_img)
    return store, DenoiseParams.from_store(store), ModelParams.from_store(store)


def article_with_images(rng, d_img=5):
    return NewsArticle(
        "mix-1",
        ["floods reported upstream.", "agency disputes the figures."],
        [list(rng.standard_normal(d_img)) for _ in range(2)],
        1,
    )


class TestGcnForward:
    @pytest.mark.parametrize("trial", range(10))
    def test_matches_naive_loops(self, trial):
        rng = make_rng(2100 + trial)
        n, d, h = int(rng.integers(2, 6)), int(rng.integers(2, 5)), int(rng.integers(2, 5))
        x = rng.standard_normal((n, d))
        w = rng.uniform(0.0, 1.0, (n, n))
        np.fill_diagonal(w, 0.0)
        layer1 = rng.standard_normal((d, h))
        layer2 = rng.standard_normal((h, h))
        g = build_graph(ArticleFeatures(x, x.copy(), n, 0)).with_edge_weights(w)
        params = ModelParams(layer1, layer2, *(np.zeros(0),) * 8)
        got = gcn_forward(g, params)
        np.testing.assert_allclose(got, naive_gcn_forward(x, w, layer1, layer2),
                                   rtol=0, atol=1e-12)

    def test_width_mismatch_rejected(self, rng):
        g = build_graph(ArticleFeatures(rng.standard_normal((3, 4)),
                                        rng.standard_normal((3, 4)), 3, 0))
        params = ModelParams(np.zeros((5, 2)), np.zeros((2, 2)), *(np.zeros(0),) * 8)
        with pytest.raises(ValueError, match="width"):
            gcn_forward(g, params)

    def test_output_is_nonnegative(self, rng):
        g = build_graph(ArticleFeatures(rng.standard_normal((4, 3)),
                                        rng.standard_normal((4, 3)), 4, 0))
        params = ModelParams(rng.standard_normal((3, 2)), rng.standard_normal((2, 2)),
                             *(np.zeros(0),) * 8)
        assert gcn_forward(g, params).min() >= 0.0


class TestMlpForward:
    def test_matches_manual_composition(self, rng):
        x = rng.standard_normal((5, 3))
        w1, b1 = rng.standard_normal((3, 4)), rng.standard_normal(4)
        w2, b2 = rng.standard_normal((4, 4)), rng.standard_normal(4)
        got = mlp_forward(x, (w1, b1, w2, b2))
        want = np.maximum(x @ w1 + b1, 0.0) @ w2 + b2
        np.testing.assert_allclose(got, want, atol=1e-15)

    def test_width_checked(self, rng):
        with pytest.raises(ValueError, match="width"):
            mlp_forward(rng.standard_normal((2, 3)),
                        (np.zeros((4, 4)), np.zeros(4), np.zeros((4, 4)), np.zeros(4)))


class TestKlLoss:
    @pytest.mark.parametrize("trial", range(15))
    def test_matches_naive_loops(self, trial):
        rng = make_rng(2200 + trial)
        n, h = int(rng.integers(1, 6)), int(rng.integers(2, 6))
        e_str = rng.standard_normal((n, h)) * 3
        e_seq = rng.standard_normal((n, h)) * 3
        assert abs(kl_loss(e_str, e_seq) - naive_kl(e_str, e_seq)) < 1e-12

    def test_identical_streams_give_zero(self, rng):
        e = rng.standard_normal((4, 5))
        assert abs(kl_loss(e, e.copy())) < 1e-15

    def test_clamp_keeps_value_finite(self):
        # a huge logit spread underflows softmax(q); the clamp bounds the log
        e_str = np.array([[0.0, 0.0]])
        e_seq = np.array([[100.0, -100.0]])
        value = kl_loss(e_str, e_seq)
        assert np.isfinite(value)
        assert abs(value - naive_kl(e_str, e_seq)) < 1e-9

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError, match="shapes differ"):
            kl_loss(np.zeros((2, 3)), np.zeros((3, 2)))

    def test_nonnegative_without_clamping(self, rng):
        for trial in range(10):
            r = make_rng(2300 + trial)
            e_str = r.standard_normal((3, 4))
            e_seq = r.standard_normal((3, 4))
            assert kl_loss(e_str, e_seq) >= -1e-15


class TestBceLoss:
    def test_frozen_values(self):
        assert abs(bce_loss([0.5], [1]) - 0.6931471805599453) < 1e-15
        assert abs(bce_loss([0.9], [1]) - 0.10536051565782628) < 1e-15
        assert abs(bce_loss([0.9, 0.2], [1, 0]) - 0.164252033486018) < 1e-15

    @pytest.mark.parametrize("trial", range(10))
    def test_matches_naive_loops(self, trial):
        rng = make_rng(2400 + trial)
        n = int(rng.integers(1, 9))
        probs = rng.uniform(0.01, 0.99, n)
        labels = list(rng.integers(0, 2, n))
        assert abs(bce_loss(probs, labels) - naive_bce(probs, labels)) < 1e-12

    def test_validation(self):
        with pytest.raises(ValueError, match="outside"):
            bce_loss([0.0], [0])
        with pytest.raises(ValueError, match="outside"):
            bce_loss([1.0], [1])
        with pytest.raises(ValueError, match="label"):
            bce_loss([0.5], [2])
        with pytest.raises(ValueError, match="equal-length"):
            bce_loss([0.5], [1, 0])
        with pytest.raises(ValueError, match="non-empty"):
            bce_loss([], [])


class TestClassifier:
    def test_pool_and_classify_matches_manual(self, rng):
        cfg = small_config()
        _, _, theta = params_of(cfg)
        e_str = rng.standard_normal((3, cfg.h))
        e_seq = rng.standard_normal((3, cfg.h))
        pooled, prob = pool_and_classify(e_str, e_seq, theta)
        want_pooled = np.concatenate([e_str, e_seq], axis=1).mean(axis=0)
        np.testing.assert_allclose(pooled, want_pooled, atol=1e-15)
        hidden = np.maximum(want_pooled @ theta.cls_w1 + theta.cls_b1, 0.0)
        raw = float(hidden @ theta.cls_w2[:, 0] + theta.cls_b2[0])
        want_prob = 1.0 / (1.0 + np.exp(-raw))
        assert abs(prob - want_prob) < 1e-15

    def test_probability_clamped_at_extremes(self, rng):
        cfg = small_config()
        _, _, theta = params_of(cfg)
        # saturate the logistic unit in both directions
        big = ModelParams(theta.gcn_layer1, theta.gcn_layer2, theta.seq_w1,
                          theta.seq_b1, theta.seq_w2, theta.seq_b2,
                          np.ones_like(theta.cls_w1), np.ones_like(theta.cls_b1),
                          np.full_like(theta.cls_w2, 1e4), np.array([1e4]))
        e = np.abs(rng.standard_normal((3, cfg.h))) + 1.0
        _, prob_hi = pool_and_classify(e, e, big)
        assert prob_hi == 1.0 - PROB_CLAMP
        low = ModelParams(theta.gcn_layer1, theta.gcn_layer2, theta.seq_w1,
                          theta.seq_b1, theta.seq_w2, theta.seq_b2,
                          np.ones_like(theta.cls_w1), np.ones_like(theta.cls_b1),
                          np.full_like(theta.cls_w2, -1e4), np.array([-1e4]))
        _, prob_lo = pool_and_classify(e, e, low)
        assert prob_lo == PROB_CLAMP
        # clamped probabilities keep the loss finite
        assert np.isfinite(bce_loss([prob_hi], [0]))
        assert np.isfinite(bce_loss([prob_lo], [1]))


class TestPrepareArticle:
    def test_caches_sentence_channels(self, channel_pair, text_article):
        node_vec, seq_vec = channel_pair
        prep = prepare_article(text_article, node_vec, seq_vec)
        assert prep.id == text_article.id and prep.label == 1
        np.testing.assert_array_equal(prep.sent_node,
                                      node_vec.sentence_matrix(text_article))
        assert prep.image_vectors is None and prep.n_images == 0

    def test_keeps_raw_image_vectors(self, channel_pair):
        rng = make_rng(7)
        node_vec, seq_vec = channel_pair
        art = article_with_images(rng)
        prep = prepare_article(art, node_vec, seq_vec)
        assert prep.n_images == 2
        np.testing.assert_array_equal(prep.image_vectors, np.asarray(art.image_vectors))


class TestModelForward:
    def small_world(self, ablate="full", label=1):
        cfg = small_config(ablate)
        store, phi, theta = params_of(cfg)
        node_vec = HashVectorizer(21, cfg.d)
        seq_vec = HashVectorizer(22, cfg.d)
        art = NewsArticle("m-1", ["first sentence here.", "second one follows.",
                                  "third wraps it up."], None, label)
        return cfg, store, phi, theta, node_vec, seq_vec, art

    def test_full_mode_composes_public_ops(self):
        cfg, _, phi, theta, node_vec, seq_vec, art = self.small_world()
        out = model_forward(art, node_vec, seq_vec, phi, theta, "full")
        feats = embed_article(art, node_vec, seq_vec)
        g, _ = denoise_graph(build_graph(feats), feats.x_seq, phi)
        e_str = gcn_forward(g, theta)
        e_seq = mlp_forward(feats.x_seq,
                            (theta.seq_w1, theta.seq_b1, theta.seq_w2, theta.seq_b2))
        np.testing.assert_allclose(out.e_str, e_str, atol=1e-15)
        np.testing.assert_allclose(out.e_seq, e_seq, atol=1e-15)
        assert abs(out.loss_kl - kl_loss(e_str, e_seq)) < 1e-15
        pooled, prob = pool_and_classify(e_str, e_seq, theta)
        assert abs(out.prob - prob) < 1e-15
        assert abs(out.loss_cls - bce_loss([prob], [1])) < 1e-15

    def test_no_inf_keeps_uniform_weights(self):
        cfg, _, phi, theta, node_vec, seq_vec, art = self.small_world("no_inf")
        out = model_forward(art, node_vec, seq_vec, phi, theta, "no_inf")
        feats = embed_article(art, node_vec, seq_vec)
        e_str = gcn_forward(build_graph(feats), theta)  # all-ones weights
        np.testing.assert_allclose(out.e_str, e_str, atol=1e-15)
        assert out.loss_kl > 0.0  # alignment term still reported

    def test_no_seq_drops_sequence_stream(self):
        cfg, _, phi, theta, node_vec, seq_vec, art = self.small_world("no_seq")
        out = model_forward(art, node_vec, seq_vec, phi, theta, "no_seq")
        assert out.e_seq is None
        assert out.loss_kl == 0.0
        assert out.pooled.shape == (cfg.h,)
        # weights stay uniform too: the denoiser belongs to the dropped channel
        feats = embed_article(art, node_vec, seq_vec)
        np.testing.assert_allclose(out.e_str, gcn_forward(build_graph(feats), theta),
                                   atol=1e-15)

    def test_no_gra_uses_sequence_only(self):
        cfg, _, phi, theta, node_vec, seq_vec, art = self.small_world("no_gra")
        out = model_forward(art, node_vec, seq_vec, phi, theta, "no_gra")
        assert out.e_str is None
        assert out.loss_kl == 0.0
        assert out.pooled.shape == (cfg.h,)
        feats = embed_article(art, node_vec, seq_vec)
        e_seq = mlp_forward(feats.x_seq,
                            (theta.seq_w1, theta.seq_b1, theta.seq_w2, theta.seq_b2))
        np.testing.assert_allclose(out.e_seq, e_seq, atol=1e-15)

    def test_edge_weights_override(self, rng):
        cfg, _, phi, theta, node_vec, seq_vec, art = self.small_world()
        w = rng.uniform(0.0, 1.0, (3, 3))
        np.fill_diagonal(w, 0.0)
        out = model_forward(art, node_vec, seq_vec, phi, theta, "full",
                            edge_weights_override=w)
        feats = embed_article(art, node_vec, seq_vec)
        g = build_graph(feats).with_edge_weights(w)
        np.testing.assert_allclose(out.e_str, gcn_forward(g, theta), atol=1e-15)

    def test_unlabeled_article_has_no_cls_loss(self):
        cfg, _, phi, theta, node_vec, seq_vec, art = self.small_world(label=None)
        out = model_forward(art, node_vec, seq_vec, phi, theta, "full")
        assert out.loss_cls is None
        assert 0.0 < out.prob < 1.0

    def test_unknown_ablation_rejected(self):
        cfg, _, phi, theta, node_vec, seq_vec, art = self.small_world()
        with pytest.raises(ValueError, match="bogus"):
            model_forward(art, node_vec, seq_vec, phi, theta, "bogus")


class TestArticleLossAndGrads:
    @pytest.mark.parametrize("ablate", ABLATIONS)
    def test_forward_agrees_with_model_forward(self, ablate):
        cfg = small_config(ablate)
        store, phi, theta = params_of(cfg)
        node_vec = HashVectorizer(31, cfg.d)
        seq_vec = HashVectorizer(32, cfg.d)
        art = NewsArticle("g-1", ["alpha beta gamma.", "delta epsilon.",
                                  "zeta eta theta."], None, 0)
        prep = prepare_article(art, node_vec, seq_vec)
        out, grads = article_loss_and_grads(prep, phi, theta, ablate, kl_weight=0.1)
        ref = model_forward(art, node_vec, seq_vec, phi, theta, ablate)
        assert abs(out.loss_cls - ref.loss_cls) < 1e-15
        assert abs(out.loss_kl - ref.loss_kl) < 1e-15
        assert abs(out.prob - ref.prob) < 1e-15

    def test_grad_names_follow_the_active_path(self):
        cfg = small_config()
        store, phi, theta = params_of(cfg)
        node_vec = HashVectorizer(31, cfg.d)
        seq_vec = HashVectorizer(32, cfg.d)
        art = NewsArticle("g-2", ["one two.", "three four.", "five six."], None, 1)
        prep = prepare_article(art, node_vec, seq_vec)

        _, g_full = article_loss_and_grads(prep, phi, theta, "full", kl_weight=0.1)
        assert set(PHI) <= set(g_full)
        assert "gcn.layer1" in g_full and "seq_mlp.w1" in g_full

        _, g_no_inf = article_loss_and_grads(prep, phi, theta, "no_inf", kl_weight=0.1)
        assert not set(PHI) & set(g_no_inf)

        cfg_ns = small_config("no_seq")
        _, phi_ns, theta_ns = params_of(cfg_ns)
        _, g_no_seq = article_loss_and_grads(prep, phi_ns, theta_ns, "no_seq")
        assert "seq_mlp.w1" not in g_no_seq and "gcn.layer1" in g_no_seq

        cfg_ng = small_config("no_gra")
        _, phi_ng, theta_ng = params_of(cfg_ng)
        _, g_no_gra = article_loss_and_grads(prep, phi_ng, theta_ng, "no_gra")
        assert "gcn.layer1" not in g_no_gra and "seq_mlp.w1" in g_no_gra

    def test_image_projection_receives_gradient(self):
        rng = make_rng(8)
        cfg = small_config()
        store, phi, theta = params_of(cfg, d_img=5)
        node_vec = HashVectorizer(31, cfg.d)
        seq_vec = HashVectorizer(32, cfg.d)
        prep = prepare_article(article_with_images(rng), node_vec, seq_vec)
        _, grads = article_loss_and_grads(prep, phi, theta, "full", kl_weight=0.1)
        assert grads["image_proj"].shape == (5, cfg.d)
        assert np.any(grads["image_proj"] != 0.0)

    def test_unlabeled_article_rejected(self, channel_pair):
        node_vec, seq_vec = channel_pair
        cfg = small_config()
        _, phi, theta = params_of(cfg)
        art = NewsArticle("u-1", ["one.", "two."], None, None)
        prep = prepare_article(art, HashVectorizer(31, cfg.d), HashVectorizer(32, cfg.d))
        with pytest.raises(ValueError, match="label"):
            article_loss_and_grads(prep, phi, theta)


class TestThetaNames:
    def test_partition_without_images(self):
        store = init_params(small_config())
        names = theta_names(store)
        assert not set(PHI) & set(names)
        assert set(names) | set(PHI) == set(store.names())

    def test_partition_with_images(self):
        store = init_params(small_config(), d_img=6)
        assert "image_proj" in theta_names(store)

    def test_model_params_from_store(self):
        store = init_params(small_config(), d_img=6)
        theta = ModelParams.from_store(store)
        assert theta.image_proj.shape == (6, 8)
        theta2 = ModelParams.from_store(init_params(small_config()))
        assert theta2.image_proj is None
