"""Registered gradient checks for every differentiable operation.

Each check builds a small fixed instance, wraps the operation as a scalar
function of a ParamStore (matrix outputs are scalarized through a frozen
random contraction), supplies the closed-form gradient, and runs the
central-difference oracle. The registry is the single source for the
``gradcheck`` CLI subcommand and the gradient acceptance tests.

Clamp-style nonlinearities (cosine clamp, probability clamp, the softmax
floor) carry zero gradient at their boundaries; contractions are masked
to interior points so the finite-difference probe never straddles a kink.
"""

import math

import numpy as np

from . import backend
from .data import NewsArticle
from .denoise import PHI, DenoiseParams, denoise_backward, denoise_forward
from .encoders import (
    ModelParams,
    article_loss_and_grads,
    bce_loss,
    kl_loss,
    prepare_article,
)
from .numerics import GradCheckReport, ParamStore, grad_check
from .trainer import TrainConfig, build_vectorizers, init_params


def _store_of(**arrays) -> ParamStore:
    store = ParamStore()
    for name, arr in arrays.items():
        store.add(name, np.asarray(arr, dtype=np.float64))
    return store


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def check_affinity(seed: int = 11) -> GradCheckReport:
    rng = _rng(seed)
    store = _store_of(
        x_node=0.7 * rng.standard_normal((3, 8)),
        x_seq=0.7 * rng.standard_normal((3, 8)),
        w_affinity=rng.standard_normal((8, 8)) / np.sqrt(8.0),
    )
    c = rng.standard_normal((3, 3))

    def fn(s):
        xn, xs, w = s.value("x_node"), s.value("x_seq"), s.value("w_affinity")
        f = np.tanh(xn @ w @ xs.T)
        dz = c * (1.0 - f * f)
        grads = {
            "w_affinity": xn.T @ dz @ xs,
            "x_node": dz @ xs @ w.T,
            "x_seq": dz.T @ xn @ w,
        }
        return float(np.sum(c * f)), grads

    return grad_check(fn, store)


def check_reference(seed: int = 12) -> GradCheckReport:
    rng = _rng(seed)
    store = _store_of(
        x_node=0.7 * rng.standard_normal((3, 8)),
        x_seq=0.7 * rng.standard_normal((3, 8)),
        affinity=np.tanh(rng.standard_normal((3, 3))),
        w_node=rng.standard_normal((8, 8)) / np.sqrt(8.0),
        w_seq=rng.standard_normal((8, 8)) / np.sqrt(8.0),
    )
    c = rng.standard_normal((3, 8))

    def fn(s):
        xn, xs = s.value("x_node"), s.value("x_seq")
        a, wn, ws = s.value("affinity"), s.value("w_node"), s.value("w_seq")
        r = np.tanh(xn @ wn + a @ xs @ ws)
        du = c * (1.0 - r * r)
        grads = {
            "w_node": xn.T @ du,
            "w_seq": (a @ xs).T @ du,
            "affinity": du @ (xs @ ws).T,
            "x_node": du @ wn.T,
            "x_seq": a.T @ du @ ws.T,
        }
        return float(np.sum(c * r)), grads

    return grad_check(fn, store)


def check_edge_weights(seed: int = 13) -> GradCheckReport:
    rng = _rng(seed)
    x = rng.standard_normal((4, 6))
    r = rng.standard_normal((4, 6))
    _, cos, _, _ = backend.cosine_weights_fwd(x, r)
    # contract only over pairs safely inside the (0, 1) clamp window
    c = rng.standard_normal((4, 4)) * ((cos > 0.05) & (cos < 0.95))
    store = _store_of(x_node=x, reference=r)

    def fn(s):
        xv, rv = s.value("x_node"), s.value("reference")
        w, cs, xn, rn = backend.cosine_weights_fwd(xv, rv)
        d_x, d_r = backend.cosine_weights_bwd(xv, rv, cs, xn, rn, c)
        return float(np.sum(c * w)), {"x_node": d_x, "reference": d_r}

    return grad_check(fn, store)


def check_denoise_composition(seed: int = 14) -> GradCheckReport:
    rng = _rng(seed)
    x_node = 0.8 * rng.standard_normal((3, 8))
    x_seq = 0.8 * rng.standard_normal((3, 8))
    store = _store_of(
        x_node=x_node,
        x_seq=x_seq,
        **{PHI[0]: rng.standard_normal((8, 8)) / np.sqrt(8.0),
           PHI[1]: rng.standard_normal((8, 8)) / np.sqrt(8.0),
           PHI[2]: rng.standard_normal((8, 8)) / np.sqrt(8.0)},
    )
    base = denoise_forward(x_node, x_seq, DenoiseParams.from_store(store))
    c = rng.standard_normal((3, 3)) * ((base.cos > 0.05) & (base.cos < 0.95))

    def fn(s):
        params = DenoiseParams.from_store(s)
        tape = denoise_forward(s.value("x_node"), s.value("x_seq"), params)
        grads, d_xn, d_xs = denoise_backward(tape, params, c)
        grads["x_node"] = d_xn
        grads["x_seq"] = d_xs
        return float(np.sum(c * tape.edge_weights)), grads

    return grad_check(fn, store)


def check_gcn(seed: int = 15) -> GradCheckReport:
    rng = _rng(seed)
    store = _store_of(
        weights=rng.uniform(0.1, 1.0, (4, 4)),
        h0=rng.standard_normal((4, 6)),
        layer1=rng.standard_normal((6, 5)) / np.sqrt(6.0),
        layer2=rng.standard_normal((5, 5)) / np.sqrt(5.0),
    )
    c = rng.standard_normal((4, 5))

    def fn(s):
        w, h0 = s.value("weights"), s.value("h0")
        l1, l2 = s.value("layer1"), s.value("layer2")
        agg1, den1 = backend.gcn_aggregate_fwd(w, h0)
        pre1 = agg1 @ l1
        h1 = np.maximum(pre1, 0.0)
        agg2, den2 = backend.gcn_aggregate_fwd(w, h1)
        pre2 = agg2 @ l2
        out = np.maximum(pre2, 0.0)
        d_pre2 = c * (pre2 > 0)
        d_agg2 = d_pre2 @ l2.T
        d_h1, d_w_a = backend.gcn_aggregate_bwd(w, h1, agg2, den2, d_agg2)
        d_pre1 = d_h1 * (pre1 > 0)
        d_agg1 = d_pre1 @ l1.T
        d_h0, d_w_b = backend.gcn_aggregate_bwd(w, h0, agg1, den1, d_agg1)
        grads = {
            "layer2": agg2.T @ d_pre2,
            "layer1": agg1.T @ d_pre1,
            "weights": d_w_a + d_w_b,
            "h0": d_h0,
        }
        return float(np.sum(c * out)), grads

    return grad_check(fn, store)


def check_seq_mlp(seed: int = 16) -> GradCheckReport:
    rng = _rng(seed)
    store = _store_of(
        x=rng.standard_normal((3, 6)),
        w1=rng.standard_normal((6, 5)) / np.sqrt(6.0),
        b1=0.1 * rng.standard_normal(5),
        w2=rng.standard_normal((5, 4)) / np.sqrt(5.0),
        b2=0.1 * rng.standard_normal(4),
    )
    c = rng.standard_normal((3, 4))

    def fn(s):
        x = s.value("x")
        w1, b1, w2, b2 = (s.value(k) for k in ("w1", "b1", "w2", "b2"))
        midpre = x @ w1 + b1
        mid = np.maximum(midpre, 0.0)
        out = mid @ w2 + b2
        d_mid = c @ w2.T
        d_midpre = d_mid * (midpre > 0)
        grads = {
            "w2": mid.T @ c,
            "b2": c.sum(axis=0),
            "w1": x.T @ d_midpre,
            "b1": d_midpre.sum(axis=0),
            "x": d_midpre @ w1.T,
        }
        return float(np.sum(c * out)), grads

    return grad_check(fn, store)


def check_kl(seed: int = 17) -> GradCheckReport:
    rng = _rng(seed)
    store = _store_of(
        e_str=rng.standard_normal((3, 5)),
        e_seq=rng.standard_normal((3, 5)),
    )

    def fn(s):
        e_str, e_seq = s.value("e_str"), s.value("e_seq")
        n = e_str.shape[0]
        p = np.exp(e_str - e_str.max(axis=1, keepdims=True))
        p /= p.sum(axis=1, keepdims=True)
        q_raw = np.exp(e_seq - e_seq.max(axis=1, keepdims=True))
        q_raw /= q_raw.sum(axis=1, keepdims=True)
        diff = np.log(np.maximum(p, 1e-300)) - np.log(np.maximum(q_raw, 1e-12))
        kl_rows = np.sum(p * diff, axis=1)
        active = q_raw > 1e-12
        srow = np.sum(p * active, axis=1)
        grads = {
            "e_str": p * (diff - kl_rows[:, None]) / n,
            "e_seq": (q_raw * srow[:, None] - p * active) / n,
        }
        return kl_loss(e_str, e_seq), grads

    return grad_check(fn, store)


def check_classifier(seed: int = 18) -> GradCheckReport:
    rng = _rng(seed)
    h = 4
    store = _store_of(
        e_str=rng.standard_normal((3, h)),
        e_seq=rng.standard_normal((3, h)),
        w1=rng.standard_normal((2 * h, h)) / np.sqrt(2.0 * h),
        b1=0.1 * rng.standard_normal(h),
        w2=rng.standard_normal((h, 1)) / np.sqrt(h),
        b2=np.zeros(1),
    )

    def fn(s):
        e_str, e_seq = s.value("e_str"), s.value("e_seq")
        w1, b1, w2, b2 = (s.value(k) for k in ("w1", "b1", "w2", "b2"))
        n = e_str.shape[0]
        concat = np.concatenate([e_str, e_seq], axis=1)
        pooled = concat.mean(axis=0)
        hidpre = pooled @ w1 + b1
        hidden = np.maximum(hidpre, 0.0)
        raw = float(hidden @ w2[:, 0] + b2[0])
        prob = 1.0 / (1.0 + math.exp(-raw))
        loss = -math.log(prob)  # label fixed at 1
        d_raw = prob - 1.0
        d_hidpre = (d_raw * w2[:, 0]) * (hidpre > 0)
        d_pooled = w1 @ d_hidpre
        d_concat = np.tile(d_pooled / n, (n, 1))
        grads = {
            "w2": hidden[:, None] * d_raw,
            "b2": np.array([d_raw]),
            "w1": np.outer(pooled, d_hidpre),
            "b1": d_hidpre,
            "e_str": d_concat[:, :h],
            "e_seq": d_concat[:, h:],
        }
        return loss, grads

    return grad_check(fn, store)


def check_bce(seed: int = 19) -> GradCheckReport:
    rng = _rng(seed)
    labels = [1, 0, 1, 0]
    store = _store_of(probs=rng.uniform(0.15, 0.85, 4))

    def fn(s):
        p = s.value("probs")
        grad = np.array([(pi - yi) / (pi * (1.0 - pi)) for pi, yi in zip(p, labels)])
        return bce_loss(list(p), labels), {"probs": grad / len(labels)}

    return grad_check(fn, store)


def _article_check(ablate: str, with_image: bool, seed: int) -> GradCheckReport:
    cfg = TrainConfig(d=8, h=4, seed=seed, ablate=ablate, max_epochs=1)
    node_vec, seq_vec = build_vectorizers(cfg)
    rng = _rng(seed)
    if with_image:
        article = NewsArticle(
            "chk-img",
            ["alpha beta gamma.", "delta low tide."],
            [list(rng.standard_normal(5)), list(rng.standard_normal(5))],
            1,
        )
        d_img = 5
    else:
        article = NewsArticle(
            "chk-txt",
            ["markets rallied on quiet news.",
             "officials denied the viral claim.",
             "the clip was filmed years earlier."],
            None,
            1,
        )
        d_img = None
    prep = prepare_article(article, node_vec, seq_vec)
    store = init_params(cfg, d_img)
    beta = 0.1

    def fn(s):
        phi = DenoiseParams.from_store(s)
        theta = ModelParams.from_store(s)
        out, grads = article_loss_and_grads(prep, phi, theta, ablate, kl_weight=beta)
        return out.loss_cls + beta * out.loss_kl, grads

    return grad_check(fn, store)


def check_model_full(seed: int = 21) -> GradCheckReport:
    return _article_check("full", with_image=False, seed=seed)


def check_model_full_image(seed: int = 27) -> GradCheckReport:
    return _article_check("full", with_image=True, seed=seed)


def check_model_no_inf(seed: int = 23) -> GradCheckReport:
    return _article_check("no_inf", with_image=False, seed=seed)


def check_model_no_seq(seed: int = 24) -> GradCheckReport:
    return _article_check("no_seq", with_image=False, seed=seed)


def check_model_no_gra(seed: int = 25) -> GradCheckReport:
    return _article_check("no_gra", with_image=False, seed=seed)


REGISTRY = (
    ("affinity", check_affinity),
    ("reference", check_reference),
    ("edge-weights", check_edge_weights),
    ("denoise-composition", check_denoise_composition),
    ("gcn", check_gcn),
    ("seq-mlp", check_seq_mlp),
    ("kl", check_kl),
    ("classifier", check_classifier),
    ("bce", check_bce),
    ("model-full", check_model_full),
    ("model-full-image", check_model_full_image),
    ("model-no-inf", check_model_no_inf),
    ("model-no-seq", check_model_no_seq),
    ("model-no-gra", check_model_no_gra),
)


def run_all():
    """Run every registered check; returns [(name, GradCheckReport)]."""
    return [(name, builder()) for name, builder in REGISTRY]
