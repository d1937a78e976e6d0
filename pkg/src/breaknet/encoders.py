"""Feature encoders, alignment and classification losses, and their gradients.

Two encoders read the article in parallel: a 2-layer weighted GCN over the
denoised graph (structural stream) and a 2-layer MLP over the sequence
channel (sequential stream). A row-wise softmax KL term pulls the
structural features toward the sequential ones; the classifier consumes
the concatenated, mean-pooled streams through a small MLP and a logistic
output.

Everything differentiable here is backpropagated in closed form:
``article_loss_and_grads`` runs one forward pass, tapes the
intermediates in locals, and returns gradients for every parameter the
loss actually touches. Ablation switches reroute the pipeline:

* ``full``    - denoise, both streams, KL on.
* ``no_inf``  - skip weight inference; edge weights stay at 1.
* ``no_seq``  - sequence channel dead: no denoise, no sequence stream,
                no KL; classifier reads the structural stream alone.
* ``no_gra``  - graph dead: sequence stream only, no KL.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import backend
from .denoise import PHI, DenoiseParams, denoise_backward, denoise_forward, denoise_graph
from .embedding import embed_article
from .graph import ContentGraph, build_graph

ABLATIONS = ("full", "no_inf", "no_seq", "no_gra")

PROB_CLAMP = 1e-7
Q_CLAMP = 1e-12

_THETA_BASE = (
    "gcn.layer1",
    "gcn.layer2",
    "seq_mlp.w1",
    "seq_mlp.b1",
    "seq_mlp.w2",
    "seq_mlp.b2",
    "classifier.w1",
    "classifier.b1",
    "classifier.w2",
    "classifier.b2",
)
IMAGE_PROJ = "image_proj"


def theta_names(store) -> list[str]:
    """Every non-denoise parameter name present in the store."""
    return [n for n in store.names() if n not in PHI]


@dataclass(frozen=True)
class ModelParams:
    gcn_layer1: np.ndarray       # (d, h)
    gcn_layer2: np.ndarray       # (h, h)
    seq_w1: np.ndarray           # (d, h)
    seq_b1: np.ndarray           # (h,)
    seq_w2: np.ndarray           # (h, h)
    seq_b2: np.ndarray           # (h,)
    cls_w1: np.ndarray           # (2h or h, h)
    cls_b1: np.ndarray           # (h,)
    cls_w2: np.ndarray           # (h, 1)
    cls_b2: np.ndarray           # (1,)
    image_proj: np.ndarray | None = None  # (d_img, d)

    @classmethod
    def from_store(cls, store) -> "ModelParams":
        return cls(
            *(store.value(name) for name in _THETA_BASE),
            image_proj=store.value(IMAGE_PROJ) if IMAGE_PROJ in store else None,
        )


@dataclass(frozen=True)
class ForwardOutput:
    e_str: np.ndarray | None   # (N, h) structural features, None under no_gra
    e_seq: np.ndarray | None   # (N, h) sequential features, None under no_seq
    pooled: np.ndarray         # mean-pooled classifier input
    prob: float                # clamped to (0, 1)
    loss_cls: float | None     # None when the article carries no label
    loss_kl: float


def _relu(x):
    return np.maximum(x, 0.0)


def _sigmoid(x: float) -> float:
    if x >= 0.0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def _softmax_rows(m):
    shifted = m - m.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def gcn_forward(g: ContentGraph, params: ModelParams) -> np.ndarray:
    """Two rounds of incoming-edge aggregation, each followed by a linear
    map and relu. Aggregation for target t averages weighted source rows
    together with a unit self-loop:

        agg[t] = (sum_s w(s->t) h[s] + h[t]) / (sum_s w(s->t) + 1)
    """
    if g.x_node.shape[1] != params.gcn_layer1.shape[0]:
        raise ValueError(
            f"node feature width {g.x_node.shape[1]} != gcn input width "
            f"{params.gcn_layer1.shape[0]}"
        )
    w = np.ascontiguousarray(g.edge_weights, dtype=np.float64)
    agg1, _ = backend.gcn_aggregate_fwd(w, np.ascontiguousarray(g.x_node, dtype=np.float64))
    h1 = _relu(agg1 @ params.gcn_layer1)
    agg2, _ = backend.gcn_aggregate_fwd(w, h1)
    return _relu(agg2 @ params.gcn_layer2)


def mlp_forward(x, layers) -> np.ndarray:
    """(w1, b1, w2, b2): relu after the first affine map, identity after
    the second."""
    w1, b1, w2, b2 = layers
    if x.shape[1] != w1.shape[0]:
        raise ValueError(f"input width {x.shape[1]} != first-layer width {w1.shape[0]}")
    return _relu(x @ w1 + b1) @ w2 + b2


def _classify(features, params: ModelParams):
    """Mean-pool rows, then a 2-layer head to one logistic unit."""
    pooled = features.mean(axis=0)
    if pooled.shape[0] != params.cls_w1.shape[0]:
        raise ValueError(
            f"classifier input width {pooled.shape[0]} != expected {params.cls_w1.shape[0]}"
        )
    hidpre = pooled @ params.cls_w1 + params.cls_b1
    hidden = _relu(hidpre)
    raw = float(hidden @ params.cls_w2[:, 0] + params.cls_b2[0])
    p_raw = _sigmoid(raw)
    prob = min(max(p_raw, PROB_CLAMP), 1.0 - PROB_CLAMP)
    return pooled, prob, p_raw, hidden, hidpre


def pool_and_classify(e_str, e_seq, params: ModelParams):
    """Concatenate the two streams per node, mean-pool, classify.

    Returns (pooled 2h-vector, probability in (0, 1))."""
    pooled, prob, _, _, _ = _classify(np.concatenate([e_str, e_seq], axis=1), params)
    return pooled, prob


def kl_loss(e_str, e_seq) -> float:
    """Mean over rows of KL(softmax(e_str row) || softmax(e_seq row)).

    The reference distribution is clamped below at 1e-12 before the log.
    """
    if e_str.shape != e_seq.shape:
        raise ValueError(f"stream shapes differ: {e_str.shape} vs {e_seq.shape}")
    p = _softmax_rows(e_str)
    q = np.maximum(_softmax_rows(e_seq), Q_CLAMP)
    # p log p -> 0 as p -> 0; guard the log, the factor p kills the rest
    diff = np.log(np.maximum(p, 1e-300)) - np.log(q)
    return float(np.mean(np.sum(p * diff, axis=1)))


def bce_loss(probs, labels) -> float:
    """Mean binary cross-entropy; probabilities must already be clamped
    inside (0, 1)."""
    probs = list(probs)
    labels = list(labels)
    if len(probs) != len(labels) or not probs:
        raise ValueError("probs and labels must be equal-length and non-empty")
    total = 0.0
    for p, y in zip(probs, labels):
        if not 0.0 < p < 1.0:
            raise ValueError(f"probability {p!r} outside (0, 1)")
        if y not in (0, 1):
            raise ValueError(f"label {y!r} not in {{0, 1}}")
        total += -(y * math.log(p) + (1 - y) * math.log(1.0 - p))
    return total / len(probs)


@dataclass(frozen=True)
class PreparedArticle:
    """Cached channel features for one article.

    Sentence rows are fixed by the vectorizers; image rows depend on the
    learnable projection and are rebuilt each forward pass.
    """

    id: str
    label: int | None
    sent_node: np.ndarray            # (M, d)
    sent_seq: np.ndarray             # (M, d)
    image_vectors: np.ndarray | None  # (P, d_img)

    @property
    def n_images(self) -> int:
        return 0 if self.image_vectors is None else self.image_vectors.shape[0]


def prepare_article(article, node_vec, seq_vec) -> PreparedArticle:
    if node_vec.dim != seq_vec.dim:
        raise ValueError(f"channel dims differ: {node_vec.dim} vs {seq_vec.dim}")
    if node_vec.source_key() == seq_vec.source_key():
        raise ValueError("node and sequence channels must use distinct sources")
    images = article.image_vectors or []
    if not article.sentences and not images:
        raise ValueError(f"empty article {article.id!r}")
    return PreparedArticle(
        article.id,
        article.label,
        node_vec.sentence_matrix(article),
        seq_vec.sentence_matrix(article),
        np.asarray(images, dtype=np.float64) if images else None,
    )


def _channel_matrices(prep: PreparedArticle, image_proj):
    if prep.n_images == 0:
        return prep.sent_node, prep.sent_seq, None
    if image_proj is None:
        raise ValueError(f"article {prep.id!r} has images but no projection matrix")
    proj = prep.image_vectors @ image_proj
    return np.vstack([prep.sent_node, proj]), np.vstack([prep.sent_seq, proj]), proj


def article_loss_and_grads(prep: PreparedArticle, phi: DenoiseParams, theta: ModelParams,
                           ablate: str = "full", kl_weight: float = 0.0,
                           edge_weights_override=None):
    """One labeled article: forward pass plus gradients of
    loss_cls + kl_weight * loss_kl for every parameter on the active path.

    Returns (ForwardOutput, grads dict keyed by store names). Pass
    ``kl_weight=0.0`` to drop the alignment term from the objective (its
    value is still reported).
    """
    if ablate not in ABLATIONS:
        raise ValueError(f"unknown ablation {ablate!r} (expected one of {ABLATIONS})")
    if prep.label not in (0, 1):
        raise ValueError(f"article {prep.id!r} has no 0/1 label")
    y = prep.label
    x_node, x_seq, _ = _channel_matrices(prep, theta.image_proj)
    n = x_node.shape[0]

    use_graph = ablate != "no_gra"
    use_seq_stream = ablate != "no_seq"
    use_denoise = ablate == "full" and edge_weights_override is None
    use_kl = ablate == "full" or ablate == "no_inf"

    # forward
    tape = None
    if use_graph:
        if use_denoise:
            tape = denoise_forward(x_node, x_seq, phi)
            w_e = tape.edge_weights
        elif edge_weights_override is not None and ablate in ("full", "no_inf"):
            w_e = np.ascontiguousarray(edge_weights_override, dtype=np.float64)
        else:
            w_e = np.ones((n, n)) - np.eye(n)
        x64 = np.ascontiguousarray(x_node, dtype=np.float64)
        agg1, denom1 = backend.gcn_aggregate_fwd(w_e, x64)
        pre1 = agg1 @ theta.gcn_layer1
        h1 = _relu(pre1)
        agg2, denom2 = backend.gcn_aggregate_fwd(w_e, h1)
        pre2 = agg2 @ theta.gcn_layer2
        e_str = _relu(pre2)
    else:
        e_str = None
    if use_seq_stream:
        midpre = x_seq @ theta.seq_w1 + theta.seq_b1
        mid = _relu(midpre)
        e_seq = mid @ theta.seq_w2 + theta.seq_b2
    else:
        e_seq = None

    if use_kl and e_str is not None and e_seq is not None:
        p_dist = _softmax_rows(e_str)
        q_raw = _softmax_rows(e_seq)
        diff = np.log(np.maximum(p_dist, 1e-300)) - np.log(np.maximum(q_raw, Q_CLAMP))
        kl_rows = np.sum(p_dist * diff, axis=1)
        loss_kl = float(np.mean(kl_rows))
    else:
        loss_kl = 0.0

    blocks = [b for b in (e_str, e_seq) if b is not None]
    features = np.concatenate(blocks, axis=1) if len(blocks) > 1 else blocks[0]
    pooled, prob, p_raw, hidden, hidpre = _classify(features, theta)
    loss_cls = -(y * math.log(prob) + (1 - y) * math.log(1.0 - prob))
    out = ForwardOutput(e_str, e_seq, pooled, prob, loss_cls, loss_kl)

    # backward
    grads: dict[str, np.ndarray] = {}
    d_raw = (prob - y) if PROB_CLAMP < p_raw < 1.0 - PROB_CLAMP else 0.0
    grads["classifier.w2"] = hidden[:, None] * d_raw
    grads["classifier.b2"] = np.array([d_raw])
    d_hidden = d_raw * theta.cls_w2[:, 0]
    d_hidpre = d_hidden * (hidpre > 0)
    grads["classifier.w1"] = np.outer(pooled, d_hidpre)
    grads["classifier.b1"] = d_hidpre
    d_pooled = theta.cls_w1 @ d_hidpre
    h_width = theta.gcn_layer2.shape[1] if e_str is not None else 0
    d_e_str = None
    d_e_seq = None
    if e_str is not None:
        d_e_str = np.tile(d_pooled[:h_width] / n, (n, 1))
    if e_seq is not None:
        start = h_width
        d_e_seq = np.tile(d_pooled[start:] / n, (n, 1))

    if use_kl and kl_weight != 0.0 and e_str is not None and e_seq is not None:
        coef = kl_weight / n
        d_e_str = d_e_str + coef * p_dist * (diff - kl_rows[:, None])
        active = q_raw > Q_CLAMP
        s = np.sum(p_dist * active, axis=1)
        d_e_seq = d_e_seq + coef * (q_raw * s[:, None] - p_dist * active)

    d_x_node = None
    d_x_seq = None
    if e_seq is not None:
        grads["seq_mlp.w2"] = mid.T @ d_e_seq
        grads["seq_mlp.b2"] = d_e_seq.sum(axis=0)
        d_midpre = (d_e_seq @ theta.seq_w2.T) * (midpre > 0)
        grads["seq_mlp.w1"] = x_seq.T @ d_midpre
        grads["seq_mlp.b1"] = d_midpre.sum(axis=0)
        d_x_seq = d_midpre @ theta.seq_w1.T
    if e_str is not None:
        d_pre2 = d_e_str * (pre2 > 0)
        grads["gcn.layer2"] = agg2.T @ d_pre2
        d_agg2 = d_pre2 @ theta.gcn_layer2.T
        d_h1, d_w_a = backend.gcn_aggregate_bwd(w_e, h1, agg2, denom2, d_agg2)
        d_pre1 = d_h1 * (pre1 > 0)
        grads["gcn.layer1"] = agg1.T @ d_pre1
        d_agg1 = d_pre1 @ theta.gcn_layer1.T
        d_x_node, d_w_b = backend.gcn_aggregate_bwd(w_e, x64, agg1, denom1, d_agg1)
        if use_denoise:
            d_w_e = d_w_a + d_w_b
            np.fill_diagonal(d_w_e, 0.0)
            phi_grads, d_xn_dn, d_xs_dn = denoise_backward(tape, phi, d_w_e)
            grads.update(phi_grads)
            d_x_node = d_x_node + d_xn_dn
            d_x_seq = d_xs_dn if d_x_seq is None else d_x_seq + d_xs_dn

    if prep.n_images > 0:
        m = prep.sent_node.shape[0]
        d_proj = np.zeros((prep.n_images, theta.image_proj.shape[1]))
        if d_x_node is not None:
            d_proj = d_proj + d_x_node[m:]
        if d_x_seq is not None:
            d_proj = d_proj + d_x_seq[m:]
        grads[IMAGE_PROJ] = prep.image_vectors.T @ d_proj

    return out, grads


def model_forward(article, node_vec, seq_vec, phi: DenoiseParams, theta: ModelParams,
                  ablate: str = "full", edge_weights_override=None) -> ForwardOutput:
    """Full pipeline on one article; no gradients.

    ``edge_weights_override`` substitutes a fixed weight matrix for the
    inferred one (diagnostics and equivalence tests).
    """
    if ablate not in ABLATIONS:
        raise ValueError(f"unknown ablation {ablate!r} (expected one of {ABLATIONS})")
    features = embed_article(article, node_vec, seq_vec, image_proj=theta.image_proj)
    x_seq = features.x_seq
    e_str = None
    e_seq = None
    loss_kl = 0.0
    if ablate != "no_gra":
        g = build_graph(features)
        if ablate == "full" and edge_weights_override is None:
            g, _ = denoise_graph(g, x_seq, phi)
        elif edge_weights_override is not None:
            g = g.with_edge_weights(np.asarray(edge_weights_override, dtype=np.float64))
        e_str = gcn_forward(g, theta)
    if ablate != "no_seq":
        e_seq = mlp_forward(x_seq, (theta.seq_w1, theta.seq_b1, theta.seq_w2, theta.seq_b2))
    if e_str is not None and e_seq is not None:
        loss_kl = kl_loss(e_str, e_seq)
    blocks = [b for b in (e_str, e_seq) if b is not None]
    features_cat = np.concatenate(blocks, axis=1) if len(blocks) > 1 else blocks[0]
    pooled, prob, _, _, _ = _classify(features_cat, theta)
    if article.label in (0, 1):
        y = article.label
        loss_cls = -(y * math.log(prob) + (1 - y) * math.log(1.0 - prob))
    else:
        loss_cls = None
    return ForwardOutput(e_str, e_seq, pooled, prob, loss_cls, loss_kl)
