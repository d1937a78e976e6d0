"""Case-study export: learned edge weights, node weights, and pairwise
feature similarities for one article under a trained model.

The export answers two questions about a trained run. Which sentences
does the denoised structure emphasize (edge weights and degree-based node
weights)? And how much did the encoder spread apart initially similar
sentence features (pairwise cosines of the raw node channel vs the
trained structural features)?
"""

import numpy as np

from .denoise import DenoiseParams, denoise_graph
from .embedding import ArticleFeatures
from .encoders import ModelParams, _channel_matrices, gcn_forward, prepare_article
from .graph import build_graph


def pairwise_cosine(rows: np.ndarray) -> np.ndarray:
    """Cosine of every row pair; rows with zero norm score 0 everywhere."""
    norms = np.linalg.norm(rows, axis=1)
    safe = np.where(norms > 0.0, norms, 1.0)
    unit = rows / safe[:, None]
    sim = unit @ unit.T
    sim[norms == 0.0, :] = 0.0
    sim[:, norms == 0.0] = 0.0
    return sim


def export_viz(result, article, node_vec, seq_vec) -> dict:
    """Build the export document for one article.

    Keys: edge_weights (N x N, source row / target column), in_degree,
    out_degree, node_weight (in+out normalized to sum 1; [1.0] for a
    single node), sim_initial (node-channel cosines), sim_trained
    (structural-feature cosines). Models trained without the graph stream
    have no structural features to export.
    """
    cfg = result.config
    if cfg.ablate == "no_gra":
        raise ValueError("model was trained without the graph stream; nothing to export")
    theta = ModelParams.from_store(result.store)
    prep = prepare_article(article, node_vec, seq_vec)
    x_node, x_seq, _ = _channel_matrices(prep, theta.image_proj)
    features = ArticleFeatures(x_node, x_seq, prep.sent_node.shape[0], prep.n_images)
    g = build_graph(features)
    if cfg.ablate == "full":
        phi = DenoiseParams.from_store(result.store)
        g, _ = denoise_graph(g, x_seq, phi)
    w = g.edge_weights
    in_degree = w.sum(axis=0)
    out_degree = w.sum(axis=1)
    node_weight = in_degree + out_degree
    total = node_weight.sum()
    if total > 0.0:
        node_weight = node_weight / total
    else:
        # isolated graph (N=1 or all-zero weights): fall back to uniform
        node_weight = np.full(g.n, 1.0 / g.n)
    e_str = gcn_forward(g, theta)
    return {
        "edge_weights": w.tolist(),
        "in_degree": in_degree.tolist(),
        "out_degree": out_degree.tolist(),
        "node_weight": node_weight.tolist(),
        "sim_initial": pairwise_cosine(x_node).tolist(),
        "sim_trained": pairwise_cosine(e_str).tolist(),
    }
