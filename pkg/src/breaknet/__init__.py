"""Sentence-graph fake news detection with bi-level denoising.

Articles become fully connected sentence graphs; an inner optimization
level infers edge weights that suppress structural noise, while an outer
level trains a weighted GCN and a sequence MLP whose features are pulled
together by a KL alignment term, then classified. See README.md for the
pipeline walkthrough and CLI usage.
"""

from .backend import active_backend, use
from .data import (
    DatasetSplits,
    NewsArticle,
    SyntheticSpec,
    generate_synthetic,
    load_dataset,
    read_dataset,
    save_dataset,
)
from .denoise import (
    PHI,
    DenoiseOutput,
    DenoiseParams,
    compute_affinity,
    compute_reference,
    denoise_graph,
    infer_edge_weights,
)
from .embedding import (
    ArticleFeatures,
    HashVectorizer,
    embed_article,
    hash_embed,
    load_external_embeddings,
    split_sentences,
)
from .encoders import (
    ABLATIONS,
    ForwardOutput,
    ModelParams,
    bce_loss,
    gcn_forward,
    kl_loss,
    mlp_forward,
    model_forward,
    pool_and_classify,
)
from .graph import ContentGraph, build_graph
from .numerics import AdamConfig, GradCheckReport, ParamStore, adam_step, grad_check
from .trainer import (
    MetricsReport,
    TrainConfig,
    TrainResult,
    evaluate_metrics,
    inner_step,
    load_checkpoint,
    outer_step,
    save_checkpoint,
    train,
)
from .viz import export_viz

__version__ = "0.1.0"

__all__ = [
    "ABLATIONS",
    "AdamConfig",
    "ArticleFeatures",
    "ContentGraph",
    "DatasetSplits",
    "DenoiseOutput",
    "DenoiseParams",
    "ForwardOutput",
    "GradCheckReport",
    "HashVectorizer",
    "MetricsReport",
    "ModelParams",
    "NewsArticle",
    "PHI",
    "ParamStore",
    "SyntheticSpec",
    "TrainConfig",
    "TrainResult",
    "active_backend",
    "adam_step",
    "bce_loss",
    "build_graph",
    "compute_affinity",
    "compute_reference",
    "denoise_graph",
    "embed_article",
    "evaluate_metrics",
    "export_viz",
    "gcn_forward",
    "generate_synthetic",
    "grad_check",
    "hash_embed",
    "infer_edge_weights",
    "inner_step",
    "kl_loss",
    "load_checkpoint",
    "load_dataset",
    "mlp_forward",
    "model_forward",
    "outer_step",
    "pool_and_classify",
    "read_dataset",
    "save_checkpoint",
    "save_dataset",
    "split_sentences",
    "train",
    "use",
]
