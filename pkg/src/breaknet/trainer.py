"""Bi-level alternating training, weighted metrics, and checkpoints.

The parameters split into two partitions. The inner partition (the three
denoise matrices) is trained on plain classification loss while the rest
is frozen; the outer partition (encoders, classifier, image projection)
is trained on classification loss plus beta times the KL alignment term
while the denoise matrices are frozen. Each batch runs a configurable
number of inner steps, then one outer step. Freezing is byte-level: a
step must not change a single byte of the partition it does not own.

Early stopping watches validation weighted F1, keeps a copy of the best
parameters, and stops after ``patience`` epochs without strict
improvement. Everything is seeded; identical (data, config) pairs
reproduce identical histories and checkpoints byte for byte.
"""

import json
import struct
from dataclasses import dataclass, field, asdict

import numpy as np

from .data import atomic_write_text
from .denoise import PHI, DenoiseParams
from .embedding import HashVectorizer, fnv1a64
from .encoders import (
    ABLATIONS,
    IMAGE_PROJ,
    ModelParams,
    article_loss_and_grads,
    model_forward,
    prepare_article,
    theta_names,
)
from .numerics import AdamConfig, ParamStore, adam_step

CHECKPOINT_FORMAT = "breaknet-checkpoint-v1"


@dataclass(frozen=True)
class TrainConfig:
    beta: float = 0.1
    lr_inner: float = 0.1
    lr_outer: float = 1e-5
    d: int = 32
    h: int = 16
    batch_size: int = 8
    patience: int = 8
    max_epochs: int = 30
    seed: int = 0
    ablate: str = "full"
    inner_steps_per_batch: int = 1

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError("beta must be >= 0")
        if self.lr_inner <= 0 or self.lr_outer <= 0:
            raise ValueError("learning rates must be positive")
        if self.d < 1 or self.h < 1:
            raise ValueError("d and h must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.max_epochs < 0:
            raise ValueError("max_epochs must be >= 0")
        if self.seed < 0 or self.seed > 0xFFFFFFFFFFFFFFFF:
            raise ValueError("seed must fit in 64 unsigned bits")
        if self.ablate not in ABLATIONS:
            raise ValueError(f"ablate must be one of {ABLATIONS}")
        if self.inner_steps_per_batch < 1:
            raise ValueError("inner_steps_per_batch must be >= 1")


def vectorizer_seeds(seed: int) -> tuple[int, int]:
    """Derive the two channel seeds from the run seed; always distinct."""
    packed = struct.pack("<Q", seed & 0xFFFFFFFFFFFFFFFF)
    return fnv1a64(packed + b"node-channel"), fnv1a64(packed + b"seq-channel")


def build_vectorizers(cfg: TrainConfig) -> tuple[HashVectorizer, HashVectorizer]:
    node_seed, seq_seed = vectorizer_seeds(cfg.seed)
    return HashVectorizer(node_seed, cfg.d), HashVectorizer(seq_seed, cfg.d)


def _param_shapes(cfg: TrainConfig, d_img: int | None):
    d, h = cfg.d, cfg.h
    cls_in = 2 * h if cfg.ablate in ("full", "no_inf") else h
    shapes: dict[str, tuple[int, ...]] = {
        PHI[0]: (d, d),
        PHI[1]: (d, d),
        PHI[2]: (d, d),
        "gcn.layer1": (d, h),
        "gcn.layer2": (h, h),
        "seq_mlp.w1": (d, h),
        "seq_mlp.b1": (h,),
        "seq_mlp.w2": (h, h),
        "seq_mlp.b2": (h,),
        "classifier.w1": (cls_in, h),
        "classifier.b1": (h,),
        "classifier.w2": (h, 1),
        "classifier.b2": (1,),
    }
    if d_img is not None:
        shapes[IMAGE_PROJ] = (d_img, d)
    return shapes


def init_params(cfg: TrainConfig, d_img: int | None = None) -> ParamStore:
    """Fresh parameters: per-name seeded normal weights scaled by
    1/sqrt(fan_in), zero biases. Both partitions always exist so that the
    freezing contract is checkable in every mode."""
    store = ParamStore()
    packed = struct.pack("<Q", cfg.seed & 0xFFFFFFFFFFFFFFFF)
    for name, shape in _param_shapes(cfg, d_img).items():
        if len(shape) == 1:
            store.add(name, np.zeros(shape))
            continue
        rng = np.random.Generator(np.random.PCG64(fnv1a64(packed + name.encode("utf-8"))))
        store.add(name, rng.standard_normal(shape) / np.sqrt(shape[0]))
    return store


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    precision: float
    recall: float
    f1: float

    def as_dict(self) -> dict:
        return {"accuracy": self.accuracy, "precision": self.precision,
                "recall": self.recall, "f1": self.f1}


def evaluate_metrics(probs, labels, threshold: float = 0.5) -> MetricsReport:
    """Support-weighted two-class precision/recall/F1 plus plain accuracy.

    A prediction is class 1 when prob >= threshold. Any ratio with a zero
    denominator is scored 0.
    """
    probs = list(probs)
    labels = list(labels)
    if not probs or len(probs) != len(labels):
        raise ValueError("probs and labels must be equal-length and non-empty")
    preds = [1 if p >= threshold else 0 for p in probs]
    correct = sum(1 for p, y in zip(preds, labels) if p == y)
    accuracy = correct / len(labels)
    precision = recall = f1 = 0.0
    for cls in (0, 1):
        support = sum(1 for y in labels if y == cls)
        if support == 0:
            continue
        tp = sum(1 for p, y in zip(preds, labels) if p == cls and y == cls)
        fp = sum(1 for p, y in zip(preds, labels) if p == cls and y != cls)
        fn = support - tp
        prec = tp / (tp + fp) if tp + fp else 0.0
        rec = tp / (tp + fn) if tp + fn else 0.0
        f1_c = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
        w = support / len(labels)
        precision += w * prec
        recall += w * rec
        f1 += w * f1_c
    return MetricsReport(accuracy, precision, recall, f1)


def _mean_grads(batch, store: ParamStore, cfg: TrainConfig, kl_weight: float,
                wanted: list[str]):
    """Forward+backward over a batch; accumulates mean gradients for the
    ``wanted`` names into the store and returns (mean_cls, mean_kl)."""
    phi = DenoiseParams.from_store(store)
    theta = ModelParams.from_store(store)
    scale = 1.0 / len(batch)
    total_cls = 0.0
    total_kl = 0.0
    wanted_set = set(wanted)
    for prep in batch:
        out, grads = article_loss_and_grads(prep, phi, theta, cfg.ablate, kl_weight)
        total_cls += out.loss_cls
        total_kl += out.loss_kl
        for name, g in grads.items():
            if name in wanted_set:
                store.accumulate_grad(name, g * scale)
    mean_cls = total_cls * scale
    mean_kl = total_kl * scale
    loss = mean_cls + kl_weight * mean_kl
    if not np.isfinite(loss):
        ids = [p.id for p in batch]
        raise FloatingPointError(f"non-finite loss on batch {ids}")
    return mean_cls, mean_kl


def inner_step(batch, store: ParamStore, cfg: TrainConfig) -> float:
    """One denoise-partition update on plain classification loss; the
    outer partition is untouched byte for byte."""
    if not batch:
        raise ValueError("inner_step needs a non-empty batch")
    names = [n for n in PHI if n in store]
    mean_cls, _ = _mean_grads(batch, store, cfg, kl_weight=0.0, wanted=names)
    adam_step(store, AdamConfig(cfg.lr_inner), names)
    return mean_cls


def outer_step(batch, store: ParamStore, cfg: TrainConfig) -> float:
    """One encoder/classifier update on classification + beta * KL; the
    denoise partition is untouched byte for byte."""
    if not batch:
        raise ValueError("outer_step needs a non-empty batch")
    names = theta_names(store)
    mean_cls, mean_kl = _mean_grads(batch, store, cfg, kl_weight=cfg.beta, wanted=names)
    adam_step(store, AdamConfig(cfg.lr_outer), names)
    return mean_cls + cfg.beta * mean_kl


def prepare_articles(articles, node_vec, seq_vec) -> list:
    return [prepare_article(a, node_vec, seq_vec) for a in articles]


def infer_image_dim(articles) -> int | None:
    """Common image-vector width across the dataset, or None."""
    d_img = None
    for a in articles:
        if not a.image_vectors:
            continue
        width = len(a.image_vectors[0])
        if d_img is None:
            d_img = width
        elif width != d_img:
            raise ValueError(
                f"article {a.id!r}: image width {width} != dataset width {d_img}"
            )
    return d_img


def predict_articles(articles, store: ParamStore, cfg: TrainConfig, node_vec, seq_vec):
    """Forward-only pass over articles: (probs, labels, mean_cls, mean_kl)."""
    phi = DenoiseParams.from_store(store)
    theta = ModelParams.from_store(store)
    probs = []
    labels = []
    total_cls = 0.0
    total_kl = 0.0
    labeled = 0
    for article in articles:
        out = model_forward(article, node_vec, seq_vec, phi, theta, cfg.ablate)
        probs.append(out.prob)
        labels.append(article.label)
        if out.loss_cls is not None:
            total_cls += out.loss_cls
            total_kl += out.loss_kl
            labeled += 1
    mean_cls = total_cls / labeled if labeled else 0.0
    mean_kl = total_kl / labeled if labeled else 0.0
    return probs, labels, mean_cls, mean_kl


@dataclass
class TrainResult:
    store: ParamStore
    config: TrainConfig
    history: list[dict] = field(default_factory=list)
    best_epoch: int | None = None
    d_img: int | None = None

    @property
    def best_val_f1(self) -> float | None:
        if self.best_epoch is None:
            return None
        return self.history[self.best_epoch]["val"]["f1"]


def train(train_articles, val_articles, cfg: TrainConfig,
          node_vec=None, seq_vec=None, log=None) -> TrainResult:
    """Alternating optimization with early stopping on validation F1.

    Returns the parameters from the best validation epoch (the initial
    parameters when max_epochs is 0 or no epoch ran).
    """
    if not train_articles or not val_articles:
        raise ValueError("train and validation splits must be non-empty")
    if node_vec is None or seq_vec is None:
        node_vec, seq_vec = build_vectorizers(cfg)
    d_img = infer_image_dim(list(train_articles) + list(val_articles))
    store = init_params(cfg, d_img)
    preps = prepare_articles(train_articles, node_vec, seq_vec)
    for prep in preps:
        if prep.label is None:
            raise ValueError(f"training article {prep.id!r} has no label")

    best_store = store.copy()
    best_f1 = -1.0
    best_epoch = None
    epochs_since_improvement = 0
    history: list[dict] = []
    for epoch in range(cfg.max_epochs):
        order = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence([cfg.seed, 1000 + epoch]))
        ).permutation(len(preps))
        epoch_loss = 0.0
        n_batches = 0
        for start in range(0, len(preps), cfg.batch_size):
            batch = [preps[i] for i in order[start:start + cfg.batch_size]]
            for _ in range(cfg.inner_steps_per_batch):
                inner_step(batch, store, cfg)
            epoch_loss += outer_step(batch, store, cfg)
            n_batches += 1
        probs, labels, val_cls, val_kl = predict_articles(
            val_articles, store, cfg, node_vec, seq_vec)
        report = evaluate_metrics(probs, labels)
        history.append({
            "epoch": epoch,
            "train_loss": epoch_loss / n_batches,
            "val_loss_cls": val_cls,
            "val_loss_kl": val_kl,
            "val": report.as_dict(),
        })
        if log is not None:
            log("epoch %d: train loss %.4f, val f1 %.4f"
                % (epoch, epoch_loss / n_batches, report.f1))
        if report.f1 > best_f1:
            best_f1 = report.f1
            best_store = store.copy()
            best_epoch = epoch
            epochs_since_improvement = 0
        else:
            epochs_since_improvement += 1
            if epochs_since_improvement >= cfg.patience:
                break
    return TrainResult(best_store, cfg, history, best_epoch, d_img)


# ---------------------------------------------------------------------------
# checkpoint serialization (canonical JSON; floats round-trip exactly)


def _canonical_json(doc) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), allow_nan=False)


def checkpoint_document(result: TrainResult) -> dict:
    store = result.store
    node_seed, seq_seed = vectorizer_seeds(result.config.seed)
    params = {
        name: {"shape": list(store.value(name).shape),
               "data": store.value(name).ravel().tolist()}
        for name in store.names()
    }
    return {
        "format": CHECKPOINT_FORMAT,
        "config": asdict(result.config),
        "vectorizer_seeds": {"node": node_seed, "seq": seq_seed},
        "d_img": result.d_img,
        "best_epoch": result.best_epoch,
        "param_order": store.names(),
        "params": params,
    }


def save_checkpoint(result: TrainResult, path) -> None:
    atomic_write_text(path, _canonical_json(checkpoint_document(result)) + "\n")


def load_checkpoint(path) -> TrainResult:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not a {CHECKPOINT_FORMAT} file")
    cfg = TrainConfig(**doc["config"])
    store = ParamStore()
    for name in doc["param_order"]:
        entry = doc["params"][name]
        store.add(name, np.array(entry["data"], dtype=np.float64).reshape(entry["shape"]))
    return TrainResult(store, cfg, [], doc.get("best_epoch"), doc.get("d_img"))
