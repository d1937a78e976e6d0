"""Sentence and image features for the two input channels.

Articles are vectorized twice, by two independent sources: a node channel
feeding the graph and a sequence channel carrying order-preserving
reference features. The default source is a seeded feature-hashing
embedder (deterministic, no pretrained weights); precomputed embeddings
can be supplied from a file instead. The two channels must come from
different seeds or different file columns, never the same source.
"""

import json
import re
import struct
from dataclasses import dataclass

import numpy as np

_SENTENCE_BOUNDARY = re.compile(r"(?<=[.!?])\s+")

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF


def split_sentences(text: str) -> list[str]:
    """Split on terminal punctuation (. ! ?) followed by whitespace.

    Fragments are trimmed and empties dropped; text without terminal
    punctuation comes back as a single sentence, empty text as [].
    """
    stripped = text.strip()
    if not stripped:
        return []
    return [p.strip() for p in _SENTENCE_BOUNDARY.split(stripped) if p.strip()]


def fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * _FNV_PRIME) & _MASK64
    return h


def _token_seed(channel_seed: int, token: str) -> int:
    return fnv1a64(struct.pack("<Q", channel_seed & _MASK64) + token.encode("utf-8"))


class HashVectorizer:
    """Feature-hashing sentence embedder.

    Each lowercase whitespace token maps to a fixed pseudo-random vector
    drawn from a PRNG seeded by an FNV-1a hash of (channel_seed, token).
    A sentence is the mean of its token vectors, L2-normalized; no tokens
    gives the zero vector. Two vectorizers agree iff their seeds agree.
    """

    mode = "hash"

    def __init__(self, channel_seed: int, dim: int):
        if dim < 1:
            raise ValueError("dim must be >= 1")
        self.channel_seed = int(channel_seed)
        self.dim = int(dim)
        self._token_cache: dict[str, np.ndarray] = {}

    def _token_vector(self, token: str) -> np.ndarray:
        vec = self._token_cache.get(token)
        if vec is None:
            rng = np.random.Generator(np.random.PCG64(_token_seed(self.channel_seed, token)))
            vec = rng.standard_normal(self.dim)
            self._token_cache[token] = vec
        return vec

    def embed_sentence(self, sentence: str) -> np.ndarray:
        tokens = sentence.lower().split()
        if not tokens:
            return np.zeros(self.dim)
        mean = np.stack([self._token_vector(t) for t in tokens]).mean(axis=0)
        norm = np.linalg.norm(mean)
        if norm == 0.0:
            return np.zeros(self.dim)
        return mean / norm

    def sentence_matrix(self, article) -> np.ndarray:
        if not article.sentences:
            return np.zeros((0, self.dim))
        return np.stack([self.embed_sentence(s) for s in article.sentences])

    def source_key(self):
        return ("hash", self.channel_seed)


def hash_embed(vectorizer: HashVectorizer, sentence: str) -> np.ndarray:
    """Embed one sentence with a hash vectorizer."""
    if vectorizer.mode != "hash":
        raise ValueError("hash_embed requires a hash-mode vectorizer")
    return vectorizer.embed_sentence(sentence)


class ExternalVectorizer:
    """Serves precomputed per-article sentence embeddings from one channel
    of an embedding file. Nonzero rows are L2-normalized on the way out."""

    mode = "external"

    def __init__(self, table: dict[str, np.ndarray], dim: int, channel: str):
        self.table = table
        self.dim = int(dim)
        self.channel = channel

    def sentence_matrix(self, article) -> np.ndarray:
        if article.id not in self.table:
            raise KeyError(f"article {article.id!r} missing from embedding file")
        rows = self.table[article.id]
        if rows.shape[0] != len(article.sentences):
            raise ValueError(
                f"article {article.id!r}: {rows.shape[0]} embedding rows for "
                f"{len(article.sentences)} sentences"
            )
        norms = np.linalg.norm(rows, axis=1)
        safe = np.where(norms > 0.0, norms, 1.0)
        return rows / safe[:, None]

    def source_key(self):
        return ("external", self.channel)


def load_external_embeddings(path) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Load per-article (node, seq) embedding matrices from a JSONL file.

    One record per line: {"id", "node_embeddings": [[...]], "seq_embeddings":
    [[...]]}; all rows across the file share one width. Duplicate ids,
    missing channels, and ragged rows are hard errors naming the article.
    """
    table: dict[str, tuple[np.ndarray, np.ndarray]] = {}
    d_ext = None
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            art_id = rec.get("id")
            if not isinstance(art_id, str) or not art_id:
                raise ValueError("embedding record without a string 'id'")
            if art_id in table:
                raise ValueError(f"duplicate article id {art_id!r} in embedding file")
            channels = []
            for key in ("node_embeddings", "seq_embeddings"):
                if key not in rec:
                    raise ValueError(f"article {art_id!r}: missing channel {key!r}")
                rows = rec[key]
                widths = {len(row) for row in rows}
                if len(widths) > 1:
                    raise ValueError(
                        f"article {art_id!r}: ragged rows in {key!r} (widths {sorted(widths)})"
                    )
                if widths:
                    width = widths.pop()
                    if d_ext is None:
                        d_ext = width
                    elif width != d_ext:
                        raise ValueError(
                            f"article {art_id!r}: {key} width {width} != file width {d_ext}"
                        )
                channels.append(np.array(rows, dtype=np.float64).reshape(len(rows), d_ext or 0))
            node_rows, seq_rows = channels
            if node_rows.shape[0] != seq_rows.shape[0]:
                raise ValueError(
                    f"article {art_id!r}: node/seq row counts differ "
                    f"({node_rows.shape[0]} vs {seq_rows.shape[0]})"
                )
            table[art_id] = (node_rows, seq_rows)
    return table


def external_vectorizers(path) -> tuple[ExternalVectorizer, ExternalVectorizer]:
    table = load_external_embeddings(path)
    d_ext = 0
    for node_rows, _ in table.values():
        if node_rows.size:
            d_ext = node_rows.shape[1]
            break
    node_table = {k: v[0] for k, v in table.items()}
    seq_table = {k: v[1] for k, v in table.items()}
    return (
        ExternalVectorizer(node_table, d_ext, "node"),
        ExternalVectorizer(seq_table, d_ext, "seq"),
    )


@dataclass(frozen=True)
class ArticleFeatures:
    """Both channels, rows ordered sentences-then-images."""

    x_node: np.ndarray  # (N, d)
    x_seq: np.ndarray   # (N, d)
    n_sentences: int
    n_images: int

    @property
    def n(self) -> int:
        return self.n_sentences + self.n_images


def embed_article(article, node_vec, seq_vec, image_proj=None) -> ArticleFeatures:
    """Vectorize one article into the two d-dim channels.

    Sentence rows come from the per-channel vectorizers; image vectors are
    projected by ``image_proj`` (d_img x d) and the same projected rows are
    appended to both channels.
    """
    if node_vec.dim != seq_vec.dim:
        raise ValueError(f"channel dims differ: {node_vec.dim} vs {seq_vec.dim}")
    if node_vec.source_key() == seq_vec.source_key():
        raise ValueError("node and sequence channels must use distinct sources")
    n_sent = len(article.sentences)
    images = article.image_vectors or []
    if n_sent == 0 and not images:
        raise ValueError(f"empty article {article.id!r}")
    s_node = node_vec.sentence_matrix(article)
    s_seq = seq_vec.sentence_matrix(article)
    if images:
        if image_proj is None:
            raise ValueError(f"article {article.id!r} has images but no projection matrix")
        img = np.asarray(images, dtype=np.float64)
        if img.ndim != 2 or img.shape[1] != image_proj.shape[0]:
            raise ValueError(
                f"article {article.id!r}: image vectors of width "
                f"{img.shape[-1] if img.ndim == 2 else '?'} vs projection rows {image_proj.shape[0]}"
            )
        proj = img @ image_proj
        x_node = np.vstack([s_node, proj])
        x_seq = np.vstack([s_seq, proj])
    else:
        x_node = s_node
        x_seq = s_seq.copy()
    return ArticleFeatures(x_node, x_seq, n_sent, len(images))
