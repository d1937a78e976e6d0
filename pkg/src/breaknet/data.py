"""Dataset records, JSONL ingestion with deterministic splits, and the
planted-signal synthetic corpus generator.

A dataset file holds one record per line: {"id", "sentences": [...]} or
{"id", "text": "..."} plus "label": 0 (real) or 1 (fake) and optional
"image_vectors": [[...]]. Splitting is a seeded shuffle followed by an
80/10/10 index cut, so the same (file, seed) always yields the same
partition.

The synthetic generator plants label signal at the sentence level: fake
articles receive one or two sentences drawn from a signal vocabulary that
real articles never use, with everything else drawn from a shared
distractor vocabulary. With signal_strength 1 the label is literally "a
signal sentence is present", which gives tests ground truth about which
sentences should matter.
"""

import json
import os
import tempfile
from dataclasses import dataclass

import numpy as np

from .embedding import split_sentences


@dataclass
class NewsArticle:
    id: str
    sentences: list[str]
    image_vectors: list[list[float]] | None = None
    label: int | None = None

    def __post_init__(self):
        if not self.id or not isinstance(self.id, str):
            raise ValueError("article id must be a non-empty string")
        if not self.sentences and not self.image_vectors:
            raise ValueError(f"article {self.id!r} has no sentences and no images")
        if self.label is not None and self.label not in (0, 1):
            raise ValueError(f"article {self.id!r}: label {self.label!r} not in {{0, 1}}")


def _article_from_record(rec: dict, line_no: int) -> NewsArticle:
    def fail(msg):
        raise ValueError(f"line {line_no}: {msg}")

    if not isinstance(rec, dict):
        fail("record is not an object")
    art_id = rec.get("id")
    if not isinstance(art_id, str) or not art_id:
        fail("missing or non-string 'id'")
    if "sentences" in rec:
        sentences = rec["sentences"]
        if not isinstance(sentences, list) or not all(isinstance(s, str) for s in sentences):
            fail(f"article {art_id!r}: 'sentences' must be a list of strings")
    elif "text" in rec:
        if not isinstance(rec["text"], str):
            fail(f"article {art_id!r}: 'text' must be a string")
        sentences = split_sentences(rec["text"])
    else:
        fail(f"article {art_id!r}: needs 'sentences' or 'text'")
    if "label" not in rec:
        fail(f"article {art_id!r}: missing 'label'")
    label = rec["label"]
    if label not in (0, 1) or isinstance(label, bool):
        fail(f"article {art_id!r}: label must be 0 or 1, got {label!r}")
    images = rec.get("image_vectors")
    if images is not None:
        if (not isinstance(images, list)
                or not all(isinstance(v, list) and v for v in images)
                or len({len(v) for v in images}) > 1):
            fail(f"article {art_id!r}: 'image_vectors' must be equal-length numeric rows")
        images = [[float(x) for x in v] for v in images]
    try:
        return NewsArticle(art_id, list(sentences), images, label)
    except ValueError as exc:
        fail(str(exc))


def read_dataset(path) -> list[NewsArticle]:
    """Parse a JSONL dataset file; errors carry the 1-based line number."""
    articles = []
    seen = set()
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"line {line_no}: invalid JSON ({exc.msg})") from exc
            article = _article_from_record(rec, line_no)
            if article.id in seen:
                raise ValueError(f"line {line_no}: duplicate article id {article.id!r}")
            seen.add(article.id)
            articles.append(article)
    if not articles:
        raise ValueError(f"dataset {path} is empty")
    return articles


def atomic_write_text(path, text: str) -> None:
    """Write via a temp file in the same directory, then rename."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_dataset(articles, path) -> None:
    lines = []
    for a in articles:
        rec = {"id": a.id, "sentences": a.sentences}
        if a.image_vectors is not None:
            rec["image_vectors"] = a.image_vectors
        rec["label"] = a.label
        lines.append(json.dumps(rec, ensure_ascii=False))
    atomic_write_text(path, "\n".join(lines) + "\n")


@dataclass(frozen=True)
class DatasetSplits:
    train: list[NewsArticle]
    val: list[NewsArticle]
    test: list[NewsArticle]

    @property
    def all(self) -> list[NewsArticle]:
        return self.train + self.val + self.test


def split_articles(articles, seed: int) -> DatasetSplits:
    """Seeded shuffle, then an 80/10/10 cut (sizes int(0.8n), int(0.1n), rest)."""
    n = len(articles)
    if n == 0:
        raise ValueError("cannot split an empty dataset")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 0])))
    order = rng.permutation(n)
    n_train = int(0.8 * n)
    n_val = int(0.1 * n)
    train = [articles[i] for i in order[:n_train]]
    val = [articles[i] for i in order[n_train:n_train + n_val]]
    test = [articles[i] for i in order[n_train + n_val:]]
    return DatasetSplits(train, val, test)


def load_dataset(path, seed: int) -> DatasetSplits:
    return split_articles(read_dataset(path), seed)


# ---------------------------------------------------------------------------
# synthetic corpus

_SYLLABLES = (
    "ba", "ce", "di", "fo", "gu", "ha", "je", "ki", "lo", "mu",
    "na", "pe", "qi", "ro", "su", "ta", "ve", "wi", "xo", "zu",
)


def _pseudo_word(index: int) -> str:
    base = len(_SYLLABLES)
    parts = [_SYLLABLES[index % base]]
    index //= base
    while index:
        parts.append(_SYLLABLES[index % base])
        index //= base
    parts.append(_SYLLABLES[(len(parts) * 7) % base])
    return "".join(parts)


@dataclass(frozen=True)
class SyntheticSpec:
    n_articles: int = 500
    sentences_min: int = 8
    sentences_max: int = 16
    tokens_min: int = 4
    tokens_max: int = 8
    signal_min: int = 1
    signal_max: int = 2
    signal_pool_size: int = 12
    distractor_pool_size: int = 60
    signal_strength: float = 1.0
    class_balance: float = 0.5
    seed: int = 0
    # > 0 prefixes every sentence with this many shared tokens, which drives
    # all initial sentence embeddings toward one direction (near-duplicates)
    template_tokens: int = 0

    def __post_init__(self):
        if self.n_articles < 1:
            raise ValueError("n_articles must be >= 1")
        if not 1 <= self.sentences_min <= self.sentences_max:
            raise ValueError("need 1 <= sentences_min <= sentences_max")
        if not 1 <= self.tokens_min <= self.tokens_max:
            raise ValueError("need 1 <= tokens_min <= tokens_max")
        if not 1 <= self.signal_min <= self.signal_max:
            raise ValueError("need 1 <= signal_min <= signal_max")
        if self.signal_max > self.sentences_min:
            raise ValueError("signal_max cannot exceed sentences_min")
        if self.signal_pool_size < 1 or self.distractor_pool_size < 1:
            raise ValueError("vocabulary pools must be non-empty")
        if not 0.0 <= self.signal_strength <= 1.0:
            raise ValueError("signal_strength must lie in [0, 1]")
        if not 0.0 < self.class_balance < 1.0:
            raise ValueError("class_balance must lie in (0, 1)")
        if self.template_tokens < 0:
            raise ValueError("template_tokens must be >= 0")


def synthetic_pools(spec: SyntheticSpec):
    """Disjoint (signal, distractor, template) vocabularies for a spec."""
    total = spec.signal_pool_size + spec.distractor_pool_size + spec.template_tokens
    words = [_pseudo_word(i) for i in range(total)]
    if len(set(words)) != total:
        raise ValueError("vocabulary construction produced duplicate words")
    signal = words[:spec.signal_pool_size]
    distractor = words[spec.signal_pool_size:spec.signal_pool_size + spec.distractor_pool_size]
    template = words[spec.signal_pool_size + spec.distractor_pool_size:]
    return signal, distractor, template


def generate_synthetic(spec: SyntheticSpec):
    """Build the corpus; returns (articles, meta).

    meta records the pools and, per article, which sentence indices carry
    planted signal; it is diagnostic ground truth, not model input.
    """
    signal_pool, distractor_pool, template = synthetic_pools(spec)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([spec.seed, 7])))
    n_fake = round(spec.n_articles * spec.class_balance)
    if not 0 < n_fake < spec.n_articles:
        raise ValueError("class_balance leaves one class empty at this n_articles")
    labels = np.array([1] * n_fake + [0] * (spec.n_articles - n_fake))
    rng.shuffle(labels)

    prefix = " ".join(template)

    def make_sentence(pool) -> str:
        k = int(rng.integers(spec.tokens_min, spec.tokens_max + 1))
        words = [pool[int(i)] for i in rng.integers(0, len(pool), size=k)]
        body = " ".join(words)
        return (prefix + " " + body if prefix else body) + "."

    articles = []
    signal_indices: dict[str, list[int]] = {}
    for idx, label in enumerate(labels):
        n_sent = int(rng.integers(spec.sentences_min, spec.sentences_max + 1))
        sentences = [make_sentence(distractor_pool) for _ in range(n_sent)]
        planted: list[int] = []
        if label == 1 and float(rng.random()) < spec.signal_strength:
            n_signal = min(int(rng.integers(spec.signal_min, spec.signal_max + 1)), n_sent)
            positions = rng.choice(n_sent, size=n_signal, replace=False)
            for pos in sorted(int(p) for p in positions):
                sentences[pos] = make_sentence(signal_pool)
                planted.append(pos)
        art_id = f"syn-{idx:05d}"
        articles.append(NewsArticle(art_id, sentences, None, int(label)))
        signal_indices[art_id] = planted

    meta = {
        "spec": {k: getattr(spec, k) for k in (
            "n_articles", "sentences_min", "sentences_max", "tokens_min", "tokens_max",
            "signal_min", "signal_max", "signal_pool_size", "distractor_pool_size",
            "signal_strength", "class_balance", "seed", "template_tokens")},
        "signal_pool": signal_pool,
        "distractor_pool": distractor_pool,
        "template": template,
        "signal_indices": signal_indices,
    }
    return articles, meta
