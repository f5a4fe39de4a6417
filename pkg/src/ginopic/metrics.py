"""Intrinsic topic-quality metrics.

Coherence (NPMI, CV) is estimated from boolean sliding windows over a
tokenized reference corpus, conventionally the training split: a window of
`window_size` tokens slides with stride 1 (documents shorter than the window
contribute a single window), and a word "occurs" in a window if it appears at
least once.  NPMI uses window size 10 and CV uses 110, with smoothing
eps = 1e-12.

Diversity is measured three ways: IRBO (1 - mean pairwise rank-biased
overlap), and two embedding-based scores, wi_c (1 - mean pairwise cosine of
topic centroids) and wi_m (1 - mean best-match cosine over ordered topic
pairs).  The RBO here is the truncated, normalized variant: with prefix
overlap A_k = |top-k(a) & top-k(b)| / k,

    rbo = sum_k p^(k-1) A_k / sum_k p^(k-1)

which is exactly 1 for identical lists.  All functions are pure.
"""
from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .embedding import EmbeddingMatrix, cosine_similarity
from .errors import ConfigError, ContractError, DataError

NPMI_WINDOW = 10
CV_WINDOW = 110
NPMI_EPS = 1e-12


@dataclass
class CooccurrenceStats:
    """Window-presence probabilities: p(w) and p(w_i, w_j) from boolean windows."""

    window_size: int
    n_windows: int
    word_counts: Counter = field(default_factory=Counter)
    pair_counts: Counter = field(default_factory=Counter)

    def p_word(self, word: str) -> float:
        return self.word_counts.get(word, 0) / self.n_windows

    def p_pair(self, a: str, b: str) -> float:
        """Joint presence probability; a word always co-occurs with itself."""
        if a == b:
            return self.p_word(a)
        key = (a, b) if a < b else (b, a)
        return self.pair_counts.get(key, 0) / self.n_windows


def build_cooccurrence(token_documents, window_size: int = NPMI_WINDOW) -> CooccurrenceStats:
    """Count boolean word and pair presence over all sliding windows.

    `token_documents` is an iterable of token lists (strings).  Counts are
    integers, so accumulation order cannot change the result.
    """
    if window_size < 1:
        raise ConfigError(f"window_size must be >= 1, got {window_size}")
    stats = CooccurrenceStats(window_size=window_size, n_windows=0)
    n_docs = 0
    for tokens in token_documents:
        n_docs += 1
        length = len(tokens)
        if length == 0:
            continue
        n_win = max(1, length - window_size + 1)
        stats.n_windows += n_win
        for start in range(n_win):
            present = sorted(set(tokens[start:start + window_size]))
            for word in present:
                stats.word_counts[word] += 1
            for pair in combinations(present, 2):
                stats.pair_counts[pair] += 1
    if n_docs == 0 or stats.n_windows == 0:
        raise DataError("cannot build co-occurrence statistics from an empty corpus")
    return stats


def npmi_pair(stats: CooccurrenceStats, a: str, b: str, eps: float = NPMI_EPS) -> float:
    """NPMI of one word pair; a word absent from the corpus never co-occurs (-1)."""
    pa, pb = stats.p_word(a), stats.p_word(b)
    if pa == 0.0 or pb == 0.0:
        return -1.0
    pj = stats.p_pair(a, b)
    return math.log((pj + eps) / (pa * pb)) / -math.log(pj + eps)


def npmi(topic, stats: CooccurrenceStats, eps: float = NPMI_EPS) -> float:
    """Mean pairwise NPMI over all C(n,2) pairs of the topic's words."""
    if len(topic) < 2:
        raise ContractError(f"topic needs >= 2 words, got {len(topic)}")
    vals = [npmi_pair(stats, a, b, eps) for a, b in combinations(topic, 2)]
    return float(np.mean(vals))


def cv(topic, stats: CooccurrenceStats, eps: float = NPMI_EPS) -> float:
    """One-set-segmentation CV: cosine of each word's NPMI vector vs. their sum.

    Row i holds NPMI(w_i, w_j) for every j in the topic, including j = i,
    where joint presence reduces to p(w_i).
    """
    n = len(topic)
    if n < 2:
        raise ContractError(f"topic needs >= 2 words, got {n}")
    mat = np.empty((n, n), dtype=np.float64)
    for i in range(n):
        for j in range(i, n):
            mat[i, j] = mat[j, i] = npmi_pair(stats, topic[i], topic[j], eps)
    agg = mat.sum(axis=0)
    sims = [cosine_similarity(mat[i], agg) for i in range(n)]
    return float(np.mean(sims))


def rbo(list_a, list_b, p: float = 0.9, depth: int | None = None) -> float:
    """Truncated normalized rank-biased overlap; 1.0 exactly on identical lists.

    Weights are geometric in rank; normalizing by their own sum (rather than
    the closed form) keeps the identical-list case bit-exact.
    """
    if not 0.0 < p < 1.0:
        raise ConfigError(f"rbo persistence p must lie in (0, 1), got {p}")
    if depth is None:
        depth = min(len(list_a), len(list_b))
    if depth < 1 or depth > len(list_a) or depth > len(list_b):
        raise ContractError(
            f"depth {depth} outside [1, min(len)] for lists of length "
            f"{len(list_a)} and {len(list_b)}"
        )
    seen_a, seen_b = set(), set()
    overlap = 0
    acc = norm = 0.0
    weight = 1.0  # p^(k-1)
    for k in range(1, depth + 1):
        wa, wb = list_a[k - 1], list_b[k - 1]
        if wa == wb:
            overlap += 1
        else:
            if wa in seen_b:
                overlap += 1
            if wb in seen_a:
                overlap += 1
        seen_a.add(wa)
        seen_b.add(wb)
        acc += weight * (overlap / k)
        norm += weight
        weight *= p
    return acc / norm


def validate_topics(topics) -> None:
    if len(topics) < 2:
        raise ContractError(f"need >= 2 topics, got {len(topics)}")
    n = len(topics[0])
    for i, topic in enumerate(topics):
        if len(topic) != n:
            raise ContractError(
                f"topic {i} has {len(topic)} words, expected {n} (ragged topic set)"
            )
        if len(set(topic)) != len(topic):
            raise ContractError(f"topic {i} contains repeated words")


def irbo(topics, p: float = 0.9) -> float:
    """1 - mean pairwise RBO: 0 for identical topics, 1 for disjoint ones."""
    validate_topics(topics)
    vals = [rbo(a, b, p) for a, b in combinations(topics, 2)]
    return 1.0 - float(np.mean(vals))


def _topic_vectors(topic, embeddings: EmbeddingMatrix) -> np.ndarray:
    rows = np.empty((len(topic), embeddings.dim), dtype=np.float64)
    for i, word in enumerate(topic):
        if word not in embeddings.vocabulary.index:
            raise ContractError(f"topic word '{word}' has no embedding")
        rows[i] = embeddings.vector(word)
    return rows


def wi_c(topics, embeddings: EmbeddingMatrix) -> float:
    """1 - mean pairwise cosine between topic centroids (mean word vectors)."""
    validate_topics(topics)
    centroids = [_topic_vectors(t, embeddings).mean(axis=0) for t in topics]
    vals = [cosine_similarity(a, b) for a, b in combinations(centroids, 2)]
    return 1.0 - float(np.mean(vals))


def wi_m(topics, embeddings: EmbeddingMatrix) -> float:
    """1 - mean best-match similarity over ordered topic pairs.

    For each word of topic i, the best cosine against topic j's words, then
    averaged over words and over ordered pairs (i, j), i != j.
    """
    validate_topics(topics)
    mats = [_topic_vectors(t, embeddings) for t in topics]
    normed = []
    for m in mats:
        norms = np.linalg.norm(m, axis=1, keepdims=True)
        safe = np.where(norms == 0.0, 1.0, norms)
        normed.append(m / safe)
    vals = []
    for i in range(len(topics)):
        for j in range(len(topics)):
            if i == j:
                continue
            sims = normed[i] @ normed[j].T
            vals.append(float(np.mean(np.max(sims, axis=1))))
    return 1.0 - float(np.mean(vals))


# ---------------------------------------------------------------------------
# Orchestration and I/O
# ---------------------------------------------------------------------------

def token_documents(documents, vocabulary) -> list:
    """Back-map token ids to word strings for co-occurrence counting."""
    words = vocabulary.words
    return [[words[t] for t in doc.token_ids] for doc in documents]


def evaluate_topics(topics, reference_token_docs, embeddings: EmbeddingMatrix | None = None,
                    p: float = 0.9) -> dict:
    """All intrinsic metrics for a topic set against a reference corpus.

    Returns aggregate values plus per-topic coherence lists; embedding-based
    diversity only when an embedding matrix is supplied.
    """
    validate_topics(topics)
    stats_npmi = build_cooccurrence(reference_token_docs, NPMI_WINDOW)
    stats_cv = build_cooccurrence(reference_token_docs, CV_WINDOW)
    per_npmi = [npmi(t, stats_npmi) for t in topics]
    per_cv = [cv(t, stats_cv) for t in topics]
    out = {
        "npmi": float(np.mean(per_npmi)),
        "cv": float(np.mean(per_cv)),
        "irbo": irbo(topics, p),
        "npmi_per_topic": per_npmi,
        "cv_per_topic": per_cv,
    }
    if embeddings is not None:
        out["wi_c"] = wi_c(topics, embeddings)
        out["wi_m"] = wi_m(topics, embeddings)
    return out


def save_topics(topics, path) -> None:
    """One topic per line, words space-separated in rank order."""
    try:
        with open(path, "w", encoding="utf-8") as fh:
            for topic in topics:
                fh.write(" ".join(topic) + "\n")
    except OSError as e:
        raise DataError(f"cannot write topics: {e}", path=path) from e


def load_topics(path) -> list:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            topics = [line.split() for line in fh if line.strip()]
    except OSError as e:
        raise DataError(f"cannot read topics: {e}", path=path) from e
    if not topics:
        raise DataError("topics file is empty", path=path)
    return topics


def write_metrics_report(metrics: dict, tsv_path, json_path=None) -> None:
    """Scalar metrics as TSV (metric, value); full dict as JSON alongside."""
    scalars = {k: v for k, v in metrics.items() if isinstance(v, (int, float))}
    try:
        with open(tsv_path, "w", encoding="utf-8") as fh:
            fh.write("metric\tvalue\n")
            for key in sorted(scalars):
                fh.write(f"{key}\t{scalars[key]:.9g}\n")
        if json_path is not None:
            with open(json_path, "w", encoding="utf-8") as fh:
                json.dump(metrics, fh, sort_keys=True, indent=2)
                fh.write("\n")
    except OSError as e:
        raise DataError(f"cannot write metrics report: {e}", path=tsv_path) from e
