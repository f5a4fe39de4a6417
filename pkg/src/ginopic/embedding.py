"""Pretrained word embeddings aligned to a vocabulary.

Text format: one word per line, "word v1 v2 ... vdim", whitespace separated.
Binary cache: magic GINOEMB1, little-endian float32, vocabulary-aligned.

Words missing from the file (OOV) get reproducible uniform(-0.1, 0.1) fills
drawn from a stream keyed by (seed, word), so the fill for a given word is
identical across loads regardless of file order or which other words are
missing.  `cosine_similarity` is the single similarity primitive shared by
graph construction and the embedding-based diversity metrics.
"""
from __future__ import annotations

import hashlib
import io
import json
import struct
from dataclasses import dataclass

import numpy as np

from .corpus import Vocabulary
from .errors import DataError
from .rng import stream

_MAGIC = b"GINOEMB1\n"


@dataclass
class EmbeddingMatrix:
    """Rows aligned with vocabulary ids; float32 storage."""

    vectors: np.ndarray      # (V, dim) float32
    oov_mask: np.ndarray     # (V,) bool, True where the row was filled
    vocabulary: Vocabulary
    seed: int

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float32)
        self.oov_mask = np.asarray(self.oov_mask, dtype=bool)
        if self.vectors.ndim != 2 or self.vectors.shape[0] != len(self.vocabulary):
            raise DataError(
                f"embedding matrix shape {self.vectors.shape} does not match "
                f"vocabulary size {len(self.vocabulary)}"
            )

    @property
    def dim(self) -> int:
        return int(self.vectors.shape[1])

    @property
    def oov_count(self) -> int:
        return int(self.oov_mask.sum())

    @property
    def sha256(self) -> str:
        h = hashlib.sha256()
        h.update(struct.pack("<II", *self.vectors.shape))
        h.update(self.vectors.astype("<f4").tobytes())
        return h.hexdigest()

    def vector(self, word: str) -> np.ndarray:
        return self.vectors[self.vocabulary.id_of(word)]


def cosine_similarity(u, v) -> float:
    """cos(u, v) in float64, clamped to [-1, 1]; zero-norm vectors score 0."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    nu = float(np.sqrt(np.dot(u, u)))
    nv = float(np.sqrt(np.dot(v, v)))
    if nu == 0.0 or nv == 0.0:
        return 0.0
    c = float(np.dot(u, v)) / (nu * nv)
    return min(1.0, max(-1.0, c))


def _oov_fill(word: str, dim: int, seed: int) -> np.ndarray:
    gen = stream(seed, f"embedding/oov/{word}")
    return gen.uniform(-0.1, 0.1, size=dim).astype(np.float32)


def _parse_text(path, vocabulary: Vocabulary):
    found: dict = {}
    dim = None
    try:
        fh = open(path, "r", encoding="utf-8")
    except OSError as e:
        raise DataError(f"cannot read embedding file: {e}", path=path) from e
    with fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            word, values = parts[0], parts[1:]
            if dim is None:
                dim = len(values)
                if dim == 0:
                    raise DataError(f"line {lineno}: no vector components", path=path)
            elif len(values) != dim:
                raise DataError(
                    f"line {lineno}: expected {dim} components, got {len(values)}",
                    path=path,
                )
            if word not in vocabulary:
                continue
            try:
                found[word] = np.array([float(x) for x in values], dtype=np.float32)
            except ValueError as e:
                raise DataError(f"line {lineno}: malformed float", path=path) from e
    return found, dim


def load_embeddings(path, vocabulary: Vocabulary, seed: int = 0) -> EmbeddingMatrix:
    """Load text or binary embeddings and align them to `vocabulary`.

    Raises DataError if the file is malformed or shares no words with the
    vocabulary at all (a wrong-file guard; pure OOV fill would train on
    noise).
    """
    try:
        with open(path, "rb") as probe:
            is_binary = probe.read(len(_MAGIC)) == _MAGIC
    except OSError as e:
        raise DataError(f"cannot read embedding file: {e}", path=path) from e
    if is_binary:
        return _load_binary(path, vocabulary)
    found, dim = _parse_text(path, vocabulary)
    if not found:
        raise DataError("embedding file shares no words with the vocabulary", path=path)
    vectors = np.empty((len(vocabulary), dim), dtype=np.float32)
    oov = np.zeros(len(vocabulary), dtype=bool)
    for i, word in enumerate(vocabulary.words):
        hit = found.get(word)
        if hit is None:
            vectors[i] = _oov_fill(word, dim, seed)
            oov[i] = True
        else:
            vectors[i] = hit
    return EmbeddingMatrix(vectors=vectors, oov_mask=oov, vocabulary=vocabulary, seed=seed)


def save_binary(embeddings: EmbeddingMatrix, path) -> None:
    """Write the vocabulary-aligned binary cache (GINOEMB1, little-endian f32)."""
    header = {
        "version": 1,
        "v": int(embeddings.vectors.shape[0]),
        "dim": embeddings.dim,
        "seed": embeddings.seed,
        "vocab_sha256": embeddings.vocabulary.sha256,
    }
    blob = io.BytesIO()
    blob.write(_MAGIC)
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    blob.write(struct.pack("<Q", len(head)))
    blob.write(head)
    blob.write(embeddings.vectors.astype("<f4").tobytes())
    blob.write(np.packbits(embeddings.oov_mask).tobytes())
    try:
        with open(path, "wb") as fh:
            fh.write(blob.getvalue())
    except OSError as e:
        raise DataError(f"cannot write embedding cache: {e}", path=path) from e


def _read_exact(fh, n: int, path) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise DataError("truncated embedding cache", path=path)
    return buf


def _load_binary(path, vocabulary: Vocabulary) -> EmbeddingMatrix:
    with open(path, "rb") as fh:
        if fh.read(len(_MAGIC)) != _MAGIC:
            raise DataError("not an embedding cache (bad magic)", path=path)
        (head_len,) = struct.unpack("<Q", _read_exact(fh, 8, path))
        header = json.loads(_read_exact(fh, head_len, path).decode("utf-8"))
        if header.get("version") != 1:
            raise DataError(f"unsupported embedding cache version {header.get('version')}", path=path)
        if header["vocab_sha256"] != vocabulary.sha256:
            raise DataError("embedding cache was built for a different vocabulary", path=path)
        v, dim = header["v"], header["dim"]
        vectors = np.frombuffer(_read_exact(fh, 4 * v * dim, path), dtype="<f4")
        vectors = vectors.reshape(v, dim).astype(np.float32)
        mask_bytes = _read_exact(fh, (v + 7) // 8, path)
        oov = np.unpackbits(np.frombuffer(mask_bytes, dtype=np.uint8))[:v].astype(bool)
    return EmbeddingMatrix(
        vectors=vectors, oov_mask=oov, vocabulary=vocabulary, seed=header["seed"]
    )


class SimilarityCache:
    """Precomputed all-pairs cosine table, built from the scalar primitive.

    Each entry is produced by `cosine_similarity` itself, so graph builders
    using the cache emit bit-identical weights to the lazy per-pair path.
    Quadratic in V; intended for vocabularies of a few thousand words.
    """

    def __init__(self, embeddings: EmbeddingMatrix):
        v = embeddings.vectors.shape[0]
        table = np.empty((v, v), dtype=np.float64)
        vecs = embeddings.vectors
        for i in range(v):
            table[i, i] = cosine_similarity(vecs[i], vecs[i])
            for j in range(i + 1, v):
                s = cosine_similarity(vecs[i], vecs[j])
                table[i, j] = s
                table[j, i] = s
        self.table = table

    def pair(self, i: int, j: int) -> float:
        return float(self.table[i, j])
