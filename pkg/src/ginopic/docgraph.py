"""Word-similarity document graphs.

One weighted undirected graph per document: nodes are the document's distinct
words in first-occurrence order, and a pair (i, j) is connected iff the
cosine similarity of their embeddings is >= delta (pairs exactly at the
threshold are kept).  The edge weight is that similarity.  No self-loops are
stored; the (1+epsilon) self-contribution is added during aggregation.

Similarities are quantized to float32 *before* the delta comparison so the
float32 cache round-trips bit-for-bit and every stored weight still satisfies
weight >= delta after reload.  Graph construction is a pure function of
(document, embeddings, delta): identical inputs give byte-identical caches.
"""
from __future__ import annotations

import io
import json
import logging
import os
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .corpus import Corpus, Document
from .embedding import EmbeddingMatrix, SimilarityCache, cosine_similarity
from .errors import ConfigError, ContractError, DataError

log = logging.getLogger(__name__)

_MAGIC = b"GINOGRAPH1\n"

# SimilarityCache is quadratic in V; above this size fall back to lazy pairs.
_SIM_CACHE_MAX_V = 3000


@dataclass(frozen=True)
class DocumentGraph:
    """Nodes as vocabulary ids plus sparse upper-triangle adjacency."""

    node_ids: tuple        # vocabulary ids, first-occurrence order
    adjacency: tuple       # (i, j, weight) with i < j, node-local indices
    delta: float

    @property
    def n_nodes(self) -> int:
        return len(self.node_ids)

    @property
    def n_edges(self) -> int:
        return len(self.adjacency)

    def to_dense(self) -> np.ndarray:
        """Symmetric dense adjacency (float64), zero diagonal."""
        n = self.n_nodes
        a = np.zeros((n, n), dtype=np.float64)
        for i, j, w in self.adjacency:
            a[i, j] = w
            a[j, i] = w
        return a


def validate_delta(delta: float) -> float:
    delta = float(delta)
    if not 0.0 <= delta <= 1.0:
        raise ConfigError(f"delta must lie in [0, 1], got {delta}")
    return delta


def build_document_graph(
    document: Document,
    embeddings: EmbeddingMatrix,
    delta: float,
    sim_cache: SimilarityCache | None = None,
) -> DocumentGraph:
    """Threshold all word pairs of one document at delta."""
    delta = validate_delta(delta)
    node_ids = document.distinct_ids
    n = int(node_ids.size)
    edges = []
    vecs = embeddings.vectors
    for i in range(n):
        a = int(node_ids[i])
        for j in range(i + 1, n):
            b = int(node_ids[j])
            sim = sim_cache.pair(a, b) if sim_cache is not None else cosine_similarity(vecs[a], vecs[b])
            w = float(np.float32(sim))
            if w >= delta:
                edges.append((i, j, w))
    return DocumentGraph(
        node_ids=tuple(int(x) for x in node_ids),
        adjacency=tuple(edges),
        delta=delta,
    )


@dataclass
class GraphStore:
    """All document graphs of a corpus, in train/validation/test order."""

    delta: float
    corpus_sha256: str
    embedding_sha256: str
    graphs: list
    split_sizes: tuple  # (n_train, n_validation, n_test)

    def __len__(self) -> int:
        return len(self.graphs)

    def train_graphs(self) -> list:
        return self.graphs[: self.split_sizes[0]]

    def validation_graphs(self) -> list:
        a = self.split_sizes[0]
        return self.graphs[a: a + self.split_sizes[1]]

    def test_graphs(self) -> list:
        a = self.split_sizes[0] + self.split_sizes[1]
        return self.graphs[a:]

    def save(self, path) -> None:
        save_graph_store(self, path)


def _worker_count() -> int:
    raw = os.environ.get("GINOPIC_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"GINOPIC_THREADS must be an integer, got {raw!r}")
    return max(1, min(n, os.cpu_count() or 1))


def build_all_graphs(
    corpus: Corpus,
    embeddings: EmbeddingMatrix,
    delta: float,
    cache_path=None,
    use_sim_cache: bool | None = None,
) -> GraphStore:
    """Build (or reload) the graph store for every document of the corpus.

    A cache at `cache_path` is reused only when its (corpus, embeddings,
    delta) key matches; on mismatch it is rebuilt with a logged warning.
    GINOPIC_THREADS caps the worker threads; results are placed by document
    index, so any thread count produces the same store.
    """
    delta = validate_delta(delta)
    corpus_hash = corpus.sha256
    emb_hash = embeddings.sha256
    if cache_path is not None and os.path.exists(cache_path):
        try:
            store = load_graph_store(cache_path)
        except DataError as e:
            log.warning("graph cache unreadable, rebuilding: %s", e)
        else:
            if (
                store.delta == delta
                and store.corpus_sha256 == corpus_hash
                and store.embedding_sha256 == emb_hash
            ):
                return store
            log.warning(
                "graph cache key mismatch (delta/corpus/embeddings), rebuilding %s",
                cache_path,
            )

    documents = corpus.split.all_documents()
    sim_cache = None
    if use_sim_cache is None:
        use_sim_cache = len(corpus.vocabulary) <= _SIM_CACHE_MAX_V
    if use_sim_cache:
        sim_cache = SimilarityCache(embeddings)

    graphs = [None] * len(documents)

    def work(idx: int) -> None:
        graphs[idx] = build_document_graph(documents[idx], embeddings, delta, sim_cache)

    workers = _worker_count()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(work, range(len(documents))))
    else:
        for idx in range(len(documents)):
            work(idx)

    store = GraphStore(
        delta=delta,
        corpus_sha256=corpus_hash,
        embedding_sha256=emb_hash,
        graphs=graphs,
        split_sizes=corpus.split.sizes,
    )
    if cache_path is not None:
        save_graph_store(store, cache_path)
    return store


@dataclass
class DensityReport:
    mean_nodes: float
    mean_edges: float
    mean_density: float
    densities: np.ndarray

    def __str__(self) -> str:
        return (
            f"graphs: mean nodes {self.mean_nodes:.2f}, mean edges {self.mean_edges:.2f}, "
            f"mean density {self.mean_density:.4f}"
        )


def graph_density_report(store: GraphStore) -> DensityReport:
    """Per-document edge density (edges over possible pairs) plus corpus means."""
    if not store.graphs:
        raise ContractError("graph store is empty")
    nodes = np.array([g.n_nodes for g in store.graphs], dtype=np.float64)
    edges = np.array([g.n_edges for g in store.graphs], dtype=np.float64)
    possible = nodes * (nodes - 1) / 2.0
    densities = np.where(possible > 0, edges / np.maximum(possible, 1.0), 0.0)
    return DensityReport(
        mean_nodes=float(nodes.mean()),
        mean_edges=float(edges.mean()),
        mean_density=float(densities.mean()),
        densities=densities,
    )


# ---------------------------------------------------------------------------
# Cache format
# ---------------------------------------------------------------------------

def _read_exact(fh, n: int, path) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise DataError("truncated graph cache", path=path)
    return buf


def save_graph_store(store: GraphStore, path) -> None:
    header = {
        "version": 1,
        "delta": store.delta,
        "corpus_sha256": store.corpus_sha256,
        "embedding_sha256": store.embedding_sha256,
        "split_sizes": list(store.split_sizes),
        "n_graphs": len(store.graphs),
    }
    blob = io.BytesIO()
    blob.write(_MAGIC)
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    blob.write(struct.pack("<Q", len(head)))
    blob.write(head)
    for g in store.graphs:
        blob.write(struct.pack("<I", g.n_nodes))
        blob.write(np.asarray(g.node_ids, dtype="<u4").tobytes())
        blob.write(struct.pack("<I", g.n_edges))
        for i, j, w in g.adjacency:
            blob.write(struct.pack("<IIf", i, j, w))
    try:
        with open(path, "wb") as fh:
            fh.write(blob.getvalue())
    except OSError as e:
        raise DataError(f"cannot write graph cache: {e}", path=path) from e


def load_graph_store(path) -> GraphStore:
    try:
        fh = open(path, "rb")
    except OSError as e:
        raise DataError(f"cannot read graph cache: {e}", path=path) from e
    with fh:
        if fh.read(len(_MAGIC)) != _MAGIC:
            raise DataError("not a graph cache (bad magic)", path=path)
        (head_len,) = struct.unpack("<Q", _read_exact(fh, 8, path))
        header = json.loads(_read_exact(fh, head_len, path).decode("utf-8"))
        if header.get("version") != 1:
            raise DataError(f"unsupported graph cache version {header.get('version')}", path=path)
        graphs = []
        for _ in range(header["n_graphs"]):
            (n_nodes,) = struct.unpack("<I", _read_exact(fh, 4, path))
            ids = np.frombuffer(_read_exact(fh, 4 * n_nodes, path), dtype="<u4")
            (n_edges,) = struct.unpack("<I", _read_exact(fh, 4, path))
            adjacency = []
            for _ in range(n_edges):
                i, j, w = struct.unpack("<IIf", _read_exact(fh, 12, path))
                adjacency.append((i, j, float(w)))
            graphs.append(
                DocumentGraph(
                    node_ids=tuple(int(x) for x in ids),
                    adjacency=tuple(adjacency),
                    delta=header["delta"],
                )
            )
        if fh.read(1):
            raise DataError("trailing bytes after graph cache payload", path=path)
    return GraphStore(
        delta=header["delta"],
        corpus_sha256=header["corpus_sha256"],
        embedding_sha256=header["embedding_sha256"],
        graphs=graphs,
        split_sizes=tuple(header["split_sizes"]),
    )
