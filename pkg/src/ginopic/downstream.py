"""Extrinsic evaluation: document classification on topic proportions.

A one-vs-rest linear SVM is trained by plain SGD on the hinge loss with L2
regularization; no external ML dependency.  Per class c the target is +1/-1,
and for sample (x, y) at learning rate eta_e = lr / epoch:

    margin y(w.x + b) <  1:  w <- (1 - eta l2) w + eta y x;  b <- b + eta y
    margin            >= 1:  w <- (1 - eta l2) w

Visiting order reshuffles each epoch from a named stream, so training is
deterministic under (data, config, seed).  Prediction is the argmax class
score; with a single class present the classifier degenerates to always
predicting it.
"""
from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ContractError, DataError
from .rng import stream

_MAGIC = b"GINOCLF1\n"


@dataclass(frozen=True)
class SvmConfig:
    epochs: int = 100
    lr: float = 0.01
    l2: float = 1e-4
    seed: int = 0

    def validate(self) -> None:
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.lr <= 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if self.l2 < 0:
            raise ConfigError(f"l2 must be non-negative, got {self.l2}")

    def to_dict(self) -> dict:
        return {"epochs": self.epochs, "lr": self.lr, "l2": self.l2, "seed": self.seed}


@dataclass
class LinearClassifier:
    classes: np.ndarray        # (C,) int64 label ids, ascending
    weights: np.ndarray        # (C, K) float64
    biases: np.ndarray         # (C,) float64

    def decision(self, theta: np.ndarray) -> np.ndarray:
        theta = np.asarray(theta, dtype=np.float64)
        if theta.ndim != 2 or theta.shape[1] != self.weights.shape[1]:
            raise ContractError(
                f"theta shape {theta.shape} incompatible with {self.weights.shape[1]} features"
            )
        return theta @ self.weights.T + self.biases

    def predict(self, theta: np.ndarray) -> np.ndarray:
        return self.classes[np.argmax(self.decision(theta), axis=1)]


def train_classifier(theta: np.ndarray, labels, config: SvmConfig | None = None) -> LinearClassifier:
    """One-vs-rest hinge-loss SGD over the topic proportions."""
    config = config or SvmConfig()
    config.validate()
    x = np.asarray(theta, dtype=np.float64)
    y_all = np.asarray(labels, dtype=np.int64)
    if x.ndim != 2:
        raise ContractError(f"theta must be 2-D, got shape {x.shape}")
    if y_all.shape != (x.shape[0],):
        raise ContractError(f"{x.shape[0]} samples but {y_all.shape[0]} labels")
    if x.shape[0] == 0:
        raise ContractError("cannot train a classifier on an empty set")
    classes = np.unique(y_all)
    n, k = x.shape
    if n < classes.size:
        raise ContractError(f"{n} samples cannot cover {classes.size} classes")

    weights = np.zeros((classes.size, k), dtype=np.float64)
    biases = np.zeros(classes.size, dtype=np.float64)
    for ci, c in enumerate(classes):
        y = np.where(y_all == c, 1.0, -1.0)
        w = np.zeros(k, dtype=np.float64)
        b = 0.0
        for epoch in range(1, config.epochs + 1):
            eta = config.lr / epoch
            order = stream(config.seed, f"svm/class{ci}/epoch{epoch}").permutation(n)
            for i in order:
                decay = 1.0 - eta * config.l2
                if y[i] * (w @ x[i] + b) < 1.0:
                    w = decay * w + eta * y[i] * x[i]
                    b += eta * y[i]
                else:
                    w = decay * w
        weights[ci] = w
        biases[ci] = b
    return LinearClassifier(classes=classes, weights=weights, biases=biases)


def evaluate_accuracy(classifier: LinearClassifier, theta: np.ndarray, labels) -> float:
    y = np.asarray(labels, dtype=np.int64)
    if y.size == 0:
        raise ContractError("cannot evaluate accuracy on an empty set")
    pred = classifier.predict(theta)
    if pred.shape != y.shape:
        raise ContractError(f"{pred.shape[0]} predictions but {y.shape[0]} labels")
    return float(np.mean(pred == y))


def export_theta(model, corpus, graphs, path) -> None:
    """Tab-separated rows over train+validation+test: index, label (or -1), theta.

    Proportions come from posterior-mean inference, suitable for external 2-D
    projection; no header line.
    """
    from .topicmodel import infer_theta  # local import to avoid a cycle

    docs = corpus.split.all_documents()
    all_graphs = list(graphs.graphs)
    if len(docs) != len(all_graphs):
        raise ContractError(f"{len(docs)} documents but {len(all_graphs)} graphs")
    theta = infer_theta(model, docs, all_graphs)
    try:
        with open(path, "w", encoding="utf-8") as fh:
            for i, (doc, row) in enumerate(zip(docs, theta)):
                label = -1 if doc.label is None else int(doc.label)
                vals = "\t".join(f"{v:.9g}" for v in row)
                fh.write(f"{i}\t{label}\t{vals}\n")
    except OSError as e:
        raise DataError(f"cannot write theta export: {e}", path=path) from e


def save_classifier(classifier: LinearClassifier, config: SvmConfig, path) -> None:
    header = {
        "version": 1,
        "classes": [int(c) for c in classifier.classes],
        "n_features": int(classifier.weights.shape[1]),
        "config": config.to_dict(),
    }
    blob = io.BytesIO()
    blob.write(_MAGIC)
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    blob.write(struct.pack("<Q", len(head)))
    blob.write(head)
    blob.write(classifier.weights.astype("<f8").tobytes())
    blob.write(classifier.biases.astype("<f8").tobytes())
    try:
        with open(path, "wb") as fh:
            fh.write(blob.getvalue())
    except OSError as e:
        raise DataError(f"cannot write classifier: {e}", path=path) from e


def load_classifier(path) -> tuple:
    """Returns (classifier, config) as saved."""
    try:
        fh = open(path, "rb")
    except OSError as e:
        raise DataError(f"cannot read classifier: {e}", path=path) from e
    with fh:
        if fh.read(len(_MAGIC)) != _MAGIC:
            raise DataError("not a classifier file (bad magic)", path=path)
        raw = fh.read(8)
        if len(raw) != 8:
            raise DataError("truncated classifier file", path=path)
        (head_len,) = struct.unpack("<Q", raw)
        head = fh.read(head_len)
        if len(head) != head_len:
            raise DataError("truncated classifier file", path=path)
        header = json.loads(head.decode("utf-8"))
        if header.get("version") != 1:
            raise DataError(f"unsupported classifier version {header.get('version')}", path=path)
        classes = np.asarray(header["classes"], dtype=np.int64)
        k = int(header["n_features"])
        need = 8 * classes.size * k
        buf = fh.read(need)
        if len(buf) != need:
            raise DataError("truncated classifier file", path=path)
        weights = np.frombuffer(buf, dtype="<f8").reshape(classes.size, k).copy()
        buf = fh.read(8 * classes.size)
        if len(buf) != 8 * classes.size:
            raise DataError("truncated classifier file", path=path)
        biases = np.frombuffer(buf, dtype="<f8").copy()
        if fh.read(1):
            raise DataError("trailing bytes after classifier payload", path=path)
        config = SvmConfig(**header["config"])
    return LinearClassifier(classes=classes, weights=weights, biases=biases), config
