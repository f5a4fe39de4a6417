"""Dirichlet-prior variational topic model over graph plus tf-idf inputs.

Per document: the GIN stack embeds the word graph, a learnable projection W
(V x tau_out) maps the graph embedding into vocabulary space, and the encoder
consumes x = CONCAT(W h_G, x_tfidf).  The encoder is

    [Linear(2V, H') -> Softplus -> [Linear(H', H') -> Softplus]^(L'-1) -> Drop(0.2)]

with two heads [Linear(H', K) -> BN] for the posterior mean and log-variance
(log-variance parameterization keeps the variance positive without
constraints).  Sampling is the usual reparameterization z = mu + sigma^(1/2)
* noise and theta = softmax(z); inference uses the posterior mean without
noise.  The decoder is x_hat = softmax(BN(beta^T theta)) with beta a K x V
unconstrained matrix.

The Dirichlet prior Dir(alpha) enters through its Laplace approximation in
softmax space: a Gaussian whose moments are closed-form functions of alpha,
making the KL term analytic.  The reconstruction target is the tf-idf vector,
not raw counts:

    L_RL = - sum_v x_tfidf[v] * ln(x_hat[v] + 1e-10)
    L_KL = 0.5 * sum_k [ s0/s1 + (m1-m0)^2/s1 - 1 + ln(s1/s0) ]

and the loss is the batch mean of their sum.
"""
from __future__ import annotations

import io
import json
import struct
import time
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .corpus import Corpus, tfidf_dense
from .docgraph import GraphStore
from .errors import ConfigError, ContractError, DataError, NumericsError
from .gin import GinConfig, GinStack
from .nn import BatchNorm1d, Linear
from .optim import Adam, AdamConfig
from .rng import RngStreams

_MAGIC = b"GINOCKPT1\n"


@dataclass(frozen=True)
class PriorParams:
    """Diagonal Gaussian (mean, variance) approximating Dir(alpha) in softmax space."""

    mu: np.ndarray
    sigma: np.ndarray  # variances

    def __post_init__(self):
        object.__setattr__(self, "mu", np.asarray(self.mu, dtype=np.float64))
        object.__setattr__(self, "sigma", np.asarray(self.sigma, dtype=np.float64))


def laplace_prior(alpha) -> PriorParams:
    """Closed-form Laplace moments of a Dirichlet in softmax basis.

    mu_k    = ln a_k - (1/K) sum_i ln a_i
    sigma_k = (1/a_k)(1 - 2/K) + (1/K^2) sum_i (1/a_i)

    Symmetric alpha gives mu = 0.  Requires K >= 2 and alpha > 0 (K = 1
    degenerates to zero variance).
    """
    alpha = np.asarray(alpha, dtype=np.float64)
    if alpha.ndim != 1 or alpha.size < 2:
        raise ConfigError(f"alpha must be a vector with K >= 2, got shape {alpha.shape}")
    if np.any(alpha <= 0):
        raise ConfigError("alpha entries must be strictly positive")
    k = alpha.size
    log_a = np.log(alpha)
    mu = log_a - log_a.mean()
    sigma = (1.0 / alpha) * (1.0 - 2.0 / k) + (1.0 / k**2) * np.sum(1.0 / alpha)
    return PriorParams(mu=mu, sigma=sigma)


@dataclass
class TrainConfig:
    topics: int
    gin: GinConfig
    encoder_hidden: int = 100
    encoder_layers: int = 1
    dropout: float = 0.2
    alpha: float | None = None       # None -> symmetric 1/K
    lr: float = 2e-3
    batch_size: int = 64
    epochs: int = 50
    seed: int = 0
    delta: float | None = None       # provenance echo, set from the graph store

    def validate(self) -> None:
        if self.topics < 2:
            raise ConfigError(f"topics must be >= 2, got {self.topics}")
        if self.encoder_hidden < 1 or self.encoder_layers < 1:
            raise ConfigError("encoder_hidden and encoder_layers must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must lie in [0, 1), got {self.dropout}")
        if self.alpha is not None and self.alpha <= 0:
            raise ConfigError("alpha must be positive")
        if self.lr <= 0:
            raise ConfigError("lr must be positive")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        self.gin.validate()

    def alpha_vector(self) -> np.ndarray:
        a = (1.0 / self.topics) if self.alpha is None else float(self.alpha)
        return np.full(self.topics, a, dtype=np.float64)

    def to_dict(self) -> dict:
        return {
            "topics": self.topics,
            "gin": self.gin.to_dict(),
            "encoder_hidden": self.encoder_hidden,
            "encoder_layers": self.encoder_layers,
            "dropout": self.dropout,
            "alpha": self.alpha,
            "lr": self.lr,
            "batch_size": self.batch_size,
            "epochs": self.epochs,
            "seed": self.seed,
            "delta": self.delta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        d["gin"] = GinConfig.from_dict(d["gin"])
        return cls(**d)


def combine_inputs(h_g: T.Tensor, x_tfidf: T.Tensor, w: T.Tensor) -> T.Tensor:
    """x = CONCAT(W h_G, x_tfidf): (B, tau_out),(B, V),(V, tau_out) -> (B, 2V)."""
    return T.concat_cols([T.matmul(h_g, T.transpose(w)), x_tfidf])


def reparameterize(mu: T.Tensor, sigma: T.Tensor, noise) -> T.Tensor:
    """z = mu + sigma^(1/2) * noise, with sigma the diagonal variance."""
    if mu.shape != sigma.shape:
        raise ContractError(f"mu shape {mu.shape} != sigma shape {sigma.shape}")
    noise_t = T.Tensor(np.asarray(noise), dtype=mu.dtype)
    if noise_t.shape != mu.shape:
        raise ContractError(f"noise shape {noise_t.shape} != mu shape {mu.shape}")
    return T.add(mu, T.mul(T.sqrt(sigma), noise_t))


def elbo_loss(x_tfidf: T.Tensor, x_hat: T.Tensor, mu: T.Tensor, sigma: T.Tensor,
              prior: PriorParams):
    """Batch-mean reconstruction, KL, and their sum (all scalar Tensors).

    `sigma` is the posterior diagonal variance and must be strictly positive.
    The KL against the diagonal Gaussian prior is closed-form per dimension.
    """
    if x_tfidf.shape != x_hat.shape:
        raise ContractError(f"x_tfidf {x_tfidf.shape} vs x_hat {x_hat.shape}")
    if mu.shape != sigma.shape or mu.ndim != 2:
        raise ContractError(f"mu {mu.shape} vs sigma {sigma.shape}")
    b, k = mu.shape
    if prior.mu.shape != (k,):
        raise ContractError(f"prior has {prior.mu.shape[0]} dims, posterior has {k}")
    dt = mu.dtype

    rl_rows = T.sum(T.mul(x_tfidf, T.log(T.add_scalar(x_hat, 1e-10))), axis=1)
    rl = T.scale(T.mean(rl_rows), -1.0)

    mu1 = T.Tensor(np.broadcast_to(prior.mu.astype(dt), (b, k)).copy(), dtype=dt)
    inv_s1 = T.Tensor(np.broadcast_to((1.0 / prior.sigma).astype(dt), (b, k)).copy(), dtype=dt)
    ln_s1 = T.Tensor(np.broadcast_to(np.log(prior.sigma).astype(dt), (b, k)).copy(), dtype=dt)

    diff = T.add(mu1, T.scale(mu, -1.0))
    quad = T.mul(T.mul(diff, diff), inv_s1)
    ratio = T.mul(sigma, inv_s1)
    logdet = T.add(ln_s1, T.scale(T.log(sigma), -1.0))
    inner = T.add(T.add(ratio, quad), T.add_scalar(logdet, -1.0))
    kl = T.scale(T.mean(T.sum(inner, axis=1)), 0.5)

    total = T.add(rl, kl)
    return rl, kl, total


@dataclass
class ForwardResult:
    reconstruction: T.Tensor
    kl: T.Tensor
    total: T.Tensor
    theta: T.Tensor
    x_hat: T.Tensor
    mu: T.Tensor
    logvar: T.Tensor


class TopicModel:
    """All learnable state: GIN stack, projection, encoder, heads, decoder."""

    def __init__(self, vocab_size: int, config: TrainConfig, vocab_sha256: str = ""):
        config.validate()
        self.config = config
        self.vocab_size = vocab_size
        self.vocab_sha256 = vocab_sha256
        self.trained_epochs = 0
        streams = RngStreams(config.seed)

        dtype = T.get_default_dtype()
        self.gin = GinStack(vocab_size, config.gin, streams)
        proj_rng = streams.stream("init/graph_proj")
        bound = 1.0 / np.sqrt(config.gin.tau_out)
        self.graph_proj = T.Tensor(
            proj_rng.uniform(-bound, bound, size=(vocab_size, config.gin.tau_out)),
            requires_grad=True, dtype=dtype,
        )

        dims = [2 * vocab_size] + [config.encoder_hidden] * config.encoder_layers
        self.encoder_layers = [
            Linear(dims[i], dims[i + 1], streams.stream(f"init/encoder/layer{i}"),
                   name=f"encoder.{i}")
            for i in range(len(dims) - 1)
        ]
        self.head_mu = Linear(config.encoder_hidden, config.topics,
                              streams.stream("init/head_mu"), name="head_mu")
        self.bn_mu = BatchNorm1d(config.topics, name="bn_mu")
        self.head_logvar = Linear(config.encoder_hidden, config.topics,
                                  streams.stream("init/head_logvar"), name="head_logvar")
        self.bn_logvar = BatchNorm1d(config.topics, name="bn_logvar")

        beta_rng = streams.stream("init/beta")
        b_bound = 1.0 / np.sqrt(config.topics)
        self.beta = T.Tensor(
            beta_rng.uniform(-b_bound, b_bound, size=(config.topics, vocab_size)),
            requires_grad=True, dtype=dtype,
        )
        self.bn_out = BatchNorm1d(vocab_size, name="bn_out")

        self.prior = laplace_prior(config.alpha_vector())

    # ------------------------------------------------------------------
    def parameters(self):
        out = self.gin.parameters()
        out.append(("graph_proj", self.graph_proj))
        for layer in self.encoder_layers:
            out.extend(layer.parameters())
        out.extend(self.head_mu.parameters())
        out.extend(self.bn_mu.parameters())
        out.extend(self.head_logvar.parameters())
        out.extend(self.bn_logvar.parameters())
        out.append(("beta", self.beta))
        out.extend(self.bn_out.parameters())
        return out

    def buffers(self):
        out = self.gin.buffers()
        out.extend(self.bn_mu.buffers())
        out.extend(self.bn_logvar.buffers())
        out.extend(self.bn_out.buffers())
        return out

    # ------------------------------------------------------------------
    def encode(self, x: T.Tensor, training: bool, dropout_rng=None):
        """x (B, 2V) -> (mu, logvar), each (B, K)."""
        h = x
        for i, layer in enumerate(self.encoder_layers):
            h = T.softplus(layer(h))
            if not np.all(np.isfinite(h.data)):
                raise NumericsError(f"non-finite activations in encoder layer {i}")
        if training and self.config.dropout > 0.0:
            if dropout_rng is None:
                raise ContractError("training-mode encode needs a dropout rng")
            h = T.dropout(h, self.config.dropout, training, dropout_rng)
        mu = self.bn_mu(self.head_mu(h), training)
        logvar = self.bn_logvar(self.head_logvar(h), training)
        for name, t in (("mu", mu), ("logvar", logvar)):
            if not np.all(np.isfinite(t.data)):
                raise NumericsError(f"non-finite activations in encoder head {name}")
        return mu, logvar

    def decode(self, theta: T.Tensor, training: bool = False) -> T.Tensor:
        """theta (B, K) -> x_hat (B, V), rows on the simplex."""
        return T.softmax(self.bn_out(T.matmul(theta, self.beta), training))

    def forward_batch(self, documents, graphs, training: bool,
                      noise_rng=None, dropout_rng=None) -> ForwardResult:
        if len(documents) != len(graphs):
            raise ContractError(
                f"{len(documents)} documents but {len(graphs)} graphs in batch"
            )
        dt = self.graph_proj.dtype
        x_np = tfidf_dense(documents, self.vocab_size, dtype=dt)
        x_tfidf = T.Tensor(x_np, dtype=dt)

        _, h_g, _ = self.gin.forward(graphs, training)
        x = combine_inputs(h_g, x_tfidf, self.graph_proj)
        mu, logvar = self.encode(x, training, dropout_rng)
        sigma = T.exp(logvar)
        if training:
            if noise_rng is None:
                raise ContractError("training-mode forward needs a noise rng")
            noise = noise_rng.standard_normal(mu.shape).astype(dt)
        else:
            noise = np.zeros(mu.shape, dtype=dt)
        z = reparameterize(mu, sigma, noise)
        theta = T.softmax(z)
        x_hat = self.decode(theta, training)
        rl, kl, total = elbo_loss(x_tfidf, x_hat, mu, sigma, self.prior)
        return ForwardResult(rl, kl, total, theta, x_hat, mu, logvar)


@dataclass
class EpochStats:
    epoch: int
    reconstruction: float
    kl: float
    total: float
    seconds: float


@dataclass
class TrainResult:
    model: TopicModel
    history: list = field(default_factory=list)


def train(corpus: Corpus, graphs: GraphStore, config: TrainConfig) -> TrainResult:
    """Train on the corpus's training split; deterministic given (config, seed).

    All randomness (shuffling, dropout masks, sampling noise) comes from
    streams named by epoch and step under config.seed, so two runs with the
    same config produce bit-identical parameters.
    """
    config.validate()
    if graphs.split_sizes != corpus.split.sizes:
        raise ContractError(
            f"graph store split sizes {graphs.split_sizes} != corpus {corpus.split.sizes}"
        )
    if graphs.corpus_sha256 != corpus.sha256:
        raise ContractError("graph store was built from a different corpus")
    config.delta = graphs.delta

    model = TopicModel(len(corpus.vocabulary), config, vocab_sha256=corpus.vocabulary.sha256)
    optimizer = Adam(model.parameters(), AdamConfig(lr=config.lr))
    streams = RngStreams(config.seed)

    train_docs = corpus.split.train
    train_graphs = graphs.train_graphs()
    n = len(train_docs)
    if n == 0:
        raise ContractError("training split is empty")

    history = []
    for epoch in range(1, config.epochs + 1):
        t0 = time.perf_counter()
        perm = streams.stream(f"train/shuffle/epoch{epoch}").permutation(n)
        rl_sum = kl_sum = 0.0
        for step, start in enumerate(range(0, n, config.batch_size)):
            idx = perm[start:start + config.batch_size]
            docs = [train_docs[i] for i in idx]
            batch_graphs = [train_graphs[i] for i in idx]
            noise_rng = streams.stream(f"train/noise/epoch{epoch}/step{step}")
            drop_rng = streams.stream(f"train/dropout/epoch{epoch}/step{step}")
            with T.Tape() as tape:
                out = model.forward_batch(docs, batch_graphs, True, noise_rng, drop_rng)
                if not np.isfinite(out.total.data):
                    raise NumericsError(
                        f"loss diverged (non-finite) at epoch {epoch} step {step}"
                    )
                T.backward(tape, out.total)
            optimizer.step()
            optimizer.zero_grad()
            rl_sum += out.reconstruction.item() * len(docs)
            kl_sum += out.kl.item() * len(docs)
        history.append(EpochStats(
            epoch=epoch,
            reconstruction=rl_sum / n,
            kl=kl_sum / n,
            total=(rl_sum + kl_sum) / n,
            seconds=time.perf_counter() - t0,
        ))
    model.trained_epochs = config.epochs
    return TrainResult(model=model, history=history)


def save_history(history, path) -> None:
    """Tab-separated epoch log: epoch, L_RL, L_KL, total, wall seconds."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("epoch\treconstruction\tkl\ttotal\tseconds\n")
        for h in history:
            fh.write(
                f"{h.epoch}\t{h.reconstruction:.6f}\t{h.kl:.6f}\t"
                f"{h.total:.6f}\t{h.seconds:.3f}\n"
            )


def infer_theta(model: TopicModel, documents, graphs, batch_size: int = 256) -> np.ndarray:
    """Posterior-mean topic proportions, rows summing to 1; no sampling."""
    if len(documents) != len(graphs):
        raise ContractError(f"{len(documents)} documents but {len(graphs)} graphs")
    rows = []
    for start in range(0, len(documents), batch_size):
        docs = documents[start:start + batch_size]
        gs = graphs[start:start + batch_size]
        out = model.forward_batch(docs, gs, training=False)
        rows.append(out.theta.data.copy())
    return np.concatenate(rows, axis=0)


def top_words(beta: np.ndarray, n: int, vocabulary) -> list:
    """Top-n words per topic by beta weight; ties broken toward lower word id."""
    beta = np.asarray(beta)
    if beta.ndim != 2:
        raise ContractError(f"beta must be 2-D, got shape {beta.shape}")
    k, v = beta.shape
    if not 1 <= n <= v:
        raise ContractError(f"n must lie in [1, {v}], got {n}")
    ids = np.arange(v)
    out = []
    for row in beta:
        order = np.lexsort((ids, -row))  # primary: weight desc; secondary: id asc
        out.append([vocabulary.words[i] for i in order[:n]])
    return out


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(model: TopicModel, path) -> None:
    """GINOCKPT1: UTF-8 header (config, shapes, vocab hash) + f32 LE payloads."""
    params = model.parameters()
    buffers = model.buffers()
    header = {
        "version": 1,
        "config": model.config.to_dict(),
        "vocab_size": model.vocab_size,
        "vocab_sha256": model.vocab_sha256,
        "trained_epochs": model.trained_epochs,
        "params": [[name, list(t.shape)] for name, t in params],
        "buffers": [[name, list(b.shape)] for name, b in buffers],
    }
    blob = io.BytesIO()
    blob.write(_MAGIC)
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    blob.write(struct.pack("<Q", len(head)))
    blob.write(head)
    for _, t in params:
        blob.write(t.data.astype("<f4").tobytes())
    for _, b in buffers:
        blob.write(b.astype("<f4").tobytes())
    try:
        with open(path, "wb") as fh:
            fh.write(blob.getvalue())
    except OSError as e:
        raise DataError(f"cannot write checkpoint: {e}", path=path) from e


def _read_exact(fh, n: int, path) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise DataError("truncated checkpoint", path=path)
    return buf


def load_checkpoint(path, vocabulary=None) -> TopicModel:
    """Rebuild the model and restore parameters and batchnorm buffers exactly.

    When `vocabulary` is given its hash must match the checkpoint's; a model
    cannot be applied to a corpus with a different vocabulary.
    """
    try:
        fh = open(path, "rb")
    except OSError as e:
        raise DataError(f"cannot read checkpoint: {e}", path=path) from e
    with fh:
        if fh.read(len(_MAGIC)) != _MAGIC:
            raise DataError("not a checkpoint (bad magic)", path=path)
        (head_len,) = struct.unpack("<Q", _read_exact(fh, 8, path))
        header = json.loads(_read_exact(fh, head_len, path).decode("utf-8"))
        if header.get("version") != 1:
            raise DataError(f"unsupported checkpoint version {header.get('version')}", path=path)
        if vocabulary is not None and vocabulary.sha256 != header["vocab_sha256"]:
            raise DataError("checkpoint was trained with a different vocabulary", path=path)
        config = TrainConfig.from_dict(header["config"])
        model = TopicModel(header["vocab_size"], config, vocab_sha256=header["vocab_sha256"])
        model.trained_epochs = header["trained_epochs"]
        params = model.parameters()
        if [[name, list(t.shape)] for name, t in params] != header["params"]:
            raise DataError("checkpoint parameter inventory does not match config", path=path)
        for name, t in params:
            count = int(np.prod(t.shape)) if t.shape else 1
            raw = np.frombuffer(_read_exact(fh, 4 * count, path), dtype="<f4")
            t.data = raw.reshape(t.shape).astype(t.dtype)
        buffers = model.buffers()
        if [[name, list(b.shape)] for name, b in buffers] != header["buffers"]:
            raise DataError("checkpoint buffer inventory does not match config", path=path)
        for i, (name, b) in enumerate(buffers):
            count = int(np.prod(b.shape)) if b.shape else 1
            raw = np.frombuffer(_read_exact(fh, 4 * count, path), dtype="<f4")
            b[...] = raw.reshape(b.shape).astype(b.dtype)
        if fh.read(1):
            raise DataError("trailing bytes after checkpoint payload", path=path)
    return model
