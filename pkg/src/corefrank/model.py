"""Feedforward mention-ranking scorer with hand-written backpropagation.

Two networks of identical shape score candidate antecedents: the pair network
scores (antecedent, mention) pairs and the anaphoricity network scores the
"no antecedent" option. Each is three ReLU layers and a linear scalar output.

A score table is a list of 1-D arrays; row ``i`` holds the scores of the
``i`` earlier mentions in order followed by the NA score in the last slot, so
``row[NA]`` (``NA == -1``) is the NA score.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .corpus_io import EmbeddingTable
from .features import DocFeatures, FeatureSpec, Vocabulary, embedding_matrix
from .metrics import NA

MAGIC = "corefrank-model-v1"
LAYERS = ("W1", "b1", "W2", "b2", "W3", "b3", "W4", "b4")
NETWORKS = ("pair", "ana")


class CheckpointError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    embedding_dim: int = 20
    m1: int = 100
    m2: int = 50
    m3: int = 50
    dropout: float = 0.5
    freeze_embeddings: bool = False

    def __post_init__(self):
        if min(self.embedding_dim, self.m1, self.m2, self.m3) <= 0:
            raise ValueError("layer sizes must be positive")
        if not 0 <= self.dropout < 1:
            raise ValueError("dropout rate must be in [0, 1)")

    @property
    def features(self) -> FeatureSpec:
        return FeatureSpec(self.embedding_dim)


class NetworkParams:
    """Named parameter arrays of both networks plus the embedding matrix."""

    def __init__(self, arrays: dict[str, np.ndarray], vocab: Vocabulary):
        self.arrays = arrays
        self.vocab = vocab

    @property
    def embed(self) -> np.ndarray:
        return self.arrays["embed"]

    def stack(self, net: str) -> list[np.ndarray]:
        return [self.arrays[f"{net}.{name}"] for name in LAYERS]

    def dims(self) -> dict[str, int]:
        W1p, W2, W3 = self.arrays["pair.W1"], self.arrays["pair.W2"], self.arrays["pair.W3"]
        return {"pair_input": W1p.shape[1], "ana_input": self.arrays["ana.W1"].shape[1],
                "m1": W1p.shape[0], "m2": W2.shape[0], "m3": W3.shape[0],
                "d_w": self.embed.shape[1], "vocab": self.embed.shape[0]}

    def copy(self) -> "NetworkParams":
        return NetworkParams({k: v.copy() for k, v in self.arrays.items()}, self.vocab)

    def zeros_like(self) -> dict[str, np.ndarray]:
        return {k: np.zeros_like(v) for k, v in self.arrays.items()}

    def __eq__(self, other):
        return (isinstance(other, NetworkParams)
                and self.vocab.words == other.vocab.words
                and list(self.arrays) == list(other.arrays)
                and all(np.array_equal(v, other.arrays[k]) for k, v in self.arrays.items()))


def _shapes(n_in: int, cfg: ModelConfig) -> list[tuple[int, ...]]:
    return [(cfg.m1, n_in), (cfg.m1,), (cfg.m2, cfg.m1), (cfg.m2,),
            (cfg.m3, cfg.m2), (cfg.m3,), (1, cfg.m3), (1,)]


def param_names() -> list[str]:
    return [f"{net}.{name}" for net in NETWORKS for name in LAYERS] + ["embed"]


def init_params(cfg: ModelConfig, table: EmbeddingTable, seed: int = 0) -> NetworkParams:
    """Glorot-uniform weights, zero biases, embeddings copied from ``table``."""
    if table.dimension != cfg.embedding_dim:
        raise ValueError(f"embedding dimension {table.dimension} != configured {cfg.embedding_dim}")
    rng = np.random.default_rng(seed)
    spec = cfg.features
    arrays = {}
    for net, n_in in (("pair", spec.pair_dim), ("ana", spec.anaphoric_dim)):
        for name, shape in zip(LAYERS, _shapes(n_in, cfg)):
            if name.startswith("W"):
                limit = np.sqrt(6.0 / (shape[0] + shape[1]))
                arrays[f"{net}.{name}"] = rng.uniform(-limit, limit, size=shape)
            else:
                arrays[f"{net}.{name}"] = np.zeros(shape)
    vocab, embed = embedding_matrix(table)
    arrays["embed"] = embed
    return NetworkParams(arrays, vocab)


# ---------------------------------------------------------------- forward / backward


def forward(stack: Sequence[np.ndarray], h0: np.ndarray, masks=None):
    """Score a batch of inputs (or a single input vector).

    ``masks`` is an optional list of four arrays applied multiplicatively to
    the input and to each hidden layer's output. Returns ``(scores, cache)``.
    """
    W1, b1, W2, b2, W3, b3, W4, b4 = stack
    single = h0.ndim == 1
    h = h0[None, :] if single else h0
    if h.shape[1] != W1.shape[1]:
        raise ValueError(f"input width {h.shape[1]} != {W1.shape[1]}")
    if masks is not None:
        masks = [m[None, :] if single and m.ndim == 1 else m for m in masks]
        if any(m.shape != (h.shape[0], w) for m, w in
               zip(masks, (W1.shape[1], W1.shape[0], W2.shape[0], W3.shape[0]))):
            raise ValueError("dropout mask shape does not match layer widths")
    acts = []  # input to each affine layer
    pre = []   # pre-activations of hidden layers
    for k, (W, b) in enumerate(((W1, b1), (W2, b2), (W3, b3))):
        if masks is not None:
            h = h * masks[k]
        acts.append(h)
        z = h @ W.T + b
        pre.append(z)
        h = np.maximum(z, 0.0)
    if masks is not None:
        h = h * masks[3]
    acts.append(h)
    scores = (h @ W4.T)[:, 0] + b4[0]
    cache = (acts, pre, masks)
    return (scores[0] if single else scores), cache


def backward(stack: Sequence[np.ndarray], cache, upstream) -> tuple[list[np.ndarray], np.ndarray]:
    """Gradients of ``sum(upstream * scores)`` w.r.t. the layer parameters and input."""
    W1, b1, W2, b2, W3, b3, W4, b4 = stack
    acts, pre, masks = cache
    ds = np.atleast_1d(np.asarray(upstream, dtype=np.float64))
    grads = [None] * 8
    grads[6] = ds[None, :] @ acts[3]
    grads[7] = np.array([ds.sum()])
    dh = ds[:, None] * W4
    if masks is not None:
        dh = dh * masks[3]
    for k in (2, 1, 0):
        W = stack[2 * k]
        dz = dh * (pre[k] > 0)
        grads[2 * k] = dz.T @ acts[k]
        grads[2 * k + 1] = dz.sum(axis=0)
        dh = dz @ W
        if masks is not None:
            dh = dh * masks[k]
    return grads, dh


def dropout_masks(rng: np.random.Generator, n: int, widths, rate: float):
    keep = 1.0 - rate
    return [(rng.random((n, w)) < keep) / keep for w in widths]


# ---------------------------------------------------------------- documents


class ScoredDocument:
    """Score table of one document plus what backpropagation needs."""

    def __init__(self, rows, feats, blocks, pair_cache, ana_cache):
        self.rows = rows
        self.feats = feats
        self.blocks = blocks
        self.pair_cache = pair_cache
        self.ana_cache = ana_cache


def _rows(pair_scores: np.ndarray, na_scores: np.ndarray) -> list[np.ndarray]:
    rows = []
    off = 0
    for i in range(len(na_scores)):
        rows.append(np.append(pair_scores[off:off + i], na_scores[i]))
        off += i
    return rows


def score_features(params: NetworkParams, feats: DocFeatures, train: bool = False,
                   rate: float = 0.0, rng: np.random.Generator | None = None) -> ScoredDocument:
    blocks = feats.mention_blocks(params.embed)
    pair_in = feats.pair_inputs(blocks)
    ana_in = feats.anaphoric_inputs(blocks)
    pair_stack, ana_stack = params.stack("pair"), params.stack("ana")
    pair_masks = ana_masks = None
    if train and rate > 0:
        if rng is None:
            raise ValueError("training-mode scoring with dropout needs a random generator")
        widths = lambda s: (s[0].shape[1], s[0].shape[0], s[2].shape[0], s[4].shape[0])
        pair_masks = dropout_masks(rng, len(pair_in), widths(pair_stack), rate)
        ana_masks = dropout_masks(rng, len(ana_in), widths(ana_stack), rate)
    pair_scores, pair_cache = forward(pair_stack, pair_in, pair_masks)
    na_scores, ana_cache = forward(ana_stack, ana_in, ana_masks)
    return ScoredDocument(_rows(pair_scores, na_scores), feats, blocks, pair_cache, ana_cache)


def score_document(params: NetworkParams, doc, mode: str = "inference",
                   rate: float = 0.0, rng: np.random.Generator | None = None) -> list[np.ndarray]:
    """Score table of ``doc``; ``mode`` is ``"inference"`` or ``"train"``."""
    if mode not in ("inference", "train"):
        raise ValueError(f"unknown mode {mode!r}")
    feats = DocFeatures(doc, params.vocab)
    return score_features(params, feats, mode == "train", rate, rng).rows


def backward_document(params: NetworkParams, scored: ScoredDocument,
                      d_rows: Sequence[np.ndarray]) -> dict[str, np.ndarray]:
    """Parameter gradients given d(loss)/d(score) in score-table layout."""
    n = len(scored.rows)
    d_pair = np.concatenate([np.asarray(r[:-1], dtype=np.float64) for r in d_rows]) if n else np.zeros(0)
    d_na = np.array([r[-1] for r in d_rows], dtype=np.float64)
    grads = {}
    d_blocks = np.zeros_like(scored.blocks)
    bw = scored.blocks.shape[1]
    if len(d_pair):
        g, d_in = backward(params.stack("pair"), scored.pair_cache, d_pair)
        np.add.at(d_blocks, scored.feats.pair_c, d_in[:, :bw])
        np.add.at(d_blocks, scored.feats.pair_m, d_in[:, bw:2 * bw])
    else:
        g = [np.zeros_like(a) for a in params.stack("pair")]
    grads.update({f"pair.{k}": v for k, v in zip(LAYERS, g)})
    if n:
        g, d_in = backward(params.stack("ana"), scored.ana_cache, d_na)
        d_blocks += d_in[:, :bw]
    else:
        g = [np.zeros_like(a) for a in params.stack("ana")]
    grads.update({f"ana.{k}": v for k, v in zip(LAYERS, g)})
    d_embed = np.zeros_like(params.embed)
    scored.feats.block_backward(d_blocks, d_embed)
    grads["embed"] = d_embed
    return grads


def predict_links(rows: Sequence[np.ndarray]) -> np.ndarray:
    """Highest-scoring antecedent per mention; ties prefer NA, then the earliest mention."""
    actions = np.full(len(rows), NA, dtype=np.intp)
    for i, row in enumerate(rows):
        j = int(np.argmax(row[:-1])) if i else 0
        if i and row[j] > row[-1]:
            actions[i] = j
    return actions


# ---------------------------------------------------------------- optimizer


class RMSprop:
    def __init__(self, lr: float = 1e-4, decay: float = 0.99, epsilon: float = 1e-8):
        self.lr, self.decay, self.epsilon = lr, decay, epsilon
        self.acc: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        """In-place update of ``params``; rejects the whole step on non-finite gradients."""
        for name, g in grads.items():
            if not np.all(np.isfinite(g)):
                raise FloatingPointError(f"non-finite gradient for {name}")
        for name, g in grads.items():
            acc = self.acc.get(name)
            if acc is None:
                acc = self.acc[name] = np.zeros_like(g)
            acc *= self.decay
            acc += (1 - self.decay) * g * g
            params[name] -= self.lr * g / (np.sqrt(acc) + self.epsilon)


def rmsprop_update(params, grads, state, lr, decay, epsilon):
    """Functional form: returns updated copies of ``params`` and ``state``."""
    opt = RMSprop(lr, decay, epsilon)
    opt.acc = {k: np.array(v, dtype=np.float64, copy=True) for k, v in state.items()}
    new = {k: np.array(v, dtype=np.float64, copy=True) for k, v in params.items()}
    opt.step(new, grads)
    return new, opt.acc


# ---------------------------------------------------------------- checkpoints


def dump_checkpoint(params: NetworkParams) -> bytes:
    dims = params.dims()
    buf = io.BytesIO()
    buf.write(f"{MAGIC}\n".encode())
    buf.write((" ".join(f"{k}={v}" for k, v in dims.items()) + "\n").encode())
    for w in params.vocab.words:
        if not w or any(ch.isspace() for ch in w):
            raise CheckpointError(f"vocabulary word {w!r} cannot be stored")
        buf.write(w.encode("utf-8") + b"\n")
    for name in param_names():
        buf.write(np.ascontiguousarray(params.arrays[name], dtype="<f8").tobytes())
    return buf.getvalue()


def load_checkpoint_bytes(data: bytes, expect: ModelConfig | None = None) -> NetworkParams:
    lines = data.split(b"\n", 2)
    if len(lines) < 3 or lines[0] != MAGIC.encode():
        raise CheckpointError("not a corefrank checkpoint (bad magic line)")
    try:
        dims = dict(kv.split("=") for kv in lines[1].decode().split())
        dims = {k: int(v) for k, v in dims.items()}
        d_w, m1, m2, m3, n_vocab = dims["d_w"], dims["m1"], dims["m2"], dims["m3"], dims["vocab"]
        pair_in, ana_in = dims["pair_input"], dims["ana_input"]
    except (ValueError, KeyError):
        raise CheckpointError("malformed dimensions header") from None
    cfg_dims = ModelConfig(embedding_dim=d_w, m1=m1, m2=m2, m3=m3)
    if expect is not None:
        for attr in ("embedding_dim", "m1", "m2", "m3"):
            if getattr(expect, attr) != getattr(cfg_dims, attr):
                raise CheckpointError(
                    f"dimension mismatch: checkpoint {attr}={getattr(cfg_dims, attr)}, "
                    f"expected {getattr(expect, attr)}")
    spec = cfg_dims.features
    if (pair_in, ana_in) != (spec.pair_dim, spec.anaphoric_dim):
        raise CheckpointError("input widths inconsistent with the embedding dimension")
    rest = lines[2]
    words = []
    for _ in range(n_vocab - 1):
        nl = rest.find(b"\n")
        if nl < 0:
            raise CheckpointError("truncated vocabulary")
        words.append(rest[:nl].decode("utf-8"))
        rest = rest[nl + 1:]
    shapes = {}
    for net, n_in in (("pair", pair_in), ("ana", ana_in)):
        for name, shape in zip(LAYERS, _shapes(n_in, cfg_dims)):
            shapes[f"{net}.{name}"] = shape
    shapes["embed"] = (n_vocab, d_w)
    expected = 8 * sum(int(np.prod(s)) for s in shapes.values())
    if len(rest) != expected:
        raise CheckpointError(f"parameter block has {len(rest)} bytes, expected {expected}")
    arrays = {}
    off = 0
    for name in param_names():
        size = int(np.prod(shapes[name]))
        arrays[name] = np.frombuffer(rest, dtype="<f8", count=size, offset=off).astype(
            np.float64).reshape(shapes[name])
        off += 8 * size
    return NetworkParams(arrays, Vocabulary(words))


def model_config_of(params: NetworkParams, **overrides) -> ModelConfig:
    d = params.dims()
    return ModelConfig(embedding_dim=d["d_w"], m1=d["m1"], m2=d["m2"], m3=d["m3"], **overrides)

