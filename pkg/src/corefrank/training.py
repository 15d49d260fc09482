"""Per-document training loop, corpus evaluation and checkpoint files."""

from __future__ import annotations

import csv
import io
import logging
import os
import tempfile
import time
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .corpus_io import Document, EmbeddingTable
from .features import DocFeatures
from .metrics import CorpusScorer, MetricReport, clusters_from_links
from .model import (CheckpointError, ModelConfig, NetworkParams, RMSprop, dump_checkpoint,
                    init_params, load_checkpoint_bytes, predict_links, score_features,
                    backward_document)
from .objectives import ErrorCosts, make_objective

logger = logging.getLogger(__name__)

OBJECTIVES = ("heuristic", "reward_rescaling", "reinforce")
LOG_COLUMNS = ("epoch", "objective_value", "muc_f1", "b3_f1", "ceaf_f1", "conll_avg", "seconds")


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    objective: str = "reward_rescaling"
    costs: ErrorCosts = ErrorCosts()
    model: ModelConfig = ModelConfig()
    lr: float = 1e-4
    decay: float = 0.99
    epsilon: float = 1e-8
    epochs: int = 10
    seed: int = 0
    samples: int = 1

    def __post_init__(self):
        if self.objective not in OBJECTIVES:
            raise ValueError(f"objective must be one of {OBJECTIVES}, got {self.objective!r}")
        if self.lr <= 0 or not 0 <= self.decay < 1 or self.epsilon <= 0:
            raise ValueError("invalid optimizer constants")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")

    def with_costs(self, alpha_fn: float, alpha_fa: float) -> "TrainConfig":
        return replace(self, costs=ErrorCosts(alpha_fn, alpha_fa, self.costs.alpha_wl))


@dataclass
class EpochRecord:
    epoch: int
    objective_value: float
    dev: MetricReport | None
    seconds: float

    def row(self) -> list:
        dev = self.dev
        f1s = ([dev.muc.f1, dev.b_cubed.f1, dev.ceaf_phi4.f1, dev.conll_average]
               if dev else [float("nan")] * 4)
        return [self.epoch, self.objective_value, *f1s, round(self.seconds, 3)]


@dataclass
class TrainLog:
    records: list[EpochRecord] = field(default_factory=list)
    best_epoch: int | None = None

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(LOG_COLUMNS)
        for r in self.records:
            w.writerow(r.row())
        return buf.getvalue()


def evaluate(params: NetworkParams, corpus: Sequence[Document]) -> MetricReport:
    """Corpus-level MUC / B3 / CEAF-phi4 of the model's greedy links."""
    scorer = CorpusScorer()
    for doc in corpus:
        scorer.add(doc.gold, predict_clusters(params, doc))
    return scorer.report()


def predict_clusters(params: NetworkParams, doc: Document, feats: DocFeatures | None = None):
    feats = DocFeatures(doc, params.vocab) if feats is None else feats
    rows = score_features(params, feats).rows
    return clusters_from_links(predict_links(rows), len(doc.mentions))


def _evaluate_cached(params, corpus, feats) -> MetricReport:
    scorer = CorpusScorer()
    for doc, f in zip(corpus, feats):
        scorer.add(doc.gold, predict_clusters(params, doc, f))
    return scorer.report()


def train(config: TrainConfig, corpus: Sequence[Document], dev: Sequence[Document] = (),
          table: EmbeddingTable | None = None, init: NetworkParams | None = None,
          ) -> tuple[NetworkParams, TrainLog]:
    """Train from ``init`` (or fresh parameters built from ``table``).

    Returns the parameters with the best dev CoNLL average (the final ones when
    there is no dev corpus) and the per-epoch log.
    """
    if init is None:
        if table is None:
            raise ValueError("need an embedding table or initial parameters")
        params = init_params(config.model, table, config.seed)
    else:
        params = init.copy()
    log = TrainLog()
    if config.epochs == 0:
        return params, log

    rng = np.random.default_rng([config.seed, 1])
    objective = make_objective(config.objective, config.costs, config.samples)
    opt = RMSprop(config.lr, config.decay, config.epsilon)
    train_feats = [DocFeatures(d, params.vocab) for d in corpus]
    dev_feats = [DocFeatures(d, params.vocab) for d in dev]
    best, best_score = params.copy(), -np.inf
    rate = config.model.dropout

    for epoch in range(1, config.epochs + 1):
        started = time.perf_counter()
        total = 0.0
        for k in rng.permutation(len(corpus)):
            doc, feats = corpus[k], train_feats[k]
            if len(doc.mentions) == 0:
                continue
            scored = score_features(params, feats, train=True, rate=rate, rng=rng)
            value, d_rows = objective(scored.rows, doc, rng)
            if not np.isfinite(value):
                raise TrainingError(f"non-finite objective on document {doc.doc_key!r} in epoch {epoch}")
            grads = backward_document(params, scored, d_rows)
            if config.model.freeze_embeddings:
                del grads["embed"]
            try:
                opt.step(params.arrays, grads)
            except FloatingPointError as e:
                raise TrainingError(f"{e} on document {doc.doc_key!r} in epoch {epoch}") from None
            total += value
        report = _evaluate_cached(params, dev, dev_feats) if dev else None
        record = EpochRecord(epoch, total / max(len(corpus), 1), report,
                             time.perf_counter() - started)
        log.records.append(record)
        score = report.conll_average if report else epoch
        if score > best_score:
            best, best_score, log.best_epoch = params.copy(), score, epoch
        logger.info("epoch %d objective %.4f dev conll %.4f", epoch, record.objective_value,
                    report.conll_average if report else float("nan"))
    return best, log


# ---------------------------------------------------------------- files


def atomic_write(path, data: str | bytes) -> None:
    """Write to a temporary file in the target directory, then rename."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data.encode("utf-8") if isinstance(data, str) else data)
        # mkstemp creates 0600 files; use the permissions a plain open() would give
        umask = os.umask(0)
        os.umask(umask)
        os.chmod(tmp, 0o666 & ~umask)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_checkpoint(params: NetworkParams, path) -> None:
    atomic_write(path, dump_checkpoint(params))


def load_checkpoint(path, expect: ModelConfig | None = None) -> NetworkParams:
    with open(path, "rb") as f:
        data = f.read()
    try:
        return load_checkpoint_bytes(data, expect)
    except CheckpointError as e:
        raise CheckpointError(f"{path}: {e}") from None
