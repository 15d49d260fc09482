"""Error taxonomy and reward-cost statistics of a trained model."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from .corpus_io import Document, Mention
from .features import DocFeatures
from .metrics import NA
from .model import NetworkParams, predict_links, score_features
from .objectives import ErrorType, classify_action, reward_deltas

PROPER_TAGS = {"NNP", "NNPS", "NR"}
PRONOUN_TAGS = {"PRP", "PRP$", "PN"}
TELEPHONE_GENRE = "tc"
CLASSES = ("proper-noun", "pronoun", "other")
ERROR_TYPES = (ErrorType.FN, ErrorType.FA, ErrorType.WL)

ERROR_COLUMNS = ["doc_key", "mention_id", "chosen", "error_type", "delta_r",
                 "mention_class", "genre", "telephone"]
COST_COLUMNS = ["error_type", "mention_class", "count", "mean", "variance"]
DENSITY_COLUMNS = ["error_type", "bin_left", "bin_right", "density"]


@dataclass(frozen=True)
class ErrorRecord:
    doc_key: str
    mention_id: int
    chosen: int
    error_type: ErrorType
    delta_r: float
    mention_class: str
    genre: str
    telephone: bool = False


def mention_class(doc: Document, mention: Mention) -> str:
    tag = doc.head_token(mention).pos_tag
    if tag in PROPER_TAGS:
        return "proper-noun"
    if tag in PRONOUN_TAGS:
        return "pronoun"
    return "other"


def document_errors(doc: Document, rows) -> list[ErrorRecord]:
    """Error records of the greedy decisions on one scored document."""
    actions = predict_links(rows)
    deltas = reward_deltas(rows, doc, base=actions)
    labels = doc.gold_labels()
    out = []
    for i, a in enumerate(actions):
        kind = classify_action(int(a), i, labels)
        if kind is ErrorType.CORRECT:
            continue
        m = doc.mentions[i]
        out.append(ErrorRecord(doc.doc_key, i, int(a), kind, float(deltas[i][a]),
                               mention_class(doc, m), doc.genre, doc.genre == TELEPHONE_GENRE))
    return out


def classify_errors(params: NetworkParams, corpus: Iterable[Document]) -> list[ErrorRecord]:
    records = []
    for doc in corpus:
        rows = score_features(params, DocFeatures(doc, params.vocab)).rows
        records.extend(document_errors(doc, rows))
    return sorted(records, key=lambda r: (r.doc_key, r.mention_id))


def error_counts(records: Sequence[ErrorRecord]) -> dict[str, int]:
    counts = {t.value: 0 for t in ERROR_TYPES}
    for r in records:
        counts[r.error_type.value] += 1
    return counts


def _wl_mean(records: Sequence[ErrorRecord]) -> float:
    wl = [r.delta_r for r in records if r.error_type is ErrorType.WL]
    mean = float(np.mean(wl)) if wl else 0.0
    if mean <= 0:
        raise ValueError("cannot scale costs: no wrong-link errors with positive cost")
    return mean


def scale_to_wl(records: Sequence[ErrorRecord]) -> list[ErrorRecord]:
    """Divide every cost by the mean wrong-link cost."""
    mean = _wl_mean(records)
    return [replace(r, delta_r=r.delta_r / mean) for r in records]


@dataclass(frozen=True)
class CostStat:
    error_type: str
    mention_class: str
    count: int
    mean: float
    variance: float


def cost_statistics(records: Sequence[ErrorRecord], scale: bool = False) -> list[CostStat]:
    """Mean and population variance of the costs per error type and mention class.

    Rows with mention class ``all`` pool every class; ``pronoun-telephone``
    restricts pronouns to telephone-conversation documents. With ``scale`` the
    statistics are those of the costs divided by the mean wrong-link cost;
    they are computed on the raw costs and divided afterwards so that the
    wrong-link mean comes out as exactly 1.0.
    """
    factor = 1.0
    if scale:
        factor = _wl_mean(records)
    groups: dict[tuple[str, str], list[float]] = {}
    for r in records:
        keys = ["all", r.mention_class]
        if r.mention_class == "pronoun" and r.telephone:
            keys.append("pronoun-telephone")
        for c in keys:
            groups.setdefault((r.error_type.value, c), []).append(r.delta_r)
    out = []
    for t in ERROR_TYPES:
        for c in ("all", *CLASSES, "pronoun-telephone"):
            vals = groups.get((t.value, c))
            if vals:
                a = np.array(vals)
                out.append(CostStat(t.value, c, len(a), float(a.mean()) / factor,
                                    float(a.var()) / factor ** 2))
    return out


def density_rows(records: Sequence[ErrorRecord], bins: int = 50) -> list[tuple[str, float, float, float]]:
    """Normalized histogram of the costs of each error type over a shared range."""
    if bins < 2:
        raise ValueError("need at least two bins")
    if not records:
        return []
    hi = max(r.delta_r for r in records)
    edges = np.linspace(0.0, hi if hi > 0 else 1.0, bins + 1)
    out = []
    for t in ERROR_TYPES:
        vals = [r.delta_r for r in records if r.error_type is t]
        if not vals:
            continue
        dens, _ = np.histogram(vals, bins=edges, density=True)
        out.extend((t.value, float(edges[b]), float(edges[b + 1]), float(dens[b]))
                   for b in range(bins))
    return out


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def export_cost_density(records: Sequence[ErrorRecord], bins: int = 50) -> str:
    return _csv(DENSITY_COLUMNS, [[t, repr(l), repr(r), repr(d)]
                                  for t, l, r, d in density_rows(records, bins)])


def errors_csv(records: Sequence[ErrorRecord]) -> str:
    return _csv(ERROR_COLUMNS, [[r.doc_key, r.mention_id, "NA" if r.chosen == NA else r.chosen,
                                 r.error_type.value, repr(r.delta_r), r.mention_class, r.genre,
                                 int(r.telephone)] for r in records])


def costs_csv(stats: Sequence[CostStat]) -> str:
    return _csv(COST_COLUMNS, [[s.error_type, s.mention_class, s.count, repr(s.mean),
                                repr(s.variance)] for s in stats])
