"""MUC, B-cubed and CEAF-phi4 coreference metrics.

A clustering is any iterable of disjoint, non-empty collections of hashable
mention identifiers. Every metric is built from four sufficient statistics
(precision numerator/denominator, recall numerator/denominator) so that corpus
scores can be aggregated the way the reference scorer does: sum the statistics
over documents, divide once.

B-cubed statistics are exact rationals. Reward deltas compare B-cubed values
computed along different routes, and exact arithmetic makes those comparisons
bit-for-bit rather than approximately equal.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from typing import Hashable, Iterable, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

NA = -1

Clustering = Sequence[frozenset]


@dataclass(frozen=True)
class MetricScore:
    precision: float
    recall: float
    f1: float

    @classmethod
    def from_counts(cls, p_num, p_den, r_num, r_den) -> "MetricScore":
        p = p_num / p_den if p_den else 0
        r = r_num / r_den if r_den else 0
        f = 2 * p * r / (p + r) if p + r else 0
        return cls(float(p), float(r), float(f))


@dataclass(frozen=True)
class MetricReport:
    muc: MetricScore
    b_cubed: MetricScore
    ceaf_phi4: MetricScore

    @property
    def conll_average(self) -> float:
        return conll_average(self.muc, self.b_cubed, self.ceaf_phi4)

    def rows(self):
        return [("MUC", self.muc), ("B3", self.b_cubed), ("CEAF_phi4", self.ceaf_phi4)]

    def as_dict(self) -> dict:
        d = {name: {"precision": s.precision, "recall": s.recall, "f1": s.f1}
             for name, s in self.rows()}
        d["conll_average"] = self.conll_average
        return d


def _as_sets(clusters) -> list[frozenset]:
    out = [frozenset(c) for c in clusters]
    if any(not c for c in out):
        raise ValueError("empty cluster")
    return out


class UnionFind:
    """Disjoint sets over 0..n-1 with path halving and union by size."""

    def __init__(self, n: int):
        self.parent = list(range(n))
        self.size = [1] * n

    def find(self, x: int) -> int:
        parent = self.parent
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(self, a: int, b: int) -> int:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return ra
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]
        return ra


def clusters_from_links(actions: Sequence[int], n_mentions: int | None = None) -> list[frozenset[int]]:
    """Connected components of the antecedent links, singletons discarded.

    ``actions[i]`` is the antecedent of mention ``i`` or ``NA``.
    """
    n = len(actions) if n_mentions is None else n_mentions
    if len(actions) != n:
        raise ValueError(f"{len(actions)} actions for {n} mentions")
    uf = UnionFind(n)
    for i, a in enumerate(actions):
        a = int(a)
        if a == NA:
            continue
        if not 0 <= a < i:
            raise ValueError(f"mention {i} links to {a}: antecedents must precede the mention")
        uf.union(i, a)
    groups: dict[int, list[int]] = {}
    for i in range(n):
        groups.setdefault(uf.find(i), []).append(i)
    return sorted((frozenset(g) for g in groups.values() if len(g) > 1), key=min)


# ---------------------------------------------------------------- MUC


def _muc_side(key: list[frozenset], response: list[frozenset]) -> tuple[int, int]:
    where = {m: j for j, r in enumerate(response) for m in r}
    num = den = 0
    for k in key:
        hit = {where[m] for m in k if m in where}
        missing = sum(1 for m in k if m not in where)
        num += len(k) - (len(hit) + missing)
        den += len(k) - 1
    return num, den


def muc_counts(key, response) -> tuple[int, int, int, int]:
    key, response = _as_sets(key), _as_sets(response)
    r_num, r_den = _muc_side(key, response)
    p_num, p_den = _muc_side(response, key)
    return p_num, p_den, r_num, r_den


def muc_score(key, response) -> MetricScore:
    return MetricScore.from_counts(*muc_counts(key, response))


# ---------------------------------------------------------------- B-cubed


def _b_cubed_side(key: list[frozenset], response: list[frozenset]) -> tuple[Fraction, int]:
    """Sum over response mentions of |R_m & K_m| / |R_m|, and the mention count."""
    where = {m: j for j, k in enumerate(key) for m in k}
    num = Fraction(0)
    den = 0
    for r in response:
        overlap = Counter(where[m] for m in r if m in where)
        num += Fraction(sum(c * c for c in overlap.values()), len(r))
        den += len(r)
    return num, den


def b_cubed_counts(key, response) -> tuple[Fraction, int, Fraction, int]:
    key, response = _as_sets(key), _as_sets(response)
    p_num, p_den = _b_cubed_side(key, response)
    r_num, r_den = _b_cubed_side(response, key)
    return p_num, p_den, r_num, r_den


def b_cubed_f1_exact(p_num, p_den, r_num, r_den) -> Fraction:
    p = Fraction(p_num, p_den) if p_den else Fraction(0)
    r = Fraction(r_num, r_den) if r_den else Fraction(0)
    return 2 * p * r / (p + r) if p + r else Fraction(0)


def b_cubed_score(key, response) -> MetricScore:
    return MetricScore.from_counts(*b_cubed_counts(key, response))


# ---------------------------------------------------------------- CEAF


def phi4(k: frozenset, r: frozenset) -> float:
    return 2 * len(k & r) / (len(k) + len(r))


def similarity_matrix(key: list[frozenset], response: list[frozenset]) -> np.ndarray:
    sim = np.zeros((len(key), len(response)))
    where = {m: j for j, r in enumerate(response) for m in r}
    for i, k in enumerate(key):
        for m in k:
            j = where.get(m)
            if j is not None:
                sim[i, j] += 1
    sizes_k = np.array([len(k) for k in key], dtype=float)[:, None]
    sizes_r = np.array([len(r) for r in response], dtype=float)[None, :]
    return 2 * sim / (sizes_k + sizes_r)


def ceaf_alignment_value(key, response) -> float:
    """Maximum total phi4 similarity over one-to-one cluster alignments."""
    key, response = _as_sets(key), _as_sets(response)
    if not key or not response:
        return 0.0
    sim = similarity_matrix(key, response)
    rows, cols = linear_sum_assignment(sim, maximize=True)
    return float(sim[rows, cols].sum())


def ceaf_phi4_counts(key, response) -> tuple[float, int, float, int]:
    key, response = _as_sets(key), _as_sets(response)
    value = ceaf_alignment_value(key, response)
    return value, len(response), value, len(key)


def ceaf_phi4_score(key, response) -> MetricScore:
    return MetricScore.from_counts(*ceaf_phi4_counts(key, response))


# ---------------------------------------------------------------- reports


def conll_average(muc: MetricScore, b_cubed: MetricScore, ceaf: MetricScore) -> float:
    return (muc.f1 + b_cubed.f1 + ceaf.f1) / 3


class CorpusScorer:
    """Accumulates metric statistics over documents, then scores once."""

    def __init__(self):
        self.muc = [0, 0, 0, 0]
        self.b3 = [Fraction(0), 0, Fraction(0), 0]
        self.ceaf = [0.0, 0, 0.0, 0]

    def add(self, key, response) -> None:
        for acc, counts in ((self.muc, muc_counts(key, response)),
                            (self.b3, b_cubed_counts(key, response)),
                            (self.ceaf, ceaf_phi4_counts(key, response))):
            for i, c in enumerate(counts):
                acc[i] += c

    def report(self) -> MetricReport:
        return MetricReport(MetricScore.from_counts(*self.muc),
                            MetricScore.from_counts(*self.b3),
                            MetricScore.from_counts(*self.ceaf))


def score_all(key, response) -> MetricReport:
    scorer = CorpusScorer()
    scorer.add(key, response)
    return scorer.report()


def format_table(report: MetricReport) -> str:
    lines = [f"{'metric':<10} {'P':>7} {'R':>7} {'F1':>7}"]
    for name, s in report.rows():
        lines.append(f"{name:<10} {100 * s.precision:7.2f} {100 * s.recall:7.2f} {100 * s.f1:7.2f}")
    lines.append(f"{'Avg F1':<10} {'':>7} {'':>7} {100 * report.conll_average:7.2f}")
    return "\n".join(lines) + "\n"
