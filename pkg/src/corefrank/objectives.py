"""Training objectives over score tables.

All objectives return ``(value, d_rows)`` where ``d_rows`` is the gradient of
a quantity to *minimize* with respect to every score, laid out like the score
table (NA in the last slot of each row). For REINFORCE the minimized quantity
is the negated expected reward.

Rewards are per-document B-cubed F1. Because mention-ranking decisions are
independent, the reward of changing one action while holding the rest fixed
can be computed by touching only the clusters that the change splits or
merges; :func:`substitution_rewards` does exactly that and agrees bit for bit
with recomputing B-cubed from scratch.
"""

from __future__ import annotations

import enum
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .corpus_io import Document
from .metrics import NA, b_cubed_counts, b_cubed_f1_exact, clusters_from_links


class ErrorType(enum.Enum):
    CORRECT = "CORRECT"
    FN = "FN"
    FA = "FA"
    WL = "WL"


@dataclass(frozen=True)
class ErrorCosts:
    alpha_fn: float = 0.8
    alpha_fa: float = 0.4
    alpha_wl: float = 1.0

    def __post_init__(self):
        if min(self.alpha_fn, self.alpha_fa, self.alpha_wl) < 0:
            raise ValueError("error costs must be non-negative")


def _labels(doc) -> list[int | None]:
    return doc if isinstance(doc, list) else doc.gold_labels()


def true_antecedents(doc, i: int) -> set[int]:
    """Earlier mentions coreferent with mention ``i``, or ``{NA}``."""
    labels = _labels(doc)
    g = labels[i]
    found = {c for c in range(i) if g is not None and labels[c] == g}
    return found or {NA}


def classify_action(c: int, i: int, doc) -> ErrorType:
    labels = _labels(doc)
    g = labels[i]
    anaphoric = g is not None and any(labels[j] == g for j in range(i))
    if c == NA:
        return ErrorType.FN if anaphoric else ErrorType.CORRECT
    if g is not None and labels[c] == g:
        return ErrorType.CORRECT
    return ErrorType.WL if anaphoric else ErrorType.FA


def heuristic_cost(c: int, i: int, doc, costs: ErrorCosts) -> tuple[float, ErrorType]:
    kind = classify_action(c, i, doc)
    return {ErrorType.CORRECT: 0.0, ErrorType.FN: costs.alpha_fn,
            ErrorType.FA: costs.alpha_fa, ErrorType.WL: costs.alpha_wl}[kind], kind


def heuristic_slack(doc, costs: ErrorCosts) -> list[np.ndarray]:
    """Heuristic cost of every candidate of every mention, in score-table layout."""
    labels = np.array([-1 if g is None else g for g in _labels(doc)])
    rows = []
    for i in range(len(labels)):
        g = labels[i]
        same = (labels[:i] == g) & (g >= 0)
        anaphoric = bool(same.any())
        row = np.where(same, 0.0, costs.alpha_wl if anaphoric else costs.alpha_fa)
        rows.append(np.append(row, costs.alpha_fn if anaphoric else 0.0))
    return rows


def true_mask(doc) -> list[np.ndarray]:
    """Boolean rows marking the true antecedents (NA slot when there are none)."""
    labels = np.array([-1 if g is None else g for g in _labels(doc)])
    rows = []
    for i in range(len(labels)):
        same = (labels[:i] == labels[i]) & (labels[i] >= 0)
        rows.append(np.append(same, not same.any()))
    return rows


def best_true_antecedent(row: np.ndarray, true_row: np.ndarray) -> int:
    """Highest-scoring true antecedent; ties go to the earliest mention, NA last."""
    idx = np.flatnonzero(true_row)
    k = int(idx[np.argmax(row[idx])])
    return NA if k == len(row) - 1 else k


def margin_loss(rows: Sequence[np.ndarray], doc, slack: Sequence[np.ndarray],
                truth: Sequence[np.ndarray] | None = None) -> tuple[float, list[np.ndarray]]:
    """Slack-rescaled max-margin loss and its gradient w.r.t. the scores.

    Per mention: ``max_c slack(c) * (1 + s(c) - s(t_hat))`` where ``t_hat`` is
    the best-scoring true antecedent.
    """
    truth = true_mask(doc) if truth is None else truth
    total = 0.0
    grads = []
    for row, cost, true_row in zip(rows, slack, truth):
        g = np.zeros(len(row))
        t = best_true_antecedent(row, true_row)
        terms = cost * (1.0 + row - row[t])
        k = int(np.argmax(terms))
        if terms[k] > 0:
            total += float(terms[k])
            g[k] += cost[k]
            g[t] -= cost[k]
        grads.append(g)
    return total, grads


def heuristic_loss(rows, doc, costs: ErrorCosts):
    return margin_loss(rows, doc, heuristic_slack(doc, costs))


# ---------------------------------------------------------------- rewards


def document_reward(actions: Sequence[int], doc: Document) -> float:
    """B-cubed F1 of the clustering induced by ``actions`` against the gold clusters."""
    response = clusters_from_links(actions, len(doc.mentions))
    return float(b_cubed_f1_exact(*b_cubed_counts(doc.gold, response)))


def substitution_rewards_naive(actions: Sequence[int], doc: Document) -> list[np.ndarray]:
    """Reward of every single-slot substitution, each recomputed from scratch."""
    actions = list(actions)
    out = []
    for i in range(len(actions)):
        row = np.empty(i + 1)
        for k, c in enumerate(list(range(i)) + [NA]):
            alt = actions.copy()
            alt[i] = c
            row[k] = document_reward(alt, doc)
        out.append(row)
    return out


class _B3Parts:
    """Exact B-cubed contributions of response clusters, keyed by gold overlap."""

    def __init__(self, gold_sizes: list[int]):
        self.gold_sizes = gold_sizes

    def contrib(self, size: int, counts: Counter) -> tuple[Fraction, int, Fraction]:
        if size < 2:  # singletons are not reported entities
            return Fraction(0), 0, Fraction(0)
        sq = sum(c * c for c in counts.values())
        r = sum((Fraction(c * c, self.gold_sizes[g]) for g, c in counts.items()), Fraction(0))
        return Fraction(sq, size), size, r


def substitution_rewards(actions: Sequence[int], doc: Document) -> list[np.ndarray]:
    """Reward R(a_1..a_i'..a_T) for every mention i and candidate a_i'.

    Row ``i`` lists candidates ``0..i-1`` then NA. Antecedent links form a
    forest (each mention points to one earlier mention), so re-pointing
    mention ``i`` detaches the subtree rooted at ``i`` from its cluster and
    attaches it to the candidate's cluster; only those clusters' B-cubed
    contributions change.
    """
    actions = [int(a) for a in actions]
    n = len(actions)
    labels = doc.gold_labels()
    parts = _B3Parts([len(g) for g in doc.gold])
    r_den = sum(len(g) for g in doc.gold)

    children: list[list[int]] = [[] for _ in range(n)]
    root = list(range(n))
    for i, a in enumerate(actions):
        if a != NA:
            if not 0 <= a < i:
                raise ValueError(f"mention {i} links to {a}: antecedents must precede the mention")
            children[a].append(i)
            root[i] = root[a]
    size: Counter = Counter(root)
    counts: dict[int, Counter] = {r: Counter() for r in size}
    for i, r in enumerate(root):
        if labels[i] is not None:
            counts[r][labels[i]] += 1
    contrib = {r: parts.contrib(size[r], counts[r]) for r in size}
    p_num = sum((c[0] for c in contrib.values()), Fraction(0))
    p_den = sum(c[1] for c in contrib.values())
    r_num = sum((c[2] for c in contrib.values()), Fraction(0))

    def f1(pn, pd, rn) -> float:
        return float(b_cubed_f1_exact(pn, pd, rn, r_den))

    base = f1(p_num, p_den, r_num)
    out = []
    for i in range(n):
        K = root[i]
        # subtree of i
        sub_counts: Counter = Counter()
        sub_size = 0
        stack = [i]
        while stack:
            m = stack.pop()
            sub_size += 1
            if labels[m] is not None:
                sub_counts[labels[m]] += 1
            stack.extend(children[m])
        rest_counts = counts[K] - sub_counts
        rest_size = size[K] - sub_size
        cK, cS, cR = contrib[K], parts.contrib(sub_size, sub_counts), parts.contrib(rest_size, rest_counts)
        minus = (p_num - cK[0] + cR[0], p_den - cK[1] + cR[1], r_num - cK[2] + cR[2])
        row = np.empty(i + 1)
        row[i] = f1(minus[0] + cS[0], minus[1] + cS[1], minus[2] + cS[2])
        merged: dict[int, float] = {}
        for c in range(i):
            L = root[c]
            if L == K:
                row[c] = base
                continue
            val = merged.get(L)
            if val is None:
                cL = contrib[L]
                cM = parts.contrib(size[L] + sub_size, counts[L] + sub_counts)
                val = merged[L] = f1(minus[0] - cL[0] + cM[0], minus[1] - cL[1] + cM[1],
                                     minus[2] - cL[2] + cM[2])
            row[c] = val
        out.append(row)
    return out


def reward_deltas(rows: Sequence[np.ndarray], doc: Document, base=None) -> list[np.ndarray]:
    """Reward lost by each action relative to the best action in its slot.

    The other slots are held at ``base`` (by default the model's own
    highest-scoring sequence).
    """
    from .model import predict_links

    actions = predict_links(rows) if base is None else base
    return [row.max() - row for row in substitution_rewards(actions, doc)]


def reward_rescaled_loss(rows, doc, truth=None):
    return margin_loss(rows, doc, reward_deltas(rows, doc), truth)


# ---------------------------------------------------------------- REINFORCE


def action_distribution(rows: Sequence[np.ndarray]) -> list[np.ndarray]:
    """Per-row softmax of the scores."""
    out = []
    for row in rows:
        e = np.exp(row - row.max())
        out.append(e / e.sum())
    return out


def sample_actions(dist: Sequence[np.ndarray], rng) -> np.ndarray:
    """One independent categorical draw per row; ``rng`` is a Generator or a seed."""
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    u = rng.random(len(dist))
    actions = np.full(len(dist), NA, dtype=np.intp)
    for i, p in enumerate(dist):
        k = min(int(np.searchsorted(np.cumsum(p), u[i], side="right")), len(p) - 1)
        actions[i] = NA if k == len(p) - 1 else k
    return actions


def reinforce_baseline(dist, sampled, doc, i: int, rewards=None) -> float:
    """Expected reward at slot ``i`` under the policy, other slots held at the sample."""
    rewards = substitution_rewards(sampled, doc) if rewards is None else rewards
    return float(dist[i] @ rewards[i])


def reinforce_gradient(rows, dist, sampled, doc, rewards=None) -> list[np.ndarray]:
    """Loss-convention gradient of the low-variance REINFORCE estimate.

    For each slot: softmax Jacobian of the row times (R(substitution) - b_i),
    negated so that descending it ascends the expected reward.
    """
    rewards = substitution_rewards(sampled, doc) if rewards is None else rewards
    grads = []
    for p, r in zip(dist, rewards):
        adv = r - p @ r
        ascent = p * adv - p * (p @ adv)  # (diag(p) - p p^T) @ adv
        grads.append(-ascent)
    return grads


# ---------------------------------------------------------------- objective objects


class HeuristicObjective:
    name = "heuristic"

    def __init__(self, costs: ErrorCosts = ErrorCosts()):
        self.costs = costs

    def __call__(self, rows, doc, rng=None):
        return heuristic_loss(rows, doc, self.costs)


class RewardRescalingObjective:
    name = "reward_rescaling"

    def __call__(self, rows, doc, rng=None):
        return reward_rescaled_loss(rows, doc)


class ReinforceObjective:
    """Value is the reward of the sampled sequence (averaged over samples)."""

    name = "reinforce"

    def __init__(self, samples: int = 1):
        if samples < 1:
            raise ValueError("need at least one sample")
        self.samples = samples

    def __call__(self, rows, doc, rng=None):
        dist = action_distribution(rows)
        total = [np.zeros(len(r)) for r in rows]
        value = 0.0
        for _ in range(self.samples):
            sampled = sample_actions(dist, rng)
            value += document_reward(sampled, doc)
            for acc, g in zip(total, reinforce_gradient(rows, dist, sampled, doc)):
                acc += g / self.samples
        return value / self.samples, total


def make_objective(name: str, costs: ErrorCosts = ErrorCosts(), samples: int = 1):
    if name == "heuristic":
        return HeuristicObjective(costs)
    if name == "reward_rescaling":
        return RewardRescalingObjective()
    if name == "reinforce":
        return ReinforceObjective(samples)
    raise ValueError(f"unknown objective {name!r}")
