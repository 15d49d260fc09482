"""Neighborhood grid search over the false-new / false-anaphor error costs.

Points live on the 15 x 15 grid {0.1, ..., 1.5}^2, stored as integer tenths.
Each trial takes the unexplored point closest (Manhattan distance) to the best
point so far; the search stops once the best point's four axis neighbors that
lie on the grid have all been explored.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Callable

LOW, HIGH = 1, 15


@dataclass(frozen=True, order=True)
class GridPoint:
    fn: int  # alpha_fn in tenths
    fa: int  # alpha_fa in tenths

    def __post_init__(self):
        if not (LOW <= self.fn <= HIGH and LOW <= self.fa <= HIGH):
            raise ValueError(f"grid point {self} outside {LOW}..{HIGH} tenths")

    @classmethod
    def from_alphas(cls, alpha_fn: float, alpha_fa: float) -> "GridPoint":
        return cls(round(alpha_fn * 10), round(alpha_fa * 10))

    @property
    def alpha_fn(self) -> float:
        return self.fn / 10

    @property
    def alpha_fa(self) -> float:
        return self.fa / 10

    def distance(self, other: "GridPoint") -> int:
        return abs(self.fn - other.fn) + abs(self.fa - other.fa)

    def neighbors(self) -> list["GridPoint"]:
        out = []
        for dfn, dfa in ((-1, 0), (1, 0), (0, -1), (0, 1)):
            fn, fa = self.fn + dfn, self.fa + dfa
            if LOW <= fn <= HIGH and LOW <= fa <= HIGH:
                out.append(GridPoint(fn, fa))
        return out


def all_points() -> list[GridPoint]:
    return [GridPoint(fn, fa) for fn in range(LOW, HIGH + 1) for fa in range(LOW, HIGH + 1)]


@dataclass
class SearchState:
    start: GridPoint = GridPoint(10, 10)
    explored: dict[GridPoint, float] = field(default_factory=dict)
    best: GridPoint | None = None
    # (trial index, point, score, best score so far)
    trials: list[tuple[int, GridPoint, float, float]] = field(default_factory=list)

    def record(self, point: GridPoint, score: float) -> None:
        if point in self.explored:
            raise ValueError(f"{point} already explored")
        self.explored[point] = score
        if self.best is None or score > self.explored[self.best]:
            self.best = point
        self.trials.append((len(self.trials), point, score, self.explored[self.best]))

    def trials_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["trial_index", "alpha_fn", "alpha_fa", "dev_conll_avg", "best_so_far"])
        for idx, p, score, best in self.trials:
            w.writerow([idx, p.alpha_fn, p.alpha_fa, score, best])
        return buf.getvalue()


def next_trial(state: SearchState) -> GridPoint | None:
    """Next point to evaluate, or ``None`` when the search is done."""
    if state.best is None:
        return state.start
    if all(p in state.explored for p in state.best.neighbors()):
        return None
    best = state.best
    candidates = [p for p in all_points() if p not in state.explored]
    return min(candidates, key=lambda p: (p.distance(best), p.fn, p.fa))


def grid_search(score_fn: Callable[[GridPoint], float],
                start: GridPoint = GridPoint(10, 10)) -> tuple[GridPoint, SearchState]:
    state = SearchState(start=start)
    while (point := next_trial(state)) is not None:
        state.record(point, float(score_fn(point)))
    return state.best, state


def manhattan_surrogate(optimum: GridPoint) -> Callable[[GridPoint], float]:
    """Score that peaks at ``optimum`` and falls off with Manhattan distance."""
    return lambda p: float(-p.distance(optimum))
