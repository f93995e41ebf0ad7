"""Competence bookkeeping and interest-driven goal/strategy selection.

Progress on a goal is the drop of the best distance ever achieved for it
(novel goals start from the unreached penalty), divided by the cost of the
strategy that earned it.  Recent interest per strategy accumulates in an
axis-aligned partition of each outcome subspace; overfull cells split along
the cut that best separates low- from high-interest samples.  Episode goals
and strategies are drawn by fitness-proportionate selection over the
(region, strategy) grid, with a uniform floor so nothing starves.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .outcomes import Outcome, OutcomeSpace, distance


@dataclass
class InterestEntry:
    point: np.ndarray  # normalized coordinates
    strategy: str
    interest: float
    timestamp: int


class InterestRegion:
    """One cell of a subspace partition with per-strategy recent interest."""

    def __init__(self, region_id: int, space_id: int, lower: np.ndarray,
                 upper: np.ndarray, window: int):
        self.region_id = region_id
        self.space_id = space_id
        self.lower = lower
        self.upper = upper
        self.window = window
        self.entries: list[InterestEntry] = []
        self._recent: dict[str, deque] = {}
        self._recent_sum: dict[str, float] = {}

    def contains(self, point: np.ndarray) -> bool:
        return bool(np.all(point >= self.lower) and np.all(point < self.upper))

    def add(self, entry: InterestEntry) -> None:
        self.entries.append(entry)
        recent = self._recent.get(entry.strategy)
        if recent is None:
            recent = deque(maxlen=self.window)
            self._recent[entry.strategy] = recent
            self._recent_sum[entry.strategy] = 0.0
        if len(recent) == self.window:
            self._recent_sum[entry.strategy] -= recent[0]
        recent.append(entry.interest)
        self._recent_sum[entry.strategy] += entry.interest

    def interest(self, strategy: str) -> float:
        recent = self._recent.get(strategy)
        if not recent:
            return 0.0
        return self._recent_sum[strategy] / len(recent)

    def volume(self) -> float:
        return float(np.prod(self.upper - self.lower))


def split_region(region: InterestRegion, next_id, quantiles: int = 9
                 ) -> tuple[InterestRegion, InterestRegion]:
    """Split along the candidate cut best separating interest levels.

    Candidate cuts are per-dimension quantiles of the stored points; the
    winner maximizes the child-cardinality-weighted squared difference of
    mean interest.  Unseparable contents split at the midpoint of the
    widest dimension.
    """
    pts = np.array([e.point for e in region.entries])
    vals = np.array([e.interest for e in region.entries])
    best = None  # (criterion, dim, cut)
    for dim in range(len(region.lower)):
        coords = pts[:, dim]
        cuts = np.quantile(coords, np.linspace(0.1, 0.9, quantiles))
        for cut in np.unique(cuts):
            left = coords < cut
            n_left = int(left.sum())
            n_right = len(coords) - n_left
            if n_left == 0 or n_right == 0:
                continue
            score = n_left * n_right * (vals[left].mean() - vals[~left].mean()) ** 2
            if best is None or score > best[0]:
                best = (score, dim, float(cut))
    if best is None or best[0] <= 0.0:
        widths = region.upper - region.lower
        dim = int(np.argmax(widths))
        cut = float(region.lower[dim] + widths[dim] / 2.0)
    else:
        _, dim, cut = best

    lo_upper = region.upper.copy()
    lo_upper[dim] = cut
    hi_lower = region.lower.copy()
    hi_lower[dim] = cut
    low = InterestRegion(next_id(), region.space_id, region.lower.copy(), lo_upper,
                         region.window)
    high = InterestRegion(next_id(), region.space_id, hi_lower, region.upper.copy(),
                          region.window)
    for entry in region.entries:
        (low if entry.point[dim] < cut else high).add(entry)
    return low, high


@dataclass
class SelectionResult:
    goal: Outcome
    strategy: str
    region_id: int


class InterestMap:
    """Partitioned interest model driving goal and strategy choice."""

    def __init__(self, spaces: dict[int, OutcomeSpace], strategy_costs: dict[str, float],
                 d_thres: float = 5.0, window: int = 20, split_threshold: int = 80,
                 epsilon: float = 0.05, cell_size: float = 0.05,
                 min_split_width: float = 1e-9):
        self.spaces = spaces
        self.strategy_costs = dict(strategy_costs)
        self.d_thres = d_thres
        self.window = window
        self.split_threshold = split_threshold
        self.epsilon = epsilon
        self.cell_size = cell_size
        self.min_split_width = min_split_width
        self._next_region_id = 0
        self.regions: dict[int, list[InterestRegion]] = {
            sid: [self._new_region(sid, np.zeros(sp.dim), np.ones(sp.dim))]
            for sid, sp in spaces.items()
        }
        # best distance achieved per quantized goal cell, per subspace
        self._best: dict[int, dict[tuple, float]] = {sid: {} for sid in spaces}
        self._clock = 0
        self._bounds_cache: dict[int, tuple[np.ndarray, np.ndarray]] = {}

    def _new_region(self, space_id: int, lower: np.ndarray, upper: np.ndarray
                    ) -> InterestRegion:
        region = InterestRegion(self._next_region_id, space_id, lower, upper, self.window)
        self._next_region_id += 1
        return region

    def _take_id(self) -> int:
        rid = self._next_region_id
        self._next_region_id += 1
        return rid

    def _cell(self, space_id: int, values: np.ndarray) -> tuple:
        norm = self.spaces[space_id].normalize(values)
        return tuple(np.floor(norm / self.cell_size).astype(int).tolist())

    # -- competence and progress ------------------------------------------

    def competence(self, goal: Outcome, reached: list[Outcome]) -> float:
        """Best distance to the goal among same-subspace effects, else the
        unreached penalty."""
        dists = [distance(r, goal, self.spaces) for r in reached
                 if r.space_id == goal.space_id]
        return min(dists) if dists else self.d_thres

    def _progress(self, space_id: int, values: np.ndarray, achieved: float) -> float:
        cell = self._cell(space_id, values)
        ledger = self._best[space_id]
        before = ledger.get(cell, self.d_thres)
        after = min(before, achieved)
        ledger[cell] = after
        return before - after

    # -- updating ----------------------------------------------------------

    def update(self, goal: Outcome, strategy: str, reached: list[Outcome]
               ) -> list[tuple[Outcome, str, float]]:
        """Credit the episode's progress to the goal and every reached effect.

        Reached effects count as exactly achieved, so their first visit earns
        the full novelty progress and later visits earn nothing.
        """
        cost = self.strategy_costs[strategy]
        self._clock += 1
        results = []
        goal_comp = self.competence(goal, reached)
        entries = [(goal, goal_comp)] + [(out, 0.0) for out in reached
                                         if out.space_id in self.spaces]
        for outcome, achieved in entries:
            progress = self._progress(outcome.space_id, outcome.values, achieved)
            interest = progress / cost
            results.append((outcome, strategy, interest))
            self._insert(outcome, strategy, interest)
        return results

    def _insert(self, outcome: Outcome, strategy: str, interest: float) -> None:
        point = self.spaces[outcome.space_id].normalize(outcome.values)
        region = self._find_region(outcome.space_id, point)
        region.add(InterestEntry(point=point, strategy=strategy, interest=interest,
                                 timestamp=self._clock))
        self._maybe_split(outcome.space_id)

    def _region_bounds(self, space_id: int) -> tuple[np.ndarray, np.ndarray]:
        cached = self._bounds_cache.get(space_id)
        if cached is None:
            regions = self.regions[space_id]
            cached = (np.array([r.lower for r in regions]),
                      np.array([r.upper for r in regions]))
            self._bounds_cache[space_id] = cached
        return cached

    def _find_region(self, space_id: int, point: np.ndarray) -> InterestRegion:
        lowers, uppers = self._region_bounds(space_id)
        hits = np.flatnonzero(np.all(point >= lowers, axis=1)
                              & np.all(point < uppers, axis=1))
        if len(hits):
            return self.regions[space_id][int(hits[0])]
        # points at the far upper boundary belong to the last covering cell
        hits = np.flatnonzero(np.all(point >= lowers, axis=1)
                              & np.all(point <= uppers, axis=1))
        if len(hits):
            return self.regions[space_id][int(hits[0])]
        raise RuntimeError("partition failed to cover a normalized point")

    def _maybe_split(self, space_id: int) -> None:
        regions = self.regions[space_id]
        changed = True
        while changed:
            changed = False
            for i, region in enumerate(regions):
                if len(region.entries) <= self.split_threshold:
                    continue
                if float(np.max(region.upper - region.lower)) < self.min_split_width:
                    continue  # degenerate pile of identical points
                low, high = split_region(region, self._take_id)
                regions[i:i + 1] = [low, high]
                self._bounds_cache.pop(space_id, None)
                changed = True
                break

    # -- selection ---------------------------------------------------------

    def select(self, strategies: list[str], rng: np.random.Generator) -> SelectionResult:
        """Roulette draw over (region, strategy) with an epsilon floor."""
        pairs = [(region, strategy)
                 for sid in sorted(self.regions)
                 for region in self.regions[sid]
                 for strategy in strategies]
        weights = np.array([region.interest(strategy) for region, strategy in pairs])
        weights = np.maximum(weights, 0.0)
        total = weights.sum()
        if total <= 0.0 or rng.random() < self.epsilon:
            idx = int(rng.integers(len(pairs)))
        else:
            idx = int(rng.choice(len(pairs), p=weights / total))
        region, strategy = pairs[idx]
        space = self.spaces[region.space_id]
        norm_goal = rng.uniform(region.lower, region.upper)
        raw = space.lower + norm_goal * (space.upper - space.lower)
        return SelectionResult(goal=Outcome(region.space_id, raw), strategy=strategy,
                               region_id=region.region_id)

    # -- introspection ------------------------------------------------------

    def tiling_ok(self, space_id: int, samples: int = 200,
                  rng: np.random.Generator | None = None) -> bool:
        """Volumes sum to the unit box and random points fall in exactly one
        region."""
        regions = self.regions[space_id]
        vol = sum(r.volume() for r in regions)
        if abs(vol - 1.0) > 1e-9:
            return False
        rng = rng or np.random.default_rng(0)
        dim = self.spaces[space_id].dim
        for _ in range(samples):
            point = rng.uniform(0, 1, dim)
            hits = sum(1 for r in regions if r.contains(point))
            if hits != 1:
                return False
        return True

    def export_rows(self) -> list[dict]:
        rows = []
        for sid in sorted(self.regions):
            for region in self.regions[sid]:
                for strategy in sorted(self.strategy_costs):
                    rows.append({
                        "space": self.spaces[sid].name,
                        "region_id": region.region_id,
                        "lower": region.lower.tolist(),
                        "upper": region.upper.tolist(),
                        "strategy": strategy,
                        "interest": region.interest(strategy),
                        "points": len(region.entries),
                    })
        return rows
