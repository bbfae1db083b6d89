# backend/horseshoe/certifier.py - Quadtree realization of symbol itineraries
"""
Given two disjoint closed balls U1, U2 on the torus, a time quantum τ and a
word s over indices J, find x_s with φ_{τj}(x_s) in U_{s(j)} for all j in J.

Initial conditions are refined on a quadtree. Each cell's centre is
advected once (positions and Jacobians at every τj are cached and shared by
all words). The image of a cell at index j is bounded by the ball around the
centre's image of radius

    ρ_j = safety · ‖Dφ_{τj}(centre)‖ · √2 · halfwidth

and the cell is
    ACCEPT  if that ball lies inside U_{s(j)} for every j,
    REJECT  if it misses U_{s(j)} for some j,
    SPLIT   otherwise.
Certification is sampled-Lipschitz, not interval-rigorous; verify_certificate
re-integrates the certified point with a finer tracer step as a control.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from joblib import Parallel, delayed

from backend.errors import ValidationError
from backend.lagrangian.trajectory import VelocityTrajectory
from backend.lagrangian.tracer import integrate_orbits
from backend.spectral.field import PhysicalPoint, TWO_PI, torus_distance

logger = logging.getLogger(__name__)

DEFAULT_SAFETY = 1.5
DEFAULT_BUDGET = 200_000
DEFAULT_MAX_DEPTH = 12
MAX_FULL_WORD_LENGTH = 12
SQRT2 = np.sqrt(2.0)

CERTIFIED = "certified"
EXCLUDED = "excluded"
BUDGET_EXHAUSTED = "budget_exhausted"


# ----------------------------
# Targets and words
# ----------------------------

@dataclass(frozen=True)
class TorusBall:
    center: PhysicalPoint
    radius: float

    def __post_init__(self):
        if not 0 < self.radius < np.pi:
            raise ValidationError(f"ball radius must lie in (0, π), got {self.radius}")

    @classmethod
    def at(cls, x1: float, x2: float, radius: float) -> "TorusBall":
        return cls(PhysicalPoint(x1, x2), float(radius))

    def contains(self, points, margin: float = 0.0) -> np.ndarray:
        return torus_distance(points, self.center.as_array()) <= self.radius - margin


@dataclass(frozen=True)
class BallPair:
    """U1 and U2; symbol 1 selects `first`, symbol 2 selects `second`."""

    first: TorusBall
    second: TorusBall

    def __post_init__(self):
        gap = float(torus_distance(self.first.center.as_array(), self.second.center.as_array()))
        if gap <= self.first.radius + self.second.radius:
            raise ValidationError(
                f"balls must be disjoint: centre distance {gap:.4g} <= r1 + r2 = "
                f"{self.first.radius + self.second.radius:.4g}"
            )

    @classmethod
    def parse(cls, text: str) -> "BallPair":
        """'c1x,c1y,r1;c2x,c2y,r2'."""
        parts = [p for p in text.replace(" ", "").split(";") if p]
        if len(parts) != 2:
            raise ValidationError(f"ball spec needs two 'cx,cy,r' groups separated by ';', got {text!r}")
        balls = []
        for part in parts:
            try:
                x1, x2, r = (float(v) for v in part.split(","))
            except ValueError:
                raise ValidationError(f"bad ball spec {part!r}; expected 'cx,cy,r'")
            balls.append(TorusBall.at(x1, x2, r))
        return cls(*balls)

    def ball(self, symbol: int) -> TorusBall:
        return self.first if symbol == 1 else self.second

    def swapped(self) -> "BallPair":
        return BallPair(self.second, self.first)

    def to_dict(self) -> dict:
        return {
            str(s): {"center": [b.center.x1, b.center.x2], "radius": b.radius}
            for s, b in ((1, self.first), (2, self.second))
        }


@dataclass(frozen=True)
class ItineraryWord:
    indices: Tuple[int, ...]
    symbols: Tuple[int, ...]
    tau: float = 1.0

    def __post_init__(self):
        idx = tuple(int(j) for j in self.indices)
        sym = tuple(int(s) for s in self.symbols)
        if len(idx) < 1:
            raise ValidationError("an itinerary needs at least one index")
        if len(idx) != len(sym):
            raise ValidationError(f"{len(idx)} indices but {len(sym)} symbols")
        if idx[0] < 0 or any(b <= a for a, b in zip(idx, idx[1:])):
            raise ValidationError(f"indices must be non-negative and strictly increasing, got {idx}")
        if any(s not in (1, 2) for s in sym):
            raise ValidationError(f"symbols must be 1 or 2, got {sym}")
        if not self.tau > 0:
            raise ValidationError(f"tau must be positive, got {self.tau}")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "symbols", sym)

    @property
    def label(self) -> str:
        return "".join(str(s) for s in self.symbols)

    def complement(self) -> "ItineraryWord":
        return ItineraryWord(self.indices, tuple(3 - s for s in self.symbols), self.tau)


def all_words(indices: Sequence[int], tau: float = 1.0) -> List[ItineraryWord]:
    return [ItineraryWord(tuple(indices), symbols, tau) for symbols in itertools.product((1, 2), repeat=len(indices))]


# ----------------------------
# Cells and certificates
# ----------------------------

@dataclass(frozen=True, order=True)
class Cell:
    depth: int
    ix: int
    iy: int

    @property
    def halfwidth(self) -> float:
        return np.pi / 2**self.depth

    @property
    def center(self) -> np.ndarray:
        size = TWO_PI / 2**self.depth
        return np.array([(self.ix + 0.5) * size, (self.iy + 0.5) * size])

    def children(self) -> List["Cell"]:
        d, i, j = self.depth + 1, 2 * self.ix, 2 * self.iy
        return [Cell(d, i, j), Cell(d, i, j + 1), Cell(d, i + 1, j), Cell(d, i + 1, j + 1)]


ROOT = Cell(0, 0, 0)


@dataclass
class CellCertificate:
    point: PhysicalPoint
    halfwidth: float
    depth: int
    margins: Dict[int, float]
    lipschitz: Dict[int, float]
    word: Optional[ItineraryWord] = None

    def to_dict(self) -> dict:
        return {
            "x1": self.point.x1,
            "x2": self.point.x2,
            "halfwidth": self.halfwidth,
            "depth": self.depth,
            "margins": {str(j): m for j, m in self.margins.items()},
            "lipschitz": {str(j): v for j, v in self.lipschitz.items()},
        }


@dataclass
class WordResult:
    word: ItineraryWord
    status: str
    depth: int
    certificate: Optional[CellCertificate] = None
    frontier: List[Cell] = field(default_factory=list)
    cells: int = 0  # cells charged to this word

    @property
    def certified(self) -> bool:
        return self.status == CERTIFIED

    def to_dict(self) -> dict:
        out = {
            "word": self.word.label,
            "indices": list(self.word.indices),
            "status": self.status,
            "depth": self.depth,
            "certificate": self.certificate.to_dict() if self.certificate else None,
            "cells": self.cells,
        }
        if self.status == EXCLUDED:
            out["reason"] = f"word excluded at depth {self.depth}"
        elif self.status == BUDGET_EXHAUSTED:
            out["frontier_size"] = len(self.frontier)
        return out


# ----------------------------
# Flow oracle
# ----------------------------

class FlowOracle:
    """
    Positions and Jacobian norms at times τ·j, j = 0..horizon_index, over
    one fixed velocity realization. Cell-centre orbits are cached, so every
    word and index set searched against this oracle shares them.
    """

    def __init__(self, trajectory: VelocityTrajectory, tau: float, horizon_index: int,
                 substeps: int = 1, workers: int = 1, chunk_size: int = 256, start_segment: int = 0):
        if horizon_index < 0:
            raise ValidationError(f"horizon index must be non-negative, got {horizon_index}")
        self.trajectory = trajectory
        self.tau = float(tau)
        self.segments_per_tau = trajectory.segments_for(tau)
        if self.segments_per_tau < 1 and horizon_index > 0:
            raise ValidationError(f"tau={tau} must span at least one trajectory segment")
        trajectory.check_covers(start_segment, self.segments_per_tau * horizon_index)
        self.horizon_index = int(horizon_index)
        self.substeps = int(substeps)
        self.workers = max(1, int(workers))
        self.chunk_size = int(chunk_size)
        self.start_segment = int(start_segment)
        self._cache: Dict[Cell, Tuple[np.ndarray, np.ndarray]] = {}

    @property
    def cached_cells(self) -> int:
        return len(self._cache)

    def _integrate(self, points: np.ndarray, substeps: int) -> Tuple[np.ndarray, np.ndarray]:
        P, H = len(points), self.horizon_index
        positions = np.empty((P, H + 1, 2))
        norms = np.ones((P, H + 1))
        positions[:, 0] = np.mod(points, TWO_PI)
        x, D = points, None
        for j in range(1, H + 1):
            batch = integrate_orbits(
                self.trajectory, x, self.segments_per_tau, substeps, jacobians0=D,
                start_segment=self.start_segment + (j - 1) * self.segments_per_tau,
            )
            x, D = batch.positions, batch.jacobians
            positions[:, j] = x
            norms[:, j] = np.linalg.norm(D, ord=2, axis=(-2, -1))
        return positions, norms

    def orbits(self, points, substeps: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray]:
        """(P, H+1, 2) positions and (P, H+1) Jacobian norms for arbitrary points."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        sub = self.substeps if substeps is None else int(substeps)
        chunks = [points[i:i + self.chunk_size] for i in range(0, len(points), self.chunk_size)]
        if self.workers > 1 and len(chunks) > 1:
            results = Parallel(n_jobs=self.workers, prefer="threads")(
                delayed(self._integrate)(chunk, sub) for chunk in chunks
            )
        else:
            results = [self._integrate(chunk, sub) for chunk in chunks]
        return np.concatenate([r[0] for r in results]), np.concatenate([r[1] for r in results])

    def lookup(self, cells: Sequence[Cell]) -> Tuple[np.ndarray, np.ndarray, int]:
        """Cached orbit data for cells; returns positions, norms and the number of new orbits."""
        missing = [c for c in cells if c not in self._cache]
        if missing:
            positions, norms = self.orbits(np.array([c.center for c in missing]))
            for i, c in enumerate(missing):
                self._cache[c] = (positions[i], norms[i])
        positions = np.stack([self._cache[c][0] for c in cells])
        norms = np.stack([self._cache[c][1] for c in cells])
        return positions, norms, len(missing)


# ----------------------------
# Quadtree search
# ----------------------------

class QuadtreeSearch:
    """
    Breadth-first refinement of a set of words over one shared orbit cache.

    The budget is charged per word: a word pays for the cells in its own
    frontier, whatever other words share them. When a level holds more cells
    than a word can still afford, the affordable ones are classified first in
    order of their parent's worst margin, and the word is certified if any of
    them is accepted; only then is it reported as out of budget.
    """

    def __init__(self, balls: BallPair, oracle: FlowOracle, budget: int = DEFAULT_BUDGET,
                 max_depth: int = DEFAULT_MAX_DEPTH, safety: float = DEFAULT_SAFETY):
        if budget < 1:
            raise ValidationError(f"budget must be positive, got {budget}")
        if not 0 <= max_depth <= 30:
            raise ValidationError(f"max_depth must lie in [0, 30], got {max_depth}")
        if safety < 1:
            raise ValidationError(f"safety factor must be >= 1, got {safety}")
        self.balls = balls
        self.oracle = oracle
        self.budget = int(budget)
        self.max_depth = int(max_depth)
        self.safety = float(safety)
        self.visits = 0

    def _targets(self, word: ItineraryWord) -> Tuple[np.ndarray, np.ndarray]:
        if word.indices[-1] > self.oracle.horizon_index:
            raise ValidationError(
                f"word index {word.indices[-1]} exceeds the oracle horizon {self.oracle.horizon_index}"
            )
        centers = np.array([self.balls.ball(s).center.as_array() for s in word.symbols])
        radii = np.array([self.balls.ball(s).radius for s in word.symbols])
        return centers, radii

    def classify(self, word: ItineraryWord, positions: np.ndarray, norms: np.ndarray, halfwidth: float):
        """Per-cell accept/reject flags plus the per-index margins and Lipschitz bounds."""
        centers, radii = self._targets(word)
        J = list(word.indices)
        dist = torus_distance(positions[:, J], centers[None])
        lipschitz = self.safety * norms[:, J]
        rho = lipschitz * SQRT2 * halfwidth
        margins = radii[None] - dist - rho
        accept = np.all(margins > 0, axis=1)
        reject = np.any(dist - rho - radii[None] > 0, axis=1)
        return accept, reject, margins, lipschitz

    def _affordable(self, entries: List[Tuple[float, Cell]], room: int):
        if len(entries) <= room:
            return [c for _, c in entries], []
        ranked = sorted(entries, key=lambda e: (-e[0], e[1]))
        return [c for _, c in ranked[:room]], [c for _, c in ranked[room:]]

    def search(self, words: Sequence[ItineraryWord]) -> Dict[ItineraryWord, WordResult]:
        results: Dict[ItineraryWord, WordResult] = {}
        # (parent's worst margin, cell); the root has nothing to rank against
        frontier: Dict[ItineraryWord, List[Tuple[float, Cell]]] = {w: [(np.inf, ROOT)] for w in words}
        charged = {w: 0 for w in words}
        seen: set = set()
        for depth in range(self.max_depth + 1):
            if not frontier:
                break
            taken, skipped = {}, {}
            for w, entries in frontier.items():
                taken[w], skipped[w] = self._affordable(entries, self.budget - charged[w])
            level = sorted(set(itertools.chain.from_iterable(taken.values())))
            row = {c: i for i, c in enumerate(level)}
            if level:
                positions, norms, _ = self.oracle.lookup(level)
                seen.update(level)
                self.visits = len(seen)
            halfwidth = np.pi / 2**depth

            next_frontier: Dict[ItineraryWord, List[Tuple[float, Cell]]] = {}
            for w in frontier:
                cells, left = taken[w], skipped[w]
                charged[w] += len(cells)
                if not cells:
                    results[w] = WordResult(w, BUDGET_EXHAUSTED, depth, frontier=left, cells=charged[w])
                    continue
                idx = [row[c] for c in cells]
                accept, reject, margins, lipschitz = self.classify(w, positions[idx], norms[idx], halfwidth)
                worst = margins.min(axis=1)
                if np.any(accept):
                    k = int(np.argmax(np.where(accept, worst, -np.inf)))
                    x1, x2 = cells[k].center
                    results[w] = WordResult(w, CERTIFIED, depth, CellCertificate(
                        point=PhysicalPoint(x1, x2),
                        halfwidth=halfwidth,
                        depth=depth,
                        margins={j: float(m) for j, m in zip(w.indices, margins[k])},
                        lipschitz={j: float(v) for j, v in zip(w.indices, lipschitz[k])},
                        word=w,
                    ), cells=charged[w])
                    continue
                survivors = [(float(worst[i]), c) for i, c in enumerate(cells) if not reject[i]]
                if left:
                    logger.debug(f"word {w.label}: budget {self.budget} exhausted at depth {depth}")
                    results[w] = WordResult(w, BUDGET_EXHAUSTED, depth,
                                            frontier=[c for _, c in survivors] + left, cells=charged[w])
                elif not survivors:
                    results[w] = WordResult(w, EXCLUDED, depth, cells=charged[w])
                elif depth == self.max_depth:
                    results[w] = WordResult(w, BUDGET_EXHAUSTED, depth,
                                            frontier=[c for _, c in survivors], cells=charged[w])
                else:
                    next_frontier[w] = [(m, child) for m, c in survivors for child in c.children()]
            frontier = next_frontier
        return results


def realize_word(balls: BallPair, word: ItineraryWord, oracle: FlowOracle, budget: int = DEFAULT_BUDGET,
                 max_depth: int = DEFAULT_MAX_DEPTH, safety: float = DEFAULT_SAFETY) -> WordResult:
    """Search for x_s realizing one word; the result carries either a certificate or the failure status."""
    return QuadtreeSearch(balls, oracle, budget, max_depth, safety).search([word])[word]


@dataclass
class HorseshoeReport:
    indices: Tuple[int, ...]
    tau: float
    results: List[WordResult]
    visits: int

    @property
    def full_horseshoe(self) -> bool:
        return all(r.certified for r in self.results)

    @property
    def counts(self) -> Dict[str, int]:
        out = {CERTIFIED: 0, EXCLUDED: 0, BUDGET_EXHAUSTED: 0}
        for r in self.results:
            out[r.status] += 1
        return out

    def to_dict(self) -> dict:
        return {
            "indices": list(self.indices),
            "tau": self.tau,
            "full_horseshoe": self.full_horseshoe,
            "counts": self.counts,
            "cell_orbits": self.visits,
            "words": [r.to_dict() for r in self.results],
        }


def certify_full_horseshoe(balls: BallPair, J: Sequence[int], oracle: FlowOracle, budget: int = DEFAULT_BUDGET,
                           max_depth: int = DEFAULT_MAX_DEPTH, safety: float = DEFAULT_SAFETY) -> HorseshoeReport:
    """Run all 2^|J| words over one shared tree."""
    if not 1 <= len(J) <= MAX_FULL_WORD_LENGTH:
        raise ValidationError(f"|J| must lie in [1, {MAX_FULL_WORD_LENGTH}], got {len(J)}")
    words = all_words(J, oracle.tau)
    search = QuadtreeSearch(balls, oracle, budget, max_depth, safety)
    logger.info(f"Certifying {len(words)} words over J={list(J)} (tau={oracle.tau}, budget={budget})")
    found = search.search(words)
    report = HorseshoeReport(tuple(words[0].indices), oracle.tau, [found[w] for w in words], search.visits)
    counts = report.counts
    marker = "✓" if report.full_horseshoe else "✗"
    logger.info(
        f"{marker} {counts[CERTIFIED]}/{len(words)} words certified, {counts[EXCLUDED]} excluded, "
        f"{counts[BUDGET_EXHAUSTED]} out of budget ({search.visits} cell orbits)"
    )
    return report


# ----------------------------
# Independent checks
# ----------------------------

@dataclass
class BruteForceResult:
    found: bool
    point: Optional[PhysicalPoint]
    hits: int
    resolution: int


def brute_force_search(balls: BallPair, word: ItineraryWord, oracle: FlowOracle, resolution: int = 400) -> BruteForceResult:
    """Test every centre of a resolution x resolution grid of initial points."""
    ticks = (np.arange(resolution) + 0.5) * (TWO_PI / resolution)
    X1, X2 = np.meshgrid(ticks, ticks, indexing="ij")
    points = np.column_stack([X1.ravel(), X2.ravel()])
    positions, _ = oracle.orbits(points)
    inside = np.ones(len(points), dtype=bool)
    for j, s in zip(word.indices, word.symbols):
        inside &= balls.ball(s).contains(positions[:, j])
    hits = int(inside.sum())
    point = None
    if hits:
        x1, x2 = points[int(np.argmax(inside))]
        point = PhysicalPoint(x1, x2)
    return BruteForceResult(hits > 0, point, hits, resolution)


@dataclass
class VerificationResult:
    ok: bool
    margins: Dict[int, float]
    worst_ratio: float


def verify_certificate(cert: CellCertificate, balls: BallPair, oracle: FlowOracle, refine: int = 10) -> VerificationResult:
    """
    Re-integrate the certified point with `refine` times more tracer substeps;
    every index must keep at least half the reported margin.
    """
    if cert.word is None:
        raise ValidationError("certificate carries no word to verify")
    positions, _ = oracle.orbits(cert.point.as_array()[None], substeps=oracle.substeps * refine)
    margins, ratios = {}, []
    for j, s in zip(cert.word.indices, cert.word.symbols):
        target = balls.ball(s)
        m = target.radius - float(torus_distance(positions[0, j], target.center.as_array()))
        margins[j] = m
        ratios.append(m / cert.margins[j])
    worst = float(min(ratios))
    return VerificationResult(ok=worst >= 0.5, margins=margins, worst_ratio=worst)
