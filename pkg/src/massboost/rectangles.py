"""Weak learning for unions of axis-aligned rectangles.

A rectangle is an intersection of strict inequalities sign * x[axis] < t,
one direction vector per inequality, at most 2d of them. A union of k such
rectangles labels points +1 inside and -1 outside. The weak learner hunts
for a rectangle written in the violated form (sign * x[axis] >= t, at most k
inequalities) that sits inside the negative region and carries enough
empirical mass, then predicts -1 on it and the outside-majority label
elsewhere. The companion enumerator walks all product choices of one
violated inequality per component rectangle, which is the exhaustive check
that such a negative rectangle with mass at least (negative mass)/(2d)^k
always exists.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .core import FiniteMassartDist, LabeledSample

__all__ = [
    "BoxHypothesis",
    "BoxWeakLearner",
    "EmptySample",
    "Ineq",
    "NegRectangle",
    "Rectangle",
    "RectangleUnion",
    "dump_union",
    "enumerate_negative_subrectangles",
    "load_union",
    "parse_union",
    "rect_union_eval",
    "save_union",
    "wkl_box",
]

logger = logging.getLogger(__name__)


class EmptySample(ValueError):
    """The weak learner was handed an empty sample."""


Ineq = Tuple[int, int, float]  # (axis, direction in {-1,+1}, threshold)


@dataclass(frozen=True)
class Rectangle:
    """Intersection of strict inequalities direction * x[axis] < threshold."""

    ineqs: Tuple[Ineq, ...]

    def contains(self, xs: np.ndarray) -> np.ndarray:
        xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
        inside = np.ones(xs.shape[0], dtype=bool)
        for axis, direction, t in self.ineqs:
            inside &= direction * xs[:, axis] < t
        return inside


@dataclass(frozen=True)
class NegRectangle:
    """Intersection of closed inequalities direction * x[axis] >= threshold.

    The complement form: each inequality is the exact violation of a strict
    rectangle inequality with the same (axis, direction, threshold).
    """

    ineqs: Tuple[Ineq, ...]

    def contains(self, xs: np.ndarray) -> np.ndarray:
        xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
        inside = np.ones(xs.shape[0], dtype=bool)
        for axis, direction, t in self.ineqs:
            inside &= direction * xs[:, axis] >= t
        return inside


@dataclass(frozen=True)
class RectangleUnion:
    """Union of rectangles as a concept: +1 strictly inside any member, else -1."""

    rects: Tuple[Rectangle, ...]

    def __call__(self, xs: np.ndarray) -> np.ndarray:
        xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
        inside = np.zeros(xs.shape[0], dtype=bool)
        for rect in self.rects:
            inside |= rect.contains(xs)
        return np.where(inside, 1, -1).astype(np.int8)


def rect_union_eval(union: RectangleUnion, x) -> int:
    """Membership label of a single point; boundary points fail the strict test."""
    return int(union(np.atleast_2d(np.asarray(x, dtype=np.float64)))[0])


@dataclass(frozen=True)
class BoxHypothesis:
    """Weak hypothesis: -1 on b_best, the fallback label z outside.

    With constant_flag set there is no rectangle and the hypothesis is the
    constant z everywhere (z = +1 for the small-negative-fraction branch,
    the sample majority when no candidate met the mass floor).
    """

    b_best: Optional[NegRectangle]
    z: int
    constant_flag: bool = False

    def __call__(self, xs: np.ndarray) -> np.ndarray:
        xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
        if self.constant_flag or self.b_best is None:
            return np.full(xs.shape[0], self.z, dtype=np.int8)
        return np.where(self.b_best.contains(xs), -1, self.z).astype(np.int8)


def _majority(ys: np.ndarray) -> int:
    """Majority label; ties (including empty input) default to +1."""
    return 1 if np.sum(ys == 1) >= np.sum(ys == -1) else -1


def wkl_box(sample: LabeledSample, d: int, k: int, alpha: float) -> BoxHypothesis:
    """Train the rectangle weak learner on a labeled sample.

    If the observed negative fraction is below alpha/2, returns the constant
    +1 hypothesis. Otherwise enumerates every candidate rectangle with at
    most k closed inequalities, directions over the 2d signed axes and
    thresholds at sample coordinates, keeps those with empirical mass
    strictly above alpha / (8 (2d)^k), and returns the one minimizing the
    positive fraction inside (ties: larger support, then enumeration order).
    """
    n = len(sample)
    if n == 0:
        raise EmptySample("weak learner needs a nonempty sample")
    xs = np.atleast_2d(np.asarray(sample.xs, dtype=np.float64))
    ys = np.asarray(sample.ys)
    if xs.shape[1] != d:
        raise ValueError(f"sample dimension {xs.shape[1]} != d = {d}")

    if np.mean(ys == -1) < alpha / 2.0:
        return BoxHypothesis(None, 1, constant_flag=True)

    floor = alpha / (8.0 * (2.0 * d) ** k)
    pos = (ys == 1).astype(np.float64)
    families = [(axis, direction) for axis in range(d) for direction in (1, -1)]
    projections = [direction * xs[:, axis] for axis, direction in families]
    fam_unique = [np.unique(proj, return_inverse=True) for proj in projections]

    best_key = None  # (ratio, -count, block_rank, flat_idx)
    best_rect: Optional[NegRectangle] = None
    block_rank = 0

    for r in range(1, k + 1):
        for combo in itertools.combinations(range(len(families)), r):
            uniques = [fam_unique[fi][0] for fi in combo]
            inverses = [fam_unique[fi][1] for fi in combo]
            shape = tuple(len(u) for u in uniques)
            flat = np.ravel_multi_index(tuple(inverses), shape)
            size = int(np.prod(shape))
            counts = np.bincount(flat, minlength=size).reshape(shape).astype(np.float64)
            pos_counts = np.bincount(flat, weights=pos, minlength=size).reshape(shape)
            # suffix sums along every axis: cell -> count of samples with all
            # projections >= the cell's thresholds
            for ax in range(r):
                counts = np.flip(np.cumsum(np.flip(counts, axis=ax), axis=ax), axis=ax)
                pos_counts = np.flip(np.cumsum(np.flip(pos_counts, axis=ax), axis=ax), axis=ax)
            counts = counts.ravel()
            pos_counts = pos_counts.ravel()
            mask = counts / n > floor
            if mask.any():
                idx = np.nonzero(mask)[0]
                ratio = pos_counts[idx] / counts[idx]
                order = np.lexsort((idx, -counts[idx], ratio))
                j = order[0]
                key = (float(ratio[j]), -float(counts[idx[j]]), block_rank, int(idx[j]))
                if best_key is None or key < best_key:
                    best_key = key
                    cell = np.unravel_index(idx[j], shape)
                    ineqs = tuple(
                        (families[fi][0], families[fi][1], float(uniques[pos_i][cell[pos_i]]))
                        for pos_i, fi in enumerate(combo)
                    )
                    best_rect = NegRectangle(ineqs)
            block_rank += 1

    if best_rect is None:
        z = _majority(ys)
        logger.info("wkl_box: no candidate rectangle met the mass floor; constant %+d", z)
        return BoxHypothesis(None, z, constant_flag=True)

    outside = ~best_rect.contains(xs)
    z = _majority(ys[outside])
    return BoxHypothesis(best_rect, z, constant_flag=False)


def enumerate_negative_subrectangles(
    union: RectangleUnion, dist: FiniteMassartDist
) -> Tuple[NegRectangle, float]:
    """Exhaustive search for the heaviest negative rectangle of the product form.

    Every choice of one violated inequality per component rectangle yields a
    closed rectangle contained in the negative region; this walks all of
    them (at most (2d)^k), verifies containment on the support, and returns
    the one with maximum marginal mass. Returns mass 0 when the negative
    region is empty.
    """
    labels = union(dist.xs)
    negative = labels == -1
    if any(len(rect.ineqs) == 0 for rect in union.rects):
        # an unconstrained rectangle covers everything: nothing to violate
        return NegRectangle(()), 0.0
    best_rect = None
    best_mass = -1.0
    for choice in itertools.product(*(rect.ineqs for rect in union.rects)):
        cand = NegRectangle(tuple(choice))
        inside = cand.contains(dist.xs)
        if np.any(inside & ~negative):
            raise AssertionError("product rectangle escaped the negative region")
        mass = float(dist.p[inside].sum())
        if mass > best_mass:
            best_mass = mass
            best_rect = cand
    if best_rect is None:
        return NegRectangle(()), 0.0
    return best_rect, max(best_mass, 0.0)


@dataclass
class BoxWeakLearner:
    """Booster-facing adapter around wkl_box.

    The advertised advantage is alpha^2 / (C d)^k and the requested sample
    size is ceil(sample_scale * k (C d)^k / alpha^2); C defaults to 2,
    matching the (2d)^k combinatorics of the enumeration.
    """

    d: int
    k: int
    alpha: float
    c_const: float = 2.0
    sample_scale: float = 1.0

    @property
    def gamma(self) -> float:
        return self.alpha**2 / (self.c_const * self.d) ** self.k

    @property
    def sample_size(self) -> int:
        base = self.k * (self.c_const * self.d) ** self.k / self.alpha**2
        return max(1, int(np.ceil(self.sample_scale * base)))

    def train(self, sample: LabeledSample, rng: np.random.Generator) -> BoxHypothesis:
        return wkl_box(sample, self.d, self.k, self.alpha)


# -- serialization ------------------------------------------------------------
#
# Same line-oriented style as distributions: header "d n_rects", then one
# inequality per line as "rect_id axis direction threshold".


def dump_union(union: RectangleUnion, d: int) -> str:
    lines = [f"{d} {len(union.rects)}"]
    for rid, rect in enumerate(union.rects):
        for axis, direction, t in rect.ineqs:
            lines.append(f"{rid} {axis} {direction} {format(float(t), '.17g')}")
    return "\n".join(lines) + "\n"


def parse_union(text: str) -> Tuple[RectangleUnion, int]:
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        raise ValueError("empty rectangle-union file")
    header = lines[0].split()
    if len(header) != 2:
        raise ValueError(f"bad header {lines[0]!r}, expected 'd n_rects'")
    d, n_rects = int(header[0]), int(header[1])
    ineqs_by_rect: dict[int, list[Ineq]] = {rid: [] for rid in range(n_rects)}
    for ln in lines[1:]:
        parts = ln.split()
        if len(parts) != 4:
            raise ValueError(f"bad inequality line {ln!r}")
        rid, axis, direction = int(parts[0]), int(parts[1]), int(parts[2])
        if rid not in ineqs_by_rect:
            raise ValueError(f"rect_id {rid} out of range")
        if direction not in (-1, 1):
            raise ValueError(f"direction must be -1 or +1, got {direction}")
        if not 0 <= axis < d:
            raise ValueError(f"axis {axis} out of range for d = {d}")
        ineqs_by_rect[rid].append((axis, direction, float(parts[3])))
    rects = tuple(Rectangle(tuple(ineqs_by_rect[rid])) for rid in range(n_rects))
    return RectangleUnion(rects), d


def save_union(union: RectangleUnion, d: int, path) -> None:
    with open(path, "w") as fh:
        fh.write(dump_union(union, d))


def load_union(path) -> Tuple[RectangleUnion, int]:
    with open(path) as fh:
        return parse_union(fh.read())
