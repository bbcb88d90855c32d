"""Domain core: labeled examples, finite Massart distributions, example oracles.

A Massart distribution is specified by a marginal over domain points, a true
labeling f(x) in {-1,+1}, and a per-point flip probability eta(x) <= eta < 1/2.
The finite-support form stores all four components explicitly, which makes
every expectation (misclassification error, function error, advantage,
measure density, potential) exactly computable by enumeration.

Conventions used throughout the package:

- labels are exactly -1 or +1; sign(0) = +1
- probabilities and weights are float64; threshold comparisons in algorithm
  code are exact (>=, <) with no epsilon slack
- randomness always flows through an injected numpy Generator; oracles own a
  private generator built from their seed, so identical seeds and identical
  call sequences reproduce identical example streams bit for bit
- hypotheses are callables mapping an (n, d) array of points to an (n,)
  array of values in [-1, 1]; hard decisions are taken by sign
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

__all__ = [
    "BadProbability",
    "BoundNotBelowHalf",
    "DuplicatePoint",
    "FiniteMassartDist",
    "GenerativeSource",
    "LabeledExample",
    "LabeledSample",
    "MassartOracle",
    "NoiseExceedsBound",
    "exact_advantage",
    "exact_ferr",
    "exact_lerr",
    "dump_dist",
    "load_dist",
    "make_massart",
    "parse_dist",
    "predict_labels",
    "sample_example",
    "save_dist",
]

PROB_SUM_TOL = 1e-9


class BadProbability(ValueError):
    """An atom probability or flip probability is invalid."""


class DuplicatePoint(ValueError):
    """Two atoms share the same domain point."""


class NoiseExceedsBound(ValueError):
    """Some eta(x) exceeds the declared noise bound."""


class BoundNotBelowHalf(ValueError):
    """The declared noise bound is not strictly below 1/2."""


def sign_pm1(values: np.ndarray) -> np.ndarray:
    """Sign with the convention sign(0) = +1, returned as int8 labels."""
    return np.where(np.asarray(values) >= 0, 1, -1).astype(np.int8)


def predict_labels(hypothesis: Callable[[np.ndarray], np.ndarray], xs: np.ndarray) -> np.ndarray:
    """Evaluate a hypothesis on a batch of points and harden to {-1,+1}."""
    return sign_pm1(np.asarray(hypothesis(xs), dtype=np.float64))


@dataclass(frozen=True)
class LabeledExample:
    """A domain point paired with an observed label in {-1,+1}."""

    x: np.ndarray
    y: int

    def __post_init__(self):
        x = np.atleast_1d(np.asarray(self.x, dtype=np.float64))
        if not np.all(np.isfinite(x)):
            raise ValueError("example coordinates must be finite")
        if self.y not in (-1, 1):
            raise ValueError(f"label must be -1 or +1, got {self.y!r}")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", int(self.y))


@dataclass(frozen=True)
class LabeledSample:
    """A batch of labeled examples stored as arrays (xs rows align with ys).

    idx optionally carries the source atom index of each row when the sample
    came from a finite-support oracle; purely an evaluation fast path.
    """

    xs: np.ndarray
    ys: np.ndarray
    idx: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return len(self.ys)

    def __getitem__(self, sel) -> "LabeledSample":
        return LabeledSample(
            self.xs[sel], self.ys[sel], None if self.idx is None else self.idx[sel]
        )

    @staticmethod
    def concat(parts: Sequence["LabeledSample"]) -> "LabeledSample":
        idx = None
        if parts and all(p.idx is not None for p in parts):
            idx = np.concatenate([p.idx for p in parts])
        return LabeledSample(
            np.concatenate([p.xs for p in parts], axis=0),
            np.concatenate([p.ys for p in parts], axis=0),
            idx,
        )


class FiniteMassartDist:
    """Explicit table of (point, probability, true label, flip probability).

    All expectations over the induced joint distribution on (x, y) reduce to
    finite sums, with the probability of (x, y) equal to p_x * (1 - eta_x)
    when y = f(x) and p_x * eta_x otherwise.
    """

    def __init__(self, xs, p, f, eta, eta_bound, _validated=False):
        self.xs = np.ascontiguousarray(np.atleast_2d(np.asarray(xs, dtype=np.float64)))
        self.p = np.asarray(p, dtype=np.float64)
        self.f = np.asarray(f, dtype=np.int8)
        self.eta = np.asarray(eta, dtype=np.float64)
        self.eta_bound = float(eta_bound)
        if not _validated:
            self._validate()

    def _validate(self):
        n = len(self.p)
        if self.xs.shape[0] != n or len(self.f) != n or len(self.eta) != n:
            raise ValueError("atom arrays must have matching lengths")
        if n == 0:
            raise BadProbability("distribution needs at least one atom")
        if not np.all(np.isfinite(self.xs)):
            raise ValueError("atom coordinates must be finite")
        if self.eta_bound >= 0.5:
            raise BoundNotBelowHalf(f"eta_bound must be < 1/2, got {self.eta_bound}")
        if self.eta_bound < 0.0:
            raise BoundNotBelowHalf("eta_bound must be nonnegative")
        if np.any(self.p < 0) or not np.all(np.isfinite(self.p)):
            raise BadProbability("atom probabilities must be finite and nonnegative")
        total = float(self.p.sum())
        if abs(total - 1.0) > PROB_SUM_TOL:
            raise BadProbability(f"atom probabilities sum to {total!r}, not 1")
        # renormalize only beyond float accumulation noise, so that reloading
        # an already-normalized table is bit exact
        if abs(total - 1.0) > 1e-13:
            self.p = self.p / total
        if np.any(self.eta < 0) or not np.all(np.isfinite(self.eta)):
            raise BadProbability("flip probabilities must be finite and nonnegative")
        if np.any(self.eta > self.eta_bound):
            worst = float(self.eta.max())
            raise NoiseExceedsBound(f"eta(x) = {worst} exceeds bound {self.eta_bound}")
        if not np.all(np.isin(self.f, (-1, 1))):
            raise ValueError("true labels must be -1 or +1")
        uniq = np.unique(self.xs, axis=0)
        if uniq.shape[0] != n:
            raise DuplicatePoint("atom points must be distinct")

    @property
    def n_atoms(self) -> int:
        return len(self.p)

    @property
    def dim(self) -> int:
        return self.xs.shape[1]

    def opt(self) -> float:
        """Information-theoretic floor on misclassification error, E[eta(x)]."""
        return float(np.dot(self.p, self.eta))

    def label_probs(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-atom joint probabilities of (x, f(x)) and (x, -f(x))."""
        clean = self.p * (1.0 - self.eta)
        flipped = self.p * self.eta
        return clean, flipped


def make_massart(atoms: Iterable, eta_bound: float) -> FiniteMassartDist:
    """Validate and normalize a raw atom list into a FiniteMassartDist.

    Each atom is (x, p, f, eta) with x a scalar or coordinate sequence.
    Probabilities must already sum to 1 within 1e-9; they are then
    renormalized exactly.
    """
    atoms = list(atoms)
    if not atoms:
        raise BadProbability("empty atom list")
    xs = np.atleast_2d(np.asarray([np.atleast_1d(np.asarray(a[0], dtype=np.float64)) for a in atoms]))
    p = np.asarray([a[1] for a in atoms], dtype=np.float64)
    f = np.asarray([a[2] for a in atoms])
    eta = np.asarray([a[3] for a in atoms], dtype=np.float64)
    return FiniteMassartDist(xs, p, f, eta, eta_bound)


# -- exact metrics ------------------------------------------------------------


def exact_lerr(dist: FiniteMassartDist, hypothesis) -> float:
    """Exact misclassification probability of a hypothesis under the joint distribution."""
    hv = predict_labels(hypothesis, dist.xs)
    wrong_clean = (hv != dist.f).astype(np.float64)
    return float(np.dot(dist.p, wrong_clean * (1.0 - dist.eta) + (1.0 - wrong_clean) * dist.eta))


def exact_ferr(dist: FiniteMassartDist, hypothesis) -> float:
    """Exact disagreement probability with the true labeling under the marginal."""
    hv = predict_labels(hypothesis, dist.xs)
    return float(np.dot(dist.p, (hv != dist.f).astype(np.float64)))


def exact_advantage(dist: FiniteMassartDist, hypothesis) -> float:
    """Exact correlation advantage (1/2) E[h(x) y], equal to 1/2 - exact_lerr."""
    hv = predict_labels(hypothesis, dist.xs).astype(np.float64)
    ey = dist.f * (1.0 - 2.0 * dist.eta)  # E[y | x]
    return 0.5 * float(np.dot(dist.p, hv * ey))


# -- oracles ------------------------------------------------------------------


@dataclass
class GenerativeSource:
    """Generative specification: a marginal sampler, a concept, and a noise function.

    sample_x(rng, count) returns a (count, d) array; concept maps points to
    {-1,+1}; noise maps points to flip probabilities in [0, eta_bound].
    """

    sample_x: Callable[[np.random.Generator, int], np.ndarray]
    concept: Callable[[np.ndarray], np.ndarray]
    noise: Callable[[np.ndarray], np.ndarray]
    eta_bound: float


class MassartOracle:
    """Seeded noisy example oracle over a finite or generative source.

    Each draw emits (x, y) with x from the marginal and y = -f(x) with
    probability exactly eta(x), independently per draw. The draw counter
    meters every emitted example so experiment reports can account for all
    oracle access.
    """

    def __init__(self, source, rng_seed: int):
        if not isinstance(source, (FiniteMassartDist, GenerativeSource)):
            raise TypeError("source must be a FiniteMassartDist or GenerativeSource")
        self.source = source
        self.rng_seed = int(rng_seed)
        self.rng = np.random.default_rng(self.rng_seed)
        self.draws = 0
        if isinstance(source, FiniteMassartDist):
            self._cum = np.cumsum(source.p)
            self._cum[-1] = 1.0  # guard float roundoff at the top bin

    @property
    def finite(self) -> Optional[FiniteMassartDist]:
        return self.source if isinstance(self.source, FiniteMassartDist) else None

    def sample_batch(self, count: int) -> LabeledSample:
        count = int(count)
        if count < 0:
            raise ValueError("count must be nonnegative")
        if count == 0:
            d = self.source.dim if isinstance(self.source, FiniteMassartDist) else 0
            return LabeledSample(np.empty((0, max(d, 1))), np.empty(0, dtype=np.int8))
        idx = None
        if isinstance(self.source, FiniteMassartDist):
            idx = np.searchsorted(self._cum, self.rng.random(count), side="right")
            xs = self.source.xs[idx]
            truth = self.source.f[idx]
            eta = self.source.eta[idx]
        else:
            xs = np.atleast_2d(np.asarray(self.source.sample_x(self.rng, count), dtype=np.float64))
            truth = sign_pm1(np.asarray(self.source.concept(xs)))
            eta = np.asarray(self.source.noise(xs), dtype=np.float64)
        flips = self.rng.random(count) < eta
        ys = np.where(flips, -truth, truth).astype(np.int8)
        self.draws += count
        return LabeledSample(xs, ys, idx)


def sample_example(oracle: MassartOracle, rng: Optional[np.random.Generator] = None) -> LabeledExample:
    """Draw one labeled example from the oracle (the oracle's own stream by default)."""
    if rng is not None:
        saved, oracle.rng = oracle.rng, rng
        try:
            batch = oracle.sample_batch(1)
        finally:
            oracle.rng = saved
    else:
        batch = oracle.sample_batch(1)
    return LabeledExample(batch.xs[0], int(batch.ys[0]))


# -- serialization ------------------------------------------------------------
#
# Line-oriented text format: a header row "d eta_bound", then one atom per
# line as "x_0 ... x_{d-1} p f eta". All reals at 17 significant digits so a
# round trip is bit exact.


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def dump_dist(dist: FiniteMassartDist) -> str:
    lines = [f"{dist.dim} {_fmt(dist.eta_bound)}"]
    for i in range(dist.n_atoms):
        coords = " ".join(_fmt(c) for c in dist.xs[i])
        lines.append(f"{coords} {_fmt(dist.p[i])} {int(dist.f[i])} {_fmt(dist.eta[i])}")
    return "\n".join(lines) + "\n"


def parse_dist(text: str) -> FiniteMassartDist:
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        raise ValueError("empty distribution file")
    header = lines[0].split()
    if len(header) != 2:
        raise ValueError(f"bad header {lines[0]!r}, expected 'd eta_bound'")
    d = int(header[0])
    eta_bound = float(header[1])
    xs, p, f, eta = [], [], [], []
    for ln in lines[1:]:
        parts = ln.split()
        if len(parts) != d + 3:
            raise ValueError(f"bad atom line {ln!r}, expected {d + 3} fields")
        xs.append([float(v) for v in parts[:d]])
        p.append(float(parts[d]))
        f.append(int(parts[d + 1]))
        eta.append(float(parts[d + 2]))
    return FiniteMassartDist(np.asarray(xs), p, f, eta, eta_bound)


def save_dist(dist: FiniteMassartDist, path) -> None:
    with open(path, "w") as fh:
        fh.write(dump_dist(dist))


def load_dist(path) -> FiniteMassartDist:
    with open(path) as fh:
        return parse_dist(fh.read())
