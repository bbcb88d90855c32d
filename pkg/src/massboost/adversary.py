"""Stress harness: biased hard distribution and the heavy-hitter adversary.

The hard instance is a highly label-biased concept over n-bit strings: a
keyed-hash function family labels each point +1 with probability eta', with
eta' = eta (1 + alpha/5), and a pseudorandomly chosen sliver of the negative
points (total mass rho) carries flip probability eta. The floor on achievable
error sits near eta' even though the information-theoretic optimum is only
rho * eta.

The adversarial weak learner gives away nothing beyond majority votes: it
labels estimated heavy hitters of its input distribution by their empirical
majority and everything else -1. Randomized thresholds v_h, v_y make the
output hypothesis insensitive to the particular sample, so two runs with the
same thresholds almost always return the same hypothesis.

Desk-scale note: the asymptotic polynomial sample sizes the analysis calls
for are replaced by a single `scale` multiplier on m^2/gamma (candidate
collection) and m*T/gamma (per-candidate estimation, reused for label
votes). The defaults keep every step a few hundred to a few thousand draws.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Callable, Dict, Tuple

import numpy as np

from .core import FiniteMassartDist, LabeledExample, LabeledSample

__all__ = [
    "HardDistSpec",
    "HeavyHitterHypothesis",
    "RhoOutOfRange",
    "RudeState",
    "RudeWeakLearner",
    "SampleSourceExhausted",
    "biased_function",
    "biased_labels",
    "dump_spec",
    "exsim",
    "exsim_batch",
    "hard_distribution",
    "parse_spec",
    "wkl_rude",
]


class RhoOutOfRange(ValueError):
    """rho must lie in [0, alpha/1000)."""


class SampleSourceExhausted(RuntimeError):
    """The weak learner's sample source ran out of examples."""


def _keyed_u64(seed: int, x: int) -> int:
    key = int(seed).to_bytes(16, "big", signed=False)
    h = hashlib.blake2b(int(x).to_bytes(8, "big", signed=False), key=key, digest_size=8)
    return int.from_bytes(h.digest(), "big")


def biased_function(seed: int, x: int, eta_prime: float) -> int:
    """Deterministic keyed-hash labeling: +1 with probability eta_prime over uniform x."""
    u = _keyed_u64(seed, x) / 2.0**64
    return 1 if u < eta_prime else -1


def biased_labels(seed: int, xs: np.ndarray, eta_prime: float) -> np.ndarray:
    """Vectorized biased_function over an integer array."""
    out = np.empty(len(xs), dtype=np.int8)
    threshold = eta_prime * 2.0**64
    key = int(seed).to_bytes(16, "big", signed=False)
    for i, x in enumerate(xs):
        h = hashlib.blake2b(int(x).to_bytes(8, "big", signed=False), key=key, digest_size=8)
        out[i] = 1 if int.from_bytes(h.digest(), "big") < threshold else -1
    return out


@dataclass(frozen=True)
class HardDistSpec:
    """Parameters of the biased hard instance over {0,1}^n."""

    n: int
    eta: float
    alpha: float
    rho: float
    seed: int

    def __post_init__(self):
        if not (0.0 <= self.eta < 0.5):
            raise ValueError(f"eta must be in [0, 1/2), got {self.eta}")
        if not (0.0 < self.alpha < 0.5 - self.eta):
            raise ValueError(f"alpha must be in (0, 1/2 - eta), got {self.alpha}")
        if not (0.0 <= self.rho < self.alpha / 1000.0):
            raise RhoOutOfRange(f"rho must be in [0, alpha/1000), got {self.rho}")
        if not (1 <= self.n <= 64):
            raise ValueError("n must be between 1 and 64 bits")

    @property
    def eta_prime(self) -> float:
        return self.eta * (1.0 + self.alpha / 5.0)


def hard_distribution(spec: HardDistSpec, support_size: int) -> FiniteMassartDist:
    """Materialize the hard instance as a uniform finite support.

    Uses the first support_size points of the domain (the keyed hash makes
    their labels pseudorandom regardless), labels them with the biased
    function, and plants flip probability eta on exactly round(rho *
    support_size) pseudorandomly chosen negative points, so the optimal
    error is rho * eta up to that one rounding.
    """
    if support_size < 1 or support_size > 2**spec.n:
        raise ValueError(f"support_size must be in [1, 2^{spec.n}]")
    xs = np.arange(support_size, dtype=np.float64).reshape(-1, 1)
    f = biased_labels(spec.seed, np.arange(support_size), spec.eta_prime)
    eta = np.zeros(support_size)
    k_noisy = int(round(spec.rho * support_size))
    if k_noisy > 0:
        negatives = np.where(f == -1)[0]
        if len(negatives) < k_noisy:
            raise ValueError("not enough negative points to plant the noisy set")
        rng = np.random.default_rng(np.random.SeedSequence(entropy=[spec.seed, 0x6E6F6973]))
        noisy = rng.choice(negatives, size=k_noisy, replace=False)
        eta[noisy] = spec.eta
    p = np.full(support_size, 1.0 / support_size)
    eta_bound = spec.eta if spec.eta > 0 else 0.0
    return FiniteMassartDist(xs, p, f, eta, eta_bound, _validated=True)


def exsim(spec: HardDistSpec, rng: np.random.Generator) -> LabeledExample:
    """Simulated example: uniform x, label -1 with probability 1 - eta' - rho + rho*eta.

    The label never consults the target function, only its marginal. Draws x
    from the exactly representable range [0, min(2^n, 2^53)).
    """
    sample = exsim_batch(spec, rng, 1)
    return LabeledExample(sample.xs[0], int(sample.ys[0]))


def exsim_batch(spec: HardDistSpec, rng: np.random.Generator, count: int) -> LabeledSample:
    high = min(2**spec.n, 2**53)
    xs = rng.integers(0, high, size=count).astype(np.float64).reshape(-1, 1)
    p_minus = 1.0 - spec.eta_prime - spec.rho + spec.rho * spec.eta
    ys = np.where(rng.random(count) < p_minus, -1, 1).astype(np.int8)
    return LabeledSample(xs, ys)


# -- adversarial weak learner ---------------------------------------------------


@dataclass(frozen=True)
class RudeState:
    """Configuration of the heavy-hitter adversary.

    m is the booster's example budget and T its round bound; gamma defaults
    to alpha/20 at the call site. scale multiplies the step sample sizes;
    survivor_cap bounds how many certified heavy hitters get label votes
    (largest estimated mass first).
    """

    m: int
    T: int
    gamma: float
    scale: float = 1.0
    survivor_cap: int = 16

    @property
    def v_h_range(self) -> Tuple[float, float]:
        return (self.gamma / (20.0 * self.m), self.gamma / (10.0 * self.m))

    @property
    def v_y_range(self) -> Tuple[float, float]:
        return (0.5, 0.5 + self.gamma / (10.0 * self.m))

    def step1_size(self) -> int:
        return max(1, math.ceil(self.scale * self.m**2 / self.gamma))

    def step2_size(self) -> int:
        return max(1, math.ceil(self.scale * self.m * self.T / self.gamma))

    def step3_size(self) -> int:
        return self.step2_size()


@dataclass(frozen=True)
class HeavyHitterHypothesis:
    """Explicit pair (X_hat, labels): stored labels on heavy hitters, -1 elsewhere."""

    points: np.ndarray  # (k, d)
    labels: np.ndarray  # (k,)

    def __call__(self, xs: np.ndarray) -> np.ndarray:
        xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
        out = np.full(xs.shape[0], -1, dtype=np.int8)
        for row, label in zip(self.points, self.labels):
            out[np.all(xs == row[None, :], axis=1)] = label
        return out

    def __len__(self) -> int:
        return len(self.labels)


def _match_rows(candidates: np.ndarray, rows: np.ndarray) -> np.ndarray:
    """Index of each row in the (lexicographically sorted) candidate array, or -1."""
    c = np.ascontiguousarray(candidates, dtype=np.float64)
    r = np.ascontiguousarray(np.atleast_2d(rows), dtype=np.float64)
    itemsize = c.dtype.itemsize * c.shape[1]
    cv = c.view(np.dtype((np.void, itemsize))).ravel()
    rv = r.view(np.dtype((np.void, itemsize))).ravel()
    pos = np.searchsorted(cv, rv)
    pos = np.clip(pos, 0, len(cv) - 1)
    hit = cv[pos] == rv
    return np.where(hit, pos, -1)


def wkl_rude(
    sample_source: Callable[[int], LabeledSample],
    state: RudeState,
    rng: np.random.Generator,
) -> HeavyHitterHypothesis:
    """Run the heavy-hitter adversary against a sample source.

    Step 1 collects candidate heavy hitters; step 2 estimates each
    candidate's probability from a fresh sample and keeps those at or above
    a uniformly drawn threshold v_h; step 3 draws a label threshold v_y and
    assigns each survivor the label +1 iff the +1 fraction among its fresh
    occurrences reaches v_y (no occurrences count as fraction 0). Everything
    outside the surviving set is labeled -1.
    """
    s1 = sample_source(state.step1_size())
    if len(s1) == 0:
        return HeavyHitterHypothesis(np.empty((0, 1)), np.empty(0, dtype=np.int8))
    candidates = np.unique(np.atleast_2d(s1.xs), axis=0)

    s2 = sample_source(state.step2_size())
    matches = _match_rows(candidates, s2.xs)
    counts = np.bincount(matches[matches >= 0], minlength=len(candidates))
    p_hat = counts / len(s2)

    v_h = rng.uniform(*state.v_h_range)
    keep = p_hat >= v_h
    survivors = candidates[keep]
    surv_p = p_hat[keep]
    if len(survivors) > state.survivor_cap:
        order = np.argsort(-surv_p, kind="stable")[: state.survivor_cap]
        order = np.sort(order)
        survivors = survivors[order]
        surv_p = surv_p[order]

    v_y = rng.uniform(*state.v_y_range)
    labels = np.empty(len(survivors), dtype=np.int8)
    for i in range(len(survivors)):
        s3 = sample_source(state.step3_size())
        inst = np.all(np.atleast_2d(s3.xs) == survivors[i][None, :], axis=1)
        n_inst = int(inst.sum())
        p1 = float(np.sum(s3.ys[inst] == 1)) / n_inst if n_inst > 0 else 0.0
        labels[i] = 1 if p1 >= v_y else -1
    return HeavyHitterHypothesis(survivors, labels)


@dataclass
class RudeWeakLearner:
    """Booster-facing adapter; advertised advantage gamma with alpha = 20*gamma."""

    state: RudeState

    @property
    def gamma(self) -> float:
        return self.state.gamma

    @property
    def alpha(self) -> float:
        return 20.0 * self.state.gamma

    @property
    def sample_size(self) -> int:
        return (
            self.state.step1_size()
            + self.state.step2_size()
            + self.state.survivor_cap * self.state.step3_size()
        )

    def train(self, sample: LabeledSample, rng: np.random.Generator) -> HeavyHitterHypothesis:
        cursor = 0

        def source(count: int) -> LabeledSample:
            nonlocal cursor
            if cursor + count > len(sample):
                raise SampleSourceExhausted(
                    f"needed {count} more examples, {len(sample) - cursor} left"
                )
            out = sample[cursor : cursor + count]
            cursor += count
            return out

        return wkl_rude(source, self.state, rng)

    def train_from_source(
        self, source: Callable[[int], LabeledSample], rng: np.random.Generator
    ) -> HeavyHitterHypothesis:
        """Draw lazily from an open-ended source instead of a pre-drawn sample."""
        return wkl_rude(source, self.state, rng)


# -- spec serialization ---------------------------------------------------------


def dump_spec(spec: HardDistSpec) -> str:
    lines = [
        f"n = {spec.n}",
        f"eta = {format(spec.eta, '.17g')}",
        f"alpha = {format(spec.alpha, '.17g')}",
        f"rho = {format(spec.rho, '.17g')}",
        f"seed = {spec.seed}",
    ]
    return "\n".join(lines) + "\n"


def parse_spec(text: str) -> HardDistSpec:
    fields: Dict[str, str] = {}
    for ln in text.splitlines():
        ln = ln.strip()
        if not ln or ln.startswith("#"):
            continue
        if "=" not in ln:
            raise ValueError(f"bad spec line {ln!r}")
        key, _, value = ln.partition("=")
        fields[key.strip()] = value.strip()
    return HardDistSpec(
        n=int(fields["n"]),
        eta=float(fields["eta"]),
        alpha=float(fields["alpha"]),
        rho=float(fields["rho"]),
        seed=int(fields["seed"]),
    )
