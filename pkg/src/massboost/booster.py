"""The boosting loop and its subroutines.

The booster maintains a real-valued score G (initially 0), queries a weak
learner each round on a rejection-sampled reweighting of the input
distribution, and adds lambda-scaled weak hypotheses restricted to the safe
set {|G| < s}. When the aggregate becomes over-confident on the withheld
risky set {|G| >= s}, a recalibration step moves every risky score one lambda
toward zero. The loop stops once the estimated density of the reweighting
measure falls to the target kappa, and the final classifier is sign(G).

The aggregate is represented by the ordered trace ((h_1, b_1), ..., (h_t, b_t))
of weak hypotheses and recalibration flags; replaying the trace through the
same per-round update rule reproduces G exactly, so a trained hypothesis is
portable and cheap to store.

Two execution modes share one code path. In exact-oracle mode (finite-support
distributions) the density estimate and the over-confidence test use exact
expectations and draw nothing, which makes a run deterministic given the weak
learner; Monte Carlo mode uses the sample sizes set by the failure budgets
delta_dens and delta_err, optionally shrunk by sample_scale for desk-scale
experiments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Protocol, Tuple

import numpy as np

from .core import LabeledSample, MassartOracle, sign_pm1
from .measure import Measure, exact_density

__all__ = [
    "AggregatedHypothesis",
    "AtomIndex",
    "BoostParams",
    "ConditionalDrawBudgetExceeded",
    "DegenerateThreshold",
    "DrawBudgetExceeded",
    "EpsilonTooSmall",
    "EtaZero",
    "FixedHypothesisWeakLearner",
    "MaxRoundsExceeded",
    "RoundRecord",
    "RunTrace",
    "WeakLearner",
    "boost",
    "compute_params",
    "density_sample_size",
    "est_density",
    "evaluate_g",
    "over_confident",
    "predict",
    "repeat_weak_learner",
    "repetition_schedule",
    "samp",
]

MODE_EXACT = "exact-oracle"
MODE_MC = "monte-carlo"
_MODE_ALIASES = {"exact": MODE_EXACT, "exact-oracle": MODE_EXACT, "mc": MODE_MC, "monte-carlo": MODE_MC}


class EpsilonTooSmall(ValueError):
    """epsilon is below 8*eta*alpha/(1-2*alpha), the minimum the analysis supports."""


class DegenerateThreshold(ValueError):
    """The withholding threshold s = log((1-eta)/(eta+c)) is not positive."""


class EtaZero(ValueError):
    """eta = 0 needs explicit s_max and kappa_min overrides (kappa=eta would never trigger)."""


class DrawBudgetExceeded(RuntimeError):
    """Rejection sampling burned far more raw draws than the density estimate justifies."""


class ConditionalDrawBudgetExceeded(RuntimeError):
    """The conditional error estimate could not fill its sample at the observed risky mass."""


class MaxRoundsExceeded(RuntimeError):
    """The boosting loop hit its round cap; carries the trace for diagnosis."""

    def __init__(self, message: str, trace: "RunTrace", aggregated: "AggregatedHypothesis"):
        super().__init__(message)
        self.trace = trace
        self.aggregated = aggregated


# -- parameters ---------------------------------------------------------------


@dataclass(frozen=True)
class BoostParams:
    """All scalars the boosting loop needs, mostly derived by compute_params."""

    eta: float
    alpha: float
    gamma: float
    epsilon: float
    delta: float
    c: float
    s: float
    lam: float
    kappa: float
    delta_err: float
    delta_dens: float
    max_rounds: int
    sample_scale: float = 1.0
    mode: str = MODE_EXACT


def compute_params(
    eta: float,
    alpha: float,
    gamma: float,
    epsilon: float,
    delta: float,
    sample_scale: float = 1.0,
    mode: str = MODE_EXACT,
    *,
    max_rounds: Optional[int] = None,
    s_max: Optional[float] = None,
    kappa_min: Optional[float] = None,
) -> BoostParams:
    """Derive all boosting constants from the primitive inputs.

    c = 4*eta*alpha/(1-2*alpha), s = log((1-eta)/(eta+c)), lambda = gamma/8,
    kappa = eta, delta_err = delta*eta*gamma^2/1536, delta_dens the same with
    1024. Requires epsilon >= 2c. The realizable case eta = 0 must pass
    explicit s_max and kappa_min; kappa and the failure budgets then use
    max(eta, kappa_min) in place of eta.
    """
    if mode not in _MODE_ALIASES:
        raise ValueError(f"unknown mode {mode!r}")
    mode = _MODE_ALIASES[mode]
    if not (0.0 <= eta < 0.5):
        raise ValueError(f"eta must be in [0, 1/2), got {eta}")
    if not (0.0 < alpha < 0.5):
        raise ValueError(f"alpha must be in (0, 1/2), got {alpha}")
    if not (0.0 < gamma < 0.5):
        raise ValueError(f"gamma must be in (0, 1/2), got {gamma}")
    if not (0.0 < delta <= 0.5):
        raise ValueError(f"delta must be in (0, 1/2], got {delta}")
    if sample_scale <= 0.0:
        raise ValueError("sample_scale must be positive")
    if eta == 0.0 and (s_max is None or kappa_min is None):
        raise EtaZero("eta = 0 requires explicit s_max and kappa_min overrides")

    c = 4.0 * eta * alpha / (1.0 - 2.0 * alpha)
    if eta + c > 0.0:
        s = math.log((1.0 - eta) / (eta + c))
    else:
        s = math.inf
    if s_max is not None:
        s = min(s, float(s_max))
    # alpha >= 1/2 - eta drives s to or below zero; surface that as the
    # threshold degenerating rather than a range error
    if not (s > 0.0) or math.isinf(s):
        raise DegenerateThreshold(f"threshold s = {s} must be positive and finite")
    if epsilon < 2.0 * c:
        raise EpsilonTooSmall(f"epsilon {epsilon} < 8*eta*alpha/(1-2*alpha) = {2.0 * c}")

    eta_eff = max(eta, kappa_min if kappa_min is not None else 0.0)
    lam = gamma / 8.0
    kappa = eta_eff
    delta_err = delta * eta_eff * gamma**2 / 1536.0
    delta_dens = delta * eta_eff * gamma**2 / 1024.0
    if max_rounds is None:
        max_rounds = math.ceil(10.0 * 128.0 / (eta_eff * gamma**2))
    return BoostParams(
        eta=eta,
        alpha=alpha,
        gamma=gamma,
        epsilon=epsilon,
        delta=delta,
        c=c,
        s=s,
        lam=lam,
        kappa=kappa,
        delta_err=delta_err,
        delta_dens=delta_dens,
        max_rounds=int(max_rounds),
        sample_scale=float(sample_scale),
        mode=mode,
    )


# -- aggregated hypothesis ----------------------------------------------------


@dataclass(frozen=True)
class AggregatedHypothesis:
    """The booster's state: step size, threshold, and the update trace.

    g(xs) replays the trace: per round, a point with |score| < s receives
    lam * h_i(x); otherwise, if the round recalibrated (b_i = 1), the score
    moves lam toward zero. Ablated aggregates (withholding disabled) add
    every hypothesis unconditionally.
    """

    lam: float
    s: float
    trace: Tuple[Tuple[Callable, bool], ...]
    ablated: bool = False

    def g(self, xs: np.ndarray) -> np.ndarray:
        xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
        sigma = np.zeros(xs.shape[0])
        for h, b in self.trace:
            sigma = _step_scores(sigma, np.clip(np.asarray(h(xs), dtype=np.float64), -1.0, 1.0),
                                 b, self.lam, self.s, self.ablated)
        return sigma

    def predict(self, xs: np.ndarray) -> np.ndarray:
        return sign_pm1(self.g(xs))

    def __len__(self) -> int:
        return len(self.trace)


def _step_scores(sigma: np.ndarray, hv: np.ndarray, b: bool, lam: float, s: float, ablated: bool) -> np.ndarray:
    """One round of the score update, shared by the loop and trace replay."""
    if ablated:
        return sigma + lam * hv
    safe = np.abs(sigma) < s
    stepped = sigma + lam * hv
    if b:
        pulled = sigma - lam * np.where(sigma >= 0, 1.0, -1.0)
        return np.where(safe, stepped, pulled)
    return np.where(safe, stepped, sigma)


def evaluate_g(agg: AggregatedHypothesis, x) -> float:
    """Replay the trace at a single point and return the real-valued score."""
    return float(agg.g(np.atleast_2d(np.asarray(x, dtype=np.float64)))[0])


def predict(agg: AggregatedHypothesis, x) -> int:
    """Hard label at a single point: sign of the score, with sign(0) = +1."""
    return 1 if evaluate_g(agg, x) >= 0 else -1


# -- weak learner interface ---------------------------------------------------


class WeakLearner(Protocol):
    """Trainable producer of weak hypotheses.

    sample_size is the number of reweighted examples one training call wants;
    alpha and gamma are the advertised noise-tolerance margin and advantage.
    """

    sample_size: int
    alpha: float
    gamma: float

    def train(self, sample: LabeledSample, rng: np.random.Generator): ...


@dataclass
class FixedHypothesisWeakLearner:
    """Degenerate weak learner returning one fixed hypothesis (e.g. the true concept)."""

    hypothesis: Callable
    alpha: float = 0.25
    gamma: float = 0.25
    sample_size: int = 0

    def train(self, sample: LabeledSample, rng: np.random.Generator):
        return self.hypothesis


# -- subroutines --------------------------------------------------------------


def samp(
    oracle: MassartOracle,
    measure: Measure,
    m_wkl: int,
    rng: np.random.Generator,
    *,
    d_hat: float = 1.0,
    delta: float = 0.1,
    sample_scale: float = 1.0,
) -> Tuple[LabeledSample, int]:
    """Rejection-sample m_wkl examples from the reweighted distribution.

    Draws (x, y) from the oracle and keeps each with probability mu(x, y).
    Returns the accepted sample and the raw draw count. Raises
    DrawBudgetExceeded once raw draws pass ten times the
    log(1/delta)/d_hat^2 + 2*m_wkl/d_hat budget (scaled by sample_scale),
    the signature of a measure whose true density has collapsed.
    """
    m_wkl = int(m_wkl)
    if m_wkl == 0:
        return oracle.sample_batch(0), 0
    d_ref = max(float(d_hat), 1e-12)
    # m_wkl is already a desk-scaled request, so the budget uses the raw
    # concentration bound; scaling it again would trip on healthy measures
    budget = 10.0 * (math.log(1.0 / delta) / d_ref**2 + 2.0 * m_wkl / d_ref)
    budget = max(int(math.ceil(budget)), 10 * m_wkl)
    parts: List[LabeledSample] = []
    kept = 0
    raw = 0
    # first batch sized by the density estimate so a full-weight measure
    # draws exactly m_wkl; later batches use the observed acceptance rate
    accept_rate = min(d_ref, 1.0)
    while kept < m_wkl:
        want = m_wkl - kept
        batch = min(math.ceil(want / max(accept_rate, 1e-3)), budget - raw)
        if batch <= 0:
            raise DrawBudgetExceeded(
                f"rejection sampling exceeded {budget} raw draws for {m_wkl} accepted"
            )
        sample = oracle.sample_batch(batch)
        raw += batch
        if sample.idx is not None and hasattr(measure.g, "by_index"):
            w = measure.weight_from_scores(measure.g.by_index(sample.idx), sample.ys)
        else:
            w = measure.weight(sample.xs, sample.ys)
        keep = rng.random(batch) < w
        parts.append(sample[keep])
        kept += int(keep.sum())
        accept_rate = max(kept, 1) / raw
        if kept < m_wkl and raw >= budget:
            raise DrawBudgetExceeded(
                f"rejection sampling exceeded {budget} raw draws for {m_wkl} accepted"
            )
    out = LabeledSample.concat(parts)[:m_wkl]
    return out, raw


def density_sample_size(delta_dens: float, epsilon: float, eta: float, sample_scale: float = 1.0) -> int:
    """Draw count for the density estimate: ceil(scale * log(1/delta_dens) / (2 beta^2))."""
    beta = min(epsilon / 2.0, eta / 4.0)
    return int(math.ceil(sample_scale * math.log(1.0 / delta_dens) / (2.0 * beta**2)))


def est_density(
    oracle: MassartOracle,
    measure: Measure,
    params: BoostParams,
    rng: np.random.Generator,
) -> float:
    """Estimate the density of the measure; exact expectation in exact-oracle mode."""
    if params.mode == MODE_EXACT:
        dist = oracle.finite
        if dist is None:
            raise ValueError("exact-oracle mode requires a finite-support distribution")
        return exact_density(dist, measure)
    n = density_sample_size(params.delta_dens, params.epsilon, params.eta, params.sample_scale)
    sample = oracle.sample_batch(n)
    return float(np.mean(measure.weight(sample.xs, sample.ys)))


def over_confident(
    oracle: MassartOracle,
    agg: AggregatedHypothesis,
    params: BoostParams,
    rng: np.random.Generator,
    *,
    _scores: Optional[np.ndarray] = None,
) -> bool:
    """Decide whether sign(G) is over-confident on the withheld risky set.

    Stage 1 checks whether the risky mass Pr[|G(x)| >= s] exceeds epsilon/4;
    if not, returns False. Stage 2 compares the misclassification rate of
    sign(G) conditioned on the risky set against eta + 3*epsilon/4. In
    exact-oracle mode both stages use exact expectations; _scores lets the
    boosting loop pass precomputed per-atom scores to avoid a trace replay.
    """
    s = agg.s
    if params.mode == MODE_EXACT:
        dist = oracle.finite
        if dist is None:
            raise ValueError("exact-oracle mode requires a finite-support distribution")
        scores = agg.g(dist.xs) if _scores is None else _scores
        risky = np.abs(scores) >= s
        pr_risky = float(dist.p[risky].sum())
        if pr_risky <= params.epsilon / 4.0:
            return False
        preds = sign_pm1(scores)
        perr = np.where(preds == dist.f, dist.eta, 1.0 - dist.eta)
        cond_err = float(np.dot(dist.p[risky], perr[risky])) / pr_risky
        return cond_err >= params.eta + 3.0 * params.epsilon / 4.0

    n1 = int(math.ceil(params.sample_scale * 32.0 * math.log(2.0 / params.delta_err) / params.epsilon**2))
    first = oracle.sample_batch(n1)
    frac = float(np.mean(np.abs(agg.g(first.xs)) >= s))
    if frac <= params.epsilon / 4.0:
        return False
    n2 = int(math.ceil(params.sample_scale * 8.0 * math.log(2.0 / params.delta_err) / params.epsilon**2))
    budget = int(math.ceil(10.0 * n2 / frac))
    mismatches = 0
    collected = 0
    raw = 0
    while collected < n2:
        batch = int(np.clip(math.ceil(1.3 * (n2 - collected) / frac), 64, budget - raw))
        if batch <= 0:
            raise ConditionalDrawBudgetExceeded(
                f"could not collect {n2} risky-conditioned examples within {budget} draws"
            )
        sample = oracle.sample_batch(batch)
        raw += batch
        scores = agg.g(sample.xs)
        mask = np.abs(scores) >= s
        take = min(int(mask.sum()), n2 - collected)
        if take > 0:
            idx = np.where(mask)[0][:take]
            mismatches += int(np.sum(sample.ys[idx] != sign_pm1(scores[idx])))
            collected += take
        if collected < n2 and raw >= budget:
            raise ConditionalDrawBudgetExceeded(
                f"could not collect {n2} risky-conditioned examples within {budget} draws"
            )
    eps_hat = mismatches / n2
    return eps_hat >= params.eta + 3.0 * params.epsilon / 4.0


def repetition_schedule(delta_wkl: float, gamma: float, sample_scale: float = 1.0) -> Tuple[int, int]:
    """Candidate count and test sample size for the weak-learner repetition wrapper."""
    base = 2.0 * math.log(2.0 / delta_wkl)
    n_candidates = max(1, int(math.ceil(sample_scale * base)))
    test_size = max(1, int(math.ceil(sample_scale * base / gamma**2)))
    return n_candidates, test_size


def repeat_weak_learner(
    wkl: WeakLearner,
    mu_sample_source: Callable[[int, np.random.Generator], LabeledSample],
    params: BoostParams,
    rng: np.random.Generator,
):
    """Drive the weak learner's failure probability down by repetition.

    Trains one candidate per independent sample, measures each candidate's
    empirical advantage on a fresh test sample, and returns the best one
    (ties broken by first index). With a single scheduled candidate the test
    sample is skipped. A low-advantage winner is returned as-is; the loop's
    round cap is the backstop.

    Learners that expose train_from_source draw lazily from the sample
    source instead of receiving one pre-drawn sample of sample_size.
    """
    n_candidates, test_size = repetition_schedule(params.delta_err, params.gamma, params.sample_scale)
    streams = rng.spawn(n_candidates + 1)
    candidates = []
    for i in range(n_candidates):
        stream = streams[i]
        if hasattr(wkl, "train_from_source"):
            candidates.append(wkl.train_from_source(lambda c: mu_sample_source(c, stream), stream))
        else:
            sample = mu_sample_source(wkl.sample_size, stream)
            candidates.append(wkl.train(sample, stream))
    if n_candidates == 1:
        return candidates[0]
    test = mu_sample_source(test_size, streams[-1])
    ys = test.ys.astype(np.float64)
    best_idx = 0
    best_adv = -np.inf
    for i, h in enumerate(candidates):
        hv = np.clip(np.asarray(h(test.xs), dtype=np.float64), -1.0, 1.0)
        adv = 0.5 * float(np.mean(hv * ys))
        if adv > best_adv:
            best_adv = adv
            best_idx = i
    return candidates[best_idx]


# -- run trace ----------------------------------------------------------------


@dataclass
class RoundRecord:
    """Per-round diagnostics; exact fields are None in Monte Carlo mode."""

    round: int
    d_hat: float
    overconfident: bool
    raw_draws: int
    d_exact: Optional[float] = None
    phi: Optional[float] = None
    lerr_exact: Optional[float] = None
    ferr_exact: Optional[float] = None
    d_exact_pre: Optional[float] = None
    phi_pre: Optional[float] = None
    adv_exact: Optional[float] = None
    max_noise_rate: Optional[float] = None
    risky_mass: Optional[float] = None


@dataclass
class RunTrace:
    """Ordered round records plus draw totals for one boosting run."""

    rows: List[RoundRecord] = field(default_factory=list)
    total_draws: int = 0

    CSV_HEADER = "round,d_hat,d_exact,phi,overconfident,raw_draws,lerr_exact,ferr_exact"

    def to_csv(self) -> str:
        def cell(v) -> str:
            return "" if v is None else format(v, ".17g")

        lines = [self.CSV_HEADER]
        for r in self.rows:
            lines.append(
                f"{r.round},{cell(r.d_hat)},{cell(r.d_exact)},{cell(r.phi)},"
                f"{int(r.overconfident)},{r.raw_draws},{cell(r.lerr_exact)},{cell(r.ferr_exact)}"
            )
        return "\n".join(lines) + "\n"

    @property
    def rounds(self) -> int:
        return len(self.rows)


class _SigmaScorer:
    """Score function backed by a per-atom array, with index fast paths."""

    __slots__ = ("sigma", "atom_index")

    def __init__(self, sigma: np.ndarray, atom_index: "AtomIndex"):
        self.sigma = sigma
        self.atom_index = atom_index

    def __call__(self, xs: np.ndarray) -> np.ndarray:
        if xs is self.atom_index.xs_ref:  # scoring the support itself
            return self.sigma
        return self.sigma[self.atom_index.lookup(np.atleast_2d(xs))]

    def by_index(self, idx: np.ndarray) -> np.ndarray:
        return self.sigma[idx]


class AtomIndex:
    """Exact row -> atom index lookup for finite supports (vectorized)."""

    def __init__(self, xs: np.ndarray):
        self.xs_ref = xs
        a = np.ascontiguousarray(xs, dtype=np.float64)
        self._itemsize = a.dtype.itemsize * a.shape[1]
        view = a.view(np.dtype((np.void, self._itemsize))).ravel()
        self._order = np.argsort(view)
        self._sorted = view[self._order]

    def lookup(self, rows: np.ndarray) -> np.ndarray:
        r = np.ascontiguousarray(rows, dtype=np.float64)
        view = r.view(np.dtype((np.void, self._itemsize))).ravel()
        pos = np.searchsorted(self._sorted, view)
        pos = np.clip(pos, 0, len(self._sorted) - 1)
        return self._order[pos]


# -- the boosting loop --------------------------------------------------------


def boost(
    oracle: MassartOracle,
    wkl: WeakLearner,
    params: BoostParams,
    rng: np.random.Generator,
    *,
    ablate_no_withholding: bool = False,
) -> Tuple[AggregatedHypothesis, RunTrace]:
    """Run the boosting loop until the measure density drops to kappa.

    Per round: draw reweighted samples, train and select a weak hypothesis,
    add it on the safe set, recalibrate the risky set when the aggregate is
    over-confident there, then re-estimate the density. Returns the final
    aggregated hypothesis and the per-round trace. Raises MaxRoundsExceeded
    (carrying the trace) if the cap is hit first.

    The ablation flag disables the risky-set machinery entirely: weights are
    M(yG) with no cutoff, hypotheses apply everywhere, and no recalibration
    runs. It exists to demonstrate how unbounded reweighting destroys the
    bounded-noise property.
    """
    exact = params.mode == MODE_EXACT
    dist = oracle.finite
    if exact and dist is None:
        raise ValueError("exact-oracle mode requires a finite-support oracle")
    withhold = not ablate_no_withholding

    atom_index = AtomIndex(dist.xs) if exact else None
    sigma = np.zeros(dist.n_atoms) if exact else None
    trace: List[Tuple[Callable, bool]] = []
    run = RunTrace()
    d_hat = 1.0
    t = 0
    draws_mark = oracle.draws
    prev_d_exact = 1.0  # d(mu_0) = 1 and Phi(0) = 1 exactly for G = 0
    prev_phi = 1.0
    if exact:
        # joint label masses a+/a- and the measure-weighted u+/u- carried
        # across rounds, so every exact round statistic is a dot product
        f_plus = dist.f == 1
        a_plus = np.where(f_plus, dist.p * (1.0 - dist.eta), dist.p * dist.eta)
        a_minus = dist.p - a_plus
        b_label = a_plus - a_minus
        p_times_f = dist.p * dist.f
        prob_plus = float(a_plus.sum())
        prob_f_plus = float(dist.p[f_plus].sum())
        u_plus = a_plus.copy()
        u_minus = a_minus.copy()
        u_diff = b_label.copy()
        prev_d_exact = float(u_plus.sum() + u_minus.sum())
        prev_phi = prev_d_exact

    def g_from(sig: np.ndarray) -> _SigmaScorer:
        return _SigmaScorer(sig, atom_index)

    def g_replay(frozen: Tuple) -> Callable[[np.ndarray], np.ndarray]:
        return AggregatedHypothesis(params.lam, params.s, frozen, ablated=not withhold).g

    while d_hat > params.kappa:
        t += 1
        if t > params.max_rounds:
            agg = AggregatedHypothesis(params.lam, params.s, tuple(trace), ablated=not withhold)
            raise MaxRoundsExceeded(f"no termination within {params.max_rounds} rounds", run, agg)

        sigma_prev = sigma
        if exact:
            g_prev = g_from(sigma_prev)
        else:
            g_prev = g_replay(tuple(trace))
        measure_prev = Measure(g_prev, params.s, withhold=withhold)

        d_pre = phi_pre = max_rate = None
        if exact:
            d_pre = prev_d_exact
            phi_pre = prev_phi
            # flip mass over total mass per point; excluded points read 0
            den = u_plus + u_minus
            num = np.where(f_plus, u_minus, u_plus)
            rates = np.divide(num, den, out=np.zeros_like(num), where=den > 0.0)
            max_rate = float(rates.max())

        def source(count: int, r: np.random.Generator) -> LabeledSample:
            sample, _ = samp(
                oracle, measure_prev, count, r,
                d_hat=d_hat, delta=params.delta, sample_scale=params.sample_scale,
            )
            return sample

        h_t = repeat_weak_learner(wkl, source, params, rng)

        adv = None
        if exact:
            hv = np.clip(np.asarray(h_t(dist.xs), dtype=np.float64), -1.0, 1.0)
            if d_pre > 0.0:
                adv = 0.5 * float(np.dot(u_diff, hv)) / d_pre
            sigma_mid = _step_scores(sigma_prev, hv, False, params.lam, params.s, not withhold)

        if withhold:
            provisional = AggregatedHypothesis(params.lam, params.s, tuple(trace) + ((h_t, False),))
            b_t = over_confident(
                oracle, provisional, params, rng,
                _scores=sigma_mid if exact else None,
            )
        else:
            b_t = False

        trace.append((h_t, b_t))
        if exact:
            if b_t:
                sigma = _step_scores(sigma_prev, hv, True, params.lam, params.s, False)
            else:
                sigma = sigma_mid

        rec = RoundRecord(
            round=t,
            d_hat=0.0,
            overconfident=b_t,
            raw_draws=0,
            d_exact_pre=d_pre,
            phi_pre=phi_pre,
            adv_exact=adv,
            max_noise_rate=max_rate,
        )
        if exact:
            # one exponential pass per state: the termination density (exact
            # mode draws nothing), the potential, and the error metrics all
            # derive from the same raw weights
            m_plus_raw = np.exp(np.minimum(-sigma, 0.0))  # M(sigma)
            m_minus_raw = np.exp(np.minimum(sigma, 0.0))  # M(-sigma)
            safe_now = np.abs(sigma) < params.s
            if withhold:
                w_plus_arr = np.where(safe_now, m_plus_raw, 0.0)
                w_minus_arr = np.where(safe_now, m_minus_raw, 0.0)
            else:
                w_plus_arr, w_minus_arr = m_plus_raw, m_minus_raw
            u_plus = a_plus * w_plus_arr
            u_minus = a_minus * w_minus_arr
            u_diff = u_plus - u_minus
            # density and potential share the dot structure so the pointwise
            # mu <= phi inequality survives float accumulation
            d_hat = float(np.dot(a_plus, w_plus_arr) + np.dot(a_minus, w_minus_arr))
            rec.d_exact = d_hat
            phi_plus = m_plus_raw + np.maximum(-sigma, 0.0)   # phi(sigma)
            phi_minus = m_minus_raw + np.maximum(sigma, 0.0)  # phi(-sigma)
            rec.phi = float(np.dot(a_plus, phi_plus) + np.dot(a_minus, phi_minus))
            prev_d_exact, prev_phi = rec.d_exact, rec.phi
            pred_pos = sigma >= 0.0
            rec.lerr_exact = prob_plus - float(np.dot(b_label, pred_pos))
            rec.ferr_exact = prob_f_plus - float(np.dot(p_times_f, pred_pos))
            rec.risky_mass = 1.0 - float(np.dot(dist.p, safe_now))
        else:
            measure_now = Measure(g_replay(tuple(trace)), params.s, withhold=withhold)
            d_hat = est_density(oracle, measure_now, params, rng)
        rec.d_hat = d_hat
        rec.raw_draws = oracle.draws - draws_mark
        run.rows.append(rec)
        draws_mark = oracle.draws

    run.total_draws = oracle.draws
    agg = AggregatedHypothesis(params.lam, params.s, tuple(trace), ablated=not withhold)
    return agg, run
