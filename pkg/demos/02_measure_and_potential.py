"""The reweighting measure, its density, and the potential that bounds it.

Shows the weight function on both labels, the withholding cutoff at |g| >= s,
the density <= potential sandwich, and how the derived threshold s keeps the
per-point reweighted flip probability at or below 1/2 - alpha.
"""

import math

import numpy as np

from massboost import (
    Measure,
    compute_params,
    exact_density,
    exact_potential,
    make_massart,
    m_weight,
    phi_point,
    reweighted_noise_rates,
)

eta, alpha = 0.1, 0.1
params = compute_params(eta, alpha, gamma=0.05, epsilon=0.15, delta=0.1)
print(f"c = {params.c:.4f}, s = log((1-eta)/(eta+c)) = {params.s:.4f}")

print("\nbase weight M(v) and tail integral phi(v):")
for v in (-1.0, 0.0, 0.5, params.s):
    print(f"  v={v:+.3f}  M={m_weight(v):.4f}  phi={phi_point(v):.4f}")

rng = np.random.default_rng(3)
n = 200
scores = rng.uniform(-(params.s + 0.4), params.s + 0.4, size=n)
f = np.where(rng.random(n) < 0.5, 1, -1)
dist = make_massart(
    [((float(i),), 1.0 / n, int(f[i]), float(eta * rng.random())) for i in range(n)],
    eta_bound=eta,
)
g = lambda q: scores[np.atleast_2d(q)[:, 0].astype(int)]
measure = Measure(g, s=params.s)

d = exact_density(dist, measure)
phi = exact_potential(dist, g)
print(f"\nrandom score state: density d(mu) = {d:.4f} <= potential Phi = {phi:.4f}")

rates, included = reweighted_noise_rates(dist, measure)
print(f"withheld points: {np.sum(~included)} of {n}")
print(f"max reweighted flip probability on the safe set = {rates[included].max():.4f}")
print(f"guarantee 1/2 - alpha = {0.5 - alpha:.4f}")

# the bound is tight: push one clean point's margin just under s
worst = Measure(lambda q: np.full(np.atleast_2d(q).shape[0], params.s - 1e-9), s=params.s)
tight = make_massart([((0.0,), 1.0, 1, eta)], eta_bound=eta)
r, _ = reweighted_noise_rates(tight, worst)
print(f"worst-case margin just below s: rate = {r[0]:.6f} -> exactly 1/2 - alpha in the limit")
