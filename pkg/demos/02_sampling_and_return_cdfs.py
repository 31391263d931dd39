"""Uniform sampling and per-agent return distributions.

The polytope is flat inside the probability simplex, so sampling happens on
its affine hull: hit-and-run random walks give asymptotically uniform points.
Each agent's return over those points estimates the cdf of their expected
return distribution: the volumetric stand-in for an ordinal rank.
"""

import numpy as np

import polyagg as pa

m = pa.gen_simplex_instance(3)   # 1 state, 3 actions, 3 one-hot agents
poly = pa.build_polytope(m)
chart = pa.affine_hull(poly)
print(f"ambient dim {poly.dim}, hull dim {chart.dim}, interior origin "
      f"{np.round(chart.origin, 3)}")

cloud = pa.sample_uniform(poly, chart, 50_000, seed=7)
print("cloud:", cloud.points.shape, "reproducible via seed", cloud.seed)

# Volume fractions answer "how much of the policy space satisfies this?"
r0 = m.reward_vectors()[0]
fe = pa.vol_fraction(cloud, (-r0, -1 / 3))
print(f"fraction with J_0 >= 1/3: {fe.fraction:.4f} "
      f"(closed form {(2/3)**2:.4f}, se {fe.std_error:.4f})")

# Return cdf of agent 0: F(v) = fraction of the polytope with return <= v.
cdf = pa.estimate_cdf(cloud, m.rewards[0])
for v in (0.1, 1 / 3, 0.6):
    print(f"F_0({v:.2f}) = {cdf.evaluate(v):.4f}")
print("F_0^-1(0.5) =", round(pa.quantile_inverse(cdf, 0.5), 4))
print("density mode estimate:", round(pa.mode_estimate(cdf), 4))

# A generalized-logistic fit smooths the empirical cdf when it fits well.
smooth = pa.estimate_cdf(cloud, m.rewards[0], kind="logistic")
print("logistic fit kind:", smooth.kind, "params:",
      None if smooth.params is None else np.round(smooth.params, 3))

# The centroid is a distinguished fair point: every agent prefers it to at
# least ~1/e of the policy space.
centroid = pa.centroid_estimate(cloud)
for i in range(3):
    r = m.reward_vectors()[i]
    frac = pa.vol_fraction(cloud, (-r, -float(r @ centroid.flat))).fraction
    print(f"agent {i}: fraction weakly better than centroid = {frac:.4f} "
          f">= 1/e ~ {1/np.e:.4f}")
