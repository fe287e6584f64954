"""
Information Imbalance on toy point clouds
=========================================

Two clouds describe the same samples row by row.  The Information
Imbalance from x to y asks: if I know who is whose nearest neighbor in x,
how far down the neighbor list in y does that partner sit?
"""
import numpy as np

from infoimbalance import asymmetry, information_imbalance, linear_cka, neighborhood_overlap, rank_matrix

rng = np.random.default_rng(0)

# Ranks are ordered by distance, ties broken by sample index.
print(rank_matrix(np.array([0.0, 0.0, 5.0])).ranks)

# A cloud predicts itself perfectly: the floor is 2 / (N - 1).
x = rng.standard_normal((1000, 10))
print("x -> x      ", information_imbalance(x, x).value, 2 / 999)

# Independent clouds carry no information about each other: about 1.
y = rng.standard_normal((1000, 10))
print("x -> indep  ", round(information_imbalance(x, y).value, 3))

# Keep only three of the ten features.  The full vector still predicts the
# neighborhoods of the subset well, but not the other way round.
sub = x[:, :3]
a = asymmetry(x, sub)
print(f"full -> sub {a.xy.value:.3f}   sub -> full {a.yx.value:.3f}   A = {a.a_value:.3f}")

# The symmetric baselines see similarity but not its direction.
print("CKA", round(linear_cka(x, sub).value, 3), " NO(k=10)", round(neighborhood_overlap(x, sub).value, 3))

# Error bars: recompute on five random halves of the samples.
res = information_imbalance(x, sub, n_resamples=5, seed=0)
print(f"{res.value:.3f} +- {res.jackknife_std:.3f} over {res.n_resamples} halves")
