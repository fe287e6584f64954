"""
Low-rank Gaussian maps
======================

Y = X B^T + noise with B = U V of rank r.  As r grows, Y keeps more of
X, so II(x -> y) drops.  Y never knows more than X, so the reverse
direction stays higher.
"""
from infoimbalance.synthbench import RankSweepConfig, run_rank_sweep

# a smaller sample than the full benchmark keeps this quick
cfg = RankSweepConfig(p=10, n=1000, sigma=0.1, seed=0, n_resamples=5)
table = run_rank_sweep(cfg, progress=lambda i, r: print("rank", r, "done"))

print(f"{'r':>3} {'II x->y':>9} {'II y->x':>9} {'CKA':>7} {'NO':>7}")
for row in table.rows:
    print(f"{row['sweep_param']:>3} {row['ii_xy']:9.3f} {row['ii_yx']:9.3f} {row['cka']:7.3f} {row['no']:7.3f}")

# the same table as CSV, as written by `infoimbalance synth-rank`
print(table.to_csv_string().splitlines()[0])
