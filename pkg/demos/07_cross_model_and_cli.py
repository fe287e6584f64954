"""
Models of different depth, and the same analysis from the command line
=====================================================================

Layers are matched by relative depth l / L.  The asymmetry
II(x -> y) - II(y -> x) shows which side carries more information: here
the right model only keeps a quarter of the features.
"""
import tempfile
from pathlib import Path

import numpy as np

from infoimbalance import ActivationStore, write_manifest, write_store
from infoimbalance.cli import main
from infoimbalance.pipeline import AggregationSpec, asymmetry_profile, match_depths
from infoimbalance.synthstore import make_paired_stores

print("4-layer vs 8-layer matching:", match_depths(range(5), 4, range(9), 8))

left, _, manifest = make_paired_stores(400, n_layers=4, dim=16, min_tokens=10, seed=1)
rng = np.random.default_rng(2)
right = ActivationStore("narrow-model", n_layers=8, dim=4)
for i in range(400):
    for layer in range(9):
        block = left.block(f"a{i}", layer // 2)[:, :4]
        right.add(f"b{i}", layer, block + 0.05 * rng.standard_normal(block.shape))

prof = asymmetry_profile(left, right, manifest, AggregationSpec("mean_last_T", 4),
                         cross_model=True, n_resamples=0)
for (layer, depth), partner, a in zip(prof.layers, prof.partner_layers,
                                      prof.values("asymmetry", "x->y minus y->x")):
    print(f"left layer {layer} (depth {depth:.2f}) vs right layer {partner}:  A = {a:+.3f}")

# the same run through the CLI; outputs land next to a run_config.json
out = Path(tempfile.mkdtemp())
write_store(left, out / "left.bin")
write_store(right, out / "right.bin")
write_manifest(manifest, out / "pairs.json")
code = main(["asymmetry", "--left", str(out / "left.bin"), "--right", str(out / "right.bin"),
             "--manifest", str(out / "pairs.json"), "--cross-model", "--T", "4",
             "--plot", "--out", str(out / "run")])
print("exit", code, sorted(p.name for p in (out / "run").iterdir()))
