"""
Activation stores and pair manifests
====================================

Activations extracted elsewhere arrive as a binary store: one
(tokens x dim) float32 block per sample and layer, with ragged token
counts.  A manifest says which left sample goes with which right sample.
"""
import tempfile
from pathlib import Path

import numpy as np

from infoimbalance import ActivationStore, PairManifest, load_manifest, load_store, write_manifest, write_store
from infoimbalance.tensorio import validate_manifest

out = Path(tempfile.mkdtemp())
rng = np.random.default_rng(0)

store = ActivationStore("toy-model", n_layers=2, dim=4)
for i in range(3):
    for layer in range(3):  # layers 0..n_layers, 0 being the embedding output
        store.add(f"s{i}", layer, rng.standard_normal((5 + i, 4)))
write_store(store, out / "toy.bin")

back = load_store(out / "toy.bin")  # blocks are memory-mapped and read on demand
print(back, back.tokens("s2", 1), "tokens in s2 at layer 1")
print("identical after reload:", back == store)

# an empty store is just the 16-byte header
write_store(ActivationStore(), out / "empty.bin")
print("empty store size:", (out / "empty.bin").stat().st_size)

manifest = PairManifest("en", "it", [("s0", "s0"), ("s1", "s1"), ("s2", "s2")])
write_manifest(manifest, out / "pairs.json")
validate_manifest(load_manifest(out / "pairs.json"), back, back)
print((out / "pairs.json").read_text())
