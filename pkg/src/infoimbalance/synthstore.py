"""Synthetic paired activation stores with a controllable shared signal.

Each pair shares a latent vector ``z``.  At layer ``l`` every token of a
sample is ``w_l * z + (1 - w_l) * e`` with ``e`` drawn independently per
token and per side, so ``w_l`` sets how much the two sides know about each
other at that layer.
"""
from __future__ import annotations

import numpy as np

from .tensorio import ActivationStore, PairManifest


def linear_signal(layer: int, n_layers: int) -> float:
    return layer / n_layers if n_layers else 1.0


def make_paired_stores(n_pairs: int = 200, n_layers: int = 4, dim: int = 16, *,
                       min_tokens: int = 8, max_tokens: int = 16, signal=linear_signal,
                       right_noise: float = 0.0, seed: int = 0,
                       models=("left-model", "right-model")):
    """Return ``(left_store, right_store, manifest)``.

    ``signal(layer, n_layers)`` gives the mixing weight ``w_l`` in [0, 1].
    ``right_noise`` adds extra isotropic noise of that scale to the right
    side only, making it the less informative representation.  Left ids
    are ``a0, a1, ...`` and right ids ``b0, b1, ...``; token counts are
    drawn per sample and shared across layers.
    """
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n_pairs, dim))
    tok_left = rng.integers(min_tokens, max_tokens + 1, n_pairs)
    tok_right = rng.integers(min_tokens, max_tokens + 1, n_pairs)
    left = ActivationStore(models[0], n_layers, dim)
    right = ActivationStore(models[1], n_layers, dim)
    for layer in range(n_layers + 1):
        w = float(signal(layer, n_layers))
        for i in range(n_pairs):
            e = rng.standard_normal((tok_left[i], dim))
            left.add(f"a{i}", layer, w * z[i] + (1 - w) * e)
            e = rng.standard_normal((tok_right[i], dim))
            block = w * z[i] + (1 - w) * e
            if right_noise:
                block = block + right_noise * rng.standard_normal(block.shape)
            right.add(f"b{i}", layer, block)
    manifest = PairManifest("left", "right", [(f"a{i}", f"b{i}") for i in range(n_pairs)])
    return left, right, manifest


def make_token_store(n_samples: int = 100, n_layers: int = 2, dim: int = 8, *,
                     min_tokens: int = 5, max_tokens: int = 12, repeat: bool = False,
                     seed: int = 0, model: str = "token-model") -> ActivationStore:
    """Store of i.i.d. token vectors; ``repeat`` copies one vector over all tokens."""
    rng = np.random.default_rng(seed)
    store = ActivationStore(model, n_layers, dim)
    tokens = rng.integers(min_tokens, max_tokens + 1, n_samples)
    for layer in range(n_layers + 1):
        for i in range(n_samples):
            if repeat:
                block = np.repeat(rng.standard_normal((1, dim)), tokens[i], axis=0)
            else:
                block = rng.standard_normal((tokens[i], dim))
            store.add(f"s{i}", layer, block)
    return store
