"""Layer-wise analyses over pairs of activation stores.

A manifest pairs sample ids of a left store ``xs`` with those of a right
store ``ys``; every metric treats the left side as ``x`` and the right as
``y``.  Within one profile the usable pairs are fixed once, from token
counts alone, so every layer and metric sees the same samples.  The same
half-sample subsets (from ``seed``) are reused at every layer.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .metrics import DEFAULT_K, MetricResult, compare
from .tables import ProfileTable
from .tensorio import ActivationStore, PairManifest, PointCloud, validate_manifest

MODES = ("last_token", "mean_last_T", "concat_last_T")

LAYER_COLUMNS = ["layer", "relative_depth", "metric", "direction", "value", "std",
                 "n_pairs", "aggregation", "T", "drop_trailing", "partner_layer"]
TAU_COLUMNS = ["layer", "tau", "value", "std", "n_contributing"]

_DIRECTIONS = {
    "ii_xy": ("ii", "x->y"),
    "ii_yx": ("ii", "y->x"),
    "cka": ("cka", "sym"),
    "no": ("no", "sym"),
    "asymmetry": ("asymmetry", "x->y minus y->x"),
}


class PipelineError(ValueError):
    pass


class SampleTooShortError(PipelineError):
    pass


class LayerOutOfRangeError(PipelineError):
    pass


class LayerMismatchError(PipelineError):
    pass


class TooFewPairsError(PipelineError):
    pass


class ShuffleError(PipelineError):
    pass


@dataclass(frozen=True)
class AggregationSpec:
    """How a (tokens x dim) block becomes one vector.

    The last ``drop_trailing`` tokens are ignored; ``T`` tokens ending at
    the last kept one are averaged or concatenated in text order.
    """

    mode: str = "mean_last_T"
    T: int = 20
    drop_trailing: int = 2

    def __post_init__(self):
        if self.mode not in MODES:
            raise PipelineError(f"unknown aggregation mode {self.mode!r}; expected one of {MODES}")
        if self.T < 1:
            raise PipelineError(f"T must be >= 1, got {self.T}")
        if self.drop_trailing < 0:
            raise PipelineError(f"drop_trailing must be >= 0, got {self.drop_trailing}")

    @property
    def window(self) -> int:
        return 1 if self.mode == "last_token" else self.T

    @property
    def min_tokens(self) -> int:
        return self.drop_trailing + self.window

    def usable(self, tokens: int) -> bool:
        return tokens >= self.min_tokens

    def output_dim(self, hidden: int) -> int:
        return hidden * self.T if self.mode == "concat_last_T" else hidden

    def reduce(self, block: np.ndarray) -> np.ndarray:
        end = block.shape[0] - self.drop_trailing
        if end < self.window:
            raise SampleTooShortError(
                f"{block.shape[0]} tokens, need at least {self.min_tokens} for {self}")
        seg = np.asarray(block[end - self.window:end], dtype=np.float64)
        if self.mode == "last_token":
            return seg[0]
        if self.mode == "mean_last_T":
            return seg.mean(axis=0)
        return seg.reshape(-1)


def _check_layer(store: ActivationStore, layer: int) -> None:
    if not 0 <= layer <= store.n_layers:
        raise LayerOutOfRangeError(f"layer {layer} outside 0..{store.n_layers} of {store.model!r}")


def aggregate(store: ActivationStore, layer: int, spec: AggregationSpec,
              sample_ids=None) -> PointCloud:
    """One aggregated row per sample id, in the given order."""
    _check_layer(store, layer)
    ids = store.sample_ids if sample_ids is None else list(sample_ids)
    rows = []
    for sid in ids:
        try:
            block = store.block(sid, layer)
        except KeyError:
            raise LayerOutOfRangeError(f"sample {sid!r} has no record at layer {layer}") from None
        try:
            rows.append(spec.reduce(block))
        except SampleTooShortError as exc:
            raise SampleTooShortError(f"sample {sid!r} at layer {layer}: {exc}") from None
    data = np.stack(rows) if rows else np.empty((0, spec.output_dim(store.dim)))
    return PointCloud(data, tuple(ids))


def _usable(store: ActivationStore, sid: str, layers, spec: AggregationSpec) -> bool:
    for layer in layers:
        if (sid, layer) not in store:
            return False
        if not spec.usable(store.tokens(sid, layer)):
            return False
    return True


def usable_pairs(xs: ActivationStore, ys: ActivationStore, manifest: PairManifest,
                 spec: AggregationSpec, layers_x, layers_y) -> tuple[list[tuple[str, str]], int]:
    """Pairs whose two sides can be aggregated at every requested layer."""
    kept = [(a, b) for a, b in manifest.pairs
            if _usable(xs, a, layers_x, spec) and _usable(ys, b, layers_y, spec)]
    return kept, len(manifest) - len(kept)


def relative_depth(layer: int, n_layers: int) -> float:
    return layer / n_layers if n_layers else 0.0


@dataclass
class LayerProfile:
    """Per-layer metric results for one aligned pair of stores."""

    model_name: str
    partner_model: str
    layers: list[tuple[int, float]]
    partner_layers: list[int]
    results: dict[tuple[int, str, str], MetricResult]
    spec: AggregationSpec
    n_pairs: int
    n_dropped: int = 0
    meta: dict = field(default_factory=dict)

    def values(self, metric: str, direction: str) -> np.ndarray:
        return np.array([self.results[(layer, metric, direction)].value for layer, _ in self.layers])

    def stds(self, metric: str, direction: str) -> np.ndarray:
        return np.array([self.results[(layer, metric, direction)].jackknife_std
                         for layer, _ in self.layers])

    @property
    def depths(self) -> np.ndarray:
        return np.array([d for _, d in self.layers])

    def table(self) -> ProfileTable:
        meta = {"model": self.model_name, "partner_model": self.partner_model,
                "n_pairs": self.n_pairs, "n_dropped": self.n_dropped, **self.meta}
        table = ProfileTable(list(LAYER_COLUMNS), meta=meta)
        for (layer, depth), partner in zip(self.layers, self.partner_layers):
            for (lay, metric, direction), res in self.results.items():
                if lay != layer:
                    continue
                table.append({
                    "layer": layer, "relative_depth": depth, "metric": metric,
                    "direction": direction, "value": res.value, "std": res.jackknife_std,
                    "n_pairs": res.n_samples, "aggregation": self.spec.mode, "T": self.spec.T,
                    "drop_trailing": self.spec.drop_trailing, "partner_layer": partner,
                })
        return table


def _metric_names(metrics) -> list[str]:
    names = []
    for m in metrics:
        if m == "ii":
            names += ["ii_xy", "ii_yx"]
        elif m == "asymmetry":
            names += ["ii_xy", "ii_yx", "asymmetry"]
        elif m in ("cka", "no"):
            names.append(m)
        else:
            raise PipelineError(f"unknown metric {m!r}; expected ii, cka, no or asymmetry")
    return list(dict.fromkeys(names))


def _profile(xs, ys, manifest, spec, layer_pairs, metrics, k, n_resamples, seed, meta):
    validate_manifest(manifest, xs, ys)
    for l1, l2 in layer_pairs:
        _check_layer(xs, l1)
        _check_layer(ys, l2)
    names = _metric_names(metrics)
    pairs, dropped = usable_pairs(xs, ys, manifest, spec,
                                  sorted({a for a, _ in layer_pairs}),
                                  sorted({b for _, b in layer_pairs}))
    if len(pairs) < 3:
        raise TooFewPairsError(f"only {len(pairs)} usable pairs after filtering "
                               f"({dropped} dropped for {spec})")
    left = [a for a, _ in pairs]
    right = [b for _, b in pairs]
    results = {}
    for l1, l2 in layer_pairs:
        x = aggregate(xs, l1, spec, left)
        y = aggregate(ys, l2, spec, right)
        res = compare(x, y, names, k=k, n_resamples=n_resamples, seed=seed)
        for name, r in res.items():
            metric, direction = _DIRECTIONS[name]
            results[(l1, metric, direction)] = r
    return LayerProfile(
        model_name=xs.model, partner_model=ys.model,
        layers=[(l1, relative_depth(l1, xs.n_layers)) for l1, _ in layer_pairs],
        partner_layers=[l2 for _, l2 in layer_pairs], results=results, spec=spec,
        n_pairs=len(pairs), n_dropped=dropped,
        meta={"left_source": manifest.left_source, "right_source": manifest.right_source,
              "k": k, "n_resamples": n_resamples, "seed": seed, **meta})


def layer_profile(xs: ActivationStore, ys: ActivationStore, manifest: PairManifest,
                  spec: AggregationSpec = AggregationSpec(), metrics=("ii",), *,
                  layers=None, k: int = DEFAULT_K, n_resamples: int = 5,
                  seed: int = 0) -> LayerProfile:
    """Compare the two stores layer by layer (same layer index on both sides)."""
    if xs.n_layers != ys.n_layers:
        raise LayerMismatchError(
            f"stores have {xs.n_layers} and {ys.n_layers} layers; use cross_model_profile")
    if layers is None:
        layers = sorted(set(xs.layers) & set(ys.layers))
    layers = sorted(set(int(l) for l in layers))
    return _profile(xs, ys, manifest, spec, [(l, l) for l in layers], metrics, k,
                    n_resamples, seed, {"mode": "same-model"})


def match_depths(layers_x, n_layers_x: int, layers_y, n_layers_y: int) -> list[tuple[int, int]]:
    """Pair each x layer with the y layer of closest relative depth (ties: lower)."""
    cands = sorted(layers_y)
    if not cands:
        raise LayerOutOfRangeError("partner store has no layers")
    out = []
    for l1 in sorted(layers_x):
        if n_layers_x == 0 or n_layers_y == 0:
            l2 = min(cands, key=lambda c: (abs(relative_depth(l1, n_layers_x)
                                               - relative_depth(c, n_layers_y)), c))
        else:
            # integer cross-multiplication keeps the comparison exact
            l2 = min(cands, key=lambda c: (abs(l1 * n_layers_y - c * n_layers_x), c))
        out.append((l1, l2))
    return out


def cross_model_profile(xs: ActivationStore, ys: ActivationStore, manifest: PairManifest,
                        spec: AggregationSpec = AggregationSpec(), depth_pairs=None,
                        metrics=("ii",), *, k: int = DEFAULT_K, n_resamples: int = 5,
                        seed: int = 0) -> LayerProfile:
    """Compare stores of models with different depths at matching relative depth.

    ``depth_pairs`` overrides the matching, e.g. to hold one model at a
    fixed layer while sweeping the other.
    """
    if depth_pairs is None:
        depth_pairs = match_depths(xs.layers, xs.n_layers, ys.layers, ys.n_layers)
    depth_pairs = [(int(a), int(b)) for a, b in depth_pairs]
    if len({a for a, _ in depth_pairs}) != len(depth_pairs):
        raise PipelineError("each left layer may appear only once in depth_pairs")
    depth_pairs.sort()
    return _profile(xs, ys, manifest, spec, depth_pairs, metrics, k, n_resamples, seed,
                    {"mode": "cross-model"})


def asymmetry_profile(xs: ActivationStore, ys: ActivationStore, manifest: PairManifest,
                      spec: AggregationSpec = AggregationSpec(), *, cross_model: bool = False,
                      **kwargs) -> LayerProfile:
    """II(x->y) - II(y->x) per layer, with both directions kept."""
    if cross_model:
        return cross_model_profile(xs, ys, manifest, spec, metrics=("asymmetry",), **kwargs)
    return layer_profile(xs, ys, manifest, spec, metrics=("asymmetry",), **kwargs)


@dataclass
class TauProfile:
    """II from the last kept token to the token ``tau`` positions earlier."""

    layer: int
    taus: list[int]
    results: dict[int, MetricResult]
    n_contributing: dict[int, int]
    omitted: list[tuple[int, str]] = field(default_factory=list)
    direction: str = "last->previous"

    def rows(self) -> list[dict]:
        return [{"layer": self.layer, "tau": t, "value": self.results[t].value,
                 "std": self.results[t].jackknife_std, "n_contributing": self.n_contributing[t]}
                for t in self.taus]


def token_tau_profile(store: ActivationStore, layers, taus, drop_trailing: int = 2, *,
                      sample_ids=None, n_resamples: int = 5, seed: int = 0,
                      reverse: bool = False) -> list[TauProfile]:
    """Token-token Information Imbalance as a function of the offset ``tau``.

    Only samples with more than ``drop_trailing + tau`` tokens contribute
    at a given ``tau``.  Offsets with fewer than 3 such samples are left
    out and reported in ``omitted``; with fewer than 6 the value is kept
    but no resampling spread can be computed (std is NaN).
    """
    taus = sorted({int(t) for t in taus})
    if any(t < 1 for t in taus):
        raise PipelineError(f"tau must be >= 1, got {taus}")
    if drop_trailing < 0:
        raise PipelineError(f"drop_trailing must be >= 0, got {drop_trailing}")
    ids = store.sample_ids if sample_ids is None else list(sample_ids)
    out = []
    for layer in sorted({int(l) for l in layers}):
        _check_layer(store, layer)
        present = [s for s in ids if (s, layer) in store]
        prof = TauProfile(layer=layer, taus=[], results={}, n_contributing={},
                          direction="previous->last" if reverse else "last->previous")
        for tau in taus:
            use = [s for s in present if store.tokens(s, layer) > drop_trailing + tau]
            if len(use) < 3:
                reason = f"only {len(use)} samples longer than {drop_trailing + tau} tokens"
                warnings.warn(f"layer {layer}, tau {tau} omitted: {reason}", stacklevel=2)
                prof.omitted.append((tau, reason))
                continue
            last = np.empty((len(use), store.dim))
            prev = np.empty((len(use), store.dim))
            for i, s in enumerate(use):
                block = store.block(s, layer)
                end = block.shape[0] - 1 - drop_trailing
                last[i] = block[end]
                prev[i] = block[end - tau]
            x, y = (prev, last) if reverse else (last, prev)
            resample = n_resamples if len(use) >= 6 and n_resamples >= 2 else 0
            res = compare(PointCloud(x, tuple(use)), PointCloud(y, tuple(use)), ("ii_xy",),
                          n_resamples=resample, seed=seed)["ii_xy"]
            if not resample:
                res = MetricResult(res.name, res.value, res.value, float("nan"),
                                   res.n_samples, res.params, None, 0, ())
            prof.taus.append(tau)
            prof.results[tau] = res
            prof.n_contributing[tau] = len(use)
        out.append(prof)
    return out


def tau_table(profiles: list[TauProfile], meta: dict | None = None) -> ProfileTable:
    table = ProfileTable(list(TAU_COLUMNS), meta=dict(meta or {}))
    table.meta["omitted"] = [{"layer": p.layer, "tau": t, "reason": why}
                             for p in profiles for t, why in p.omitted]
    for p in profiles:
        for row in p.rows():
            table.append(row)
    return table


def shuffle_null(manifest: PairManifest, seed: int = 0, max_attempts: int = 100) -> PairManifest:
    """Permute the right-hand ids so that (if possible) no pair survives.

    Reshuffles until no position keeps its right id, giving up after
    ``max_attempts`` draws and keeping the last permutation.
    """
    n = len(manifest)
    if n < 2:
        raise ShuffleError(f"cannot misalign a manifest with {n} pair(s)")
    right = np.array(manifest.right_ids, dtype=object)
    rng = np.random.default_rng(seed)
    for _ in range(max_attempts):
        perm = rng.permutation(n)
        if not np.any(right[perm] == right):
            break
    return PairManifest(manifest.left_source, manifest.right_source,
                        list(zip(manifest.left_ids, right[perm].tolist())))
