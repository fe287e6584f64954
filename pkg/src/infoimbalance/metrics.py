"""Neighbor ranks, Information Imbalance, linear CKA and Neighborhood Overlap.

Squared distances come from the inner-product expansion
``|a|^2 + |b|^2 - 2 a.b`` evaluated with BLAS on column-centered data.
Every comparison whose outcome that approximation cannot settle (two
values closer than twice a rigorous rounding bound) is redone on the
directly subtracted coordinates, so the integer ranks equal those of a
plain double loop, ties going to the lower sample index.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from ._parallel import map_ordered
from .tensorio import TIE_POLICY, PointCloud, RankMatrix

__all__ = [
    "MetricError",
    "TooFewSamplesError",
    "LengthMismatchError",
    "DegenerateInputError",
    "MetricResult",
    "AsymmetryResult",
    "Geometry",
    "as_cloud",
    "rank_matrix",
    "nearest_neighbors",
    "neighbor_ranks",
    "knn_indices",
    "information_imbalance",
    "linear_cka",
    "neighborhood_overlap",
    "asymmetry",
    "jackknife",
    "compare",
    "half_subsets",
    "DEFAULT_K",
]

DEFAULT_K = 10
_EPS = np.finfo(np.float64).eps
# above these sizes the n x n Gram / distance matrices are not kept in memory
GRAM_CACHE_MAX = 8192
DIST_CACHE_MAX = 4096
_BLOCK_BYTES = 1 << 25


class MetricError(ValueError):
    pass


class TooFewSamplesError(MetricError):
    pass


class LengthMismatchError(MetricError):
    pass


class DegenerateInputError(MetricError):
    pass


@dataclass(frozen=True)
class MetricResult:
    name: str
    value: float
    jackknife_mean: float
    jackknife_std: float
    n_samples: int
    params: dict = field(default_factory=dict)
    seed: int | None = None
    n_resamples: int = 0
    resamples: tuple[float, ...] = ()

    def to_dict(self) -> dict:
        return {
            "name": self.name, "value": self.value,
            "jackknife_mean": self.jackknife_mean, "jackknife_std": self.jackknife_std,
            "n_samples": self.n_samples, "params": dict(self.params), "seed": self.seed,
            "n_resamples": self.n_resamples, "resamples": list(self.resamples),
        }


@dataclass(frozen=True)
class AsymmetryResult:
    """``a_value = xy.value - yx.value``; negative when x is the better predictor."""

    a_value: float
    xy: MetricResult
    yx: MetricResult
    jackknife_mean: float = 0.0
    jackknife_std: float = 0.0


def as_cloud(x) -> PointCloud:
    if isinstance(x, PointCloud):
        return x
    try:
        return PointCloud(np.asarray(x))
    except ValueError as exc:
        if "at least 3" in str(exc):
            raise TooFewSamplesError(str(exc)) from None
        raise MetricError(str(exc)) from None


class Geometry:
    """Squared Euclidean distances among the rows of one point cloud.

    ``subset`` returns a view on a subset of rows that reuses the cached
    Gram matrix, which is how jackknife resamples avoid recomputing the
    expensive inner products.
    """

    def __init__(self, data, metric: str = "euclidean", *, _parent=None, _rows=None):
        if metric != "euclidean":
            raise MetricError(f"unsupported distance {metric!r}; only 'euclidean' is implemented")
        if _parent is None:
            raw = np.ascontiguousarray(np.asarray(data, dtype=np.float64))
            self._raw = raw
            self._centered = raw - raw.mean(axis=0)
            self._rows = np.arange(raw.shape[0])
            self.sq = np.einsum("ij,ij->i", self._centered, self._centered)
            self._gram = None
            self._sqmax = float(self.sq.max())
            self._constant = bool(np.all(raw == raw[0]))
        else:
            self._raw = _parent._raw
            self._centered = _parent._centered
            self._rows = _parent._rows[_rows]
            self.sq = _parent.sq[_rows]
            self._gram = None if _parent._gram is None else _parent._gram[np.ix_(_rows, _rows)]
            # the parent's bound stays valid for any subset
            self._sqmax = _parent._sqmax
            sub = self._raw[self._rows]
            self._constant = bool(np.all(sub == sub[0]))
        self.n = len(self._rows)
        self.dim = self._raw.shape[1]
        self._nn = None
        self._knn: dict[int, np.ndarray] = {}
        self._centered_gram = None
        self._dist = None
        self._subsets: dict[bytes, Geometry] = {}

    def subset(self, rows) -> Geometry:
        rows = np.asarray(rows, dtype=np.intp)
        key = rows.tobytes()
        if key not in self._subsets:
            self.gram()
            self._subsets[key] = Geometry(None, _parent=self, _rows=rows)
        return self._subsets[key]

    def gram(self) -> np.ndarray | None:
        """Inner products of the centered rows, cached when small enough."""
        if self._gram is None and self.n <= GRAM_CACHE_MAX:
            c = self._centered[self._rows]
            self._gram = c @ c.T
        return self._gram

    def tolerance(self, lo: int, hi: int) -> np.ndarray:
        """Twice a bound on |approximate - exact| squared distance, per row."""
        return 8.0 * (self.dim + 8) * _EPS * (self.sq[lo:hi] + self._sqmax)

    def approx_block(self, lo: int, hi: int) -> np.ndarray:
        """Approximate squared distances of rows lo..hi, +inf on the diagonal."""
        if self._dist is None and self.n <= DIST_CACHE_MAX:
            self._dist = self._compute_block(0, self.n)
        if self._dist is not None:
            return self._dist[lo:hi]
        return self._compute_block(lo, hi)

    def _compute_block(self, lo: int, hi: int) -> np.ndarray:
        g = self.gram()
        if g is not None:
            block = g[lo:hi].copy()
        else:
            c = self._centered[self._rows]
            block = c[lo:hi] @ c.T
        block *= -2.0
        block += self.sq[lo:hi, None]
        block += self.sq[None, :]
        np.maximum(block, 0.0, out=block)
        block[np.arange(hi - lo), np.arange(lo, hi)] = np.inf
        return block

    def exact(self, i: int, js) -> np.ndarray:
        """Directly subtracted squared distances from row ``i`` to rows ``js``."""
        diff = self._raw[self._rows[np.asarray(js)]] - self._raw[self._rows[i]]
        return (diff * diff).sum(axis=1)

    def blocks(self):
        step = max(1, _BLOCK_BYTES // (8 * max(self.n, 1)))
        return [(lo, min(lo + step, self.n)) for lo in range(0, self.n, step)]

    # neighbor queries ---------------------------------------------------
    def refine(self, i: int, order: np.ndarray, vals: np.ndarray, tol: float) -> np.ndarray:
        """Reorder runs of unresolvable approximate values by exact distance."""
        close = np.diff(vals) <= tol
        if not close.any():
            return order
        order = order.copy()
        pos = np.flatnonzero(close)
        breaks = np.flatnonzero(np.diff(pos) > 1)
        starts = np.concatenate(([pos[0]], pos[breaks + 1]))
        ends = np.concatenate((pos[breaks], [pos[-1]])) + 2
        for s, e in zip(starts, ends):
            seg = order[s:e]
            order[s:e] = seg[np.lexsort((seg, self.exact(i, seg)))]
        return order

    def nearest(self) -> np.ndarray:
        if self._nn is None:
            self._nn = np.concatenate(map_ordered(self._nearest_block, self.blocks()))
        return self._nn

    def _nearest_block(self, span):
        lo, hi = span
        d = self.approx_block(lo, hi)
        tol = self.tolerance(lo, hi)
        out = np.argmin(d, axis=1)
        cand = d <= (d.min(axis=1) + tol)[:, None]
        for r in np.flatnonzero(cand.sum(axis=1) > 1):
            js = np.flatnonzero(cand[r])
            out[r] = js[np.lexsort((js, self.exact(lo + r, js)))[0]]
        return out

    def ranks_of(self, targets: np.ndarray) -> np.ndarray:
        """Rank of ``targets[i]`` among the neighbors of each ``i``."""
        targets = np.asarray(targets, dtype=np.intp)

        def work(span):
            lo, hi = span
            d = self.approx_block(lo, hi)
            tol = self.tolerance(lo, hi)[:, None]
            rows = np.arange(hi - lo)
            t = d[rows, targets[lo:hi]][:, None]
            rank = 1 + np.count_nonzero(d < t - tol, axis=1)
            amb = np.abs(d - t) <= tol
            for r in np.flatnonzero(np.count_nonzero(amb, axis=1) > 1):
                js = np.flatnonzero(amb[r])
                ex = self.exact(lo + r, js)
                tgt = targets[lo + r]
                et = ex[js == tgt][0]
                rank[r] += np.count_nonzero((ex < et) | ((ex == et) & (js < tgt)))
            return rank

        return np.concatenate(map_ordered(work, self.blocks())).astype(np.int64)

    def knn(self, k: int) -> np.ndarray:
        """Indices of the ``k`` nearest neighbors of every row, nearest first."""
        if k not in self._knn:
            self._knn[k] = np.concatenate(map_ordered(lambda s: self._knn_block(s, k), self.blocks()))
        return self._knn[k]

    def _knn_block(self, span, k):
        lo, hi = span
        d = self.approx_block(lo, hi)
        tol = self.tolerance(lo, hi)
        kth = np.partition(d, k - 1, axis=1)[:, k - 1]
        cand = d <= (kth + tol)[:, None]
        counts = np.count_nonzero(cand, axis=1)
        out = np.empty((hi - lo, k), dtype=np.intp)
        simple = np.flatnonzero(counts == k)
        if len(simple):
            # exactly k candidates: only their internal order can need fixing
            js = np.nonzero(cand[simple])[1].reshape(len(simple), k)
            vals = np.take_along_axis(d[simple], js, axis=1)
            srt = np.argsort(vals, axis=1, kind="stable")
            out[simple] = np.take_along_axis(js, srt, axis=1)
            vals = np.take_along_axis(vals, srt, axis=1)
            close = (np.diff(vals, axis=1) <= tol[simple, None]).any(axis=1)
            for r, v in zip(simple[close], vals[close]):
                out[r] = self.refine(lo + r, out[r], v, tol[r])
        for r in np.flatnonzero(counts != k):
            js = np.flatnonzero(cand[r])
            vals = d[r, js]
            srt = np.argsort(vals, kind="stable")
            out[r] = self.refine(lo + r, js[srt], vals[srt], tol[r])[:k]
        return out

    def rank_matrix(self) -> RankMatrix:
        n = self.n

        def work(span):
            lo, hi = span
            d = self.approx_block(lo, hi)
            tol = self.tolerance(lo, hi)
            order = np.argsort(d, axis=1, kind="stable")[:, : n - 1]
            vals = np.take_along_axis(d, order, axis=1)
            close = (np.diff(vals, axis=1) <= tol[:, None]).any(axis=1)
            for r in np.flatnonzero(close):
                order[r] = self.refine(lo + r, order[r], vals[r], tol[r])
            return order

        order = np.concatenate(map_ordered(work, self.blocks()))
        ranks = np.zeros((n, n), dtype=np.int64)
        np.put_along_axis(ranks, order, np.arange(1, n, dtype=np.int64)[None, :], axis=1)
        return RankMatrix(ranks=ranks, order=order, tie_policy=TIE_POLICY)

    # kernel alignment ---------------------------------------------------
    def centered_gram(self) -> np.ndarray:
        if self._centered_gram is None:
            g = self.gram()
            if g is None:
                c = self._centered[self._rows]
                g = c @ c.T
            g = g - g.mean(axis=0)[None, :]
            g -= g.mean(axis=1)[:, None]
            self._centered_gram = g
        return self._centered_gram

    @property
    def is_constant(self) -> bool:
        return self._constant


def _geometry(x) -> Geometry:
    return x if isinstance(x, Geometry) else Geometry(as_cloud(x).data)


def _pair(x, y) -> tuple[Geometry, Geometry]:
    gx, gy = _geometry(x), _geometry(y)
    if gx.n != gy.n:
        raise LengthMismatchError(f"clouds have {gx.n} and {gy.n} samples")
    if gx.n < 3:
        raise TooFewSamplesError(f"need at least 3 samples, got {gx.n}")
    return gx, gy


# core statistics on geometries -------------------------------------------

def _ii(gx: Geometry, gy: Geometry) -> float:
    n = gx.n
    ranks = gy.ranks_of(gx.nearest())
    return 2.0 * int(ranks.sum()) / ((n - 1) * n)


def _cka(gx: Geometry, gy: Geometry) -> float:
    if gx.is_constant or gy.is_constant:
        raise DegenerateInputError("linear CKA is undefined for a constant cloud")
    kx, ky = gx.centered_gram(), gy.centered_gram()
    xx = float(np.einsum("ij,ij->", kx, kx))
    yy = float(np.einsum("ij,ij->", ky, ky))
    if xx == 0.0 or yy == 0.0:
        raise DegenerateInputError("linear CKA is undefined for a zero-variance cloud")
    xy = float(np.einsum("ij,ij->", kx, ky))
    return float(xy / (np.sqrt(xx) * np.sqrt(yy)))


def _no(gx: Geometry, gy: Geometry, k: int) -> float:
    if not 1 <= k <= gx.n - 1:
        raise MetricError(f"k={k} outside 1..{gx.n - 1}")
    both = np.sort(np.concatenate([gx.knn(k), gy.knn(k)], axis=1), axis=1)
    shared = np.count_nonzero(np.diff(both, axis=1) == 0, axis=1)
    return int(shared.sum()) / (k * gx.n)


_BASE = {
    "ii_xy": (lambda gx, gy, p: _ii(gx, gy), lambda p: {"direction": "x->y"}),
    "ii_yx": (lambda gx, gy, p: _ii(gy, gx), lambda p: {"direction": "y->x"}),
    "cka": (lambda gx, gy, p: _cka(gx, gy), lambda p: {"kernel": "linear"}),
    "no": (lambda gx, gy, p: _no(gx, gy, p["k"]), lambda p: {"k": p["k"]}),
}
_ALIASES = {"ii": "ii_xy"}


def half_subsets(n: int, n_resamples: int, seed) -> list[np.ndarray]:
    """Sorted half-size index subsets drawn without replacement (PCG64)."""
    rng = np.random.default_rng(seed)
    return [np.sort(rng.choice(n, n // 2, replace=False)) for _ in range(n_resamples)]


def _check_resampling(n: int, n_resamples: int) -> None:
    if n_resamples < 2:
        raise MetricError(f"jackknife needs at least 2 resamples, got {n_resamples}")
    if n < 6:
        raise TooFewSamplesError(f"jackknife needs at least 6 samples, got {n}")


def compare(x, y, metrics: Iterable[str] = ("ii_xy", "ii_yx", "cka", "no"), *,
            k: int = DEFAULT_K, n_resamples: int = 0, seed: int = 0) -> dict[str, MetricResult]:
    """Several metrics on one aligned pair, sharing distances and subsets.

    ``metrics`` may contain ``ii_xy``, ``ii_yx`` (alias ``ii``), ``cka``,
    ``no`` and ``asymmetry``.  With ``n_resamples >= 2`` every metric is
    also evaluated on the same half-size subsets.
    """
    gx, gy = _pair(x, y)
    names = [_ALIASES.get(m, m) for m in metrics]
    for m in names:
        if m not in _BASE and m != "asymmetry":
            raise MetricError(f"unknown metric {m!r}")
    params = {"k": k}
    needed = list(dict.fromkeys(
        b for m in names for b in (("ii_xy", "ii_yx") if m == "asymmetry" else (m,))))

    def evaluate(ax, ay):
        vals = {b: _BASE[b][0](ax, ay, params) for b in needed}
        if "asymmetry" in names:
            vals["asymmetry"] = vals["ii_xy"] - vals["ii_yx"]
        return vals

    full = evaluate(gx, gy)
    per_subset = []
    if n_resamples:
        _check_resampling(gx.n, n_resamples)
        for idx in half_subsets(gx.n, n_resamples, seed):
            per_subset.append(evaluate(gx.subset(idx), gy.subset(idx)))
    out = {}
    for m in names:
        vals = np.array([s[m] for s in per_subset], dtype=np.float64)
        p = {"direction": "x->y minus y->x"} if m == "asymmetry" else _BASE[m][1](params)
        out[m] = MetricResult(
            name=m, value=full[m],
            jackknife_mean=float(vals.mean()) if len(vals) else full[m],
            jackknife_std=float(vals.std()) if len(vals) else 0.0,
            n_samples=gx.n, params=p, seed=seed if n_resamples else None,
            n_resamples=len(vals), resamples=tuple(float(v) for v in vals))
    return out


# public single-metric API --------------------------------------------------

def rank_matrix(cloud) -> RankMatrix:
    """Full neighbor-rank table of a cloud (O(N^2) memory)."""
    return _geometry(cloud).rank_matrix()


def nearest_neighbors(cloud) -> np.ndarray:
    return _geometry(cloud).nearest().copy()


def neighbor_ranks(cloud, targets) -> np.ndarray:
    """``r[i]`` = rank of sample ``targets[i]`` seen from sample ``i``."""
    g = _geometry(cloud)
    targets = np.asarray(targets, dtype=np.intp)
    if targets.shape != (g.n,):
        raise LengthMismatchError(f"need one target per sample ({g.n}), got {targets.shape}")
    if np.any(targets == np.arange(g.n)) or np.any((targets < 0) | (targets >= g.n)):
        raise MetricError("targets must index other samples")
    return g.ranks_of(targets)


def knn_indices(cloud, k: int = DEFAULT_K) -> np.ndarray:
    g = _geometry(cloud)
    if not 1 <= k <= g.n - 1:
        raise MetricError(f"k={k} outside 1..{g.n - 1}")
    return g.knn(k).copy()


def information_imbalance(x, y, *, n_resamples: int = 0, seed: int = 0) -> MetricResult:
    """Information Imbalance from ``x`` to ``y``.

    Two over N - 1 times the mean rank, in ``y``, of each sample's nearest
    neighbor in ``x``.  About 1 when ``x`` says nothing about ``y``;
    ``2 / (N - 1)`` when the nearest neighbors coincide.
    """
    return compare(x, y, ("ii_xy",), n_resamples=n_resamples, seed=seed)["ii_xy"]


def linear_cka(x, y, *, n_resamples: int = 0, seed: int = 0) -> MetricResult:
    """Feature-centered linear CKA, evaluated through centered Gram matrices."""
    return compare(x, y, ("cka",), n_resamples=n_resamples, seed=seed)["cka"]


def neighborhood_overlap(x, y, k: int = DEFAULT_K, *, n_resamples: int = 0,
                         seed: int = 0) -> MetricResult:
    """Mean fraction of shared ``k``-nearest neighbors."""
    gx, gy = _pair(x, y)
    if not 1 <= k <= gx.n - 1:
        raise MetricError(f"k={k} outside 1..{gx.n - 1}")
    return compare(gx, gy, ("no",), k=k, n_resamples=n_resamples, seed=seed)["no"]


def asymmetry(x, y, *, n_resamples: int = 0, seed: int = 0) -> AsymmetryResult:
    res = compare(x, y, ("ii_xy", "ii_yx", "asymmetry"), n_resamples=n_resamples, seed=seed)
    a = res["asymmetry"]
    return AsymmetryResult(a_value=res["ii_xy"].value - res["ii_yx"].value,
                           xy=res["ii_xy"], yx=res["ii_yx"],
                           jackknife_mean=a.jackknife_mean, jackknife_std=a.jackknife_std)


def jackknife(metric: str | Callable, x, y, n_resamples: int = 5, seed: int = 0,
              **params) -> MetricResult:
    """Half-sample resampling error bars for one metric.

    ``metric`` is a name accepted by :func:`compare` or a callable
    ``f(x_array, y_array) -> float``.  The same subset is applied to both
    clouds; the reported ``value`` is the metric on all samples and the
    spread is the population standard deviation over subsets.
    """
    if isinstance(metric, str):
        _check_resampling(_geometry(x).n, n_resamples)
        name = _ALIASES.get(metric, metric)
        if name not in _BASE and name != "asymmetry":
            raise MetricError(f"unknown metric {metric!r}")
        return compare(x, y, (name,), n_resamples=n_resamples, seed=seed,
                       k=params.get("k", DEFAULT_K))[name]
    if not callable(metric):
        raise MetricError(f"invalid metric descriptor {metric!r}")
    cx, cy = as_cloud(x), as_cloud(y)
    if cx.n_samples != cy.n_samples:
        raise LengthMismatchError(f"clouds have {cx.n_samples} and {cy.n_samples} samples")
    _check_resampling(cx.n_samples, n_resamples)
    value = float(metric(cx.data, cy.data))
    vals = np.array([float(metric(cx.data[idx], cy.data[idx]))
                     for idx in half_subsets(cx.n_samples, n_resamples, seed)])
    return MetricResult(name=getattr(metric, "__name__", "custom"), value=value,
                        jackknife_mean=float(vals.mean()), jackknife_std=float(vals.std()),
                        n_samples=cx.n_samples, params=dict(params), seed=seed,
                        n_resamples=n_resamples, resamples=tuple(vals.tolist()))
