"""Synthetic Gaussian benchmarks.

Two constructions, both with rows as samples:

* low-rank map: ``X ~ N(0, I_p)``, ``B = U V`` with ``U`` (p x r) and
  ``V`` (r x p) standard normal, ``Y = X B^T + sigma * noise``;
* feature subset: ``X ~ N(0, I_p)`` against its first ``ceil(f p)``
  coordinates.

All draws come from ``numpy.random.default_rng(seed)`` (PCG64 bit
generator, ziggurat normals), in the order X (n x p), U (p x p),
V (p x p), noise (n x p); ``B_r`` uses the first ``r`` columns of U and
rows of V.  A sweep reuses one seed for every point, so all ranks share
X, the noise and the factor draws, and all fractions are nested slices
of the same X.  Each point is still distributed exactly as its stand-alone
construction; sharing the draws removes between-point sampling noise from
the curves.  The same seed drives the half-sample subsets.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .metrics import DEFAULT_K, Geometry, compare
from .tables import ProfileTable
from .tensorio import PointCloud

SWEEP_COLUMNS = ["sweep_param", "ii_xy", "ii_xy_std", "ii_yx", "ii_yx_std",
                 "cka", "cka_std", "no", "no_std", "n", "p", "sigma", "seed"]

DEFAULT_FRACTIONS = (0.01, 0.02, 0.05, 0.1, 0.25, 0.5, 0.75, 1.0)


class ConfigError(ValueError):
    pass


def _ids(n: int) -> tuple[str, ...]:
    return tuple(f"s{i}" for i in range(n))


@dataclass
class RankSweepConfig:
    p: int = 10
    n: int = 2500
    sigma: float = 0.1
    ranks: list[int] | None = None
    seed: int = 0
    n_resamples: int = 10
    k: int = DEFAULT_K

    def __post_init__(self):
        if self.ranks is None:
            self.ranks = list(range(1, self.p + 1))
        self.ranks = [int(r) for r in self.ranks]
        if not self.ranks:
            raise ConfigError("rank list is empty")
        if any(not 1 <= r <= self.p for r in self.ranks):
            raise ConfigError(f"ranks must lie in 1..{self.p}, got {self.ranks}")
        if self.sigma < 0:
            raise ConfigError(f"sigma must be >= 0, got {self.sigma}")
        if self.n < 3:
            raise ConfigError(f"need n >= 3, got {self.n}")


@dataclass
class SubsetSweepConfig:
    p: int = 100
    n: int = 2500
    fractions: list[float] = field(default_factory=lambda: list(DEFAULT_FRACTIONS))
    seed: int = 0
    n_resamples: int = 10
    k: int = DEFAULT_K

    def __post_init__(self):
        self.fractions = [float(f) for f in self.fractions]
        if not self.fractions:
            raise ConfigError("fraction list is empty")
        if any(not 0.0 < f <= 1.0 for f in self.fractions):
            raise ConfigError(f"fractions must lie in (0, 1], got {self.fractions}")
        if self.fractions != sorted(self.fractions):
            raise ConfigError("fractions must be sorted ascending")
        if self.n < 3:
            raise ConfigError(f"need n >= 3, got {self.n}")


def subset_size(p: int, fraction: float) -> int:
    # rounding first keeps e.g. 0.07 * 100 = 7.000000000000001 at 7
    return max(1, math.ceil(round(fraction * p, 9)))


def low_rank_map(u: np.ndarray, v: np.ndarray, r: int) -> np.ndarray:
    """``B_r = U[:, :r] V[:r, :]``, of rank ``r`` almost surely."""
    return u[:, :r] @ v[:r, :]


def gen_rank_pair(p: int, n: int, r: int, sigma: float, seed: int, *, return_map: bool = False):
    """Pair (X, Y) with ``Y = X B^T + noise`` and ``rank(B) = r``."""
    if not 1 <= r <= p:
        raise ConfigError(f"rank {r} outside 1..{p}")
    if sigma < 0:
        raise ConfigError(f"sigma must be >= 0, got {sigma}")
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, p))
    u = rng.standard_normal((p, p))
    v = rng.standard_normal((p, p))
    noise = rng.standard_normal((n, p))
    b = low_rank_map(u, v, r)
    y = x @ b.T + sigma * noise
    pair = (PointCloud(x, _ids(n)), PointCloud(y, _ids(n)))
    return (*pair, b) if return_map else pair


def gen_subset_pair(p: int, n: int, fraction: float, seed: int):
    """A Gaussian vector and its leading ``ceil(fraction * p)`` coordinates."""
    if not 0.0 < fraction <= 1.0:
        raise ConfigError(f"fraction must lie in (0, 1], got {fraction}")
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, p))
    m = subset_size(p, fraction)
    return PointCloud(x, _ids(n)), PointCloud(x[:, :m], _ids(n))


def _row(param, res, n, p, sigma, seed) -> dict:
    return {
        "sweep_param": param,
        "ii_xy": res["ii_xy"].value, "ii_xy_std": res["ii_xy"].jackknife_std,
        "ii_yx": res["ii_yx"].value, "ii_yx_std": res["ii_yx"].jackknife_std,
        "cka": res["cka"].value, "cka_std": res["cka"].jackknife_std,
        "no": res["no"].value, "no_std": res["no"].jackknife_std,
        "n": n, "p": p, "sigma": sigma, "seed": seed,
    }


def run_rank_sweep(cfg: RankSweepConfig, progress=None) -> ProfileTable:
    table = ProfileTable(list(SWEEP_COLUMNS), meta={
        "benchmark": "low-rank map", "config": asdict(cfg),
        "sweep_param": "rank r", "x": "X (source)", "y": "Y = X B^T + noise"})
    gx = None
    for i, r in enumerate(cfg.ranks):
        x, y = gen_rank_pair(cfg.p, cfg.n, r, cfg.sigma, cfg.seed)
        gx = gx or Geometry(x.data)
        res = compare(gx, y, k=cfg.k, n_resamples=cfg.n_resamples, seed=cfg.seed)
        table.append(_row(r, res, cfg.n, cfg.p, cfg.sigma, cfg.seed))
        if progress:
            progress(i, r)
    return table


def run_subset_sweep(cfg: SubsetSweepConfig, progress=None) -> ProfileTable:
    table = ProfileTable(list(SWEEP_COLUMNS), meta={
        "benchmark": "feature subset", "config": asdict(cfg),
        "sweep_param": "fraction of features", "x": "full vector", "y": "leading subset",
        "heuristic_direction": "ii_xy (full -> subset); ii_yx reported alongside",
        "n_features": [subset_size(cfg.p, f) for f in cfg.fractions]})
    gfull = None
    for i, f in enumerate(cfg.fractions):
        full, sub = gen_subset_pair(cfg.p, cfg.n, f, cfg.seed)
        gfull = gfull or Geometry(full.data)
        res = compare(gfull, sub, k=cfg.k, n_resamples=cfg.n_resamples, seed=cfg.seed)
        table.append(_row(f, res, cfg.n, cfg.p, None, cfg.seed))
        if progress:
            progress(i, f)
    return table
