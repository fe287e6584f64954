"""Command-line entry point.

Exit status: 0 on success, 1 on a data or runtime error, 2 on bad usage.
Every run writes ``run_config.json`` next to its tables; it holds the
argument vector and the resolved settings needed to repeat the run.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from pathlib import Path

from . import __version__
from ._parallel import num_threads
from .metrics import DEFAULT_K, MetricError
from .pipeline import (
    MODES,
    AggregationSpec,
    PipelineError,
    asymmetry_profile,
    cross_model_profile,
    layer_profile,
    shuffle_null,
    tau_table,
    token_tau_profile,
)
from .svgplot import line_chart
from .synthbench import (
    ConfigError,
    RankSweepConfig,
    SubsetSweepConfig,
    run_rank_sweep,
    run_subset_sweep,
)
from .tensorio import (
    TensorIOError,
    PairManifest,
    load_manifest,
    load_store,
    validate_manifest,
    write_manifest,
)

log = logging.getLogger("infoimbalance")


def _int_list(text: str) -> list[int]:
    items = [t for t in text.replace(",", " ").split() if t]
    if not items:
        raise argparse.ArgumentTypeError("empty list")
    try:
        return [int(t) for t in items]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a list of integers: {text!r}") from None


def _float_list(text: str) -> list[float]:
    items = [t for t in text.replace(",", " ").split() if t]
    if not items:
        raise argparse.ArgumentTypeError("empty list")
    try:
        return [float(t) for t in items]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a list of numbers: {text!r}") from None


def _depth_pairs(text: str) -> list[tuple[int, int]]:
    try:
        pairs = [tuple(int(v) for v in item.split(":")) for item in text.split(",") if item]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected l1:l2,l1:l2,... got {text!r}") from None
    if not pairs or any(len(p) != 2 for p in pairs):
        raise argparse.ArgumentTypeError(f"expected l1:l2,l1:l2,... got {text!r}")
    return pairs


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("common options")
    g.add_argument("--seed", type=int, default=0, help="seed for data and resampling (default 0)")
    g.add_argument("--out", type=Path, default=Path("."), help="output directory")
    g.add_argument("--threads", type=int, default=0,
                   help="worker/BLAS thread cap; 0 uses all cores (results do not depend on it)")
    g.add_argument("--k", type=int, default=DEFAULT_K, help="neighborhood size for NO")
    g.add_argument("--T", type=int, default=20, help="tokens aggregated per sample")
    g.add_argument("--drop-trailing", type=int, default=2, help="trailing tokens to ignore")
    g.add_argument("--resamples", type=int, default=None,
                   help="half-sample resamples (default 10 for synth-*, 5 otherwise)")
    g.add_argument("--plot", action="store_true", help="also write an SVG line chart")
    g.add_argument("-v", "--verbose", action="store_true")
    return p


def _profile_inputs(p: argparse.ArgumentParser, right: bool = True) -> None:
    p.add_argument("--left", type=Path, required=True, help="left activation store")
    if right:
        p.add_argument("--right", type=Path, help="right activation store (default: --left)")
    p.add_argument("--manifest", type=Path, required=True, help="pair manifest JSON")
    p.add_argument("--mode", choices=MODES, default="mean_last_T", help="token aggregation")
    p.add_argument("--metrics", default="ii", help="comma list of ii, cka, no, asymmetry")


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="infoimbalance", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-rank", parents=[common], help="low-rank Gaussian map sweep")
    p.add_argument("--p", type=int, default=10)
    p.add_argument("--n", type=int, default=2500)
    p.add_argument("--sigma", type=float, default=0.1)
    p.add_argument("--ranks", type=_int_list, default=None, help="ranks to sweep (default 1..p)")

    p = sub.add_parser("synth-subset", parents=[common], help="feature-subset Gaussian sweep")
    p.add_argument("--p", type=int, default=100)
    p.add_argument("--n", type=int, default=2500)
    p.add_argument("--fractions", type=_float_list, default=None,
                   help="ascending fractions in (0, 1]")

    p = sub.add_parser("profile", parents=[common], help="same-model layer profile")
    _profile_inputs(p)
    p.add_argument("--layers", type=_int_list, default=None)
    p.add_argument("--shuffle-null", action="store_true",
                   help="also profile a batch-shuffled copy of the manifest")

    p = sub.add_parser("cross-profile", parents=[common], help="cross-model relative-depth profile")
    _profile_inputs(p)
    p.add_argument("--depth-pairs", type=_depth_pairs, default=None,
                   help="explicit layer matching, e.g. 0:0,1:2")

    p = sub.add_parser("asymmetry", parents=[common], help="II asymmetry profile")
    _profile_inputs(p)
    p.add_argument("--cross-model", action="store_true", help="match layers by relative depth")

    p = sub.add_parser("token-tau", parents=[common], help="last-token to token-at-offset II")
    p.add_argument("--store", type=Path, required=True)
    p.add_argument("--layers", type=_int_list, default=None)
    p.add_argument("--taus", type=_int_list, default=[1, 2, 3, 5, 8, 13, 21])
    p.add_argument("--reverse", action="store_true", help="previous token -> last token")
    p.add_argument("--logx", action="store_true", help="log-scaled tau axis in the plot")

    p = sub.add_parser("shuffle-null", parents=[common], help="write a misaligned manifest")
    p.add_argument("--manifest", type=Path, required=True)

    p = sub.add_parser("validate-store", parents=[common], help="check a store (and manifest)")
    p.add_argument("--store", type=Path, required=True)
    p.add_argument("--right", type=Path, default=None, help="right store for --manifest")
    p.add_argument("--manifest", type=Path, default=None)
    return parser


def _check_args(parser, args) -> None:
    for name in ("left", "right", "manifest", "store"):
        path = getattr(args, name, None)
        if path is not None and not Path(path).is_file():
            parser.error(f"--{name}: no such file: {path}")
    if args.k < 1:
        parser.error("--k must be >= 1")
    if args.T < 1:
        parser.error("--T must be >= 1")
    if args.drop_trailing < 0:
        parser.error("--drop-trailing must be >= 0")
    if args.resamples is not None and args.resamples != 0 and args.resamples < 2:
        parser.error("--resamples must be 0 or >= 2")
    if args.command == "synth-rank":
        if args.p < 1 or args.n < 3:
            parser.error("need --p >= 1 and --n >= 3")
        if args.ranks and any(not 1 <= r <= args.p for r in args.ranks):
            parser.error(f"--ranks must lie in 1..{args.p}")
        if args.sigma < 0:
            parser.error("--sigma must be >= 0")
    if args.command == "synth-subset":
        if args.p < 1 or args.n < 3:
            parser.error("need --p >= 1 and --n >= 3")
        if args.fractions is not None:
            if any(not 0.0 < f <= 1.0 for f in args.fractions):
                parser.error("--fractions must lie in (0, 1]")
            if args.fractions != sorted(args.fractions):
                parser.error("--fractions must be ascending")
    if getattr(args, "metrics", None) is not None:
        metrics = [m for m in args.metrics.split(",") if m]
        bad = [m for m in metrics if m not in ("ii", "cka", "no", "asymmetry")]
        if bad or not metrics:
            parser.error(f"--metrics: unknown {bad or 'empty list'}")
        args.metrics = metrics


def _run_config(args, argv) -> dict:
    cfg = {"version": __version__, "argv": list(argv)}
    for key, value in sorted(vars(args).items()):
        cfg[key] = str(value) if isinstance(value, Path) else value
    return cfg


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2) + "\n", encoding="utf-8")


def _emit(table, stem: str, args, config: dict, plot=None) -> None:
    table.meta["run_config"] = config
    csv_path, json_path = table.write(args.out / stem)
    log.info("wrote %s and %s", csv_path, json_path)
    if args.plot and plot is not None:
        svg = args.out / f"{stem}.svg"
        svg.write_text(plot(table), encoding="utf-8")
        log.info("wrote %s", svg)


def _sweep_plot(title, xlabel, logx=False):
    def plot(table):
        xs = table.column("sweep_param")
        series = [(name, xs, table.column(col)) for name, col in
                  (("II x->y", "ii_xy"), ("II y->x", "ii_yx"), ("CKA", "cka"), ("NO", "no"))]
        return line_chart(series, title=title, xlabel=xlabel, ylabel="value", logx=logx)
    return plot


def _layer_plot(title):
    def plot(table):
        keys = list(dict.fromkeys((r["metric"], r["direction"]) for r in table.rows))
        series = []
        for metric, direction in keys:
            rows = [r for r in table.rows if r["metric"] == metric and r["direction"] == direction]
            series.append((f"{metric} {direction}", [r["relative_depth"] for r in rows],
                           [r["value"] for r in rows]))
        return line_chart(series, title=title, xlabel="relative depth", ylabel="value")
    return plot


def _tau_plot(logx):
    def plot(table):
        layers = list(dict.fromkeys(r["layer"] for r in table.rows))
        series = []
        for layer in layers:
            rows = [r for r in table.rows if r["layer"] == layer]
            series.append((f"layer {layer}", [r["tau"] for r in rows], [r["value"] for r in rows]))
        return line_chart(series, title="token-token II", xlabel="tau", ylabel="II", logx=logx)
    return plot


def _resamples(args, default: int) -> int:
    return default if args.resamples is None else args.resamples


def _spec(args) -> AggregationSpec:
    return AggregationSpec(args.mode, args.T, args.drop_trailing)


def _stores(args):
    xs = load_store(args.left)
    ys = xs if args.right is None or args.right == args.left else load_store(args.right)
    manifest = load_manifest(args.manifest)
    return xs, ys, manifest


def cmd_synth_rank(args, config) -> int:
    cfg = RankSweepConfig(p=args.p, n=args.n, sigma=args.sigma, ranks=args.ranks,
                          seed=args.seed, n_resamples=_resamples(args, 10), k=args.k)
    table = run_rank_sweep(cfg, progress=lambda i, r: log.info("rank %d done", r))
    _emit(table, "rank_sweep", args, config,
          _sweep_plot(f"low-rank map, p={cfg.p}, n={cfg.n}", "rank r"))
    return 0


def cmd_synth_subset(args, config) -> int:
    kwargs = {} if args.fractions is None else {"fractions": args.fractions}
    cfg = SubsetSweepConfig(p=args.p, n=args.n, seed=args.seed,
                            n_resamples=_resamples(args, 10), k=args.k, **kwargs)
    table = run_subset_sweep(cfg, progress=lambda i, f: log.info("fraction %g done", f))
    _emit(table, "subset_sweep", args, config,
          _sweep_plot(f"feature subset, p={cfg.p}, n={cfg.n}", "fraction of features",
                      logx=True))
    return 0


def cmd_profile(args, config) -> int:
    xs, ys, manifest = _stores(args)
    kw = dict(layers=args.layers, k=args.k, n_resamples=_resamples(args, 5), seed=args.seed)
    prof = layer_profile(xs, ys, manifest, _spec(args), args.metrics, **kw)
    _emit(prof.table(), "layer_profile", args, config, _layer_plot(f"{xs.model} vs {ys.model}"))
    if args.shuffle_null:
        null = shuffle_null(manifest, args.seed)
        prof = layer_profile(xs, ys, null, _spec(args), args.metrics, **kw)
        table = prof.table()
        table.meta["control"] = "batch-shuffled manifest"
        _emit(table, "layer_profile_shuffled", args, config, _layer_plot("shuffled pairs"))
    return 0


def cmd_cross_profile(args, config) -> int:
    xs, ys, manifest = _stores(args)
    prof = cross_model_profile(xs, ys, manifest, _spec(args), args.depth_pairs, args.metrics,
                               k=args.k, n_resamples=_resamples(args, 5), seed=args.seed)
    _emit(prof.table(), "cross_profile", args, config, _layer_plot(f"{xs.model} vs {ys.model}"))
    return 0


def cmd_asymmetry(args, config) -> int:
    xs, ys, manifest = _stores(args)
    prof = asymmetry_profile(xs, ys, manifest, _spec(args), cross_model=args.cross_model,
                             k=args.k, n_resamples=_resamples(args, 5), seed=args.seed)
    _emit(prof.table(), "asymmetry_profile", args, config, _layer_plot("II asymmetry"))
    return 0


def cmd_token_tau(args, config) -> int:
    store = load_store(args.store)
    layers = store.layers if args.layers is None else args.layers
    with warnings.catch_warnings():
        # omitted offsets are logged below from the table metadata
        warnings.simplefilter("ignore")
        profiles = token_tau_profile(store, layers, args.taus, args.drop_trailing,
                                     n_resamples=_resamples(args, 5), seed=args.seed,
                                     reverse=args.reverse)
    table = tau_table(profiles, {"model": store.model,
                                 "direction": "previous->last" if args.reverse else "last->previous"})
    for item in table.meta["omitted"]:
        log.warning("layer %d tau %d omitted: %s", item["layer"], item["tau"], item["reason"])
    _emit(table, "token_tau", args, config, _tau_plot(args.logx))
    return 0


def cmd_shuffle_null(args, config) -> int:
    manifest = load_manifest(args.manifest)
    shuffled = shuffle_null(manifest, args.seed)
    path = args.out / "manifest_shuffled.json"
    write_manifest(shuffled, path)
    log.info("wrote %s", path)
    return 0


def cmd_validate_store(args, config) -> int:
    store = load_store(args.store)
    tokens = [store.tokens(s, l) for s, l in store.keys()]
    summary = {
        "path": str(args.store), "model": store.model, "n_layers": store.n_layers,
        "dim": store.dim, "records": len(store), "samples": len(store.sample_ids),
        "layers": store.layers,
        "tokens_min": min(tokens) if tokens else None,
        "tokens_max": max(tokens) if tokens else None,
    }
    if args.manifest is not None:
        manifest = load_manifest(args.manifest)
        right = store if args.right is None else load_store(args.right)
        validate_manifest(manifest, store, right)
        summary["manifest_pairs"] = len(manifest)
    _write_json(args.out / "store_summary.json", {**summary, "run_config": config})
    print(json.dumps(summary))
    return 0


COMMANDS = {
    "synth-rank": cmd_synth_rank,
    "synth-subset": cmd_synth_subset,
    "profile": cmd_profile,
    "cross-profile": cmd_cross_profile,
    "asymmetry": cmd_asymmetry,
    "token-tau": cmd_token_tau,
    "shuffle-null": cmd_shuffle_null,
    "validate-store": cmd_validate_store,
}


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _check_args(parser, args)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    config = _run_config(args, argv)
    try:
        args.out.mkdir(parents=True, exist_ok=True)
        _write_json(args.out / "run_config.json", config)
        with num_threads(args.threads):
            return COMMANDS[args.command](args, config)
    except (TensorIOError, MetricError, PipelineError, ConfigError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
