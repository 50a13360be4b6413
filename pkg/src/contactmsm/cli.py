"""Command-line interface.

Every subcommand accepts ``--seed``, ``--threads`` and ``--config FILE``. The
config file holds ``key = value`` lines whose keys are long option names
(``n-bootstrap`` or ``n_bootstrap``); options given on the command line win.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import discretize, featurize, matrixio, msm, pipeline, projectors, synth
from .autoencoder import AeHyper, AeParams, ae_train

log = logging.getLogger("contactmsm")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _require(args, *names):
    missing = [n for n in names if getattr(args, n, None) in (None, "")]
    if missing:
        raise UsageError("missing required option(s): " + ", ".join("--" + m.replace("_", "-") for m in missing))


def _int_list(text):
    try:
        vals = matrixio.parse_int_list(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


# --- subcommands --------------------------------------------------------------


def cmd_featurize(args):
    _require(args, "input", "output")
    cfg = featurize.ContactConfig(args.cutoff, args.mode)
    raw = matrixio.read_trajectory_set(args.input)
    labels_path = Path(args.labels) if args.labels else Path(args.input, featurize.LABELS_FILE)
    labels = featurize.read_labels(labels_path) if labels_path.exists() else None
    if cfg.mode == featurize.LIGAND and labels is None:
        raise ValueError(f"ligand mode needs role labels ({labels_path})")
    feats = featurize.featurize_trajectory_set(raw, cfg, labels)
    matrixio.write_trajectory_set(feats, args.output, dtype="u8")
    print(f"{len(feats)} trajectories, {feats.n_frames} frames, {feats.n_features} features -> {args.output}")


def cmd_synth(args):
    _require(args, "spec", "output")
    out = Path(args.output)
    if args.kind == "hmm":
        spec = synth.load_hmm_spec(args.spec)
        hidden, feats = synth.gen_hmm(spec)
        matrixio.write_trajectory_set(feats, out / "features", dtype="u8")
        msm.write_dtrajs(hidden, out / "hidden")
        ts = synth.analytic_timescales(spec.T_true)
        print(f"hmm: {len(feats)} x {spec.traj_len} frames; analytic slowest timescale {ts[0]:.6g} frames")
    else:
        spec = synth.load_ar1_spec(args.spec)
        matrixio.write_trajectory_set(synth.gen_ar1(spec), out)
        print(f"ar1: {spec.n_traj} x {spec.n_frames} frames -> {out}")


def cmd_fit(args):
    _require(args, "method", "input", "model")
    trajs = matrixio.read_trajectory_set(args.input)
    x = trajs.concatenated()
    if args.method == "pca":
        model = projectors.pca_fit(x)
    elif args.method == "tica":
        _require(args, "lag")
        model = projectors.tica_fit(trajs, args.lag)
    elif args.method == "ktri":
        _require(args, "dims")
        model = projectors.ktri_fit(x, args.dims, seed=args.seed, batch_size=args.batch_size)
    else:
        _require(args, "dims")
        hyper = AeHyper(args.ae_lambda, args.rho, args.beta, args.epochs, args.seed)
        model = ae_train(x, args.dims, hyper)
    projectors.save_model(model, args.model)
    print(f"{args.method} model -> {args.model}")


def cmd_project(args):
    _require(args, "model", "input", "output")
    model = projectors.load_model(args.model)
    trajs = matrixio.read_trajectory_set(args.input)
    out = pipeline.project(model, trajs, args.dims)
    if args.dims is not None and isinstance(model, AeParams):
        out = out.map(lambda t: t[:, :args.dims])
    matrixio.write_trajectory_set(out, args.output)
    print(f"{out.n_frames} frames x {out.n_features} dims -> {args.output}")


def cmd_cluster(args):
    _require(args, "input", "output")
    trajs = matrixio.read_trajectory_set(args.input)
    cm = discretize.minibatch_kmeans(trajs.concatenated(), args.k, batch_size=args.batch_size,
                                     iterations=args.iterations, seed=args.seed)
    if args.model:
        d = Path(args.model)
        d.mkdir(parents=True, exist_ok=True)
        matrixio.write_matrix(cm.centers, d / "centers.mdrx")
        matrixio.write_matrix(cm.counts_per_center[None, :].astype(float), d / "counts.mdrx")
        matrixio.write_manifest(d, ["centers.mdrx", "counts.mdrx"])
        matrixio.write_key_values(d / "meta.txt", {
            "method": "kmeans", "k": args.k, "batch_size": args.batch_size,
            "iterations": args.iterations or discretize.default_iterations(args.k, args.batch_size),
            "seed": args.seed, "reseeded": int(cm.reseeded.sum())})
    msm.write_dtrajs(discretize.assign(cm, trajs), args.output)
    print(f"{args.k} clusters; discrete trajectories -> {args.output}")


def cmd_msm(args):
    _require(args, "input", "output", "lags")
    dtrajs = msm.read_dtrajs(args.input, args.n_states)
    table = msm.its_scan(dtrajs, args.lags, args.k, args.frame_interval, args.tol)
    pipeline.write_its_csv(table, args.output)
    for s in table.summary():
        print(f"lag {s['lag_frames']}: slowest timescale {s['mean']:.6g}")


def _run_config(args, dims=None) -> pipeline.RunConfig:
    try:
        return pipeline.RunConfig(
            method=args.method, dims=args.dims if dims is None else dims, lags=tuple(args.lags),
            n_clusters=args.clusters, fraction=args.fraction, n_bootstrap=args.n_bootstrap,
            seed=args.seed, n_timescales=args.timescales, frame_interval=args.frame_interval,
            tica_lag=args.tica_lag, batch_size=args.batch_size, kmeans_iterations=args.iterations,
            ae_lambda=args.ae_lambda, ae_rho=args.rho, ae_beta=args.beta, ae_epochs=args.epochs,
            tol=args.tol, input=args.input, output=args.output)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _summary_path(out: Path) -> Path:
    return out.with_name(out.stem + "_summary.csv")


def cmd_bootstrap_its(args):
    _require(args, "input", "output", "lags")
    cfg = _run_config(args)
    trajs = matrixio.read_trajectory_set(args.input, cfg.frame_interval)
    table = pipeline.run_its_bootstrap(trajs, cfg, args.threads)
    extra = {"dims": cfg.dims, "config_hash": cfg.config_hash()}
    out = Path(args.output)
    pipeline.write_its_csv(table, out, extra, with_seed=True)
    pipeline.write_summary_csv(table, _summary_path(out), extra)
    for s in table.summary():
        print(f"lag {s['lag_frames']}: mean {s['mean']:.6g}, sd(ddof=1) {s['std_ddof1']:.6g} "
              f"({s['n_success']}/{s['n_replicates']} replicates)")
    return _numeric_status(table)


def cmd_dim_scan(args):
    _require(args, "input", "output", "lags", "dims_list")
    cfg = _run_config(args, dims=args.dims_list[0])
    trajs = matrixio.read_trajectory_set(args.input, cfg.frame_interval)
    tables = pipeline.dimension_scan(trajs, cfg, args.dims_list, args.threads)
    out = Path(args.output)
    its, summary = [], []
    for dims, table in tables.items():
        extra = {"dims": dims, "config_hash": replace(cfg, dims=dims).config_hash()}
        header, rows = pipeline.its_rows(table, extra, with_seed=True)
        its.extend(rows)
        sheader, srows = pipeline.summary_rows(table, extra)
        summary.extend(srows)
        for row in table.summary():
            print(f"dims {dims} lag {row['lag_frames']}: mean {row['mean']:.6g}, sd {row['std_ddof1']:.6g}")
    pipeline.write_csv(out, header, its)
    pipeline.write_csv(_summary_path(out), sheader, summary)
    return max(_numeric_status(t) for t in tables.values())


def _numeric_status(table: msm.TimescaleTable) -> int:
    return EXIT_OK if any(e.ok for e in table.entries) else EXIT_NUMERIC


def cmd_viz_components(args):
    _require(args, "model", "n_res", "output")
    model = projectors.load_model(args.model)
    vecs = pipeline.component_vectors(model)
    if args.count:
        vecs = vecs[:args.count]
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    for i, v in enumerate(vecs):
        img = pipeline.fold_component(v, args.n_res)
        pipeline.export_component_image(img, out / f"component{i:03d}.ppm")
    print(f"{len(vecs)} component images -> {out}")


def cmd_extreme_frames(args):
    _require(args, "input", "dim")
    trajs = matrixio.read_trajectory_set(args.input)
    dims = range(trajs.n_features) if args.dim < 0 else [args.dim]
    print("dim,max_traj,max_frame,min_traj,min_frame")
    for d in dims:
        (at, af), (bt, bf) = pipeline.extreme_frames(trajs, d)
        print(f"{d},{at},{af},{bt},{bf}")


def cmd_variance(args):
    _require(args, "model")
    model = projectors.load_model(args.model)
    if not isinstance(model, (projectors.PcaModel, projectors.TicaModel)):
        raise UsageError("variance needs a PCA or tICA model")
    frac = projectors.cumulative_variance(model)
    n = projectors.dims_for_threshold(frac, args.threshold)
    print(f"{n} dimensions reach {args.threshold:g} of the cumulative variance")
    if args.output:
        matrixio.write_csv_matrix(frac[:, None], args.output)


# --- parser -------------------------------------------------------------------


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--config", help="key = value file; command-line options override it")
    p.add_argument("-v", "--verbose", action="count", default=0)
    return p


def _ae_options(p):
    p.add_argument("--epochs", type=int, default=400)
    p.add_argument("--lambda", dest="ae_lambda", type=float, default=0.003)
    p.add_argument("--beta", type=float, default=3.0)
    p.add_argument("--rho", type=float, default=0.0)


def _run_options(p):
    p.add_argument("--method", choices=pipeline.METHODS, default="pca")
    p.add_argument("--lags", type=_int_list)
    p.add_argument("--clusters", type=int, default=1000)
    p.add_argument("--fraction", type=float, default=1.0)
    p.add_argument("--n-bootstrap", type=int, default=20)
    p.add_argument("--timescales", type=int, default=1)
    p.add_argument("--frame-interval", type=float, default=1.0)
    p.add_argument("--tica-lag", type=int)
    p.add_argument("--batch-size", type=int, default=discretize.DEFAULT_BATCH_SIZE)
    p.add_argument("--iterations", type=int, help="mini-batches for k-means")
    p.add_argument("--tol", type=float, default=1e-10)
    _ae_options(p)
    p.add_argument("--in", dest="input")
    p.add_argument("--out", dest="output", help="per-replicate CSV; a _summary.csv is written alongside")


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = _Parser(prog="contactmsm", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("featurize", parents=[common], help="coordinates -> binary contact maps")
    p.add_argument("--mode", choices=[featurize.PROTEIN, featurize.LIGAND], default=featurize.PROTEIN)
    p.add_argument("--cutoff", type=float, default=8.0)
    p.add_argument("--labels", help="role labels file (default: <in>/labels.txt)")
    p.add_argument("--in", dest="input")
    p.add_argument("--out", dest="output")
    p.set_defaults(func=cmd_featurize)

    p = sub.add_parser("synth", parents=[common], help="generate synthetic trajectories")
    p.add_argument("kind", choices=["hmm", "ar1"])
    p.add_argument("--spec")
    p.add_argument("--out", dest="output")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("fit", parents=[common], help="fit a projection model")
    p.add_argument("--method", choices=["ktri", "pca", "tica", "ae"])
    p.add_argument("--dims", type=int)
    p.add_argument("--lag", type=int)
    p.add_argument("--batch-size", type=int, default=discretize.DEFAULT_BATCH_SIZE)
    _ae_options(p)
    p.add_argument("--in", dest="input")
    p.add_argument("--model")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("project", parents=[common], help="apply a fitted projection")
    p.add_argument("--model")
    p.add_argument("--dims", type=int)
    p.add_argument("--in", dest="input")
    p.add_argument("--out", dest="output")
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("cluster", parents=[common], help="mini-batch k-means discretization")
    p.add_argument("--k", type=int, default=1000)
    p.add_argument("--batch-size", type=int, default=discretize.DEFAULT_BATCH_SIZE)
    p.add_argument("--iterations", type=int)
    p.add_argument("--in", dest="input")
    p.add_argument("--model")
    p.add_argument("--out", dest="output")
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("msm", parents=[common], help="implied timescales from discrete trajectories")
    p.add_argument("--lags", type=_int_list)
    p.add_argument("--k", type=int, default=1, help="number of timescales")
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--n-states", type=int)
    p.add_argument("--frame-interval", type=float, default=1.0)
    p.add_argument("--in", dest="input")
    p.add_argument("--out", dest="output")
    p.set_defaults(func=cmd_msm)

    p = sub.add_parser("bootstrap-its", parents=[common], help="bootstrapped implied timescales")
    p.add_argument("--dims", type=int, default=2)
    _run_options(p)
    p.set_defaults(func=cmd_bootstrap_its)

    p = sub.add_parser("dim-scan", parents=[common], help="bootstrap-its over several dimensionalities")
    p.add_argument("--dims-list", type=_int_list)
    _run_options(p)
    p.set_defaults(func=cmd_dim_scan)

    p = sub.add_parser("viz-components", parents=[common], help="learned components as P3 images")
    p.add_argument("--model")
    p.add_argument("--n-res", type=int)
    p.add_argument("--count", type=int)
    p.add_argument("--out", dest="output")
    p.set_defaults(func=cmd_viz_components)

    p = sub.add_parser("extreme-frames", parents=[common], help="frames at the extremes of a projection")
    p.add_argument("--in", dest="input")
    p.add_argument("--dim", type=int, default=-1, help="column index (-1: every column)")
    p.set_defaults(func=cmd_extreme_frames)

    p = sub.add_parser("variance", parents=[common], help="dimensions needed for a variance fraction")
    p.add_argument("--model")
    p.add_argument("--threshold", type=float, default=0.95)
    p.add_argument("--out", dest="output", help="optional CSV of cumulative fractions")
    p.set_defaults(func=cmd_variance)
    parser.subcommands = dict(sub.choices)
    return parser


def parse_args(argv) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        raise UsageError("no subcommand given (see --help)")
    if args.config:
        sub = parser.subcommands[args.command]
        dests = {a.dest for a in sub._actions}
        values = matrixio.read_key_values(args.config)
        values = {("ae_lambda" if k == "lambda" else "input" if k == "in" else
                   "output" if k == "out" else k): v for k, v in values.items()}
        unknown = sorted(set(values) - dests)
        if unknown:
            raise UsageError(f"{args.config}: unknown keys {unknown}")
        values.pop("config", None)
        sub.set_defaults(**values)
        args = parser.parse_args(argv)
    return args


def main(argv=None) -> int:
    try:
        args = parse_args(sys.argv[1:] if argv is None else argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        print("--threads must be at least 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        rc = args.func(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (msm.EstimationError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, ValueError, KeyError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return rc or EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
