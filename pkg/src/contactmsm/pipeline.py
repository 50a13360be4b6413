"""Bootstrap implied-timescale analysis, dimension scans and component visualization.

One bootstrap replicate runs: resample whole trajectories -> fit the projector
on the resample -> project -> mini-batch k-means -> MSM at every lag. Replicate
``i`` uses seed ``cfg.seed ^ i`` for every random step, so replicates are
independent tasks and results do not depend on how they are scheduled.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from . import discretize, msm, projectors
from .autoencoder import AeHyper, AeParams, ae_train
from .featurize import n_pair_features, upper_triangle
from .matrixio import TrajectorySet, as_matrix, write_csv_matrix

log = logging.getLogger(__name__)

METHODS = ("ktri", "pca", "tica", "ae", "none")
FAILED = "failed"


@dataclass(frozen=True)
class RunConfig:
    method: str = "pca"
    dims: int = 2
    lags: tuple = (1,)
    n_clusters: int = 1000
    fraction: float = 1.0
    n_bootstrap: int = 20
    seed: int = 0
    n_timescales: int = 1
    frame_interval: float = 1.0
    tica_lag: int | None = None  # defaults to the smallest MSM lag
    batch_size: int = discretize.DEFAULT_BATCH_SIZE
    kmeans_iterations: int | None = None
    ae_lambda: float = 0.003
    ae_rho: float = 0.0
    ae_beta: float = 3.0
    ae_epochs: int = 400
    tol: float = 1e-10
    max_iter: int = 100_000
    # paths are bookkeeping only and never enter the config hash
    input: str | None = field(default=None, compare=False)
    output: str | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "lags", tuple(int(l) for l in self.lags))
        self.validate()

    def validate(self) -> None:
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.method != "none" and self.dims < 1:
            raise ValueError("dims must be at least 1")
        if not self.lags or min(self.lags) < 1:
            raise ValueError("lags must be a nonempty list of positive integers")
        if self.n_clusters < 1:
            raise ValueError("n_clusters must be at least 1")
        if not 0 < self.fraction <= 1:
            raise ValueError("bootstrap fraction must be in (0, 1]")
        if self.n_bootstrap < 1:
            raise ValueError("n_bootstrap must be at least 1")
        if self.n_timescales < 1:
            raise ValueError("n_timescales must be at least 1")
        if self.frame_interval <= 0:
            raise ValueError("frame_interval must be positive")
        if self.tica_lag is not None and self.tica_lag < 1:
            raise ValueError("tica_lag must be at least 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        AeHyper(self.ae_lambda, self.ae_rho, self.ae_beta, self.ae_epochs)

    @property
    def effective_tica_lag(self) -> int:
        return self.tica_lag if self.tica_lag is not None else min(self.lags)

    def config_hash(self) -> str:
        d = asdict(self)
        d.pop("input")
        d.pop("output")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def replicate_seed(seed: int, replicate: int) -> int:
    return seed ^ replicate


def bootstrap_indices(n_traj: int, fraction: float, seed: int) -> np.ndarray:
    """Indices of ceil(fraction * n_traj) trajectories drawn with replacement."""
    if n_traj < 1:
        raise ValueError("cannot resample an empty trajectory set")
    if not 0 < fraction <= 1:
        raise ValueError("fraction must be in (0, 1]")
    n = math.ceil(round(fraction * n_traj, 9))
    return np.random.default_rng(seed).integers(0, n_traj, size=n)


def bootstrap_sample(trajs: TrajectorySet, fraction: float, seed: int) -> TrajectorySet:
    """Resample whole trajectories, keeping the time correlation inside each."""
    idx = bootstrap_indices(len(trajs), fraction, seed)
    return TrajectorySet(tuple(trajs[i] for i in idx), trajs.frame_interval)


def fit_projection(trajs: TrajectorySet, cfg: RunConfig, seed: int):
    """Fit the configured projector; ``None`` for method ``none``."""
    if cfg.method == "none":
        return None
    x = trajs.concatenated()
    if cfg.method == "pca":
        return projectors.pca_fit(x)
    if cfg.method == "tica":
        return projectors.tica_fit(trajs, cfg.effective_tica_lag)
    if cfg.method == "ktri":
        return projectors.ktri_fit(x, cfg.dims, seed=seed, batch_size=cfg.batch_size)
    hyper = AeHyper(cfg.ae_lambda, cfg.ae_rho, cfg.ae_beta, cfg.ae_epochs, seed)
    return ae_train(x, cfg.dims, hyper)


def project(model, trajs: TrajectorySet, dims: int | None) -> TrajectorySet:
    if model is None:
        return trajs
    if isinstance(model, AeParams):
        return trajs.map(model.transform)
    return trajs.map(lambda t: model.transform(t, dims))


@dataclass
class ReplicateResult:
    replicate: int
    seed: int
    indices: np.ndarray
    model: object
    clusters: discretize.ClusterModel
    dtrajs: msm.DiscreteTrajectorySet
    table: msm.TimescaleTable


def run_replicate(trajs: TrajectorySet, cfg: RunConfig, replicate: int) -> ReplicateResult:
    """One bootstrap replicate, keeping every intermediate product."""
    seed = replicate_seed(cfg.seed, replicate)
    idx = bootstrap_indices(len(trajs), cfg.fraction, seed)
    sample = TrajectorySet(tuple(trajs[i] for i in idx), trajs.frame_interval)
    model = fit_projection(sample, cfg, seed)
    projected = project(model, sample, cfg.dims)
    clusters = discretize.minibatch_kmeans(projected.concatenated(), cfg.n_clusters,
                                           batch_size=cfg.batch_size,
                                           iterations=cfg.kmeans_iterations, seed=seed)
    dtrajs = discretize.assign(clusters, projected)
    table = msm.its_scan(dtrajs, cfg.lags, cfg.n_timescales, cfg.frame_interval,
                         cfg.tol, cfg.max_iter, replicate=replicate, seed=seed)
    return ReplicateResult(replicate, seed, idx, model, clusters, dtrajs, table)


def _replicate_entries(trajs: TrajectorySet, cfg: RunConfig, replicate: int) -> list:
    with threadpool_limits(limits=1):
        try:
            return run_replicate(trajs, cfg, replicate).table.entries
        except Exception as exc:  # record-and-continue: one bad replicate must not sink the run
            log.warning("replicate %d failed: %s", replicate, exc)
            seed = replicate_seed(cfg.seed, replicate)
            return [msm.TimescaleEntry(lag, replicate, k + 1, float("nan"), cfg.frame_interval, False,
                                       f"{FAILED}: {type(exc).__name__}: {exc}", seed)
                    for lag in cfg.lags for k in range(cfg.n_timescales)]


_WORKER: dict = {}


def _init_worker(trajs, cfg):
    _WORKER["trajs"], _WORKER["cfg"] = trajs, cfg


def _worker_task(replicate: int) -> list:
    return _replicate_entries(_WORKER["trajs"], _WORKER["cfg"], replicate)


def run_its_bootstrap(trajs: TrajectorySet, cfg: RunConfig, threads: int = 1) -> msm.TimescaleTable:
    """Slowest implied timescales for ``cfg.n_bootstrap`` replicates at every lag.

    With ``threads > 1`` replicates run in worker processes; the result is
    identical to the sequential run.
    """
    if threads < 1:
        raise ValueError("threads must be at least 1")
    reps = range(cfg.n_bootstrap)
    if threads == 1 or cfg.n_bootstrap == 1:
        chunks = [_replicate_entries(trajs, cfg, r) for r in reps]
    else:
        with ProcessPoolExecutor(max_workers=threads, initializer=_init_worker,
                                 initargs=(trajs, cfg)) as pool:
            chunks = list(pool.map(_worker_task, reps))
    table = msm.TimescaleTable(list(cfg.lags), cfg.frame_interval)
    for chunk in chunks:
        table.entries.extend(chunk)
    table.entries.sort(key=lambda e: (e.lag, e.replicate, e.index))
    return table


def dimension_scan(trajs: TrajectorySet, cfg: RunConfig, dims_list: Sequence[int],
                   threads: int = 1) -> dict[int, msm.TimescaleTable]:
    """``run_its_bootstrap`` for each dimensionality, keyed by dims."""
    dims_list = [int(d) for d in dims_list]
    if not dims_list:
        raise ValueError("need at least one dims value")
    return {d: run_its_bootstrap(trajs, replace(cfg, dims=d), threads) for d in sorted(set(dims_list))}


# --- tables -------------------------------------------------------------------

ITS_COLUMNS = ["lag_frames", "lag_physical", "replicate", "timescale_index", "timescale_physical",
               "converged_flag", "status"]


def _fmt(v: float) -> str:
    return repr(float(v))


def its_rows(table: msm.TimescaleTable, extra: dict | None = None,
             with_seed: bool = False) -> tuple[list, list]:
    """Header and rows, one row per (lag, replicate, timescale index).

    ``extra`` columns (e.g. dims, config hash) are appended to every row.
    """
    extra = extra or {}
    header = ITS_COLUMNS + (["replicate_seed"] if with_seed else []) + list(extra)
    rows = []
    for e in table.entries:
        row = [e.lag, _fmt(e.lag * table.frame_interval), e.replicate, e.index,
               _fmt(e.timescale_physical), int(e.converged), e.status]
        if with_seed:
            row.append("" if e.seed is None else e.seed)
        rows.append(row + list(extra.values()))
    return header, rows


def summary_rows(table: msm.TimescaleTable, extra: dict | None = None) -> tuple[list, list]:
    """Per-lag mean and sample standard deviation (ddof=1) over successful replicates."""
    extra = extra or {}
    header = ["lag_frames", "lag_physical", "n_success", "n_replicates",
              "mean_timescale_physical", "sd_timescale_physical_ddof1"] + list(extra)
    rows = [[s["lag_frames"], _fmt(s["lag_physical"]), s["n_success"], s["n_replicates"],
             _fmt(s["mean"]), _fmt(s["std_ddof1"])] + list(extra.values())
            for s in table.summary()]
    return header, rows


def write_csv(path, header: list, rows: list) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def write_its_csv(table: msm.TimescaleTable, path, extra: dict | None = None,
                  with_seed: bool = False) -> None:
    write_csv(path, *its_rows(table, extra, with_seed))


def write_summary_csv(table: msm.TimescaleTable, path, extra: dict | None = None) -> None:
    write_csv(path, *summary_rows(table, extra))


# --- component images ---------------------------------------------------------


@dataclass(frozen=True)
class ComponentImage:
    n_res: int
    matrix: np.ndarray


def fold_component(vec, n_res: int) -> ComponentImage:
    """Inverse of the row-major upper-triangle flattening, mirrored, zero diagonal."""
    v = np.asarray(vec, dtype=np.float64).ravel()
    if v.size != n_pair_features(n_res):
        raise ValueError(f"vector length {v.size} does not match n_res={n_res} "
                         f"({n_pair_features(n_res)} pairs)")
    m = np.zeros((n_res, n_res))
    i, j = np.triu_indices(n_res, k=1)
    m[i, j] = v
    m[j, i] = v
    return ComponentImage(n_res, m)


def flatten_component(img: ComponentImage) -> np.ndarray:
    return upper_triangle(img.matrix)


def diverging_rgb(m: np.ndarray) -> np.ndarray:
    """Blue-white-red colors scaled by max |entry|; rounding is half-up."""
    m = as_matrix(m)
    peak = np.max(np.abs(m)) if m.size else 0.0
    s = m / peak if peak > 0 else np.zeros_like(m)
    fade = np.floor(255.0 * (1.0 - np.abs(s)) + 0.5).astype(int)
    rgb = np.full(m.shape + (3,), 255, dtype=int)
    pos, neg = s > 0, s < 0
    rgb[pos, 1] = fade[pos]
    rgb[pos, 2] = fade[pos]
    rgb[neg, 0] = fade[neg]
    rgb[neg, 1] = fade[neg]
    return rgb


def export_component_image(img: ComponentImage, path) -> None:
    """Write a plain-text P3 pixmap and the raw matrix as CSV next to it."""
    rgb = diverging_rgb(img.matrix)
    h, w, _ = rgb.shape
    lines = ["P3", f"{w} {h}", "255"]
    lines += [" ".join(f"{r} {g} {b}" for r, g, b in row) for row in rgb]
    path = Path(path)
    path.write_text("\n".join(lines) + "\n", encoding="ascii")
    write_csv_matrix(img.matrix, path.with_suffix(".csv"))


def component_vectors(model) -> list[np.ndarray]:
    """Learned feature-space vectors: cluster centers, PCA/tICA components or encoder weights."""
    if isinstance(model, projectors.KTriModel):
        return list(model.centers)
    if isinstance(model, (projectors.PcaModel, projectors.TicaModel)):
        return list(model.components.T)
    if isinstance(model, AeParams):
        return list(model.W1)
    raise TypeError(f"no component vectors for {type(model).__name__}")


def extreme_frames(projected: TrajectorySet, dim: int) -> tuple[tuple[int, int], tuple[int, int]]:
    """Global (traj, frame) positions of the largest and smallest value in column ``dim``.

    Ties go to the lowest (traj, frame).
    """
    if len(projected) == 0 or projected.n_frames == 0:
        raise ValueError("no frames")
    if not 0 <= dim < projected.n_features:
        raise ValueError(f"dim {dim} outside [0, {projected.n_features})")
    best_max = best_min = None
    for ti, t in enumerate(projected):
        col = t[:, dim]
        imax, imin = int(np.argmax(col)), int(np.argmin(col))
        if best_max is None or col[imax] > best_max[0]:
            best_max = (col[imax], ti, imax)
        if best_min is None or col[imin] < best_min[0]:
            best_min = (col[imin], ti, imin)
    return (best_max[1], best_max[2]), (best_min[1], best_min[2])
