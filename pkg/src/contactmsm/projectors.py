"""Linear and clustering-based projections: k-means (triangle), PCA and tICA.

Every model exposes ``transform(data, d)`` returning frames x d features, and
can be stored as a directory of MDRX parts (see ``save_model``).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import discretize
from .autoencoder import AeParams
from .matrixio import (TrajectorySet, as_matrix, read_key_values, read_manifest, read_matrix,
                       write_key_values, write_manifest, write_matrix)

RANK_EPS = 1e-10


class IllConditionedWarning(UserWarning):
    pass


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    """Flip each column so that its largest-magnitude entry is positive."""
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def _check_dims(d: int, limit: int) -> None:
    if not 1 <= d <= limit:
        raise ValueError(f"dims must be in [1, {limit}], got {d}")


def _check_width(x: np.ndarray, n: int) -> None:
    if x.shape[1] != n:
        raise ValueError(f"data has {x.shape[1]} features, model expects {n}")


# --- k-means (triangle) -------------------------------------------------------


@dataclass(frozen=True)
class KTriModel:
    centers: np.ndarray

    method = "ktri"

    @property
    def K(self) -> int:
        return self.centers.shape[0]

    @property
    def n_features(self) -> int:
        return self.centers.shape[1]

    def transform(self, data, d: int | None = None) -> np.ndarray:
        out = ktri_transform(self, data)
        if d is not None:
            _check_dims(d, self.K)
            out = out[:, :d]
        return out


def ktri_fit(data, K: int, seed: int = 0, batch_size: int = discretize.DEFAULT_BATCH_SIZE,
             iterations: int | None = None) -> KTriModel:
    x = as_matrix(data)
    if x.shape[0] == 0:
        raise ValueError("cannot fit on empty data")
    if K < 1:
        raise ValueError("K must be at least 1")
    cm = discretize.minibatch_kmeans(x, K, batch_size=batch_size, iterations=iterations, seed=seed)
    return KTriModel(cm.centers)


def ktri_transform(model: KTriModel, data) -> np.ndarray:
    """Soft assignment max(0, mean_i(z) - z_i) with z_i the distance to center i."""
    x = as_matrix(data)
    _check_width(x, model.n_features)
    z = np.sqrt(discretize.squared_distances(x, model.centers))
    return np.maximum(0.0, z.mean(axis=1, keepdims=True) - z)


# --- PCA ----------------------------------------------------------------------


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray
    components: np.ndarray  # columns are principal axes
    eigenvalues: np.ndarray

    method = "pca"

    @property
    def n_features(self) -> int:
        return self.mean.shape[0]

    def transform(self, data, d: int | None = None) -> np.ndarray:
        return pca_transform(self, data, self.n_features if d is None else d)

    def inverse_transform(self, projected) -> np.ndarray:
        y = as_matrix(projected)
        return y @ self.components[:, :y.shape[1]].T + self.mean


def covariance(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = x.mean(axis=0)
    xc = x - mean
    return mean, xc.T @ xc / (x.shape[0] - 1)


def pca_fit(data) -> PcaModel:
    x = as_matrix(data)
    if x.shape[0] < 2:
        raise ValueError("PCA needs at least 2 frames")
    mean, cov = covariance(x)
    ev, vecs = np.linalg.eigh(cov)
    order = np.argsort(-ev, kind="stable")
    ev = np.clip(ev[order], 0.0, None)
    return PcaModel(mean, _fix_signs(vecs[:, order]), ev)


def pca_transform(model: PcaModel, data, d: int) -> np.ndarray:
    x = as_matrix(data)
    _check_width(x, model.n_features)
    _check_dims(d, model.n_features)
    return (x - model.mean) @ model.components[:, :d]


# --- tICA ---------------------------------------------------------------------


@dataclass(frozen=True)
class TicaModel:
    mean: np.ndarray
    lag: int
    components: np.ndarray  # n_features x r, C0-orthonormal columns
    eigenvalues: np.ndarray

    method = "tica"

    @property
    def n_features(self) -> int:
        return self.mean.shape[0]

    @property
    def rank(self) -> int:
        return self.components.shape[1]

    def transform(self, data, d: int | None = None) -> np.ndarray:
        return tica_transform(self, data, self.rank if d is None else d)


def _as_trajset(trajs) -> TrajectorySet:
    if isinstance(trajs, TrajectorySet):
        return trajs
    if isinstance(trajs, np.ndarray):
        return TrajectorySet((trajs,))
    return TrajectorySet(tuple(trajs))


def lagged_covariances(trajs: TrajectorySet, lag: int, mean: np.ndarray | None = None):
    """Instantaneous (per frame) and symmetrized time-lagged (per pair) covariances."""
    if mean is None:
        mean = trajs.concatenated().mean(axis=0)
    n = trajs.n_features
    c0 = np.zeros((n, n))
    ct = np.zeros((n, n))
    n_frames = n_pairs = 0
    for t in trajs:
        xc = t - mean
        c0 += xc.T @ xc
        ct += xc[:-lag].T @ xc[lag:]
        n_frames += xc.shape[0]
        n_pairs += xc.shape[0] - lag
    c0 /= n_frames
    ct = 0.5 * (ct + ct.T) / n_pairs
    return mean, c0, ct


def tica_fit(trajs, lag: int) -> TicaModel:
    """Solve C_tau v = lambda C_0 v on the numerically nonsingular subspace of C_0.

    The time-lagged covariance is symmetrized, so the spectrum is real and
    the model is unchanged when every trajectory is reversed in time.
    """
    ts = _as_trajset(trajs)
    if lag < 1:
        raise ValueError("lag must be at least 1")
    if min(ts.lengths) <= lag:
        raise ValueError(f"lag {lag} is not shorter than the shortest trajectory ({min(ts.lengths)} frames)")
    mean, c0, ct = lagged_covariances(ts, lag)

    s, u = np.linalg.eigh(c0)
    if s.max() <= 0:
        raise ValueError("instantaneous covariance has rank 0")
    keep = s > RANK_EPS * s.max()
    whiten = u[:, keep] / np.sqrt(s[keep])
    m = whiten.T @ ct @ whiten
    ev, v = np.linalg.eigh(0.5 * (m + m.T))
    order = np.argsort(-ev, kind="stable")
    ev, v = ev[order], v[:, order]
    if np.any(np.abs(ev) > 1.05):
        warnings.warn(f"tICA eigenvalue {ev[np.argmax(np.abs(ev))]:.4f} far outside [-1, 1]; "
                      "covariances are ill-conditioned", IllConditionedWarning, stacklevel=2)
    return TicaModel(mean, lag, _fix_signs(whiten @ v), np.clip(ev, -1.0, 1.0))


def tica_transform(model: TicaModel, data, d: int) -> np.ndarray:
    x = as_matrix(data)
    _check_width(x, model.n_features)
    _check_dims(d, model.rank)
    return (x - model.mean) @ model.components[:, :d]


# --- dimensionality heuristic -------------------------------------------------


def cumulative_variance(model_or_spectrum) -> np.ndarray:
    """Cumulative fraction of the spectrum; tICA uses eigenvalue magnitudes."""
    ev = getattr(model_or_spectrum, "eigenvalues", model_or_spectrum)
    w = np.abs(np.asarray(ev, dtype=np.float64).ravel())
    if w.size == 0:
        raise ValueError("empty spectrum")
    total = w.sum()
    if total <= 0:
        raise ValueError("spectrum is all zero")
    frac = np.minimum(np.cumsum(w) / total, 1.0)  # clipping keeps rounding from breaking monotonicity
    frac[-1] = 1.0
    return frac


def dims_for_threshold(fractions, q: float = 0.95) -> int:
    """Smallest N whose cumulative fraction reaches ``q``."""
    f = np.asarray(fractions, dtype=np.float64)
    if not 0 < q <= 1:
        raise ValueError("threshold must be in (0, 1]")
    # guard against the last entry rounding to just below 1
    hits = np.flatnonzero(f >= q - 1e-12)
    return int(hits[0]) + 1 if hits.size else f.size


# --- persistence --------------------------------------------------------------


def _model_parts(model) -> tuple[dict, dict]:
    if isinstance(model, KTriModel):
        return {"centers": model.centers}, {}
    if isinstance(model, PcaModel):
        return {"mean": model.mean, "components": model.components, "eigenvalues": model.eigenvalues}, {}
    if isinstance(model, TicaModel):
        return ({"mean": model.mean, "components": model.components, "eigenvalues": model.eigenvalues},
                {"lag": model.lag})
    if isinstance(model, AeParams):
        return {"W1": model.W1, "b1": model.b1, "W2": model.W2, "b2": model.b2}, {}
    raise TypeError(f"cannot save {type(model).__name__}")


def save_model(model, directory) -> None:
    """Write each model part as ``<name>.mdrx`` plus a manifest and ``meta.txt``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    parts, meta = _model_parts(model)
    names = []
    for name, arr in parts.items():
        write_matrix(np.atleast_2d(arr), d / f"{name}.mdrx")
        names.append(f"{name}.mdrx")
    write_manifest(d, names)
    write_key_values(d / "meta.txt", {"method": model.method, **meta})


def load_model(directory):
    d = Path(directory)
    meta = read_key_values(d / "meta.txt")
    parts = {Path(n).stem: read_matrix(d / n) for n in read_manifest(d)}
    method = meta.get("method")
    if method == "ktri":
        return KTriModel(parts["centers"])
    if method == "pca":
        return PcaModel(parts["mean"].ravel(), parts["components"], parts["eigenvalues"].ravel())
    if method == "tica":
        return TicaModel(parts["mean"].ravel(), int(meta["lag"]), parts["components"],
                         parts["eigenvalues"].ravel())
    if method == "ae":
        return AeParams(parts["W1"], parts["b1"].ravel(), parts["W2"], parts["b2"].ravel())
    raise ValueError(f"{directory}: unknown model method {method!r}")
