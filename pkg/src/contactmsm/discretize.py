"""Mini-batch k-means (k-means++ seeding, per-center 1/count learning rate)."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .matrixio import TrajectorySet, as_matrix
from .msm import DiscreteTrajectorySet

log = logging.getLogger(__name__)

DEFAULT_BATCH_SIZE = 1000
_CHUNK = 4096


@dataclass(frozen=True)
class ClusterModel:
    centers: np.ndarray
    counts_per_center: np.ndarray
    reseeded: np.ndarray  # centers that were moved after ending up empty

    @property
    def K(self) -> int:
        return self.centers.shape[0]

    @property
    def n_features(self) -> int:
        return self.centers.shape[1]


def squared_distances(x: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """Exact squared Euclidean distances, frames x centers.

    Uses explicit differences rather than the norm expansion so that exact
    ties stay exact.
    """
    out = np.empty((x.shape[0], centers.shape[0]))
    for lo in range(0, x.shape[0], _CHUNK):
        diff = x[lo:lo + _CHUNK, None, :] - centers[None, :, :]
        out[lo:lo + _CHUNK] = np.einsum("ijk,ijk->ij", diff, diff)
    return out


def nearest_center(x: np.ndarray, centers: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Labels (lowest index wins ties) and squared distance to the chosen center."""
    d2 = squared_distances(x, centers)
    labels = np.argmin(d2, axis=1)
    return labels, d2[np.arange(len(x)), labels]


def kmeans_plusplus(x: np.ndarray, K: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    idx = [int(rng.integers(n))]
    closest = squared_distances(x, x[idx]).ravel()
    for _ in range(1, K):
        total = closest.sum()
        if total <= 0.0:
            # every point already coincides with a chosen center
            remaining = np.setdiff1d(np.arange(n), idx)
            idx.append(int(rng.choice(remaining)))
        else:
            u = rng.random() * total
            pick = int(np.searchsorted(np.cumsum(closest), u, side="right"))
            idx.append(min(pick, n - 1))
        closest = np.minimum(closest, squared_distances(x, x[idx[-1:]]).ravel())
    return x[idx].copy()


def default_iterations(K: int, batch_size: int) -> int:
    return max(1, math.ceil(100 * K / batch_size))


def minibatch_kmeans(data, K: int, batch_size: int = DEFAULT_BATCH_SIZE,
                     iterations: int | None = None, seed: int = 0) -> ClusterModel:
    """Fit ``K`` centers with Sculley-style mini-batch updates.

    Parameters
    ----------
    data : array, shape (frames, d)
    K : int
        Number of centers, ``1 <= K <= frames``.
    batch_size : int
        Frames per mini-batch, drawn without replacement (the whole data set
        when ``batch_size >= frames``).
    iterations : int, optional
        Number of mini-batches; defaults to ``ceil(100 * K / batch_size)``.
    seed : int
        Seed for the PCG64 generator driving seeding and batch sampling.

    Returns
    -------
    ClusterModel
        Centers whose cumulative count is still zero after a batch are moved
        to the batch point farthest from its nearest center and flagged in
        ``reseeded``. Batch points that coincide with a center are never
        used as targets, so a center left in place may keep a zero count.
    """
    x = as_matrix(data)
    n = x.shape[0]
    if n == 0:
        raise ValueError("cannot cluster empty data")
    if K < 1:
        raise ValueError("K must be at least 1")
    if K > n:
        raise ValueError(f"K={K} exceeds the number of frames ({n})")
    if batch_size < 1:
        raise ValueError("batch_size must be at least 1")
    if iterations is None:
        iterations = default_iterations(K, batch_size)

    rng = np.random.default_rng(seed)
    init_size = min(n, max(3 * batch_size, 3 * K))
    init_idx = np.sort(rng.choice(n, size=init_size, replace=False)) if init_size < n else np.arange(n)
    centers = kmeans_plusplus(x[init_idx], K, rng)
    counts = np.zeros(K, dtype=np.int64)
    reseeded = np.zeros(K, dtype=bool)

    for _ in range(iterations):
        batch = x[rng.permutation(n)[:batch_size]]
        labels, d2 = nearest_center(batch, centers)
        for xi, c in zip(batch, labels):
            counts[c] += 1
            centers[c] += (xi - centers[c]) / counts[c]
        empty = np.flatnonzero(counts == 0)
        if empty.size:
            # only points not already sitting on a center are useful targets
            order = np.argsort(-d2, kind="stable")
            order = order[d2[order] > 0.0]
            for c, j in zip(empty, order):
                centers[c] = batch[j]
                counts[c] = 1
                reseeded[c] = True
                d2[j] = 0.0
            log.debug("reseeded %d empty centers", min(empty.size, order.size))

    centers.setflags(write=False)
    return ClusterModel(centers, counts, reseeded)


def inertia(data, centers) -> float:
    _, d2 = nearest_center(as_matrix(data), np.asarray(centers, dtype=np.float64))
    return float(d2.sum())


def assign(model: ClusterModel, trajs: TrajectorySet) -> DiscreteTrajectorySet:
    if trajs.n_features != model.n_features:
        raise ValueError(
            f"projection width {trajs.n_features} does not match cluster dimension {model.n_features}"
        )
    labels = [nearest_center(t, model.centers)[0] for t in trajs]
    return DiscreteTrajectorySet(labels, model.K)
