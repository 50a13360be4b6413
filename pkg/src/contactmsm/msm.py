"""Markov state models on discrete trajectories.

Counting uses a sliding window that never crosses trajectory boundaries. The
transition matrix is the reversible maximum-likelihood estimate obtained by
the symmetric fixed-point iteration

    x_ij <- (c_ij + c_ji) / (c_i / x_i + c_j / x_j)

on the largest connected set, and implied timescales come from the spectrum
of the symmetrized matrix diag(sqrt(pi)) T diag(1/sqrt(pi)).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .matrixio import read_manifest, write_manifest

log = logging.getLogger(__name__)

OK = "ok"
DISCONNECTED = "disconnected"
NONPOSITIVE = "nonpositive-eigenvalue"
NO_COUNTS = "no-counts"
TOO_FEW_STATES = "too-few-states"


class EstimationError(RuntimeError):
    """Raised when a transition model cannot be estimated from the data."""


@dataclass(frozen=True)
class DiscreteTrajectorySet:
    trajectories: list
    n_states: int

    def __post_init__(self):
        trajs = [np.asarray(t, dtype=np.int64).ravel() for t in self.trajectories]
        if not trajs:
            raise ValueError("need at least one discrete trajectory")
        for t in trajs:
            if t.size < 1:
                raise ValueError("every discrete trajectory needs at least one frame")
            if t.min() < 0 or t.max() >= self.n_states:
                raise ValueError(f"state index outside [0, {self.n_states})")
        object.__setattr__(self, "trajectories", trajs)

    def __len__(self) -> int:
        return len(self.trajectories)

    def __iter__(self):
        return iter(self.trajectories)

    def __getitem__(self, i):
        return self.trajectories[i]


@dataclass(frozen=True)
class TransitionModel:
    lag: int
    counts: np.ndarray
    T: np.ndarray
    pi: np.ndarray
    active_states: np.ndarray
    converged: bool = True
    iterations: int = 0
    log_likelihood: float = 0.0
    dropped_states: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    @property
    def n_states(self) -> int:
        return self.T.shape[0]


def count_matrix(dtrajs: DiscreteTrajectorySet | Sequence, lag: int, n_states: int | None = None) -> np.ndarray:
    """Sliding-window transition counts at ``lag`` frames."""
    if lag < 1:
        raise ValueError("lag must be at least 1")
    trajs = [np.asarray(t, dtype=np.int64).ravel() for t in dtrajs]
    if n_states is None:
        n_states = dtrajs.n_states if isinstance(dtrajs, DiscreteTrajectorySet) else int(max(t.max() for t in trajs)) + 1
    c = np.zeros((n_states, n_states))
    for t in trajs:
        if t.size > lag:
            np.add.at(c, (t[:-lag], t[lag:]), 1.0)
    return c


def largest_connected_set(counts: np.ndarray) -> np.ndarray:
    """States of the largest connected component of the graph with edges c_ij + c_ji > 0.

    Ties between equally large components go to the one holding the lowest
    state index. Returned indices are sorted.
    """
    c = np.asarray(counts, dtype=np.float64)
    adj = (c + c.T) > 0
    _, labels = connected_components(csr_matrix(adj), directed=True, connection="strong")
    sizes = np.bincount(labels)
    tied = np.flatnonzero(sizes == sizes.max())
    first_state = [np.flatnonzero(labels == lab)[0] for lab in tied]
    best = tied[int(np.argmin(first_state))]
    return np.flatnonzero(labels == best)


def log_likelihood(counts: np.ndarray, T: np.ndarray) -> float:
    mask = counts > 0
    if np.any(T[mask] <= 0):
        return -np.inf
    return float(np.sum(counts[mask] * np.log(T[mask])))


def row_normalize(m: np.ndarray) -> np.ndarray:
    s = m.sum(axis=1, keepdims=True)
    return np.divide(m, s, out=np.zeros_like(m, dtype=np.float64), where=s > 0)


def nonreversible_estimate(counts: np.ndarray) -> np.ndarray:
    """Unconstrained maximum-likelihood estimate (row-normalized counts)."""
    return row_normalize(np.asarray(counts, dtype=np.float64))


def symmetrized_estimate(counts: np.ndarray) -> np.ndarray:
    """Naive reversible baseline: row-normalized C + C^T."""
    c = np.asarray(counts, dtype=np.float64)
    return row_normalize(c + c.T)


def _reversible_fixed_point(c: np.ndarray, tol: float, max_iter: int, history: list | None):
    csym = c + c.T
    ci = c.sum(axis=1)
    x = csym.copy()
    xi = x.sum(axis=1)
    ll_old = log_likelihood(c, x / xi[:, None])
    if history is not None:
        history.append(ll_old)
    nz = csym > 0
    rows, cols = np.nonzero(nz)
    vals = csym[rows, cols]
    for it in range(1, max_iter + 1):
        q = ci / xi
        x_new = np.zeros_like(x)
        x_new[rows, cols] = vals / (q[rows] + q[cols])
        x = x_new
        xi = x.sum(axis=1)
        ll = log_likelihood(c, x / xi[:, None])
        if history is not None:
            history.append(ll)
        if abs(ll - ll_old) <= tol * abs(ll_old) or ll == ll_old:
            return x, True, it
        ll_old = ll
    return x, False, max_iter


def reversible_mle(counts: np.ndarray, tol: float = 1e-10, max_iter: int = 100_000,
                   lag: int = 1, active_states=None, history: list | None = None) -> TransitionModel:
    """Reversible maximum-likelihood transition matrix for a connected count matrix.

    ``history``, when given, receives the log-likelihood after every
    iteration (the sequence is nondecreasing).
    """
    c = np.asarray(counts, dtype=np.float64)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise ValueError("counts must be square")
    if tol <= 0:
        raise ValueError("tol must be positive")
    if np.any(c < 0):
        raise ValueError("counts must be nonnegative")
    if c.sum() == 0:
        raise EstimationError("count matrix is empty")
    if np.any((c + c.T).sum(axis=1) == 0):
        raise EstimationError("count matrix has states without any transitions")

    x, converged, iters = _reversible_fixed_point(c, tol, max_iter, history)
    if not converged:
        log.warning("reversible estimator did not converge in %d iterations", max_iter)
    xi = x.sum(axis=1)
    T = x / xi[:, None]
    pi = xi / xi.sum()
    active = np.arange(c.shape[0]) if active_states is None else np.asarray(active_states)
    return TransitionModel(lag=lag, counts=c, T=T, pi=pi, active_states=active,
                           converged=converged, iterations=iters,
                           log_likelihood=log_likelihood(c, T))


def estimate_msm(dtrajs: DiscreteTrajectorySet, lag: int, tol: float = 1e-10,
                 max_iter: int = 100_000) -> TransitionModel:
    """Count, trim to the largest connected set, and fit the reversible estimator."""
    c = count_matrix(dtrajs, lag, dtrajs.n_states)
    if c.sum() == 0:
        raise EstimationError(f"no transitions at lag {lag}")
    active = largest_connected_set(c)
    dropped = np.setdiff1d(np.flatnonzero(c.sum(axis=0) + c.sum(axis=1)), active)
    if dropped.size:
        log.info("lag %d: %d visited states outside the connected set", lag, dropped.size)
    model = reversible_mle(c[np.ix_(active, active)], tol, max_iter, lag=lag, active_states=active)
    return TransitionModel(**{**model.__dict__, "dropped_states": dropped})


def eigenvalues(model: TransitionModel) -> np.ndarray:
    """Spectrum of the reversible T, sorted by magnitude (descending)."""
    s = np.sqrt(model.pi)
    sym = s[:, None] * model.T / s[None, :]
    sym = 0.5 * (sym + sym.T)
    ev = np.linalg.eigvalsh(sym)
    return ev[np.argsort(-np.abs(ev), kind="stable")]


def timescales_from_eigenvalues(ev: np.ndarray, lag: float, k: int) -> tuple[np.ndarray, list[str]]:
    """Implied timescales -lag / ln(lambda) for the k eigenvalues after the stationary one.

    Nonpositive eigenvalues give NaN, eigenvalues equal to 1 (within 1e-12)
    give +inf; each is reported through the returned status list.
    """
    out = np.full(k, np.nan)
    status = []
    for i in range(k):
        if i + 1 >= len(ev):
            status.append(TOO_FEW_STATES)
            continue
        lam = ev[i + 1]
        if lam >= 1.0 - 1e-12:
            out[i] = np.inf
            status.append(DISCONNECTED)
        elif lam <= 0.0:
            status.append(NONPOSITIVE)
        else:
            out[i] = -lag / np.log(lam)
            status.append(OK)
    return out, status


def implied_timescales(model: TransitionModel, k: int = 1) -> np.ndarray:
    """The ``k`` slowest implied timescales in frames (see ``timescales_from_eigenvalues``)."""
    if k < 1:
        raise ValueError("k must be at least 1")
    if k >= model.n_states:
        raise ValueError(f"k={k} needs more than {model.n_states} states")
    return timescales_from_eigenvalues(eigenvalues(model), model.lag, k)[0]


@dataclass(frozen=True)
class TimescaleEntry:
    lag: int
    replicate: int
    index: int  # 1 is the slowest process
    timescale_frames: float
    frame_interval: float
    converged: bool
    status: str
    seed: int | None = None

    @property
    def timescale_physical(self) -> float:
        return self.timescale_frames * self.frame_interval

    @property
    def ok(self) -> bool:
        return self.status == OK


@dataclass
class TimescaleTable:
    """Implied timescales keyed by (lag, replicate, index)."""

    lags: list
    frame_interval: float = 1.0
    entries: list = field(default_factory=list)

    def slowest(self, lag: int) -> np.ndarray:
        """Successful slowest-timescale values (physical units) at ``lag``, by replicate."""
        rows = sorted((e for e in self.entries if e.lag == lag and e.index == 1 and e.ok),
                      key=lambda e: e.replicate)
        return np.array([e.timescale_physical for e in rows])

    def summary(self) -> list[dict]:
        """Per-lag mean and sample standard deviation (ddof=1) of the slowest timescale."""
        out = []
        for lag in self.lags:
            vals = self.slowest(lag)
            n_total = len({e.replicate for e in self.entries if e.lag == lag})
            out.append({
                "lag_frames": lag,
                "lag_physical": lag * self.frame_interval,
                "n_success": int(vals.size),
                "n_replicates": n_total,
                "mean": float(vals.mean()) if vals.size else float("nan"),
                "std_ddof1": float(vals.std(ddof=1)) if vals.size > 1 else float("nan"),
            })
        return out

    def extend(self, other: "TimescaleTable") -> None:
        self.entries.extend(other.entries)


def its_scan(dtrajs: DiscreteTrajectorySet, lag_list: Sequence[int], k: int = 1,
             frame_interval: float = 1.0, tol: float = 1e-10, max_iter: int = 100_000,
             replicate: int = 0, seed: int | None = None) -> TimescaleTable:
    """Estimate an MSM at every lag and record the ``k`` slowest timescales.

    A failing lag is recorded with its reason and does not stop the scan.
    """
    lag_list = [int(l) for l in lag_list]
    if not lag_list:
        raise ValueError("need at least one lag")
    table = TimescaleTable(lag_list, frame_interval)
    for lag in lag_list:
        try:
            model = estimate_msm(dtrajs, lag, tol, max_iter)
            ts, status = timescales_from_eigenvalues(eigenvalues(model), lag, k)
            converged = model.converged
        except (EstimationError, ValueError) as exc:
            log.info("lag %d failed: %s", lag, exc)
            ts, status, converged = np.full(k, np.nan), [NO_COUNTS] * k, False
        for i in range(k):
            table.entries.append(TimescaleEntry(lag, replicate, i + 1, float(ts[i]),
                                                frame_interval, converged, status[i], seed))
    return table


def write_dtrajs(dtrajs: DiscreteTrajectorySet, directory) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    width = max(3, len(str(len(dtrajs) - 1)))
    names = [f"dtraj{i:0{width}d}.txt" for i in range(len(dtrajs))]
    for name, t in zip(names, dtrajs):
        (d / name).write_text("".join(f"{int(s)}\n" for s in t), encoding="utf-8")
    write_manifest(d, names)


def read_dtrajs(directory, n_states: int | None = None) -> DiscreteTrajectorySet:
    trajs = [np.array(Path(directory, n).read_text(encoding="utf-8").split(), dtype=np.int64)
             for n in read_manifest(directory)]
    if n_states is None:
        n_states = int(max(t.max() for t in trajs)) + 1
    return DiscreteTrajectorySet(trajs, n_states)
