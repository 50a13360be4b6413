"""Synthetic trajectories with analytically known answers.

All randomness comes from numpy's PCG64 generator. Trajectory ``i`` of a
spec with seed ``s`` is drawn from its own stream seeded with ``s ^ i``, so a
single trajectory can be regenerated in isolation.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.sparse.csgraph import connected_components

from .matrixio import TrajectorySet, read_key_values, read_matrix
from .msm import DiscreteTrajectorySet

AR1_BURN_IN = 1000


def stream(seed: int, i: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed ^ i))


def stationary_distribution(T: np.ndarray) -> np.ndarray:
    ev, vecs = np.linalg.eig(np.asarray(T).T)
    v = np.real(vecs[:, np.argmin(np.abs(ev - 1.0))])
    return v / v.sum()


def analytic_timescales(T: np.ndarray) -> np.ndarray:
    """-1 / ln(lambda_i) in frames for the non-stationary eigenvalues of T (by magnitude)."""
    ev = np.linalg.eigvals(np.asarray(T))
    ev = np.real(ev[np.argsort(-np.abs(ev), kind="stable")])[1:]
    return -1.0 / np.log(ev)


@dataclass(frozen=True)
class HmmSpec:
    T_true: np.ndarray
    templates: np.ndarray  # per-state contact probabilities
    n_traj: int
    traj_len: int
    seed: int = 0

    def __post_init__(self):
        T = np.asarray(self.T_true, dtype=np.float64)
        tpl = np.atleast_2d(np.asarray(self.templates, dtype=np.float64))
        if T.ndim != 2 or T.shape[0] != T.shape[1]:
            raise ValueError("T_true must be square")
        if np.any(T < 0) or np.max(np.abs(T.sum(axis=1) - 1.0)) > 1e-12:
            raise ValueError("T_true must be row-stochastic")
        if not _irreducible(T):
            raise ValueError("T_true must be irreducible")
        if tpl.shape[0] != T.shape[0]:
            raise ValueError("need one template row per state")
        if np.any(tpl < 0) or np.any(tpl > 1):
            raise ValueError("template entries are probabilities")
        if self.n_traj < 1 or self.traj_len < 1:
            raise ValueError("n_traj and traj_len must be positive")
        object.__setattr__(self, "T_true", T)
        object.__setattr__(self, "templates", tpl)


def _irreducible(T: np.ndarray) -> bool:
    n, _ = connected_components(T > 0, directed=True, connection="strong")
    return n == 1


@dataclass(frozen=True)
class Ar1Spec:
    coeffs: np.ndarray
    rotation: np.ndarray
    noise_scale: float = 1.0
    n_frames: int = 100_000
    seed: int = 0
    n_traj: int = 1

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=np.float64).ravel()
        Q = np.asarray(self.rotation, dtype=np.float64)
        if Q.shape != (c.size, c.size):
            raise ValueError("rotation must be n x n with n = len(coeffs)")
        if np.max(np.abs(Q.T @ Q - np.eye(c.size))) > 1e-10:
            raise ValueError("rotation must be orthogonal")
        if np.any(np.abs(c) >= 1):
            raise ValueError("coefficients must lie in (-1, 1)")
        if self.noise_scale < 0 or self.n_frames < 1 or self.n_traj < 1:
            raise ValueError("noise_scale >= 0, n_frames >= 1 and n_traj >= 1 required")
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "rotation", Q)

    @property
    def propagator(self) -> np.ndarray:
        return self.rotation @ np.diag(self.coeffs) @ self.rotation.T


def random_rotation(n: int, seed: int) -> np.ndarray:
    q, r = np.linalg.qr(np.random.default_rng(seed).standard_normal((n, n)))
    return q * np.sign(np.diag(r))


def sample_chain(T: np.ndarray, n_steps: int, rng: np.random.Generator, start: int | None = None) -> np.ndarray:
    cum = np.cumsum(T, axis=1)
    cum[:, -1] = 1.0
    if start is None:
        start = int(np.searchsorted(np.cumsum(stationary_distribution(T)), rng.random(), side="right"))
        start = min(start, T.shape[0] - 1)
    u = rng.random(n_steps)
    s = np.empty(n_steps, dtype=np.int64)
    s[0] = start
    for t in range(1, n_steps):
        s[t] = np.searchsorted(cum[s[t - 1]], u[t], side="right")
    return s


def gen_hmm(spec: HmmSpec) -> tuple[DiscreteTrajectorySet, TrajectorySet]:
    """Hidden chains from ``T_true`` with Bernoulli(template[state]) emissions."""
    hidden, feats = [], []
    for i in range(spec.n_traj):
        rng = stream(spec.seed, i)
        s = sample_chain(spec.T_true, spec.traj_len, rng)
        p = spec.templates[s]
        feats.append((rng.random(p.shape) < p).astype(np.float64))
        hidden.append(s)
    return DiscreteTrajectorySet(hidden, spec.T_true.shape[0]), TrajectorySet(tuple(feats))


def gen_ar1(spec: Ar1Spec) -> TrajectorySet:
    """x_0 = 0, x_t = A x_{t-1} + noise_scale * xi_t with the first frames discarded as burn-in."""
    A = spec.propagator
    n = spec.coeffs.size
    total = spec.n_frames + AR1_BURN_IN
    out = []
    for i in range(spec.n_traj):
        noise = spec.noise_scale * stream(spec.seed, i).standard_normal((total, n))
        x = np.zeros((total, n))
        for t in range(1, total):
            x[t] = A @ x[t - 1] + noise[t]
        out.append(x[AR1_BURN_IN:])
    return TrajectorySet(tuple(out))


def metastable_chain(lambda2: float = 0.98, n_states: int = 3) -> np.ndarray:
    """Symmetric path chain I - eps * L with second eigenvalue ``lambda2``.

    L is the Laplacian of a path graph on ``n_states`` nodes, whose smallest
    nonzero eigenvalue is 2 - 2 cos(pi / n).
    """
    gap = 2.0 - 2.0 * np.cos(np.pi / n_states)
    eps = (1.0 - lambda2) / gap
    L = np.zeros((n_states, n_states))
    for a in range(n_states - 1):
        L[a, a] += 1
        L[a + 1, a + 1] += 1
        L[a, a + 1] = L[a + 1, a] = -1
    T = np.eye(n_states) - eps * L
    if np.any(T < 0):
        raise ValueError("lambda2 too small for a path chain of this size")
    return T


def block_templates(n_states: int, n_features: int, high: float = 0.9, low: float = 0.1) -> np.ndarray:
    """Each state switches on its own block of features with probability ``high``."""
    tpl = np.full((n_states, n_features), low)
    for s, block in enumerate(np.array_split(np.arange(n_features), n_states)):
        tpl[s, block] = high
    return tpl


def append_noise(trajs: TrajectorySet, n_noise: int, seed: int, p: float = 0.5) -> TrajectorySet:
    """Append ``n_noise`` i.i.d. Bernoulli(p) columns to every frame."""
    out = []
    for i, t in enumerate(trajs):
        rng = stream(seed, i)
        out.append(np.hstack([t, (rng.random((t.shape[0], n_noise)) < p).astype(np.float64)]))
    return TrajectorySet(tuple(out), trajs.frame_interval)


def _resolve(base: Path, value: str) -> Path:
    p = Path(value)
    return p if p.is_absolute() else base / p


def load_hmm_spec(path) -> HmmSpec:
    """Key-value spec: ``T_true`` and ``templates`` name MDRX files (relative to the spec)."""
    kv = read_key_values(path)
    base = Path(path).parent
    return HmmSpec(read_matrix(_resolve(base, kv["T_true"])),
                   read_matrix(_resolve(base, kv["templates"])),
                   int(kv["n_traj"]), int(kv["traj_len"]), int(kv.get("seed", 0)))


def load_ar1_spec(path) -> Ar1Spec:
    """Key-value spec; ``rotation`` is an MDRX file, ``identity`` or ``random:<seed>``."""
    kv = read_key_values(path)
    coeffs = np.array([float(t) for t in kv["coeffs"].split(",")])
    rot = kv.get("rotation", "identity")
    if rot == "identity":
        Q = np.eye(coeffs.size)
    elif rot.startswith("random:"):
        Q = random_rotation(coeffs.size, int(rot.split(":", 1)[1]))
    else:
        Q = read_matrix(_resolve(Path(path).parent, rot))
    return Ar1Spec(coeffs, Q, float(kv.get("noise_scale", 1.0)), int(kv.get("n_frames", 100_000)),
                   int(kv.get("seed", 0)), int(kv.get("n_traj", 1)))
