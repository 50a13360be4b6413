"""Rotation/translation invariant contact features from reference-point coordinates.

Protein mode uses one reference point per residue (the C-alpha) and emits the
row-major upper triangle of the thresholded distance matrix. Ligand mode emits
one entry per (ligand point, residue) pair.

Coordinates arrive as frames x (3 * n_points) matrices with x, y, z
interleaved per point. The optional role labels say which points are residues
(``R``) and which belong to the ligand (``L``).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .matrixio import TrajectorySet

PROTEIN = "protein"
LIGAND = "ligand"
LABELS_FILE = "labels.txt"


@dataclass(frozen=True)
class ContactConfig:
    cutoff: float = 8.0
    mode: str = PROTEIN

    def __post_init__(self):
        if not self.cutoff > 0:
            raise ValueError("cutoff must be positive")
        if self.mode not in (PROTEIN, LIGAND):
            raise ValueError(f"mode must be {PROTEIN!r} or {LIGAND!r}, got {self.mode!r}")


@dataclass(frozen=True)
class FrameCoordinates:
    """Reference-point positions for one frame, in Angstrom."""

    positions: np.ndarray
    is_ligand: np.ndarray | None = None

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=np.float64)
        if pos.ndim != 2 or pos.shape[1] != 3:
            raise ValueError(f"positions must be n_points x 3, got {pos.shape}")
        if not np.all(np.isfinite(pos)):
            raise ValueError("coordinates must be finite")
        lig = np.zeros(len(pos), bool) if self.is_ligand is None else np.asarray(self.is_ligand, bool)
        if lig.shape != (len(pos),):
            raise ValueError("one role label per point is required")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "is_ligand", lig)

    @property
    def residues(self) -> np.ndarray:
        return self.positions[~self.is_ligand]

    @property
    def ligand(self) -> np.ndarray:
        return self.positions[self.is_ligand]


def _cross_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    diff = a[:, None, :] - b[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


def pairwise_distances(frame: FrameCoordinates) -> np.ndarray:
    """Residue-residue Euclidean distance matrix (symmetric, zero diagonal)."""
    res = frame.residues
    if len(res) < 2:
        raise ValueError("need at least 2 residues for a distance matrix")
    d = _cross_distances(res, res)
    # exact symmetry regardless of summation order
    d = np.triu(d, 1)
    return d + d.T


def n_pair_features(n_res: int) -> int:
    return n_res * (n_res - 1) // 2


def upper_triangle(m: np.ndarray) -> np.ndarray:
    """Row-major strict upper triangle: (0,1), (0,2), ..., (0,n-1), (1,2), ..."""
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    i, j = np.triu_indices(m.shape[0], k=1)
    return m[i, j]


def contact_vector(distances: np.ndarray, cfg: ContactConfig = ContactConfig()) -> np.ndarray:
    """Binary contacts (distance strictly below the cutoff) of the upper triangle."""
    d = upper_triangle(distances)
    return (d < cfg.cutoff).astype(np.uint8)


def ligand_contact_vector(frame: FrameCoordinates, cfg: ContactConfig = ContactConfig(mode=LIGAND)) -> np.ndarray:
    """Contacts between each ligand point and each residue.

    Entry ``a * n_res + r`` is 1 iff ligand point ``a`` is closer than the
    cutoff to residue ``r``.
    """
    lig, res = frame.ligand, frame.residues
    if len(lig) == 0:
        raise ValueError("ligand mode needs at least one ligand point")
    if len(res) == 0:
        raise ValueError("ligand mode needs at least one residue")
    return (_cross_distances(lig, res) < cfg.cutoff).astype(np.uint8).ravel()


def frame_features(frame: FrameCoordinates, cfg: ContactConfig) -> np.ndarray:
    if cfg.mode == PROTEIN:
        return contact_vector(pairwise_distances(frame), cfg)
    return ligand_contact_vector(frame, cfg)


def featurize_trajectory_set(raw: TrajectorySet, cfg: ContactConfig = ContactConfig(),
                             is_ligand: Sequence[bool] | None = None) -> TrajectorySet:
    """Contact features for every frame of every trajectory.

    ``raw`` holds frames x (3 * n_points) coordinate matrices. Trajectory
    boundaries and order are preserved.
    """
    ncols = raw.n_features
    if ncols % 3:
        raise ValueError(f"coordinate matrices need 3 * n_points columns, got {ncols}")
    n_points = ncols // 3
    lig = np.zeros(n_points, bool) if is_ligand is None else np.asarray(is_ligand, bool)
    if lig.shape != (n_points,):
        raise ValueError(f"{len(lig)} role labels for {n_points} points")

    def one(traj: np.ndarray) -> np.ndarray:
        rows = [frame_features(FrameCoordinates(f.reshape(n_points, 3), lig), cfg) for f in traj]
        return np.asarray(rows, dtype=np.float64)

    return raw.map(one)


def read_labels(path) -> np.ndarray:
    """Role labels file: one token per point, ``R`` (residue) or ``L`` (ligand)."""
    tokens = Path(path).read_text(encoding="utf-8").split()
    bad = sorted(set(tokens) - {"R", "L"})
    if bad:
        raise ValueError(f"{path}: unknown role labels {bad}")
    return np.array([t == "L" for t in tokens])
