"""Matrix and trajectory containers plus their on-disk formats.

Binary matrices use the little-endian MDRX layout::

    offset  size  field
    0       4     magic b"MDRX"
    4       2     version (uint16, currently 1)
    6       1     dtype tag (0 = float64, 1 = uint8)
    7       8     rows (uint64)
    15      8     cols (uint64)
    23      ...   row-major payload

A trajectory set on disk is a directory of per-trajectory MDRX files plus a
``manifest.txt`` listing the filenames in order (UTF-8, LF line endings).
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

MAGIC = b"MDRX"
VERSION = 1
HEADER = struct.Struct("<4sHBQQ")
DTYPES = {"f64": (0, np.dtype("<f8")), "u8": (1, np.dtype("u1"))}
_TAG_TO_DTYPE = {tag: dt for tag, dt in DTYPES.values()}
MANIFEST = "manifest.txt"


class MatrixFormatError(ValueError):
    """Base class for malformed matrix files."""


class BadMagicError(MatrixFormatError):
    pass


class UnsupportedVersionError(MatrixFormatError):
    pass


class TruncatedPayloadError(MatrixFormatError):
    pass


def as_matrix(m) -> np.ndarray:
    """Coerce to a finite 2-D float64 array."""
    a = np.asarray(m, dtype=np.float64)
    if a.ndim == 1:
        a = a[None, :]
    if a.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix contains NaN or Inf")
    return a


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class TrajectorySet:
    """Ordered per-trajectory frame matrices sharing one column count."""

    trajectories: tuple
    frame_interval: float = 1.0
    _n_features: int = field(init=False, repr=False, default=0)

    def __post_init__(self):
        trajs = tuple(_frozen(as_matrix(t)) for t in self.trajectories)
        if not trajs:
            raise ValueError("a trajectory set needs at least one trajectory")
        ncols = {t.shape[1] for t in trajs}
        if len(ncols) != 1:
            raise ValueError(f"trajectories disagree on column count: {sorted(ncols)}")
        if any(t.shape[0] < 1 for t in trajs):
            raise ValueError("every trajectory needs at least one frame")
        if not self.frame_interval > 0:
            raise ValueError("frame_interval must be positive")
        object.__setattr__(self, "trajectories", trajs)
        object.__setattr__(self, "_n_features", ncols.pop())

    def __len__(self) -> int:
        return len(self.trajectories)

    def __getitem__(self, i: int) -> np.ndarray:
        return self.trajectories[i]

    def __iter__(self):
        return iter(self.trajectories)

    @property
    def n_features(self) -> int:
        return self._n_features

    @property
    def n_frames(self) -> int:
        return sum(t.shape[0] for t in self.trajectories)

    @property
    def lengths(self) -> list[int]:
        return [t.shape[0] for t in self.trajectories]

    def concatenated(self) -> np.ndarray:
        return np.concatenate(self.trajectories, axis=0)

    def split_like(self, stacked: np.ndarray) -> "TrajectorySet":
        """Cut a frames x d matrix back into this set's trajectory boundaries."""
        stacked = np.asarray(stacked)
        if stacked.shape[0] != self.n_frames:
            raise ValueError("row count does not match total frame count")
        bounds = np.cumsum(self.lengths)[:-1]
        return TrajectorySet(tuple(np.split(stacked, bounds)), self.frame_interval)

    def map(self, fn) -> "TrajectorySet":
        return TrajectorySet(tuple(fn(t) for t in self.trajectories), self.frame_interval)


def write_matrix(m, path, dtype: str = "f64") -> None:
    """Write ``m`` as an MDRX file. ``dtype`` is ``"f64"`` or ``"u8"``."""
    if dtype not in DTYPES:
        raise ValueError(f"unknown dtype {dtype!r}; expected one of {sorted(DTYPES)}")
    a = as_matrix(m)
    tag, dt = DTYPES[dtype]
    if dtype == "u8" and not np.all((a == 0.0) | (a == 1.0)):
        raise ValueError("u8 matrices may only contain 0 and 1")
    rows, cols = a.shape
    payload = np.ascontiguousarray(a.astype(dt)).tobytes()
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(MAGIC, VERSION, tag, rows, cols))
        fh.write(payload)


def read_matrix(path) -> np.ndarray:
    """Read an MDRX file into a float64 array (u8 payloads are widened)."""
    raw = Path(path).read_bytes()
    if len(raw) < 4 or raw[:4] != MAGIC:
        raise BadMagicError(f"{path}: not an MDRX file (magic {raw[:4]!r})")
    if len(raw) < HEADER.size:
        raise TruncatedPayloadError(f"{path}: header truncated")
    _, version, tag, rows, cols = HEADER.unpack_from(raw)
    if version != VERSION:
        raise UnsupportedVersionError(f"{path}: unsupported MDRX version {version}")
    if tag not in _TAG_TO_DTYPE:
        raise MatrixFormatError(f"{path}: unknown dtype tag {tag}")
    dt = _TAG_TO_DTYPE[tag]
    need = rows * cols * dt.itemsize
    body = raw[HEADER.size:]
    if len(body) < need:
        raise TruncatedPayloadError(
            f"{path}: declared {rows}x{cols} needs {need} payload bytes, found {len(body)}"
        )
    a = np.frombuffer(body[:need], dtype=dt).reshape(rows, cols)
    return a.astype(np.float64)


def write_csv_matrix(m, path) -> None:
    a = as_matrix(m)
    with open(path, "w", newline="\n") as fh:
        for row in a:
            fh.write(",".join(f"{v:.17g}" for v in row))
            fh.write("\n")


def read_csv_matrix(path) -> np.ndarray:
    rows = []
    with open(path, newline="") as fh:
        for lineno, rec in enumerate(csv.reader(fh), start=1):
            if not rec or all(not tok.strip() for tok in rec):
                continue
            try:
                rows.append([float(tok) for tok in rec])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: unparsable token ({exc})") from None
            if len(rows[-1]) != len(rows[0]):
                raise ValueError(
                    f"{path}:{lineno}: ragged row ({len(rows[-1])} fields, expected {len(rows[0])})"
                )
    if not rows:
        raise ValueError(f"{path}: no rows")
    return as_matrix(rows)


def write_manifest(directory, names: Iterable[str]) -> None:
    text = "".join(f"{n}\n" for n in names)
    Path(directory, MANIFEST).write_bytes(text.encode("utf-8"))


def read_manifest(directory) -> list[str]:
    path = Path(directory, MANIFEST)
    if not path.exists():
        raise FileNotFoundError(f"{directory}: missing {MANIFEST}")
    return [ln for ln in path.read_text(encoding="utf-8").split("\n") if ln.strip()]


def write_trajectory_set(trajs: TrajectorySet, directory, dtype: str = "f64") -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    width = max(3, len(str(len(trajs) - 1)))
    names = [f"traj{i:0{width}d}.mdrx" for i in range(len(trajs))]
    for name, t in zip(names, trajs):
        write_matrix(t, d / name, dtype)
    write_manifest(d, names)


def read_trajectory_set(directory, frame_interval: float = 1.0) -> TrajectorySet:
    names = read_manifest(directory)
    if not names:
        raise ValueError(f"{directory}: empty manifest")
    return TrajectorySet(tuple(read_matrix(Path(directory, n)) for n in names), frame_interval)


def read_key_values(path) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment, blank lines are skipped."""
    out: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def write_key_values(path, values: dict) -> None:
    Path(path).write_text("".join(f"{k} = {v}\n" for k, v in values.items()), encoding="utf-8")


def parse_int_list(text: str) -> list[int]:
    return [int(tok) for tok in str(text).split(",") if tok.strip()]


def parse_float_list(text: str) -> list[float]:
    return [float(tok) for tok in str(text).split(",") if tok.strip()]

