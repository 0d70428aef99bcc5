"""Loss-sequence generators for experiments.

A :class:`LossStream` holds the full (horizon x arms) loss matrix. The
experiment harness may inspect all of it (e.g. to find the best competing
sequence or the realized loss range); the learner is only ever shown the
entry it selected. Streams are immutable once built.

CSV format for scripted streams: header ``t,arm,loss`` with 0-based round
``t`` and 1-based ``arm``; every (round, arm) pair must appear exactly once.
"""

from __future__ import annotations

import csv
import math

import numpy as np

from .rng import make_generator


class LossStream:
    """Immutable loss matrix with optional affine-view bookkeeping."""

    def __init__(self, matrix: np.ndarray, _root: "LossStream | None" = None,
                 _scale: float = 1.0, _offset: float = 0.0):
        matrix = np.ascontiguousarray(matrix, dtype=np.float64)
        if matrix.ndim != 2:
            raise ValueError("loss matrix must be 2-D (rounds x arms)")
        if matrix.shape[0] < 1 or matrix.shape[1] < 2:
            raise ValueError(f"need at least 1 round and 2 arms, got shape {matrix.shape}")
        if not np.isfinite(matrix).all():
            raise ValueError("losses must be finite")
        matrix.setflags(write=False)
        self._matrix = matrix
        self._root = _root
        self._scale = _scale
        self._offset = _offset

    @property
    def matrix(self) -> np.ndarray:
        return self._matrix

    @property
    def horizon(self) -> int:
        return int(self._matrix.shape[0])

    @property
    def n_arms(self) -> int:
        return int(self._matrix.shape[1])

    def loss(self, t: int, arm: int) -> float:
        """Entry for 0-based round t and 0-based arm."""
        return float(self._matrix[t, arm])

    def loss_range(self) -> tuple[float, float]:
        return float(self._matrix.min()), float(self._matrix.max())

    def range_width(self) -> float:
        lo, hi = self.loss_range()
        return hi - lo


def scripted(matrix) -> LossStream:
    """Wrap an explicit loss matrix verbatim."""
    return LossStream(np.array(matrix, dtype=np.float64))


def piecewise_stationary(
    n_arms: int,
    horizon: int,
    segments: list[tuple[int, list[float]]],
    noise_width: float,
    seed: int,
) -> LossStream:
    """Per-arm means that jump between segments, plus bounded uniform noise.

    Each segment is (length, per-arm mean vector); lengths must sum to the
    horizon. Noise is uniform on [-noise_width/2, +noise_width/2] so the
    true loss range stays finite and exactly computable. Deterministic for
    a given seed.
    """
    if noise_width < 0:
        raise ValueError("noise_width must be >= 0")
    lengths = [int(length) for length, _ in segments]
    if any(length < 1 for length in lengths):
        raise ValueError("segment lengths must be >= 1")
    if sum(lengths) != horizon:
        raise ValueError(f"segment lengths {lengths} sum to {sum(lengths)}, expected horizon {horizon}")
    rows = []
    for length, means in segments:
        means = np.asarray(means, dtype=np.float64)
        if means.shape != (n_arms,):
            raise ValueError(f"segment mean vector has shape {means.shape}, expected ({n_arms},)")
        rows.append(np.tile(means, (length, 1)))
    matrix = np.vstack(rows)
    if noise_width > 0:
        rng = make_generator(seed)
        matrix = matrix + rng.uniform(-noise_width / 2, noise_width / 2, size=(horizon, n_arms))
    return LossStream(matrix)


def affine(base: LossStream, a: float, b: float) -> LossStream:
    """View of `base` with every loss mapped to a*loss + b (a > 0).

    Nested affine views collapse algebraically, so composing two wrappers
    is entrywise identical to one wrapper with the composed coefficients.
    """
    a = float(a)
    b = float(b)
    if not a > 0:
        raise ValueError(f"scale must be positive, got {a}")
    if not (math.isfinite(a) and math.isfinite(b)):
        raise ValueError("affine coefficients must be finite")
    root = base
    if base._root is not None:
        root = base._root
        a, b = a * base._scale, a * base._offset + b
    return LossStream(a * root.matrix + b, _root=root, _scale=a, _offset=b)


def load_csv(path) -> LossStream:
    """Read a scripted stream (header t,arm,loss; 0-based t, 1-based arm)."""
    entries: dict[tuple[int, int], float] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["t", "arm", "loss"]:
            raise ValueError(f"expected header t,arm,loss, got {header}")
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise ValueError(f"{path}:{line_no}: expected 3 fields, got {len(row)}")
            t, arm, loss = int(row[0]), int(row[1]), float(row[2])
            if t < 0:
                raise ValueError(f"{path}:{line_no}: negative round {t}")
            if arm < 1:
                raise ValueError(f"{path}:{line_no}: arms are 1-based, got {arm}")
            key = (t, arm - 1)
            if key in entries:
                raise ValueError(f"{path}:{line_no}: duplicate entry for round {t}, arm {arm}")
            entries[key] = loss
    if not entries:
        raise ValueError(f"{path}: empty stream")
    horizon = max(t for t, _ in entries) + 1
    n_arms = max(m for _, m in entries) + 1
    matrix = np.full((horizon, n_arms), np.nan)
    for (t, m), loss in entries.items():
        matrix[t, m] = loss
    if np.isnan(matrix).any():
        t, m = np.argwhere(np.isnan(matrix))[0]
        raise ValueError(f"{path}: missing loss for round {t}, arm {m + 1}")
    return LossStream(matrix)


def write_csv(stream: LossStream, path) -> None:
    """Inverse of :func:`load_csv`."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "arm", "loss"])
        for t in range(stream.horizon):
            for m in range(stream.n_arms):
                writer.writerow([t, m + 1, repr(stream.loss(t, m))])
