"""Observational samples: in-memory representation, CSV ingestion and validation."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DataFormatError, ValidationError

__all__ = ["ObservedSample", "SimSample", "load_csv", "write_csv", "validate"]


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ObservedSample:
    """Treatments ``z``, outcomes ``y`` and raw covariates ``X`` for n units.

    ``X`` never carries an intercept column; model-fitting code adds one.
    Arrays are copied and made read-only on construction.
    """

    z: np.ndarray
    y: np.ndarray
    X: np.ndarray
    labels: tuple = ()

    def __post_init__(self):
        z = _frozen(self.z, np.int64)
        y = _frozen(self.y, np.float64)
        X = np.asarray(self.X, dtype=np.float64)
        if X.ndim == 1:
            X = X.reshape(-1, 1) if X.size else np.empty((len(z), 0))
        X = _frozen(X, np.float64)
        labels = tuple(self.labels) or tuple(f"x{j + 1}" for j in range(X.shape[1]))
        if len(labels) != X.shape[1]:
            raise ValueError(f"{len(labels)} labels for {X.shape[1]} covariate columns")
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return len(self.z)

    @property
    def d(self) -> int:
        return self.X.shape[1]

    # Analysis models select columns from a "pool". For observed data the pool
    # is X itself; SimSample extends it with the latent W columns.
    @property
    def pool(self) -> np.ndarray:
        return self.X

    @property
    def pool_labels(self) -> tuple:
        return self.labels

    def columns(self, subset: Sequence | None) -> np.ndarray:
        """Covariate matrix for ``subset`` (indices or labels into the pool).

        ``None`` means every column of ``X``; an empty sequence gives an
        ``n x 0`` matrix (intercept-only model).
        """
        if subset is None:
            return self.X
        return self.pool[:, self.column_indices(subset)]

    def column_indices(self, subset: Sequence | None) -> list[int]:
        if subset is None:
            return list(range(self.d))
        names = self.pool_labels
        out = []
        for s in subset:
            if isinstance(s, str):
                if s not in names:
                    raise KeyError(f"unknown column {s!r}; available: {', '.join(names)}")
                out.append(names.index(s))
            else:
                j = int(s)
                if not 0 <= j < len(names):
                    raise IndexError(f"column index {j} out of range for pool of {len(names)}")
                out.append(j)
        return out

    def with_assignment(self, z) -> "ObservedSample":
        return ObservedSample(z=z, y=self.y, X=self.X, labels=self.labels)

    def take(self, idx) -> "ObservedSample":
        """Row subset (used by the bootstrap)."""
        return ObservedSample(z=self.z[idx], y=self.y[idx], X=self.X[idx], labels=self.labels)


@dataclass(frozen=True, eq=False)
class SimSample(ObservedSample):
    """Simulated sample that also keeps the latent generator draws and both
    potential outcomes."""

    W: np.ndarray = field(default_factory=lambda: np.empty((0, 0)))
    y1: np.ndarray = field(default_factory=lambda: np.empty(0))
    y0: np.ndarray = field(default_factory=lambda: np.empty(0))
    true_tau: float = 0.0

    def __post_init__(self):
        super().__post_init__()
        object.__setattr__(self, "W", _frozen(self.W, np.float64))
        object.__setattr__(self, "y1", _frozen(self.y1, np.float64))
        object.__setattr__(self, "y0", _frozen(self.y0, np.float64))

    @property
    def pool(self) -> np.ndarray:
        return np.hstack([self.X, self.W])

    @property
    def pool_labels(self) -> tuple:
        return self.labels + tuple(f"W{j + 1}" for j in range(self.W.shape[1]))

    def take(self, idx) -> "SimSample":
        return SimSample(
            z=self.z[idx], y=self.y[idx], X=self.X[idx], labels=self.labels,
            W=self.W[idx], y1=self.y1[idx], y0=self.y0[idx], true_tau=self.true_tau,
        )

    def with_assignment(self, z) -> "SimSample":
        return SimSample(
            z=z, y=self.y, X=self.X, labels=self.labels,
            W=self.W, y1=self.y1, y0=self.y0, true_tau=self.true_tau,
        )


def validate(sample: ObservedSample) -> list[str]:
    """List every violated sample invariant; empty means the sample is valid."""
    problems = []
    z, y, X = sample.z, sample.y, sample.X
    if not (len(z) == len(y) == X.shape[0]):
        problems.append(f"length mismatch: z={len(z)}, y={len(y)}, X rows={X.shape[0]}")
    bad = np.flatnonzero((z != 0) & (z != 1))
    if bad.size:
        problems.append(f"non-binary treatment at rows {(bad + 1).tolist()[:10]}")
    if not np.any(z == 1):
        problems.append("no treated units")
    if not np.any(z == 0):
        problems.append("no control units")
    if not np.all(np.isfinite(y)):
        problems.append("non-finite outcome")
    if not np.all(np.isfinite(X)):
        problems.append("non-finite covariate")
    return problems


def load_csv(path) -> ObservedSample:
    """Read a CSV with a header, a ``z`` column, a ``y`` column and covariates.

    Covariate order follows the header. Rows are numbered from 1 (first data
    row) in error messages.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataFormatError(f"{path}: empty file") from None
        rows = [r for r in reader if r and any(c.strip() for c in r)]

    for col in ("z", "y"):
        if col not in header:
            raise DataFormatError(f"{path}: missing required column {col!r}")
    if len(set(header)) != len(header):
        raise DataFormatError(f"{path}: duplicate column names in header")
    iz, iy = header.index("z"), header.index("y")
    cov_idx = [j for j, h in enumerate(header) if j not in (iz, iy)]

    n = len(rows)
    z = np.empty(n, dtype=np.int64)
    y = np.empty(n)
    X = np.empty((n, len(cov_idx)))
    bad_z = []
    for i, row in enumerate(rows, start=1):
        if len(row) != len(header):
            raise DataFormatError(f"{path}: row {i} has {len(row)} fields, expected {len(header)}")
        try:
            zi = int(row[iz].strip())
        except ValueError:
            raise DataFormatError(f"{path}: row {i}, column 'z': not an integer: {row[iz]!r}") from None
        if zi not in (0, 1):
            bad_z.append(i)
        z[i - 1] = zi
        for j, dest in [(iy, None)] + [(c, k) for k, c in enumerate(cov_idx)]:
            try:
                v = float(row[j])
            except ValueError:
                raise DataFormatError(
                    f"{path}: row {i}, column {j + 1} ({header[j]!r}): not a number: {row[j]!r}"
                ) from None
            if dest is None:
                y[i - 1] = v
            else:
                X[i - 1, dest] = v
    if bad_z:
        raise ValidationError(f"{path}: non-binary z in row {bad_z[0]}", [f"row {r}" for r in bad_z])
    sample = ObservedSample(z=z, y=y, X=X, labels=tuple(header[j] for j in cov_idx))
    problems = [p for p in validate(sample) if not p.startswith("no ")]
    if problems:
        raise ValidationError(f"{path}: " + "; ".join(problems), problems)
    return sample


def write_csv(sample: ObservedSample, path) -> None:
    """Write ``z, y, <covariates>`` with 17 significant digits."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["z", "y", *sample.labels])
        for zi, yi, xi in zip(sample.z, sample.y, sample.X):
            w.writerow([int(zi), f"{yi:.17g}", *(f"{v:.17g}" for v in xi)])
