"""Records, the uniform partition of the proxy range, and estimation folds."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from cfbary.rng import stream

__all__ = [
    "IngestionError",
    "Record",
    "Dataset",
    "Partition",
    "CellAssignment",
    "CellCounts",
    "assign",
    "split_folds",
    "cell_counts",
    "group_weights",
]


class IngestionError(ValueError):
    """Input data violates the record contract."""


class Record(NamedTuple):
    v: float
    s: int
    score: float
    y: float | None = None


@dataclass(frozen=True, eq=False)
class Dataset:
    """Columnar collection of records.

    ``s`` holds integer group codes ``0..K-1``; ``labels[code]`` is the
    original label. ``features`` carries optional extra columns (used by the
    synthetic benchmark to train base models).
    """

    v: np.ndarray
    s: np.ndarray
    score: np.ndarray
    y: np.ndarray | None = None
    labels: tuple[str, ...] = ()
    features: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.ascontiguousarray(self.v, dtype=np.float64)
        s = np.ascontiguousarray(self.s, dtype=np.int64)
        score = np.ascontiguousarray(self.score, dtype=np.float64)
        n = v.size
        if s.size != n or score.size != n:
            raise IngestionError("v, s and score must have the same length")
        bad = np.flatnonzero(~((v >= 0.0) & (v <= 1.0)))
        if bad.size:
            raise IngestionError(f"record {bad[0]}: proxy v={float(v[bad[0]])!r} outside [0, 1]")
        bad = np.flatnonzero(~np.isfinite(score))
        if bad.size:
            raise IngestionError(f"record {bad[0]}: score is not finite")
        labels = tuple(str(x) for x in self.labels)
        if not labels:
            k = int(s.max()) + 1 if n else 0
            labels = tuple(str(i) for i in range(k))
        bad = np.flatnonzero((s < 0) | (s >= len(labels)))
        if bad.size:
            raise IngestionError(f"record {bad[0]}: group code {s[bad[0]]} outside 0..{len(labels) - 1}")
        y = self.y
        if y is not None:
            y = np.ascontiguousarray(y, dtype=np.float64)
            if y.size != n:
                raise IngestionError("y must have the same length as v")
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "score", score)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "labels", labels)

    @classmethod
    def from_records(cls, records: Iterable[Record], labels: Sequence[str] = ()) -> "Dataset":
        recs = list(records)
        ys = [r.y for r in recs]
        y = None if any(v is None for v in ys) else np.array(ys, dtype=np.float64)
        return cls(
            v=np.array([r.v for r in recs], dtype=np.float64),
            s=np.array([r.s for r in recs], dtype=np.int64),
            score=np.array([r.score for r in recs], dtype=np.float64),
            y=y,
            labels=tuple(labels),
        )

    @property
    def n(self) -> int:
        return int(self.v.size)

    @property
    def K(self) -> int:
        return len(self.labels)

    def __len__(self) -> int:
        return self.n

    def with_scores(self, score: np.ndarray) -> "Dataset":
        return Dataset(self.v, self.s, score, self.y, self.labels, self.features)

    def subset(self, idx) -> "Dataset":
        feats = {k: np.asarray(a)[idx] for k, a in self.features.items()}
        y = None if self.y is None else self.y[idx]
        return Dataset(self.v[idx], self.s[idx], self.score[idx], y, self.labels, feats)

    def records(self) -> list[Record]:
        ys = [None] * self.n if self.y is None else self.y.tolist()
        return [Record(float(a), int(b), float(c), d) for a, b, c, d in
                zip(self.v, self.s, self.score, ys)]


@dataclass(frozen=True)
class Partition:
    """``L`` equal-width cells on [0, 1]: ``[l/L, (l+1)/L)`` with the last closed.

    Cells are numbered from 0.
    """

    L: int

    def __post_init__(self):
        if int(self.L) != self.L or self.L < 1:
            from cfbary.ot1d import ContractError

            raise ContractError(f"number of intervals must be a positive integer, got {self.L!r}")

    def cell_index(self, v):
        idx = np.minimum(np.floor(np.asarray(v, dtype=np.float64) * self.L).astype(np.int64), self.L - 1)
        return int(idx) if idx.ndim == 0 else idx

    @property
    def edges(self) -> np.ndarray:
        return np.arange(self.L + 1) / self.L

    @property
    def midpoints(self) -> np.ndarray:
        return (np.arange(self.L) + 0.5) / self.L


@dataclass(frozen=True, eq=False)
class CellAssignment:
    """Record indices grouped by (cell, group).

    ``order[starts[c * K + s]:starts[c * K + s + 1]]`` are the indices of
    cell ``c``, group ``s``, in input order.
    """

    L: int
    K: int
    order: np.ndarray
    starts: np.ndarray

    def indices(self, cell: int, group: int) -> np.ndarray:
        k = cell * self.K + group
        return self.order[self.starts[k]:self.starts[k + 1]]

    @property
    def counts(self) -> np.ndarray:
        """``N[cell, group]``."""
        return np.diff(self.starts).reshape(self.L, self.K)


def _block_key(partition: Partition, data: Dataset) -> np.ndarray:
    return partition.cell_index(data.v) * data.K + data.s


def assign(partition: Partition, data: Dataset) -> CellAssignment:
    key = _block_key(partition, data)
    order = np.argsort(key, kind="stable")
    starts = np.searchsorted(key[order], np.arange(partition.L * data.K + 1), side="left")
    return CellAssignment(partition.L, data.K, order, starts)


def split_folds(cells: CellAssignment, seed: int) -> tuple[CellAssignment, CellAssignment]:
    """Seeded shuffle within each (cell, group), then halve.

    Fold 0 (quantiles) gets ``ceil(N/2)`` records, fold 1 (CDFs) ``floor(N/2)``.
    Each fold keeps the ``CellAssignment`` layout; blocks list indices in
    shuffled order.
    """
    n = cells.order.size
    nblocks = cells.starts.size - 1
    sizes = np.diff(cells.starts)
    block_of = np.repeat(np.arange(nblocks), sizes)
    # random keys indexed by record id, so the split does not depend on block layout
    keys = stream(seed, "folds").random(n)
    within = np.lexsort((keys[cells.order], block_of))
    shuffled = cells.order[within]
    rank = np.arange(n) - cells.starts[block_of]
    half0 = (sizes + 1) // 2
    in0 = rank < half0[block_of]
    s0 = np.concatenate(([0], np.cumsum(half0)))
    s1 = np.concatenate(([0], np.cumsum(sizes - half0)))
    return (
        CellAssignment(cells.L, cells.K, shuffled[in0], s0),
        CellAssignment(cells.L, cells.K, shuffled[~in0], s1),
    )


@dataclass(frozen=True, eq=False)
class CellCounts:
    N: np.ndarray
    p_hat: np.ndarray
    w_hat: np.ndarray


def cell_counts(cells: CellAssignment) -> CellCounts:
    N = cells.counts
    n = N.sum()
    return CellCounts(N=N, p_hat=N.sum(axis=1) / n, w_hat=N.sum(axis=0) / n)


def group_weights(data: Dataset) -> np.ndarray:
    """``w_s = (1/n) * #{i : S_i = s}``."""
    return np.bincount(data.s, minlength=data.K) / data.n
