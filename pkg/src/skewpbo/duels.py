"""Preference data containers and the constraint matrix they induce.

Each observation is one linear probit constraint on the latent function:
a preference row carries +1 at the winner column and -1 at the loser
column; a validity (classification) row carries +1 or -1 on one column.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import IndexOutOfRange, PreferenceOnInvalidPoint, SelfDuel


@dataclass(frozen=True)
class PreferenceDataset:
    """Distinct input points plus duels as (winner_idx, loser_idx) pairs."""

    points: np.ndarray
    duels: tuple

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        duels = tuple((int(w), int(loser)) for w, loser in self.duels)
        n = pts.shape[0]
        referenced = set()
        for w, loser in duels:
            if not (0 <= w < n and 0 <= loser < n):
                raise IndexOutOfRange(f"duel ({w}, {loser}) outside 0..{n - 1}")
            if w == loser:
                raise SelfDuel(f"point {w} dueled against itself")
            referenced.add(w)
            referenced.add(loser)
        if len(referenced) < n and duels:
            missing = sorted(set(range(n)) - referenced)
            raise IndexOutOfRange(f"points never referenced by any duel: {missing}")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "duels", duels)

    @property
    def n_points(self) -> int:
        return self.points.shape[0]

    @property
    def n_duels(self) -> int:
        return len(self.duels)


@dataclass(frozen=True)
class MixedDataset:
    """Preference data plus per-point validity labels.

    labels[i] is 1 (valid), 0 (non-valid), or None (never labeled; points
    that only ever served as references). Duels must not touch a point
    labeled non-valid.
    """

    points: np.ndarray
    duels: tuple
    labels: tuple

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        duels = tuple((int(w), int(loser)) for w, loser in self.duels)
        labels = tuple(None if v is None else int(v) for v in self.labels)
        n = pts.shape[0]
        if len(labels) != n:
            raise IndexOutOfRange("one label slot per point required")
        for v in labels:
            if v not in (None, 0, 1):
                raise ValueError(f"label {v!r} not in {{0, 1, None}}")
        referenced = {i for i, v in enumerate(labels) if v is not None}
        for w, loser in duels:
            if not (0 <= w < n and 0 <= loser < n):
                raise IndexOutOfRange(f"duel ({w}, {loser}) outside 0..{n - 1}")
            if w == loser:
                raise SelfDuel(f"point {w} dueled against itself")
            if labels[w] == 0 or labels[loser] == 0:
                raise PreferenceOnInvalidPoint(
                    f"duel ({w}, {loser}) references a point labeled non-valid"
                )
            referenced.add(w)
            referenced.add(loser)
        if len(referenced) < n and (duels or referenced):
            missing = sorted(set(range(n)) - referenced)
            raise IndexOutOfRange(f"points with neither a duel nor a label: {missing}")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "duels", duels)
        object.__setattr__(self, "labels", labels)

    @property
    def n_points(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True)
class DuelMatrix:
    """Constraint matrix W; rows are probit constraints, columns index the
    training points."""

    w: np.ndarray
    kind: str  # "preference" | "classification" | "mixed"

    def __post_init__(self):
        w = np.atleast_2d(np.asarray(self.w, dtype=float))
        if w.size == 0:
            w = w.reshape(0, w.shape[1] if w.ndim == 2 else 0)
        if self.kind not in ("preference", "classification", "mixed"):
            raise ValueError(f"unknown duel-matrix kind {self.kind!r}")
        object.__setattr__(self, "w", w)

    @property
    def n_rows(self) -> int:
        return self.w.shape[0]

    @property
    def n_points(self) -> int:
        return self.w.shape[1]


def build_duel_matrix(data: PreferenceDataset) -> DuelMatrix:
    """One row per duel: +1 at the winner column, -1 at the loser column."""
    w = np.zeros((data.n_duels, data.n_points))
    for k, (win, lose) in enumerate(data.duels):
        w[k, win] = 1.0
        w[k, lose] = -1.0
    return DuelMatrix(w=w, kind="preference")


def build_mixed_matrix(data: MixedDataset) -> DuelMatrix:
    """Validity rows stacked above preference rows.

    A labeled point contributes one row with 2*label - 1 at its column;
    unlabeled points contribute no validity row.
    """
    n = data.n_points
    labeled = [i for i, v in enumerate(data.labels) if v is not None]
    rows = np.zeros((len(labeled) + len(data.duels), n))
    for r, i in enumerate(labeled):
        rows[r, i] = 2.0 * data.labels[i] - 1.0
    for k, (win, lose) in enumerate(data.duels):
        rows[len(labeled) + k, win] = 1.0
        rows[len(labeled) + k, lose] = -1.0
    return DuelMatrix(w=rows, kind="mixed")


class PointRegistry:
    """Deduplicates training inputs by exact coordinate equality and hands
    out stable column indices."""

    def __init__(self, dim: int):
        self.dim = dim
        self._points: list[np.ndarray] = []
        self._index: dict[tuple, int] = {}

    def __len__(self) -> int:
        return len(self._points)

    def index_of(self, x) -> int:
        key = tuple(float(v) for v in np.atleast_1d(np.asarray(x, dtype=float)))
        if len(key) != self.dim:
            raise IndexOutOfRange(f"point of dim {len(key)}, registry dim {self.dim}")
        if key not in self._index:
            self._index[key] = len(self._points)
            self._points.append(np.array(key))
        return self._index[key]

    def lookup(self, x) -> int | None:
        key = tuple(float(v) for v in np.atleast_1d(np.asarray(x, dtype=float)))
        return self._index.get(key)

    def as_array(self) -> np.ndarray:
        if not self._points:
            return np.zeros((0, self.dim))
        return np.stack(self._points, axis=0)


@dataclass
class DuelLog:
    """Incrementally accumulated observations; emits immutable datasets."""

    dim: int
    registry: PointRegistry = field(init=False)
    duels: list = field(default_factory=list)
    labels: dict = field(default_factory=dict)  # point index -> 0/1

    def __post_init__(self):
        self.registry = PointRegistry(self.dim)

    def add_duel(self, winner, loser) -> tuple[int, int]:
        wi = self.registry.index_of(winner)
        li = self.registry.index_of(loser)
        if wi == li:
            raise SelfDuel("winner and loser are the same point")
        self.duels.append((wi, li))
        return wi, li

    def add_label(self, x, valid: bool) -> int:
        i = self.registry.index_of(x)
        self.labels[i] = 1 if valid else 0
        return i

    def preference_dataset(self) -> PreferenceDataset:
        return PreferenceDataset(points=self.registry.as_array(), duels=tuple(self.duels))

    def mixed_dataset(self) -> MixedDataset:
        n = len(self.registry)
        labels = tuple(self.labels.get(i) for i in range(n))
        return MixedDataset(points=self.registry.as_array(), duels=tuple(self.duels),
                            labels=labels)


def save_dataset(data, path) -> None:
    payload = {"points": np.asarray(data.points).tolist(),
               "duels": [list(d) for d in data.duels]}
    if isinstance(data, MixedDataset):
        payload["labels"] = list(data.labels)
    Path(path).write_text(json.dumps(payload, indent=1))


def load_dataset(path):
    payload = json.loads(Path(path).read_text())
    points = np.asarray(payload["points"], dtype=float)
    duels = tuple(tuple(d) for d in payload["duels"])
    if "labels" in payload and payload["labels"] is not None:
        return MixedDataset(points=points, duels=duels, labels=tuple(payload["labels"]))
    return PreferenceDataset(points=points, duels=duels)
