"""Domain types and vector primitives shared by every stage of the pipeline.

All probability math is plain 64-bit float; a classification vector is a
1-D numpy array of length ``len(label_space)``. Types here are immutable
after construction and the operations are pure functions, so everything is
safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import (
    DuplicateClass,
    EmptyInput,
    IndexOutOfRange,
    LengthMismatch,
    ProbabilityOutOfRange,
)

# Slack allowed on "probabilities sum to at most one" checks.
PROBABILITY_SUM_SLACK = 1e-9

DEFAULT_TOP_N = 5


@dataclass(frozen=True)
class LabelSpace:
    """Ordered set of class labels; a label's position is its class id."""

    labels: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(str(l) for l in self.labels))
        if len(self.labels) < 2:
            raise ValueError("a label space needs at least two labels")
        if len(set(self.labels)) != len(self.labels):
            raise ValueError("labels must be unique")
        object.__setattr__(
            self, "_index", {label: i for i, label in enumerate(self.labels)}
        )

    @classmethod
    def of_size(cls, size: int, prefix: str = "class") -> "LabelSpace":
        """A generic space with labels ``<prefix>_0 .. <prefix>_{size-1}``."""
        if size < 2:
            raise ValueError("a label space needs at least two labels")
        return cls(tuple(f"{prefix}_{i}" for i in range(size)))

    @property
    def size(self) -> int:
        return len(self.labels)

    def index_of(self, label: str) -> int:
        """Class id of ``label``; raises KeyError for unknown labels."""
        return self._index[label]

    def __len__(self) -> int:
        return len(self.labels)


@dataclass(frozen=True)
class TopNResponse:
    """Truncated classification output: the n most probable classes.

    Entries are (class_index, probability) pairs in non-increasing
    probability order. Ties are canonicalised to ascending class index at
    construction, so two responses that carry the same mapping compare
    equal regardless of how the producer ordered tied entries.
    """

    entries: tuple[tuple[int, float], ...]

    def __post_init__(self):
        entries = tuple((int(c), float(p)) for c, p in self.entries)
        if not entries:
            raise EmptyInput("a response must carry at least one entry")
        indices = [c for c, _ in entries]
        if len(set(indices)) != len(indices):
            raise DuplicateClass(f"repeated class indices in {indices}")
        if any(c < 0 for c in indices):
            raise IndexOutOfRange(f"negative class index in {indices}")
        probs = [p for _, p in entries]
        if any(p < 0.0 or p > 1.0 for p in probs):
            raise ProbabilityOutOfRange(f"probability outside [0, 1] in {probs}")
        if any(a < b for a, b in zip(probs, probs[1:])):
            raise ValueError(f"probabilities must be non-increasing, got {probs}")
        if sum(probs) > 1.0 + PROBABILITY_SUM_SLACK:
            raise ProbabilityOutOfRange(f"probabilities sum to {sum(probs)} > 1")
        entries = tuple(sorted(entries, key=lambda e: (-e[1], e[0])))
        object.__setattr__(self, "entries", entries)

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def mass(self) -> float:
        """Total probability carried by the response."""
        return sum(p for _, p in self.entries)


class ModelId(NamedTuple):
    """A concrete model: (architecture id, weight-variant index)."""

    architecture: int
    variant: int

    def __str__(self) -> str:
        return f"{self.architecture}:{self.variant}"

    @classmethod
    def parse(cls, text: str) -> "ModelId":
        arch, _, variant = text.partition(":")
        return cls(int(arch), int(variant))


def expand_topn(response: TopNResponse, space: LabelSpace) -> np.ndarray:
    """Scatter a truncated response into a dense length-|L| vector.

    Position c holds the response's probability for class c; every class
    the response does not mention is exactly zero.
    """
    if len(response) > space.size:
        raise IndexOutOfRange(
            f"response carries {len(response)} entries for {space.size} classes"
        )
    values = np.zeros(space.size, dtype=np.float64)
    for class_index, probability in response.entries:
        if class_index >= space.size:
            raise IndexOutOfRange(
                f"class index {class_index} outside label space of size {space.size}"
            )
        values[class_index] = probability
    return values


def euclidean_distance(a, b) -> float:
    """Euclidean distance between two equal-length vectors."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise LengthMismatch(f"incompatible shapes {a.shape} and {b.shape}")
    return float(np.sqrt(np.sum((a - b) ** 2)))


def elementwise_mean(vectors: Sequence) -> np.ndarray:
    """Component-wise arithmetic mean of a non-empty list of vectors."""
    vectors = list(vectors)
    if not vectors:
        raise EmptyInput("mean of zero vectors")
    arrays = [np.asarray(v, dtype=np.float64) for v in vectors]
    length = arrays[0].shape
    if any(a.shape != length for a in arrays):
        raise LengthMismatch("vectors differ in length")
    return np.mean(np.stack(arrays), axis=0)


def nearest_index(candidates: np.ndarray, vector: np.ndarray) -> tuple[int, float]:
    """Row of ``candidates`` closest to ``vector`` in Euclidean distance.

    Exact distance ties resolve to the lowest row index. Returns
    (row index, distance).
    """
    candidates = np.asarray(candidates, dtype=np.float64)
    vector = np.asarray(vector, dtype=np.float64)
    if candidates.ndim != 2 or candidates.shape[1] != vector.shape[0]:
        raise LengthMismatch(
            f"candidate matrix {candidates.shape} does not match vector {vector.shape}"
        )
    if candidates.shape[0] == 0:
        raise EmptyInput("no candidate rows")
    distances = np.sqrt(np.sum((candidates - vector) ** 2, axis=1))
    index = int(np.argmin(distances))
    return index, float(distances[index])
