"""Observed bivariate samples split by the ordering of the two coordinates."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["BivariateSample", "InvalidDataError"]


class InvalidDataError(ValueError):
    """Observations are empty, non-finite or not strictly positive."""


@dataclass(frozen=True, eq=False)
class BivariateSample:
    """Pairs ``(y1, y2)`` with the index sets of ties, ``y1 < y2`` and ``y1 > y2``.

    Attributes
    ----------
    y1, y2 : ndarray
        Coordinates, strictly positive.
    i0, i1, i2 : ndarray of int
        Indices with ``y1 == y2``, ``y1 < y2`` and ``y1 > y2``.
    """

    y1: np.ndarray
    y2: np.ndarray
    i0: np.ndarray = field(init=False, repr=False)
    i1: np.ndarray = field(init=False, repr=False)
    i2: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        y1 = np.array(self.y1, dtype=float).ravel()
        y2 = np.array(self.y2, dtype=float).ravel()
        if y1.shape != y2.shape:
            raise InvalidDataError("y1 and y2 must have the same length")
        if y1.size == 0:
            raise InvalidDataError("sample is empty")
        bad = ~(np.isfinite(y1) & np.isfinite(y2) & (y1 > 0) & (y2 > 0))
        if bad.any():
            i = int(np.flatnonzero(bad)[0])
            raise InvalidDataError(
                f"observation {i} = ({y1[i]}, {y2[i]}) is not finite and strictly positive"
            )
        y1.flags.writeable = False
        y2.flags.writeable = False
        object.__setattr__(self, "y1", y1)
        object.__setattr__(self, "y2", y2)
        object.__setattr__(self, "i0", np.flatnonzero(y1 == y2))
        object.__setattr__(self, "i1", np.flatnonzero(y1 < y2))
        object.__setattr__(self, "i2", np.flatnonzero(y1 > y2))

    @classmethod
    def from_pairs(cls, pairs) -> BivariateSample:
        arr = np.asarray(pairs, dtype=float).reshape(-1, 2)
        return cls(arr[:, 0], arr[:, 1])

    @property
    def m(self) -> int:
        return int(self.y1.size)

    @property
    def m0(self) -> int:
        return int(self.i0.size)

    @property
    def m1(self) -> int:
        return int(self.i1.size)

    @property
    def m2(self) -> int:
        return int(self.i2.size)

    @property
    def maxima(self) -> np.ndarray:
        return np.maximum(self.y1, self.y2)

    def pairs(self) -> np.ndarray:
        return np.column_stack([self.y1, self.y2])

    def __len__(self) -> int:
        return self.m

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BivariateSample):
            return NotImplemented
        return np.array_equal(self.y1, other.y1) and np.array_equal(self.y2, other.y2)

    __hash__ = None  # type: ignore[assignment]
