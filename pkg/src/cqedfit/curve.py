"""A generic one-dimensional data series shared by the simulator, fitters and file I/O."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np


@dataclass(frozen=True)
class SimCurve:
    """Abscissa/ordinate series with optional per-point uncertainty.

    ``meta`` carries labels and units (``x_label``, ``x_unit``, ``y_label``,
    ``y_unit``) plus any summary values the producer wants to attach.
    Arrays are stored read-only.
    """

    x: np.ndarray
    y: np.ndarray
    sigma: np.ndarray | None = None
    meta: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        x = np.array(self.x, dtype=float)
        y = np.array(self.y, dtype=float)
        if x.ndim != 1 or y.ndim != 1:
            raise ValueError("x and y must be one-dimensional")
        if x.shape != y.shape:
            raise ValueError(f"length mismatch: x has {x.size}, y has {y.size}")
        if x.size > 1 and not (np.all(np.diff(x) > 0) or np.all(np.diff(x) < 0)):
            raise ValueError("x must be strictly monotone")
        sigma = self.sigma
        if sigma is not None:
            sigma = np.array(sigma, dtype=float)
            if sigma.shape != x.shape:
                raise ValueError("sigma must match x in length")
            sigma.setflags(write=False)
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "meta", dict(self.meta))

    def __len__(self):
        return self.x.size

    def window(self, lo=-np.inf, hi=np.inf) -> SimCurve:
        """Sub-curve with ``lo <= x <= hi``."""
        m = (self.x >= lo) & (self.x <= hi)
        sigma = None if self.sigma is None else self.sigma[m]
        return SimCurve(self.x[m], self.y[m], sigma, self.meta)

    def with_meta(self, **extra) -> SimCurve:
        return SimCurve(self.x, self.y, self.sigma, {**self.meta, **extra})

    def equals(self, other: SimCurve) -> bool:
        """Exact (bitwise) equality of data arrays and metadata."""
        if not isinstance(other, SimCurve):
            return False
        if (self.sigma is None) != (other.sigma is None):
            return False
        same_sigma = self.sigma is None or np.array_equal(self.sigma, other.sigma)
        return (
            np.array_equal(self.x, other.x)
            and np.array_equal(self.y, other.y)
            and same_sigma
            and self.meta == other.meta
        )
