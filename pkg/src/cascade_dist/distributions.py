"""Result containers: cascade size distributions and conditional activation matrices."""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

NORMALIZATION_TOL = 1e-9
#: p_C(t/N) at or below this value leaves the conditional at t undefined.
EPS_DEFINED = 1e-15


@dataclass(frozen=True, eq=False)
class CascadeDistribution:
    """Probability mass over the final cascade size rho in {0, 1/N, ..., 1}.

    ``mass[t]`` is the probability that exactly ``t`` of the ``n`` nodes end up active.
    """

    mass: np.ndarray

    def __post_init__(self):
        mass = np.ascontiguousarray(self.mass, dtype=np.float64)
        if mass.ndim != 1 or mass.size < 1:
            raise ValidationError("distribution mass must be a non-empty 1-D array")
        object.__setattr__(self, "mass", mass)

    @property
    def n(self) -> int:
        return self.mass.size - 1

    @property
    def rho(self) -> np.ndarray:
        if self.n == 0:
            return np.zeros(1)
        return np.arange(self.n + 1) / self.n

    def total(self) -> float:
        return float(self.mass.sum())

    def check(self, tol: float = NORMALIZATION_TOL) -> "CascadeDistribution":
        if np.any(self.mass < 0):
            raise ValidationError(f"negative probability mass {self.mass.min():.3e}")
        if abs(self.total() - 1.0) > tol:
            raise ValidationError(f"distribution sums to {self.total():.15f}")
        return self

    @classmethod
    def point_mass(cls, n: int, t: int) -> "CascadeDistribution":
        mass = np.zeros(n + 1)
        mass[t] = 1.0
        return cls(mass)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("t,rho,prob\n")
        for t, (r, m) in enumerate(zip(self.rho.tolist(), self.mass.tolist())):
            buf.write(f"{t},{r!r},{m!r}\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "CascadeDistribution":
        rows = [ln.split(",") for ln in text.strip().splitlines()[1:] if ln.strip()]
        mass = np.zeros(len(rows))
        for row in rows:
            mass[int(row[0])] = float(row[2])
        return cls(mass)


@dataclass(frozen=True, eq=False)
class ConditionalActivationMatrix:
    """Entry ``(i, t)`` holds P(s_i = 1 | C = t/N); undefined entries are NaN.

    ``defined`` marks the entries that carry a value. An entry is undefined
    when the conditioning event has (numerically) zero probability.
    """

    values: np.ndarray
    defined: np.ndarray

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def filled(self, fill: float = 0.0) -> np.ndarray:
        return np.where(self.defined, self.values, fill)

    def column_sum_error(self) -> float:
        """Largest |sum_i P(s_i=1|C=t/N) - t| over columns where every entry is defined."""
        cols = np.all(self.defined, axis=0)
        if not cols.any():
            return 0.0
        sums = self.values[:, cols].sum(axis=0)
        return float(np.max(np.abs(sums - np.nonzero(cols)[0])))

    def to_csv(self, labels=None) -> str:
        n = self.n
        buf = io.StringIO()
        buf.write("node," + ",".join(f"t{t}" for t in range(n + 1)) + ",masked\n")
        for i in range(n):
            name = labels[i] if labels is not None else str(i)
            cells = [repr(float(v)) if d else "" for v, d in zip(self.values[i], self.defined[i])]
            buf.write(f"{name},{','.join(cells)},{int((~self.defined[i]).sum())}\n")
        return buf.getvalue()
