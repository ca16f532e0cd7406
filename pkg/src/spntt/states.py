"""Indicator-pair assignments over binary variables.

A model over d binary variables is queried with one (x_k, xbar_k) pair per
variable: (1,0) and (0,1) encode the two observed values, (1,1) marginalizes
the variable out, and general non-negative pairs are allowed (used e.g. to
count induced trees with all-ones inputs).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Assignment:
    """d indicator pairs, stored as a (d, 2) non-negative float array."""

    pairs: np.ndarray

    def __post_init__(self):
        pairs = np.asarray(self.pairs, dtype=np.float64)
        if pairs.ndim != 2 or pairs.shape[1] != 2:
            raise ValueError(f"assignment must have shape (d, 2), got {pairs.shape}")
        if np.any(pairs < 0):
            raise ValueError("indicator pairs must be non-negative")
        object.__setattr__(self, "pairs", pairs)

    @property
    def num_variables(self) -> int:
        return self.pairs.shape[0]

    @classmethod
    def from_state(cls, state) -> "Assignment":
        """Complete state: one 0/1 value per variable."""
        bits = np.asarray(state)
        if not np.isin(bits, (0, 1)).all():
            raise ValueError("complete state must consist of 0/1 values")
        return cls(np.stack([bits, 1 - bits], axis=1).astype(np.float64))

    @classmethod
    def from_evidence(cls, num_variables: int, evidence: dict[int, int]) -> "Assignment":
        """Partial state: evidence variables pinned, the rest marginalized to (1,1)."""
        pairs = np.ones((num_variables, 2))
        for var, value in evidence.items():
            if not 0 <= var < num_variables:
                raise ValueError(f"evidence variable {var} out of range [0, {num_variables})")
            if value not in (0, 1):
                raise ValueError(f"evidence value for variable {var} must be 0 or 1, got {value}")
            pairs[var] = (1.0, 0.0) if value == 1 else (0.0, 1.0)
        return cls(pairs)

    @classmethod
    def all_ones(cls, num_variables: int) -> "Assignment":
        """Every pair (1,1): evaluating yields the partition function."""
        return cls(np.ones((num_variables, 2)))

    def is_complete(self) -> bool:
        return bool(np.isin(self.pairs, (0.0, 1.0)).all()
                    and (self.pairs.sum(axis=1) == 1.0).all())


def pairs_from_bits(bits: np.ndarray) -> np.ndarray:
    """Batch of complete states (n, d) 0/1 -> indicator pairs (n, d, 2)."""
    bits = np.asarray(bits, dtype=np.float64)
    return np.stack([bits, 1.0 - bits], axis=-1)


def enumerate_states(d: int, start: int = 0, stop: int | None = None) -> np.ndarray:
    """All complete states of d variables as an (n, d) 0/1 array.

    States are ordered by the integer whose k-th bit (LSB first) is variable
    k's value; ``start``/``stop`` select a contiguous index range so callers
    can stream over 2^d states in chunks.
    """
    if stop is None:
        stop = 1 << d
    codes = np.arange(start, stop, dtype=np.uint64)
    return (codes[:, None] >> np.arange(d, dtype=np.uint64)[None, :]).astype(np.uint8) & 1
