"""Polynomial quartic differential q(z) dz^4 driving the elliptic system."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class QuarticDifferential:
    """q(z) = sum_i coeffs[i] z^i with complex coefficients, not identically 0."""

    coeffs: np.ndarray

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.coeffs, dtype=complex))
        if c.ndim != 1 or c.size == 0:
            raise ValueError("coeffs must be a nonempty 1-d sequence")
        if not np.any(c != 0):
            raise ValueError("q must not vanish identically")
        object.__setattr__(self, "coeffs", c)

    @property
    def degree(self):
        nz = np.flatnonzero(self.coeffs != 0)
        return int(nz[-1])

    def __call__(self, z):
        z = np.asarray(z)
        out = np.zeros(z.shape, dtype=complex)
        for c in self.coeffs[::-1]:
            out = out * z + c
        return out

    def roots(self):
        """Roots listed with multiplicity (empty for constant q)."""
        c = self.coeffs[: self.degree + 1]
        if c.size == 1:
            return np.zeros(0, dtype=complex)
        return np.roots(c[::-1])

    def min_root_distance(self, z):
        """Distance from each point of ``z`` to the nearest root (inf if none)."""
        r = self.roots()
        z = np.asarray(z)
        if r.size == 0:
            return np.full(z.shape, np.inf)
        return np.min(np.abs(z[..., None] - r), axis=-1)

    def log_abs(self, z, floor=0.0):
        a = np.abs(self(z))
        if floor > 0.0:
            a = np.maximum(a, floor)
        with np.errstate(divide="ignore"):
            return np.log(a)

    def unwrapped_half_arg(self, z):
        """Continuous branch of (1/2) arg q over a zero-free rectangle grid.

        ``z`` must be a 2-d node grid.  Principal values are unwrapped along
        each row and the rows are aligned through the first column; this is
        consistent on a simply connected zero-free domain (winding zero).
        """
        phase = np.angle(self(z))
        rows = np.unwrap(phase, axis=1)
        col0 = np.unwrap(phase[:, 0])
        rows += (col0 - rows[:, 0])[:, None]
        return 0.5 * rows
