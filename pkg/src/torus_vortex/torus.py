"""Point arithmetic on the flat unit torus (R/Z)^2.

Points are plain float arrays whose last axis has length 2.  Wrapped
points live in [0, 1)^2; lifted points are their continuous
representatives in the universal cover R^2.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import StepTooLarge

TWO_PI = 2.0 * np.pi

# lift_step refuses to guess the winding beyond this torus distance
LIFT_THRESHOLD = 0.25
LATTICE_TOL = 1e-9


def wrap(p):
    """Reduce coordinates mod 1 into [0, 1)."""
    w = np.mod(np.asarray(p, dtype=float), 1.0)
    # x % 1.0 rounds to 1.0 for tiny negative x
    return np.where(w >= 1.0, 0.0, w)


def min_image_diff(p, r):
    """Representative of ``p - r`` with every component in [-0.5, 0.5).

    Ties (a component exactly half a period) resolve to -0.5, so the
    map is antisymmetric everywhere except on that boundary.
    """
    d = np.mod(np.asarray(p, dtype=float) - np.asarray(r, dtype=float) + 0.5, 1.0)
    d = np.where(d >= 1.0, 0.0, d)
    return d - 0.5


def torus_distance(p, r):
    return np.linalg.norm(min_image_diff(p, r), axis=-1)


def pair_distances(positions):
    """Matrix of torus distances between all points (diagonal is inf)."""
    pos = np.asarray(positions, dtype=float)
    dist = torus_distance(pos[:, None, :], pos[None, :, :])
    np.fill_diagonal(dist, np.inf)
    return dist


def min_pair_separation(config) -> float:
    """A quarter of the smallest pairwise torus distance."""
    pos = config.positions if isinstance(config, VortexConfiguration) else config
    if len(pos) < 2:
        raise ValueError("need at least two points")
    return 0.25 * float(pair_distances(pos).min())


def lift_step(prev, next_wrapped):
    """Continue a lifted path to the representative of ``next_wrapped``
    nearest to ``prev``.

    Works on single points or stacks of points.  Raises StepTooLarge if
    any point moved a torus distance of 0.25 or more, because the
    winding can no longer be trusted.
    """
    prev = np.asarray(prev, dtype=float)
    step = min_image_diff(next_wrapped, wrap(prev))
    moved = np.linalg.norm(step, axis=-1)
    if np.any(moved >= LIFT_THRESHOLD):
        raise StepTooLarge(
            f"point moved {float(np.max(moved)):.3g} >= {LIFT_THRESHOLD} in one step"
        )
    return prev + step


def lattice_residual(q, lifted, degrees) -> float:
    """Distance of (q - 2 pi sum d_j a_j) / 2 pi from the integer lattice."""
    base = np.asarray(degrees, dtype=float) @ np.asarray(lifted, dtype=float)
    off = np.asarray(q, dtype=float) / TWO_PI - base
    return float(np.max(np.abs(off - np.round(off))))


@dataclass(frozen=True)
class VortexConfiguration:
    """2N vortices on the torus together with the lifted momentum q.

    ``lifted`` carries the unwrapped path coordinates; ``positions`` is
    always ``wrap(lifted)``.  ``q`` must lie in 2 pi sum_j d_j a_j + 2 pi Z^2.
    """

    lifted: np.ndarray
    degrees: np.ndarray
    q: np.ndarray
    positions: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        lifted = np.array(self.lifted, dtype=float).reshape(-1, 2)
        degrees = np.array(self.degrees, dtype=int).reshape(-1)
        q = np.array(self.q, dtype=float).reshape(2)
        if len(degrees) != len(lifted):
            raise ValueError("one degree per vortex required")
        if len(degrees) == 0 or len(degrees) % 2:
            raise ValueError("need an even, nonzero number of vortices")
        if not np.all(np.abs(degrees) == 1):
            raise ValueError("degrees must be +1 or -1")
        if degrees.sum() != 0:
            raise ValueError("degrees must sum to zero on the torus")
        if not (np.all(np.isfinite(lifted)) and np.all(np.isfinite(q))):
            raise ValueError("non-finite coordinates")
        res = lattice_residual(q, lifted, degrees)
        if res > LATTICE_TOL * max(1.0, float(np.abs(lifted).max())):
            raise ValueError(
                f"q is not in 2pi*sum(d_j a_j) + 2pi Z^2 (off by {res:.3g} periods)"
            )
        for name, arr in (("lifted", lifted), ("degrees", degrees), ("q", q)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        pos = wrap(lifted)
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)

    @classmethod
    def from_positions(cls, positions, degrees, q=None):
        """Build a configuration whose lifted coordinates equal ``positions``.

        ``q=None`` (or ``"auto"``) picks the minimal-norm member of the
        admissible coset.
        """
        if q is None or (isinstance(q, str) and q == "auto"):
            from .energy import default_q0

            q = default_q0(positions, degrees)
        return cls(lifted=positions, degrees=degrees, q=q)

    @classmethod
    def _unchecked(cls, lifted, degrees, q):
        # for states produced by the integrator, which preserves the invariants
        self = object.__new__(cls)
        pos = wrap(lifted)
        for name, arr in (("lifted", lifted), ("degrees", degrees), ("q", q), ("positions", pos)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        return self

    @property
    def n_vortices(self) -> int:
        return len(self.degrees)

    def moved(self, new_lifted) -> "VortexConfiguration":
        """Configuration after the lifted points moved to ``new_lifted``,
        with q carried along the lift."""
        new_lifted = np.asarray(new_lifted, dtype=float).reshape(-1, 2)
        dq = TWO_PI * (self.degrees @ (new_lifted - self.lifted))
        return VortexConfiguration(new_lifted, self.degrees, self.q + dq)
