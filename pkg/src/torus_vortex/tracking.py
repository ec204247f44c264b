"""Vortex detection by plaquette phase winding, and frame-to-frame matching."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .torus import TWO_PI, min_image_diff, wrap

NEWTON_ITERS = 30
# frame-to-frame association radius, in grid spacings
MAX_JUMP_CELLS = 4.0


@dataclass(frozen=True)
class DetectedVortex:
    position: np.ndarray
    degree: int


def _wrapped_diff(a, b):
    """arg(b) - arg(a) reduced to (-pi, pi]."""
    d = np.angle(b * np.conj(a))
    return np.where(d == -np.pi, np.pi, d)


def _windings(values):
    u00 = values
    u10 = np.roll(values, -1, axis=0)
    u11 = np.roll(u10, -1, axis=1)
    u01 = np.roll(values, -1, axis=1)
    total = (
        _wrapped_diff(u00, u10)
        + _wrapped_diff(u10, u11)
        + _wrapped_diff(u11, u01)
        + _wrapped_diff(u01, u00)
    )
    return np.rint(total / TWO_PI).astype(int), (u00, u10, u01, u11)


def _bilinear_zero(c00, c10, c01, c11):
    """Zero of the bilinear interpolant on the unit square, by Newton from
    the centre; stacks of plaquettes are solved together."""
    s = np.full(c00.shape, 0.5)
    t = np.full(c00.shape, 0.5)
    a = c10 - c00
    b = c01 - c00
    c = c11 - c10 - c01 + c00
    for _ in range(NEWTON_ITERS):
        f = c00 + a * s + b * t + c * s * t
        fs = a + c * t
        ft = b + c * s
        # f is complex: two real equations in (s, t)
        det = (fs.real * ft.imag - ft.real * fs.imag)
        ok = np.abs(det) > 1e-300
        det = np.where(ok, det, 1.0)
        ds = (f.real * ft.imag - ft.real * f.imag) / det
        dt = (fs.real * f.imag - f.real * fs.imag) / det
        s = np.clip(s - np.where(ok, ds, 0.0), 0.0, 1.0)
        t = np.clip(t - np.where(ok, dt, 0.0), 0.0, 1.0)
    return s, t


def track_vortices(u) -> list[DetectedVortex]:
    """Vortices of a complex grid field.

    A plaquette whose four wrapped phase increments add up to +-2 pi holds a
    vortex of that degree; its position is the zero of the bilinear
    interpolant inside the plaquette.
    """
    values = getattr(u, "values", u)
    n = values.shape[0]
    w, (u00, u10, u01, u11) = _windings(values)
    ii, kk = np.nonzero(w)
    if len(ii) == 0:
        return []
    s, t = _bilinear_zero(u00[ii, kk], u10[ii, kk], u01[ii, kk], u11[ii, kk])
    pos = wrap(np.stack([(ii + s) / n, (kk + t) / n], axis=-1))
    return [DetectedVortex(p, int(d)) for p, d in zip(pos, w[ii, kk])]


def match(previous, current, max_jump):
    """Index map previous -> current by nearest neighbour of equal degree.

    Returns None when the counts differ or some vortex has no partner
    within ``max_jump`` (or two share one).
    """
    if len(previous) != len(current):
        return None
    order = []
    taken = set()
    for p in previous:
        best, best_d = None, max_jump
        for k, c in enumerate(current):
            if c.degree != p.degree or k in taken:
                continue
            d = float(np.linalg.norm(min_image_diff(c.position, p.position)))
            if d <= best_d:
                best, best_d = k, d
        if best is None:
            return None
        taken.add(best)
        order.append(best)
    return order


@dataclass
class TrackedPath:
    degree: int
    times: list
    positions: list

    @property
    def lifted(self) -> np.ndarray:
        """Positions unwrapped along the path (steps are assumed < 1/2)."""
        p = np.array(self.positions)
        steps = min_image_diff(p[1:], p[:-1])
        return np.concatenate([p[:1], p[0] + np.cumsum(steps, axis=0)])


class Tracker:
    """Accumulates per-vortex paths over frames; stops for good once the
    association fails (vortex count change or a jump beyond the limit)."""

    def __init__(self, n, max_jump_cells=MAX_JUMP_CELLS):
        self.max_jump = max_jump_cells / n
        self.paths: list[TrackedPath] = []
        self.active = True
        self._last = None

    def add(self, time, vortices):
        if not self.active:
            return
        if self._last is None:
            self.paths = [TrackedPath(v.degree, [time], [v.position]) for v in vortices]
            self._last = list(vortices)
            return
        order = match(self._last, vortices, self.max_jump)
        if order is None:
            self.active = False
            return
        cur = [vortices[k] for k in order]
        for path, v in zip(self.paths, cur):
            path.times.append(time)
            path.positions.append(v.position)
        self._last = cur
