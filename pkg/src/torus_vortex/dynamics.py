"""Mixed gradient/Hamiltonian vortex dynamics.

Each vortex obeys  (I - lam d_j J) a_j' = -(1/pi) grad_{a_j} W(a; q(a))
with J = [[0, 1], [-1, 0]].  Because J^2 = -I the system inverts to
a_j' = -(I + lam d_j J) grad_j W / (pi (1 + lam^2)).

The integrator is classical RK4 on the lifted coordinates.  q is never
integrated separately: it is the lift q0 + 2 pi sum_j d_j (a_j - a_j(0)).
Close to a collision the remainder of each macro step is cut into equal
substeps so that no vortex travels more than ``REFINE_ETA`` times the
current minimum separation per substep.  Fast steps are also sampled in
between the RK4 nodes by cubic Hermite interpolation, which keeps the
trapezoid quadrature of the dissipation honest.  Both rules depend only on
the state, so runs are bit-for-bit reproducible.
"""

from __future__ import annotations

import csv
import enum
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .energy import W_and_grad_raw, _triu, grad_W_all, grad_W_raw, renormalized_W
from .errors import CollisionError
from .green import GreenTable, eval_gradF
from .torus import LIFT_THRESHOLD, TWO_PI, VortexConfiguration, pair_distances

log = logging.getLogger(__name__)

CENTER = np.array([0.5, 0.5])
REFINE_ETA = 0.004
# recorded samples are spaced so no vortex moves more than SAMPLE_ETA * sep
# between consecutive samples; extra samples come from dense output
SAMPLE_ETA = 0.0004
MAX_DENSE = 32
MIN_STEP_FRACTION = 2.0**-40
MAX_HALVINGS = 8


class StopReason(str, enum.Enum):
    REACHED_TMAX = "ReachedTmax"
    COLLISION = "Collision"
    STEP_FAILURE = "StepFailure"


@dataclass(frozen=True)
class OdeParams:
    lam: float
    dt: float
    t_max: float
    collision_stop_radius: float = 1e-3
    sample_stride: int = 1

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.t_max < 0:
            raise ValueError("t_max must be non-negative")
        if self.sample_stride < 1:
            raise ValueError("sample_stride must be >= 1")


@dataclass
class TrajectoryRecord:
    lam: float
    times: list = field(default_factory=list)
    configurations: list = field(default_factory=list)
    W_series: list = field(default_factory=list)
    xi_series: list = field(default_factory=list)
    speed_series: list = field(default_factory=list)
    stop_reason: StopReason = StopReason.REACHED_TMAX
    collision_pairs: list = field(default_factory=list)

    def append(self, time, config, W, velocities):
        self.times.append(float(time))
        self.configurations.append(config)
        self.W_series.append(float(W))
        self.xi_series.append(first_integral_xi(config, self.lam))
        self.speed_series.append(np.linalg.norm(velocities, axis=1))

    @property
    def lifted(self) -> np.ndarray:
        """Lifted positions stacked as (samples, 2N, 2)."""
        return np.array([c.lifted for c in self.configurations])

    @property
    def final(self) -> VortexConfiguration:
        return self.configurations[-1]


# --------------------------------------------------------------------------
# vector field


def _mobility(degrees, lam):
    """Stack of -(I + lam d_j J) / (pi (1 + lam^2)), one 2x2 block per vortex."""
    J = np.array([[0.0, 1.0], [-1.0, 0.0]])
    d = np.asarray(degrees, dtype=float)[:, None, None]
    return -(np.eye(2) + lam * d * J) / (np.pi * (1.0 + lam * lam))


def _apply_mobility(grad, degrees, lam):
    return np.einsum("jab,jb->ja", _mobility(degrees, lam), grad)


def velocity_all(c: VortexConfiguration, t: GreenTable, lam: float) -> np.ndarray:
    return _apply_mobility(grad_W_all(c, t), c.degrees, lam)


def velocity(c: VortexConfiguration, t: GreenTable, lam: float, j: int) -> np.ndarray:
    return velocity_all(c, t, lam)[j]


def first_integral_xi(c: VortexConfiguration, lam: float) -> np.ndarray:
    """sum_j a_j - lam J sum_j d_j a_j on lifted coordinates."""
    s = c.lifted.sum(axis=0)
    w = c.degrees @ c.lifted
    return s - lam * np.array([w[1], -w[0]])


# --------------------------------------------------------------------------
# shared RK4 driver


class _FullSystem:
    def __init__(self, c0, table, lam):
        self.c0, self.table, self.lam = c0, table, lam
        self.y0 = c0.lifted.ravel().copy()
        self._dq = TWO_PI * c0.degrees.astype(float)
        self._mob = _mobility(c0.degrees, lam)

    def _q(self, lifted):
        # q follows the lift: q0 + 2 pi sum_j d_j (a_j - a_j(0))
        return self.c0.q + self._dq @ (lifted - self.c0.lifted)

    def deriv(self, y):
        lifted = y.reshape(-1, 2)
        # pair differences are reduced mod 1, so lifted coordinates serve as positions
        grad = grad_W_raw(lifted, self.c0.degrees, self._q(lifted), self.table)
        vel = np.einsum("jab,jb->ja", self._mob, grad)
        return vel.ravel(), vel

    def observe(self, y):
        return self.observe_many(y[None])[0]

    def observe_many(self, ys):
        """Velocity, configuration, W and separation for a batch of states."""
        lifted = ys.reshape(len(ys), -1, 2).copy()
        q = self.c0.q + (lifted - self.c0.lifted).transpose(0, 2, 1) @ self._dq
        W, grad, sep = W_and_grad_raw(lifted, self.c0.degrees, q, self.table)
        vel = np.einsum("jab,sjb->sja", self._mob, grad)
        d = self.c0.degrees
        return [
            (vel[i].ravel(), vel[i], VortexConfiguration._unchecked(lifted[i], d, q[i]),
             float(W[i]), float(sep[i]))
            for i in range(len(ys))
        ]


class _ReducedSystem:
    degrees: np.ndarray

    def __init__(self, alpha0, beta0, table, lam):
        self.table, self.lam = table, lam
        self.y0 = np.array([alpha0, beta0], dtype=float)

    def deriv(self, y):
        dy, vel = self.rates(np.asarray(y, dtype=float)[None])
        return dy[0], vel[0]

    def observe(self, y):
        return self.observe_many(y[None])[0]

    def observe_many(self, ys):
        ys = np.asarray(ys, dtype=float)
        lifted, q = self.states(ys)
        W, _, sep = W_and_grad_raw(lifted, self.degrees, q, self.table)
        dy, vel = self.rates(ys)
        return [
            (dy[i], vel[i], VortexConfiguration._unchecked(lifted[i], self.degrees, q[i]),
             float(W[i]), float(sep[i]))
            for i in range(len(ys))
        ]


class _Symmetric2V(_ReducedSystem):
    degrees = np.array([1, -1])

    def states(self, ys):
        a, b = ys[:, 0], ys[:, 1]
        lifted = CENTER + np.stack([np.stack([a, b], -1), np.stack([-a, b], -1)], axis=1)
        q = np.stack([4 * np.pi * a, np.zeros_like(a)], -1)
        return lifted, q

    def rates(self, ys):
        a = ys[:, 0]
        pts = np.stack([2 * a, np.zeros_like(a)], -1)
        g = eval_gradF(self.table, pts).reshape(-1, 2)[:, 0] + 4 * np.pi * a
        da = -2.0 * g / (1.0 + self.lam**2)
        db = 2.0 * self.lam * g / (1.0 + self.lam**2)
        vel = np.stack([np.stack([da, db], -1), np.stack([-da, db], -1)], axis=1)
        return np.stack([da, db], -1), vel


class _Symmetric4V(_ReducedSystem):
    degrees = np.array([1, 1, -1, -1])
    _SIGNS = np.array([[1, 1], [-1, -1], [-1, 1], [1, -1]], dtype=float)

    def states(self, ys):
        lifted = CENTER + ys[:, None, :] * self._SIGNS
        return lifted, np.zeros((len(ys), 2))

    def rates(self, ys):
        a, b = 2 * ys[:, 0], 2 * ys[:, 1]
        zero = np.zeros_like(a)
        pts = np.stack([np.stack([a, b], -1), np.stack([a, zero], -1), np.stack([zero, b], -1)], axis=1)
        g = eval_gradF(self.table, pts.reshape(-1, 2)).reshape(-1, 3, 2)
        fx = g[:, 0, 0] - g[:, 1, 0]
        fy = g[:, 0, 1] - g[:, 2, 1]
        lam = self.lam
        s = 2.0 / (1.0 + lam * lam)
        dy = s * np.stack([fx + lam * fy, -lam * fx + fy], -1)
        vel = dy[:, None, :] * self._SIGNS
        return dy, vel


def _rk4(system, y, h, k1):
    k2, _ = system.deriv(y + 0.5 * h * k1)
    k3, _ = system.deriv(y + 0.5 * h * k2)
    k4, _ = system.deriv(y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _min_distance(positions):
    j, k = _triu(len(positions))
    diff = positions[j] - positions[k]
    diff -= np.round(diff)
    return float(np.sqrt(np.min(np.einsum("pi,pi->p", diff, diff))))


def _colliding_pairs(config, radius):
    dist = pair_distances(config.positions)
    dmin = dist.min()
    j, k = np.nonzero(np.triu(dist < max(radius, dmin * (1 + 1e-6)), 1))
    return [(int(a), int(b)) for a, b in zip(j, k)]


def _substep(remaining, vel, sep):
    """Length of the next substep and whether it closes the macro step.

    The rest of the macro step is cut into the fewest equal pieces over
    which no vortex travels more than REFINE_ETA * sep.
    """
    vmax = float(np.sqrt(np.max(np.einsum("pi,pi->p", vel, vel))))
    if vmax * remaining <= REFINE_ETA * sep:
        return remaining, True
    pieces = np.ceil(vmax * remaining / (REFINE_ETA * sep))
    return remaining / pieces, False


def _drive(system, table, p: OdeParams) -> TrajectoryRecord:
    rec = TrajectoryRecord(lam=p.lam)
    y = system.y0.copy()
    k1, vel, config, W, sep = system.observe(y)
    rec.append(0.0, config, W, vel)
    if sep <= p.collision_stop_radius:
        return _collided(rec, config, p)

    n_macro = int(round(p.t_max / p.dt))
    h_min = p.dt * MIN_STEP_FRACTION
    for step in range(n_macro):
        tau = 0.0  # progress inside the current macro step
        split = False
        while True:
            h, last = _substep(p.dt - tau, vel, sep)
            for _ in range(MAX_HALVINGS + 1):
                y_new = _rk4(system, y, h, k1)
                # the lift_step precondition: no point may move 0.25 or more
                moved = (y_new - y).reshape(-1, 2)
                if np.max(np.einsum("pi,pi->p", moved, moved)) < LIFT_THRESHOLD**2:
                    break
                h, last = 0.5 * h, False
            else:
                return _fail(rec)
            if h < h_min:
                return _fail(rec)
            split = split or not last
            t_prev = step * p.dt + tau
            tau = p.dt if last else tau + h
            time = (step + 1) * p.dt if last else step * p.dt + tau
            node = system.observe(y_new)
            m = _dense_count(h, vel, sep)
            if m > 1:
                # cubic Hermite dense output between the RK4 nodes
                theta = np.arange(1, m) / m
                dense = system.observe_many(_hermite(y, y_new, k1, node[0], h, theta))
                for th, (_, vel_i, cfg_i, W_i, sep_i) in zip(theta, dense):
                    rec.append(t_prev + h * th, cfg_i, W_i, vel_i)
                    if sep_i < p.collision_stop_radius:
                        return _collided(rec, cfg_i, p)
            y = y_new
            k1, vel, config, W, sep = node
            collided = sep < p.collision_stop_radius
            split = split or m > 1
            if collided or split or (last and (step + 1) % p.sample_stride == 0):
                rec.append(time, config, W, vel)
            if collided:
                return _collided(rec, config, p)
            if last:
                break
    if rec.times[-1] < n_macro * p.dt:
        rec.append(n_macro * p.dt, config, W, vel)
    return rec


def _collided(rec, config, p):
    rec.stop_reason = StopReason.COLLISION
    rec.collision_pairs = _colliding_pairs(config, p.collision_stop_radius)
    return rec


def _dense_count(h, vel, sep):
    vmax = float(np.sqrt(np.max(np.einsum("pi,pi->p", vel, vel))))
    return int(min(MAX_DENSE, max(1, np.ceil(vmax * h / (SAMPLE_ETA * sep)))))


def _hermite(y0, y1, f0, f1, h, theta):
    th = theta[:, None]
    h00 = (1 + 2 * th) * (1 - th) ** 2
    h10 = th * (1 - th) ** 2
    h01 = th * th * (3 - 2 * th)
    h11 = th * th * (th - 1)
    return h00 * y0 + h10 * h * f0 + h01 * y1 + h11 * h * f1


def _fail(rec):
    log.warning("step failure after t=%.6g", rec.times[-1])
    rec.stop_reason = StopReason.STEP_FAILURE
    return rec


def integrate(c0: VortexConfiguration, t: GreenTable, p: OdeParams) -> TrajectoryRecord:
    """RK4 solution of the reduced law until t_max or a collision."""
    return _drive(_FullSystem(c0, t, p.lam), t, p)


# --------------------------------------------------------------------------
# symmetric reductions


def two_vortex_config(alpha, beta) -> VortexConfiguration:
    """a_1 = c + (alpha, beta), a_2 = c + (-alpha, beta), d = (+1, -1),
    q = (4 pi alpha, 0)."""
    pos = CENTER + np.array([[alpha, beta], [-alpha, beta]])
    return VortexConfiguration(pos, [1, -1], [4 * np.pi * alpha, 0.0])


def four_vortex_config(alpha, beta) -> VortexConfiguration:
    """Four-fold symmetric pattern with d = (+1, +1, -1, -1) and q = 0."""
    off = np.array([[alpha, beta], [-alpha, -beta], [-alpha, beta], [alpha, -beta]])
    return VortexConfiguration(CENTER + off, [1, 1, -1, -1], [0.0, 0.0])


def symmetric_2v(alpha0, beta0, lam, p: OdeParams, t: GreenTable) -> TrajectoryRecord:
    """Integrate the scalar (alpha, beta) law of the mirror-symmetric pair.

    alpha' = -2 (F_x(2 alpha, 0) + 4 pi alpha) / (1 + lam^2),
    beta'  =  2 lam (F_x(2 alpha, 0) + 4 pi alpha) / (1 + lam^2).
    """
    if abs(2 * alpha0 - np.round(2 * alpha0)) < 1e-10:
        raise CollisionError("the two vortices coincide")
    return _drive(_Symmetric2V(alpha0, beta0, t, lam), t, _with_lam(p, lam))


def symmetric_4v(alpha0, beta0, lam, p: OdeParams, t: GreenTable) -> TrajectoryRecord:
    """Integrate the scalar (alpha, beta) law of the four-fold pattern."""
    for v in (2 * alpha0, 2 * beta0):
        if abs(v - np.round(v)) < 1e-10:
            raise CollisionError("two of the four vortices coincide")
    return _drive(_Symmetric4V(alpha0, beta0, t, lam), t, _with_lam(p, lam))


def _with_lam(p, lam):
    if p.lam == lam:
        return p
    return OdeParams(lam, p.dt, p.t_max, p.collision_stop_radius, p.sample_stride)


# --------------------------------------------------------------------------
# diagnostics


def dissipation_residual(rec: TrajectoryRecord) -> float:
    """max_t | pi int_0^t sum_j |a_j'|^2 ds + W(t) - W(0) | (trapezoid rule)."""
    if len(rec.times) < 2:
        raise ValueError("need at least two samples")
    t = np.asarray(rec.times)
    f = np.array([np.sum(s**2) for s in rec.speed_series])
    W = np.asarray(rec.W_series)
    dissipated = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(t) * (f[1:] + f[:-1]))])
    return float(np.max(np.abs(np.pi * dissipated + W - W[0])))


def xi_drift(rec: TrajectoryRecord) -> float:
    xi = np.asarray(rec.xi_series)
    return float(np.max(np.abs(xi - xi[0])))


CSV_HEADER = ["t", "j", "x", "y", "lx", "ly", "qx", "qy", "W", "xix", "xiy", "speed"]


def _fmt(v):
    return format(float(v), ".17g")


def write_trajectory_csv(rec: TrajectoryRecord, path):
    """One row per (sample, vortex); vortices numbered from 1."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for time, c, W, xi, sp in zip(
            rec.times, rec.configurations, rec.W_series, rec.xi_series, rec.speed_series
        ):
            for j in range(c.n_vortices):
                w.writerow(
                    [_fmt(time), j + 1]
                    + [_fmt(v) for v in (*c.positions[j], *c.lifted[j], *c.q, W, *xi, sp[j])]
                )
    tmp.replace(path)
