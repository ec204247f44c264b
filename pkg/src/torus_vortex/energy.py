"""Renormalized energy W(a; q) of vortices on the torus and its gradient."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import CollisionError
from .green import F_and_gradF_reduced, GreenTable, _F_reduced, _gradF_reduced
from .torus import TWO_PI, VortexConfiguration

COLLISION_TOL = 1e-10


@dataclass(frozen=True)
class EnergyReport:
    W: float
    interaction_part: float
    momentum_part: float
    W_eps: float | None = None
    epsilon: float | None = None
    gamma: float | None = None


def _pair_diffs(positions, m):
    # positions may carry leading batch axes: (..., m, 2)
    j, k = _triu(m)
    diff = positions[..., j, :] - positions[..., k, :]
    diff -= np.round(diff)
    r = np.sqrt(np.einsum("...i,...i->...", diff, diff))
    if r.min() < COLLISION_TOL:
        raise CollisionError("two vortices coincide")
    return j, k, diff, r


def renormalized_W(c: VortexConfiguration, t: GreenTable) -> EnergyReport:
    """W = -pi sum_{j != k} d_j d_k F(a_j - a_k) + |q|^2 / 2.

    F is even, so each unordered pair is evaluated once and counted twice.
    """
    j, k, diff, r = _pair_diffs(c.positions, c.n_vortices)
    d = c.degrees
    inter = -2.0 * np.pi * float(np.dot(d[j] * d[k], _F_reduced(t, diff, r)))
    mom = 0.5 * float(c.q @ c.q)
    return EnergyReport(W=inter + mom, interaction_part=inter, momentum_part=mom)


def grad_W_all(c: VortexConfiguration, t: GreenTable) -> np.ndarray:
    """Gradients of W with respect to every a_j, shape (2N, 2)."""
    return grad_W_raw(c.positions, c.degrees, c.q, t)


def grad_W_raw(positions, degrees, q, t: GreenTable) -> np.ndarray:
    """grad_W_all on bare arrays (no configuration validation)."""
    _, _, diff, r = _pair_diffs(positions, len(degrees))
    g = _gradF_reduced(t, diff, r)
    # S_j = sum_{k != j} d_k grad F(a_j - a_k), using oddness of grad F
    s = _incidence(tuple(degrees)) @ g
    return TWO_PI * degrees[:, None] * (q - s)


def W_and_grad_raw(positions, degrees, q, t: GreenTable):
    """(W, gradients, minimum pair distance) from one table lookup.

    Accepts a batch of states: positions (S, 2N, 2) with q (S, 2) gives
    arrays of length S.
    """
    positions = np.asarray(positions, dtype=float)
    q = np.asarray(q, dtype=float)
    j, k, diff, r = _pair_diffs(positions, len(degrees))
    shape = r.shape
    F, g = F_and_gradF_reduced(t, diff.reshape(-1, 2), r.reshape(-1))
    F, g = F.reshape(shape), g.reshape(shape + (2,))
    W = -2.0 * np.pi * (F @ (degrees[j] * degrees[k])) + 0.5 * np.einsum("...i,...i->...", q, q)
    s = np.einsum("jp,...pi->...ji", _incidence(tuple(degrees)), g)
    grad = TWO_PI * degrees[:, None] * (q[..., None, :] - s)
    return W, grad, r.min(axis=-1)


@lru_cache(maxsize=None)
def _triu(m):
    return np.triu_indices(m, 1)


@lru_cache(maxsize=None)
def _incidence(degrees):
    d = np.array(degrees, dtype=float)
    j, k = _triu(len(d))
    a = np.zeros((len(d), len(j)))
    a[j, np.arange(len(j))] = d[k]
    a[k, np.arange(len(j))] = -d[j]
    return a


def grad_W(c: VortexConfiguration, t: GreenTable, j: int) -> np.ndarray:
    """2 pi d_j (q - sum_{k != j} d_k grad F(a_j - a_k))."""
    return grad_W_all(c, t)[j]


def W_eps(c: VortexConfiguration, t: GreenTable, eps: float, gamma: float) -> EnergyReport:
    """Core-regularised energy 2N (pi log(1/eps) + gamma) + W."""
    if not 0 < eps <= 1:
        raise ValueError("eps must lie in (0, 1]")
    rep = renormalized_W(c, t)
    core = c.n_vortices * (np.pi * np.log(1.0 / eps) + gamma)
    return EnergyReport(
        W=rep.W,
        interaction_part=rep.interaction_part,
        momentum_part=rep.momentum_part,
        W_eps=core + rep.W,
        epsilon=eps,
        gamma=gamma,
    )


def lift_q(c: VortexConfiguration, displacements) -> np.ndarray:
    """q + 2 pi sum_j d_j da_j for lifted (unwrapped) increments da_j."""
    disp = np.asarray(displacements, dtype=float).reshape(-1, 2)
    return c.q + TWO_PI * (c.degrees @ disp)


def default_q0(positions, degrees) -> np.ndarray:
    """Minimal-norm element of 2 pi sum_j d_j a_j + 2 pi Z^2.

    Per component the offset k minimises |b + k| with b = sum_j d_j a_j;
    on a tie the smaller k wins.
    """
    d = np.asarray(degrees, dtype=float)
    if d.sum() != 0:
        raise ValueError("degrees must sum to zero")
    b = d @ np.asarray(positions, dtype=float).reshape(-1, 2)
    k = np.ceil(-b - 0.5)
    return TWO_PI * (b + k)
