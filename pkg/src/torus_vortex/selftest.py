"""Invariant checks behind ``torus-vortex selftest``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import (
    OdeParams,
    dissipation_residual,
    four_vortex_config,
    integrate,
    symmetric_4v,
    xi_drift,
)
from .energy import grad_W_all, renormalized_W
from .fields import harmonic_current, nudge_to_grid, ring_energy
from .green import GreenTable, eval_F, eval_gradF, oracle_F
from .torus import VortexConfiguration, pair_distances


@dataclass(frozen=True)
class Check:
    name: str
    measured: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.measured) and self.measured <= self.tolerance)


def _random_points(rng, m):
    # keep clear of the singular lattice point
    p = rng.uniform(0.0, 1.0, size=(m, 2))
    far = np.linalg.norm(p - np.round(p), axis=1) > 0.02
    return p[far]


def green_checks(t: GreenTable, rng, with_oracle=True):
    p = _random_points(rng, 100)
    F = eval_F(t, p)
    out = [
        Check("green F(-x,y)=F(x,y)", np.abs(eval_F(t, p * [-1, 1]) - F).max(), 1e-9),
        Check("green F(x,-y)=F(x,y)", np.abs(eval_F(t, p * [1, -1]) - F).max(), 1e-9),
        Check("green F(y,x)=F(x,y)", np.abs(eval_F(t, p[:, ::-1]) - F).max(), 1e-9),
        Check("green F(x+1,y)=F(x,y)", np.abs(eval_F(t, p + [1, 0]) - F).max(), 1e-9),
        Check("green gradF odd", np.abs(eval_gradF(t, p) + eval_gradF(t, -p)).max(), 1e-9),
    ]
    s = np.linspace(0.05, 0.95, 19)
    edges = []
    for fixed in (0.0, 0.5):
        gx = eval_gradF(t, np.stack([np.full_like(s, fixed), s], axis=-1))[:, 0]
        gy = eval_gradF(t, np.stack([s, np.full_like(s, fixed)], axis=-1))[:, 1]
        edges += [np.abs(gx).max(), np.abs(gy).max()]
    out.append(Check("green zero normal derivative on symmetry lines", max(edges), 1e-8))
    if with_oracle:
        q = np.array([[0.3, 0.15], [0.5, 0.5], [0.1, 0.4], [0.27, 0.81]])
        err = max(abs(float(eval_F(t, x)) - oracle_F(x, K=512)) for x in q)
        out.append(Check("green table vs lattice-sum oracle", err, 1e-7))
    return out


def _lifted_W(c, j, i, delta, t):
    lifted = c.lifted.copy()
    lifted[j, i] += delta
    return renormalized_W(c.moved(lifted), t).W


def gradient_checks(t: GreenTable, rng, n_configs=5, rel_tol=1e-5):
    rel, total = 0.0, 0.0
    for k in range(n_configs):
        N = 1 + k % 3
        while True:
            pos = rng.uniform(0, 1, size=(2 * N, 2))
            c = VortexConfiguration.from_positions(pos, [1] * N + [-1] * N)
            if pair_distances(pos).min() > 0.1:
                break
        g = grad_W_all(c, t)
        fd = np.zeros_like(g)
        h = 1e-5
        for j in range(2 * N):
            for i in range(2):
                fd[j, i] = (_lifted_W(c, j, i, h, t) - _lifted_W(c, j, i, -h, t)) / (2 * h)
        rel = max(rel, float(np.abs(fd - g).max() / np.abs(g).max()))
        total = max(total, float(np.abs(g.sum(axis=0)).max()))
    return [
        Check("grad W vs lifted finite differences (relative)", rel, rel_tol),
        Check("sum of grad W", total, 1e-8),
    ]


def dynamics_checks(t: GreenTable, quick=False):
    t_max = 0.005 if quick else 1.0
    c = four_vortex_config(-0.15, 0.2)
    p = OdeParams(lam=1.0, dt=1e-4, t_max=t_max)
    rec = integrate(c, t, p)
    W0 = rec.W_series[0]
    out = [
        Check("xi drift along the flow", xi_drift(rec), 1e-8),
        Check("dissipation identity residual / (1+|W0|)", dissipation_residual(rec) / (1 + abs(W0)), 1e-5),
    ]
    short = OdeParams(lam=1.0, dt=1e-4, t_max=0.01)
    red = symmetric_4v(-0.15, 0.2, 1.0, short, t)
    full = integrate(c, t, short)
    dev = float(np.abs(red.lifted[-1] - full.lifted[-1]).max()) if len(red.times) == len(full.times) else np.inf
    out.append(Check("4-vortex reduction vs full system", dev, 1e-7))
    return out


def ring_checks(t: GreenTable, n=512):
    c = nudge_to_grid(four_vortex_config(-0.25, 0.25), n)
    N = c.n_vortices // 2
    j = harmonic_current(c, t, n)
    e = {r: ring_energy(j, c, r) for r in (0.1, 0.05)}
    ratio = (e[0.05] - e[0.1]) / (2 * N * np.pi * np.log(2))
    A = [e[r] + 2 * N * np.pi * np.log(r) for r in (0.1, 0.05)]
    # fit A(rho) = A0 + C rho^2 through both radii
    A0 = (4 * A[1] - A[0]) / 3
    target = renormalized_W(c, t).W - 2 * N * np.pi * t.regular_part_at_origin
    return [
        Check("ring energy halving increment / (2N pi log 2) - 1", abs(ratio - 1), 0.02),
        Check("ring energy constant vs W - 2N pi c0", abs(A0 - target), 0.05),
    ]


def run_checks(t: GreenTable, quick=False, seed=20240611):
    rng = np.random.default_rng(seed)
    out = green_checks(t, rng, with_oracle=not quick)
    # F and grad F are interpolated separately; their mismatch is O(h^3) in
    # the table spacing, so coarse tables get a looser tolerance
    rel_tol = 1e-5 if t.n_table >= 1024 else 1e-3
    out += gradient_checks(t, rng, n_configs=3 if quick else 5, rel_tol=rel_tol)
    out += dynamics_checks(t, quick=quick)
    if not quick:
        out += ring_checks(t)
    return out
