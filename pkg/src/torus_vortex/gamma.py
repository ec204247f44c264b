"""The core constant gamma = lim (min energy of a degree-one vortex in the
unit disk - pi log(1/eps)) from a radial variational problem."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from .errors import NoConvergence

MAX_NEWTON = 200
# converged once the Newton update is below this in max norm
NEWTON_TOL = 1e-11
# mesh: uniform spacing eps/CORE_DENSITY on [0, CORE_SPAN eps], then
# geometric growth by GROWTH per element up to the outer radius
CORE_DENSITY = 200
CORE_SPAN = 10.0
GROWTH = 1.004

_GAUSS_X, _GAUSS_W = np.polynomial.legendre.leggauss(4)
_GAUSS_X = 0.5 * (_GAUSS_X + 1.0)
_GAUSS_W = 0.5 * _GAUSS_W


@dataclass(frozen=True)
class RadialMinimizer:
    eps: float
    radius: float
    energy: float
    r: np.ndarray
    f: np.ndarray
    iterations: int


def radial_mesh(eps, radius=1.0):
    core = min(CORE_SPAN * eps, 0.5 * radius)
    h0 = eps / CORE_DENSITY
    nodes = list(np.linspace(0.0, core, int(np.ceil(core / h0)) + 1))
    h = nodes[-1] - nodes[-2]
    while nodes[-1] < radius:
        h *= GROWTH
        nodes.append(nodes[-1] + h)
    r = np.array(nodes)
    # stretch the geometric part so the mesh ends exactly at radius
    k = r > core
    r[k] = core + (r[k] - core) * (radius - core) / (r[-1] - core)
    return r


def _element_terms(r, f, eps):
    """Energy and per-element gradient / Hessian blocks of

        pi int_0^R (f'^2 + f^2 / r^2 + (1 - f^2)^2 / (2 eps^2)) r dr

    for piecewise-linear f.
    """
    r0, r1 = r[:-1], r[1:]
    L = r1 - r0
    f0, f1 = f[:-1], f[1:]
    ir = 0.5 * (r1 * r1 - r0 * r0)  # int r dr over the element
    slope = (f1 - f0) / L
    rq = r0[:, None] + L[:, None] * _GAUSS_X
    wq = L[:, None] * _GAUSS_W
    phi1 = _GAUSS_X
    phi0 = 1.0 - phi1
    fq = f0[:, None] * phi0 + f1[:, None] * phi1
    c = 1.0 / (2 * eps * eps)
    e = slope**2 * ir + np.sum(wq * (fq * fq / rq + c * (1 - fq * fq) ** 2 * rq), axis=1)
    d1 = wq * (2 * fq / rq - 4 * c * fq * (1 - fq * fq) * rq)
    d2 = wq * (2 / rq - 4 * c * (1 - 3 * fq * fq) * rq)
    kin = 2 * ir / L**2
    g0 = -kin * (f1 - f0) + np.sum(d1 * phi0, axis=1)
    g1 = kin * (f1 - f0) + np.sum(d1 * phi1, axis=1)
    h00 = kin + np.sum(d2 * phi0 * phi0, axis=1)
    h11 = kin + np.sum(d2 * phi1 * phi1, axis=1)
    h01 = -kin + np.sum(d2 * phi0 * phi1, axis=1)
    return np.pi * e.sum(), np.pi * np.array([g0, g1]), np.pi * np.array([h00, h01, h11])


def _energy(r, f, eps):
    return _element_terms(r, f, eps)[0]


def radial_minimum(eps: float, radius: float = 1.0) -> RadialMinimizer:
    """Minimise the radial energy with f(0) = 0, f(radius) = 1 by damped
    Newton (backtracking on the energy, Hessian shifted when indefinite)."""
    if not 0 < eps:
        raise ValueError("eps must be positive")
    r = radial_mesh(eps, radius)
    f = np.tanh(r / eps) / np.tanh(radius / eps)
    m = len(r)
    E, _, _ = _element_terms(r, f, eps)
    for it in range(1, MAX_NEWTON + 1):
        _, (g0, g1), (h00, h01, h11) = _element_terms(r, f, eps)
        grad = np.zeros(m)
        np.add.at(grad, np.arange(m - 1), g0)
        np.add.at(grad, np.arange(1, m), g1)
        diag = np.zeros(m)
        np.add.at(diag, np.arange(m - 1), h00)
        np.add.at(diag, np.arange(1, m), h11)
        g = grad[1:-1]
        off = h01[1:-1]
        shift = 0.0
        while True:
            ab = np.zeros((3, m - 2))
            ab[0, 1:] = off
            ab[1] = diag[1:-1] + shift
            ab[2, :-1] = off
            step = solve_banded((1, 1), ab, -g)
            if g @ step < 0 or not g.any():
                break
            shift = max(2 * shift, 1e-8 * np.max(np.abs(diag)))
        t = 1.0
        while t > 1e-12:
            trial = f.copy()
            trial[1:-1] += t * step
            E_new = _energy(r, trial, eps)
            if E_new <= E + 1e-4 * t * (g @ step) or abs(E_new - E) < 1e-15 * abs(E):
                break
            t *= 0.5
        else:
            raise NoConvergence(f"line search stalled at eps={eps}")
        f, E = trial, E_new
        if t == 1.0 and np.max(np.abs(step)) < NEWTON_TOL:
            return RadialMinimizer(eps, radius, E, r, f, it)
    raise NoConvergence(f"Newton did not converge in {MAX_NEWTON} iterations at eps={eps}")


def gamma_hat(eps: float) -> float:
    """min radial energy - pi log(1/eps) at a single eps."""
    return radial_minimum(eps).energy - np.pi * np.log(1.0 / eps)


def gamma_estimate(eps_list) -> float:
    """Extrapolate gamma_hat(eps) to eps -> 0.

    The remainder is O(eps^2), so the last two members of the decreasing
    list are combined by one Richardson step.
    """
    eps = [float(e) for e in eps_list]
    if not eps:
        raise ValueError("need at least one eps")
    if any(e < 1e-4 for e in eps) or any(b >= a for a, b in zip(eps, eps[1:])):
        raise ValueError("eps_list must be decreasing with every entry >= 1e-4")
    vals = [gamma_hat(e) for e in eps]
    if len(vals) == 1:
        return vals[0]
    rho2 = (eps[-2] / eps[-1]) ** 2
    return (rho2 * vals[-1] - vals[-2]) / (rho2 - 1)
