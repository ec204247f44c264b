import numpy as np
import pytest
from scipy.integrate import solve_bvp

from torus_vortex import gamma as G
from torus_vortex.errors import NoConvergence

# frozen from the radial solver (P1 elements, graded mesh)
GOLDEN_GAMMA_HAT = {1 / 8: 1.21175, 1 / 16: 1.19995, 1 / 32: 1.19738, 1 / 64: 1.196773}


def bvp_energy(eps):
    """Independent oracle: Euler-Lagrange ODE by collocation, energy by
    the trapezoid rule on a fine resample."""
    def rhs(r, y):
        f, g = y
        return np.vstack([g, -g / r + f / r**2 - f * (1 - f * f) / eps**2])

    r0 = 1e-6
    r = np.concatenate([np.geomspace(r0, eps, 200), np.linspace(eps, 1, 1000)[1:]])
    guess = np.vstack([np.tanh(r / eps), 1 / (eps * np.cosh(r / eps) ** 2)])
    # f ~ c r near the origin: f(r0) = r0 f'(r0)
    sol = solve_bvp(rhs, lambda a, b: [a[0] - r0 * a[1], b[0] - 1], r, guess, tol=1e-7, max_nodes=200000)
    assert sol.success
    rr = np.concatenate([np.geomspace(r0, eps, 4000), np.linspace(eps, 1, 20000)[1:]])
    f, g = sol.sol(rr)
    dens = np.pi * (g * g + f * f / rr**2 + (1 - f * f) ** 2 / (2 * eps * eps)) * rr
    # f'(0)^2 pi r0^2 worth of energy below r0 is negligible
    return np.trapezoid(dens, rr) if hasattr(np, "trapezoid") else np.trapz(dens, rr)


def test_matches_collocation_oracle():
    eps = 1 / 8
    got = G.radial_minimum(eps).energy
    assert got == pytest.approx(bvp_energy(eps), abs=5e-5)


@pytest.mark.parametrize("eps", sorted(GOLDEN_GAMMA_HAT))
def test_golden_values(eps):
    assert G.gamma_hat(eps) == pytest.approx(GOLDEN_GAMMA_HAT[eps], abs=2e-5)


def test_self_convergence():
    a, b = G.gamma_hat(1 / 64), G.gamma_hat(1 / 128)
    assert abs(a - b) < 5e-3
    # the remainder is O(eps^2): successive differences shrink about fourfold
    c = G.gamma_hat(1 / 32)
    assert 3.0 < (c - a) / (a - b) < 5.0


def test_disk_radius_scaling():
    """Minimum energy on B_R at eps equals that on B_1 at eps / R."""
    eps, R = 1 / 64, 2.0
    a = G.radial_minimum(eps, radius=R).energy
    b = G.radial_minimum(eps / R).energy
    assert abs(a - b) < 1e-3


def test_profile_is_monotone_in_unit_interval():
    m = G.radial_minimum(1 / 32)
    assert m.f[0] == 0 and m.f[-1] == 1
    assert np.all(np.diff(m.f) >= -1e-12)
    assert m.f.min() >= 0 and m.f.max() <= 1 + 1e-12


def test_estimate_extrapolates():
    est = G.gamma_estimate([1 / 32, 1 / 64])
    assert est == pytest.approx(G.gamma_hat(1 / 128), abs=3e-4)
    assert G.gamma_estimate([1 / 16]) == pytest.approx(GOLDEN_GAMMA_HAT[1 / 16], abs=2e-5)


@pytest.mark.parametrize("bad", [[], [1 / 64, 1 / 32], [1e-5], [0.1, 0.1]])
def test_estimate_rejects_bad_lists(bad):
    with pytest.raises(ValueError):
        G.gamma_estimate(bad)


def test_newton_budget(monkeypatch):
    monkeypatch.setattr(G, "MAX_NEWTON", 1)
    with pytest.raises(NoConvergence):
        G.radial_minimum(1 / 16)
