import numpy as np
import pytest
from scipy.integrate import solve_ivp

from torus_vortex import dynamics as D
from torus_vortex import pde as P
from torus_vortex.fields import ComplexField, grid_points, initial_data


def test_params_defaults_and_validation():
    p = P.PdeParams(eps=1 / 32, lam=1.0, n=64, dt=1e-5, t_max=1e-3)
    assert p.k_eps == pytest.approx(1 / np.log(32))
    assert p.m == complex(p.k_eps, 1.0)
    for bad in [dict(eps=0.0), dict(eps=1.5), dict(dt=0.0), dict(track_stride=0), dict(k_eps=-1.0)]:
        kw = dict(eps=0.1, lam=0.0, n=64, dt=1e-5, t_max=1e-3) | bad
        with pytest.raises(ValueError):
            P.PdeParams(**kw)


def test_unit_constant_is_fixed():
    p = P.PdeParams(eps=0.1, lam=1.0, n=16, dt=1e-4, t_max=1e-3)
    u = ComplexField(np.full((16, 16), np.exp(0.3j)))
    v = P.step(u, p)
    assert np.allclose(v.values, u.values, atol=1e-14)


def test_constant_field_matches_scalar_ode():
    eps, lam, dt, steps = 0.1, 1.0, 1e-4, 200
    p = P.PdeParams(eps=eps, lam=lam, n=8, dt=dt, t_max=steps * dt)
    z0 = 0.5 * np.exp(0.4j)
    v = P._advance(np.full((8, 8), z0), p, steps)

    def rhs(_, y):
        z = y[0] + 1j * y[1]
        dz = (1 - abs(z) ** 2) * z / (eps**2 * p.m)
        return [dz.real, dz.imag]

    sol = solve_ivp(rhs, (0, steps * dt), [z0.real, z0.imag], rtol=1e-12, atol=1e-14)
    ref = sol.y[0, -1] + 1j * sol.y[1, -1]
    assert np.abs(v - ref).max() < 1e-8


def test_nonlinear_flow_keeps_unit_modulus():
    p = P.PdeParams(eps=0.05, lam=2.0, n=16, dt=1e-3, t_max=1e-3)
    rng = np.random.default_rng(0)
    z = np.exp(1j * rng.uniform(0, 2 * np.pi, (16, 16)))
    assert np.allclose(np.abs(P._nonlinear(z, p.dt, p)), 1.0, atol=1e-14)
    # moduli below one grow, above one shrink, never overshooting
    r = np.array([0.2, 0.9, 1.1, 3.0])
    out = np.abs(P._nonlinear(r.astype(complex), p.dt, p))
    assert np.all((out - 1) * (r - 1) >= 0) and np.all(np.abs(out - 1) <= np.abs(r - 1))


def test_linear_step_on_plane_wave():
    n, k, l = 32, 2, -1
    p = P.PdeParams(eps=0.1, lam=1.0, n=n, dt=1e-4, t_max=1e-4)
    x = grid_points(n)
    w = np.exp(2j * np.pi * (k * x[..., 0] + l * x[..., 1]))
    factor = np.exp(-p.dt * (2 * np.pi) ** 2 * (k * k + l * l) / p.m)
    assert np.allclose(P._linear(w, p.dt, p), factor * w, atol=1e-12)
    assert np.abs(P._linear_multiplier(n, p.dt, p.m)).max() <= 1.0


def _smooth(n):
    x = grid_points(n)
    return 1.0 + 0.3 * np.exp(2j * np.pi * x[..., 0]) + 0.2j * np.sin(2 * np.pi * (x[..., 0] + 2 * x[..., 1]))


def test_strang_second_order():
    n, T, eps = 32, 2e-3, 0.2
    u0 = _smooth(n)

    def end(dt):
        p = P.PdeParams(eps=eps, lam=1.0, n=n, dt=dt, t_max=T)
        return P._advance(u0, p, int(round(T / dt)))

    ref = end(T / 256)
    e1 = np.abs(end(T / 8) - ref).max()
    e2 = np.abs(end(T / 16) - ref).max()
    assert 3.5 < e1 / e2 < 4.5


def test_step_and_advance_agree():
    p = P.PdeParams(eps=0.2, lam=0.5, n=16, dt=1e-4, t_max=3e-4)
    u = ComplexField(_smooth(16))
    v = u
    for _ in range(3):
        v = P.step(v, p)
    assert np.allclose(P._advance(u.values, p, 3), v.values, atol=1e-13)


def test_spectral_energy_of_plane_wave():
    x = grid_points(16)
    w = np.exp(2j * np.pi * (x[..., 0] + x[..., 1]))
    assert P.spectral_energy(w, 0.1) == pytest.approx(0.5 * (2 * np.pi) ** 2 * 2)


@pytest.fixture(scope="module")
def short_run(table):
    n, eps = 64, 1 / 8
    c = D.two_vortex_config(-0.15, 0.2)
    p = P.PdeParams(eps=eps, lam=1.0, n=n, dt=1e-5, t_max=2e-3, track_stride=20)
    return P.run(initial_data(c, table, eps, n), p)


def test_energy_decreases(short_run):
    E = np.array(short_run.energies)
    assert np.all(np.diff(E) <= 1e-6 * E[0])


def test_dissipation_balance(short_run):
    E = short_run.energies
    assert (E[0] - E[-1]) / sum(short_run.dissipation) == pytest.approx(1.0, rel=0.1)


def test_tracking_follows_all_vortices(short_run):
    assert short_run.tracked and len(short_run.paths) == 2
    assert all(len(pth.times) == len(short_run.times) for pth in short_run.paths)


def test_conservative_pair_moves_along_its_line(table):
    n, eps = 64, 1 / 8
    c = D.two_vortex_config(-0.25, 0.0)
    p = P.PdeParams(eps=eps, lam=0.0, n=n, dt=1e-5, t_max=3e-3, track_stride=50)
    r = P.run(initial_data(c, table, eps, n), p)
    assert r.tracked
    for path in r.paths:
        y = path.lifted[:, 1]
        assert np.ptp(y) < 2.0 / n


def test_run_checks_grid_size():
    p = P.PdeParams(eps=0.2, lam=0.0, n=32, dt=1e-5, t_max=1e-4)
    with pytest.raises(ValueError):
        P.run(ComplexField(np.ones((16, 16))), p)
