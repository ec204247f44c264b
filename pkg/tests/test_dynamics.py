import numpy as np
import pytest

from torus_vortex import dynamics as D
from torus_vortex.energy import grad_W_all, renormalized_W
from torus_vortex.errors import CollisionError
from torus_vortex.torus import VortexConfiguration

J = np.array([[0.0, 1.0], [-1.0, 0.0]])


def alpha_beta(rec):
    L = rec.lifted
    return L[:, 0, 0] - 0.5, L[:, 0, 1] - 0.5


@pytest.mark.parametrize("lam", [0.0, 0.5, 2.0])
def test_velocity_solves_mobility_system(table, lam):
    c = D.four_vortex_config(-0.15, 0.2)
    v = D.velocity_all(c, table, lam)
    g = grad_W_all(c, table)
    for j, d in enumerate(c.degrees):
        lhs = (np.eye(2) - lam * d * J) @ v[j]
        assert np.allclose(lhs, -g[j] / np.pi, atol=1e-12 * np.abs(g).max())
    assert np.allclose(D.velocity(c, table, lam, 1), v[1])


def test_params_validation():
    with pytest.raises(ValueError):
        D.OdeParams(lam=1.0, dt=0.0, t_max=1.0)
    with pytest.raises(ValueError):
        D.OdeParams(lam=1.0, dt=1e-3, t_max=1.0, sample_stride=0)


def test_first_integral_and_dissipation(table):
    rec = D.integrate(D.four_vortex_config(-0.15, 0.2), table, D.OdeParams(1.0, 1e-4, 1.0))
    assert rec.stop_reason is D.StopReason.COLLISION
    assert D.xi_drift(rec) < 1e-8
    assert D.dissipation_residual(rec) < 1e-5 * (1 + abs(rec.W_series[0]))
    # W decreases along the flow
    assert np.all(np.diff(rec.W_series) <= 1e-12 * (1 + abs(rec.W_series[0])))


@pytest.mark.parametrize("lam", [0.0, 1.0, 2.0])
def test_two_vortex_reduction_matches_full(table, lam):
    p = D.OdeParams(lam, 1e-4, 0.05)
    red = D.symmetric_2v(-0.15, 0.25, lam, p, table)
    full = D.integrate(D.two_vortex_config(-0.15, 0.25), table, p)
    assert red.times == full.times
    assert np.abs(red.lifted - full.lifted).max() < 1e-7


@pytest.mark.parametrize("lam", [0.0, 1.0, 2.0])
def test_four_vortex_reduction_matches_full(table, lam):
    p = D.OdeParams(lam, 1e-4, 0.05)
    red = D.symmetric_4v(-0.15, 0.2, lam, p, table)
    full = D.integrate(D.four_vortex_config(-0.15, 0.2), table, p)
    assert red.times == full.times
    assert np.abs(red.lifted - full.lifted).max() < 1e-7


@pytest.mark.parametrize("lam", [0.5, 1.0, 2.0])
def test_two_vortex_slope(table, lam):
    rec = D.symmetric_2v(-0.15, 0.25, lam, D.OdeParams(lam, 1e-4, 1.0), table)
    a, b = alpha_beta(rec)
    da, db = np.diff(a), np.diff(b)
    ok = np.abs(da) > 1e-9
    assert np.abs(db[ok] / da[ok] + lam).max() < 1e-6
    assert np.abs((b - b[0]) + lam * (a - a[0])).max() < 1e-9


def test_two_vortex_lambda_zero_is_horizontal(table):
    rec = D.symmetric_2v(-0.15, 0.25, 0.0, D.OdeParams(0.0, 1e-4, 1.0), table)
    _, b = alpha_beta(rec)
    assert np.abs(b - b[0]).max() < 1e-9


def test_coincident_reductions_rejected(table):
    p = D.OdeParams(1.0, 1e-4, 0.01)
    with pytest.raises(CollisionError):
        D.symmetric_2v(0.0, 0.1, 1.0, p, table)
    with pytest.raises(CollisionError):
        D.symmetric_4v(0.0, 0.1, 1.0, p, table)


def test_equilibrium_is_stationary(table):
    c = D.four_vortex_config(-0.25, 0.25)
    assert np.abs(D.velocity_all(c, table, 1.0)).max() < 1e-7
    rec = D.integrate(c, table, D.OdeParams(1.0, 1e-3, 0.1))
    assert rec.stop_reason is D.StopReason.REACHED_TMAX
    assert np.abs(rec.lifted - c.lifted).max() < 1e-6


@pytest.mark.parametrize(
    "beta0, pairs",
    [(0.1, {(1, 4), (2, 3)}), (0.3, {(1, 3), (2, 4)}), (0.45, {(1, 4), (2, 3)})],
)
def test_collision_pairs(table, beta0, pairs):
    rec = D.integrate(D.four_vortex_config(-0.15, beta0), table, D.OdeParams(1.0, 1e-4, 1.0))
    assert rec.stop_reason is D.StopReason.COLLISION
    assert {(j + 1, k + 1) for j, k in rec.collision_pairs} == pairs


def test_rk4_order(table, monkeypatch):
    # switch off the collision refinement so the step size is the macro step
    monkeypatch.setattr(D, "REFINE_ETA", 1e9)
    c = D.two_vortex_config(-0.25, 0.0)

    def end(dt):
        return D.integrate(c, table, D.OdeParams(1.0, dt, 0.02)).final.lifted

    dt = 2e-3
    ref = end(dt / 8)
    e1 = np.abs(end(dt) - ref).max()
    e2 = np.abs(end(dt / 2) - ref).max()
    assert e1 / e2 >= 8


def test_step_failure_is_reported(table, monkeypatch):
    monkeypatch.setattr(D, "MAX_HALVINGS", 0)
    monkeypatch.setattr(D, "REFINE_ETA", 1e9)
    rec = D.integrate(D.two_vortex_config(-0.25, 0.0), table, D.OdeParams(0.0, 0.1, 0.5))
    assert rec.stop_reason is D.StopReason.STEP_FAILURE


def test_sample_stride_thins_output(table, monkeypatch):
    # refined substeps and dense output add samples regardless of the stride
    monkeypatch.setattr(D, "SAMPLE_ETA", 1e9)
    monkeypatch.setattr(D, "REFINE_ETA", 1e9)
    c = D.two_vortex_config(-0.25, 0.0)
    a = D.integrate(c, table, D.OdeParams(1.0, 1e-3, 0.01))
    b = D.integrate(c, table, D.OdeParams(1.0, 1e-3, 0.01, sample_stride=5))
    assert len(b.times) < len(a.times)
    assert b.times[-1] == pytest.approx(0.01)
    assert np.allclose(b.final.lifted, a.final.lifted, atol=0, rtol=0)


def test_W_series_matches_energy(table):
    rec = D.integrate(D.two_vortex_config(-0.15, 0.25), table, D.OdeParams(1.0, 1e-3, 0.01))
    for c, W in zip(rec.configurations[::3], rec.W_series[::3]):
        assert W == pytest.approx(renormalized_W(c, table).W, abs=1e-10)


def test_q_follows_lift(table):
    rec = D.integrate(D.two_vortex_config(-0.15, 0.25), table, D.OdeParams(1.0, 1e-3, 0.02))
    c0, c1 = rec.configurations[0], rec.final
    assert np.allclose(c1.q, c0.q + 2 * np.pi * c0.degrees @ (c1.lifted - c0.lifted), atol=1e-12)


def test_csv_format_and_determinism(table, tmp_path):
    c = D.four_vortex_config(-0.15, 0.2)
    p = D.OdeParams(1.0, 1e-3, 0.01)
    D.write_trajectory_csv(D.integrate(c, table, p), tmp_path / "a.csv")
    D.write_trajectory_csv(D.integrate(c, table, p), tmp_path / "b.csv")
    a = (tmp_path / "a.csv").read_bytes()
    assert a == (tmp_path / "b.csv").read_bytes()
    lines = a.decode().splitlines()
    assert lines[0] == "t,j,x,y,lx,ly,qx,qy,W,xix,xiy,speed"
    first = lines[1].split(",")
    assert first[1] == "1" and len(first) == 12
    assert [row.split(",")[1] for row in lines[1:5]] == ["1", "2", "3", "4"]
    assert float(first[2]) == pytest.approx(0.35)


def test_xi_changes_without_conservation_law(table):
    # xi is conserved only along the flow, not for arbitrary moves
    c = D.four_vortex_config(-0.15, 0.2)
    moved = c.moved(c.lifted + np.array([[0.01, 0.0], [0, 0], [0, 0], [0, 0]]))
    assert np.abs(D.first_integral_xi(moved, 1.0) - D.first_integral_xi(c, 1.0)).max() > 1e-4


def test_collision_stop_radius(table):
    c = VortexConfiguration.from_positions([[0.3, 0.5], [0.3005, 0.5]], [1, -1])
    rec = D.integrate(c, table, D.OdeParams(1.0, 1e-4, 0.01))
    assert rec.stop_reason is D.StopReason.COLLISION and len(rec.times) == 1
