"""Complex fields on the periodic n x n grid.

Node (i, j) sits at (i h, j h) with h = 1/n; the first array axis is x.
Vector fields carry their components on a trailing axis of length 2.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CoreUnresolved, InconsistentCirculation
from .green import GreenTable, cutoff, eval_gradF
from .torus import TWO_PI, VortexConfiguration, min_image_diff

FIELD_MAGIC = b"TVF1"
_HEADER = struct.Struct("<4sId")
CLOSURE_TOL = 1e-2
# the phase integrator treats chi(r) grad arg as the singular part of a
# vortex current, chi going from 1 to 0 between these radii
CORE_INNER = 0.05
CORE_OUTER = 0.2
_CHUNK = 1 << 16


@dataclass(frozen=True, eq=False)
class ComplexField:
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValueError("field must be square")
        n = v.shape[0]
        if n < 4 or n & (n - 1):
            raise ValueError("grid size must be a power of two")
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def h(self) -> float:
        return 1.0 / self.n


@dataclass
class FieldDiagnostics:
    E_eps: float
    Q: np.ndarray
    jacobian_integrals: list = field(default_factory=list)
    vortex_list: list = field(default_factory=list)


def grid_points(n):
    x = np.arange(n) / n
    X, Y = np.meshgrid(x, x, indexing="ij")
    return np.stack([X, Y], axis=-1)


# --------------------------------------------------------------------------
# snapshots


def save_field(path, u: ComplexField, eps: float):
    """Write a "TVF1" snapshot: header then interleaved re/im doubles."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    body = np.empty((u.n, u.n, 2), dtype="<f8")
    body[..., 0] = u.values.real
    body[..., 1] = u.values.imag
    with open(tmp, "wb") as fh:
        fh.write(_HEADER.pack(FIELD_MAGIC, u.n, float(eps)))
        fh.write(body.tobytes())
    tmp.replace(path)


def load_field(path):
    """Returns (field, eps)."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: truncated snapshot")
    magic, n, eps = _HEADER.unpack_from(raw)
    if magic != FIELD_MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    body = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    if body.size != 2 * n * n:
        raise ValueError(f"{path}: expected {2 * n * n} doubles, found {body.size}")
    body = body.reshape(n, n, 2)
    return ComplexField(body[..., 0] + 1j * body[..., 1]), float(eps)


# --------------------------------------------------------------------------
# densities


def gradient(v, method="centered"):
    """Periodic gradient of a scalar grid function, shape (n, n, 2)."""
    n = v.shape[0]
    if method == "centered":
        gx = (np.roll(v, -1, axis=0) - np.roll(v, 1, axis=0)) * (n / 2)
        gy = (np.roll(v, -1, axis=1) - np.roll(v, 1, axis=1)) * (n / 2)
    elif method == "spectral":
        # odd-order derivative: the Nyquist mode is dropped
        k = np.fft.fftfreq(n, d=1.0 / n)
        k[n // 2] = 0.0
        vh = np.fft.fft2(v)
        gx = np.fft.ifft2(2j * np.pi * k[:, None] * vh)
        gy = np.fft.ifft2(2j * np.pi * k[None, :] * vh)
        if np.isrealobj(v):
            gx, gy = gx.real, gy.real
    else:
        raise ValueError(f"unknown differentiation method {method!r}")
    return np.stack([gx, gy], axis=-1)


def divergence(w, method="centered", vortices: VortexConfiguration | None = None):
    """Discrete divergence of a vector field.

    With ``vortices`` the divergence-free core model of every vortex is
    removed before differencing.  That keeps spectral differentiation of a
    current with 1/r cores free of Gibbs ringing.
    """
    if vortices is not None:
        w = w - core_model_field(vortices, w.shape[0])
    return gradient(w[..., 0], method)[..., 0] + gradient(w[..., 1], method)[..., 1]


def current(u: ComplexField, method="centered"):
    """j = Im(conj(u) grad u)."""
    g = gradient(u.values, method)
    return np.imag(np.conj(u.values)[..., None] * g)


def modulus_gradient(u: ComplexField, method="centered"):
    """grad|u| written as Re(conj(u) grad u) / |u|.

    With this form |grad u|^2 = |grad|u||^2 + |j|^2/|u|^2 holds exactly for
    the discrete operators, not only in the limit h -> 0.
    """
    g = gradient(u.values, method)
    return np.real(np.conj(u.values)[..., None] * g) / np.abs(u.values)[..., None]


def densities(u: ComplexField, eps: float, method="centered"):
    """Energy density e, current j and Jacobian J of u."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    v = u.values
    g = gradient(v, method)
    grad2 = np.sum(np.abs(g) ** 2, axis=-1)
    e = 0.5 * grad2 + (1.0 - np.abs(v) ** 2) ** 2 / (4.0 * eps * eps)
    j = np.imag(np.conj(v)[..., None] * g)
    J = np.imag(np.conj(g[..., 0]) * g[..., 1])
    return e, j, J


def energy(u: ComplexField, eps: float, method="centered") -> float:
    return float(np.sum(densities(u, eps, method)[0])) * u.h**2


def momentum(u: ComplexField, method="centered") -> np.ndarray:
    return current(u, method).sum(axis=(0, 1)) * u.h**2


def window_mask(n, center, radius):
    d = np.linalg.norm(min_image_diff(grid_points(n), center), axis=-1)
    return d < radius


def jacobian_integrals(u: ComplexField, centers, radius=0.1, method="centered"):
    """h^2 sum of J(u) over the disk of given radius around each center."""
    J = densities(u, 1.0, method)[2]
    return [float(J[window_mask(u.n, c, radius)].sum()) * u.h**2 for c in centers]


def diagnostics(u: ComplexField, eps: float, centers=(), radius=0.1) -> FieldDiagnostics:
    from .tracking import track_vortices

    e, j, J = densities(u, eps)
    h2 = u.h**2
    return FieldDiagnostics(
        E_eps=float(e.sum()) * h2,
        Q=j.sum(axis=(0, 1)) * h2,
        jacobian_integrals=[float(J[window_mask(u.n, c, radius)].sum()) * h2 for c in centers],
        vortex_list=track_vortices(u),
    )


# --------------------------------------------------------------------------
# canonical harmonic map


def nudge_to_grid(c: VortexConfiguration, n: int) -> VortexConfiguration:
    """Move any vortex lying within h/4 of a grid line to its cell centre.

    q follows the displacement through the lift, so the result is again a
    valid configuration.
    """
    h = 1.0 / n
    pos = c.positions
    u = pos * n
    off = np.abs(u - np.round(u)) * h
    bad = np.any(off < h / 4, axis=1)
    if not bad.any():
        return c
    lifted = c.lifted.copy()
    centre = (np.floor(u[bad]) + 0.5) * h
    lifted[bad] += centre - pos[bad]
    return c.moved(lifted)


def harmonic_current(c: VortexConfiguration, t: GreenTable, n: int) -> np.ndarray:
    """j_H = -sum_j d_j J grad F(x - a_j) + J q sampled on the grid.

    J v = (v_y, -v_x).  Vortices are first nudged off the grid lines.
    """
    c = nudge_to_grid(c, n)
    pts = grid_points(n).reshape(-1, 2)
    gsum = np.zeros_like(pts)
    for a, d in zip(c.positions, c.degrees):
        for s in range(0, len(pts), _CHUNK):
            gsum[s : s + _CHUNK] += d * eval_gradF(t, pts[s : s + _CHUNK] - a)
    j = np.stack([-gsum[:, 1] + c.q[1], gsum[:, 0] - c.q[0]], axis=-1)
    return j.reshape(n, n, 2)


def _simpson(v, h):
    return h / 3.0 * (v[0] + v[-1] + 4.0 * v[1:-1:2].sum() + 2.0 * v[2:-1:2].sum())


def circulation(j_field, i0, i1, k0, k1) -> float:
    """Counter-clockwise line integral of j around the node rectangle
    [i0, i1] x [k0, k1] (indices taken mod n), by Simpson's rule per side.

    Both side lengths must be an even number of cells.
    """
    n = j_field.shape[0]
    if (i1 - i0) % 2 or (k1 - k0) % 2 or i1 <= i0 or k1 <= k0:
        raise ValueError("sides must span a positive, even number of cells")
    h = 1.0 / n
    I = np.arange(i0, i1 + 1) % n
    K = np.arange(k0, k1 + 1) % n
    return float(
        _simpson(j_field[I, K[0], 0], h)
        + _simpson(j_field[I[-1], K, 1], h)
        - _simpson(j_field[I, K[-1], 0], h)
        - _simpson(j_field[I[0], K, 1], h)
    )


def _winding_increment(p0, p1):
    """Change of arg along the straight segment p0 -> p1 (neither at 0)."""
    d = np.arctan2(p1[..., 1], p1[..., 0]) - np.arctan2(p0[..., 1], p0[..., 0])
    return (d + np.pi) % TWO_PI - np.pi


def _grad_arg(p):
    r2 = np.sum(p * p, axis=-1)
    return np.stack([-p[..., 1], p[..., 0]], axis=-1) / r2[..., None]


def _core_model(p):
    """chi(|p|) grad arg(p): the singular part of a unit vortex current,
    switched off smoothly between CORE_INNER and CORE_OUTER."""
    chi = cutoff(np.linalg.norm(p, axis=-1), CORE_INNER, CORE_OUTER)[0]
    return chi[..., None] * _grad_arg(p)


def core_model_field(c: VortexConfiguration, n: int) -> np.ndarray:
    """Sum of d_j chi(r) grad arg(x - a_j) on the grid.

    Each term is exactly divergence free and carries circulation 2 pi d_j,
    so subtracting it from a vortex current leaves a smooth periodic field.
    """
    pts = grid_points(n)
    out = np.zeros((n, n, 2))
    for a, d in zip(c.positions, c.degrees):
        out += d * _core_model(min_image_diff(pts, a))
    return out


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(8)


def _core_model_edge(p0, step):
    """Integral of the core model along p0 -> p0 + step for a stack of edges."""
    p1 = p0 + step
    inside = (np.linalg.norm(p0, axis=-1) <= CORE_INNER) & (np.linalg.norm(p1, axis=-1) <= CORE_INNER)
    out = np.zeros(p0.shape[:-1])
    out[inside] = _winding_increment(p0[inside], p1[inside])
    rest = ~inside
    if rest.any():
        s = 0.5 * (_GL_NODES + 1.0)
        pts = p0[rest][:, None, :] + s[:, None] * step
        vals = _core_model(pts) @ step
        out[rest] = 0.5 * vals @ _GL_WEIGHTS
    return out


def _edge_integrals(j_field, vortices):
    """Line integrals of j over the horizontal edges of row 0 and all
    vertical edges.

    Without vortex information this is the plain trapezoid rule.  With it,
    the core model of every vortex is subtracted first (leaving a smooth
    periodic remainder for the trapezoid rule) and integrated separately:
    exactly as a winding angle near the core, by Gauss-Legendre further out.
    """
    n = j_field.shape[0]
    h = 1.0 / n
    if vortices is not None:
        j_field = j_field.copy()
        pts = grid_points(n)
        reach = int(np.ceil(CORE_OUTER * n)) + 2
        span = np.arange(-reach, reach + 1)
        boxes = []
        for a, d in zip(vortices.positions, vortices.degrees):
            ia, ja = np.floor(a * n).astype(int)
            I = (ia + span) % n
            K = (ja + span) % n
            # the box must not wrap onto itself
            I, K = np.unique(I), np.unique(K)
            II, KK = np.meshgrid(I, K, indexing="ij")
            p = min_image_diff(pts[II, KK], a)
            j_field[II, KK] -= d * _core_model(p)
            boxes.append((I, K, II, KK, p, d))
    jx0 = j_field[:, 0, 0]
    ex = 0.5 * h * (jx0 + np.roll(jx0, -1))
    jy = j_field[..., 1]
    ey = 0.5 * h * (jy + np.roll(jy, -1, axis=1))
    if vortices is None:
        return ex, ey
    for (I, _, II, KK, p, d), a in zip(boxes, vortices.positions):
        ey[II, KK] += d * _core_model_edge(p, np.array([0.0, h]))
        ex[I] += d * _core_model_edge(min_image_diff(pts[I, 0], a), np.array([h, 0.0]))
    return ex, ey


def _close(increments, axis=-1):
    """Remove the non-integer part of each cycle sum, spread evenly."""
    total = increments.sum(axis=axis, keepdims=True)
    k = np.round(total / TWO_PI)
    miss = total - TWO_PI * k
    worst = float(np.max(np.abs(miss)))
    if worst > CLOSURE_TOL:
        raise InconsistentCirculation(
            f"loop circulation misses 2 pi Z by {worst:.3g} (tolerance {CLOSURE_TOL})"
        )
    return increments - miss / increments.shape[axis]


def phase_integrate(j_field, vortices: VortexConfiguration | None = None) -> ComplexField:
    """Unit-modulus field whose phase gradient is ``j_field``.

    The phase is integrated along row 0 and then up every column.  Passing
    the vortex configuration enables exact winding terms on edges close to
    the cores, where the trapezoid rule alone is poor.  Loop closure errors
    (distance of each cycle integral from 2 pi Z) are spread uniformly.
    """
    j_field = np.asarray(j_field, dtype=float)
    ex, ey = _edge_integrals(j_field, vortices)
    ex = _close(ex)
    ey = _close(ey, axis=1)
    theta0 = np.concatenate([[0.0], np.cumsum(ex[:-1])])
    theta = theta0[:, None] + np.concatenate(
        [np.zeros((len(ey), 1)), np.cumsum(ey[:, :-1], axis=1)], axis=1
    )
    return ComplexField(np.exp(1j * theta))


def core_profile(c: VortexConfiguration, eps: float, n: int) -> np.ndarray:
    """prod_j tanh(dist(x, a_j) / eps)."""
    pts = grid_points(n)
    rho = np.ones((n, n))
    for a in c.positions:
        rho *= np.tanh(np.linalg.norm(min_image_diff(pts, a), axis=-1) / eps)
    return rho


def initial_data(c: VortexConfiguration, t: GreenTable, eps: float, n: int) -> ComplexField:
    """u0 = prod_j tanh(dist(x, a_j)/eps) * H with H the canonical harmonic map.

    Uses the nudged configuration (see ``nudge_to_grid``); callers comparing
    against the reduced dynamics should start from that configuration too.
    """
    if eps < 2.0 / n:
        raise CoreUnresolved(f"eps={eps} is below two grid spacings (h={1.0 / n})")
    c = nudge_to_grid(c, n)
    H = phase_integrate(harmonic_current(c, t, n), c)
    return ComplexField(core_profile(c, eps, n) * H.values)


# --------------------------------------------------------------------------
# energy outside the cores


def ring_energy(j_field, c: VortexConfiguration, rho: float, supersample: int = 16) -> float:
    """Grid quadrature of 1/2 |j|^2 over the torus minus the rho-disks.

    Cells (centred on nodes) that lie clear of every disk use the node
    value; cells cut by a disk boundary are integrated on a
    ``supersample``^2 sub-grid with bilinear interpolation of |j|^2,
    keeping only sub-points outside every disk.
    """
    j_field = np.asarray(j_field, dtype=float)
    n = j_field.shape[0]
    h = 1.0 / n
    if rho < 4 * h:
        raise ValueError("rho must be at least four grid spacings")
    f = 0.5 * np.sum(j_field**2, axis=-1)
    pts = grid_points(n)
    half_diag = h / np.sqrt(2.0)
    clear = np.ones((n, n), dtype=bool)
    cut = np.zeros((n, n), dtype=bool)
    for a in c.positions:
        d = np.linalg.norm(min_image_diff(pts, a), axis=-1)
        clear &= d > rho + half_diag
        cut |= np.abs(d - rho) <= half_diag
    cut &= ~np.any(
        [np.linalg.norm(min_image_diff(pts, a), axis=-1) < rho - half_diag for a in c.positions],
        axis=0,
    )
    total = float(np.sum(f[clear]))
    ci, cj = np.nonzero(cut)
    offs = (np.arange(supersample) + 0.5) / supersample - 0.5
    sx = ci[:, None, None] * h + h * offs[:, None]
    sy = cj[:, None, None] * h + h * offs[None, :]
    sx, sy = np.broadcast_arrays(sx, sy)
    keep = np.ones(sx.shape, dtype=bool)
    for a in c.positions:
        px = sx - a[0]
        py = sy - a[1]
        px -= np.round(px)
        py -= np.round(py)
        keep &= px**2 + py**2 >= rho * rho
    vals = _bilinear(f, sx, sy)
    total += float(np.sum(np.where(keep, vals, 0.0))) / supersample**2
    return total * h * h


def _bilinear(f, x, y):
    n = f.shape[0]
    u = np.mod(x, 1.0) * n
    v = np.mod(y, 1.0) * n
    i = np.floor(u).astype(int)
    k = np.floor(v).astype(int)
    s = u - i
    r = v - k
    i %= n
    k %= n
    i1 = (i + 1) % n
    k1 = (k + 1) % n
    return (
        (1 - s) * (1 - r) * f[i, k]
        + s * (1 - r) * f[i1, k]
        + (1 - s) * r * f[i, k1]
        + s * r * f[i1, k1]
    )
