"""Zero-mean Green's function of the unit torus.

F solves  Lap F = 2 pi (delta - 1)  on (R/Z)^2 with  int F = 0, so that
F(x) = log|x| + O(1) near the origin.  Two independent evaluators live
here:

* ``oracle_F`` / ``oracle_gradF``: Gaussian-regularised Fourier lattice
  sums, extrapolated to zero regularisation.  Slow, no tables.
* ``build_table`` + ``eval_F`` / ``eval_gradF``: the smooth remainder
  F - chi log|x| is obtained from one FFT Poisson solve and interpolated
  with 4x4 Lagrange stencils; the log part is added back analytically.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import cached_property, lru_cache
from pathlib import Path

import numpy as np
from scipy import integrate, special

from .errors import BadCutoff, SingularPoint
from .torus import min_image_diff

SINGULAR_TOL = 1e-12
CACHE_MAGIC = b"TGF1"
_HEADER = struct.Struct("<4sId")

# Richardson weights that cancel the linear sigma dependence of the
# regularised sums sampled at sigma0 * {1, 2, 4}
_RICHARDSON = ((1.0, 8.0 / 3.0), (2.0, -2.0), (4.0, 1.0 / 3.0))
# e^{-sigma0 K^2} = e^{-37}: the |k| <= K truncation is below rounding
ORACLE_SIGMA_FACTOR = 6.1
INNER_FRACTION = 0.1


# --------------------------------------------------------------------------
# brute-force oracle


def lattice_sum_F(x, sigma, K=256):
    """-(1/2pi) sum_{0<|k|<=K} exp(-sigma |k|^2) cos(2 pi k.x) / |k|^2."""
    pts = np.atleast_2d(np.asarray(x, dtype=float))
    w, k = _lattice_weights(K, ((1.0, 1.0),), sigma)
    cx, cy = np.cos(np.multiply.outer(pts[:, 0], 2 * np.pi * k)), np.cos(
        np.multiply.outer(pts[:, 1], 2 * np.pi * k)
    )
    # the sin*sin half cancels because the weights are even in k_y
    val = -np.einsum("pi,ij,pj->p", cx, w, cy) / (2 * np.pi)
    return val if np.ndim(x) > 1 else float(val[0])


def _lattice_weights(K, combo, sigma0):
    if K < 8:
        raise ValueError("K must be at least 8")
    k = np.arange(-K, K + 1, dtype=float)
    k2 = k[:, None] ** 2 + k[None, :] ** 2
    keep = (k2 > 0) & (k2 <= K * K)
    kk = np.where(keep, k2, 1.0)
    w = sum(c * np.exp(-m * sigma0 * kk) for m, c in combo) / kk
    return np.where(keep, w, 0.0), k


def _check_regular(pts):
    m = min_image_diff(pts, 0.0)
    if np.any(np.linalg.norm(m, axis=-1) < SINGULAR_TOL):
        raise SingularPoint("F is singular at lattice points")


def oracle_F(x, K=256, sigma0=None):
    """Lattice-sum value of F at x (one point or an (m, 2) stack).

    Accurate to ~1e-12 when |x| (minimum image) exceeds about 21/K.
    """
    pts = np.atleast_2d(np.asarray(x, dtype=float))
    _check_regular(pts)
    if sigma0 is None:
        sigma0 = (ORACLE_SIGMA_FACTOR / K) ** 2
    w, k = _lattice_weights(K, _RICHARDSON, sigma0)
    cx = np.cos(np.multiply.outer(pts[:, 0], 2 * np.pi * k))
    cy = np.cos(np.multiply.outer(pts[:, 1], 2 * np.pi * k))
    val = -np.einsum("pi,ij,pj->p", cx, w, cy) / (2 * np.pi)
    return val if np.ndim(x) > 1 else float(val[0])


def oracle_gradF(x, K=256, sigma0=None):
    """Term-by-term gradient of the extrapolated lattice sum."""
    pts = np.atleast_2d(np.asarray(x, dtype=float))
    _check_regular(pts)
    if sigma0 is None:
        sigma0 = (ORACLE_SIGMA_FACTOR / K) ** 2
    w, k = _lattice_weights(K, _RICHARDSON, sigma0)
    ax = np.multiply.outer(pts[:, 0], 2 * np.pi * k)
    ay = np.multiply.outer(pts[:, 1], 2 * np.pi * k)
    wk = w * k[:, None]
    gx = np.einsum("pi,ij,pj->p", np.sin(ax), wk, np.cos(ay))
    gy = np.einsum("pi,ij,pj->p", np.cos(ax), wk.T, np.sin(ay))
    g = np.stack([gx, gy], axis=-1)
    return g if np.ndim(x) > 1 else g[0]


# --------------------------------------------------------------------------
# singularity subtraction


def cutoff(r, inner, outer):
    """C-infinity radial cutoff: 1 on [0, inner], 0 beyond ``outer``.

    Returns (chi, chi', chi'').
    """
    r = np.asarray(r, dtype=float)
    chi = np.where(r <= inner, 1.0, 0.0)
    d1 = np.zeros_like(chi)
    d2 = np.zeros_like(chi)
    mid = (r > inner) & (r < outer)
    if mid.any():
        chi[mid], d1[mid], d2[mid] = _cutoff_band(r[mid], inner, outer)
    return chi, d1, d2


def _cutoff_band(r, inner, outer):
    # inner < r < outer strictly
    width = outer - inner
    t = (r - inner) / width
    u = 1.0 - t
    # S(t) = 1 / (1 + exp(1/t - 1/(1-t))) is the smooth 0->1 step
    s = special.expit(1.0 / u - 1.0 / t)
    p = 1.0 / t**2 + 1.0 / u**2
    dp = 2.0 / u**3 - 2.0 / t**3
    ds = s * (1.0 - s) * p
    dds = ds * (1.0 - 2.0 * s) * p + s * (1.0 - s) * dp
    return 1.0 - s, -ds / width, -dds / width**2


@dataclass(frozen=True, eq=False)
class GreenTable:
    """Samples of the smooth remainder F - chi(|x|) log|x| on an n x n grid.

    Node (i, j) sits at (i/n, j/n).  ``gradF_samples`` has shape
    (n, n, 2).  Neither array includes ``mean_shift``; it is added at
    evaluation time.
    """

    n_table: int
    F_samples: np.ndarray
    gradF_samples: np.ndarray
    cutoff_radius: float
    mean_shift: float

    @property
    def inner_radius(self) -> float:
        return INNER_FRACTION * self.cutoff_radius

    @cached_property
    def stacked_samples(self) -> np.ndarray:
        """F and gradient samples interleaved as (n, n, 3) for joint lookups."""
        return np.concatenate([self.F_samples[..., None], self.gradF_samples], axis=-1)

    @property
    def regular_part_at_origin(self) -> float:
        """lim_{x->0} F(x) - log|x|."""
        return float(self.F_samples[0, 0] + self.mean_shift)


def _grid_radius(n):
    x = np.arange(n) / n
    x = np.where(x >= 0.5, x - 1.0, x)
    X, Y = np.meshgrid(x, x, indexing="ij")
    return X, Y


def _log_part_integral(inner, outer):
    """int over R^2 of chi(|x|) log|x| dx."""
    f = lambda r: 2 * np.pi * r * np.log(r) * float(cutoff(r, inner, outer)[0])
    a = integrate.quad(f, 0.0, inner, epsabs=1e-13, epsrel=1e-12, limit=200)[0]
    b = integrate.quad(f, inner, outer, epsabs=1e-13, epsrel=1e-12, limit=400)[0]
    return a + b


def _mean_shift(F_samples, cutoff_radius):
    inner = INNER_FRACTION * cutoff_radius
    return -(float(F_samples.mean()) + _log_part_integral(inner, cutoff_radius))


def build_table(n_table=1024, cutoff_radius=0.25) -> GreenTable:
    """Solve for the smooth remainder with a single FFT Poisson solve."""
    n = int(n_table)
    if n < 256 or n & (n - 1):
        raise ValueError("n_table must be a power of two >= 256")
    if not 0 < cutoff_radius <= 0.25:
        raise BadCutoff(f"cutoff radius {cutoff_radius} outside (0, 0.25]")
    inner = INNER_FRACTION * cutoff_radius
    if cutoff_radius - inner < 16.0 / n:
        raise BadCutoff("cutoff transition narrower than 16 table cells")

    X, Y = _grid_radius(n)
    R = np.hypot(X, Y)
    chi, d1, d2 = cutoff(R, inner, cutoff_radius)
    Rs = np.where(R > 0, R, 1.0)
    # Lap(chi log r) away from 0; identically zero where chi == 1
    lap_log = 2.0 * d1 / Rs + np.log(Rs) * (d2 + d1 / Rs)
    rhs = -2.0 * np.pi - lap_log

    k = np.fft.fftfreq(n, d=1.0 / n)
    KX, KY = np.meshgrid(k, k, indexing="ij")
    k2 = 4 * np.pi**2 * (KX**2 + KY**2)
    k2[0, 0] = 1.0
    Fh = -np.fft.fft2(rhs) / k2
    Fh[0, 0] = 0.0
    F_s = np.fft.ifft2(Fh).real

    # first derivatives drop the Nyquist mode to stay real
    kd = np.where(np.abs(k) == n // 2, 0.0, k)
    DX, DY = np.meshgrid(kd, kd, indexing="ij")
    gx = np.fft.ifft2(2j * np.pi * DX * Fh).real
    gy = np.fft.ifft2(2j * np.pi * DY * Fh).real
    grad = np.stack([gx, gy], axis=-1)
    return GreenTable(n, F_s, grad, float(cutoff_radius), _mean_shift(F_s, cutoff_radius))


# --------------------------------------------------------------------------
# fast evaluation


# interpolation stencil: nodes -2..3 around the cell, quintic Lagrange.
# The derivative of a cubic interpolant of F is only third order, which
# left F and grad F visibly inconsistent near the cutoff band.
_OFFSETS = np.arange(-2, 4)


def _lagrange_matrix(nodes):
    # row k holds the t^k coefficients of each node's basis polynomial
    cols = []
    for m in nodes:
        others = [k for k in nodes if k != m]
        poly = np.polynomial.polynomial.polyfromroots(others) / np.prod([m - k for k in others])
        cols.append(poly)
    return np.array(cols).T


_LAGRANGE = _lagrange_matrix(_OFFSETS)
_POWERS = np.arange(len(_OFFSETS))


def _lagrange_weights(t):
    return (np.asarray(t)[..., None] ** _POWERS) @ _LAGRANGE


def _interp(samples, pts):
    """Tensor-product Lagrange interpolation of periodic node samples."""
    n = samples.shape[0]
    u = pts * n
    i = np.floor(u)
    w = _lagrange_weights(u - i)
    idx = ((i.astype(np.intp) % n)[..., None] + _OFFSETS) % n
    block = samples[idx[:, 0, :, None], idx[:, 1, None, :]]
    if samples.ndim == 2:
        return np.einsum("pa,pab,pb->p", w[:, 0], block, w[:, 1])
    return np.einsum("pa,pabc,pb->pc", w[:, 0], block, w[:, 1])


def _prepare(d):
    d = np.asarray(d, dtype=float)
    pts = min_image_diff(d.reshape(-1, 2), 0.0)
    r = np.sqrt(pts[:, 0] ** 2 + pts[:, 1] ** 2)
    if r.min() < SINGULAR_TOL:
        raise SingularPoint("F is singular at lattice points")
    return d, pts, r


def _symmetric_interp(samples, pts):
    # samples at +pts and -pts in one gather
    both = _interp(samples, np.concatenate([pts, -pts]))
    m = len(pts)
    return both[:m], both[m:]


def eval_F(t: GreenTable, d):
    """F at displacement(s) ``d``; periodic and exactly even in d."""
    d, pts, r = _prepare(d)
    val = _F_reduced(t, pts, r)
    return float(val[0]) if d.ndim == 1 else val.reshape(d.shape[:-1])


def _F_reduced(t, pts, r):
    # pts already reduced to [-0.5, 0.5]^2, r = |pts| > 0
    plus, minus = _symmetric_interp(t.F_samples, pts)
    val = 0.5 * (plus + minus) + t.mean_shift
    inner = r <= t.inner_radius
    if inner.any():
        val[inner] += np.log(r[inner])
    mid = ~inner & (r < t.cutoff_radius)
    if mid.any():
        chi = _cutoff_band(r[mid], t.inner_radius, t.cutoff_radius)[0]
        val[mid] += chi * np.log(r[mid])
    return val


def eval_gradF(t: GreenTable, d):
    """Gradient of F at displacement(s) ``d``; exactly odd in d."""
    d, pts, r = _prepare(d)
    val = _gradF_reduced(t, pts, r)
    return val[0] if d.ndim == 1 else val.reshape(d.shape)


def _gradF_reduced(t, pts, r):
    # pts already reduced to [-0.5, 0.5]^2, r = |pts| > 0
    plus, minus = _symmetric_interp(t.gradF_samples, pts)
    val = 0.5 * (plus - minus)
    inner = r <= t.inner_radius
    if inner.any():
        val[inner] += pts[inner] / (r[inner] ** 2)[:, None]
    mid = ~inner & (r < t.cutoff_radius)
    if mid.any():
        rm = r[mid]
        chi, d1, _ = _cutoff_band(rm, t.inner_radius, t.cutoff_radius)
        val[mid] += ((d1 * np.log(rm) + chi / rm) / rm)[:, None] * pts[mid]
    return val


def F_and_gradF_reduced(t, pts, r):
    """F and grad F together, sharing one table gather.

    ``pts`` must already lie in [-0.5, 0.5]^2 with ``r = |pts| > 0``.
    """
    plus, minus = _symmetric_interp(t.stacked_samples, pts)
    F = 0.5 * (plus[:, 0] + minus[:, 0]) + t.mean_shift
    G = 0.5 * (plus[:, 1:] - minus[:, 1:])
    inner = r <= t.inner_radius
    if inner.any():
        ri = r[inner]
        F[inner] += np.log(ri)
        G[inner] += pts[inner] / (ri**2)[:, None]
    mid = ~inner & (r < t.cutoff_radius)
    if mid.any():
        rm = r[mid]
        chi, d1, _ = _cutoff_band(rm, t.inner_radius, t.cutoff_radius)
        log_r = np.log(rm)
        F[mid] += chi * log_r
        G[mid] += ((d1 * log_r + chi / rm) / rm)[:, None] * pts[mid]
    return F, G


# --------------------------------------------------------------------------
# binary cache


def save_table(t: GreenTable, path):
    """Write the "TGF1" cache: header, F samples, then d/dx and d/dy samples."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(_HEADER.pack(CACHE_MAGIC, t.n_table, t.cutoff_radius))
        fh.write(np.ascontiguousarray(t.F_samples, dtype="<f8").tobytes())
        for c in range(2):
            fh.write(np.ascontiguousarray(t.gradF_samples[..., c], dtype="<f8").tobytes())
    tmp.replace(path)


def load_table(path) -> GreenTable:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: truncated green cache")
    magic, n, rc = _HEADER.unpack_from(raw)
    if magic != CACHE_MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    body = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    if body.size != 3 * n * n:
        raise ValueError(f"{path}: expected {3 * n * n} samples, found {body.size}")
    F_s = body[: n * n].reshape(n, n).astype(float)
    grad = np.stack(
        [body[n * n : 2 * n * n].reshape(n, n), body[2 * n * n :].reshape(n, n)], axis=-1
    ).astype(float)
    return GreenTable(int(n), F_s, grad, float(rc), _mean_shift(F_s, rc))


def load_or_build(n_table=1024, cutoff_radius=0.25, cache_path=None) -> GreenTable:
    """Reuse a cache file when it matches the requested parameters."""
    if cache_path is not None and Path(cache_path).exists():
        t = load_table(cache_path)
        if t.n_table == n_table and t.cutoff_radius == cutoff_radius:
            return t
    t = default_table(n_table, cutoff_radius)
    if cache_path is not None:
        save_table(t, cache_path)
    return t


@lru_cache(maxsize=4)
def default_table(n_table=1024, cutoff_radius=0.25) -> GreenTable:
    """Process-wide memoised table."""
    return build_table(n_table, cutoff_radius)
