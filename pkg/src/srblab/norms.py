"""Fourier-multiplier Sobolev norms, anisotropic cone norms and mollifier scaling studies."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError
from .grid import GridFunction, Mesh, circle
from .observables import Observable, mollify


def _check_periodic(mesh):
    if not mesh.domain.fully_periodic:
        raise ParameterError("Fourier norms need a fully periodic mesh")


def frequency_grid(mesh: Mesh):
    """Angular frequencies xi = 2 pi k / L per axis, broadcast to the mesh shape (FFT layout)."""
    out = []
    for axis, n in enumerate(mesh.shape):
        xi = 2 * np.pi * np.fft.fftfreq(n, d=mesh.widths[axis])
        shape = [1] * mesh.d
        shape[axis] = n
        out.append(np.broadcast_to(xi.reshape(shape), mesh.shape))
    return out


def bessel_multiplier(mesh, r):
    xi = frequency_grid(mesh)
    return (1.0 + sum(x * x for x in xi)) ** (r / 2.0)


def lp_norm(values, mesh, p):
    v = np.abs(np.asarray(values)).ravel()
    return float((np.sum(v ** p) * mesh.cell_volume) ** (1.0 / p))


def _top_quarter(mesh):
    mask = np.zeros(mesh.shape, dtype=bool)
    for axis, n in enumerate(mesh.shape):
        k = np.abs(np.fft.fftfreq(n, d=1.0 / n))
        shape = [1] * mesh.d
        shape[axis] = n
        mask |= (k > 0.75 * (n / 2)).reshape(shape)
    return mask


def apply_multiplier(f: GridFunction, mult, p=2.0):
    spec = np.fft.fftn(f.as_array()) * mult
    if p != 2:
        e = np.abs(spec) ** 2
        total = e.sum()
        if total > 0 and e[_top_quarter(f.mesh)].sum() > 0.01 * total:
            warnings.warn("top quarter of the spectrum carries more than 1% of the weighted energy; "
                          "L_p norm may be aliased", RuntimeWarning, stacklevel=3)
    return np.fft.ifftn(spec)


def sobolev_norm(f: GridFunction, r, p=2.0) -> float:
    """||(1 + |xi|^2)^{r/2} f||_{L_p} on a periodic grid."""
    _check_periodic(f.mesh)
    if not p > 1:
        raise ParameterError("p must exceed 1")
    g = apply_multiplier(f, bessel_multiplier(f.mesh, r), p)
    return lp_norm(g, f.mesh, p)


# ---------------------------------------------------------------- cones

def smoothstep5(x):
    x = np.clip(x, 0.0, 1.0)
    return x ** 3 * (10.0 - 15.0 * x + 6.0 * x * x)


@dataclass(frozen=True)
class ConeSystem:
    """Double cones in frequency space around an unstable axis; the stable cone is the rest
    minus a transition band of angular width `width`."""

    unstable_axis: float = 0.0
    unstable_half_aperture: float = math.radians(40.0)
    width: float = math.radians(10.0)
    dim: int = 2

    def __post_init__(self):
        if self.dim != 2:
            raise ParameterError("only two-dimensional cone systems are supported")
        if not (self.unstable_half_aperture >= 0 and self.width > 0
                and self.unstable_half_aperture + self.width < math.pi / 2):
            raise ParameterError("need aperture >= 0, width > 0 and aperture + width < pi/2")

    @property
    def stable_axis(self):
        return self.unstable_axis + math.pi / 2

    @property
    def stable_half_aperture(self):
        return math.pi / 2 - self.unstable_half_aperture - self.width

    def _dist_to_unstable(self, angle):
        d = np.mod(np.asarray(angle) - self.unstable_axis, np.pi)
        return np.minimum(d, np.pi - d)

    def phi_plus(self, angle):
        d = self._dist_to_unstable(angle)
        return smoothstep5((self.unstable_half_aperture + self.width - d) / self.width)

    def phi_minus(self, angle):
        return 1.0 - self.phi_plus(angle)

    def describe(self):
        return {"unstable_axis": self.unstable_axis, "unstable_half_aperture": self.unstable_half_aperture,
                "stable_axis": self.stable_axis, "stable_half_aperture": self.stable_half_aperture,
                "width": self.width}


def anisotropic_norm(f: GridFunction, cones: ConeSystem, u, s, p=2.0):
    """(total, plus_part, minus_part) with the cone-cut multipliers; zero mode goes to plus."""
    _check_periodic(f.mesh)
    if f.mesh.d != 2:
        raise ParameterError("anisotropic_norm needs a two-dimensional mesh")
    if u < 0 or s > 0:
        raise ParameterError("need u >= 0 and s <= 0")
    xi, eta = frequency_grid(f.mesh)
    ang = np.arctan2(eta, xi)
    phi_p = cones.phi_plus(ang)
    phi_p[0, 0] = 1.0
    base = 1.0 + xi ** 2 + eta ** 2
    plus = lp_norm(apply_multiplier(f, base ** (u / 2) * phi_p, p), f.mesh, p)
    minus = lp_norm(apply_multiplier(f, base ** (s / 2) * (1.0 - phi_p), p), f.mesh, p)
    return plus + minus, plus, minus


# ---------------------------------------------------------------- scaling studies

@dataclass
class ScalingResult:
    approx_slope: float
    smooth_blowup_slope: float
    expected_approx: float
    expected_blowup: float
    eps: np.ndarray
    approx_norms: np.ndarray
    smooth_norms: np.ndarray
    flags: list = field(default_factory=list)


def _loglog_slope(x, y):
    ok = np.isfinite(y) & (y > 1e-14)
    if ok.sum() < 3:
        raise ParameterError("degenerate fit: fewer than 3 usable scales")
    return float(np.polyfit(np.log(x[ok]), np.log(y[ok]), 1)[0])


def verify_scaling(obs: Observable, r, r_tilde, p, eps_list, mesh: Mesh) -> ScalingResult:
    """Slopes of log ||M_eps th - th||_{H^r~_p} and log ||M_eps th||_{H^{1+r~}_p} against log eps."""
    _check_periodic(mesh)
    # r is the nominal regularity of obs; a jump sits exactly at r = 1/p
    if not (0 < r_tilde < r <= 1.0 / p):
        raise ParameterError("need 0 < r_tilde < r <= 1/p")
    eps = np.asarray(sorted(eps_list, reverse=True), dtype=float)
    if eps.size < 4:
        raise ParameterError("need at least 4 scales")
    theta = GridFunction(mesh, obs(mesh.centers()))
    approx, smooth = [], []
    for e in eps:
        m = mollify(obs, e, mesh, method="fft")
        approx.append(sobolev_norm(m - theta, r_tilde, p))
        smooth.append(sobolev_norm(m, 1.0 + r_tilde, p))
    approx, smooth = np.array(approx), np.array(smooth)
    a_slope = _loglog_slope(eps, approx)
    s_slope = _loglog_slope(eps, smooth)
    flags = []
    if s_slope > -0.05:
        flags.append("smooth input")
    return ScalingResult(a_slope, s_slope, r - r_tilde, r - 1.0 - r_tilde, eps, approx, smooth, flags)


def indicator_membership_study(r_list, p=2.0, resolutions=(2 ** 10, 2 ** 11, 2 ** 12, 2 ** 13, 2 ** 14)):
    """Rows (r, resolution, norm) for the indicator of [0, 1/2) sampled at cell centres."""
    rows = []
    for n in resolutions:
        mesh = Mesh(circle(), (int(n),))
        x = mesh.centers()[:, 0]
        f = GridFunction(mesh, (x < 0.5).astype(float))
        for r in r_list:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                rows.append((float(r), int(n), sobolev_norm(f, r, p)))
    return rows


def growth_slopes(rows):
    """log2-slope of norm against resolution, per r."""
    out = {}
    for r in sorted({row[0] for row in rows}):
        sel = [(n, v) for rr, n, v in rows if rr == r]
        n, v = np.array(sel).T
        out[r] = float(np.polyfit(np.log2(n), np.log2(v), 1)[0])
    return out
