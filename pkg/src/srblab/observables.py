"""Smooth and Heaviside observables, mollification, transversality sampling and integration."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.interpolate import RegularGridInterpolator

from .grid import GridFunction, Mesh, bump_profile, periodic_bump_kernel, periodic_convolve
from .errors import ParameterError

N_STENCIL = 18  # even, so no node sits on a jump through the centre


def theta_step(v):
    """Theta(v) = 0 for v <= 0, 1 for v > 0."""
    return (np.asarray(v) > 0).astype(float)


@dataclass(frozen=True)
class Observable:
    kind: str
    h: Callable
    g: Optional[Callable] = None
    grad_g: Optional[Callable] = None
    a: Optional[float] = None
    grad: Optional[Callable] = None
    name: str = ""
    params: dict = field(default_factory=dict)
    support_hint: Optional[dict] = None

    def __post_init__(self):
        if self.kind not in ("smooth", "heaviside"):
            raise ParameterError(f"unknown observable kind {self.kind!r}")
        if self.kind == "heaviside" and (self.g is None or self.a is None):
            raise ParameterError("heaviside observable needs g and a")

    def eval(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "smooth":
            return self.h(x)
        return self.h(x) * theta_step(self.g(x) - self.a)

    __call__ = eval


def make_smooth(f, grad=None, name="smooth", params=None) -> Observable:
    return Observable("smooth", f, grad=grad, name=name, params=dict(params or {}))


def make_heaviside(h, g, grad_g, a, name="heaviside", params=None, support_hint=None) -> Observable:
    return Observable("heaviside", h, g=g, grad_g=grad_g, a=float(a), name=name,
                      params=dict(params or {}), support_hint=support_hint)


def one(x):
    return np.ones(np.asarray(x).shape[:-1])


# ---------------------------------------------------------------- built-ins

def periodic_displacement(x, center, domain):
    """x - center with minimal-image convention in periodic directions."""
    dx = np.asarray(x, dtype=float) - np.asarray(center, dtype=float)
    for i, per in enumerate(domain.periodic_dims):
        if per:
            L = domain.lengths[i]
            dx[..., i] -= L * np.round(dx[..., i] / L)
    return dx


def cat_unstable_covector():
    """Left eigenvector of [[2,1],[1,1]] for the expanding eigenvalue, unit length."""
    v = np.array([1.0, (math.sqrt(5.0) - 1.0) / 2.0])
    return v / np.linalg.norm(v)


def cat_stable_covector():
    v = np.array([1.0, -(math.sqrt(5.0) + 1.0) / 2.0])
    return v / np.linalg.norm(v)


def radial_bump(center, radius, domain):
    """exp(-1/(1-|x-c|^2/R^2)) with its gradient."""
    center = np.asarray(center, dtype=float)

    def h(x):
        dx = periodic_displacement(x, center, domain)
        return bump_profile(np.linalg.norm(dx, axis=-1) / radius)

    def grad(x):
        dx = periodic_displacement(x, center, domain)
        s = np.sum(dx * dx, axis=-1) / radius ** 2
        out = np.zeros_like(dx)
        inside = s < 1
        si = s[inside]
        val = np.exp(-1.0 / (1.0 - si))
        # d/dx exp(-1/(1-s)) = -exp(.) (1-s)^-2 * 2 dx / R^2
        out[inside] = (-val / (1.0 - si) ** 2 * 2.0 / radius ** 2)[:, None] * dx[inside]
        return out

    return h, grad


def trig(domain, k, phase=0.0, l=None, l_weight=0.0):
    """cos(2 pi k.x + phase) + l_weight cos(2 pi l.x) on a periodic box of unit periods."""
    k = np.asarray(k, dtype=float)
    scale = 2 * np.pi / domain.lengths
    kv = k * scale
    lv = None if l is None else np.asarray(l, dtype=float) * scale

    def f(x):
        x = np.asarray(x, dtype=float)
        out = np.cos(x @ kv + phase)
        if lv is not None and l_weight:
            out = out + l_weight * np.cos(x @ lv)
        return out

    def grad(x):
        x = np.asarray(x, dtype=float)
        out = -np.sin(x @ kv + phase)[..., None] * kv
        if lv is not None and l_weight:
            out = out - l_weight * np.sin(x @ lv)[..., None] * lv
        return out

    return make_smooth(f, grad, name="trig", params={"k": k.tolist(), "phase": phase})


def threshold(domain, axis, a, weight_axis=None, weight=0.0) -> Observable:
    """Theta(x_axis - a), optionally times the smooth weight 1 + weight * x_{weight_axis}."""
    e = np.zeros(domain.d)
    e[axis] = 1.0
    if weight_axis is None or weight == 0.0:
        h = one
    else:
        h = lambda x: 1.0 + weight * np.asarray(x)[..., weight_axis]  # noqa: E731
    return make_heaviside(h, lambda x: np.asarray(x)[..., axis], lambda x: np.broadcast_to(e, np.shape(x)),
                          a, name="threshold",
                          params={"axis": axis, "a": a, "weight_axis": weight_axis, "weight": weight})


def bump_heaviside(domain, center, radius, normal, a=0.0) -> Observable:
    """bump(x) * Theta(normal.(x - center) - a), the affine level set through the bump."""
    normal = np.asarray(normal, dtype=float)
    h, _ = radial_bump(center, radius, domain)

    def g(x):
        return periodic_displacement(x, center, domain) @ normal

    def grad_g(x):
        return np.broadcast_to(normal, np.shape(x)).copy()

    return make_heaviside(h, g, grad_g, a, name="bump_heaviside",
                          params={"center": list(map(float, center)), "radius": radius,
                                  "normal": normal.tolist(), "a": a},
                          support_hint={"ball": {"center": list(map(float, center)), "radius": radius}})


def quadratic_max(domain, center, a) -> Observable:
    """Theta(g - a) with g = -|x - center|^2 (maximum 0 at the centre)."""
    def g(x):
        dx = periodic_displacement(x, center, domain)
        return -np.sum(dx * dx, axis=-1)

    def grad_g(x):
        return -2.0 * periodic_displacement(x, center, domain)

    return make_heaviside(one, g, grad_g, a, name="quadratic_max",
                          params={"center": list(map(float, center)), "a": a})


OBSERVABLE_SCHEMAS = {
    "trig": {"k1": (1.0, "frequency along axis 0"), "k2": (0.0, "frequency along axis 1"),
             "k3": (0.0, "frequency along axis 2"), "phase": (0.0, "phase offset"),
             "l1": (0.0, "second mode, axis 0"), "l2": (0.0, "second mode, axis 1"),
             "l3": (0.0, "second mode, axis 2"), "l_weight": (0.0, "weight of the second mode")},
    "threshold": {"axis": (0, "coordinate index"), "a": (0.5, "threshold"),
                  "weight_axis": (-1, "if >= 0, multiply by 1 + weight * x[weight_axis]"),
                  "weight": (0.0, "slope of the smooth weight")},
    "bump_heaviside": {"cx": (0.5, "bump centre"), "cy": (0.5, ""), "cz": (0.0, ""),
                       "radius": (0.2, "bump radius"),
                       "normal": ("unstable", "unstable | stable (cat covectors) | custom"),
                       "n1": (1.0, "custom normal"), "n2": (0.0, ""), "n3": (0.0, ""),
                       "a": (0.0, "level")},
    "quadratic_max": {"cx": (0.5, "location of the maximum"), "cy": (0.5, ""), "cz": (0.0, ""),
                      "a": (-0.01, "threshold, negative")},
}


def builtin_observable(name, params, domain) -> Observable:
    """Named observables from a flat parameter map."""
    if name not in OBSERVABLE_SCHEMAS:
        raise ParameterError(f"unknown observable {name!r}; choose from {sorted(OBSERVABLE_SCHEMAS)}")
    unknown = set(params) - set(OBSERVABLE_SCHEMAS[name])
    if unknown:
        raise ParameterError(f"unknown parameters for observable {name}: {sorted(unknown)}")
    p = {k: v[0] for k, v in OBSERVABLE_SCHEMAS[name].items()}
    p.update(params)
    d = domain.d
    vec = lambda keys: [float(p[k]) for k in keys[:d]]  # noqa: E731
    if name == "trig":
        return trig(domain, vec(["k1", "k2", "k3"]), float(p["phase"]),
                    vec(["l1", "l2", "l3"]), float(p["l_weight"]))
    if name == "threshold":
        axis = int(p["axis"])
        if not 0 <= axis < d:
            raise ParameterError(f"axis {axis} out of range")
        wa = int(p["weight_axis"])
        if not -1 <= wa < d:
            raise ParameterError(f"weight_axis {wa} out of range")
        return threshold(domain, axis, float(p["a"]), None if wa < 0 else wa, float(p["weight"]))
    if name == "bump_heaviside":
        normal = p["normal"]
        if normal == "unstable" and d == 2:
            nv = cat_unstable_covector()
        elif normal == "stable" and d == 2:
            nv = cat_stable_covector()
        elif normal == "custom":
            nv = np.array(vec(["n1", "n2", "n3"]))
        else:
            raise ParameterError(f"normal={normal!r} not available in dimension {d}")
        return bump_heaviside(domain, vec(["cx", "cy", "cz"]), float(p["radius"]), nv, float(p["a"]))
    return quadratic_max(domain, vec(["cx", "cy", "cz"]), float(p["a"]))


# ---------------------------------------------------------------- mollification

def _stencil(d):
    v, w = leggauss(N_STENCIL)
    w = w * bump_profile(v)
    w = w / w.sum()
    grids = np.meshgrid(*([v] * d), indexing="ij")
    wg = np.meshgrid(*([w] * d), indexing="ij")
    nodes = np.stack([g.ravel() for g in grids], axis=-1)
    weights = np.prod(np.stack([g.ravel() for g in wg], axis=-1), axis=-1)
    return nodes, weights


def _reflect(x, domain):
    x = np.array(x, copy=True)
    hit = False
    for i, per in enumerate(domain.periodic_dims):
        if per:
            continue
        lo, hi = domain.bounds[i]
        below, above = x[..., i] < lo, x[..., i] > hi
        if below.any() or above.any():
            hit = True
        x[..., i] = np.where(below, 2 * lo - x[..., i], x[..., i])
        x[..., i] = np.where(above, 2 * hi - x[..., i], x[..., i])
    return x, hit


def mollify(obs, eps, mesh: Mesh, method="quadrature", chunk=400_000) -> GridFunction:
    """Cell-centre values of obs convolved with the normalised bump at scale eps.

    method="quadrature" uses an 18-point Gauss-Legendre tensor stencil per cell;
    method="fft" convolves cell-centre samples with a sampled kernel (periodic meshes only).
    """
    dom = mesh.domain
    if not eps > 0 or np.any(eps >= dom.lengths / 4):
        raise ParameterError(f"eps={eps} must lie in (0, period/4)")
    f = obs.eval if isinstance(obs, Observable) else obs
    centers = mesh.centers()
    meta = {"eps": eps, "method": method}
    if method == "fft":
        if not dom.fully_periodic:
            raise ParameterError("fft mollification needs a fully periodic mesh")
        vals = periodic_convolve(f(centers), mesh, periodic_bump_kernel(mesh, eps))
        return GridFunction(mesh, vals, meta)
    if method != "quadrature":
        raise ParameterError(f"unknown mollification method {method!r}")
    nodes, weights = _stencil(mesh.d)
    out = np.empty(mesh.n_cells)
    per = max(1, chunk // nodes.shape[0])
    reflected = False
    for s in range(0, mesh.n_cells, per):
        c = centers[s:s + per]
        pts = c[:, None, :] - eps * nodes[None, :, :]
        pts, hit = _reflect(pts, dom)
        reflected |= hit
        out[s:s + per] = f(dom.wrap(pts).reshape(-1, mesh.d)).reshape(len(c), -1) @ weights
    if reflected:
        meta["warning"] = "stencil crossed a bounded boundary; reflected padding used"
    return GridFunction(mesh, out, meta)


def grid_observable(gf: GridFunction, name="grid") -> Observable:
    """Smooth observable from periodic grid values: linear interpolation of values and of
    their spectral gradient."""
    mesh = gf.mesh
    if not mesh.domain.fully_periodic:
        raise ParameterError("grid_observable needs a fully periodic mesh")
    arr = gf.as_array().real
    spec = np.fft.fftn(arr)
    grads = []
    for axis, n in enumerate(mesh.shape):
        k = 2j * np.pi * np.fft.fftfreq(n, d=mesh.widths[axis])
        shape = [1] * mesh.d
        shape[axis] = n
        grads.append(np.fft.ifftn(spec * k.reshape(shape)).real)
    lo = mesh.domain.lo
    axes = [lo[i] + (np.arange(-1, n + 1) + 0.5) * mesh.widths[i] for i, n in enumerate(mesh.shape)]

    def pad(a):
        return np.pad(a, 1, mode="wrap")

    interp_v = RegularGridInterpolator(axes, pad(arr))
    interp_g = [RegularGridInterpolator(axes, pad(g)) for g in grads]

    def f(x):
        x = mesh.domain.wrap(x)
        return interp_v(x.reshape(-1, mesh.d)).reshape(x.shape[:-1])

    def grad(x):
        x = mesh.domain.wrap(x)
        flat = x.reshape(-1, mesh.d)
        return np.stack([ig(flat) for ig in interp_g], axis=-1).reshape(x.shape)

    return make_smooth(f, grad, name=name, params=dict(gf.meta))


def mollified_observable(obs: Observable, eps, mesh: Mesh) -> Observable:
    """FFT-mollified obs on `mesh`, interpolated, with gradient (for the ergodic response sum)."""
    gf = mollify(obs, eps, mesh, method="fft")
    return grid_observable(gf, name=f"mollified_{obs.name}")


# ---------------------------------------------------------------- transversality

@dataclass
class TransversalityReport:
    n_samples: int
    fraction_transversal: float
    min_cone_margin: float
    critical_value_flag: bool
    verdict: str
    extra: dict = field(default_factory=dict)


def _angle_to_line(u, v):
    """Angle in [0, pi/2] between the lines spanned by u and v."""
    c = abs(float(np.dot(u, v))) / (np.linalg.norm(u) * np.linalg.norm(v))
    return math.acos(min(1.0, c))


def unstable_covector(family, t, x, m=30, rng=None):
    """Pull a random covector back from f^m(x); converges to the annihilator of E^s at x."""
    rng = rng or np.random.default_rng(0)
    jacs = []
    y = np.asarray(x, dtype=float)
    for _ in range(m):
        jacs.append(family.jac(t, y))
        y = family.eval(t, y)
    w = rng.standard_normal(family.d)
    prev = None
    for k, J in enumerate(reversed(jacs)):
        w = J.T @ w
        w /= np.linalg.norm(w)
        if k == m - 2:
            prev = w.copy()
    converged = prev is None or _angle_to_line(w, prev) < 1e-6
    return w, converged


def stable_vector(family, t, x, m=30, rng=None):
    """Carry a random vector from f^m(x) back to x with inverse Jacobians; aligns with E^s(x)."""
    if family.d_s == 0:
        return None
    rng = rng or np.random.default_rng(0)
    jacs = []
    y = np.asarray(x, dtype=float)
    for _ in range(m):
        jacs.append(family.jac(t, y))
        y = family.eval(t, y)
    v = rng.standard_normal(family.d)
    for J in reversed(jacs):
        v = np.linalg.solve(J, v)
        v /= np.linalg.norm(v)
    return v


def transversality_check(obs: Observable, family, t, n_samples=100, cone_aperture=0.3, seed=0,
                         max_tries=None, m=30) -> TransversalityReport:
    """Sample W_a = {g = a} n supp h and test whether grad g lies in the unstable cone."""
    if obs.kind != "heaviside" or obs.grad_g is None:
        raise ParameterError("transversality_check needs a heaviside observable with grad_g")
    rng = np.random.default_rng(seed)
    dom = family.domain
    ell = 0.25 * float(np.min(dom.lengths))
    max_tries = max_tries or 200 * n_samples
    pts = []
    for _ in range(max_tries):
        if len(pts) >= n_samples:
            break
        p = dom.uniform(1, rng)[0]
        if obs.h(p[None])[0] == 0:
            continue
        d = rng.standard_normal(dom.d)
        d /= np.linalg.norm(d)
        s = rng.uniform(-ell, ell)
        q = p + s * d
        fa = obs.g(p[None])[0] - obs.a
        fb = obs.g(q[None])[0] - obs.a
        if fa * fb > 0:
            continue
        lo, hi = 0.0, 1.0
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            fm = obs.g((p + mid * s * d)[None])[0] - obs.a
            if fa * fm <= 0:
                hi = mid
            else:
                lo = mid
        root = p + hi * s * d
        if abs(obs.g(root[None])[0] - obs.a) > 1e-8 or obs.h(root[None])[0] == 0:
            continue  # a jump of g across a cut, or outside supp h
        pts.append(dom.wrap(root))
    if not pts:
        return TransversalityReport(0, 0.0, float("nan"), False, "vacuous")
    pts = np.array(pts)
    grads = obs.grad_g(pts)
    margins, critical, unconverged, stable_dots = [], False, 0, []
    for x, gr in zip(pts, grads):
        if np.linalg.norm(gr) < 1e-8:
            critical = True
            margins.append(-np.pi / 2)
            continue
        cov, ok = unstable_covector(family, t, x, m=m, rng=rng)
        unconverged += not ok
        margins.append(cone_aperture - _angle_to_line(gr, cov))
        sv = stable_vector(family, t, x, m=m, rng=rng)
        if sv is not None:
            stable_dots.append(abs(float(np.dot(gr, sv))) / np.linalg.norm(gr))
    margins = np.array(margins)
    inside = margins > 0
    frac = float(inside.mean())
    if frac == 1.0 and not critical:
        verdict = "transversal"
    elif frac == 0.0:
        verdict = "tangent"
    else:
        verdict = "mixed"
    extra = {"unconverged_directions": int(unconverged)}
    if stable_dots:
        extra["max_normal_dot_stable"] = float(max(stable_dots))
    return TransversalityReport(len(pts), frac, float(margins.min()), critical, verdict, extra)


# ---------------------------------------------------------------- integration

def _values_on(measure, obs):
    if measure.kind == "ulam_vector":
        if isinstance(obs, GridFunction):
            if obs.mesh.shape != measure.mesh.shape:
                raise ParameterError("grid function and measure live on different meshes")
            return obs.values
        if callable(obs):
            return obs(measure.mesh.centers())
        vals = np.asarray(obs)
        if vals.shape != measure.weights.shape:
            raise ParameterError(f"vector of length {vals.shape} does not match {measure.weights.shape}")
        return vals
    pts = measure.support_points
    if isinstance(obs, GridFunction):
        if obs.mesh.d != pts.shape[1]:
            raise ParameterError("dimension mismatch between grid function and support points")
        return obs.values[obs.mesh.index_of(pts)]
    if callable(obs):
        return obs(pts)
    raise ParameterError("empirical measures need an observable or grid function")


def integrate(measure, obs) -> float:
    """Integral of obs against an Ulam vector (cell centres) or an empirical measure."""
    return float(np.dot(measure.weights, _values_on(measure, obs)))


def integrate_by_orbit(measure, obs):
    """Per-orbit time averages of obs for an empirical measure (for standard errors)."""
    if measure.kind != "empirical" or measure.orbit_ids is None:
        raise ParameterError("per-orbit averages need an empirical measure with orbit ids")
    vals = _values_on(measure, obs)
    n = int(measure.orbit_ids.max()) + 1
    sums = np.bincount(measure.orbit_ids, weights=vals * measure.weights, minlength=n)
    w = np.bincount(measure.orbit_ids, weights=measure.weights, minlength=n)
    return sums / w
