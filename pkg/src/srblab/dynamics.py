"""Model map families t -> f_t on flat domains, orbits and the perturbation field X_t."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import grid
from .errors import OrbitError, ParameterError, UnsupportedPerturbation
from .grid import ModelDomain

TWO_PI = 2.0 * np.pi
CAT = np.array([[2.0, 1.0], [1.0, 1.0]])
CAT_INV = np.array([[1.0, -1.0], [-1.0, 2.0]])

# name -> {param: (default, help)}; consumed by `cli list`
FAMILY_SCHEMAS = {
    "doubling": {},
    "cat_translate": {
        "v1": (1.0, "translation direction, first component"),
        "v2": (0.0, "translation direction, second component"),
    },
    "cat_dissipative": {
        "eps": (0.1, "amplitude of the sin(2 pi x) shear; needs 2 pi |eps| eps0 < 1"),
    },
    "solenoid": {
        "lam1": (0.4, "contraction in u, in (0, 1/2)"),
        "lam2": (0.4, "contraction in v, in (0, 1/2)"),
        "c": (0.3, "radius of the embedded circle, > 0"),
        "amp": (1.0, "perturbation amplitude"),
        "direction": ("unstable_shift", "unstable_shift (rotate theta) or stable_shift (shift u)"),
    },
    "skew_atomic": {
        "lam": (0.5, "fibre contraction, in (0, 1)"),
        "c": (0.25, "fibre offset"),
    },
}
DEFAULT_EPS0 = 0.05


@dataclass(frozen=True)
class MapFamily:
    """A parametrised family of maps; all callables act on arrays of shape (..., d)."""

    name: str
    domain: ModelDomain
    d_u: int
    d_s: int
    eval: Callable
    jac: Callable
    det_jac: Callable
    dt: Callable
    dt_jac: Optional[Callable] = None
    inverse: Optional[Callable] = None
    preimages: Optional[Callable] = None  # (t, x) -> list of branch points, for endomorphisms
    invertible: bool = False
    dt_constant: bool = False
    t_range: tuple = (-DEFAULT_EPS0, DEFAULT_EPS0)
    # binary-doubling coordinates lose one mantissa bit per step in floating point
    float_horizon: Optional[int] = None
    params: dict = field(default_factory=dict)

    @property
    def d(self):
        return self.domain.d

    def __call__(self, t, x):
        return self.eval(t, x)

    def check_t(self, t):
        lo, hi = self.t_range
        if not (lo - 1e-15 <= t <= hi + 1e-15):
            raise ParameterError(f"t={t} outside t_range [{lo}, {hi}] of {self.name}")

    def describe(self):
        return {"name": self.name, "params": dict(self.params), "domain": self.domain.describe(),
                "d_u": self.d_u, "d_s": self.d_s, "invertible": self.invertible,
                "t_range": list(self.t_range)}


@dataclass(frozen=True)
class PerturbationField:
    at: Callable
    divergence: Callable
    exact_divergence: bool = True


def _pts(x, d):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != d:
        raise ParameterError(f"expected points with last axis {d}, got shape {x.shape}")
    return x


def _newton_circle(lhs, a, amp, x0, iters=60):
    """Solve x + amp*sin(2 pi x) = lhs (mod nothing) by Newton from x0; needs 2 pi |amp| < 1."""
    x = np.array(x0, dtype=float)
    for _ in range(iters):
        F = a * x + amp * np.sin(TWO_PI * x) - lhs
        step = F / (a + TWO_PI * amp * np.cos(TWO_PI * x))
        x = x - step
        if np.all(np.abs(step) < 1e-15):
            break
    return x


# ---------------------------------------------------------------- families

def _doubling(params, eps0):
    dom = grid.circle()
    if TWO_PI * eps0 >= 1.0:
        raise ParameterError("doubling needs 2 pi eps0 < 1 to stay expanding")

    def f(t, x):
        x = _pts(x, 1)
        return dom.wrap(2.0 * x + t * np.sin(TWO_PI * x))

    def jac(t, x):
        x = _pts(x, 1)
        return (2.0 + TWO_PI * t * np.cos(TWO_PI * x))[..., None]

    def det(t, x):
        return jac(t, x)[..., 0, 0]

    def dt(t, x):
        return np.sin(TWO_PI * _pts(x, 1))

    def dt_jac(t, x):
        return (TWO_PI * np.cos(TWO_PI * _pts(x, 1)))[..., None]

    def preimages(t, x):
        x = _pts(x, 1)
        out = []
        for branch in (0.0, 1.0):
            rhs = x + branch
            y = _newton_circle(rhs, 2.0, t, rhs / 2.0)
            out.append(dom.wrap(y))
        return out

    return MapFamily("doubling", dom, 1, 0, f, jac, det, dt, dt_jac=dt_jac,
                     preimages=preimages, invertible=False, float_horizon=50)


def _cat_translate(params, eps0):
    dom = grid.torus2()
    v = np.array([params.get("v1", 1.0), params.get("v2", 0.0)], dtype=float)
    if not np.all(np.isfinite(v)):
        raise ParameterError("translation vector must be finite")

    def f(t, x):
        return dom.wrap(_pts(x, 2) @ CAT.T + t * v)

    def jac(t, x):
        x = _pts(x, 2)
        return np.broadcast_to(CAT, x.shape[:-1] + (2, 2)).copy()

    def det(t, x):
        return np.ones(_pts(x, 2).shape[:-1])

    def dt(t, x):
        x = _pts(x, 2)
        return np.broadcast_to(v, x.shape).copy()

    def dt_jac(t, x):
        return np.zeros(_pts(x, 2).shape[:-1] + (2, 2))

    def inverse(t, x):
        return dom.wrap((_pts(x, 2) - t * v) @ CAT_INV.T)

    return MapFamily("cat_translate", dom, 1, 1, f, jac, det, dt, dt_jac=dt_jac,
                     inverse=inverse, invertible=True, dt_constant=True)


def _cat_dissipative(params, eps0):
    dom = grid.torus2()
    eps = float(params.get("eps", 0.1))
    if not TWO_PI * abs(eps) * eps0 < 1.0:
        raise ParameterError(f"cat_dissipative needs 2 pi |eps| eps0 < 1 (eps={eps}, eps0={eps0})")

    def f(t, x):
        x = _pts(x, 2)
        X, Y = x[..., 0], x[..., 1]
        out = np.stack([2 * X + Y + t * eps * np.sin(TWO_PI * X), X + Y], axis=-1)
        return dom.wrap(out)

    def jac(t, x):
        x = _pts(x, 2)
        J = np.empty(x.shape[:-1] + (2, 2))
        J[..., 0, 0] = 2.0 + TWO_PI * t * eps * np.cos(TWO_PI * x[..., 0])
        J[..., 0, 1] = 1.0
        J[..., 1, 0] = 1.0
        J[..., 1, 1] = 1.0
        return J

    def det(t, x):
        x = _pts(x, 2)
        return 1.0 + TWO_PI * t * eps * np.cos(TWO_PI * x[..., 0])

    def dt(t, x):
        x = _pts(x, 2)
        return np.stack([eps * np.sin(TWO_PI * x[..., 0]), np.zeros(x.shape[:-1])], axis=-1)

    def dt_jac(t, x):
        x = _pts(x, 2)
        J = np.zeros(x.shape[:-1] + (2, 2))
        J[..., 0, 0] = TWO_PI * eps * np.cos(TWO_PI * x[..., 0])
        return J

    def inverse(t, z):
        z = _pts(z, 2)
        # first coordinate solves x + t eps sin(2 pi x) = X - Y
        lhs = np.mod(z[..., 0] - z[..., 1], 1.0)
        x = _newton_circle(lhs, 1.0, t * eps, lhs)
        y = z[..., 1] - x
        return dom.wrap(np.stack([x, y], axis=-1))

    return MapFamily("cat_dissipative", dom, 1, 1, f, jac, det, dt, dt_jac=dt_jac,
                     inverse=inverse, invertible=True)


def _solenoid(params, eps0):
    lam1 = float(params.get("lam1", 0.4))
    lam2 = float(params.get("lam2", 0.4))
    c = float(params.get("c", 0.3))
    amp = float(params.get("amp", 1.0))
    direction = params.get("direction", "unstable_shift")
    for nm, lam in (("lam1", lam1), ("lam2", lam2)):
        if not 0.0 < lam < 0.5:
            raise ParameterError(f"solenoid {nm}={lam} must lie in (0, 1/2) for disjoint branches")
    if not c > 0:
        raise ParameterError("solenoid c must be positive")
    if direction not in ("unstable_shift", "stable_shift"):
        raise ParameterError(f"unknown solenoid direction {direction!r}")
    shift = np.array([amp, 0.0, 0.0]) if direction == "unstable_shift" else np.array([0.0, amp, 0.0])
    lam_max = max(lam1, lam2)
    radius = (c + abs(amp) * eps0) / (1.0 - lam_max) + 0.2
    dom = grid.solid_torus3(radius)

    def f(t, x):
        x = _pts(x, 3)
        th = x[..., 0]
        out = np.stack([2.0 * th, lam1 * x[..., 1] + c * np.cos(th), lam2 * x[..., 2] + c * np.sin(th)], axis=-1)
        return dom.wrap(out + t * shift)

    def jac(t, x):
        x = _pts(x, 3)
        th = x[..., 0]
        J = np.zeros(x.shape[:-1] + (3, 3))
        J[..., 0, 0] = 2.0
        J[..., 1, 0] = -c * np.sin(th)
        J[..., 1, 1] = lam1
        J[..., 2, 0] = c * np.cos(th)
        J[..., 2, 2] = lam2
        return J

    def det(t, x):
        return np.full(_pts(x, 3).shape[:-1], 2.0 * lam1 * lam2)

    def dt(t, x):
        x = _pts(x, 3)
        return np.broadcast_to(shift, x.shape).copy()

    def dt_jac(t, x):
        return np.zeros(_pts(x, 3).shape[:-1] + (3, 3))

    def _branches(t, z):
        z = _pts(z, 3) - t * shift
        out = []
        for k in (0, 1):
            th = np.mod(z[..., 0], TWO_PI) / 2.0 + k * np.pi
            u = (z[..., 1] - c * np.cos(th)) / lam1
            v = (z[..., 2] - c * np.sin(th)) / lam2
            out.append(np.stack([th, u, v], axis=-1))
        return out

    def inverse(t, z):
        # the image of the solid torus meets each fibre in two disjoint disks; pick the one we came from
        b0, b1 = _branches(t, z)
        r0 = np.hypot(b0[..., 1], b0[..., 2])
        r1 = np.hypot(b1[..., 1], b1[..., 2])
        return dom.wrap(np.where((r0 <= r1)[..., None], b0, b1))

    fam = MapFamily("solenoid", dom, 1, 2, f, jac, det, dt, dt_jac=dt_jac, inverse=inverse,
                    preimages=lambda t, z: [dom.wrap(b) for b in _branches(t, z)],
                    invertible=True, dt_constant=True, float_horizon=50)
    return fam


def _skew_atomic(params, eps0):
    lam = float(params.get("lam", 0.5))
    c = float(params.get("c", 0.25))
    if not 0.0 < lam < 1.0:
        raise ParameterError(f"skew_atomic lam={lam} must lie in (0, 1)")
    vlo = (c - eps0) / (1.0 - lam) - 0.5
    vhi = (c + eps0) / (1.0 - lam) + 0.5
    dom = grid.cylinder2(vlo, vhi)

    def f(t, x):
        x = _pts(x, 2)
        return dom.wrap(np.stack([2.0 * x[..., 0], lam * x[..., 1] + c + t], axis=-1))

    def jac(t, x):
        x = _pts(x, 2)
        J = np.zeros(x.shape[:-1] + (2, 2))
        J[..., 0, 0] = 2.0
        J[..., 1, 1] = lam
        return J

    def det(t, x):
        return np.full(_pts(x, 2).shape[:-1], 2.0 * lam)

    def dt(t, x):
        x = _pts(x, 2)
        return np.broadcast_to(np.array([0.0, 1.0]), x.shape).copy()

    def dt_jac(t, x):
        return np.zeros(_pts(x, 2).shape[:-1] + (2, 2))

    def preimages(t, z):
        z = _pts(z, 2)
        v = (z[..., 1] - c - t) / lam
        return [dom.wrap(np.stack([z[..., 0] / 2.0 + k / 2.0, v], axis=-1)) for k in (0, 1)]

    return MapFamily("skew_atomic", dom, 1, 1, f, jac, det, dt, dt_jac=dt_jac,
                     preimages=preimages, invertible=False, dt_constant=True, float_horizon=50)


_BUILDERS = {
    "doubling": _doubling,
    "cat_translate": _cat_translate,
    "cat_dissipative": _cat_dissipative,
    "solenoid": _solenoid,
    "skew_atomic": _skew_atomic,
}


def make_builtin_family(name, params=None, eps0=DEFAULT_EPS0) -> MapFamily:
    """Construct one of the built-in families by name."""
    if name not in _BUILDERS:
        raise ParameterError(f"unknown family {name!r}; choose from {sorted(_BUILDERS)}")
    params = dict(params or {})
    unknown = set(params) - set(FAMILY_SCHEMAS[name])
    if unknown:
        raise ParameterError(f"unknown parameters for {name}: {sorted(unknown)}")
    if not eps0 > 0:
        raise ParameterError("eps0 must be positive")
    fam = _BUILDERS[name](params, eps0)
    full = {k: v[0] for k, v in FAMILY_SCHEMAS[name].items()}
    full.update(params)
    return MapFamily(**{**fam.__dict__, "t_range": (-eps0, eps0), "params": full})


# ---------------------------------------------------------------- orbits

def _horizon_warning(family, total):
    if family.float_horizon is not None and total > family.float_horizon:
        warnings.warn(f"{family.name}: {total} iterations exceed the floating-point horizon "
                      f"{family.float_horizon}; binary-doubling coordinates degenerate, "
                      "prefer many short orbits", RuntimeWarning, stacklevel=3)


def orbit(family: MapFamily, t, x0=None, n_steps=1, burn_in=0, seed=None):
    """Points f^{burn_in+1}(x0), ..., f^{burn_in+n_steps}(x0) as an (n_steps, d) array.

    When x0 is None a uniform initial point is drawn from `seed`.
    """
    if n_steps < 1 or burn_in < 0:
        raise ParameterError("need n_steps >= 1 and burn_in >= 0")
    if x0 is None:
        x0 = family.domain.uniform(1, np.random.default_rng(seed))[0]
    x0 = np.asarray(x0, dtype=float).reshape(family.d)
    return orbit_batch(family, t, x0[None, :], n_steps, burn_in)[:, 0, :]


def orbit_batch(family: MapFamily, t, x0, n_steps, burn_in=0, warn=True):
    """Vectorised orbits of many initial points; returns (n_steps, n_points, d)."""
    x = family.domain.wrap(np.atleast_2d(np.asarray(x0, dtype=float)))
    if warn:
        _horizon_warning(family, burn_in + n_steps)
    out = np.empty((n_steps,) + x.shape)
    for k in range(burn_in + n_steps):
        x = family.eval(t, x)
        if not np.all(np.isfinite(x)):
            raise OrbitError(k + 1)
        if k >= burn_in:
            out[k - burn_in] = x
    return out


def random_attractor_points(family, t, n, burn_in, rng):
    """Uniform points pushed `burn_in` steps forward."""
    x = family.domain.uniform(n, rng)
    if burn_in == 0:
        return x
    return orbit_batch(family, t, x, 1, burn_in - 1, warn=False)[0]


# ---------------------------------------------------------------- X_t

def perturbation_field(family: MapFamily, t, h=1e-5) -> PerturbationField:
    """X_t = (d/dt f_t) o f_t^{-1} with its divergence."""
    d = family.d
    if family.dt_constant:
        def at(x):
            return family.dt(t, x)

        def div(x):
            return np.zeros(np.asarray(x).shape[:-1])

        return PerturbationField(at, div)
    if not family.invertible or family.inverse is None:
        raise UnsupportedPerturbation(
            f"{family.name} is not invertible and its t-derivative is not constant; X_t is "
            "undefined. Use the mollified-pushforward source term in srblab.response instead.")

    def at(x):
        return family.dt(t, family.inverse(t, x))

    if family.dt_jac is not None:
        def div(x):
            y = family.inverse(t, x)
            # D(dt o f^-1) = D(dt)(y) Df(y)^{-1}
            M = np.linalg.solve(np.swapaxes(family.jac(t, y), -1, -2),
                                np.swapaxes(family.dt_jac(t, y), -1, -2))
            return np.trace(M, axis1=-2, axis2=-1)

        return PerturbationField(at, div)

    def div(x):
        x = np.asarray(x, dtype=float)
        total = np.zeros(x.shape[:-1])
        for i in range(d):
            e = np.zeros(d)
            e[i] = h
            total += (at(x + e)[..., i] - at(x - e)[..., i]) / (2 * h)
        return total

    return PerturbationField(at, div, exact_divergence=False)
