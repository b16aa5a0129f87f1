"""Response curves t -> int theta d rho_t and the three linear-response formulas."""
from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .dynamics import MapFamily, orbit_batch, perturbation_field, random_attractor_points
from .errors import SRBLabError, MeanNotZeroError, OrbitError, ParameterError, UnsupportedPerturbation
from .grid import GridFunction, Mesh, periodic_bump_kernel, periodic_convolve
from .observables import Observable, integrate, integrate_by_orbit
from .transfer import SRBMeasure, UlamOperator, build_ulam, resolvent_apply, srb_birkhoff, srb_ulam

MEAN_TOL = 1e-3


@dataclass
class UlamParams:
    cells_per_dim: tuple = (256,)
    samples_per_cell: int = 64
    seed: int = 0
    n_replicates: int = 4
    # "replicates": spread over seeds; "refinement": |R(mesh) - R(mesh/2)|
    error_mode: str = "replicates"
    tol: float = 1e-13


@dataclass
class BirkhoffParams:
    n_orbits: int = 1000
    n_steps: int = 100
    burn_in: int = 50
    seed: int = 0


@dataclass
class ResponseCurve:
    t_values: np.ndarray
    R_values: np.ndarray
    estimator: str
    estimator_params: dict
    error_bars: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.t_values = np.asarray(self.t_values, dtype=float)
        self.R_values = np.asarray(self.R_values, dtype=float)
        self.error_bars = np.asarray(self.error_bars, dtype=float)
        if not (len(self.t_values) == len(self.R_values) == len(self.error_bars)):
            raise ParameterError("t_values, R_values and error_bars differ in length")
        if np.any(self.error_bars < 0):
            raise ParameterError("error bars must be nonnegative")
        order = np.argsort(self.t_values, kind="stable")
        self.t_values, self.R_values, self.error_bars = (self.t_values[order], self.R_values[order],
                                                         self.error_bars[order])

    def value_at(self, t, atol=1e-12):
        i = np.flatnonzero(np.abs(self.t_values - t) <= atol)
        if i.size == 0:
            raise ParameterError(f"t={t} is not on the curve's grid")
        return self.R_values[i[0]], self.error_bars[i[0]]

    def to_dict(self):
        return {"t_values": self.t_values.tolist(), "R_values": self.R_values.tolist(),
                "error_bars": self.error_bars.tolist(), "estimator": self.estimator,
                "estimator_params": self.estimator_params, "meta": self.meta}


@dataclass
class FdtResult:
    derivative: float
    terms: np.ndarray
    truncation_K: int
    tail_ratio: float
    method: str
    meta: dict = field(default_factory=dict)

    @property
    def converged(self):
        return self.tail_ratio < 1.0

    def to_dict(self):
        return {"derivative": self.derivative, "terms": np.asarray(self.terms).tolist(),
                "truncation_K": self.truncation_K, "tail_ratio": self.tail_ratio,
                "method": self.method, "converged": self.converged, "meta": self.meta}


# ---------------------------------------------------------------- response curves

def _ulam_value(family, obs, t, mesh, p: UlamParams, seed):
    op = build_ulam(family, t, mesh, p.samples_per_cell, seed)
    mu = srb_ulam(op, tol=p.tol, gap_check=False)
    return integrate(mu, obs)


def solver_floor(obs, mesh: Mesh, tol):
    """Error a single Ulam solve cannot resolve: the power-iteration stopping tolerance (in TV)
    times max|theta|, plus roundoff of the length-n dot product."""
    vals = np.abs(obs(mesh.centers()) if callable(obs) else np.asarray(obs.values))
    return float(tol * vals.max() + mesh.n_cells * np.finfo(float).eps * vals.mean())


def response_curve(family: MapFamily, obs, t_list, estimator="ulam", params=None) -> ResponseCurve:
    """R(t) = int obs d rho_t with the same discretisation and seeds at every t."""
    t_list = [float(t) for t in t_list]
    for t in t_list:
        family.check_t(t)
    if estimator == "ulam":
        p = params or UlamParams()
        if p.n_replicates < 1:
            raise ParameterError("n_replicates must be positive")
        mesh = Mesh(family.domain, p.cells_per_dim)
        floor = solver_floor(obs, mesh, p.tol)
        R, eb, reps = [], [], []
        for t in t_list:
            try:
                vals = [_ulam_value(family, obs, t, mesh, p, p.seed + k) for k in range(p.n_replicates)]
            except SRBLabError as exc:
                raise SRBLabError(f"at t={t}: {exc}") from exc
            reps.append(vals)
            R.append(float(np.mean(vals)))
            if p.error_mode == "refinement":
                coarse = Mesh(family.domain, tuple(max(1, c // 2) for c in mesh.shape))
                eb.append(abs(R[-1] - _ulam_value(family, obs, t, coarse, p, p.seed)))
            elif p.n_replicates > 1:
                eb.append(float(np.std(vals, ddof=1) / math.sqrt(p.n_replicates)))
            else:
                eb.append(0.0)
            # replicate spread can vanish (e.g. exactly doubly-stochastic matrices); never report
            # less than the solver can resolve
            eb[-1] = max(eb[-1], floor)
        return ResponseCurve(t_list, R, "ulam", asdict(p), eb, meta={"replicates": reps, "solver_floor": floor})
    if estimator == "birkhoff":
        p = params or BirkhoffParams()
        R, eb = [], []
        for t in t_list:
            mu = srb_birkhoff(family, t, p.n_orbits, p.n_steps, p.burn_in, p.seed)
            per_orbit = integrate_by_orbit(mu, obs)
            R.append(float(per_orbit.mean()))
            eb.append(float(per_orbit.std(ddof=1) / math.sqrt(p.n_orbits)) if p.n_orbits > 1 else 0.0)
        return ResponseCurve(t_list, R, "birkhoff", asdict(p), eb)
    raise ParameterError(f"unknown estimator {estimator!r}")


def symmetric_pairs(curve: ResponseCurve, t0, atol=1e-12):
    """Half-widths delta > 0 with t0 +- delta both on the grid, increasing."""
    ts = curve.t_values
    out = []
    for t in ts[ts > t0 + atol]:
        delta = t - t0
        if np.any(np.abs(ts - (t0 - delta)) <= atol * max(1.0, abs(delta))):
            out.append(float(delta))
    return out


def fd_derivatives(curve: ResponseCurve, t0):
    """Central differences (delta, D, error) for every symmetric pair around t0."""
    out = []
    for delta in symmetric_pairs(curve, t0):
        rp, ep = curve.value_at(t0 + delta, atol=1e-12 * max(1.0, delta))
        rm, em = curve.value_at(t0 - delta, atol=1e-12 * max(1.0, delta))
        out.append((delta, (rp - rm) / (2 * delta), math.hypot(ep, em) / (2 * delta)))
    return out


def fd_derivative(curve: ResponseCurve, t0) -> float:
    """Central difference over the nearest symmetric pair around t0."""
    pairs = fd_derivatives(curve, t0)
    if not pairs:
        raise ParameterError(f"t0={t0} has no symmetric neighbours on the grid")
    return pairs[0][1]


# ---------------------------------------------------------------- FDT source term

def _smooth_density(rho: SRBMeasure, op: UlamOperator, width_cells):
    mesh = rho.mesh
    dens = rho.density()
    if width_cells <= 0:
        return dens
    if mesh.domain.fully_periodic:
        kern = periodic_bump_kernel(mesh, width_cells * float(np.min(mesh.widths)))
        return periodic_convolve(dens, mesh, kern)
    # bounded directions: separable smoothing with reflected padding
    from scipy.ndimage import convolve1d
    arr = dens.reshape(mesh.shape)
    for axis in range(mesh.d):
        w = width_cells
        offs = np.arange(-w, w + 1) / w
        k = np.exp(-1.0 / np.clip(1.0 - offs ** 2, 1e-300, None))
        k[np.abs(offs) >= 1] = 0.0
        k /= k.sum()
        mode = "wrap" if mesh.domain.periodic_dims[axis] else "reflect"
        arr = convolve1d(arr, k, axis=axis, mode=mode)
    return arr.ravel()


def _gradient(values, mesh: Mesh):
    """Second-order central differences, wrapped on periodic axes."""
    arr = values.reshape(mesh.shape)
    out = []
    for axis in range(mesh.d):
        h = mesh.widths[axis]
        if mesh.domain.periodic_dims[axis]:
            g = (np.roll(arr, -1, axis=axis) - np.roll(arr, 1, axis=axis)) / (2 * h)
        else:
            g = np.gradient(arr, h, axis=axis)
        out.append(g.ravel())
    return np.stack(out, axis=-1)


def default_smoothing_cells(family: MapFamily):
    # the flux form for endomorphisms needs a wider kernel to suppress grid-scale folding
    return 16 if (not family.invertible and not family.dt_constant) else 2


def fdt_source(op: UlamOperator, family: MapFamily, t0, rho: SRBMeasure, smoothing_cells=None):
    """q = div(X rho~) on the mesh, before mean removal; returns (q, info).

    Invertible or constant-dt families use div(X) rho~ + <X, grad rho~> pointwise. One-dimensional
    endomorphisms use the flux X rho = L(dt rho) summed over inverse branches, differenced
    across cell faces.
    """
    mesh = op.mesh
    if rho.kind != "ulam_vector" or rho.mesh.shape != mesh.shape:
        raise ParameterError("rho must be the Ulam SRB vector on the operator's mesh")
    width = default_smoothing_cells(family) if smoothing_cells is None else smoothing_cells
    dens = _smooth_density(rho, op, width)
    centers = mesh.centers()
    if family.invertible or family.dt_constant:
        X = perturbation_field(family, t0)
        q = X.divergence(centers) * dens + np.sum(X.at(centers) * _gradient(dens, mesh), axis=-1)
        form = "pointwise"
    elif mesh.d == 1 and family.preimages is not None:
        h = mesh.widths[0]
        faces = mesh.domain.lo[0] + np.arange(mesh.n_cells) * h
        xc = centers[:, 0]
        L = mesh.domain.lengths[0]
        xs = np.r_[xc[-1] - L, xc, xc[0] + L]
        ds = np.r_[dens[-1], dens, dens[0]]
        flux = np.zeros(mesh.n_cells)
        for y in family.preimages(t0, faces[:, None]):
            y = y[:, 0]
            rho_y = np.interp(y, xs, ds)
            flux += rho_y * family.dt(t0, y[:, None])[:, 0] / family.jac(t0, y[:, None])[:, 0, 0]
        q = (np.roll(flux, -1) - flux) / h
        form = "flux"
    else:
        raise UnsupportedPerturbation(f"{family.name}: no source term for a {mesh.d}-d endomorphism "
                                      "with non-constant t-derivative")
    return q, {"form": form, "smoothing_cells": width}


def zero_mean_defect(q, mesh: Mesh):
    """|sum q vol| / ||q||_1 (never raises)."""
    l1 = float(np.abs(q).sum() * mesh.cell_volume)
    return 0.0 if l1 == 0 else abs(float(q.sum() * mesh.cell_volume)) / l1


def _prepared_source(op, family, t0, rho, smoothing_cells):
    q, info = fdt_source(op, family, t0, rho, smoothing_cells)
    defect = zero_mean_defect(q, op.mesh)
    if defect > MEAN_TOL:
        raise MeanNotZeroError(float(q.mean()),
                               f"source term has relative mean {defect:.3e} > {MEAN_TOL}: mesh too coarse")
    mean = float(q.mean())
    q = q - mean
    info.update({"defect": defect, "mean_removed": mean})
    qa = op.restrict(q)
    qa = qa - qa.mean()
    return qa, info


def _theta_vector(op, obs):
    if isinstance(obs, GridFunction):
        vals = obs.values
    elif callable(obs):
        vals = obs(op.mesh.centers())
    else:
        vals = np.asarray(obs, dtype=float)
    return op.restrict(np.asarray(vals, dtype=float))


def tail_ratio(terms, floor=1e-14):
    """Geometric decay ratio of |terms| fitted over the last half of the terms above floor*max."""
    a = np.abs(np.asarray(terms, dtype=float))
    if a.size == 0 or a.max() == 0:
        return 0.0
    k = np.arange(a.size)
    keep = a > floor * a.max()
    k, a = k[keep], a[keep]
    k, a = k[k >= k.max() / 2], a[k >= k.max() / 2]
    if a.size < 3:
        return 0.0
    return float(np.exp(np.polyfit(k, np.log(a), 1)[0]))


def fdt_series(op_t0: UlamOperator, family: MapFamily, t0, obs, K=40, rho=None,
               smoothing_cells=None) -> FdtResult:
    """Derivative = -sum_k (L^k q) . theta vol for k = 0..K."""
    rho = rho or srb_ulam(op_t0, gap_check=False)
    q, info = _prepared_source(op_t0, family, t0, rho, smoothing_cells)
    th = _theta_vector(op_t0, obs) * op_t0.mesh.cell_volume
    terms = np.empty(K + 1)
    u = q
    for k in range(K + 1):
        terms[k] = float(u @ th)
        u = op_t0.matrix @ u
    tr = tail_ratio(terms)
    res = FdtResult(-float(terms.sum()), terms, K, tr, "series", info)
    if not res.converged:
        warnings.warn(f"FDT series not converged (tail ratio {tr:.3f})", RuntimeWarning, stacklevel=2)
    return res


def fdt_resolvent(op_t0: UlamOperator, family: MapFamily, t0, obs, rho=None,
                  smoothing_cells=None) -> FdtResult:
    """Derivative = -((I - L)^{-1} q) . theta vol."""
    rho = rho or srb_ulam(op_t0, gap_check=False)
    q, info = _prepared_source(op_t0, family, t0, rho, smoothing_cells)
    if not np.any(q):
        return FdtResult(0.0, np.zeros(0), 0, 0.0, "resolvent", info)
    u = resolvent_apply(op_t0, q)
    th = _theta_vector(op_t0, obs) * op_t0.mesh.cell_volume
    return FdtResult(-float(u @ th), np.zeros(0), 0, 0.0, "resolvent", info)


# ---------------------------------------------------------------- ergodic form

def ergodic_response_sum(family: MapFamily, t0, obs_smooth: Observable, K=4,
                         orbit_params: Optional[BirkhoffParams] = None) -> FdtResult:
    """sum_k E[<grad theta(f^k x), Df^k(x) X(x)>] along burned-in orbits (no leading minus).

    Per-sample summands grow like the expansion rate to the power k, so the Monte Carlo error
    bar (orbit batch means) is reported and large K is discouraged.
    """
    if obs_smooth.grad is None:
        raise ParameterError("ergodic_response_sum needs an observable with a gradient")
    p = orbit_params or BirkhoffParams()
    X = perturbation_field(family, t0)
    rng = np.random.default_rng(p.seed)
    starts = random_attractor_points(family, t0, p.n_orbits, p.burn_in, rng)
    if p.n_steps > 1:
        base = orbit_batch(family, t0, starts, p.n_steps - 1, 0)
        base = np.concatenate([starts[None], base], axis=0)
    else:
        base = starts[None]
    n_steps, n_orb, d = base.shape
    x = base.reshape(-1, d)
    w = X.at(x)
    per_sample = np.zeros((K + 1, x.shape[0]))
    for k in range(K + 1):
        per_sample[k] = np.sum(obs_smooth.grad(x) * w, axis=-1)
        if k < K:
            w = np.einsum("nij,nj->ni", family.jac(t0, x), w)
            if not np.all(np.isfinite(w)):
                raise OrbitError(k + 1, f"Jacobian product overflowed at k={k + 1}")
            x = family.eval(t0, x)
    terms = per_sample.mean(axis=1)
    total = per_sample.sum(axis=0).reshape(n_steps, n_orb).mean(axis=0)
    err = float(total.std(ddof=1) / math.sqrt(n_orb)) if n_orb > 1 else float("inf")
    deriv = float(terms.sum())
    meta = {"error_bar": err, "noise_dominated": bool(err > abs(deriv)),
            "n_points": int(x.shape[0])}
    return FdtResult(deriv, terms, K, tail_ratio(terms), "ergodic", meta)


# ---------------------------------------------------------------- serialisation

def curve_to_csv(curve: ResponseCurve, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "R", "error_bar"])
        for t, r, e in zip(curve.t_values, curve.R_values, curve.error_bars):
            w.writerow(["%.17g" % t, "%.17g" % r, "%.17g" % e])


def fdt_to_csv(res: FdtResult, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "term"])
        for k, v in enumerate(res.terms):
            w.writerow([k, "%.17g" % v])


def to_json(obj, path=None):
    s = json.dumps(obj.to_dict(), sort_keys=True, indent=2)
    if path is not None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(s)
    return s
