"""Finite-time hyperbolicity rates and the contraction-rate conditions."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .dynamics import MapFamily, random_attractor_points
from .errors import HyperbolicityError, ParameterError

CONDITIONS = ("star1", "star3", "star4")


@dataclass(frozen=True)
class HyperbolicRates:
    """nu_s: weakest contraction, nu_s_bar: strongest, nu_u: weakest expansion, J: volume rate.

    Families without stable directions carry nu_s = nu_s_bar = nan.
    """

    nu_s: float
    nu_s_bar: float
    nu_u: float
    J: float
    horizon_m: int = 0
    n_samples: int = 0
    t: float = 0.0
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not self.nu_u > 1.0:
            raise ParameterError(f"nu_u={self.nu_u} must exceed 1")
        if not 0.0 < self.J:
            raise ParameterError(f"J={self.J} must be positive")
        if not math.isnan(self.nu_s):
            if not (0.0 < self.nu_s_bar <= self.nu_s < 1.0):
                raise ParameterError(f"need 0 < nu_s_bar <= nu_s < 1, got {self.nu_s_bar}, {self.nu_s}")

    def to_dict(self):
        d = asdict(self)
        d.pop("extra")
        return d


@dataclass(frozen=True)
class ConditionReport:
    condition: str
    holds: bool
    lhs: float
    rhs: float
    margin: float
    inputs: dict

    def to_json(self):
        return json.dumps(asdict(self), sort_keys=True)


class _LogProduct:
    """Product of square upper-triangular factors kept as (matrix, log scale)."""

    def __init__(self, k):
        self.R = np.eye(k)
        self.log_scale = 0.0

    def push(self, R):
        self.R = R @ self.R
        s = np.abs(self.R).max()
        self.R /= s
        self.log_scale += math.log(s)

    def log_singular_values(self):
        sv = np.linalg.svd(self.R, compute_uv=False)
        return np.log(sv) + self.log_scale


def _qr_pos(M):
    Q, R = np.linalg.qr(M)
    sgn = np.sign(np.diag(R))
    sgn[sgn == 0] = 1.0
    return Q * sgn, (R.T * sgn).T


def _orbit_with_jacobians(family, t, x, n):
    pts, jacs = [], []
    for _ in range(n):
        pts.append(x)
        jacs.append(family.jac(t, x))
        x = family.eval(t, x)
    return pts, jacs, x


def _sample_rates(family, t, x, m, K, rng):
    """Restricted m-step singular values at one attractor point x (log scale)."""
    d_u, d_s, d = family.d_u, family.d_s, family.d
    # unstable subspace at x: push random vectors from K steps in the past
    pts_all, jacs_all, _ = _orbit_with_jacobians(family, t, x, 2 * K + m)
    V = rng.standard_normal((d, d_u))
    for J in jacs_all[:K]:
        V, _ = _qr_pos(J @ V)
    x0_index = K
    out = {}
    jacs = jacs_all[x0_index:x0_index + m]
    prod = _LogProduct(d_u)
    for J in jacs:
        V, R = _qr_pos(J @ V)
        prod.push(R)
    out["log_u"] = prod.log_singular_values()
    if d_s > 0:
        # E^s at f^m(x) is the annihilator of covectors pulled back from K steps further on;
        # it is then carried back to x with inverse Jacobians, where it dominates
        W = rng.standard_normal((d, d_u))
        for J in reversed(jacs_all[x0_index + m:x0_index + m + K]):
            W, _ = _qr_pos(J.T @ W)
        Q, _ = np.linalg.qr(W, mode="complete")
        S = Q[:, d_u:]
        prod = _LogProduct(d_s)
        for J in reversed(jacs):
            S, R = _qr_pos(np.linalg.solve(J, S))
            prod.push(R)
        # singular values of the inverse restriction are reciprocals of the forward ones
        out["log_s"] = -prod.log_singular_values()
    out["log_det"] = float(np.sum([math.log(abs(np.linalg.det(J))) for J in jacs]))
    return out


def finite_time_rates(family: MapFamily, t, m=20, n_samples=64, seed=0, K=None) -> HyperbolicRates:
    """Estimate nu_s, nu_s_bar, nu_u and J from m-step Jacobian products along the attractor."""
    if m < 8:
        raise ParameterError("horizon m must be at least 8")
    if n_samples < 1:
        raise ParameterError("n_samples must be positive")
    K = m if K is None else int(K)
    rng = np.random.default_rng(seed)
    starts = random_attractor_points(family, t, n_samples, max(K, 20), rng)
    lu, ls_max, ls_min, ldet = [], [], [], []
    for i, x in enumerate(starts):
        r = _sample_rates(family, t, x, m, K, rng)
        lo_u = r["log_u"].min()
        lu.append(lo_u)
        ldet.append(r["log_det"])
        if family.d_s > 0:
            hi_s = r["log_s"].max()
            if lo_u - hi_s < m * math.log(1.01):
                raise HyperbolicityError(f"sample {i}: unstable/stable singular values separate by "
                                         f"{math.exp((lo_u - hi_s) / m):.4f} per step (< 1.01)")
            ls_max.append(hi_s)
            ls_min.append(r["log_s"].min())
    nu_u = math.exp(min(lu) / m)
    J = math.exp(min(ldet) / m)
    if family.d_s > 0:
        nu_s = math.exp(max(ls_max) / m)
        nu_s_bar = math.exp(min(ls_min) / m)
    else:
        nu_s = nu_s_bar = float("nan")
    spread = {"nu_u_max": math.exp(max(lu) / m), "J_max": math.exp(max(ldet) / m)}
    return HyperbolicRates(nu_s, nu_s_bar, nu_u, J, horizon_m=m, n_samples=n_samples, t=t, extra=spread)


def check_condition(rates: HyperbolicRates, condition, p=2.0, beta=0.5, d_u=1, d_s=1) -> ConditionReport:
    """Evaluate star1, star3 or star4 in log scale; ties count as failure."""
    if condition not in CONDITIONS:
        raise ParameterError(f"unknown condition {condition!r}")
    if not p > 1:
        raise ParameterError("p must exceed 1")
    inputs = {"p": p, "beta": beta, "d_u": d_u, "d_s": d_s}
    if condition == "star1":
        if not 0 < beta < 1:
            raise ParameterError("beta must lie in (0, 1)")
        lhs = -beta * math.log(rates.nu_u)
        rhs = math.log(rates.J) / p
    elif condition == "star3":
        lhs = math.log(rates.nu_s)
        rhs = math.log(rates.J)
    else:
        lhs = d_s * abs(math.log(rates.nu_s_bar)) - abs(math.log(rates.nu_s))
        rhs = d_u * math.log(rates.nu_u)
    margin = rhs - lhs
    return ConditionReport(condition, bool(margin > 0), lhs, rhs, margin, inputs)


def predicted_holder_bound(rates: HyperbolicRates, r, p) -> float:
    """alpha_max = r - |log J| / (p |log nu_s|); a non-positive value guarantees nothing."""
    if not p > 1 or not 0 < r < 1.0 / p:
        raise ParameterError(f"need p > 1 and 0 < r < 1/p (r={r}, p={p})")
    return r - abs(math.log(rates.J)) / (p * abs(math.log(rates.nu_s)))
