"""Hölder fits, jump detection, comparison with the predicted bound and EVT quotients."""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .errors import NoiseDominatedError, ParameterError
from .observables import integrate, integrate_by_orbit, make_heaviside
from .rates import HyperbolicRates, check_condition, predicted_holder_bound
from .response import BirkhoffParams, ResponseCurve, UlamParams
from .transfer import build_ulam, srb_birkhoff, srb_ulam


@dataclass
class HolderFit:
    alpha_hat: float
    constant_hat: float
    r_squared: float
    scale_range: tuple
    n_points: int
    noise_floor: float
    one_sided: dict = field(default_factory=dict)
    points: list = field(default_factory=list)  # (|t - t0|, |dR|) pairs actually fitted

    def to_dict(self):
        return asdict(self)


def _fit(x, y):
    lx, ly = np.log(x), np.log(y)
    slope, icpt = np.polyfit(lx, ly, 1)
    pred = slope * lx + icpt
    ss_res = float(np.sum((ly - pred) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else max(0.0, 1.0 - ss_res / ss_tot)
    return float(slope), float(math.exp(icpt)), r2


def holder_fit(curve: ResponseCurve, t0, scale_decades: Optional[int] = None) -> HolderFit:
    """Fit log|R(t) - R(t0)| against log|t - t0| over points clearing a 3-sigma gate."""
    if scale_decades is not None and scale_decades < 1:
        raise ParameterError("scale_decades must be at least 1")
    R0, e0 = curve.value_at(t0)
    mask = np.abs(curve.t_values - t0) > 1e-15
    dt = np.abs(curve.t_values[mask] - t0)
    side = np.sign(curve.t_values[mask] - t0)
    dR = np.abs(curve.R_values[mask] - R0)
    err = np.hypot(curve.error_bars[mask], e0)
    if scale_decades is not None and dt.size:
        mask2 = dt >= dt.max() * 10.0 ** (-scale_decades)
        dt, side, dR, err = dt[mask2], side[mask2], dR[mask2], err[mask2]
    use = dR > 3 * err
    floor = float(err[use].max()) if use.any() else float(err.max() if err.size else 0.0)
    # gate against the largest error bar among the points kept, until stable
    for _ in range(len(dR) + 1):
        new = dR > 3 * floor
        if np.array_equal(new, use):
            break
        use = new
        floor = float(err[use].max()) if use.any() else floor
    use &= dR > 0
    if use.sum() < 3:
        raise NoiseDominatedError(floor)
    alpha, C, r2 = _fit(dt[use], dR[use])
    one_sided = {}
    for name, sgn in (("right", 1.0), ("left", -1.0)):
        sel = use & (side == sgn)
        if sel.sum() >= 3:
            a, c, rr = _fit(dt[sel], dR[sel])
            one_sided[name] = {"alpha_hat": a, "constant_hat": c, "r_squared": rr, "n_points": int(sel.sum())}
        else:
            one_sided[name] = None
    pts = sorted(zip(dt[use].tolist(), dR[use].tolist()))
    return HolderFit(alpha, C, r2, (float(dt[use].min()), float(dt[use].max())), int(use.sum()),
                     floor, one_sided, pts)


@dataclass
class JumpResult:
    detected: bool
    gap: float
    brackets: list  # (left t, right t, R(right) - R(left))


def jump_detect(curve: ResponseCurve, t0, c_min=0.5, min_brackets=2) -> JumpResult:
    """Nested brackets (k-th grid point left of t0, k-th right); a jump needs every bracket
    to show a gap of at least c_min with one sign."""
    ts, R = curve.t_values, curve.R_values
    left = np.flatnonzero(ts < t0)[::-1]
    right = np.flatnonzero(ts > t0)
    n = min(left.size, right.size)
    if n < min_brackets:
        raise ParameterError(f"need at least {min_brackets} grid points on each side of t0={t0}")
    br = [(float(ts[left[k]]), float(ts[right[k]]), float(R[right[k]] - R[left[k]])) for k in range(n)]
    gaps = np.array([b[2] for b in br])
    same_sign = np.all(gaps > 0) or np.all(gaps < 0)
    detected = bool(same_sign and np.all(np.abs(gaps) >= c_min))
    return JumpResult(detected, float(gaps[0]), br)


def bound_comparison(fit: HolderFit, rates: HyperbolicRates, r, p):
    """Measured exponent against the lower guarantee alpha_max (never treated as a refutation)."""
    alpha_max = predicted_holder_bound(rates, r, p)
    star3 = check_condition(rates, "star3", p=p)
    report = {"alpha_max": alpha_max, "alpha_hat": fit.alpha_hat, "r_squared": fit.r_squared,
              "star3_holds": star3.holds, "star3_margin": star3.margin, "r": r, "p": p}
    if fit.r_squared < 0.9:
        report.update(verdict="inconclusive", note="fit quality below r^2 = 0.9")
    elif alpha_max <= 0:
        report.update(verdict="consistent", note="no guarantee; measurement informational")
    elif fit.alpha_hat >= alpha_max - 0.1:
        report.update(verdict="consistent", note="measured exponent at or above the guarantee")
    else:
        report.update(verdict="numerical_bias_warning",
                      note="measured exponent below the guarantee; suspect discretisation bias")
    return report


# ---------------------------------------------------------------- EVT quotient

@dataclass
class EvtQuotient:
    a_values: list
    s: float
    quotients: list  # nan where undefined
    t: float
    errors: list = field(default_factory=list)
    R_a: list = field(default_factory=list)
    R_as: list = field(default_factory=list)
    defined: list = field(default_factory=list)
    stabilization: list = field(default_factory=list)  # |q_{i+1} - q_i|

    def to_dict(self):
        return asdict(self)


def evt_quotient(family, g, h, s, a_list, t=0.0, estimator_params=None, grad_g=None) -> EvtQuotient:
    """R_{a s} / R_a with R_b = int h Theta(g - b) d rho_t, one SRB estimate shared by all b."""
    if not 0 < s < 1:
        raise ParameterError("s must lie in (0, 1)")
    a_list = [float(a) for a in a_list]
    if any(a >= 0 for a in a_list):
        raise ParameterError("thresholds must be negative (max g is normalised to 0)")
    p = estimator_params or BirkhoffParams()
    obs = lambda b: make_heaviside(h, g, grad_g, b)  # noqa: E731
    if isinstance(p, BirkhoffParams):
        mu = srb_birkhoff(family, t, p.n_orbits, p.n_steps, p.burn_in, p.seed)

        def stats(b_pair):
            per = [integrate_by_orbit(mu, obs(b)) for b in b_pair]
            return [float(v.mean()) for v in per], per
    elif isinstance(p, UlamParams):
        from .grid import Mesh
        mu = srb_ulam(build_ulam(family, t, Mesh(family.domain, p.cells_per_dim), p.samples_per_cell, p.seed))

        def stats(b_pair):
            return [integrate(mu, obs(b)) for b in b_pair], None
    else:
        raise ParameterError("estimator_params must be BirkhoffParams or UlamParams")
    out = EvtQuotient(a_list, s, [], t)
    for a in a_list:
        (Ra, Ras), per = stats((a, a * s))
        if per is not None and len(per[0]) > 1:
            n = len(per[0])
            se_a = float(per[0].std(ddof=1) / math.sqrt(n))
            # delta-method error of the ratio of orbit means
            if Ra > 0:
                resid = per[1] - (Ras / Ra) * per[0]
                q_err = float(resid.std(ddof=1) / math.sqrt(n) / Ra)
            else:
                q_err = float("nan")
        else:
            se_a, q_err = 0.0, float("nan")
        ok = Ra > 10 * se_a and Ra > 0
        out.R_a.append(Ra)
        out.R_as.append(Ras)
        out.defined.append(bool(ok))
        out.quotients.append(Ras / Ra if ok else float("nan"))
        out.errors.append(q_err if ok else float("nan"))
    q = np.array(out.quotients)
    out.stabilization = np.abs(np.diff(q)).tolist()
    return out


def approaches(evt: EvtQuotient, target, n_sigma=2.0):
    """Whether |q - target| is nonincreasing along a_values (within n_sigma error bars)."""
    q, e = np.array(evt.quotients), np.array(evt.errors)
    ok = np.isfinite(q)
    q, e = q[ok], np.nan_to_num(e[ok])
    dist = np.abs(q - target)
    return bool(np.all(dist[1:] <= dist[:-1] + n_sigma * np.hypot(e[1:], e[:-1])))


def fit_to_csv(fit: HolderFit, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["scale", "abs_dR"])
        for x, y in fit.points:
            w.writerow(["%.17g" % x, "%.17g" % y])
