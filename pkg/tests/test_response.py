import dataclasses
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from srblab.dynamics import make_builtin_family
from srblab.errors import MeanNotZeroError, ParameterError
from srblab.grid import Mesh, circle, torus2
from srblab.observables import bump_heaviside, cat_unstable_covector, threshold, trig
from srblab.response import (BirkhoffParams, ResponseCurve, UlamParams, ergodic_response_sum, fd_derivative,
                             fd_derivatives, fdt_resolvent, fdt_series, fdt_source, response_curve, tail_ratio,
                             zero_mean_defect)
from srblab.transfer import build_ulam, srb_ulam


def synthetic(f, ts):
    ts = np.asarray(ts, dtype=float)
    return ResponseCurve(ts, f(ts), "synthetic", {}, np.zeros_like(ts))


def test_cat_translate_curve_is_flat():
    cat = make_builtin_family("cat_translate")
    obs = bump_heaviside(torus2(), [0.5, 0.5], 0.25, cat_unstable_covector())
    c = response_curve(cat, obs, [-0.04, 0.0, 0.04], "ulam", UlamParams((32, 32), 32, n_replicates=3))
    R0, e0 = c.value_at(0.0)
    assert np.all(np.abs(c.R_values - R0) <= 2 * np.hypot(c.error_bars, e0) + 1e-15)
    D, err = fd_derivatives(c, 0.0)[0][1:]
    assert abs(D) <= 2 * err + 1e-12


def test_skew_atomic_crossing():
    sk = make_builtin_family("skew_atomic", {"lam": 0.5, "c": 0.25})
    ts = [-0.04, -0.03, -0.026, -0.024, -0.02, -0.01]
    c = response_curve(sk, threshold(sk.domain, 1, 0.45), ts, "birkhoff", BirkhoffParams(50, 10, 40))
    np.testing.assert_array_equal(c.R_values, [0, 0, 0, 1, 1, 1])


def test_empty_curve():
    c = response_curve(make_builtin_family("doubling"), trig(circle(), [1]), [], "ulam")
    assert c.t_values.size == 0


def test_curve_sorts_and_validates():
    c = synthetic(lambda t: t, [0.2, -0.1, 0.0])
    np.testing.assert_array_equal(c.t_values, [-0.1, 0.0, 0.2])
    with pytest.raises(ParameterError):
        ResponseCurve([0.0], [1.0], "x", {}, [-1.0])


def test_t_outside_range_rejected():
    with pytest.raises(ParameterError):
        response_curve(make_builtin_family("doubling"), trig(circle(), [1]), [0.2], "ulam")


def test_fd_examples():
    assert fd_derivative(synthetic(lambda t: 3 * t, [-0.01, 0.0, 0.01]), 0.0) == pytest.approx(3.0, abs=1e-12)
    assert fd_derivative(synthetic(lambda t: t ** 2, [-0.01, 0.0, 0.01]), 0.0) == 0.0
    with pytest.raises(ParameterError):
        fd_derivative(synthetic(lambda t: t, [0.0, 0.01]), 0.0)


@settings(max_examples=30)
@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(1e-3, 0.1))
def test_fd_exact_on_quadratics(a, b, h):
    c = synthetic(lambda t: a * t + b * t * t, [-h, 0.0, h])
    assert fd_derivative(c, 0.0) == pytest.approx(a, abs=1e-9 * (1 + abs(b)))


@settings(max_examples=30)
@given(st.floats(0.05, 0.95), st.floats(0.1, 10))
def test_tail_ratio_recovers_geometric_rate(lam, C):
    assert tail_ratio(C * lam ** np.arange(40)) == pytest.approx(lam, rel=1e-6)


@pytest.fixture(scope="module")
def cat_op():
    fam = make_builtin_family("cat_translate")
    op = build_ulam(fam, 0.0, Mesh(torus2(), 64), 32)
    return fam, op


def test_fdt_cat_translate_vanishes(cat_op):
    fam, op = cat_op
    obs = trig(torus2(), [1, 1])
    r = fdt_series(op, fam, 0.0, obs, K=20)
    assert abs(r.derivative) < 1e-3
    assert fdt_resolvent(op, fam, 0.0, obs).derivative == pytest.approx(0.0, abs=1e-3)


def test_fdt_series_matches_resolvent_on_doubling():
    fam = make_builtin_family("doubling")
    op = build_ulam(fam, 0.03, Mesh(circle(), (1024,)), 32)
    obs = trig(circle(), [1])
    s = fdt_series(op, fam, 0.03, obs, K=60)
    r = fdt_resolvent(op, fam, 0.03, obs)
    assert s.tail_ratio ** 60 < 1e-3
    assert s.derivative == pytest.approx(r.derivative, rel=0.01)
    assert s.meta["form"] == "flux"


def test_cat_dissipative_terms_decay():
    fam = make_builtin_family("cat_dissipative")
    op = build_ulam(fam, 0.02, Mesh(torus2(), 64), 32)
    r = fdt_series(op, fam, 0.02, trig(torus2(), [1, -1], 0.0, [2, -3], 1.0), K=30)
    k = np.arange(10, 31)
    a = np.abs(r.terms[10:31])
    keep = a > 1e-14 * np.abs(r.terms).max()
    if keep.sum() >= 3:
        lam = math.exp(np.polyfit(k[keep], np.log(a[keep]), 1)[0])
        assert lam < 0.95
    assert r.converged


def test_mean_defect_rejected_on_coarse_mesh():
    fam = make_builtin_family("cat_dissipative", {"eps": 1.0})
    op = build_ulam(fam, 0.04, Mesh(torus2(), 4), 32)
    rho = srb_ulam(op, gap_check=False)
    q, _ = fdt_source(op, fam, 0.04, rho, 0)
    assert zero_mean_defect(q, op.mesh) > 1e-3
    with pytest.raises(MeanNotZeroError):
        fdt_series(op, fam, 0.04, trig(torus2(), [1, 0]), K=5, rho=rho, smoothing_cells=0)
    with pytest.raises(MeanNotZeroError):
        fdt_resolvent(op, fam, 0.04, trig(torus2(), [1, 0]), rho=rho, smoothing_cells=0)


def test_ergodic_k0_cat_translate():
    cat = make_builtin_family("cat_translate")
    r = ergodic_response_sum(cat, 0.0, trig(torus2(), [1, 2]), K=0, orbit_params=BirkhoffParams(400, 50, 5))
    assert abs(r.derivative) < 4 * r.meta["error_bar"]


def test_ergodic_zero_field():
    cat = make_builtin_family("cat_translate")
    still = dataclasses.replace(cat, dt=lambda t, x: np.zeros_like(np.asarray(x, dtype=float)))
    r = ergodic_response_sum(still, 0.0, trig(torus2(), [1, 2]), K=0, orbit_params=BirkhoffParams(10, 5, 2))
    assert r.derivative == 0.0


def test_ergodic_matches_resolvent_on_dissipative():
    fam = make_builtin_family("cat_dissipative")
    obs = trig(torus2(), [1, -1], 0.0, [2, -3], 1.0)
    op = build_ulam(fam, 0.0, Mesh(torus2(), 128), 32)
    res = fdt_resolvent(op, fam, 0.0, obs).derivative
    erg = ergodic_response_sum(fam, 0.0, obs, K=3, orbit_params=BirkhoffParams(500, 100, 20))
    assert abs(erg.derivative - res) <= max(0.1 * abs(res), 2 * erg.meta["error_bar"])


def test_ergodic_needs_gradient():
    fam = make_builtin_family("cat_dissipative")
    with pytest.raises(ParameterError):
        ergodic_response_sum(fam, 0.0, threshold(torus2(), 0, 0.5))


def test_error_bar_never_below_solver_floor():
    cat = make_builtin_family("cat_translate")
    obs = trig(torus2(), [1, 0])
    c = response_curve(cat, obs, [0.0, 0.01], "ulam", UlamParams((16, 16), 16, n_replicates=2))
    floor = c.meta["solver_floor"]
    assert floor > 0 and np.all(c.error_bars >= floor)
    v = np.abs(obs(Mesh(torus2(), 16).centers()))
    assert floor == pytest.approx(1e-13 * v.max() + 256 * np.finfo(float).eps * v.mean(), rel=1e-12, abs=0)
