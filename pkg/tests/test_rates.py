import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from srblab.dynamics import make_builtin_family
from srblab.errors import HyperbolicityError, ParameterError
from srblab.rates import HyperbolicRates, check_condition, finite_time_rates, predicted_holder_bound


def cat_eigenvalues():
    # roots of l^2 - 3 l + 1 (trace 3, det 1), quadratic formula
    disc = math.sqrt(9.0 - 4.0)
    return (3.0 + disc) / 2.0, (3.0 - disc) / 2.0


def test_cat_translate_rates():
    lu, ls = cat_eigenvalues()
    r = finite_time_rates(make_builtin_family("cat_translate"), 0.0, m=20, n_samples=16)
    assert r.nu_u == pytest.approx(lu, abs=1e-6)
    assert r.nu_s == pytest.approx(ls, abs=1e-6)
    assert r.J == pytest.approx(1.0, abs=1e-12)


def test_solenoid_rates_exact():
    r = finite_time_rates(make_builtin_family("solenoid", {"lam1": 0.4, "lam2": 0.4}), 0.0, m=12, n_samples=8)
    assert r.nu_s == pytest.approx(0.4, abs=1e-10)
    assert r.nu_s_bar == pytest.approx(0.4, abs=1e-10)
    assert r.J == pytest.approx(0.32, abs=1e-10)
    assert r.nu_u == pytest.approx(2.0, abs=0.01)


def test_invariants_on_dissipative():
    fam = make_builtin_family("cat_dissipative", {"eps": 0.5})
    r = finite_time_rates(fam, 0.03, m=20, n_samples=16, seed=2)
    assert 0 < r.nu_s_bar <= r.nu_s < 1 < r.nu_u
    assert 0 < r.J <= 1
    # volume is the product of the singular values: J_min >= nu_u_min * nu_s_bar_min
    assert r.J >= r.nu_u * r.nu_s_bar / (1 + 1e-9)


def test_doubling_has_no_stable_rate():
    r = finite_time_rates(make_builtin_family("doubling"), 0.0, m=10, n_samples=4)
    assert math.isnan(r.nu_s) and r.nu_u == pytest.approx(2.0) and r.J == pytest.approx(2.0)


def test_collapse_raises():
    fam = make_builtin_family("cat_translate")
    flat = fam.__class__(**{**fam.__dict__, "jac": lambda t, x: np.broadcast_to(np.eye(2), np.shape(x) + (2,)),
                            "det_jac": lambda t, x: np.ones(np.shape(x)[:-1])})
    with pytest.raises(HyperbolicityError):
        finite_time_rates(flat, 0.0, m=10, n_samples=2)


def test_bad_horizon():
    with pytest.raises(ParameterError):
        finite_time_rates(make_builtin_family("cat_translate"), 0.0, m=2)


def _rates(nu_s, J, nu_u=2.0, nu_s_bar=None):
    return HyperbolicRates(nu_s, nu_s if nu_s_bar is None else nu_s_bar, nu_u, J, horizon_m=10, n_samples=1, t=0.0)


def test_star3_examples():
    sol = check_condition(_rates(0.4, 0.32), "star3")
    assert not sol.holds
    assert sol.margin == pytest.approx(math.log(0.32 / 0.4))
    cat = check_condition(_rates(cat_eigenvalues()[1], 1.0, cat_eigenvalues()[0]), "star3")
    assert cat.holds
    tie = check_condition(_rates(0.5, 0.5), "star3")
    assert not tie.holds and tie.margin == 0.0


@settings(max_examples=30, deadline=None)
@given(st.floats(0.05, 0.95), st.floats(1.01, 10.0), st.floats(1.1, 8.0))
def test_star1_holds_when_volume_preserving(beta, p, nu_u):
    assert check_condition(_rates(0.3, 1.0, nu_u), "star1", p=p, beta=beta).holds


def test_condition_json_is_flat():
    import json
    rec = json.loads(check_condition(_rates(0.4, 0.32), "star3").to_json())
    assert rec["condition"] == "star3" and rec["holds"] is False


def test_bound_examples():
    assert predicted_holder_bound(_rates(0.3, 1.0), 0.3, 3.0) == pytest.approx(0.3)
    # 0.49 - 0.5 ln(0.32)/ln(0.4), evaluated by hand: ln .32 = -1.139434, ln .4 = -0.916291
    assert predicted_holder_bound(_rates(0.4, 0.32), 0.49, 2.0) == pytest.approx(0.49 - 0.5 * 1.139434 / 0.916291, abs=1e-6)
    assert predicted_holder_bound(_rates(0.5, 0.9), 0.2, 4.0) == pytest.approx(0.162, abs=1e-3)


def test_bound_domain():
    with pytest.raises(ParameterError):
        predicted_holder_bound(_rates(0.4, 0.32), 0.6, 2.0)
