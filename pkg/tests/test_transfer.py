import dataclasses

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from srblab.dynamics import make_builtin_family
from srblab.errors import MeanNotZeroError, ParameterError
from srblab.grid import Mesh, circle, torus2
from srblab.transfer import (UlamOperator, build_ulam, load_ulam, push_lebesgue, resolvent_apply, save_ulam,
                             srb_birkhoff, srb_ulam, tv_distance)


@pytest.fixture(scope="module")
def doubling2():
    return build_ulam(make_builtin_family("doubling"), 0.0, Mesh(circle(), (2,)), samples_per_cell=64)


def brute_force_ulam(f, n_cells, per_cell=10_000):
    # dense midpoint grid per cell, independent of the package's sampler
    M = np.zeros((n_cells, n_cells))
    for j in range(n_cells):
        x = (j + (np.arange(per_cell) + 0.5) / per_cell) / n_cells
        i = np.floor(f(x) * n_cells).astype(int) % n_cells
        M[:, j] = np.bincount(i, minlength=n_cells) / per_cell
    return M


def test_doubling_two_cells(doubling2):
    oracle = brute_force_ulam(lambda x: (2 * x) % 1.0, 2)
    np.testing.assert_allclose(doubling2.matrix.toarray(), oracle, atol=1e-12)
    np.testing.assert_allclose(oracle, 0.5)


def test_identity_stub_gives_identity_and_warns():
    cat = make_builtin_family("cat_translate")
    ident = dataclasses.replace(cat, eval=lambda t, x: np.asarray(x, dtype=float))
    op = build_ulam(ident, 0.0, Mesh(torus2(), (6, 6)), samples_per_cell=16)
    np.testing.assert_array_equal(op.matrix.toarray(), np.eye(36))
    with pytest.warns(RuntimeWarning, match="second eigenvalue"):
        srb_ulam(op)


@settings(max_examples=6, deadline=None)
@given(st.sampled_from(["cat_translate", "cat_dissipative", "doubling", "skew_atomic"]),
       st.integers(0, 100), st.floats(-0.05, 0.05))
def test_column_stochastic(name, seed, t):
    fam = make_builtin_family(name)
    cells = (64,) if fam.d == 1 else (16, 16)
    op = build_ulam(fam, t, Mesh(fam.domain, cells), samples_per_cell=16, seed=seed)
    np.testing.assert_allclose(op.column_sums(), 1.0, atol=1e-12)
    assert op.matrix.data.min() >= 0 and op.matrix.data.max() <= 1


def test_cat_translate_preserves_uniform():
    op = build_ulam(make_builtin_family("cat_translate"), 0.0, Mesh(torus2(), (32, 32)), samples_per_cell=64)
    u = np.full(op.n, 1.0 / op.n)
    assert np.abs(op.matrix @ u - u).max() <= u[0] * 1.0 / 8  # sampling noise ~ 1/sqrt(64)
    np.testing.assert_allclose(np.ones(op.n) @ op.matrix, 1.0, atol=1e-12)


def test_srb_examples(doubling2):
    mu = srb_ulam(doubling2)
    np.testing.assert_allclose(mu.weights, [0.5, 0.5])
    op = build_ulam(make_builtin_family("cat_dissipative", {"eps": 0.1}), 0.02, Mesh(torus2(), 128), 16)
    mu = srb_ulam(op)
    assert mu.weights.sum() == pytest.approx(1.0) and mu.residual < 1e-10
    assert np.sum(mu.density() * op.mesh.cell_volume) == pytest.approx(1.0)


def test_birkhoff_examples():
    sk = make_builtin_family("skew_atomic", {"lam": 0.5, "c": 0.25})
    mu = srb_birkhoff(sk, 0.0, n_orbits=50, n_steps=10, burn_in=40)
    v = mu.support_points[:, 1]
    assert np.abs(v - 0.5).max() < 1e-9 and v.std() < 0.5 ** 40 * 10
    one = srb_birkhoff(sk, 0.0, n_orbits=1, n_steps=1, burn_in=0)
    assert one.weights.tolist() == [1.0]


def test_birkhoff_cat_is_lebesgue():
    mu = srb_birkhoff(make_builtin_family("cat_translate"), 0.0, n_orbits=200, n_steps=200, burn_in=5, seed=4)
    mesh = Mesh(torus2(), (4, 4))
    counts = np.bincount(mesh.index_of(mu.support_points), minlength=16) / len(mu.weights)
    assert np.abs(counts - mesh.cell_volume).max() < 3 / np.sqrt(200 * 200)


def test_resolvent_examples(doubling2):
    np.testing.assert_array_equal(resolvent_apply(doubling2, np.zeros(2)), 0.0)
    np.testing.assert_allclose(resolvent_apply(doubling2, np.array([0.5, -0.5])), [0.5, -0.5], atol=1e-10)
    with pytest.raises(MeanNotZeroError) as ei:
        resolvent_apply(doubling2, np.array([1.0, 1.0]))
    assert ei.value.mean == pytest.approx(1.0)


def test_resolvent_solves_mixing_system():
    op = build_ulam(make_builtin_family("cat_dissipative"), 0.0, Mesh(torus2(), 32), 32)
    rhs = np.random.default_rng(0).standard_normal(op.n)
    rhs -= rhs.mean()
    u = resolvent_apply(op, rhs)
    np.testing.assert_allclose(u - op.matrix @ u, rhs, atol=1e-8)


def test_push_lebesgue(doubling2):
    np.testing.assert_allclose(push_lebesgue(doubling2, 0).weights, 0.5)
    np.testing.assert_allclose(push_lebesgue(doubling2, 1).weights, 0.5)


def test_push_lebesgue_converges_geometrically():
    op = build_ulam(make_builtin_family("cat_dissipative", {"eps": 0.5}), 0.04, Mesh(torus2(), 64), 32)
    mu = srb_ulam(op)
    d = np.array([tv_distance(push_lebesgue(op, n), mu) for n in range(1, 21)])
    d = d[d > 1e-10]
    ratio = np.exp(np.polyfit(np.arange(d.size), np.log(d), 1)[0])
    assert ratio < 1


def test_mesh_domain_mismatch():
    with pytest.raises(ParameterError):
        build_ulam(make_builtin_family("doubling"), 0.0, Mesh(torus2(), 4))


def test_save_load_roundtrip(tmp_path, doubling2):
    op = build_ulam(make_builtin_family("skew_atomic"), 0.01, Mesh(make_builtin_family("skew_atomic").domain, 16), 16)
    p = tmp_path / "op.bin"
    save_ulam(op, p)
    back = load_ulam(p)
    assert (back.matrix != op.matrix).nnz == 0
    assert back.mesh == op.mesh and back.t == op.t
    np.testing.assert_array_equal(back.active_cells, op.active_cells)
