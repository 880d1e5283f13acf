import csv

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mmsehbf.channel import make_rng, random_channel
from mmsehbf.manifold import (
    LineSearchParams,
    MOOptions,
    euclidean_grad,
    mo_solve,
    project_tangent,
    random_point,
    retract,
    write_trace,
)
from mmsehbf.mmse import ReducedObjective, reduced_objective_J

from .conftest import crandn, random_hpd, unit_modulus
from .oracles import central_diff

TIGHT = MOOptions(rel_tol=1e-14, grad_tol=1e-10, max_iters=3000)


def fd_gradient_error(obj, a, rng, n_entries=10):
    """Worst relative error between central differences and 2 Re/Im of the conjugate gradient."""
    grad = obj.grad(a)
    worst = 0.0
    flat = rng.choice(a.size, size=min(n_entries, a.size), replace=False)
    for f in flat:
        idx = np.unravel_index(f, a.shape)
        d_re, d_im = central_diff(obj.value, a, idx)
        expect = np.array([d_re, d_im])
        got = np.array([2 * grad[idx].real, 2 * grad[idx].imag])
        scale = max(np.max(np.abs(expect)), 1e-3 * np.linalg.norm(grad))
        worst = max(worst, np.max(np.abs(got - expect)) / scale)
    return worst


def _objective(rng, kind, n, nt=16, ns=2):
    h = crandn(rng, n, nt, ns)
    lam = np.stack([random_hpd(rng, ns) for _ in range(n)])
    s2 = rng.uniform(0.2, 2)
    ws = rng.uniform(0.5, 2, n)
    if kind == "precoder":
        return ReducedObjective.precoder(h, s2, ws)
    if kind == "precoder_weighted":
        return ReducedObjective.precoder(h, s2, ws, lam)
    if kind == "combiner":
        return ReducedObjective.combiner(h, s2, ws)
    return ReducedObjective.combiner(h, s2, ws, lam)


@pytest.mark.parametrize("kind", ["precoder", "precoder_weighted", "combiner", "combiner_weighted"])
@pytest.mark.parametrize("n", [1, 8])
def test_gradient_matches_finite_differences(rng, kind, n):
    for _ in range(20):
        obj = _objective(rng, kind, n)
        a = unit_modulus(rng, 16, 2)
        assert fd_gradient_error(obj, a, rng) < 1e-5


def test_euclidean_grad_wrapper(rng):
    h1 = crandn(rng, 2, 8, 2)
    v = unit_modulus(rng, 8, 2)
    np.testing.assert_array_equal(euclidean_grad(v, h1, 0.5, [1.0, 2.0]),
                                  ReducedObjective.precoder(h1, 0.5, [1.0, 2.0]).grad(v))


def test_gradient_vanishes_for_full_column_space(rng):
    h1 = crandn(rng, 1, 4, 2)
    assert np.max(np.abs(euclidean_grad(unit_modulus(rng, 4, 4), h1, 1.0, 1.0))) < 1e-12
    assert abs(euclidean_grad(np.array([[1j]]), np.array([[[2.0]]]), 1.0, 1.0)[0, 0]) < 1e-15


def test_project_tangent_examples(rng):
    x = unit_modulus(rng, 5, 2)
    assert np.max(np.abs(project_tangent(x, x))) < 1e-15
    np.testing.assert_allclose(project_tangent(x, 1j * x), 1j * x, atol=1e-15)
    g = crandn(rng, 5, 2)
    t = project_tangent(x, g)
    assert np.max(np.abs(np.real(t * np.conj(x)))) < 1e-14
    assert np.max(np.abs(project_tangent(x, t) - t)) < 1e-14


def test_retract_examples(rng):
    x = unit_modulus(rng, 4, 3)
    np.testing.assert_array_equal(retract(x, np.zeros_like(x)), x)
    assert retract(np.array([1.0 + 0j]), np.array([1j]))[0] == pytest.approx((1 + 1j) / np.sqrt(2))
    # degenerate guard keeps the old entry
    assert retract(np.array([1.0 + 0j]), np.array([-1.0 + 0j]))[0] == 1
    y = retract(x, 3 * crandn(rng, 4, 3))
    assert np.max(np.abs(np.abs(y) - 1)) < 1e-12


def test_line_search_params_validation():
    for kw in (dict(initial_step=0), dict(contraction=1.0), dict(sufficient_decrease=0), dict(max_backtracks=0)):
        with pytest.raises(ValueError):
            LineSearchParams(**kw)


def test_mo_returns_immediately_at_critical_point(rng):
    obj = ReducedObjective.precoder(crandn(rng, 1, 4, 2), 1.0, 1.0)
    res = mo_solve(obj, unit_modulus(rng, 4, 4))
    assert res.iterations == 0 and not res.stalled
    assert len(res.history) == 1


def test_mo_single_path_reaches_svd_optimum():
    for seed in range(20):
        ch = random_channel(make_rng(seed), 16, 16, 1, num_clusters=1, rays_per_cluster=1)
        h = ch.per_subcarrier[0]
        u, s, _ = np.linalg.svd(h)
        w = u[:, :1]
        h1 = (h.conj().T @ w)[None]
        s2 = 0.1
        optimum = 1 / (1 + s[0] ** 2 / s2)  # unconstrained precoder along the dominant right vector
        res = mo_solve(ReducedObjective.precoder(h1, s2, 1.0), random_point(make_rng(seed, 1), (16, 1)), TIGHT)
        assert abs(res.value - optimum) < 1e-6
        assert res.value == pytest.approx(reduced_objective_J(res.point, h1, s2, 1.0), rel=1e-12)


@given(st.integers(0, 2**31), st.sampled_from([1, 4]), st.booleans())
def test_mo_trace_monotone_and_armijo(seed, n, weighted):
    r = np.random.default_rng(seed)
    lam = np.stack([random_hpd(r, 2) for _ in range(n)]) if weighted else None
    obj = ReducedObjective.precoder(crandn(r, n, 12, 2), r.uniform(0.1, 2), r.uniform(0.5, 2, n), lam)
    res = mo_solve(obj, random_point(r, (12, 3)), MOOptions(max_iters=60))
    vals = [row[1] for row in res.history]
    assert all(b <= a + 1e-12 for a, b in zip(vals, vals[1:]))
    c = LineSearchParams().sufficient_decrease
    for prev, row in zip(res.history, res.history[1:]):
        _, f_new, gnorm, tau = row
        assert f_new <= prev[1] - c * tau * gnorm**2 + 1e-15
    assert np.max(np.abs(np.abs(res.point) - 1)) < 1e-12
    assert res.iterations <= 60


def test_mo_stall_is_flagged(rng):
    obj = ReducedObjective.precoder(crandn(rng, 1, 8, 2), 0.5, 1.0)
    tiny = MOOptions(grad_tol=0.0, rel_tol=0.0, max_iters=10_000,
                     line_search=LineSearchParams(max_backtracks=1, contraction=0.5))
    res = mo_solve(obj, unit_modulus(rng, 8, 2), tiny)
    assert res.stalled
    assert res.iterations < 10_000


def test_write_trace(tmp_path, rng):
    obj = ReducedObjective.precoder(crandn(rng, 1, 8, 2), 0.5, 1.0)
    res = mo_solve(obj, unit_modulus(rng, 8, 2), MOOptions(max_iters=5))
    path = tmp_path / "t.csv"
    write_trace(path, res)
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["iteration", "objective", "grad_norm", "step"]
    assert len(rows) == len(res.history) + 1
    assert float(rows[-1][1]) == res.value
