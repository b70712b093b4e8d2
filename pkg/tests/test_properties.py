import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from conftest import identity_model
from mptorder.binary import to_binary
from mptorder.data import simulate
from mptorder.dsl import fixture_path, parse_model, read_model, serialize_model
from mptorder.model import category_probabilities, random_assignment
from mptorder.patterns import get_pattern
from mptorder.polytope import DominanceOrder, membership
from mptorder.reparam import (eta_to_lambda, formula_values, lambda_to_eta, solve_theta_k3,
                              transform_model)

FIXTURES = ["2htm", "2htm_r", "ordered_pair"]
REGISTERED = ["k3-dominant", "k3-dominated", "I", "II", "III", "IV", "V", "VI", "VIII", "IX",
              "X"]

ks = st.integers(2, 6)
seeds = st.integers(0, 2**32 - 1)


@settings(max_examples=200, deadline=None)
@given(ks, seeds)
def test_lambda_to_eta_is_ordered(k, seed):
    lam = np.random.default_rng(seed).dirichlet(np.ones(k) * 0.5)
    eta = lambda_to_eta(lam)
    assert np.all(np.diff(eta) <= 1e-14)
    assert abs(eta.sum() - 1) < 1e-12


@pytest.mark.parametrize("k", range(2, 7))
def test_theorem_ordering_batch(k):
    rng = np.random.default_rng(k)
    for lam in rng.dirichlet(np.ones(k), 10_000):
        assert np.diff(lambda_to_eta(lam)).max() <= 1e-14


@settings(max_examples=200, deadline=None)
@given(ks, seeds)
def test_eta_lambda_round_trip(k, seed):
    eta = np.sort(np.random.default_rng(seed).dirichlet(np.ones(k)))[::-1]
    lam = eta_to_lambda(eta).values
    assert lam.min() >= 0
    assert_allclose(lambda_to_eta(lam), eta, atol=1e-12, rtol=0)


@settings(max_examples=100, deadline=None)
@given(ks, st.integers(0, 5), seeds)
def test_round_trip_with_ties(k, n_ties, seed):
    # repeated values sit on faces of the polytope; lambda has exact zeros there
    rng = np.random.default_rng(seed)
    eta = np.sort(rng.dirichlet(np.ones(k)))[::-1]
    for _ in range(n_ties):
        i = rng.integers(0, k - 1)
        eta[i + 1] = eta[i]
    eta = eta / eta.sum()
    assert_allclose(lambda_to_eta(eta_to_lambda(eta)), eta, atol=1e-12)


@pytest.mark.parametrize("name", REGISTERED + ["linear"])
def test_theta_weights_sum_to_one(name):
    pat = get_pattern(name, k=5 if name == "linear" else None)
    theta = np.random.default_rng(0).uniform(size=(10_000, pat.d))
    lam = formula_values(pat.formulas, theta)
    assert lam.min() >= 0
    assert np.abs(lam.sum(axis=1) - 1).max() <= 1e-14


@settings(max_examples=300, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1), st.floats(0, 1))
def test_k3_closed_form_bounds(a, b, c, s):
    pat = get_pattern("k3-dominant")
    V = np.array([[float(x) for x in v] for v in pat.vertices])
    w = np.array([a, b, c, s]) + 1e-9
    eta = V.T @ (w / w.sum())
    theta = solve_theta_k3(eta).values
    assert np.all(theta >= -1e-12) and np.all(theta <= 1 + 1e-12)
    lam = formula_values(pat.formulas, theta)
    assert_allclose(V.T @ lam, eta, atol=1e-10)


@pytest.mark.parametrize("name", FIXTURES)
def test_probabilities_sum_to_one(name):
    model = read_model(fixture_path(name))
    rng = np.random.default_rng(1)
    for _ in range(1000):
        probs = category_probabilities(model, random_assignment(model, rng))
        for t in probs.values():
            assert abs(sum(t.values()) - 1) < 1e-10


@pytest.mark.parametrize("name", FIXTURES)
def test_binary_equivalence(name):
    model = read_model(fixture_path(name)).replace(orders=())
    conv = to_binary(model)
    rng = np.random.default_rng(2)
    for _ in range(100):
        params = random_assignment(model, rng)
        a = category_probabilities(model, params)
        b = category_probabilities(conv.model, conv.transform.to_binary(params))
        diff = max(abs(a[t][c] - b[t][c]) for t in a for c in a[t])
        assert diff < 1e-12


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 500), seeds)
def test_simulate_totals(n, seed):
    model = read_model(fixture_path("2htm"))
    params = random_assignment(model, np.random.default_rng(seed))
    data = simulate(model, params, n, seed=seed)
    assert all(v == n for v in data.totals().values())


@pytest.mark.parametrize("name", FIXTURES)
def test_dsl_round_trip(name):
    model = read_model(fixture_path(name))
    text = serialize_model(model)
    assert parse_model(text) == model
    assert parse_model(text.replace("\n", "\r\n")) == model
    rewritten = transform_model(model).rewritten
    assert parse_model(serialize_model(rewritten)) == rewritten


@settings(max_examples=30, deadline=None)
@given(st.integers(3, 5), seeds)
def test_rewritten_draws_respect_order(k, seed):
    model = identity_model(k, "order e: " + " >= ".join(f"e{i + 1}" for i in range(k)))
    pl = transform_model(model)
    params = random_assignment(pl.rewritten, np.random.default_rng(seed))
    orig = pl.backward(params)
    eta = np.array([orig[f"e{i + 1}"] for i in range(k)])
    assert membership(DominanceOrder.chain(k), eta, tol=1e-12)
