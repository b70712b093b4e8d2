import json

import numpy as np
import pytest
from numpy.testing import assert_allclose

from conftest import HTM_TRUTH, identity_model
from mptorder import estimation
from mptorder.binary import compile_model
from mptorder.data import Dataset, simulate
from mptorder.dsl import parse_model
from mptorder.errors import FitError, ModelError
from mptorder.estimation import (back_transform, bootstrap_g2, bootstrap_p_value, fit,
                                 g_squared)
from mptorder.reparam import transform_model


def _saturated():
    return parse_model("simplex e = a b c\ntree t\n  category x : a\n  category y : b\n"
                       "  category z : c\n")


def test_saturated_fit():
    m = _saturated()
    r = fit(m, Dataset({"t": {"x": 30, "y": 20, "z": 50}}), seed=1)
    assert_allclose([r.estimates[k] for k in "abc"], [0.3, 0.2, 0.5], atol=1e-8)
    assert abs(r.g_squared) < 1e-8
    assert r.df == 0
    assert r.converged


def test_g_squared_zero_counts():
    sl = {"t": slice(0, 3)}
    assert_allclose(g_squared([0, 5, 5], [0.0, 0.5, 0.5], sl), 0.0)
    assert_allclose(g_squared([10, 0], [0.5, 0.5], {"t": slice(0, 2)}), 2 * 10 * np.log(2))


def test_fit_rejects_orders(htm_r):
    data = simulate(htm_r.replace(orders=()), HTM_TRUTH, 100, seed=0)
    with pytest.raises(ModelError):
        fit(htm_r, data)


def test_fit_rejects_mismatched_data(htm):
    with pytest.raises(ModelError):
        fit(htm, Dataset({"t": {"x": 1}}))


def test_fit_recovers_2htm_r(htm_r):
    pl = transform_model(htm_r)
    data = simulate(htm_r.replace(orders=()), HTM_TRUTH, 100_000, seed=21)
    r = fit(pl.rewritten, data, seed=3)
    bt = back_transform(r, pl)
    for k, v in HTM_TRUTH.items():
        assert abs(bt.estimates[k] - v) < 0.02
    assert r.df == 12 - 2 - 9
    cm, tr = compile_model(pl.rewritten)
    truth = cm.vector(tr.to_binary(pl.forward(HTM_TRUTH)))
    assert r.g_squared <= g_squared(r.counts, cm.probs(truth), cm.tree_slices) + 1e-9


def test_fit_deterministic(htm_r):
    pl = transform_model(htm_r)
    data = simulate(htm_r.replace(orders=()), HTM_TRUTH, 500, seed=4)
    a = json.dumps(fit(pl.rewritten, data, seed=7).record())
    b = json.dumps(fit(pl.rewritten, data, seed=7).record())
    assert a == b


def test_boundary_fit_outside_constraint():
    m = identity_model(3, "order e: e1 >= e2 >= e3")
    pl = transform_model(m)
    data = Dataset({"t": {"c1": 20, "c2": 30, "c3": 50}})
    r = fit(pl.rewritten, data, seed=0)
    assert r.g_squared > 5
    bt = back_transform(r, pl)
    assert_allclose([bt.estimates[f"e{i}"] for i in (1, 2, 3)], [1 / 3] * 3, atol=1e-6)
    assert bt.boundary
    assert any("boundary" in n for n in bt.notes)
    assert all(np.isnan(v) for v in bt.standard_errors.values())


def test_back_transform_identity_uses_observed_information():
    m = parse_model("param p\ntree t\n  category a : p\n  category b : ~p\n")
    r = fit(m, Dataset({"t": {"a": 30, "b": 70}}), seed=0)
    bt = back_transform(r)
    assert_allclose(bt.estimates["p"], 0.3, atol=1e-8)
    assert_allclose(bt.standard_errors["p"], np.sqrt(0.3 * 0.7 / 100), rtol=1e-5)
    assert_allclose(bt.covariance, bt.covariance.T)


def test_back_transform_order_preserved(htm_r):
    pl = transform_model(htm_r)
    rng = np.random.default_rng(2)
    for i in range(5):
        counts = {t.name: {c: int(rng.integers(0, 60)) + 1 for c in t.categories}
                  for t in htm_r.trees}
        r = fit(pl.rewritten, Dataset(counts), seed=i, starts=5)
        eta = back_transform(r, pl).eta
        assert eta["s"]["s_l"] <= eta["s"]["s_m"] + 1e-8 <= eta["s"]["s_h"] + 2e-8
        assert eta["o"]["o_l"] >= eta["o"]["o_m"] - 1e-8 >= eta["o"]["o_h"] - 2e-8
        assert eta["n"]["n_l"] >= eta["n"]["n_m"] - 1e-8 >= eta["n"]["n_h"] - 2e-8


def test_covariance_psd(htm_r):
    pl = transform_model(htm_r)
    data = simulate(htm_r.replace(orders=()), HTM_TRUTH, 5000, seed=8)
    bt = back_transform(fit(pl.rewritten, data, seed=1), pl)
    cov = bt.covariance
    assert_allclose(cov, cov.T, atol=1e-12)
    assert np.linalg.eigvalsh(cov).min() > -1e-8


def test_delta_se_matches_bootstrap_se(htm_r):
    pl = transform_model(htm_r)
    plain = htm_r.replace(orders=())
    data = simulate(plain, HTM_TRUTH, 10_000, seed=30)
    bt = back_transform(fit(pl.rewritten, data, seed=1), pl)
    draws = []
    for b in range(150):
        rep = simulate(plain, bt.estimates, 10_000, seed=1000 + b)
        draws.append(back_transform(fit(pl.rewritten, rep, seed=b, starts=3), pl).estimates)
    for k in HTM_TRUTH:
        sd = np.std([d[k] for d in draws], ddof=1)
        assert abs(bt.standard_errors[k] / sd - 1) < 0.15, k


def test_bootstrap_saturated():
    m = _saturated()
    r = bootstrap_g2(m, Dataset({"t": {"x": 30, "y": 20, "z": 50}}), B=20, seed=1)
    assert max(r.replicates) < 1e-6
    assert r.p_value > 0.9


def test_bootstrap_b1_and_determinism(ordered_pair):
    pl = transform_model(ordered_pair)
    data = simulate(ordered_pair.replace(orders=()), {"r_1": 0.5, "r_2": 0.3, "r_3": 0.2},
                    100, seed=2)
    r = bootstrap_g2(pl.rewritten, data, B=1, seed=3)
    assert r.p_value in (0.5, 1.0)
    a = bootstrap_g2(pl.rewritten, data, B=10, seed=4)
    b = bootstrap_g2(pl.rewritten, data, B=10, seed=4, threads=2)
    assert a.replicates == b.replicates
    assert a.p_value == bootstrap_p_value(a.observed, a.replicates)


def test_bootstrap_p_value_formula():
    assert bootstrap_p_value(3.0, [1.0, 3.0, 5.0, 2.0]) == (1 + 2) / 5


def test_bootstrap_drop_limit(monkeypatch, ordered_pair):
    pl = transform_model(ordered_pair)
    data = simulate(ordered_pair.replace(orders=()), {"r_1": 0.5, "r_2": 0.3, "r_3": 0.2},
                    100, seed=2)
    real = estimation._fit_compiled
    calls = {"n": 0}

    def flaky(*args, **kw):
        calls["n"] += 1
        if calls["n"] > 1 and calls["n"] % 3 == 0:
            raise FitError("injected")
        return real(*args, **kw)

    monkeypatch.setattr(estimation, "_fit_compiled", flaky)
    with pytest.raises(FitError, match="bootstrap replicates failed"):
        bootstrap_g2(pl.rewritten, data, B=20, seed=0)


def test_fit_record_fields(htm):
    data = simulate(htm, {**HTM_TRUTH}, 200, seed=5)
    rec = fit(htm, data, seed=0, starts=3).record()
    for key in ("estimates", "log_likelihood", "g_squared", "df", "converged", "iterations",
                "n_starts"):
        assert key in rec
    json.dumps(rec)
