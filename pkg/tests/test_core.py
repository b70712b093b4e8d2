from fractions import Fraction

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from conftest import exact_probabilities
from mptorder.binary import compile_model, stick_break, stick_join, to_binary
from mptorder.data import Dataset, simulate
from mptorder.dsl import parse_model
from mptorder.errors import ModelError, MptError, ParamError
from mptorder.model import (Branch, Factor, MptModel, OrderSpec, SimplexGroup, Tree,
                            category_probabilities, random_assignment, validate)


def _htm_params(**kw):
    base = dict(D_o=0.5, D_n=0.5, g=0.5)
    for grp in "son":
        base.update({f"{grp}_l": 1 / 3, f"{grp}_m": 1 / 3, f"{grp}_h": 1 / 3})
    base.update(kw)
    return base


def test_old_tree_certain_detection(htm):
    p = _htm_params(D_o=1.0, s_l=0.0, s_m=0.0, s_h=1.0)
    probs = category_probabilities(htm, p)["old"]
    assert probs["old_h"] == 1.0
    assert all(v == 0.0 for c, v in probs.items() if c != "old_h")


def test_old_tree_uniform_against_oracle(htm):
    p = _htm_params()
    probs = category_probabilities(htm, p)["old"]
    oracle = exact_probabilities(htm, {k: Fraction(v).limit_denominator(10) for k, v in p.items()})
    for c in ("old_h", "old_m", "old_l"):
        assert oracle["old"][c] == Fraction(1, 4)
        assert_allclose(probs[c], 0.25, atol=1e-15)
    for c in ("new_h", "new_m", "new_l"):
        assert oracle["old"][c] == Fraction(1, 12)
        assert_allclose(probs[c], 1 / 12, atol=1e-15)


def test_simplex_identity_tree():
    m = parse_model("simplex e = a b c\ntree t\n  category x : a\n  category y : b\n"
                    "  category z : c\n")
    probs = category_probabilities(m, {"a": 0.5, "b": 0.3, "c": 0.2})["t"]
    assert_allclose([probs["x"], probs["y"], probs["z"]], [0.5, 0.3, 0.2])


@pytest.mark.parametrize("params, msg", [
    ({"a": 0.5, "b": 0.3, "c": 0.2, "zz": 0.1}, "unknown"),
    ({"a": 0.5, "b": 0.3}, "missing"),
    ({"a": 1.5, "b": -0.3, "c": -0.2}, "outside"),
    ({"a": 0.5, "b": 0.3, "c": 0.3}, "sums to"),
])
def test_category_probabilities_errors(params, msg):
    m = parse_model("simplex e = a b c\ntree t\n  category x : a\n  category y : b\n"
                    "  category z : c\n")
    with pytest.raises(ParamError, match=msg):
        category_probabilities(m, params)


def test_probabilities_sum_to_one(htm, htm_r, ordered_pair):
    rng = np.random.default_rng(11)
    for model in (htm, htm_r, ordered_pair):
        for _ in range(1000):
            probs = category_probabilities(model, random_assignment(model, rng), check=False)
            for tree in probs.values():
                assert abs(sum(tree.values()) - 1.0) < 1e-10


def test_validate_fixture_is_clean(htm, htm_r):
    assert validate(htm) == []
    assert validate(htm_r) == []


def test_validate_incomplete_tree():
    m = MptModel(binary=("p",), groups=(), trees=(Tree("t", ("a", "b")),),
                 branches=(Branch("t", "a", (Factor.param("p"),)),
                           Branch("t", "b", (Factor.comp("p"), Factor.constant(Fraction(9, 10))))))
    diags = validate(m)
    assert len(diags) == 1
    assert "tree 't'" in diags[0].message
    assert diags[0].where == ("tree", "t")


def test_validate_order_on_binary():
    m = MptModel(binary=("p", "q"), groups=(), trees=(Tree("t", ("a", "b")),),
                 branches=(Branch("t", "a", (Factor.param("p"),)),
                           Branch("t", "b", (Factor.comp("p"),))),
                 orders=(OrderSpec.chain("p", ["p", "q"]),))
    assert any("order constraints apply to simplex members only" in d.message
               for d in validate(m))


def test_validate_unreached_category():
    m = MptModel(binary=("p",), groups=(), trees=(Tree("t", ("a", "b", "c")),),
                 branches=(Branch("t", "a", (Factor.param("p"),)),
                           Branch("t", "b", (Factor.comp("p"),))))
    assert any("not reached" in d.message for d in validate(m))


# ------------------------------------------------------------------ binary

def test_stick_break_k3():
    a, b, c = 0.2, 0.5, 0.3
    betas = stick_break([a, b, c])
    assert_allclose(betas, [a, b / (1 - a)])
    assert_allclose(stick_join(betas), [a, b, c])


def test_stick_break_degenerate():
    betas = stick_break([1.0, 0.0, 0.0])
    assert betas == [1.0, 0.0]
    assert_allclose(stick_join(betas), [1.0, 0.0, 0.0])


def test_to_binary_k3_probabilities():
    m = parse_model("simplex e = a b c\ntree t\n  category x : a\n  category y : b\n"
                    "  category z : c\n")
    conv = to_binary(m)
    assert conv.model.groups == ()
    assert conv.model.binary == ("e_b1", "e_b2")
    b1, b2 = 0.3, 0.6
    probs = category_probabilities(conv.model, {"e_b1": b1, "e_b2": b2})["t"]
    assert_allclose([probs["x"], probs["y"], probs["z"]], [b1, (1 - b1) * b2, (1 - b1) * (1 - b2)])


def test_to_binary_fixed_point():
    m = parse_model("param p\ntree t\n  category a : p\n  category b : ~p\n")
    assert to_binary(m).model == m


def test_to_binary_rejects_orders(htm_r):
    with pytest.raises(ModelError, match="order"):
        to_binary(htm_r)


def test_to_binary_equivalence(htm):
    conv = to_binary(htm)
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(100):
        p = random_assignment(htm, rng)
        a = category_probabilities(htm, p)
        b = category_probabilities(conv.model, conv.transform.to_binary(p))
        worst = max(worst, max(abs(a[t][c] - b[t][c]) for t in a for c in a[t]))
    assert worst < 1e-12


def test_to_binary_degenerate_member(htm):
    conv = to_binary(htm)
    p = _htm_params(s_l=1.0, s_m=0.0, s_h=0.0)
    bp = conv.transform.to_binary(p)
    assert bp["s_b2"] == 0.0
    a = category_probabilities(htm, p)
    b = category_probabilities(conv.model, bp)
    for t in a:
        for c in a[t]:
            assert abs(a[t][c] - b[t][c]) < 1e-15


def test_compiled_model_matches_dict_evaluation(htm):
    cm, tr = compile_model(htm)
    rng = np.random.default_rng(3)
    p = random_assignment(htm, rng)
    probs = category_probabilities(htm, p)
    vec = cm.probs(cm.vector(tr.to_binary(p)))
    assert_allclose(vec, [probs[t][c] for t, c in cm.keys], atol=1e-15)


def test_compiled_jacobian_matches_differences(htm):
    cm, _ = compile_model(htm)
    theta = np.random.default_rng(4).uniform(0.1, 0.9, cm.d)
    J = cm.jacobian(theta)
    h = 1e-6
    for i in range(cm.d):
        e = np.zeros(cm.d)
        e[i] = h
        assert_allclose(J[:, i], (cm.probs(theta + e) - cm.probs(theta - e)) / (2 * h), atol=1e-8)


def test_em_step_does_not_decrease_likelihood(htm):
    cm, _ = compile_model(htm)
    rng = np.random.default_rng(8)
    counts = rng.integers(1, 50, cm.n_categories).astype(float)
    theta = rng.uniform(0.1, 0.9, (4, cm.d))
    ll = cm.loglik_kernel(theta, counts)
    for _ in range(50):
        theta = cm.em_step(theta, counts)
        new = cm.loglik_kernel(theta, counts)
        assert np.all(new >= ll - 1e-9)
        ll = new


# -------------------------------------------------------------------- data

def test_simulate_degenerate():
    m = parse_model("param p\ntree t\n  category a : p\n  category b : ~p\n")
    d = simulate(m, {"p": 1.0}, 100, seed=1)
    assert d.counts == {"t": {"a": 100, "b": 0}}


def test_simulate_uniform_six_categories():
    members = " ".join(f"m{i}" for i in range(6))
    cats = "\n".join(f"  category c{i} : m{i}" for i in range(6))
    m = parse_model(f"simplex e = {members}\ntree t\n{cats}\n")
    d = simulate(m, {f"m{i}": 1 / 6 for i in range(6)}, 6000, seed=42)
    sd = np.sqrt(6000 * (1 / 6) * (5 / 6))
    assert_allclose(sd, 28.87, atol=0.01)
    for n in d.counts["t"].values():
        assert abs(n - 1000) < 5 * sd


def test_simulate_deterministic_and_totals(htm):
    p = _htm_params()
    a = simulate(htm, p, {"old": 300, "new": 200}, seed=9)
    b = simulate(htm, p, {"old": 300, "new": 200}, seed=9)
    assert a == b
    assert a.totals() == {"old": 300, "new": 200}


def test_simulate_rejects_bad_params(htm):
    with pytest.raises(ParamError):
        simulate(htm, _htm_params(g=1.5), 10, seed=0)


def test_dataset_csv_round_trip(htm):
    d = simulate(htm, _htm_params(), 50, seed=2)
    back = Dataset.from_csv(d.to_csv())
    assert back == d
    assert_array_equal(back.vector(htm), d.vector(htm))


@pytest.mark.parametrize("text, msg", [
    ("a,b,c\n", "header"),
    ("tree,category,count\nt,a,x\n", "not an integer"),
    ("tree,category,count\nt,a,-1\n", "negative"),
    ("tree,category,count\nt,a,1\nt,a,2\n", "duplicate"),
])
def test_dataset_csv_errors(text, msg):
    with pytest.raises(MptError, match=msg):
        Dataset.from_csv(text)


def test_dataset_category_mismatch(htm):
    d = Dataset({"old": {"old_h": 1}})
    with pytest.raises(ModelError, match="missing"):
        d.vector(htm)


def test_simplex_group_requires_two_members():
    m = MptModel(binary=(), groups=(SimplexGroup("e", ("a",)),), trees=(Tree("t", ("x",)),),
                 branches=(Branch("t", "x", (Factor.param("a"),)),))
    assert any("at least 2" in d.message for d in validate(m))
