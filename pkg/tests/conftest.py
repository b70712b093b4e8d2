from fractions import Fraction

import pytest

from mptorder.dsl import fixture_path, parse_model, read_model


@pytest.fixture(scope="session")
def htm():
    return read_model(fixture_path("2htm"))


@pytest.fixture(scope="session")
def htm_r():
    return read_model(fixture_path("2htm_r"))


@pytest.fixture(scope="session")
def ordered_pair():
    return read_model(fixture_path("ordered_pair"))


HTM_TRUTH = dict(D_o=0.6, D_n=0.5, g=0.4, s_l=0.2, s_m=0.3, s_h=0.5,
                 o_l=0.5, o_m=0.3, o_h=0.2, n_l=0.6, n_m=0.25, n_h=0.15)


def identity_model(k: int, order: str = ""):
    members = [f"e{i + 1}" for i in range(k)]
    lines = [f"simplex e = {' '.join(members)}"]
    if order:
        lines.append(order)
    lines.append("tree t")
    lines += [f"  category c{i + 1} : {m}" for i, m in enumerate(members)]
    return parse_model("\n".join(lines) + "\n")


def exact_probabilities(model, params):
    """Independent oracle: enumerate every branch with rational arithmetic."""
    q = {k: Fraction(v) for k, v in params.items()}
    out = {t.name: {c: Fraction(0) for c in t.categories} for t in model.trees}
    for b in model.branches:
        p = Fraction(1)
        for f in b.factors:
            if f.is_const:
                p *= f.const
            elif f.complement:
                p *= 1 - q[f.name]
            else:
                p *= q[f.name]
        out[b.tree][b.category] += p
    return out
