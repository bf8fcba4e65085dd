import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from swapnpa.scenario import (
    BoundResult,
    CoefficientMatrix,
    CorrelatorTable,
    DegenerateFunctional,
    DomainError,
    ProbabilityTable,
    Scenario,
    SolverStatus,
    Theory,
    config_from_dict,
    config_to_dict,
    correlators_from_probabilities,
    dump_config,
    evaluate_F,
    load_config,
    ratio,
    sign_factor,
    sign_table,
)


def test_scenario_defaults_and_validation():
    sc = Scenario()
    assert (sc.m, sc.n, sc.hierarchy_degree, sc.causally_independent, sc.bob_outcomes) == (3, 3, 2, True, 4)
    with pytest.raises(DomainError):
        Scenario(m=4)
    with pytest.raises(DomainError):
        Scenario(n=0)
    with pytest.raises(DomainError):
        Scenario(hierarchy_degree=0)


@pytest.mark.parametrize("b,x,expected", [(1, 1, 1), (4, 2, 1), (2, 3, -1), (3, 3, 1), (1, 2, -1)])
def test_sign_factor_examples(b, x, expected):
    assert sign_factor(b, x) == expected


@pytest.mark.parametrize("b,x", [(0, 1), (5, 1), (1, 0), (1, 4)])
def test_sign_factor_domain(b, x):
    with pytest.raises(DomainError):
        sign_factor(b, x)


def test_sign_columns_sum_to_zero():
    assert np.all(sign_table(3).sum(axis=0) == 0)


def test_coefficient_matrix_is_read_only_and_finite():
    E = CoefficientMatrix([[1, 2, 3], [4, 5, 6], [7, 8, 9]])
    with pytest.raises(ValueError):
        E.entries[0, 0] = 3
    with pytest.raises(DomainError):
        CoefficientMatrix([[np.nan, 1, 1]])
    with pytest.raises(DomainError):
        E.check_scenario(Scenario(3, 4))


def _table(m=3, n=3, fill=None):
    vals = np.zeros((2, 4, 2, m, n))
    if fill is None:
        vals[:] = 1 / 16
    else:
        fill(vals)
    return ProbabilityTable(vals)


def test_correlators_uniform_are_zero():
    S = correlators_from_probabilities(_table())
    assert np.all(S.values == 0)


def test_correlators_perfect_correlation():
    def fill(v):
        v[0, :, 0] = 1 / 8
        v[1, :, 1] = 1 / 8

    S = correlators_from_probabilities(_table(fill=fill))
    assert np.allclose(S.values, 0.25)


def test_correlators_single_term():
    def fill(v):
        v[...] = 1 / 16
        v[:, :, :, 0, 0] = 0
        v[0, 0, 1, 0, 0] = 1

    S = correlators_from_probabilities(_table(fill=fill))
    assert S(1, 1, 1) == -1


def test_probability_table_validation():
    with pytest.raises(DomainError):
        ProbabilityTable(np.zeros((2, 4, 2, 3, 3)))
    vals = np.full((2, 4, 2, 3, 3), 1 / 16)
    vals[0, 0, 0, 0, 0] = -0.1
    with pytest.raises(DomainError):
        ProbabilityTable(vals)


def test_evaluate_F_examples():
    S = CorrelatorTable(np.random.default_rng(0).uniform(-0.25, 0.25, (4, 3, 3)))
    assert evaluate_F(CoefficientMatrix(np.zeros((3, 3))), S) == 0
    e = np.zeros((3, 3))
    e[0, 0] = 1
    s = np.zeros((4, 3, 3))
    s[0, 0, 0] = 1
    assert evaluate_F(CoefficientMatrix(e), CorrelatorTable(s)) == 1
    with pytest.raises(DomainError):
        evaluate_F(CoefficientMatrix(np.ones((3, 4))), S)


@settings(max_examples=50, deadline=None)
@given(st.floats(-5, 5), st.integers(0, 2**31 - 1))
def test_evaluate_F_bilinear(c, seed):
    rng = np.random.default_rng(seed)
    S = CorrelatorTable(rng.uniform(-1, 1, (4, 3, 4)))
    E1 = CoefficientMatrix(rng.uniform(-1, 1, (3, 4)))
    E2 = CoefficientMatrix(rng.uniform(-1, 1, (3, 4)))
    assert evaluate_F(E1 * c, S) == pytest.approx(c * evaluate_F(E1, S), abs=1e-12)
    assert evaluate_F(E1 + E2, S) == pytest.approx(evaluate_F(E1, S) + evaluate_F(E2, S), abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_correlators_bounded(seed):
    rng = np.random.default_rng(seed)
    v = rng.uniform(0, 1, (2, 4, 2, 3, 3))
    v /= v.sum(axis=(0, 1, 2), keepdims=True)
    S = correlators_from_probabilities(ProbabilityTable(v))
    assert np.all(np.abs(S.values) <= 1)
    # |S^b| <= P(b) and their sum is at most 1
    assert np.all(np.abs(S.values).sum(axis=0) <= 1 + 1e-12)


def test_ratio_examples():
    assert ratio(2.1134, 2.3283) == pytest.approx(0.9077, abs=5e-5)
    # the reported (3,4) pair gives 0.9342, not the reported ratio 0.8847
    assert ratio(6.4722, 6.9282) == pytest.approx(0.93418, abs=5e-5)
    with pytest.raises(DegenerateFunctional):
        ratio(0.0, 1e-9)


def test_bound_result_requires_finite_solved_value():
    with pytest.raises(ValueError):
        BoundResult(float("nan"), Theory.REAL, SolverStatus.OPTIMAL, 0.0)
    r = BoundResult(float("nan"), Theory.REAL, SolverStatus.NUMERICAL_TROUBLE, 1.0)
    assert not r.solved


def test_config_round_trip(tmp_path):
    sc = Scenario(3, 4, 2, True)
    E = CoefficientMatrix([[-1, 1, 1, 1], [1, -1, 1, 1], [1, 1, -1, 1]])
    doc = config_to_dict(sc, E)
    assert doc == {"m": 3, "n": 4, "hierarchy_degree": 2, "causally_independent": True,
                   "E": [[-1.0, 1.0, 1.0, 1.0], [1.0, -1.0, 1.0, 1.0], [1.0, 1.0, -1.0, 1.0]]}
    assert config_from_dict(doc) == (sc, E)
    path = tmp_path / "cfg.json"
    path.write_text(dump_config(sc, E))
    assert load_config(path) == (sc, E)
    assert load_config(json.dumps(doc)) == (sc, E)
    with pytest.raises(DomainError):
        config_from_dict({"n": 3})
