import json
from fractions import Fraction

import numpy as np
import pytest

from wpIsac.model.Scenario import SystemParams, scenario_from_geometry, DegenerateGeometryException
from wpIsac.model.Sensing import (BISTATIC, MONOSTATIC, SINGULAR, Fim2x2, round_trip_distance, range_gradient,
                                  sensing_coefficient, build_tables, fim, crb_trace, fn_value)


def test_round_trip_distance():
    assert round_trip_distance((-3, 0), (4, 0), (0, 0), BISTATIC) == pytest.approx(7.0)
    assert round_trip_distance((0, 5), (0, 5), (0, 0), MONOSTATIC) == pytest.approx(10.0)
    assert round_trip_distance((2, 7), (2, 7), (1, 1), BISTATIC) == \
        pytest.approx(round_trip_distance((2, 7), (2, 7), (1, 1), MONOSTATIC))


def test_round_trip_distance_rejects_bad_input():
    with pytest.raises(ValueError):
        round_trip_distance((0, 1), (1, 0), (0, 0), "multistatic")
    with pytest.raises(DegenerateGeometryException):
        round_trip_distance((0, 1), (0, 0), (0, 0), BISTATIC)


@pytest.mark.parametrize("tx, bs, mode, expected", [
    ((1, 0), (1, 0), MONOSTATIC, (-2, 0)),
    ((-1, 0), (1, 0), BISTATIC, (0, 0)),
    ((0, 1), (1, 0), BISTATIC, (-1, -1)),
])
def test_range_gradient(tx, bs, mode, expected):
    assert np.allclose(range_gradient(tx, bs, (0, 0), mode), expected, atol=1e-15)


def test_sensing_coefficient():
    assert sensing_coefficient(1e6, 1e-6, 1e-10, 3e8) == pytest.approx(8 * np.pi ** 2 / 9, rel=1e-12)
    base = sensing_coefficient(1e6, 1e-6, 1e-10, 3e8)
    assert sensing_coefficient(2e6, 1e-6, 1e-10, 3e8) == pytest.approx(4 * base)
    assert sensing_coefficient(1e6, 3e-6, 1e-10, 3e8) == pytest.approx(3 * base)
    assert sensing_coefficient(1e6, 1e-6, 2e-10, 3e8) == pytest.approx(base / 2)


def test_tables_shapes_and_symmetry(default_tables):
    assert default_tables.X.shape == (11, 10)
    assert default_tables.alpha.shape == (10, 10)
    assert default_tables.beta.shape == (10, 10, 10)
    assert default_tables.phi.shape == (10, 10)
    assert default_tables.mu.shape == (10,)
    assert np.all(np.diagonal(default_tables.beta, axis1=0, axis2=1) == 0.0)
    assert np.array_equal(default_tables.beta, np.swapaxes(default_tables.beta, 0, 1))
    assert np.all(default_tables.beta >= 0) and np.all(default_tables.phi >= 0)


def test_collinear_user_has_zero_alpha():
    params = SystemParams(num_users=1, num_targets=1)
    # user and BS on opposite sides of the target
    scenario = scenario_from_geometry(params, [[-2.0, 0.0]], [[1.0, 0.0]], bs_pos=(3.0, 0.0))
    tables = build_tables(scenario)
    assert tables.alpha[0, 0] == pytest.approx(0.0, abs=1e-12 * tables.K[1, 0])


def test_single_user_tables_match_direct_transcription(single_user_scenario):
    """Straight-line evaluation of the coefficient formulas in rational arithmetic."""
    scenario = single_user_scenario
    tables = build_tables(scenario)
    params = scenario.params

    def exact(v):
        return Fraction(float(v))

    X = [exact(x) for x in tables.X[:, 0]]
    Y = [exact(y) for y in tables.Y[:, 0]]
    K = [exact(k) for k in tables.K[:, 0]]
    p0 = exact(params.p0)
    alpha = K[1] * (X[1] ** 2 + Y[1] ** 2)
    mu = p0 * K[0] * (X[0] ** 2 + Y[0] ** 2)
    phi = K[0] * K[1] * (X[0] * Y[1] - X[1] * Y[0]) ** 2
    assert float(alpha) == pytest.approx(tables.alpha[0, 0], rel=1e-14)
    assert float(mu) == pytest.approx(tables.mu[0], rel=1e-14)
    assert float(phi) == pytest.approx(tables.phi[0, 0], rel=1e-14)
    assert tables.beta[0, 0, 0] == 0.0

    q = scenario.target_pos[0]
    for m, tx in enumerate(scenario.transmitter_pos):
        mode = MONOSTATIC if m == 0 else BISTATIC
        assert np.allclose(tables.X[m, 0], range_gradient(tx, scenario.bs_pos, q, mode)[0])
        h = scenario.h_to_target[m, 0]
        assert tables.K[m, 0] == pytest.approx(sensing_coefficient(params.bandwidth, h, params.sigma2, params.c))


def test_single_transmitter_fim_is_singular(single_user_scenario):
    tables = build_tables(single_user_scenario)
    bs_only = fim(np.zeros(1), single_user_scenario.params.p0, tables, 0)
    assert bs_only.determinant == pytest.approx(0.0, abs=1e-12 * bs_only.A * bs_only.B)
    assert crb_trace(bs_only) == SINGULAR
    assert not bs_only.is_positive_definite()


def test_fim_matches_term_by_term_sum(scenario_factory):
    scenario = scenario_factory(5, num_users=3, num_targets=2)
    tables = build_tables(scenario)
    p = np.array([0.3, 1.1, 1.9])
    weights = [Fraction(scenario.params.p0)] + [Fraction(float(x)) for x in p]
    for n in range(2):
        information = fim(p, scenario.params.p0, tables, n)
        A = sum(w * Fraction(float(k)) * Fraction(float(x)) ** 2
                for w, k, x in zip(weights, tables.K[:, n], tables.X[:, n]))
        C = sum(w * Fraction(float(k)) * Fraction(float(x)) * Fraction(float(y))
                for w, k, x, y in zip(weights, tables.K[:, n], tables.X[:, n], tables.Y[:, n]))
        assert information.A == pytest.approx(float(A), rel=1e-12)
        assert information.C == pytest.approx(float(C), rel=1e-12, abs=1e-12 * information.A)
        assert np.allclose(information.matrix, [[information.A, information.C], [information.C, information.B]])


def test_crb_trace():
    assert crb_trace(Fim2x2(A=2.0, B=2.0, C=0.0)) == pytest.approx(1.0)
    assert crb_trace(Fim2x2(A=1.0, B=1.0, C=1.0)) == SINGULAR
    base = Fim2x2(A=3.0, B=5.0, C=1.0)
    scaled = Fim2x2(A=30.0, B=50.0, C=10.0)
    assert crb_trace(scaled) == pytest.approx(crb_trace(base) / 10, rel=1e-14)


def test_fn_value_at_zero_power_is_the_bs_constant(default_tables, default_scenario):
    params = default_scenario.params
    for n in range(default_scenario.num_targets):
        value = fn_value(np.zeros(default_scenario.num_users), default_tables, params.eta, params.p0, n)
        assert value == pytest.approx(default_tables.mu[n], rel=1e-14)
        assert value > 0


def test_fn_value_decreases_without_bound(default_tables, default_scenario):
    params = default_scenario.params
    ones = np.ones(default_scenario.num_users)
    for n in range(default_scenario.num_targets):
        assert fn_value(1e6 * ones, default_tables, params.eta, params.p0, n) < \
               fn_value(1e3 * ones, default_tables, params.eta, params.p0, n) < 0


def test_polynomial_form_matches_fim_form(scenario_factory, rng):
    """Cauchy-Schwarz expansion of AB - C^2 on random instances and powers."""
    worst = 0.0
    for draw in range(1000):
        if draw % 100 == 0:
            scenario = scenario_factory(draw, num_users=int(rng.integers(1, 5)), num_targets=2,
                                        eta=float(rng.uniform(1e-3, 1.0)))
            tables = build_tables(scenario)
            params = scenario.params
        p = params.p_max * rng.random(scenario.num_users)
        for n in range(scenario.num_targets):
            information = fim(p, params.p0, tables, n)
            direct = information.A + information.B - params.eta * information.determinant
            polynomial = fn_value(p, tables, params.eta, params.p0, n)
            scale = information.A + information.B + params.eta * information.A * information.B
            worst = max(worst, abs(polynomial - direct) / scale)
    assert worst <= 1e-9, f"worst relative gap {worst}"


def test_fn_value_accepts_a_batch(default_tables, default_scenario, rng):
    params = default_scenario.params
    P = rng.random((7, default_scenario.num_users))
    batch = fn_value(P, default_tables, params.eta, params.p0, 3)
    single = [fn_value(p, default_tables, params.eta, params.p0, 3) for p in P]
    assert np.allclose(batch, single, rtol=1e-13)


def test_tables_json(default_tables):
    document = json.loads(default_tables.to_json())
    assert set(document) == {"X", "Y", "K", "alpha", "mu", "beta", "phi", "p0"}
    assert np.array(document["beta"]).shape == (10, 10, 10)


def _random_powers(rng, params, count):
    return params.p_max * 10.0 ** rng.uniform(-6, 0, count)


def test_determinant_is_a_sum_of_pairwise_squares(scenario_factory, rng):
    worst = 0.0
    for draw in range(1000):
        if draw % 10 == 0:
            scenario = scenario_factory(100 + draw, num_users=int(rng.integers(1, 6)), num_targets=2)
            tables = build_tables(scenario)
            params = scenario.params
        p = _random_powers(rng, params, scenario.num_users)
        for n in range(scenario.num_targets):
            information = fim(p, params.p0, tables, n)
            w = np.concatenate([[params.p0], p]) * tables.K[:, n]
            X, Y = tables.X[:, n], tables.Y[:, n]
            cross = np.outer(X, Y) - np.outer(Y, X)
            pairwise = 0.5 * np.sum(np.outer(w, w) * cross ** 2)
            assert pairwise >= 0
            assert information.determinant >= -information.pd_tolerance()
            gap = abs(pairwise - information.determinant) / max(1.0, information.A * information.B)
            worst = max(worst, gap)
    assert worst <= 1e-9, f"worst relative gap {worst}"


def test_sign_of_fn_value_matches_the_crb_test(scenario_factory, rng):
    below, above = 0, 0
    for draw in range(1000):
        scenario = scenario_factory(200 + draw, num_users=int(rng.integers(1, 6)), num_targets=2)
        tables = build_tables(scenario)
        params = scenario.params
        p = _random_powers(rng, params, scenario.num_users)
        eta = 10.0 ** rng.uniform(-3, 3)
        for n in range(scenario.num_targets):
            information = fim(p, params.p0, tables, n)
            value = fn_value(p, tables, eta, params.p0, n)
            scale = information.A + information.B + eta * information.A * information.B
            if abs(value) <= 1e-9 * scale:
                continue
            meets = crb_trace(information) <= eta
            assert (value <= 0) == meets
            below, above = below + meets, above + (not meets)
    assert below > 0 and above > 0


def test_more_power_never_loses_information(scenario_factory, rng):
    scenario = scenario_factory(9, num_users=4, num_targets=3)
    tables = build_tables(scenario)
    params = scenario.params
    for _ in range(200):
        p = _random_powers(rng, params, scenario.num_users)
        more = p.copy()
        more[rng.integers(scenario.num_users)] += params.p_max * rng.random()
        for n in range(scenario.num_targets):
            before, after = fim(p, params.p0, tables, n), fim(more, params.p0, tables, n)
            assert after.A >= before.A and after.B >= before.B
            assert after.determinant >= before.determinant - after.pd_tolerance()
            if before.determinant > 1e-6 * before.A * before.B:
                assert crb_trace(after) <= crb_trace(before) * (1 + 1e-9)
