import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mflab.deviations import tail_bound_check, uniform_convergence_check
from mflab.dynsys import FieldTrajectory, constant_field, orbit, torus_rotation, user_map
from mflab.landscape import (MAX_ORDER, BracketError, UnsupportedBranchError,
                             UnsupportedOrderError, classify_minimum, critical_beta, eval_G, eval_Gn,
                             field_cumulant, find_and_classify_minima, global_minima, limit_cumulant,
                             stationary_points)

TORUS = torus_rotation()


def _L(phi, s):
    return math.log(phi * math.exp(s) + (1 - phi) * math.exp(-s))


def test_field_cumulant_examples():
    phi = np.linspace(0, 1, 11)
    assert np.all(field_cumulant(phi, 0.0, 0) == 0.0)
    assert field_cumulant(phi, 0.0, 1) == pytest.approx(2 * phi - 1, abs=1e-15)
    assert field_cumulant(0.5, 1.0, 2) == pytest.approx(1 - math.tanh(1.0) ** 2, abs=1e-15)
    h = 1e-5
    fd = (_L(0.5, 1 + h) - 2 * _L(0.5, 1) + _L(0.5, 1 - h)) / h ** 2
    assert field_cumulant(0.5, 1.0, 2) == pytest.approx(fd, abs=1e-6)


def test_field_cumulant_degenerate_and_large_arguments():
    assert field_cumulant(1.0, 3.0, 0) == pytest.approx(3.0)
    assert field_cumulant(0.0, 3.0, 0) == pytest.approx(-3.0)
    assert field_cumulant(0.0, 3.0, 2) == 0.0
    assert field_cumulant(0.3, 800.0, 0) == pytest.approx(800 + math.log(0.3), rel=1e-15)
    assert field_cumulant(0.3, -800.0, 0) == pytest.approx(800 + math.log(0.7), rel=1e-15)
    assert np.isfinite(field_cumulant(0.3, 800.0, 5))


@settings(max_examples=60, deadline=None)
@given(st.floats(0.01, 0.99), st.floats(-4, 4), st.integers(1, 8))
def test_field_cumulant_derivative_chain(phi, s, order):
    h = 1e-5
    fd = (field_cumulant(phi, s + h, order - 1) - field_cumulant(phi, s - h, order - 1)) / (2 * h)
    assert field_cumulant(phi, s, order) == pytest.approx(fd, rel=1e-5, abs=1e-6)


def test_order_cap():
    with pytest.raises(UnsupportedOrderError):
        field_cumulant(0.5, 0.1, MAX_ORDER + 1)


def test_torus_closed_form_matches_quadrature():
    q = torus_rotation(integrator="quadrature")
    t = np.array([-5.0, -1e-4, 0.0, 3e-4, 0.8, 10.0])
    for order in range(3):
        assert limit_cumulant(TORUS, t, order) == pytest.approx(limit_cumulant(q, t, order), abs=1e-11)
    # Λ(t) = t coth t - 1 away from zero
    assert limit_cumulant(TORUS, 2.0, 0) == pytest.approx(2 / math.tanh(2) - 1, abs=1e-15)


def test_eval_G_examples():
    for system in (TORUS, constant_field(0.3)):
        assert eval_G(system, 1.7, 0.0, 0) == 0.0
    assert eval_G(TORUS, 1.5, 1.0, 0) == pytest.approx(0.75 - (1.5 / math.tanh(1.5) - 1), abs=1e-12)
    assert eval_G(TORUS, 1.5, 1.0, 0) == pytest.approx(0.0928127, abs=1e-6)
    assert eval_G(TORUS, 1.5, 0.0, 2) == pytest.approx(0.0, abs=1e-14)
    assert eval_G(TORUS, 1.5, 0.0, 4) == pytest.approx(8 * 1.5 ** 4 / 15, rel=1e-12)


@pytest.mark.parametrize("system", [TORUS, torus_rotation(field="logistic-of:sin(2*pi*x)"),
                                    constant_field(0.3)])
def test_G_derivative_consistency(system):
    s = np.linspace(-0.9, 0.9, 37)
    h = 1e-5
    for j in range(1, 7):
        fd = (eval_G(system, 1.3, s + h, j - 1) - eval_G(system, 1.3, s - h, j - 1)) / (2 * h)
        exact = eval_G(system, 1.3, s, j)
        assert np.all(np.abs(exact - fd) <= 1e-5 * np.maximum(1.0, np.abs(exact)))


def test_eval_Gn_examples():
    t = orbit(TORUS, 0.0, 50)
    assert eval_Gn(t, 1.2, 0.0, 0) == 0.0
    for n in (1, 10, 1000):
        c = FieldTrajectory.from_values(np.full(n, 0.5))
        assert eval_Gn(c, 1.0, 1.0, 0) == pytest.approx(0.5 - math.log(math.cosh(1.0)), abs=1e-15)
    err = [abs(float(eval_Gn(orbit(TORUS, 0.0, n), 1.5, 0.5) - eval_G(TORUS, 1.5, 0.5)))
           for n in (100, 1000, 10_000)]
    assert err[0] > err[1] > err[2]


def test_uniform_convergence_all_orders():
    out = uniform_convergence_check(TORUS, 0.0, 1.5, [100, 1000, 10_000, 100_000],
                                    np.linspace(-1, 1, 401), orders=(0, 1, 2, 3, 4))
    for j, errs in out.items():
        assert all(a > b for a, b in zip(errs, errs[1:])), (j, errs)


def test_tail_bound_decays():
    logs = tail_bound_check(TORUS, 0.0, 1.0, 0.2, 1.0, [1000, 10_000])
    assert logs[0] < 0 and logs[1] < logs[0]
    assert max(v / n for v, n in zip(logs, (1000, 10_000))) <= -0.005


def test_classification_examples():
    (p,) = find_and_classify_minima(TORUS, 1.0)
    assert (p.m, p.two_k) == (pytest.approx(0.0, abs=1e-12), 2)
    assert p.strength == pytest.approx(1 / 3, rel=1e-10) and p.is_global
    (p,) = find_and_classify_minima(TORUS, 1.5)
    assert p.two_k == 4 and p.strength == pytest.approx(2.7, abs=1e-6) and abs(p.m) < 1e-9
    assert p.to_dict()["lambda"] == p.strength
    profiles = global_minima(constant_field(0.5), 2.0)
    assert len(profiles) == 2 and all(q.two_k == 2 for q in profiles)
    # fixed-point oracle for m = tanh(2m)
    m = 0.9
    for _ in range(200):
        m = math.tanh(2 * m)
    assert sorted(q.m for q in profiles) == pytest.approx([-m, m], abs=1e-10)


def test_classify_single_point():
    m, two_k, lam, table = classify_minimum(constant_field(0.5), 1.0, 1e-4)
    assert abs(m) < 1e-9 and two_k == 4 and lam == pytest.approx(2.0, rel=1e-9)
    assert len(table) >= 4


def test_supercritical_torus_has_symmetric_pair():
    profiles = find_and_classify_minima(TORUS, 2.0)
    ms = sorted(p.m for p in profiles)
    assert len(ms) == 2 and ms[0] == pytest.approx(-ms[1], abs=1e-10)
    assert all(p.two_k == 2 and p.is_global for p in profiles)
    kinds = [k for _, k in stationary_points(TORUS, 2.0)]
    assert kinds == ["min", "max", "min"]


@pytest.mark.parametrize("bj", [1.5 - 1e-6, 1.5 + 1e-7])
def test_near_degenerate_warning(bj):
    (p,) = find_and_classify_minima(TORUS, bj)
    assert p.two_k == 4
    assert any("near-degenerate" in w for w in p.warnings)


def test_exact_critical_point_has_no_warning():
    (p,) = find_and_classify_minima(TORUS, 1.5)
    assert p.warnings == ()


@pytest.mark.parametrize("system", [TORUS, constant_field(0.5), constant_field(0.2),
                                    torus_rotation(field="logistic-of:2*sin(2*pi*x)"),
                                    torus_rotation(field="logistic-of:sin(2*pi*x)+0.3")])
@pytest.mark.parametrize("bj", [0.3, 0.9, 1.2, 2.0, 3.5])
def test_quadratic_minima_are_below_beta_J(system, bj):
    for p in find_and_classify_minima(system, bj):
        if p.two_k == 2:
            assert 0 < p.strength < bj


def test_critical_beta_examples():
    assert critical_beta(TORUS, 1.0) == pytest.approx(1.5, abs=1e-8)
    assert critical_beta(TORUS, 3.0) == pytest.approx(0.5, abs=1e-8)
    assert critical_beta(constant_field(0.5), 1.0) == pytest.approx(1.0, abs=1e-8)


def test_critical_beta_errors():
    with pytest.raises(UnsupportedBranchError):
        critical_beta(constant_field(0.3), 1.0)
    with pytest.raises(BracketError):
        critical_beta(TORUS, 1.0, bracket=(2.0, 3.0))
    with pytest.raises(ValueError):
        critical_beta(TORUS, -1.0)


def test_user_map_landscape_matches_torus():
    u = user_map(lambda x: (x + 0.618) % 1.0, lambda y: y)
    s = np.linspace(-1, 1, 21)
    assert eval_G(u, 1.4, s, 0) == pytest.approx(eval_G(TORUS, 1.4, s, 0), abs=1e-11)
