import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.interpolate import CubicSpline

from conftest import brute_force_walk
from mflab.landscape import field_cumulant
from mflab.dynsys import FieldTrajectory, constant_field, orbit, torus_rotation
from mflab.walk import (IMPOSSIBLE, DegenerateVarianceError, LatticeDistribution, cgf_limit,
                        cgf_quenched, conjugate_edges, legendre_transform, sample_walk,
                        walk_conjugate, walk_distribution, walk_mdp_rate, walk_variance_constant)


def traj(p):
    return FieldTrajectory.from_values(p)


def test_single_step():
    law = walk_distribution(traj([0.3]))
    assert law.prob == pytest.approx([0.7, 0.3], abs=1e-15)
    assert law.support.tolist() == [-1, 1]


def test_fair_two_steps():
    law = walk_distribution(traj([0.5, 0.5]))
    assert law.prob == pytest.approx([0.25, 0.5, 0.25], abs=1e-15)


def test_three_steps_against_enumeration():
    p = [0.618034, 0.236068, 0.854102]
    assert np.max(np.abs(walk_distribution(traj(p)).prob - brute_force_walk(p))) <= 1e-12


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0.0, 1.0), min_size=1, max_size=10))
def test_matches_enumeration(p):
    law = walk_distribution(traj(p))
    assert np.max(np.abs(law.prob - brute_force_walk(p))) <= 1e-12
    assert np.all((law.support - law.n) % 2 == 0)
    assert law.log_normalizer() == pytest.approx(0.0, abs=1e-12)
    assert np.all(law.log_mass <= 1e-15)


def test_impossible_atoms_are_explicit():
    law = walk_distribution(traj([1.0, 1.0, 0.0]))
    assert law.log_prob(1) == 0.0
    assert law.log_prob(3) == IMPOSSIBLE and law.log_prob(-3) == IMPOSSIBLE
    assert law.log_prob(2) == IMPOSSIBLE          # wrong parity
    assert not np.any(np.isnan(law.log_mass))


def test_mean_and_variance_identities():
    t = orbit(torus_rotation(), 0.2, 3000)
    law = walk_distribution(t)
    assert abs(law.mean() - np.sum(2 * t.p - 1)) <= 1e-9 * t.n
    assert abs(law.variance() - np.sum(4 * t.p * (1 - t.p))) <= 1e-9 * t.n


def test_deep_tail_is_representable():
    # P(S_n = n) = 2^-n is far below the double-precision underflow threshold
    law = walk_distribution(traj(np.full(5000, 0.5)))
    assert law.log_prob(5000) == pytest.approx(-5000 * math.log(2), rel=1e-12)
    assert law.log_tail(5000) == pytest.approx(-5000 * math.log(2), rel=1e-12)
    assert law.log_tail(5001) == IMPOSSIBLE


def test_tilt_and_csv():
    law = walk_distribution(traj([0.5, 0.5]))
    flat = law.tilted(lambda k: -np.log([0.25, 0.5, 0.25]), "uniform")
    assert flat.prob == pytest.approx([1 / 3] * 3)
    lines = law.to_csv().splitlines()
    assert lines[0] == "k,log_prob,prob"
    assert [r.split(",")[0] for r in lines[1:]] == ["-2", "0", "2"]


def test_distribution_rejects_wrong_length():
    with pytest.raises(ValueError):
        LatticeDistribution(2, np.zeros(2))


def test_forced_paths(rng):
    assert sample_walk(traj([1, 1, 1]), rng).tolist() == [0, 1, 2, 3]
    assert sample_walk(traj([0, 0]), rng).tolist() == [0, -1, -2]


def test_sample_mean_clt(rng):
    n, size = 10_000, 2000
    paths = sample_walk(traj(np.full(n, 0.5)), rng, size)
    assert paths.shape == (size, n + 1)
    assert abs(paths[:, -1].mean()) < 4 * math.sqrt(n / size)


def test_quenched_cgf_examples():
    t = orbit(torus_rotation(), 0.0, 50)
    assert cgf_quenched(t, 0.0) == 0.0
    assert cgf_quenched(traj(np.full(10, 0.5)), 1.0) == pytest.approx(math.log(math.cosh(1.0)), abs=1e-15)
    assert cgf_quenched(traj(np.ones(7)), 2.5) == pytest.approx(2.5, abs=1e-15)


def test_quenched_cgf_is_convex():
    t = orbit(torus_rotation(), 0.4, 500)
    lam = np.linspace(-5, 5, 401)
    v = cgf_quenched(t, lam)
    assert np.all(v[2:] - 2 * v[1:-1] + v[:-2] >= -1e-9)


def test_limit_cgf_examples():
    assert cgf_limit(torus_rotation(), 0.0) == 0.0
    assert cgf_limit(constant_field(0.3), 0.0) == 0.0
    assert cgf_limit(torus_rotation(), 1.0) == pytest.approx(1 / math.tanh(1) - 1, abs=1e-12)
    assert cgf_limit(constant_field(0.5), 2.0) == pytest.approx(math.log(math.cosh(2.0)), abs=1e-12)


def test_limit_cgf_quadrature_matches_closed_form():
    q = torus_rotation(integrator="quadrature")
    lam = np.array([-3.0, -0.5, 0.7, 4.0])
    assert cgf_limit(q, lam) == pytest.approx(cgf_limit(torus_rotation(), lam), abs=1e-11)


def _logcosh_conjugate(y):
    return legendre_transform(lambda x: np.log(np.cosh(x)), y, np.tanh, lambda x: 1 / np.cosh(x) ** 2,
                              edges=(math.log(2), math.log(2)))


def test_conjugate_examples():
    assert _logcosh_conjugate(0.0) == pytest.approx(0.0, abs=1e-15)
    assert _logcosh_conjugate(0.5) == pytest.approx(0.75 * math.log(1.5) + 0.25 * math.log(0.5), abs=1e-12)
    assert walk_conjugate(torus_rotation())(0.0) == pytest.approx(0.0, abs=1e-12)


def test_conjugate_vanishes_at_the_mean():
    t = orbit(torus_rotation(), 0.0, 100)
    cgf = lambda x: np.vectorize(lambda v: np.mean(field_cumulant(t.p, v, 0)))(x)
    d1 = lambda x: np.vectorize(lambda v: np.mean(field_cumulant(t.p, v, 1)))(x)
    d2 = lambda x: np.vectorize(lambda v: np.mean(field_cumulant(t.p, v, 2)))(x)
    mean = float(d1(0.0))
    assert legendre_transform(cgf, mean, d1, d2) == pytest.approx(0.0, abs=1e-12)
    assert legendre_transform(cgf, mean + 0.1, d1, d2) > 0


def test_conjugate_is_nonnegative_and_infinite_outside():
    c = walk_conjugate(torus_rotation())
    y = np.linspace(-0.999, 0.999, 201)
    assert np.all(c(y) >= 0)
    assert c(1.2) == math.inf and c(-1.0001) == math.inf


def test_conjugate_edges():
    assert conjugate_edges(constant_field(0.5)) == pytest.approx((math.log(2), math.log(2)))
    assert conjugate_edges(torus_rotation()) == (1.0, 1.0)
    # -∫ log(1 - y) dy = 1 on [0, 1)
    lo, hi = conjugate_edges(torus_rotation(integrator="quadrature"))
    assert lo == pytest.approx(1.0, abs=1e-8) and hi == pytest.approx(1.0, abs=1e-8)
    assert walk_conjugate(torus_rotation())(1.0) == 1.0


def test_conjugate_argmax():
    val, lam = _logcosh_conjugate_with_argmax(np.array([-0.3, 0.6, 1.0]))
    assert lam[:2] == pytest.approx(np.arctanh([-0.3, 0.6]), abs=1e-12)
    assert lam[2] == math.inf


def _logcosh_conjugate_with_argmax(y):
    return legendre_transform(lambda x: np.log(np.cosh(x)), y, np.tanh, lambda x: 1 / np.cosh(x) ** 2,
                              edges=(math.log(2), math.log(2)), return_argmax=True)


def test_legendre_involution():
    # conjugate on a dense grid, interpolate, conjugate again by direct maximization
    y = np.linspace(-1, 1, 4001)[1:-1]
    star = _logcosh_conjugate(y)
    spline = CubicSpline(y, star)
    yy = np.linspace(-1 + 1e-6, 1 - 1e-6, 400_001)
    vals = spline(yy)
    lam = np.linspace(-2, 2, 41)
    back = np.array([np.max(l * yy - vals) for l in lam])
    assert np.max(np.abs(back - np.log(np.cosh(lam)))) <= 1e-6


def test_mdp_rate_examples():
    r = walk_mdp_rate(torus_rotation())
    assert r.params["a"] == pytest.approx(2 / 3, abs=1e-12)
    assert r(2.0) == pytest.approx(3.0, abs=1e-12)
    r = walk_mdp_rate(constant_field(0.5))
    t = np.linspace(-3, 3, 13)
    assert r(t) == pytest.approx(t * t / 2)
    assert r(0.0) == 0 and np.all(r(t) >= 0)
    with pytest.raises(DegenerateVarianceError):
        walk_mdp_rate(constant_field(1.0))


def test_variance_constant_orbit_average():
    assert walk_variance_constant(torus_rotation(integrator="orbit-average", nodes=100_000)) == \
        pytest.approx(2 / 3, abs=1e-3)
