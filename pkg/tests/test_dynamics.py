import math
import warnings
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ksgrain import dynamics as d
from ksgrain.errors import DomainError, UndefinedDerivativeError, ValidationError

GOLDEN = (math.sqrt(5) - 1) / 2
LAMBDA_CAT = math.log((3 + math.sqrt(5)) / 2)

unit = st.floats(0, 1, exclude_max=True)


def test_apply_examples():
    assert np.array_equal(d.apply(d.cat(), (0.0, 0.0)), [0.0, 0.0])
    assert d.apply(d.doubling(), 0.3) == pytest.approx(0.6)
    assert np.allclose(d.apply(d.baker(), (0.25, 0.5)), [0.5, 0.25])
    with pytest.raises(DomainError):
        d.apply(d.cat(), (1.0, 0.2))
    with pytest.raises(DomainError):
        d.apply(d.cat(), (math.nan, 0.2))
    with pytest.raises(DomainError):
        d.apply(d.doubling(), -0.1)


def test_baker_against_hand_formula():
    rng = np.random.default_rng(3)
    q, p = rng.random(1000), rng.random(1000)
    q2, p2 = d.baker().step(q, p)
    for a, b, x, y in zip(q, p, q2, p2):
        fl = math.floor(2 * a)
        assert x == 2 * a - fl and y == (b + fl) / 2


def test_parse_map_spec():
    assert d.parse_map_spec("baker") == d.baker()
    assert d.parse_map_spec("standard:K=0.97").params == (0.97,)
    assert d.parse_map_spec("rotation:alpha=0.618").params == (0.618,)
    assert d.parse_map_spec("Doubling").dimension == 1
    for bad in ["tent", "standard", "standard:k=1", "rotation:alpha=x", "cat:K=1", "standard:K"]:
        with pytest.raises(ValidationError):
            d.parse_map_spec(bad)
    for m in [d.baker(), d.cat(), d.standard(1.5), d.rotation(0.25), d.doubling()]:
        assert d.parse_map_spec(m.spec) == m


def test_tangent_step_examples():
    f = d.tangent_step(d.cat(), d.identity_frame(d.cat(), (0.3, 0.7)))
    assert np.array_equal(f.jacobian, [[2, 1], [1, 1]])
    f = d.tangent_step(d.rotation(GOLDEN), d.identity_frame(d.rotation(GOLDEN), (0.3, 0.7)))
    assert np.array_equal(f.jacobian, np.eye(2))
    assert f.point[0] == pytest.approx(0.3 + GOLDEN)
    f = d.tangent_step(d.doubling(), d.identity_frame(d.doubling(), 0.3))
    assert f.jacobian[0, 0] == 2
    with pytest.raises(UndefinedDerivativeError):
        d.tangent_step(d.doubling(), d.identity_frame(d.doubling(), 0.5))
    with pytest.raises(UndefinedDerivativeError):
        d.tangent_step(d.baker(), d.identity_frame(d.baker(), (0.5, 0.1)))


def test_standard_map_jacobian_matches_finite_differences():
    m = d.standard(1.3)
    rng = np.random.default_rng(1)
    for q, p in rng.uniform(0.1, 0.9, (20, 2)):
        J = m.jacobian(q, p)
        eps = 1e-7
        num = np.zeros((2, 2))
        for k in range(2):
            dx = np.zeros(2)
            dx[k] = eps
            a = np.array(m.step(np.array([q + dx[0]]), np.array([p + dx[1]]))).ravel()
            b = np.array(m.step(np.array([q - dx[0]]), np.array([p - dx[1]]))).ravel()
            diff = (a - b + 0.5) % 1.0 - 0.5
            num[:, k] = diff / (2 * eps)
        assert np.allclose(J, num, atol=1e-5)


@settings(max_examples=200, deadline=None)
@given(unit, unit, st.sampled_from(["baker", "cat", "standard:K=0.97", "standard:K=5", "rotation:alpha=0.3"]))
def test_area_preservation(q, p, spec):
    m = d.parse_map_spec(spec)
    if m.name == "baker" and 2 * q == 1:
        return
    assert abs(abs(d.jacobian_determinant(m, q, p)) - 1) <= 1e-10


@settings(max_examples=200, deadline=None)
@given(unit, unit, st.sampled_from(["baker", "cat", "standard:K=0.97", "standard:K=5", "rotation:alpha=0.3", "doubling"]))
def test_images_stay_in_domain(q, p, spec):
    m = d.parse_map_spec(spec)
    q2, p2 = m.step(np.array([q]), np.array([p]))
    assert 0 <= q2[0] < 1 and 0 <= p2[0] < 1


def test_doubling_pushforward_preserves_uniform_density():
    # (Pf)(x) = sum over preimages y of f(y)/|T'(y)|; uniform f stays uniform
    x = np.linspace(0, 1, 101, endpoint=False)
    pre = [x / 2, (x + 1) / 2]
    assert np.all(d.doubling().step(pre[0], 0 * x)[0] == x)
    assert np.allclose(d.doubling().step(pre[1], 0 * x)[0], x)
    Pf = sum(np.ones_like(y) / 2.0 for y in pre)
    assert np.allclose(Pf, 1.0)


def test_cat_periodic_points():
    assert [tuple(v) for v in d.orbit(d.cat(), (0.5, 0.5), 3)] == [(0.5, 0.5), (0.5, 0.0), (0.0, 0.5), (0.5, 0.5)]
    # exact check on rationals with denominator 5: every point returns within 10 steps
    for a in range(5):
        for b in range(5):
            x = (Fraction(a, 5), Fraction(b, 5))
            y, n = x, 0
            while True:
                y = ((2 * y[0] + y[1]) % 1, (y[0] + y[1]) % 1)
                n += 1
                if y == x:
                    break
            assert n <= 10


def test_orbit_examples():
    x = (0.2, 0.7)
    assert len(d.orbit(d.cat(), x, 0)) == 1
    orb = d.orbit(d.rotation(0.0), x, 5)
    assert len(orb) == 6 and all(np.array_equal(o, x) for o in orb)
    assert d.orbit(d.doubling(), 0.1, 3) == pytest.approx([0.1, 0.2, 0.4, 0.8])
    orb2 = d.orbit(d.cat(), x, 3, stride=2)
    ref = d.orbit(d.cat(), x, 6)
    assert all(np.allclose(a, b) for a, b in zip(orb2, ref[::2]))
    with pytest.raises(ValidationError):
        d.orbit(d.cat(), x, -1)
    with pytest.raises(ValidationError):
        d.orbit(d.cat(), x, 2, stride=0)


def test_precision_horizon_warning():
    with pytest.warns(RuntimeWarning, match="float64 horizon"):
        d.orbit(d.doubling(), 0.1, 60)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        d.orbit(d.doubling(), 0.1, 50)
        d.orbit(d.cat(), (0.1, 0.2), 500)


@pytest.mark.parametrize(
    "m, point, expected, tol",
    [
        (d.cat(), (0.1234, 0.5678), LAMBDA_CAT, 0.01 * LAMBDA_CAT),
        (d.doubling(), 0.1234, math.log(2), 0.01 * math.log(2)),
        (d.baker(), (0.1234, 0.5678), math.log(2), 0.01 * math.log(2)),
        (d.rotation(GOLDEN), (0.1234, 0.5678), 0.0, 1e-3),
    ],
)
def test_lyapunov_oracles(m, point, expected, tol):
    assert abs(d.lyapunov_max(m, point, 10_000, rng_seed=0) - expected) <= tol


def test_lyapunov_seed_point_invariance_and_determinism():
    vals = [d.lyapunov_max(d.cat(), pt, 5000, 1) for pt in [(0.1, 0.2), (0.7, 0.3), (0.33, 0.91)]]
    assert max(vals) - min(vals) <= 0.01 * LAMBDA_CAT
    sm = [d.lyapunov_max(d.standard(8.0), pt, 20000, 1) for pt in [(0.1, 0.2), (0.7, 0.3)]]
    assert abs(sm[0] - sm[1]) <= 0.01 * max(sm)
    assert d.lyapunov_max(d.cat(), (0.1, 0.2), 2000, 5) == d.lyapunov_max(d.cat(), (0.1, 0.2), 2000, 5)
    with pytest.raises(ValidationError):
        d.lyapunov_max(d.cat(), (0.1, 0.2), 999)


def test_lyapunov_restarts_off_discontinuity():
    # 0.5 sits exactly on the cut; the estimator perturbs and carries on
    assert d.lyapunov_max(d.doubling(), 0.5, 2000) == pytest.approx(math.log(2), rel=1e-9)
