import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import central_gradient, central_jacobian, random_problem
from exactdesign.criteria import (
    Criterion,
    DesignProblem,
    build_state,
    hessian,
    local_norm,
    objective,
    pair_derivatives,
)
from exactdesign.errors import DomainError, RankError

CRITERIA = [Criterion.D_OPTIMAL, Criterion.A_OPTIMAL]


def test_d_criterion_scalar_case():
    p = DesignProblem(np.array([[1.0], [1.0]]), 2)
    s = build_state(p, "D", [1.0, 1.0])
    assert s.f_val == pytest.approx(-math.log(2))
    np.testing.assert_allclose(s.grad, [-0.5, -0.5])


def test_a_criterion_identity_rows():
    p = DesignProblem(np.eye(2), 2)
    s = build_state(p, "A", [1.0, 1.0])
    assert s.f_val == pytest.approx(math.log(2))
    np.testing.assert_allclose(s.grad, [-0.5, -0.5])


def test_d_hessian_ones_matrix():
    p = DesignProblem(np.array([[1.0], [1.0]]), 2)
    s = build_state(p, "D", [1.0, 1.0])
    np.testing.assert_allclose(s.M1, 0.5 * np.ones((2, 2)))
    np.testing.assert_allclose(hessian(s), 0.25 * np.ones((2, 2)))


def test_singular_design_raises():
    p = DesignProblem(np.eye(2), 1)
    with pytest.raises(DomainError):
        build_state(p, "D", [1.0, 0.0])
    with pytest.raises(DomainError):
        build_state(p, "A", [0.0, 0.0])


def test_rank_deficient_matrix_rejected():
    with pytest.raises(RankError):
        DesignProblem(np.array([[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]]), 2)


@pytest.mark.parametrize("criterion", CRITERIA)
def test_gradient_matches_finite_differences(rng, criterion):
    p = random_problem(rng, 6, 2)
    x = np.ones(6)
    s = build_state(p, criterion, x)
    fd = central_gradient(lambda y: objective(p, criterion, y), x, 1e-5)
    rel = np.max(np.abs(fd - s.grad)) / np.max(np.abs(s.grad))
    assert rel <= 1e-5


@pytest.mark.parametrize("criterion", CRITERIA)
def test_hessian_matches_finite_differences(rng, criterion):
    p = random_problem(rng, 6, 2)
    x = rng.uniform(0.5, 2.0, 6)
    H = hessian(build_state(p, criterion, x))
    fd = central_jacobian(lambda y: build_state(p, criterion, y).grad, x, 1e-5)
    assert np.max(np.abs(fd - H)) <= 1e-4 * (1 + np.max(np.abs(H)))
    np.testing.assert_allclose(H, H.T)
    assert np.linalg.eigvalsh(H).min() >= -1e-10 * np.abs(H).max()


@pytest.mark.parametrize("criterion", CRITERIA)
def test_hessian_positive_on_tangent_space_for_small_m(rng, criterion):
    # m <= n(n+1)/2 so the Hessian has no null directions on the simplex tangent
    p = random_problem(rng, 5, 3)
    H = hessian(build_state(p, criterion, rng.uniform(0.5, 1.5, 5)))
    Q = np.linalg.qr(np.vstack([np.ones(5), rng.standard_normal((4, 5))]).T)[0][:, 1:]
    assert np.linalg.eigvalsh(Q.T @ H @ Q).min() > 0


def test_local_norm_zero_and_annihilated_direction():
    p = DesignProblem(np.array([[1.0], [1.0]]), 2)
    s = build_state(p, "D", [1.0, 1.0])
    assert local_norm(s, np.zeros(2)) == 0.0
    assert local_norm(s, np.array([1.0, -1.0])) == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("criterion", CRITERIA)
def test_local_norm_matches_explicit_product(rng, criterion):
    p = random_problem(rng, 9, 3)
    s = build_state(p, criterion, rng.uniform(0.2, 2.0, 9))
    H = hessian(s)
    for _ in range(5):
        d = rng.standard_normal(9)
        expected = math.sqrt(max(d @ H @ d, 0.0))
        assert local_norm(s, d) == pytest.approx(expected, rel=1e-10)
        assert local_norm(s, d, H) == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize("criterion", CRITERIA)
def test_large_m_uses_on_demand_rows(rng, criterion):
    p = random_problem(rng, 30, 3)
    x = rng.uniform(0.1, 1.0, 30)
    full = build_state(p, criterion, x)
    lean = build_state(p, criterion, x, full_matrix_cap=10)
    assert lean.M1 is None and lean.M2 is None
    np.testing.assert_allclose(hessian(lean), hessian(full), rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(lean.m1_rows([3, 7]), full.M1[[3, 7]], rtol=1e-12)
    d = rng.standard_normal(30)
    assert local_norm(lean, d) == pytest.approx(local_norm(full, d), rel=1e-10)


@pytest.mark.parametrize("criterion", CRITERIA)
def test_pair_derivatives_match_full_state(rng, criterion):
    p = random_problem(rng, 7, 3)
    x = rng.uniform(0.3, 1.5, 7)
    s = build_state(p, criterion, x)
    H = hessian(s)
    f, d1, d2 = pair_derivatives(p, criterion, x, 2, 5)
    assert f == pytest.approx(s.f_val, rel=1e-13)
    assert d1 == pytest.approx(s.grad[2] - s.grad[5], rel=1e-10)
    assert d2 == pytest.approx(H[2, 2] + H[5, 5] - 2 * H[2, 5], rel=1e-9)


def test_state_is_read_only(rng):
    p = random_problem(rng, 5, 2)
    s = build_state(p, "A", np.ones(5))
    with pytest.raises(ValueError):
        s.grad[0] = 1.0
    with pytest.raises(AttributeError):
        s.f_val = 0.0


@pytest.mark.parametrize("criterion", CRITERIA)
def test_deterministic(rng, criterion):
    p = random_problem(rng, 8, 3)
    x = rng.uniform(0.1, 1.0, 8)
    a = build_state(p, criterion, x)
    b = build_state(p, criterion, x.copy())
    assert a.f_val == b.f_val
    assert np.array_equal(a.grad, b.grad)


@settings(max_examples=40, deadline=None)
@given(
    seed=st.integers(0, 2**32 - 1),
    c=st.floats(0.05, 20.0),
    criterion=st.sampled_from(CRITERIA),
)
def test_scaling_law(seed, c, criterion):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 4))
    p = random_problem(rng, n + 3, n)
    x = rng.uniform(0.1, 2.0, n + 3)
    f = objective(p, criterion, x)
    shift = n * math.log(c) if criterion is Criterion.D_OPTIMAL else math.log(c)
    assert objective(p, criterion, c * x) == pytest.approx(f - shift, abs=1e-9 * max(1, abs(f)))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), criterion=st.sampled_from(CRITERIA))
def test_gradient_strictly_negative(seed, criterion):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 4))
    m = n + int(rng.integers(0, 6))
    p = random_problem(rng, m, n)
    s = build_state(p, criterion, rng.uniform(0.05, 3.0, m))
    assert np.all(s.grad < 0)
