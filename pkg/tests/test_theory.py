import math

import numpy as np
import pytest

from aroma.diagonal import diag_train, init_diagonal
from aroma.factored import factored_train, init_factored, make_factored
from aroma.linalg import SparseVector, Triplet, kron_quadratic_form, vec
from aroma.synthetic import random_stream, separable_stream
from aroma.theory import (
    bound_holds,
    faroma_objective,
    lemma3_check,
    matnorm_kl,
    matnorm_logpdf,
    thm1_bound,
    thm2_bound,
)
from aroma.trace import RunTrace

from conftest import rand_spd


def gaussian_logpdf_oracle(x, mu, S):
    d = len(x)
    diff = x - mu
    return -0.5 * (d * math.log(2 * math.pi) + math.log(np.linalg.det(S)) + diff @ np.linalg.inv(S) @ diff)


def gaussian_kl_oracle(mu0, S0, mu1, S1):
    S1inv = np.linalg.inv(S1)
    diff = mu1 - mu0
    return 0.5 * (np.trace(S1inv @ S0) + diff @ S1inv @ diff - len(mu0) + math.log(np.linalg.det(S1) / np.linalg.det(S0)))


def comparator_pool(rng, m, n, extra=()):
    base = [rng.uniform(-1, 1, (m, n)) for _ in range(6)]
    return [np.zeros((m, n)), *extra] + base + [0.1 * V for V in base[:3]] + [10 * V for V in base[:3]]


def test_logpdf_standard_normal_at_mean():
    assert matnorm_logpdf([[0.0]], [[0.0]], [[1.0]], [[1.0]]) == pytest.approx(-0.5 * math.log(2 * math.pi), abs=1e-15)


def test_logpdf_at_mean_is_normalizer(rng):
    Om, Lam = rand_spd(rng, 3), rand_spd(rng, 2)
    W = rng.normal(size=(2, 3))
    expected = -3 * math.log(2 * math.pi) - 1.5 * math.log(np.linalg.det(Lam)) - math.log(np.linalg.det(Om))
    assert matnorm_logpdf(W, W, Om, Lam) == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize("m,n", [(1, 1), (2, 2), (2, 3), (3, 1), (3, 3)])
def test_logpdf_matches_vectorized_gaussian(rng, m, n):
    X, W = rng.normal(size=(m, n)), rng.normal(size=(m, n))
    Om, Lam = rand_spd(rng, n), rand_spd(rng, m)
    oracle = gaussian_logpdf_oracle(vec(X), vec(W), np.kron(Om, Lam))
    assert matnorm_logpdf(X, W, Om, Lam) == pytest.approx(oracle, rel=1e-8)


def test_logpdf_integrates_to_one():
    # 1x1 matrix normal with variance Omega * Lambda; trapezoid rule over +-12 sd
    om, lam, mu = 0.7, 1.9, 0.3
    sd = math.sqrt(om * lam)
    xs = np.linspace(mu - 12 * sd, mu + 12 * sd, 20001)
    dens = np.array([math.exp(matnorm_logpdf([[x]], [[mu]], [[om]], [[lam]])) for x in xs])
    assert abs(float(np.sum((dens[1:] + dens[:-1]) * np.diff(xs)) / 2) - 1.0) < 1e-6


def test_logpdf_rejects_non_pd():
    with pytest.raises(ValueError):
        matnorm_logpdf([[0.0]], [[0.0]], [[-1.0]], [[1.0]])


def test_kl_examples():
    P = (np.zeros((1, 1)), np.eye(1), np.eye(1))
    assert matnorm_kl(P, P) == 0.0
    Q = (np.ones((1, 1)), np.eye(1), np.eye(1))
    assert matnorm_kl(P, Q) == pytest.approx(0.5, abs=1e-15)


@pytest.mark.parametrize("m,n", [(1, 1), (1, 3), (2, 2), (2, 3), (3, 2), (3, 3)])
def test_kl_matches_kronecker_gaussian(rng, m, n):
    W, W2 = rng.normal(size=(m, n)), rng.normal(size=(m, n))
    Om, Lam, Om2, Lam2 = rand_spd(rng, n), rand_spd(rng, m), rand_spd(rng, n), rand_spd(rng, m)
    oracle = gaussian_kl_oracle(vec(W), np.kron(Om, Lam), vec(W2), np.kron(Om2, Lam2))
    assert matnorm_kl((W, Om, Lam), (W2, Om2, Lam2)) == pytest.approx(oracle, rel=1e-8, abs=1e-12)


def test_kl_non_negative_and_zero_iff_equal(rng):
    for _ in range(30):
        m, n = rng.integers(1, 4, 2)
        P = (rng.normal(size=(m, n)), rand_spd(rng, n), rand_spd(rng, m))
        Q = (rng.normal(size=(m, n)), rand_spd(rng, n), rand_spd(rng, m))
        assert matnorm_kl(P, Q) > 0
        assert abs(matnorm_kl(P, P)) < 1e-10


def test_objective_candidate_equals_previous(rng):
    Om, Lam = rand_spd(rng, 3), rand_spd(rng, 2)
    prev = make_factored(np.array([[5.0, 0, 0], [0, 0, 0]]), Om, Lam, 0.8)
    q = SparseVector.from_dense([1.0, 0.0])
    p = SparseVector.from_dense([1.0, 0.5, 0.0])
    expected = 2 * 3 / 2 + kron_quadratic_form(q, Lam, p, Om) / (2 * 0.8)
    assert faroma_objective((prev.W, prev.Omega, prev.Lambda), prev, q, p) == pytest.approx(expected, rel=1e-12)


def test_objective_scalar_terms():
    prev = init_factored(1, 1, 1.0)
    one = SparseVector.from_dense([1.0])
    value = faroma_objective((np.zeros((1, 1)), np.eye(1), np.eye(1)), prev, one, one)
    assert value == pytest.approx(1.5, abs=1e-15)


def test_objective_grows_when_omega_inflated(rng):
    prev = make_factored(0.1 * rng.normal(size=(2, 3)), rand_spd(rng, 3), rand_spd(rng, 2), 0.5)
    q = SparseVector.from_dense(rng.normal(size=2))
    p = SparseVector.from_dense(rng.normal(size=3))
    W, Om, Lam = rng.normal(size=(2, 3)), rand_spd(rng, 3), rand_spd(rng, 2)
    low = faroma_objective((W, Om, Lam), prev, q, p)
    high = faroma_objective((W, 10 * Om, Lam), prev, q, p)
    assert math.isfinite(low) and high > low


def test_thm1_small_cases():
    empty = RunTrace("d-aroma", 2, 2, 1.0)
    assert thm1_bound(np.zeros((2, 2)), empty) == 0.0
    one = SparseVector.from_dense([1.0])
    _, trace = diag_train(init_diagonal(1, 1, 1.0), [Triplet(one, one, SparseVector(1))])
    assert thm1_bound(np.zeros((1, 1)), trace) == pytest.approx(1.0)
    assert trace.num_mistakes == 1


def test_thm1_holds_on_random_runs(rng):
    for _ in range(10):
        m, n = rng.integers(1, 6, 2)
        r = 10 ** rng.uniform(-2, 1)
        _, trace = diag_train(init_diagonal(m, n, r), random_stream(rng, m, n, 30))
        for V in comparator_pool(rng, m, n):
            assert bound_holds(trace.num_mistakes, thm1_bound(V, trace))


def test_thm2_small_cases(rng):
    empty = RunTrace("f-aroma-analysis", 2, 3, 1.0, final={"Omega": np.eye(3), "Lambda": np.eye(2)})
    assert thm2_bound(np.zeros((2, 3)), empty) == 0.0
    _, trace = factored_train(init_factored(3, 2, 0.5, "analysis"), random_stream(rng, 3, 2, 30))
    assert thm2_bound(np.zeros((3, 2)), trace) == pytest.approx(trace.num_mistakes)


def test_thm2_holds_on_random_and_separable_runs(rng):
    for i in range(10):
        m, n = rng.integers(1, 6, 2)
        r = 10 ** rng.uniform(-2, 1)
        V_star = rng.normal(size=(m, n))
        stream = list(separable_stream(V_star, 30, seed=i)) if i % 2 else random_stream(rng, m, n, 30)
        _, trace = factored_train(init_factored(m, n, r, "analysis"), stream)
        for V in comparator_pool(rng, m, n, extra=(V_star, 10 * V_star)):
            assert bound_holds(trace.num_mistakes, thm2_bound(V, trace))


def test_thm2_rejects_non_pd_final():
    trace = RunTrace("f-aroma-analysis", 1, 1, 1.0, final={"Omega": np.array([[-1.0]]), "Lambda": np.eye(1)})
    with pytest.raises(ValueError):
        thm2_bound(np.zeros((1, 1)), trace)


def test_lemma3_examples():
    empty = RunTrace("f-aroma-analysis", 1, 1, 1.0, final={"Omega": np.eye(1), "Lambda": np.eye(1)})
    assert tuple(lemma3_check(empty)) == (0.0, 0.0, 0.0, True)
    one = SparseVector.from_dense([1.0])
    _, trace = factored_train(init_factored(1, 1, 1.0, "analysis"), [Triplet(one, one, SparseVector(1))])
    res = lemma3_check(trace)
    assert res.lhs == pytest.approx(0.25)
    assert res.rhs_m == pytest.approx(math.log(2)) and res.rhs_n == pytest.approx(math.log(2))
    assert res.ok


@pytest.mark.parametrize("mode", ["analysis", "standard"])
def test_lemma3_holds_on_random_runs(rng, mode):
    for _ in range(10):
        m, n = rng.integers(1, 7, 2)
        _, trace = factored_train(init_factored(m, n, 10 ** rng.uniform(-2, 1), mode), random_stream(rng, m, n, 50))
        assert lemma3_check(trace).ok


def test_lemma3_needs_post_forms():
    _, trace = diag_train(init_diagonal(1, 1, 1.0), [Triplet(SparseVector.from_dense([1.0]), SparseVector.from_dense([1.0]), SparseVector(1))])
    trace.final = {"Omega": np.eye(1), "Lambda": np.eye(1)}
    with pytest.raises(ValueError):
        lemma3_check(trace)
