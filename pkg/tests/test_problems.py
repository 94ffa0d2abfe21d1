"""Problem-family checks against independent naive oracles.

The oracle helpers below recompute everything with scalar loops and their own
formulas (no calls into the library's vectorized paths), so the fast
inner-product implementations are cross-checked by a genuinely separate route.
"""

import math

import numpy as np
import pytest

from gradstep.problems import (
    KIND_LEAST_SQUARES,
    KIND_LOGISTIC,
    FiniteSumProblem,
    OptimumUnavailableError,
    batch_stats,
    distance_sq_to_solution,
    full_gradient,
    full_value,
    generate_consistent_linear_system,
    generate_logistic_problem,
    load_problem,
    optimum_info_exact,
    per_sample_gradient,
    per_sample_value,
    perturb_targets,
    save_problem,
    two_quadratic_1d,
    with_exact_optimum,
)
from gradstep.rng import Xoshiro256


def _oracle_sigmoid(z):
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def _oracle_value(kind, a, bi, x):
    z = sum(float(aj) * float(xj) for aj, xj in zip(a, x))
    if kind == KIND_LEAST_SQUARES:
        return 0.5 * (z - bi) ** 2
    h = _oracle_sigmoid(z)
    return -(bi * math.log(h) + (1.0 - bi) * math.log(1.0 - h))


def _oracle_gradient(kind, a, bi, x):
    z = sum(float(aj) * float(xj) for aj, xj in zip(a, x))
    factor = (z - bi) if kind == KIND_LEAST_SQUARES else (_oracle_sigmoid(z) - bi)
    return np.array([factor * float(aj) for aj in a])


def _oracle_batch(kind, A, b, x, idx, x_star=None):
    """Scalar-loop batch statistics; the independent route for criterion checks."""
    n = len(idx)
    grads = [_oracle_gradient(kind, A[i], b[i], x) for i in idx]
    out = {
        "mean_grad": sum(grads) / n,
        "mean_sq": sum(float(g @ g) for g in grads) / n,
        "mean_value": sum(_oracle_value(kind, A[i], b[i], x) for i in idx) / n,
    }
    if x_star is not None:
        s = [_oracle_gradient(kind, A[i], b[i], x_star) for i in idx]
        corr = [g - si for g, si in zip(grads, s)]
        out["corrected_mean_grad"] = sum(corr) / n
        out["corrected_mean_sq"] = sum(float(c @ c) for c in corr) / n
        out["mean_value_at_opt"] = sum(_oracle_value(kind, A[i], b[i], x_star) for i in idx) / n
        out["mean_gap"] = out["mean_value"] - out["mean_value_at_opt"] - float(
            (sum(s) / n) @ (np.asarray(x) - x_star)
        )
    return out


def _rel_close(a, b, tol):
    scale = max(abs(a), abs(b), 1e-300)
    return abs(a - b) <= tol * scale


# ---------------------------------------------------------------- values/gradients

def test_least_squares_value_trivial():
    p = FiniteSumProblem(KIND_LEAST_SQUARES, np.array([[1.0, 0.0]]), np.array([0.0]))
    assert per_sample_value(p, np.array([2.0, 0.0]), 0) == 2.0
    assert per_sample_gradient(p, np.array([2.0, 0.0]), 0).tolist() == [2.0, 0.0]


def test_logistic_value_trivial():
    p = FiniteSumProblem(KIND_LOGISTIC, np.array([[1.0, 0.0]]), np.array([1.0]))
    assert abs(per_sample_value(p, np.zeros(2), 0) - math.log(2.0)) < 1e-15
    g = per_sample_gradient(p, np.zeros(2), 0)
    assert abs(g[0] + 0.5) < 1e-15 and g[1] == 0.0


def test_value_zero_at_planted_solution():
    p = generate_consistent_linear_system(6, 3, seed=3, normalize=True)
    xs = p.optimum.x_star
    for i in range(p.sample_count):
        assert per_sample_value(p, xs, i) == 0.0
        assert np.all(per_sample_gradient(p, xs, i) == 0.0)


def test_index_and_finiteness_errors():
    p = generate_consistent_linear_system(4, 2, seed=9, normalize=False)
    with pytest.raises(IndexError):
        per_sample_value(p, np.zeros(2), 4)
    with pytest.raises(ValueError):
        per_sample_gradient(p, np.array([np.nan, 0.0]), 0)
    with pytest.raises(ValueError):
        batch_stats(p, np.zeros(2), [])


def test_logistic_labels_validated():
    with pytest.raises(ValueError):
        FiniteSumProblem(KIND_LOGISTIC, np.eye(2), np.array([0.5, 1.0]))


def test_gradients_match_finite_differences():
    gen = Xoshiro256(1001)
    for maker in (
        lambda: generate_consistent_linear_system(12, 4, seed=21, normalize=False),
        lambda: generate_logistic_problem(12, 4, seed=22, normalize=False),
    ):
        p = maker()
        for _ in range(20):
            x = 2.0 * gen.normals(p.dimension)
            i = gen.integer_below(p.sample_count)
            g = per_sample_gradient(p, x, i)
            for j in range(p.dimension):
                h = 1e-6 * (1.0 + abs(x[j]))
                xp, xm = x.copy(), x.copy()
                xp[j] += h
                xm[j] -= h
                fd = (per_sample_value(p, xp, i) - per_sample_value(p, xm, i)) / (2 * h)
                assert _rel_close(fd, g[j], 1e-5) or abs(fd - g[j]) < 1e-8


# ---------------------------------------------------------------- batch statistics

def test_batch_stats_hand_case():
    p = FiniteSumProblem(KIND_LEAST_SQUARES, np.array([[1.0, 0.0], [0.0, 1.0]]), np.zeros(2))
    st = batch_stats(p, np.array([1.0, 1.0]), [0, 1])
    assert st.mean_grad.tolist() == [0.5, 0.5]
    assert st.mean_sq_grad_norm == 1.0
    assert st.mean_value == 0.5


def test_batch_stats_single_logistic_index_degenerates():
    p = generate_logistic_problem(8, 3, seed=5, normalize=False)
    x = np.array([0.3, -0.2, 0.1])
    st = batch_stats(p, x, [4])
    g = per_sample_gradient(p, x, 4)
    assert np.allclose(st.mean_grad, g, rtol=1e-15, atol=0)
    assert _rel_close(st.mean_sq_grad_norm, float(g @ g), 1e-15)
    assert _rel_close(st.mean_value, per_sample_value(p, x, 4), 1e-15)


def test_batch_stats_matches_naive_loop_least_squares():
    p = generate_consistent_linear_system(20, 5, seed=11, normalize=True)
    gen = Xoshiro256(77)
    x = gen.normals(5)
    idx = [int(v) for v in gen.integers_below(20, 12)]
    st = batch_stats(p, x, idx)
    ora = _oracle_batch(KIND_LEAST_SQUARES, p.A, p.b, x, idx, p.optimum.x_star)
    assert np.allclose(st.mean_grad, ora["mean_grad"], rtol=1e-12, atol=1e-15)
    assert _rel_close(st.mean_sq_grad_norm, ora["mean_sq"], 1e-12)
    assert _rel_close(st.mean_value, ora["mean_value"], 1e-12)
    assert np.allclose(st.corrected_mean_grad, ora["corrected_mean_grad"], rtol=1e-12, atol=1e-15)
    assert _rel_close(st.corrected_mean_sq_grad_norm, ora["corrected_mean_sq"], 1e-12)
    assert abs(st.mean_gap - ora["mean_gap"]) < 1e-12 * max(1.0, abs(ora["mean_gap"]))


def test_batch_stats_matches_naive_loop_logistic():
    p = generate_logistic_problem(50, 10, seed=13, normalize=False)
    gen = Xoshiro256(78)
    x = gen.normals(10)
    idx = [int(v) for v in gen.integers_below(50, 16)]
    st = batch_stats(p, x, idx)
    ora = _oracle_batch(KIND_LOGISTIC, p.A, p.b, x, idx)
    assert np.allclose(st.mean_grad, ora["mean_grad"], rtol=1e-12, atol=1e-15)
    assert _rel_close(st.mean_sq_grad_norm, ora["mean_sq"], 1e-12)
    assert _rel_close(st.mean_value, ora["mean_value"], 1e-12)


def test_fast_norm_path_at_accept_scale():
    # 200 x 50 instances, both families, relative 1e-12 against the scalar loop
    ls = generate_consistent_linear_system(200, 50, seed=101, normalize=True)
    lo = generate_logistic_problem(200, 50, seed=102, normalize=False, flip_prob=0.2)
    gen = Xoshiro256(103)
    for p in (ls, lo):
        x = gen.normals(50)
        idx = [int(v) for v in gen.integers_below(200, 64)]
        st = batch_stats(p, x, idx)
        ora = _oracle_batch(p.kind, p.A, p.b, x, idx)
        assert _rel_close(st.mean_sq_grad_norm, ora["mean_sq"], 1e-12)


def test_unbiasedness_of_uniform_sampling():
    for p in (
        generate_consistent_linear_system(15, 4, seed=31, normalize=False),
        generate_logistic_problem(15, 4, seed=32, normalize=True),
    ):
        gen = Xoshiro256(33)
        for _ in range(5):
            x = gen.normals(4)
            mean_of_samples = sum(
                per_sample_gradient(p, x, i) for i in range(p.sample_count)
            ) / p.sample_count
            full = full_gradient(p, x)
            assert np.allclose(mean_of_samples, full, rtol=1e-12, atol=1e-15)
            st = batch_stats(p, x, list(range(p.sample_count)))
            assert np.allclose(st.mean_grad, full, rtol=1e-12, atol=1e-15)
            assert _rel_close(st.mean_value, full_value(p, x), 1e-12)


# ---------------------------------------------------------------- generators

def test_generator_invariants_small_and_wide():
    for rows, cols, seed in ((5, 2, 1), (100, 1000, 7)):
        p = generate_consistent_linear_system(rows, cols, seed=seed, normalize=True)
        norms = np.sum(p.A * p.A, axis=1)
        assert np.max(np.abs(norms - 1.0)) <= 1e-12
        assert float(np.linalg.norm(p.A @ p.optimum.x_star - p.b)) == 0.0
        assert np.all(p.optimum.per_sample_grad_at_opt == 0.0)
        assert np.all(p.optimum.per_sample_infimum == 0.0)
        assert p.optimum.f_at_opt == 0.0


def test_generator_determinism():
    a = generate_consistent_linear_system(8, 3, seed=55, normalize=True)
    b = generate_consistent_linear_system(8, 3, seed=55, normalize=True)
    assert a.A.tolist() == b.A.tolist()
    assert a.b.tolist() == b.b.tolist()
    assert a.optimum.x_star.tolist() == b.optimum.x_star.tolist()
    c = generate_consistent_linear_system(8, 3, seed=56, normalize=True)
    assert a.A.tolist() != c.A.tolist()


def test_logistic_generator_labels_and_flips():
    p = generate_logistic_problem(40, 6, seed=71, normalize=True)
    assert set(np.unique(p.b)).issubset({0.0, 1.0})
    q = generate_logistic_problem(40, 6, seed=71, normalize=True, flip_prob=0.5)
    assert q.b.tolist() != p.b.tolist()
    assert p.optimum is None and q.optimum is None


def test_perturb_targets_breaks_interpolation():
    p = generate_consistent_linear_system(10, 3, seed=81, normalize=True)
    q = perturb_targets(p, 0.5, seed=82)
    assert q.optimum is None
    info = optimum_info_exact(q)
    assert float(np.linalg.norm(q.A @ info.x_star - q.b)) > 1e-3
    assert np.any(info.per_sample_grad_at_opt != 0.0)


# ---------------------------------------------------------------- optimum oracles

def test_optimum_exact_two_sample_closed_form():
    p = two_quadratic_1d()
    info = p.optimum
    assert info.x_star.tolist() == [0.0]
    assert info.f_at_opt == 0.5
    assert info.per_sample_infimum.tolist() == [0.0, 0.0]
    assert info.per_sample_grad_at_opt.tolist() == [[-1.0], [1.0]]


def test_optimum_exact_normal_equations_matches_lstsq_oracle():
    p = perturb_targets(generate_consistent_linear_system(12, 5, seed=91, normalize=False), 1.0, 92)
    info = optimum_info_exact(p)
    expected, *_ = np.linalg.lstsq(p.A, p.b, rcond=None)
    assert np.allclose(info.x_star, expected, rtol=1e-12, atol=1e-14)
    # gradient of the full objective vanishes at the least-squares solution
    assert float(np.linalg.norm(full_gradient(p, info.x_star))) < 1e-10


def test_separable_logistic_optimum_unavailable():
    p = generate_logistic_problem(10, 4, seed=41, normalize=False)
    with pytest.raises(OptimumUnavailableError):
        optimum_info_exact(p)


# ---------------------------------------------------------------- file format

def test_problem_file_round_trip(tmp_path):
    p = generate_consistent_linear_system(7, 3, seed=61, normalize=True)
    path = tmp_path / "p.txt"
    save_problem(p, str(path))
    q = load_problem(str(path))
    assert q.kind == p.kind
    assert q.A.tolist() == p.A.tolist()
    assert q.b.tolist() == p.b.tolist()
    assert q.rows_normalized
    assert q.optimum is not None
    assert q.optimum.x_star.tolist() == p.optimum.x_star.tolist()
    # rebuilt oracle is exactly interpolating: the matvec reproduces b bit-for-bit
    assert np.all(q.optimum.per_sample_grad_at_opt == 0.0)


def test_problem_file_header_and_shape_errors(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("quux 2 2\n1 0\n0 1\n0 0\n")
    with pytest.raises(ValueError):
        load_problem(str(path))
    path.write_text("ls 2 2\n1 0\n0 1\n")
    with pytest.raises(ValueError):
        load_problem(str(path))


def test_logistic_file_round_trip(tmp_path):
    p = generate_logistic_problem(9, 4, seed=62, normalize=False, flip_prob=0.3)
    path = tmp_path / "q.txt"
    save_problem(p, str(path))
    q = load_problem(str(path))
    assert q.kind == KIND_LOGISTIC
    assert q.b.tolist() == p.b.tolist()
    assert q.optimum is None


# ---------------------------------------------------------------- distances

def test_distance_point_case():
    p = generate_consistent_linear_system(10, 4, seed=51, normalize=True)
    x = p.optimum.x_star + np.array([1.0, 0.0, 0.0, 0.0])
    assert abs(distance_sq_to_solution(p, x) - 1.0) < 1e-12


def test_distance_solution_set_case_matches_projection_oracle():
    p = generate_consistent_linear_system(6, 20, seed=52, normalize=True)
    gen = Xoshiro256(53)
    for _ in range(5):
        x = gen.normals(20)
        got = distance_sq_to_solution(p, x)
        # oracle: explicit projection via the pseudoinverse
        z = np.linalg.pinv(p.A) @ (p.A @ x - p.b)
        assert _rel_close(got, float(z @ z), 1e-9)
        # any solution-set member has distance 0
        assert got >= 0.0
    assert distance_sq_to_solution(p, p.optimum.x_star) < 1e-24


def test_distance_nan_without_optimum():
    p = generate_logistic_problem(5, 3, seed=54, normalize=False)
    assert math.isnan(distance_sq_to_solution(p, np.zeros(3)))


def test_with_exact_optimum_attaches_oracle():
    p = perturb_targets(generate_consistent_linear_system(8, 3, seed=63, normalize=True), 0.3, 64)
    q = with_exact_optimum(p)
    assert q.optimum is not None
    assert with_exact_optimum(q) is q
