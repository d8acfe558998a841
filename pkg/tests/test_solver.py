import numpy as np
import pytest

from jointdiag import (DomainError, SymmetricMatrixSet, SolverConfig,
                       SynthConfig, approx_hessian_solve, backtracking_search,
                       gamma, gen_synthetic, loss, loss_at,
                       quadratic_rate_check, relative_gradient, solve,
                       transform_set, whitener)
from jointdiag.criterion import loss_incremental, sum_logdet
from jointdiag.solver import (CONVERGED, GRADIENT_DESCENT, LINE_SEARCH_FAILED,
                              MAX_ITER_REACHED, SolverTrace, TraceRecord)
from conftest import random_invertible, random_spd_set


@pytest.fixture(scope="module")
def exact_set():
    cset, _ = gen_synthetic(SynthConfig(n=50, p=10, sigma=0.0, seed=3))
    return cset


@pytest.fixture(scope="module")
def exact_runs(exact_set):
    b0 = whitener(exact_set)
    qn = solve(exact_set, b0, SolverConfig(grad_tol=1e-12, max_iter=50))
    gd = solve(exact_set, b0, SolverConfig(grad_tol=1e-12, max_iter=20000,
                                           method=GRADIENT_DESCENT))
    return qn, gd


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(max_iter=0)
    with pytest.raises(ValueError):
        SolverConfig(grad_tol=0.0)
    with pytest.raises(ValueError):
        SolverConfig(max_halvings=0)
    with pytest.raises(ValueError):
        SolverConfig(method="newton")


def test_diagonal_set_converges_immediately(rng):
    cset = SymmetricMatrixSet(
        np.stack([np.diag(rng.uniform(0.5, 2, 4)) for _ in range(5)]))
    res = solve(cset)
    assert res.status == CONVERGED
    assert res.n_iter == 0
    assert res.grad_norm == 0.0 and res.loss == 0.0


def test_rejects_non_spd():
    cset = SymmetricMatrixSet([np.eye(2), [[1.0, 2.0], [2.0, 1.0]]])
    with pytest.raises(DomainError, match=r"\[1\]"):
        solve(cset)


def test_quasi_newton_exact_set(exact_runs):
    qn, _ = exact_runs
    assert qn.status == CONVERGED
    assert qn.grad_norm < 1e-12
    assert qn.n_iter <= 50
    assert qn.loss < 1e-14


def test_gradient_descent_reaches_same_minimum(exact_runs):
    qn, gd = exact_runs
    assert gd.status == CONVERGED
    assert abs(gd.loss - qn.loss) < 1e-10
    assert gd.n_iter > qn.n_iter


def test_final_iterations_take_full_steps(exact_runs):
    qn, _ = exact_runs
    tail = qn.trace.records[-3:]
    assert all(r.step_size == 1.0 and r.halvings == 0 for r in tail)


def test_trace_invariants(exact_runs):
    for res in exact_runs:
        losses = res.trace.losses
        assert np.all(np.diff(losses) <= 0)
        assert all(r.loss_change < 0 for r in res.trace.records[1:])
        steps = res.trace.column("step_size")[1:]
        k = -np.log2(steps)
        assert np.all(k == np.round(k)) and np.all(k >= 0)
        assert np.all(np.diff(res.trace.column("wall_time")) >= 0)
        assert res.trace.init_time >= 0


def test_final_b_is_consistent(exact_set, exact_runs):
    for res in exact_runs:
        b = res.b.b
        assert res.b.log_abs_det == pytest.approx(np.linalg.slogdet(b)[1],
                                                  rel=1e-8)
        assert loss_at(exact_set, b) == pytest.approx(res.loss, abs=1e-13)


def test_incremental_and_direct_loss_agree_along_run(rng):
    cset, _ = gen_synthetic(SynthConfig(n=20, p=6, sigma=0.1, seed=5))
    b0 = whitener(cset)
    logdet_c = sum_logdet(cset)
    for k in (1, 3, 8, 20):
        res = solve(cset, b0, SolverConfig(max_iter=k, grad_tol=1e-14))
        dset = transform_set(cset, res.b)
        inc = loss_incremental(dset.diagonals(), res.b.log_abs_det, logdet_c)
        assert inc == pytest.approx(loss(dset), rel=1e-9)
        assert res.loss == pytest.approx(loss(dset), rel=1e-9)


def test_max_iter_status(exact_set):
    res = solve(exact_set, whitener(exact_set), SolverConfig(max_iter=2))
    assert res.status == MAX_ITER_REACHED
    assert res.n_iter == 2
    assert len(res.trace) == 3


def test_record_trace_off_keeps_endpoints(exact_set):
    res = solve(exact_set, whitener(exact_set),
                SolverConfig(max_iter=5, record_trace=False))
    assert [r.iteration for r in res.trace.records] == [0, 5]


def test_line_search_failed_status(rng):
    cset = random_spd_set(rng, 10, 4)
    res = solve(cset, None, SolverConfig(grad_tol=1e-300, max_iter=500))
    assert res.status == LINE_SEARCH_FAILED
    assert res.grad_norm < 1e-12


def test_deterministic(exact_set):
    cfg = SolverConfig(max_iter=30)
    r1 = solve(exact_set, whitener(exact_set), cfg)
    r2 = solve(exact_set, whitener(exact_set), cfg)
    for a, b in zip(r1.trace.records, r2.trace.records):
        assert (a.loss, a.grad_norm, a.step_size, a.halvings) == \
               (b.loss, b.grad_norm, b.step_size, b.halvings)
    assert np.array_equal(r1.b.b, r2.b.b)


def test_equivariance(rng):
    cset = random_spd_set(rng, 15, 5)
    m = random_invertible(rng, 5, scale=0.5)
    mixed = SymmetricMatrixSet(transform_set(cset, m).data)
    cfg = SolverConfig(grad_tol=1e-11)
    direct = solve(cset, m, cfg)
    relative = solve(mixed, None, cfg)
    assert direct.n_iter == relative.n_iter
    np.testing.assert_allclose(relative.b.b @ m, direct.b.b, rtol=1e-6,
                               atol=1e-8)
    assert abs(loss_at(cset, relative.b.b @ m) - direct.loss) < 1e-8


# backtracking


def test_backtracking_zero_direction_fails(rng):
    dset = transform_set(random_spd_set(rng, 4, 3), np.eye(3))
    res = backtracking_search(dset, np.zeros((3, 3)), loss(dset))
    assert not res.success


def test_backtracking_rejects_singular_full_step():
    d = np.array([[[2.0, 1.5], [1.5, 2.0]]])
    x = np.array([[0.0, 1.0], [1.0, 0.0]])
    res = backtracking_search(d, x, loss(d))
    assert res.success
    assert res.step_size == 0.5 and res.halvings == 1
    new = transform_set(SymmetricMatrixSet(d), res.update)
    np.testing.assert_allclose(new.data[0], [[1.0, -0.125], [-0.125, 1.0]])
    assert loss(d) + res.loss_change == pytest.approx(loss(new), rel=1e-12)


def test_backtracking_quasi_newton_full_step_near_solution(exact_set,
                                                           exact_runs):
    qn, _ = exact_runs
    # restart a few iterations before the end
    b = solve(exact_set, whitener(exact_set),
              SolverConfig(max_iter=qn.n_iter - 2)).b
    dset = transform_set(exact_set, b)
    x = approx_hessian_solve(gamma(dset), relative_gradient(dset))
    res = backtracking_search(dset, x, loss(dset))
    assert res.success and res.step_size == 1.0


def test_backtracking_respects_max_halvings(rng):
    dset = transform_set(random_spd_set(rng, 4, 3), np.eye(3))
    g = relative_gradient(dset)
    # ascent direction: no step decreases the loss
    res = backtracking_search(dset, -g, loss(dset), max_halvings=5)
    assert not res.success


# rate check


def _trace(grads):
    return SolverTrace([TraceRecord(i, 1.0, g, 1.0, 0, 0.0)
                        for i, g in enumerate(grads)])


def test_rate_check_quadratic():
    rep = quadratic_rate_check(_trace([1e-1, 1e-2, 1e-4, 1e-8, 1e-16]))
    assert rep.conclusive and rep.quadratic
    assert rep.order == pytest.approx(2.0, rel=1e-6)
    assert rep.constant == pytest.approx(1.0)


def test_rate_check_linear():
    rep = quadratic_rate_check(_trace(1e-4 * 0.5 ** np.arange(20)))
    assert rep.conclusive and not rep.quadratic
    assert rep.order == pytest.approx(1.0, rel=1e-3)


def test_rate_check_constant_inconclusive():
    assert not quadratic_rate_check(_trace([1e-4] * 10)).conclusive


def test_rate_check_too_few_points():
    assert not quadratic_rate_check(_trace([1.0, 1e-4])).conclusive
