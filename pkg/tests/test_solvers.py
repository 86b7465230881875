import numpy as np
import pytest

from gbadmm import GBModel, preset_fcc111, preset_three_burgers
from gbadmm.solvers import (
    AugLagParams,
    Diverged,
    admm_solve,
    alm_solve,
    auglag_eval,
    block_grad,
    minimize_block,
    monotonicity_audit,
    penalty_solve,
    sign_changes,
)
from gbadmm.numkit import fd_gradient


@pytest.fixture(scope="module")
def model():
    return GBModel(*preset_fcc111(2.5))


@pytest.fixture(scope="module")
def admm_run(model):
    return admm_solve(model, keep_iterates=True)


def _nullspace_minimizer(model):
    optimize = pytest.importorskip("scipy.optimize")
    scipy_linalg = pytest.importorskip("scipy.linalg")
    a = np.concatenate(list(model.blocks), axis=1)
    u_p = np.linalg.lstsq(a, model.rhs, rcond=None)[0]
    n = scipy_linalg.null_space(a)

    def f(z):
        return model.total_energy(u_p + n @ z)

    def g(z):
        u = (u_p + n @ z).reshape(-1, 2)
        return n.T @ np.concatenate([model.grad(j, u[j]) for j in range(model.n_blocks)])

    res = optimize.minimize(f, np.zeros(n.shape[1]), jac=g, method="BFGS", options={"gtol": 1e-12})
    return (u_p + n @ res.x).reshape(-1, 2)


def test_params_defaults_and_validation():
    p = AugLagParams()
    assert (p.rho0, p.beta, p.alpha, p.tol_inner) == (100.0, 1.001, 5e-4, 1e-8)
    for bad in (dict(beta=0.9), dict(rho0=0.0), dict(alpha=-1.0), dict(tol_outer=0.0)):
        with pytest.raises(ValueError):
            AugLagParams(**bad)


def test_admm_converges_to_constrained_minimizer(model, admm_run):
    res = admm_run
    assert res.converged
    assert np.linalg.norm(model.residual(res.u)) <= 1e-6
    ref = _nullspace_minimizer(model)
    assert np.linalg.norm(res.u - ref) <= 1e-4
    assert model.total_energy(res.u) == pytest.approx(model.total_energy(ref), abs=1e-6)


def test_admm_trace_layout(admm_run):
    tr = admm_run.trace
    k = admm_run.iterations
    assert len(tr) == k == len(tr.rows())
    assert len(tr.iterates) == k + 1
    assert np.allclose(np.diff(np.log(tr.rho)), np.log(1.001))
    assert tr.rows()[0][0] == 0 and tr.rows()[-1][0] == k - 1
    assert all(f == 0 for f in tr.inner_failures)


def test_block_gradient_matches_fd(model):
    rng = np.random.default_rng(0)
    u = rng.normal(scale=0.05, size=(6, 2))
    w = rng.normal(size=6)
    for j in range(6):

        def lag(x, j=j):
            v = u.copy()
            v[j] = x
            return auglag_eval(v, w, 50.0, model)

        ref = fd_gradient(lag, u[j], h=1e-6)
        assert np.allclose(block_grad(u, w, 50.0, j, model), ref, rtol=1e-6, atol=1e-8)


def test_minimize_block_reaches_tolerance(model):
    params = AugLagParams()
    u = np.zeros((6, 2))
    w = np.zeros(6)
    uj, steps, ok = minimize_block(u, w, 100.0, 0, params, model)
    assert ok and steps > 0
    v = u.copy()
    v[0] = uj
    assert np.linalg.norm(block_grad(v, w, 100.0, 0, model)) <= params.tol_inner


def test_alm_and_admm_agree(model, admm_run):
    res = alm_solve(model)
    assert res.converged
    assert np.linalg.norm(res.u - admm_run.u) <= 1e-5
    assert np.allclose(res.trace.rho, 100.0)


def test_penalty_leaves_order_one_over_rho_residual(model, admm_run):
    res = penalty_solve(model)
    assert res.converged
    r = np.linalg.norm(model.residual(res.u))
    assert 1e-4 < r < 1e-1
    res2 = penalty_solve(model, rho=3200.0, alpha=1e-4, max_iter=200_000)
    assert np.linalg.norm(model.residual(res2.u)) < r


def test_divergence_is_reported_with_trace(model):
    with pytest.raises(Diverged) as info:
        penalty_solve(model, alpha=0.05)
    assert info.value.trace is not None and len(info.value.trace) > 0
    with pytest.raises(Diverged):
        admm_solve(model, AugLagParams(alpha=0.05, max_outer=10))


def test_max_outer_budget(model):
    res = admm_solve(model, AugLagParams(max_outer=3))
    assert res.reason == "max_iter" and not res.converged and res.iterations == 3


def test_explicit_zero_start_matches_default():
    model = GBModel(*preset_three_burgers(3.75))
    a = admm_solve(model)
    b = admm_solve(model, u0=np.zeros((3, 2)), w0=np.zeros(6))
    assert np.array_equal(a.u, b.u)


@pytest.mark.parametrize(
    "values, expected",
    [([1, 2, 3], 0), ([1, 2, 1], 1), ([1, 2, 1, 2, 3, 2], 3), ([1, 1, 1], 0), ([], 0)],
)
def test_sign_changes(values, expected):
    assert sign_changes(values) == expected


def test_audit_on_admm_trace(model, admm_run):
    rep = monotonicity_audit(admm_run.trace, model, 1.001)
    assert rep.violations == 0
    assert rep.cauchy_ok
    assert rep.w_increment_ok
    assert len(rep.margins) == admm_run.iterations
    assert np.all(np.diff(rep.du_sq_partial_sums) >= 0)


def test_audit_needs_iterates(model):
    res = admm_solve(model, AugLagParams(max_outer=2))
    with pytest.raises(ValueError):
        monotonicity_audit(res.trace, model, 1.001)
