"""
Augmented-Lagrangian solvers for ``min sum_j f_j(u_j)  s.t.  sum_j A_j u_j = c``.

* :func:`admm_solve` -- Gauss-Seidel block sweep, multiplier step, then the
  penalty grows geometrically (``rho <- beta * rho``).
* :func:`alm_solve` -- joint minimization over all blocks per multiplier step.
* :func:`penalty_solve` -- plain quadratic penalty, no multiplier.

All inner minimizations are fixed-step gradient descent.  The ``model``
argument is duck-typed: it needs ``n_blocks``, ``blocks`` (J x m x 2),
``rhs`` (m,), ``gram`` (J x 2 x 2, ``A_j^T A_j``), ``energy(j, u_j)`` and
``grad(j, u_j)``.
"""

import math
import time
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "AugLagParams",
    "SolverTrace",
    "SolveResult",
    "AuditReport",
    "Diverged",
    "auglag_eval",
    "block_grad",
    "minimize_block",
    "admm_solve",
    "alm_solve",
    "penalty_solve",
    "monotonicity_audit",
    "sign_changes",
]

DIVERGENCE_NORM = 1e12


class Diverged(RuntimeError):
    """Raised when an iterate becomes non-finite or blows up; carries the trace."""

    def __init__(self, msg, trace=None):
        super().__init__(msg)
        self.trace = trace


@dataclass
class AugLagParams:
    """Penalty schedule, step size and stopping rules."""

    rho0: float = 100.0
    beta: float = 1.001
    alpha: float = 5e-4
    tol_inner: float = 1e-8
    tol_outer: float = 1e-6
    max_outer: int = 100_000
    max_inner: int = 100_000
    # consecutive outer iterations with a stalled inner solve before giving up
    inner_patience: int = 50
    line_search: bool = False

    def __post_init__(self):
        if not self.rho0 > 0:
            raise ValueError("rho0 must be positive")
        if not self.beta >= 1:
            raise ValueError("beta must be >= 1")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if not (self.tol_inner > 0 and self.tol_outer > 0):
            raise ValueError("tolerances must be positive")
        if self.max_outer < 1 or self.max_inner < 1:
            raise ValueError("iteration caps must be >= 1")


@dataclass
class SolverTrace:
    """Per-outer-iteration record; ``iterates`` is filled only when requested."""

    objective: list = field(default_factory=list)
    residual_norm: list = field(default_factory=list)
    u_norm: list = field(default_factory=list)
    w_norm: list = field(default_factory=list)
    rho: list = field(default_factory=list)
    inner_steps: list = field(default_factory=list)
    inner_failures: list = field(default_factory=list)
    # (u, w, rho) before iteration 0 and after every iteration
    iterates: list = None

    def __len__(self):
        return len(self.objective)

    def record(self, objective, res_norm, u, w, rho, steps, failures):
        self.objective.append(float(objective))
        self.residual_norm.append(float(res_norm))
        self.u_norm.append(float(np.linalg.norm(u)))
        self.w_norm.append(float(np.linalg.norm(w)))
        self.rho.append(float(rho))
        self.inner_steps.append(steps)
        self.inner_failures.append(int(failures))

    def rows(self):
        """Rows ``(k, objective, residual_norm, u_norm, w_norm, rho)``."""
        return [
            (k, self.objective[k], self.residual_norm[k], self.u_norm[k], self.w_norm[k], self.rho[k])
            for k in range(len(self))
        ]


@dataclass
class SolveResult:
    u: np.ndarray
    w: np.ndarray
    trace: SolverTrace
    reason: str
    wall_time: float = 0.0

    @property
    def iterations(self):
        return len(self.trace)

    @property
    def converged(self):
        return self.reason == "converged"


def _as_state(model, u):
    if u is None:
        return np.zeros((model.n_blocks, 2))
    u = np.array(u, dtype=float)
    if u.size != 2 * model.n_blocks:
        raise ValueError(f"state has {u.size} entries, expected {2 * model.n_blocks}")
    return u.reshape(model.n_blocks, 2)


def _as_multiplier(model, w):
    m = model.rhs.shape[0]
    if w is None:
        return np.zeros(m)
    w = np.array(w, dtype=float)
    if w.shape != (m,):
        raise ValueError(f"multiplier must have shape ({m},), got {w.shape}")
    return w


def _constraint_value(model, u):
    return np.einsum("jik,jk->i", model.blocks, u)


def _objective(model, u):
    return float(sum(model.energy(j, u[j]) for j in range(model.n_blocks)))


def _full_grad(model, u):
    return np.stack([model.grad(j, u[j]) for j in range(model.n_blocks)])


def auglag_eval(u, w, rho, model):
    """``sum f_j + w^T r + rho/2 |r|^2`` with ``r = sum A_j u_j - c``."""
    u = _as_state(model, u)
    r = _constraint_value(model, u) - model.rhs
    return _objective(model, u) + float(w @ r) + 0.5 * rho * float(r @ r)


def block_grad(u, w, rho, j, model):
    """Gradient of the augmented Lagrangian with respect to block ``j``."""
    u = _as_state(model, u)
    r = _constraint_value(model, u) - model.rhs
    a = model.blocks[j]
    return model.grad(j, u[j]) + a.T @ (w + rho * r)


def _block_objective(model, j, u_j, lin, rho, gram, const):
    # f_j(u_j) + lin . u_j + rho/2 u_j^T G u_j, up to a constant
    return model.energy(j, u_j) + lin @ u_j + 0.5 * rho * u_j @ gram @ u_j + const


def minimize_block(u, w, rho, j, params, model):
    """
    Approximate ``argmin_{u_j} L_rho`` by fixed-step gradient descent.

    Starts from the current ``u_j`` and stops when the block gradient norm
    is at most ``params.tol_inner`` or after ``params.max_inner`` steps.

    Returns
    -------
    u_j : ndarray, shape (2,)
    steps : int
    converged : bool
    """
    u = _as_state(model, u)
    a = model.blocks[j]
    gram = model.gram[j]
    r_other = _constraint_value(model, u) - a @ u[j] - model.rhs
    lin = a.T @ (w + rho * r_other)
    x = u[j].copy()
    alpha = params.alpha
    for step in range(params.max_inner + 1):
        g = model.grad(j, x) + lin + rho * (gram @ x)
        gn = math.hypot(g[0], g[1])
        if gn <= params.tol_inner:
            return x, step, True
        if not math.isfinite(gn) or gn > DIVERGENCE_NORM:
            raise Diverged(f"block {j} gradient blew up at inner step {step}")
        if step == params.max_inner:
            break
        if params.line_search:
            t = alpha
            f0 = _block_objective(model, j, x, lin, rho, gram, 0.0)
            while t > 1e-16:
                y = x - t * g
                if _block_objective(model, j, y, lin, rho, gram, 0.0) <= f0 - 0.5 * t * gn * gn:
                    break
                t *= 0.5
            x = y
        else:
            x = x - alpha * g
    return x, params.max_inner, False


def _check_finite(u, w, trace, what):
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(w))):
        raise Diverged(f"{what}: non-finite iterate", trace)
    if np.linalg.norm(u) > DIVERGENCE_NORM or np.linalg.norm(w) > DIVERGENCE_NORM:
        raise Diverged(f"{what}: iterate norm exceeded {DIVERGENCE_NORM:g}", trace)


def admm_solve(model, params=None, u0=None, w0=None, keep_iterates=False):
    """
    Multi-block ADMM with a geometrically increasing penalty.

    Each outer iteration sweeps the blocks in order ``j = 1..J`` (every
    block sees the already-updated earlier blocks), then sets
    ``w <- w + rho r`` and ``rho <- beta rho``.  Converged when both the
    residual norm and ``|u^(k+1) - u^(k)|`` are at most ``tol_outer``.

    Parameters
    ----------
    model : GBModel or compatible
    params : AugLagParams, optional
        Defaults to ``rho0=100, beta=1.001, alpha=5e-4``.
    u0, w0 : array_like, optional
        Starting state and multiplier, zero by default.
    keep_iterates : bool
        Store every ``(u, w, rho)`` in ``trace.iterates`` (needed by
        :func:`monotonicity_audit`).

    Returns
    -------
    SolveResult
    """
    params = params or AugLagParams()
    u = _as_state(model, u0)
    w = _as_multiplier(model, w0)
    rho = params.rho0
    trace = SolverTrace(iterates=[] if keep_iterates else None)
    if keep_iterates:
        trace.iterates.append((u.copy(), w.copy(), rho))
    reason = "max_iter"
    stalled = 0
    t0 = time.perf_counter()
    for k in range(params.max_outer):
        u_old = u.copy()
        steps = []
        failures = 0
        try:
            for j in range(model.n_blocks):
                u[j], n, ok = minimize_block(u, w, rho, j, params, model)
                steps.append(n)
                failures += not ok
        except Diverged as exc:
            raise Diverged(f"ADMM iteration {k}: {exc}", trace) from None
        r = _constraint_value(model, u) - model.rhs
        w = w + rho * r
        _check_finite(u, w, trace, "ADMM")
        res = float(np.linalg.norm(r))
        trace.record(_objective(model, u), res, u, w, rho, steps, failures)
        rho = params.beta * rho
        if keep_iterates:
            trace.iterates.append((u.copy(), w.copy(), rho))
        stalled = stalled + 1 if failures else 0
        if res <= params.tol_outer and np.linalg.norm(u - u_old) <= params.tol_outer:
            reason = "converged"
            break
        if stalled >= params.inner_patience:
            reason = "inner_failure"
            break
    return SolveResult(u, w, trace, reason, time.perf_counter() - t0)


def _joint_descent(model, u, w, rho, params):
    a_full = model.blocks
    for step in range(params.max_inner + 1):
        r = _constraint_value(model, u) - model.rhs
        g = _full_grad(model, u) + np.einsum("jik,i->jk", a_full, w + rho * r)
        gn = float(np.linalg.norm(g))
        if gn <= params.tol_inner:
            return u, step, True
        if not math.isfinite(gn) or gn > DIVERGENCE_NORM:
            raise Diverged(f"joint gradient blew up at inner step {step}")
        if step == params.max_inner:
            break
        u = u - params.alpha * g
    return u, params.max_inner, False


def alm_solve(model, params=None, u0=None, w0=None, keep_iterates=False):
    """
    Augmented Lagrangian method: joint gradient descent over all ``2J``
    unknowns, then the multiplier step.

    ``params.beta`` defaults to 1 here (constant penalty); the stopping rule
    matches :func:`admm_solve`.
    """
    params = params or AugLagParams(beta=1.0)
    u = _as_state(model, u0)
    w = _as_multiplier(model, w0)
    rho = params.rho0
    trace = SolverTrace(iterates=[] if keep_iterates else None)
    if keep_iterates:
        trace.iterates.append((u.copy(), w.copy(), rho))
    reason = "max_iter"
    stalled = 0
    t0 = time.perf_counter()
    for k in range(params.max_outer):
        u_old = u.copy()
        try:
            u, n, ok = _joint_descent(model, u.copy(), w, rho, params)
        except Diverged as exc:
            raise Diverged(f"ALM iteration {k}: {exc}", trace) from None
        r = _constraint_value(model, u) - model.rhs
        w = w + rho * r
        _check_finite(u, w, trace, "ALM")
        res = float(np.linalg.norm(r))
        trace.record(_objective(model, u), res, u, w, rho, n, not ok)
        rho = params.beta * rho
        if keep_iterates:
            trace.iterates.append((u.copy(), w.copy(), rho))
        stalled = stalled + 1 if not ok else 0
        if res <= params.tol_outer and np.linalg.norm(u - u_old) <= params.tol_outer:
            reason = "converged"
            break
        if stalled >= params.inner_patience:
            reason = "inner_failure"
            break
    return SolveResult(u, w, trace, reason, time.perf_counter() - t0)


def penalty_solve(model, rho=800.0, alpha=5e-4, tol=1e-8, max_iter=100_000, u0=None):
    """
    Quadratic penalty method: gradient descent on
    ``sum f_j + rho/2 |sum A_j u_j - c|^2`` until the gradient norm is at
    most ``tol``.  Every gradient step is one trace record.
    """
    if not rho > 0 or not alpha > 0 or not tol > 0:
        raise ValueError("rho, alpha and tol must be positive")
    u = _as_state(model, u0)
    w = np.zeros(model.rhs.shape[0])
    trace = SolverTrace()
    reason = "max_iter"
    t0 = time.perf_counter()
    for k in range(max_iter):
        r = _constraint_value(model, u) - model.rhs
        g = _full_grad(model, u) + rho * np.einsum("jik,i->jk", model.blocks, r)
        if float(np.linalg.norm(g)) <= tol:
            reason = "converged"
            break
        u = u - alpha * g
        _check_finite(u, w, trace, "penalty")
        r = _constraint_value(model, u) - model.rhs
        trace.record(_objective(model, u), np.linalg.norm(r), u, w, rho, 1, 0)
    return SolveResult(u, w, trace, reason, time.perf_counter() - t0)


def sign_changes(values):
    """Number of sign flips in the successive increments of a sequence."""
    d = np.diff(np.asarray(values, dtype=float))
    d = d[d != 0.0]
    return int(np.sum(np.sign(d[1:]) != np.sign(d[:-1])))


@dataclass
class AuditReport:
    """Outcome of :func:`monotonicity_audit`."""

    c_hat: float
    delta_hat: float
    threshold_k: int
    n_checked: int
    violations: int
    violations_before_threshold: int
    margins: np.ndarray
    du_sq_partial_sums: np.ndarray
    tail_sum: float
    w_increment_ok: bool

    @property
    def cauchy_ok(self):
        return self.tail_sum <= 1e-8

    def summary(self):
        return (
            f"C_hat={self.c_hat:.4g} delta_hat={self.delta_hat:.4g} "
            f"threshold_k={self.threshold_k} checked={self.n_checked} "
            f"violations={self.violations} (before threshold: {self.violations_before_threshold}) "
            f"tail_sum={self.tail_sum:.3e} w_increment_ok={self.w_increment_ok}"
        )


def _hess_norm(model, j, x):
    if hasattr(model, "hess"):
        h = model.hess(j, x)
    else:
        from gbadmm.numkit import fd_hessian
        h = fd_hessian(lambda y: model.grad(j, y), x, 1e-6)
    return float(np.linalg.norm(h, 2))


def monotonicity_audit(trace, model, beta, tail_fraction=0.1):
    """
    Check the per-iteration descent inequality of the modified ADMM,

        L_k - L_{k+1} >= |u^(k+1) - u^(k)|^2 - delta / rho^(k),

    with ``L_k = L_{rho^(k)}(u^(k), w^(k))``, on a trace recorded with
    ``keep_iterates=True``.

    ``delta`` is estimated as ``2 (beta + 1) max|dw|^2 / 4`` from the
    recorded multiplier increments.  The inequality is only claimed once
    ``rho^(k) b^2 / 2 - C >= 1``, where ``C`` is the largest Hessian norm
    of any ``f_j`` sampled on the segments ``[u_j^(m), u_j^(m+1)]`` for
    ``m >= k``; violations before that index are reported separately.
    """
    if not trace.iterates or len(trace.iterates) < 2:
        raise ValueError("audit needs a trace recorded with keep_iterates=True")
    its = trace.iterates
    K = len(its) - 1
    b2 = float(np.min(np.linalg.eigvalsh(model.gram)))
    lag = np.array([auglag_eval(u, w, rho, model) for u, w, rho in its])
    du_sq = np.array([float(np.sum((its[k + 1][0] - its[k][0]) ** 2)) for k in range(K)])
    dw_sq = np.array([float(np.sum((its[k + 1][1] - its[k][1]) ** 2)) for k in range(K)])
    max_w = max(float(np.linalg.norm(w)) for _, w, _ in its)
    delta_hat = 2.0 * (beta + 1.0) * float(np.max(dw_sq)) / 4.0
    rhos = np.array([rho for _, _, rho in its])
    margins = (lag[:-1] - lag[1:]) - (du_sq - delta_hat / rhos[:-1])

    # Hessian norms on each step's segment (endpoints and midpoint)
    seg_c = np.zeros(K)
    for k in range(K):
        ua, ub = its[k][0], its[k + 1][0]
        seg_c[k] = max(
            _hess_norm(model, j, x)
            for j in range(model.n_blocks)
            for x in (ua[j], 0.5 * (ua[j] + ub[j]), ub[j])
        )
    tail_c = np.maximum.accumulate(seg_c[::-1])[::-1]
    ok = rhos[:-1] * b2 / 2.0 - tail_c >= 1.0
    threshold_k = int(np.argmax(ok)) if np.any(ok) else K
    scale = 1e-12 * max(1.0, float(np.max(np.abs(lag))))
    violated = margins < -scale
    partial = np.cumsum(du_sq)
    tail_start = int(math.floor((1.0 - tail_fraction) * K))
    tail_sum = float(np.sum(du_sq[tail_start:]))
    return AuditReport(
        c_hat=float(tail_c[0]) if K else 0.0,
        delta_hat=delta_hat,
        threshold_k=threshold_k,
        n_checked=K - threshold_k,
        violations=int(np.sum(violated[threshold_k:])),
        violations_before_threshold=int(np.sum(violated[:threshold_k])),
        margins=margins,
        du_sq_partial_sums=partial,
        tail_sum=tail_sum,
        w_increment_ok=bool(np.all(dw_sq <= 4.0 * max_w ** 2 + 1e-12)),
    )
