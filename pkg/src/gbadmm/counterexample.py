"""
Three-block ADMM on ``min 0  s.t.  A x = 0`` with scalar blocks.

For the classic matrix ``A = [[1,1,1],[1,1,2],[1,2,2]]`` the direct
(fixed-penalty) extension of ADMM diverges.  Growing the penalty
geometrically, ``rho <- beta * rho``, turns the linear recursion

    (x2, x3, lam)^{k+1} = M(beta) (x2, x3, lam)^k,   lam = w / rho,

into a contraction once ``beta`` is large enough.  Here ``M = L^{-1} R``
with ``L`` and ``R`` built from the block formulas below, so any
nonsingular ``A`` can be analysed.
"""

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from gbadmm.numkit import as_matrix, lu_det, solve_linear, spectral_radius

__all__ = [
    "CLASSIC_A",
    "DIVERGENCE_NORM",
    "CEProblem",
    "CEIterate",
    "CETrace",
    "build_LRM",
    "ce_spectral_radius",
    "ce_iterate",
    "beta_threshold_scan",
    "write_trace_csv",
    "write_scan_csv",
]

CLASSIC_A = np.array([[1.0, 1.0, 1.0], [1.0, 1.0, 2.0], [1.0, 2.0, 2.0]])
DIVERGENCE_NORM = 1e12


@dataclass(frozen=True)
class CEProblem:
    """Constraint matrix ``A`` (columns are the blocks), penalty growth ``beta`` and ``rho0``."""

    A: np.ndarray = field(default_factory=lambda: CLASSIC_A.copy())
    beta: float = 1.0
    rho0: float = 1.0

    def __post_init__(self):
        a = as_matrix(self.A, "A")
        if a.shape != (3, 3):
            raise ValueError(f"A must be 3x3, got {a.shape}")
        if abs(lu_det(a)) <= 1e-12:
            raise ValueError("A must be nonsingular")
        if not self.beta >= 1.0:
            raise ValueError("beta must be >= 1")
        if not self.rho0 > 0:
            raise ValueError("rho0 must be positive")
        object.__setattr__(self, "A", a)


@dataclass(frozen=True)
class CEIterate:
    k: int
    x1: float
    x2: float
    x3: float
    lam: np.ndarray
    rho: float

    @property
    def w(self):
        """Unscaled multiplier ``rho * lam`` (may overflow to inf for large ``beta**k``)."""
        with np.errstate(over="ignore", invalid="ignore"):
            return self.lam * self.rho

    @property
    def x_norm(self):
        return math.sqrt(self.x1 ** 2 + self.x2 ** 2 + self.x3 ** 2)


@dataclass
class CETrace:
    iterates: list
    diverged: bool = False

    @property
    def x_norms(self):
        return np.array([it.x_norm for it in self.iterates])

    def state_norms(self):
        """``|(x2, x3, w / rho)|`` per step, the quantity propagated by ``M``."""
        return np.array([math.sqrt(it.x2 ** 2 + it.x3 ** 2 + float(it.lam @ it.lam)) for it in self.iterates])


def build_LRM(ce):
    """
    Return ``(L, R, M)`` for the scaled-multiplier recursion.

    ``L`` is block lower triangular with ``beta I`` in the multiplier block;
    ``R`` includes the rank-one correction that eliminates ``x1``.
    """
    a1, a2, a3 = ce.A.T
    L = np.zeros((5, 5))
    L[0, 0] = a2 @ a2
    L[1, 0] = a3 @ a2
    L[1, 1] = a3 @ a3
    L[2:, 0] = a2
    L[2:, 1] = a3
    L[2:, 2:] = ce.beta * np.eye(3)
    R = np.zeros((5, 5))
    R[0, 1] = -(a2 @ a3)
    R[0, 2:] = a2
    R[1, 2:] = a3
    R[2:, 2:] = np.eye(3)
    col = np.concatenate([[a2 @ a1, a3 @ a1], a1])
    row = np.concatenate([[-(a1 @ a2), -(a1 @ a3)], a1])
    R -= np.outer(col, row) / (a1 @ a1)
    M = solve_linear(L, R)
    return L, R, M


def ce_spectral_radius(ce):
    return spectral_radius(build_LRM(ce)[2])


def ce_iterate(ce, x0=(1.0, 1.0, 1.0), w0=(0.0, 0.0, 0.0), K=2000):
    """
    Run the closed-form recursion for ``K`` steps.

    ``x1`` follows from the first-block optimality condition using the
    current ``(x2, x3, w / rho)``; the rest advance through ``M``.  The trace
    holds the initial point followed by one entry per step and stops early,
    flagged as diverged, once the state norm exceeds ``DIVERGENCE_NORM``.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    a1, a2, a3 = ce.A.T
    M = build_LRM(ce)[2]
    x0 = np.asarray(x0, dtype=float)
    rho = ce.rho0
    z = np.concatenate([x0[1:], np.asarray(w0, dtype=float) / rho])
    x1 = float(x0[0])
    its = [CEIterate(0, x1, z[0], z[1], z[2:].copy(), rho)]
    aa = a1 @ a1
    for k in range(1, K + 1):
        x1 = float((-(a1 @ a2) * z[0] - (a1 @ a3) * z[1] + a1 @ z[2:]) / aa)
        z = M @ z
        rho *= ce.beta
        its.append(CEIterate(k, x1, z[0], z[1], z[2:].copy(), rho))
        norm = math.sqrt(x1 * x1 + float(z @ z))
        if not math.isfinite(norm) or norm > DIVERGENCE_NORM:
            return CETrace(its, diverged=True)
    return CETrace(its)


def beta_threshold_scan(ce, betas, steps=500, x0=(1.0, 1.0, 1.0)):
    """
    ``(beta, sigma(M), converged)`` per ``beta``; ``converged`` is the
    empirical verdict that the propagated state decays over ``steps`` steps.
    """
    rows = []
    for beta in betas:
        sub = CEProblem(ce.A, beta, ce.rho0)
        sigma = ce_spectral_radius(sub)
        tr = ce_iterate(sub, x0=x0, K=steps)
        norms = tr.state_norms()
        converged = (not tr.diverged) and norms[-1] < norms[0]
        rows.append((float(beta), sigma, bool(converged)))
    return rows


def write_trace_csv(trace, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "x1", "x2", "x3", "w_norm", "rho"])
        for it in trace.iterates:
            w.writerow([it.k] + [f"{v:.17g}" for v in (it.x1, it.x2, it.x3, float(np.linalg.norm(it.w)), it.rho)])


def write_scan_csv(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["beta", "sigma", "converged"])
        for beta, sigma, conv in rows:
            w.writerow([f"{beta:.17g}", f"{sigma:.17g}", int(conv)])
