"""
Quasi-convexity certificate for the three-Burgers-vector problem.

With ``J = 3`` and ``rank(b1, b2, b3) = 2`` the constraint fixes ``u_2``
and ``u_3`` as affine functions of ``u_1``, leaving the bivariate objective

    F(u_1) = f_1(u_1) + f_2(P_2 u_1 + q_2) + f_3(P_3 u_1 + q_3).

``F`` has at most one stationary point on a convex domain where

    (S1)  |grad F|^2 + p * lambda_min(hess F) > 0
    (S2)  det [[0, F_1], [F_1, F_11]] <= 0  and  det [[0, g^T], [g, H]] <= 0

hold everywhere.  :func:`certify` checks both on a polar grid over the disk
``|u_1| <= R`` and :func:`find_epsilon0` bisects for the smallest
regularization that passes.
"""

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from gbadmm.model import THETA_MAX, assemble_constraints, energy_component, grad_energy_component
from gbadmm.numkit import solve_linear

__all__ = [
    "InconsistentConstraints",
    "RankDeficiencyUnexpected",
    "NoCertifiableEpsilon",
    "ReducedObjective",
    "CertifierParams",
    "CertReport",
    "reduce",
    "F_eval",
    "F_grad",
    "F_hess",
    "condition_S1",
    "condition_S2",
    "tangent_curvature",
    "certify",
    "find_epsilon0",
    "brute_force_min",
    "grid_local_minima",
    "polish",
    "polished_basins",
    "write_grid_csv",
]


class InconsistentConstraints(ValueError):
    """The constraint system has no solution."""


class RankDeficiencyUnexpected(ValueError):
    """The Burgers vectors do not have rank exactly 2, or ``u_2, u_3`` are not determined."""


class NoCertifiableEpsilon(RuntimeError):
    """No regularization in the search bracket passes the certificate."""


@dataclass(frozen=True)
class ReducedObjective:
    """``u_2 = P2 u_1 + q2``, ``u_3 = P3 u_1 + q3`` plus the underlying model."""

    P2: np.ndarray
    q2: np.ndarray
    P3: np.ndarray
    q3: np.ndarray
    burgers: object
    params: object

    def maps(self):
        return ((np.eye(2), np.zeros(2)), (self.P2, self.q2), (self.P3, self.q3))

    def blocks(self, u1):
        """States ``(u_1, u_2, u_3)`` for ``u1`` of shape (..., 2)."""
        u1 = np.asarray(u1, dtype=float)
        return [u1 @ P.T + q for P, q in self.maps()]


@dataclass
class CertifierParams:
    """Grid and tolerance settings for :func:`certify`."""

    p: float = 0.01
    radius: float = THETA_MAX
    n_r: int = 200
    n_phi: int = 400
    fd_step: float = 1e-6
    threads: int = 1

    def __post_init__(self):
        if not 0 < self.p < 1:
            raise ValueError("p must lie in (0, 1)")
        if not self.radius > 0:
            raise ValueError("radius must be positive")
        if self.n_r < 16 or self.n_phi < 16:
            raise ValueError("grid counts must be >= 16")
        if not self.fd_step > 0:
            raise ValueError("fd_step must be positive")


@dataclass
class CertReport:
    min_s1: float
    max_det_b1: float
    max_det_b2: float
    max_det_b1_excess: float
    max_det_b2_excess: float
    max_det_single2_excess: float
    argmin_s1: np.ndarray
    argmax_det_b2: np.ndarray
    zero_level_s1: np.ndarray
    zero_level_det_b2: np.ndarray
    grid: dict = field(repr=False, default=None)

    @property
    def passed(self):
        return (
            self.min_s1 > 0
            and self.max_det_b1_excess <= 0
            and self.max_det_b2_excess <= 0
            and self.max_det_single2_excess <= 0
        )

    def summary(self):
        verdict = "PASS" if self.passed else "FAIL"
        return (
            f"{verdict}: min S1 = {self.min_s1:.6g} at {np.round(self.argmin_s1, 6)}, "
            f"max detB1 = {self.max_det_b1:.3e}, max detB2 = {self.max_det_b2:.6g} "
            f"at {np.round(self.argmax_det_b2, 6)}"
        )


def _rank(m, tol=1e-10):
    s = np.linalg.svd(np.asarray(m, dtype=float), compute_uv=False)
    return int(np.sum(s > tol * max(1.0, s[0] if s.size else 0.0)))


def reduce(bs, p):
    """
    Eliminate ``u_2, u_3`` from the ``J = 3`` constraint system.

    Raises
    ------
    RankDeficiencyUnexpected
        If ``rank(b1, b2, b3) != 2`` or ``[A_2 A_3]`` is rank deficient.
    InconsistentConstraints
        If ``rank[A_1 A_2 A_3] != rank[A_1 A_2 A_3 | c]``.
    """
    if len(bs) != 3:
        raise ValueError(f"reduction needs exactly three Burgers vectors, got {len(bs)}")
    if _rank(bs.vectors) != 2:
        raise RankDeficiencyUnexpected("rank(b1, b2, b3) must be 2")
    cs = assemble_constraints(bs, p)
    a = cs.full_matrix()
    if _rank(a) != _rank(np.column_stack([a, cs.rhs])):
        raise InconsistentConstraints("constraint right-hand side is outside the range of [A1 A2 A3]")
    b = np.concatenate([cs.blocks[1], cs.blocks[2]], axis=1)
    if _rank(b) != 4:
        raise RankDeficiencyUnexpected("u2, u3 are not determined by u1 ([A2 A3] rank < 4)")
    normal = b.T @ b
    rhs = np.column_stack([-b.T @ cs.blocks[0], b.T @ cs.rhs])
    sol = solve_linear(normal, rhs)
    P, q = sol[:, :2], sol[:, 2]
    ro = ReducedObjective(P[:2], q[:2], P[2:], q[2:], bs, p)
    rng = np.random.default_rng(0)
    for u1 in rng.normal(scale=0.1, size=(3, 2)):
        u = np.stack(ro.blocks(u1))
        r = np.einsum("jik,jk->i", cs.blocks, u) - cs.rhs
        if np.max(np.abs(r)) > 1e-10:
            raise InconsistentConstraints(f"elimination leaves residual {np.max(np.abs(r)):.3e}")
    return ro


def F_eval(ro, u1):
    """``F(u_1)``; ``u1`` may be batched with shape (..., 2)."""
    total = 0.0
    for j, uj in enumerate(ro.blocks(u1)):
        total = total + energy_component(uj, ro.burgers.vectors[j], ro.params, ro.burgers.b)
    return total


def F_grad(ro, u1):
    """Chain-rule gradient ``grad f_1 + P2^T grad f_2 + P3^T grad f_3``."""
    g = 0.0
    for j, ((P, _), uj) in enumerate(zip(ro.maps(), ro.blocks(u1))):
        g = g + grad_energy_component(uj, ro.burgers.vectors[j], ro.params, ro.burgers.b) @ P
    return g


def F_hess(ro, u1, h=1e-6):
    """Central differences of :func:`F_grad`, symmetrized; batched shape (..., 2, 2)."""
    u1 = np.asarray(u1, dtype=float)
    rows = []
    for i in range(2):
        e = np.zeros(2)
        e[i] = h
        rows.append((F_grad(ro, u1 + e) - F_grad(ro, u1 - e)) / (2 * h))
    jac = np.stack(rows, axis=-2)
    return 0.5 * (jac + np.swapaxes(jac, -1, -2))


def _lambda_min(hess):
    f11, f12, f22 = hess[..., 0, 0], hess[..., 0, 1], hess[..., 1, 1]
    return 0.5 * (f11 + f22 - np.sqrt((f11 - f22) ** 2 + 4.0 * f12 ** 2))


def _s1(g, hess, p):
    return g[..., 0] ** 2 + g[..., 1] ** 2 + p * _lambda_min(hess)


def _bordered_dets(g, hess):
    f1, f2 = g[..., 0], g[..., 1]
    f11, f12, f21, f22 = hess[..., 0, 0], hess[..., 0, 1], hess[..., 1, 0], hess[..., 1, 1]
    det_b1 = 0.0 * f11 - f1 * f1
    # cofactor expansion of [[0, f1, f2], [f1, f11, f12], [f2, f21, f22]] along the first row
    det_b2 = -f1 * (f1 * f22 - f12 * f2) + f2 * (f1 * f21 - f11 * f2)
    det_single2 = 0.0 * f22 - f2 * f2
    return det_b1, det_b2, det_single2


def condition_S1(ro, u1, p=0.01, h=1e-6):
    """``|grad F|^2 + p lambda_min(hess F)``; positive where (S1) holds."""
    return _s1(F_grad(ro, u1), F_hess(ro, u1, h), p)


def condition_S2(ro, u1, h=1e-6):
    """Determinants of the 2x2 and 3x3 leading bordered Hessians."""
    det_b1, det_b2, _ = _bordered_dets(F_grad(ro, u1), F_hess(ro, u1, h))
    return det_b1, det_b2


def tangent_curvature(ro, u1, y, h=1e-6):
    """``y^T hess F y`` for a direction ``y`` (meant to satisfy ``y . grad F = 0``)."""
    y = np.asarray(y, dtype=float)
    return float(y @ F_hess(ro, u1, h) @ y)


def _polar_grid(cp):
    r = np.linspace(0.0, cp.radius, cp.n_r)
    phi = np.linspace(0.0, 2.0 * np.pi, cp.n_phi, endpoint=False)
    return r, phi, np.stack([np.outer(r, np.cos(phi)), np.outer(r, np.sin(phi))], axis=-1)


def _evaluate(ro, pts, cp):
    g = F_grad(ro, pts)
    hess = F_hess(ro, pts, cp.fd_step)
    s1 = _s1(g, hess, cp.p)
    det_b1, det_b2, det_s2 = _bordered_dets(g, hess)
    entries = np.max(np.abs(np.concatenate([g, hess.reshape(hess.shape[:-2] + (4,))], axis=-1)), axis=-1)
    tol = 1e-10 * (1.0 + entries ** 3)
    return {
        "F": F_eval(ro, pts),
        "S1": s1,
        "detB1": det_b1,
        "detB2": det_b2,
        "detS2": det_s2,
        "tol": tol,
    }


def _evaluate_grid(ro, pts, cp):
    if cp.threads <= 1:
        return _evaluate(ro, pts, cp)
    chunks = np.array_split(np.arange(pts.shape[0]), cp.threads)
    with ThreadPoolExecutor(max_workers=cp.threads) as pool:
        parts = list(pool.map(lambda idx: _evaluate(ro, pts[idx], cp), chunks))
    return {k: np.concatenate([part[k] for part in parts]) for k in parts[0]}


def _zero_crossings(pts, values):
    # midpoints of radial and angular grid edges across which the sign flips
    out = []
    pos = values > 0
    rad = pos[1:, :] != pos[:-1, :]
    out.append(0.5 * (pts[1:, :][rad] + pts[:-1, :][rad]))
    nxt = np.roll(pos, -1, axis=1)
    ang = pos != nxt
    out.append(0.5 * (pts[ang] + np.roll(pts, -1, axis=1)[ang]))
    return np.concatenate(out, axis=0) if out else np.zeros((0, 2))


def certify(ro, cp=None):
    """
    Evaluate (S1) and (S2) at every node of a polar grid on ``|u_1| <= R``.

    A determinant counts as ``<= 0`` when it does not exceed
    ``1e-10 (1 + m^3)``, ``m`` the largest bordered-Hessian entry at the node.
    """
    cp = cp or CertifierParams()
    r, phi, pts = _polar_grid(cp)
    vals = _evaluate_grid(ro, pts, cp)
    s1, db1, db2, ds2, tol = vals["S1"], vals["detB1"], vals["detB2"], vals["detS2"], vals["tol"]
    i_s1 = np.unravel_index(np.argmin(s1), s1.shape)
    i_b2 = np.unravel_index(np.argmax(db2), db2.shape)
    return CertReport(
        min_s1=float(s1[i_s1]),
        max_det_b1=float(np.max(db1)),
        max_det_b2=float(db2[i_b2]),
        max_det_b1_excess=float(np.max(db1 - tol)),
        max_det_b2_excess=float(np.max(db2 - tol)),
        max_det_single2_excess=float(np.max(ds2 - tol)),
        argmin_s1=pts[i_s1],
        argmax_det_b2=pts[i_b2],
        zero_level_s1=_zero_crossings(pts, s1),
        zero_level_det_b2=_zero_crossings(pts, db2),
        grid={"points": pts, **vals},
    )


def find_epsilon0(bs, p0, cp=None, bracket=(1e-6, 1e-1), rtol=1e-2):
    """
    Smallest ``epsilon`` (in units of ``(theta / b)**2`` inside ``bracket``)
    for which :func:`certify` passes, by geometric bisection to relative
    width ``rtol``.  ``p0.epsilon`` is ignored.

    Returns
    -------
    float
        ``epsilon_0`` in absolute units (``(1/b)^2``).
    """
    cp = cp or CertifierParams()
    unit = (p0.theta / bs.b) ** 2
    if unit == 0.0:
        raise ValueError("theta must be positive to scale epsilon")

    def passes(ratio):
        return certify(reduce(bs, p0.with_epsilon(ratio * unit)), cp).passed

    lo, hi = bracket
    if not passes(hi):
        raise NoCertifiableEpsilon(f"certificate fails even at epsilon = {hi:g} (theta/b)^2")
    if passes(lo):
        return lo * unit
    while hi / lo - 1.0 > rtol:
        mid = math.sqrt(lo * hi)
        if passes(mid):
            hi = mid
        else:
            lo = mid
    return hi * unit


def polish(ro, u1, tol=1e-10, max_iter=50_000):
    """Gradient descent with Armijo backtracking on ``F`` from ``u1``."""
    x = np.array(u1, dtype=float)
    fx = float(F_eval(ro, x))
    t = 1e-3
    for _ in range(max_iter):
        g = F_grad(ro, x)
        gn2 = float(g @ g)
        if math.sqrt(gn2) <= tol:
            break
        t *= 2.0
        while True:
            y = x - t * g
            fy = float(F_eval(ro, y))
            if fy <= fx - 0.5 * t * gn2 or t < 1e-14:
                break
            t *= 0.5
        if fy >= fx and t < 1e-14:
            break
        x, fx = y, fy
    return x


def grid_local_minima(ro, cp=None):
    """Interior polar-grid nodes whose ``F`` is below all eight neighbours."""
    cp = cp or CertifierParams()
    _, _, pts = _polar_grid(cp)
    f = F_eval(ro, pts)
    found = []
    centre = f[0, 0]
    if np.all(centre < f[1, :]):
        found.append(pts[0, 0])
    inner = f[1:-1]
    is_min = np.ones_like(inner, dtype=bool)
    for di in (-1, 0, 1):
        for dk in (-1, 0, 1):
            if di == 0 and dk == 0:
                continue
            nb = np.roll(f[1 + di:f.shape[0] - 1 + di], -dk, axis=1)
            is_min &= inner < nb
    for i, k in zip(*np.nonzero(is_min)):
        found.append(pts[1 + i, k])
    return np.array(found).reshape(-1, 2)


def polished_basins(ro, cp=None, tol=1e-6):
    """Polish every grid-local minimum and merge those that coincide within ``tol``."""
    basins = []
    for node in grid_local_minima(ro, cp):
        x = polish(ro, node)
        if not any(np.linalg.norm(x - b) <= tol for b in basins):
            basins.append(x)
    return basins


def brute_force_min(ro, cp=None):
    """Exhaustive grid scan of ``F`` on the disk, then a descent polish from the best node."""
    cp = cp or CertifierParams()
    _, _, pts = _polar_grid(cp)
    f = F_eval(ro, pts)
    best = pts[np.unravel_index(np.argmin(f), f.shape)]
    return polish(ro, best)


def write_grid_csv(report, path):
    """Write grid samples with columns ``u1x, u1y, S1, detB1, detB2, F``."""
    g = report.grid
    pts = g["points"].reshape(-1, 2)
    cols = [g[k].reshape(-1) for k in ("S1", "detB1", "detB2", "F")]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["u1x", "u1y", "S1", "detB1", "detB2", "F"])
        for i in range(pts.shape[0]):
            w.writerow([f"{pts[i, 0]:.17g}", f"{pts[i, 1]:.17g}"] + [f"{c[i]:.17g}" for c in cols])
