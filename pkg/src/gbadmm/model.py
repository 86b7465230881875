"""
Dimensionless energy of a planar low-angle grain boundary and the
Frank's-formula constraint system.

Each dislocation family ``j`` is described by an in-plane vector
``u_j = grad(eta_j)`` (units 1/b).  The energy of family ``j`` is

    f_j(u) = [1 - nu ((u, 0) x n . b_j)^2 / (b^2 (|u|^2 + eps))]
             * b sqrt(|u|^2 + eps) * log(1 / (r_g sqrt(|u|^2 + eps)))

and the families are coupled only through the linear constraint
``sum_j A_j u_j = c``.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from gbadmm.numkit import fd_hessian

__all__ = [
    "THETA_MAX",
    "BurgersSet",
    "GBParams",
    "ConstraintSystem",
    "GBModel",
    "assemble_constraints",
    "energy_component",
    "grad_energy_component",
    "hess_energy_component",
    "total_energy",
    "residual",
    "frank_vector",
    "preset_fcc111",
    "preset_three_burgers",
]

# largest misorientation of a low-angle boundary (15 degrees)
THETA_MAX = math.pi / 12


@dataclass(frozen=True)
class BurgersSet:
    """``J`` Burgers vectors sharing the common length ``b``."""

    vectors: np.ndarray
    b: float = field(default=None)

    def __post_init__(self):
        vecs = np.array(self.vectors, dtype=float)
        if vecs.ndim != 2 or vecs.shape[1] != 3 or vecs.shape[0] < 1:
            raise ValueError(f"expected a (J, 3) array of Burgers vectors, got {vecs.shape}")
        if not np.all(np.isfinite(vecs)):
            raise ValueError("Burgers vectors must be finite")
        lengths = np.linalg.norm(vecs, axis=1)
        if np.any(lengths == 0.0):
            raise ValueError("Burgers vectors must be nonzero")
        b = float(lengths[0]) if self.b is None else float(self.b)
        if not b > 0:
            raise ValueError("common length b must be positive")
        if np.any(np.abs(lengths - b) > 1e-12 * b):
            raise ValueError(f"Burgers vectors must share the length b={b}, got {lengths}")
        vecs.setflags(write=False)
        object.__setattr__(self, "vectors", vecs)
        object.__setattr__(self, "b", b)

    def __len__(self):
        return self.vectors.shape[0]


@dataclass(frozen=True)
class GBParams:
    """
    Boundary geometry and material constants.

    ``theta`` is in radians; ``epsilon`` carries units of (1/b)^2.
    """

    theta: float
    axis: np.ndarray
    normal: np.ndarray
    nu: float
    r_g: float
    epsilon: float

    def __post_init__(self):
        axis = np.array(self.axis, dtype=float)
        normal = np.array(self.normal, dtype=float)
        for name, v in (("axis", axis), ("normal", normal)):
            if v.shape != (3,) or abs(np.linalg.norm(v) - 1.0) > 1e-12:
                raise ValueError(f"{name} must be a unit 3-vector, got {v}")
        if not 0.0 <= self.nu < 0.5:
            raise ValueError(f"Poisson ratio must lie in [0, 0.5), got {self.nu}")
        if not self.r_g > 0:
            raise ValueError("r_g must be positive")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        # theta = 0 is admitted as the homogeneous limit
        if not 0.0 <= self.theta <= THETA_MAX + 1e-15:
            raise ValueError(f"theta must lie in [0, pi/12], got {self.theta}")
        axis.setflags(write=False)
        normal.setflags(write=False)
        object.__setattr__(self, "axis", axis)
        object.__setattr__(self, "normal", normal)

    @classmethod
    def from_degrees(cls, theta_deg, epsilon_ratio=1 / 400, b=1.0, axis=(0, 0, 1),
                     normal=(0, 0, 1), nu=0.347, r_g=0.85):
        """Build parameters with ``epsilon = epsilon_ratio * (theta / b)**2``."""
        theta = math.radians(theta_deg)
        return cls(theta, axis, normal, nu, r_g * b, epsilon_ratio * (theta / b) ** 2)

    def with_epsilon(self, epsilon):
        return GBParams(self.theta, self.axis, self.normal, self.nu, self.r_g, epsilon)


@dataclass(frozen=True)
class ConstraintSystem:
    """Per-block 6x2 coefficient matrices ``A_j`` and right-hand side ``c``."""

    blocks: np.ndarray
    rhs: np.ndarray

    @property
    def n_blocks(self):
        return self.blocks.shape[0]

    def full_matrix(self):
        """The 6 x 2J matrix ``[A_1 ... A_J]``."""
        return np.concatenate(list(self.blocks), axis=1)


def assemble_constraints(bs, p):
    """Coefficient blocks ``[[b_j, 0], [0, b_j]]`` and ``c`` from Frank's formula."""
    vecs = bs.vectors
    blocks = np.zeros((len(bs), 6, 2))
    blocks[:, :3, 0] = vecs
    blocks[:, 3:, 1] = vecs
    a1, a2, a3 = p.axis
    t = p.theta
    rhs = np.array([0.0, -t * a3, t * a2, t * a3, 0.0, -t * a1])
    return ConstraintSystem(blocks, rhs)


def frank_vector(u, bs, p, v):
    """
    Frank's formula ``theta (V x a) - sum_j b_j (u_j . V)`` for an in-plane ``V``.

    ``u`` has shape (J, 2); ``u_j . V`` uses the in-plane embedding of ``u_j``.
    """
    u = np.asarray(u, dtype=float).reshape(len(bs), 2)
    v = np.asarray(v, dtype=float)
    proj = u @ v[:2]
    return p.theta * np.cross(v, p.axis) - proj @ bs.vectors


def _cross_direction(b_j, normal):
    # (u, 0) x n . b = (u, 0) . (n x b)
    return np.cross(normal, b_j)[:2]


def _parts(u, b_j, p, b):
    u = np.asarray(u, dtype=float)
    d = _cross_direction(np.asarray(b_j, dtype=float), p.normal)
    q = np.sum(u * u, axis=-1) + p.epsilon
    s = np.sqrt(q)
    cc = u @ d
    return u, d, q, s, cc


def energy_component(u_j, b_j, p, b=None):
    """
    Energy ``f_j(u_j)`` of one dislocation family.

    ``u_j`` may carry leading batch dimensions (shape ``(..., 2)``).
    ``b`` defaults to ``|b_j|``.
    """
    if b is None:
        b = float(np.linalg.norm(b_j))
    u, d, q, s, cc = _parts(u_j, b_j, p, b)
    aniso = 1.0 - p.nu * cc * cc / (b * b * q)
    out = aniso * b * s * (-np.log(p.r_g * s))
    return float(out) if np.ndim(out) == 0 else out


def grad_energy_component(u_j, b_j, p, b=None):
    """Analytic gradient of :func:`energy_component` with respect to ``u_j``."""
    if b is None:
        b = float(np.linalg.norm(b_j))
    u, d, q, s, cc = _parts(u_j, b_j, p, b)
    b2 = b * b
    log_term = -np.log(p.r_g * s)
    aniso = 1.0 - p.nu * cc * cc / (b2 * q)
    radial = b * s * log_term
    cc_ = cc[..., None]
    q_ = np.asarray(q)[..., None]
    grad_aniso = -(p.nu / b2) * (2.0 * cc_ * d / q_ - 2.0 * cc_ * cc_ * u / (q_ * q_))
    # d(radial)/dq, chain rule through q = |u|^2 + eps
    d_radial_dq = b * (log_term - 1.0) / (2.0 * s)
    grad_radial = 2.0 * u * np.asarray(d_radial_dq)[..., None]
    return grad_aniso * np.asarray(radial)[..., None] + np.asarray(aniso)[..., None] * grad_radial


def hess_energy_component(u_j, b_j, p, b=None, h=None):
    """Hessian of ``f_j`` by central differences of the analytic gradient (symmetrized)."""
    u = np.asarray(u_j, dtype=float)
    if h is None:
        h = 1e-5 * max(1.0, float(np.linalg.norm(u)))
    return fd_hessian(lambda x: grad_energy_component(x, b_j, p, b), u, h)


def total_energy(u, bs, p):
    """Separable objective ``sum_j f_j(u_j)``; ``u`` is (J, 2) or flat of length 2J."""
    u = np.asarray(u, dtype=float).reshape(len(bs), 2)
    return float(sum(energy_component(u[j], bs.vectors[j], p, bs.b) for j in range(len(bs))))


def residual(u, cs):
    """Constraint residual ``sum_j A_j u_j - c``."""
    u = np.asarray(u, dtype=float)
    if u.size != 2 * cs.n_blocks:
        raise ValueError(f"state has {u.size} entries, expected {2 * cs.n_blocks}")
    u = u.reshape(cs.n_blocks, 2)
    return np.einsum("jik,jk->i", cs.blocks, u) - cs.rhs


class GBModel:
    """
    Bundles crystallography, parameters and constraints for the solvers.

    The solvers only use ``n_blocks``, ``blocks``, ``rhs``, ``gram``,
    ``energy(j, u_j)`` and ``grad(j, u_j)``, so any object exposing the
    same members can be passed in their place.
    """

    def __init__(self, bs, p):
        self.burgers = bs
        self.params = p
        self.constraints = assemble_constraints(bs, p)
        self.blocks = self.constraints.blocks
        self.rhs = self.constraints.rhs
        self.gram = np.einsum("jki,jkl->jil", self.blocks, self.blocks)
        self._dirs = [tuple(_cross_direction(v, p.normal)) for v in bs.vectors]

    @property
    def n_blocks(self):
        return len(self.burgers)

    def energy(self, j, u_j):
        return energy_component(u_j, self.burgers.vectors[j], self.params, self.burgers.b)

    def grad(self, j, u_j):
        if np.shape(u_j) != (2,):
            return grad_energy_component(u_j, self.burgers.vectors[j], self.params, self.burgers.b)
        # scalar path for the solvers' inner loops; same formula as grad_energy_component
        p = self.params
        b = self.burgers.b
        b2 = b * b
        dx, dy = self._dirs[j]
        x, y = float(u_j[0]), float(u_j[1])
        q = x * x + y * y + p.epsilon
        s = math.sqrt(q)
        cc = dx * x + dy * y
        log_term = -math.log(p.r_g * s)
        aniso = 1.0 - p.nu * cc * cc / (b2 * q)
        radial = b * s * log_term
        k1 = -(p.nu / b2) * 2.0 * cc / q
        k2 = (p.nu / b2) * 2.0 * cc * cc / (q * q)
        dr = aniso * b * (log_term - 1.0) / s
        return np.array([(k1 * dx + k2 * x) * radial + dr * x, (k1 * dy + k2 * y) * radial + dr * y])

    def hess(self, j, u_j):
        return hess_energy_component(u_j, self.burgers.vectors[j], self.params, self.burgers.b)

    def total_energy(self, u):
        return total_energy(u, self.burgers, self.params)

    def residual(self, u):
        return residual(u, self.constraints)


def preset_fcc111(theta_deg, epsilon_ratio=1 / 400, b=1.0):
    """
    Six Burgers vectors of a {111} twist boundary in fcc aluminium.

    Axes are x = [-110], y = [-1-12], z = [111]; ``nu = 0.347``,
    ``r_g = 0.85 b``, ``a = n = (0, 0, 1)`` and
    ``epsilon = epsilon_ratio * (theta / b)**2``.
    """
    s3, s6 = math.sqrt(3.0), math.sqrt(6.0)
    vecs = b * np.array([
        [1.0, 0.0, 0.0],
        [0.5, s3 / 2, 0.0],
        [0.5, -s3 / 2, 0.0],
        [0.0, s3 / 3, s6 / 3],
        [0.5, s3 / 6, -s6 / 3],
        [-0.5, s3 / 6, -s6 / 3],
    ])
    return BurgersSet(vecs, b), GBParams.from_degrees(theta_deg, epsilon_ratio, b)


def preset_three_burgers(theta_deg, epsilon_ratio=1 / 400, b=1.0):
    """The three in-plane Burgers vectors of the (111) twist boundary."""
    s3 = math.sqrt(3.0)
    vecs = b * np.array([[1.0, 0.0, 0.0], [0.5, s3 / 2, 0.0], [0.5, -s3 / 2, 0.0]])
    return BurgersSet(vecs, b), GBParams.from_degrees(theta_deg, epsilon_ratio, b)
