"""
Small dense linear algebra and finite-difference helpers.

Matrices and vectors are plain ``numpy`` arrays; the helpers here validate
shapes and finiteness and implement the few kernels the rest of the
package relies on (pivoted LU, a Hessenberg/QR eigenvalue solver for desk
sized matrices, closed-form 2x2 symmetric eigenvalues, central
differences).
"""

import math

import numpy as np

__all__ = [
    "SingularMatrix",
    "ConvergenceFailure",
    "NonFiniteError",
    "as_matrix",
    "as_vector",
    "matmul",
    "lu_factor",
    "lu_det",
    "solve_linear",
    "sym_eig_min_2x2",
    "hessenberg",
    "eigvals_dense",
    "spectral_radius",
    "fd_gradient",
    "fd_jacobian",
    "fd_hessian",
]

PIVOT_FLOOR = 1e-12


class SingularMatrix(ValueError):
    """Raised when a pivot falls below the singularity floor."""


class ConvergenceFailure(RuntimeError):
    """Raised when an iterative kernel exhausts its sweep budget."""


class NonFiniteError(ValueError):
    """Raised when an input or a function evaluation is NaN or infinite."""


def as_matrix(a, name="matrix"):
    a = np.asarray(a, dtype=float)
    if a.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NonFiniteError(f"{name} has non-finite entries")
    return a


def as_vector(v, name="vector"):
    v = np.asarray(v, dtype=float)
    if v.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise NonFiniteError(f"{name} has non-finite entries")
    return v


def matmul(a, b):
    """Matrix product with an explicit inner-dimension check."""
    a = as_matrix(a, "A")
    b = as_matrix(b, "B")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"dimension mismatch: {a.shape} @ {b.shape}")
    return a @ b


def lu_factor(a):
    """
    LU factorization with partial pivoting, ``P A = L U``.

    Returns
    -------
    lu : ndarray
        Packed factors (unit lower triangle implicit).
    perm : ndarray of int
        Row permutation.
    sign : float
        Determinant sign of the permutation.
    """
    a = as_matrix(a, "A")
    n, m = a.shape
    if n != m:
        raise ValueError(f"matrix must be square, got {a.shape}")
    lu = a.copy()
    perm = np.arange(n)
    sign = 1.0
    floor = PIVOT_FLOOR * max(1.0, float(np.max(np.abs(a))) if a.size else 1.0)
    for k in range(n):
        p = k + int(np.argmax(np.abs(lu[k:, k])))
        if abs(lu[p, k]) <= floor:
            raise SingularMatrix(f"pivot {lu[p, k]:.3e} at column {k} below floor")
        if p != k:
            lu[[k, p]] = lu[[p, k]]
            perm[[k, p]] = perm[[p, k]]
            sign = -sign
        lu[k + 1:, k] /= lu[k, k]
        lu[k + 1:, k + 1:] -= np.outer(lu[k + 1:, k], lu[k, k + 1:])
    return lu, perm, sign


def lu_det(a):
    """Determinant from the pivoted LU factors (0.0 if singular)."""
    try:
        lu, _, sign = lu_factor(a)
    except SingularMatrix:
        return 0.0
    return sign * float(np.prod(np.diag(lu)))


def solve_linear(a, b):
    """
    Solve ``A x = b`` by partial-pivot LU.

    ``b`` may be a vector or a matrix of right-hand sides (one per column).
    Raises :class:`SingularMatrix` when a pivot is below ``1e-12`` (scaled
    by the largest entry of ``A`` when that exceeds one).
    """
    lu, perm, _ = lu_factor(a)
    b = np.asarray(b, dtype=float)
    if b.shape[0] != lu.shape[0]:
        raise ValueError(f"rhs has {b.shape[0]} rows, matrix has {lu.shape[0]}")
    if not np.all(np.isfinite(b)):
        raise NonFiniteError("rhs has non-finite entries")
    n = lu.shape[0]
    x = b[perm].astype(float)
    for i in range(1, n):
        x[i] -= lu[i, :i] @ x[:i]
    for i in range(n - 1, -1, -1):
        x[i] = (x[i] - lu[i, i + 1:] @ x[i + 1:]) / lu[i, i]
    return x


def sym_eig_min_2x2(h):
    """Smallest eigenvalue of a symmetric 2x2 matrix (closed form)."""
    h = as_matrix(h, "H")
    if h.shape != (2, 2):
        raise ValueError(f"expected 2x2, got {h.shape}")
    if abs(h[0, 1] - h[1, 0]) > 1e-8 * (1.0 + np.max(np.abs(h))):
        raise ValueError("matrix is not symmetric")
    a, d = h[0, 0], h[1, 1]
    b = 0.5 * (h[0, 1] + h[1, 0])
    return 0.5 * (a + d - math.hypot(a - d, 2.0 * b))


def _ldexp(x, e):
    # exact scaling of a complex array by 2**e
    x = np.asarray(x, dtype=complex)
    return np.ldexp(x.real, e) + 1j * np.ldexp(x.imag, e)


def _exponent(x):
    return math.frexp(float(np.max(np.abs(x))))[1]


def _norm(x):
    # 2-norm computed on a power-of-two rescaled copy so squares of tiny entries do not underflow
    if not np.any(x):
        return 0.0
    e = _exponent(x)
    return math.ldexp(float(np.linalg.norm(_ldexp(x, -e))), e)


def hessenberg(a):
    """Reduce a square matrix to upper Hessenberg form by Householder reflections."""
    h = np.array(a, dtype=complex)
    n = h.shape[0]
    for k in range(n - 2):
        x = h[k + 1:, k].copy()
        alpha = _norm(x)
        if alpha == 0.0:
            continue
        phase = np.exp(1j * np.angle(x[0])) if x[0] != 0 else 1.0
        v = x
        v[0] += phase * alpha
        v = _ldexp(v, -_exponent(v))
        v /= np.linalg.norm(v)
        h[k + 1:, k:] -= 2.0 * np.outer(v, v.conj() @ h[k + 1:, k:])
        h[:, k + 1:] -= 2.0 * np.outer(h[:, k + 1:] @ v, v.conj())
        h[k + 2:, k] = 0.0
    return h


def _wilkinson_shift(a, b, c, d):
    # eigenvalue of [[a, b], [c, d]] closer to d
    tr = a + d
    det = a * d - b * c
    disc = np.sqrt(tr * tr / 4.0 - det)
    l1 = tr / 2.0 + disc
    l2 = tr / 2.0 - disc
    return l1 if abs(l1 - d) < abs(l2 - d) else l2


def _isolate(m):
    # permutation step of balancing: a row (or column) whose off-diagonal part
    # vanishes on the active index set carries an exact eigenvalue
    active = list(range(m.shape[0]))
    found = []
    changed = True
    while changed and active:
        changed = False
        for i in active:
            others = [j for j in active if j != i]
            if not np.any(m[i, others]) or not np.any(m[others, i]):
                found.append(complex(m[i, i]))
                active.remove(i)
                changed = True
                break
    return found, active


def _eig2(a, b, c, d):
    # both eigenvalues of [[a, b], [c, d]]; the smaller root comes from the
    # determinant only when the larger one is not itself a cancellation residue
    mid = 0.5 * (a + d)
    disc = np.sqrt(0.25 * (a - d) ** 2 + b * c)
    l1 = mid + disc if abs(mid + disc) >= abs(mid - disc) else mid - disc
    size = max(abs(a), abs(b), abs(c), abs(d))
    l2 = (a * d - b * c) / l1 if abs(l1) >= size else (a + d) - l1
    return complex(l1), complex(l2)


def eigvals_dense(m, tol=1e-10, max_sweeps=None):
    """
    All eigenvalues of a small dense square matrix.

    The matrix is rescaled by an exact power of two and entries left below
    the smallest normal number are flushed to zero.  Eigenvalues exposed by
    a row or column permutation are then split off exactly; the rest goes
    through Hessenberg reduction and single-shift
    complex QR with Wilkinson shifts, finishing 2x2 blocks in closed form.
    A subdiagonal entry is deflated once it drops below
    ``tol`` relative to its neighbouring diagonal entries, or below machine
    epsilon relative to the whole matrix.

    Parameters
    ----------
    m : array_like, shape (n, n)
        Matrix, ``n <= 16``.
    tol : float
        Deflation tolerance.
    max_sweeps : int, optional
        QR sweep budget, default ``100 * n**2``.

    Returns
    -------
    list of complex
    """
    m = as_matrix(m, "M")
    n = m.shape[0]
    if m.shape[1] != n:
        raise ValueError(f"matrix must be square, got {m.shape}")
    if n > 16:
        raise ValueError("eigvals_dense is meant for n <= 16")
    if n == 0:
        return []
    if max_sweeps is None:
        max_sweeps = 100 * n * n
    peak = float(np.max(np.abs(m)))
    if peak == 0.0:
        return [0j] * n
    # exact power-of-two rescaling to a peak in [1/2, 1); what is still
    # subnormal afterwards lies far below rounding level and is flushed
    e = math.frexp(peak)[1]
    m = np.ldexp(m, -e)
    m[np.abs(m) < np.finfo(float).tiny] = 0.0
    isolated, active = _isolate(m)
    n = len(active)
    if n == 0:
        return [complex(z) for z in _ldexp(isolated, e)]
    m = m[np.ix_(active, active)]
    h = hessenberg(m)
    scale = max(float(np.max(np.abs(h))), np.finfo(float).tiny)
    floor = np.finfo(float).eps * scale
    eig = [0j] * n
    hi = n - 1
    sweeps = 0
    since_deflation = 0
    while hi >= 0:
        if hi == 0:
            eig[0] = complex(h[0, 0])
            break
        lo = hi
        while lo > 0:
            local = abs(h[lo, lo]) + abs(h[lo - 1, lo - 1])
            if local == 0.0:
                local = scale
            if abs(h[lo, lo - 1]) < max(tol * local, floor):
                h[lo, lo - 1] = 0.0
                break
            lo -= 1
        if lo == hi:
            eig[hi] = complex(h[hi, hi])
            hi -= 1
            since_deflation = 0
            continue
        if lo == hi - 1:
            eig[lo], eig[hi] = _eig2(h[lo, lo], h[lo, hi], h[hi, lo], h[hi, hi])
            hi -= 2
            since_deflation = 0
            continue
        sweeps += 1
        since_deflation += 1
        if sweeps > max_sweeps:
            raise ConvergenceFailure(f"QR iteration did not converge in {max_sweeps} sweeps")
        blk = h[lo:hi + 1, lo:hi + 1]
        if since_deflation % 11 == 10:
            # exceptional shift to break cycles
            mu = blk[-1, -1] + 0.75 * abs(blk[-1, -2])
        else:
            mu = _wilkinson_shift(blk[-2, -2], blk[-2, -1], blk[-1, -2], blk[-1, -1])
        k = blk.shape[0]
        blk -= mu * np.eye(k)
        rots = []
        for i in range(k - 1):
            x, y = blk[i, i], blk[i + 1, i]
            r = math.hypot(abs(x), abs(y))
            if r == 0.0:
                c, s = 1.0, 0j
            else:
                c, s = x / r, y / r
            g = np.array([[np.conj(c), np.conj(s)], [-s, c]])
            blk[i:i + 2, i:] = g @ blk[i:i + 2, i:]
            rots.append(g)
        for i, g in enumerate(rots):
            blk[:i + 2, i:i + 2] = blk[:i + 2, i:i + 2] @ g.conj().T
        blk += mu * np.eye(k)
        h[lo:hi + 1, lo:hi + 1] = blk
    if np.isrealobj(m):
        eig = [complex(z.real, 0.0) if abs(z.imag) <= tol * max(1.0, abs(z)) else z for z in eig]
    return [complex(z) for z in _ldexp(isolated + eig, e)]


def spectral_radius(m):
    """Largest eigenvalue modulus of ``m``."""
    return max(abs(z) for z in eigvals_dense(m, 1e-10))


def _default_step(x):
    return 1e-5 * max(1.0, float(np.linalg.norm(x)))


def fd_gradient(f, x, h=None):
    """Central-difference gradient of a scalar function."""
    x = as_vector(x, "x")
    if h is None:
        h = _default_step(x)
    if not h > 0:
        raise ValueError("step must be positive")
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        fp, fm = f(x + e), f(x - e)
        if not (math.isfinite(fp) and math.isfinite(fm)):
            raise NonFiniteError(f"non-finite function value near coordinate {i}")
        g[i] = (fp - fm) / (2.0 * h)
    return g


def fd_jacobian(g, x, h=None):
    """Central-difference Jacobian of a vector function (rows = outputs)."""
    x = as_vector(x, "x")
    if h is None:
        h = _default_step(x)
    cols = []
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        gp, gm = np.asarray(g(x + e), float), np.asarray(g(x - e), float)
        if not (np.all(np.isfinite(gp)) and np.all(np.isfinite(gm))):
            raise NonFiniteError(f"non-finite gradient near coordinate {i}")
        cols.append((gp - gm) / (2.0 * h))
    return np.column_stack(cols)


def fd_hessian(grad, x, h=None, return_asymmetry=False):
    """Hessian as the symmetrized central-difference Jacobian of ``grad``."""
    jac = fd_jacobian(grad, x, h)
    hess = 0.5 * (jac + jac.T)
    if return_asymmetry:
        return hess, float(np.max(np.abs(jac - jac.T)))
    return hess
