"""Small dense Hermitian helpers: projectors, asymptotic shift roots and
closed-form solutions for constant matrix potentials.

Matrices are plain complex ndarrays; the functions below validate the
contracts (Hermitian within 1e-12, projector within 1e-10) instead of
wrapping arrays in classes.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import InconsistencyError, ProblemSpecError

TOL_HERMITIAN = 1e-12
TOL_PROJECTOR = 1e-10
TOL_BC_COMPAT = 1e-10
TOL_MULTIPLE_ROOT = 1e-8
SERIES_RADIUS = 1e-6


def require_hermitian(a, tol=TOL_HERMITIAN, name="matrix"):
    """Validate and return `a` as a square complex Hermitian ndarray."""
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ProblemSpecError(f"{name} must be square, got shape {a.shape}")
    scale = max(1.0, float(np.abs(a).max(initial=0.0)))
    if np.abs(a - a.conj().T).max(initial=0.0) > tol * scale:
        raise ProblemSpecError(f"{name} is not Hermitian within {tol:g}")
    return a


def require_projector(p, tol=TOL_PROJECTOR, name="projector"):
    """Validate that `p` is an orthogonal projector (p^2 = p = p^dagger)."""
    p = require_hermitian(p, tol=tol, name=name)
    if np.abs(p @ p - p).max(initial=0.0) > tol:
        raise ProblemSpecError(f"{name} is not idempotent within {tol:g}")
    return p


def projector_rank(p):
    """Rank of an orthogonal projector (trace, rounded)."""
    return int(round(float(np.trace(p).real)))


def graph_projector(m):
    """Vertex projector of the star graph: every entry equals 1/m."""
    if m < 2:
        raise ProblemSpecError(f"graph projector needs dimension >= 2, got {m}")
    return np.full((m, m), 1.0 / m, dtype=complex)


def range_basis(p, tol=1e-8):
    """Orthonormal columns spanning the range of a projector."""
    w, v = np.linalg.eigh(require_projector(p))
    cols = v[:, w > 0.5]
    if cols.shape[1] != projector_rank(p):
        raise InconsistencyError("projector eigenvalues are not clustered at 0 and 1")
    return cols


def _check_bc(bc, projector):
    bc = require_hermitian(bc, tol=1e-10, name="boundary matrix")
    t = require_projector(projector)
    if np.abs(t @ bc @ t - bc).max(initial=0.0) > TOL_BC_COMPAT * max(1.0, np.abs(bc).max(initial=0.0)):
        raise ProblemSpecError("boundary matrix must equal its compression by the projector")
    return bc, t


def range_shifts(mean, bc, projector):
    """Shift roots attached to the projector range block.

    Returns the sorted eigenvalues of T(mean - bc)T restricted to Ran T;
    they steer the half-integer eigenvalue series.
    """
    mean = require_hermitian(mean, tol=1e-10, name="mean potential")
    bc, t = _check_bc(bc, projector)
    b = range_basis(t)
    if b.shape[1] == 0:
        return np.zeros(0)
    block = b.conj().T @ (mean - bc) @ b
    return np.sort(np.linalg.eigvalsh(block))


def complement_shifts(mean, projector):
    """Shift roots of the complement block: eigenvalues of the compression
    of the mean potential onto the kernel of the projector."""
    mean = require_hermitian(mean, tol=1e-10, name="mean potential")
    t = require_projector(projector)
    b = range_basis(np.eye(t.shape[0]) - t)
    if b.shape[1] == 0:
        return np.zeros(0)
    block = b.conj().T @ mean @ b
    return np.sort(np.linalg.eigvalsh(block))


def complement_shifts_literal(bc, projector):
    """Diagnostic variant built from the boundary matrix alone.

    For any admissible boundary matrix the compression onto the complement
    vanishes identically, so this returns (numerically) zeros; it is kept
    only to expose that degeneracy.
    """
    bc, t = _check_bc(bc, projector)
    b = range_basis(np.eye(t.shape[0]) - t)
    if b.shape[1] == 0:
        return np.zeros(0)
    return np.sort(np.linalg.eigvalsh(b.conj().T @ bc @ b))


def spectral_shifts(mean, bc, projector):
    """All m shift values, range block first, each block sorted."""
    return np.concatenate([range_shifts(mean, bc, projector),
                           complement_shifts(mean, projector)])


def compressed_mean(mean, bc, projector):
    """Block-compressed mean matrix T(mean - bc)T + (I-T) mean (I-T)."""
    mean = require_hermitian(mean, tol=1e-10, name="mean potential")
    bc, t = _check_bc(bc, projector)
    tp = np.eye(t.shape[0]) - t
    return t @ (mean - bc) @ t + tp @ mean @ tp


def _group_indices(values, tol):
    """Split sorted values into batches of (numerically) equal ones."""
    groups, start = [], 0
    for i in range(1, len(values) + 1):
        if i == len(values) or values[i] - values[start] > tol:
            groups.append(list(range(start, i)))
            start = i
    return groups


def shift_projectors(compressed, projector, shifts, tol=1e-8):
    """Spectral projectors of the compressed mean matrix, one per shift.

    Entries s and k coincide whenever shifts[s] == shifts[k] within the
    same block. Raises if the block eigenvalues disagree with `shifts`.
    """
    theta = require_hermitian(compressed, tol=1e-10, name="compressed mean")
    t = require_projector(projector)
    m = t.shape[0]
    p = projector_rank(t)
    shifts = np.asarray(shifts, dtype=float)
    if shifts.shape != (m,):
        raise ProblemSpecError(f"expected {m} shift values, got {shifts.shape}")

    out = np.zeros((m, m, m), dtype=complex)
    for block, proj in ((slice(0, p), t), (slice(p, m), np.eye(m) - t)):
        b = range_basis(proj)
        if b.shape[1] == 0:
            continue
        w, v = np.linalg.eigh(b.conj().T @ theta @ b)
        want = np.sort(shifts[block])
        if np.abs(np.sort(w) - want).max(initial=0.0) > tol * (1.0 + np.abs(want).max(initial=0.0)):
            raise InconsistencyError(
                "block eigenvalues of the compressed mean disagree with the shift roots")
        vecs = b @ v  # eigenvectors in the ambient space
        for idx in _group_indices(w, tol):
            cols = vecs[:, idx]
            a = cols @ cols.conj().T
            for i in idx:
                out[block.start + i] = a
    return out


def graph_shift_projectors(omega, shifts, tol=TOL_MULTIPLE_ROOT):
    """Graph-case projectors by the residue formula.

    The first projector is the vertex projector; the others come from the
    adjugate-style matrix divided by the derivative of the complement
    characteristic polynomial at each simple root. Multiple roots fall back
    to the general spectral construction (the residue formula assumes
    simple poles).
    """
    omega = np.asarray(omega, dtype=float)
    m = omega.size
    shifts = np.asarray(shifts, dtype=float)
    if shifts.shape != (m,):
        raise ProblemSpecError(f"expected {m} shift values, got {shifts.shape}")
    t = graph_projector(m)

    tail = np.sort(shifts[1:])
    if np.diff(tail).min(initial=np.inf) < tol:
        warnings.warn("multiple complement roots: falling back to the spectral "
                      "construction of the projectors", stacklevel=2)
        tp = np.eye(m) - t
        theta = shifts[0] * t + tp @ np.diag(omega).astype(complex) @ tp
        return shift_projectors(theta, t, shifts, tol=tol)

    # d/dz prod(z - omega_j) / m and its derivative, via coefficient arrays
    full = np.poly(omega)
    p2 = np.polyder(full) / m
    dp2 = np.polyder(p2)

    out = np.zeros((m, m, m), dtype=complex)
    out[0] = t
    for s in range(1, m):
        z = shifts[s]
        a = np.zeros((m, m))
        for j in range(m):
            others = np.delete(omega, j)
            a[j, j] = np.polyval(np.polyder(np.poly(others)), z)
            for k in range(m):
                if k != j:
                    rest = np.delete(omega, [j, k])
                    a[j, k] = -np.prod(z - rest)
        out[s] = a / (m * np.polyval(dp2, z))
        if np.abs(out[s] @ out[s] - out[s]).max() > 1e-8:
            raise InconsistencyError(
                f"residue formula did not produce a projector at shift {z:g}")
    return out


@dataclass(frozen=True)
class ConstantBasis:
    """Eigen-factorization C = U^dagger diag(levels) U of a constant potential."""

    matrix: np.ndarray
    levels: np.ndarray
    transform: np.ndarray

    @classmethod
    def from_matrix(cls, c):
        c = require_hermitian(c, tol=1e-10, name="constant potential")
        if np.abs(c - np.diag(np.diagonal(c))).max(initial=0.0) == 0.0:
            levels = np.diagonal(c).real.copy()
            u = np.eye(c.shape[0], dtype=complex)
        else:
            w, v = np.linalg.eigh(c)
            levels, u = w, v.conj().T
        basis = cls(matrix=c, levels=levels, transform=u)
        recon = u.conj().T @ np.diag(levels) @ u
        if np.abs(recon - c).max(initial=0.0) > 1e-10 * (1.0 + np.abs(c).max(initial=0.0)):
            raise InconsistencyError("eigen-factorization failed to reproduce the matrix")
        return basis

    def shifted(self, c0):
        """Basis of matrix + c0*I (same transform)."""
        m = self.matrix + c0 * np.eye(self.matrix.shape[0])
        return ConstantBasis(matrix=m, levels=self.levels + c0, transform=self.transform)

    @property
    def dim(self):
        return self.matrix.shape[0]


def trig_pair(w, x):
    """Stable (sin(sqrt(w)x)/sqrt(w), cos(sqrt(w)x)) for complex w.

    Entire in w; a Taylor branch takes over for |w| below the series
    radius, where the direct quotient would divide by ~0.
    """
    w = np.asarray(w, dtype=complex)
    xb = np.broadcast_to(np.asarray(x, dtype=float), w.shape)
    s = np.empty(w.shape, dtype=complex)
    c = np.empty(w.shape, dtype=complex)
    small = np.abs(w) < SERIES_RADIUS
    if small.any():
        u = w[small] * xb[small] ** 2
        xs = xb[small]
        s[small] = xs * (1 - u / 6 * (1 - u / 20 * (1 - u / 42 * (1 - u / 72))))
        c[small] = 1 - u / 2 * (1 - u / 12 * (1 - u / 30 * (1 - u / 56)))
    big = ~small
    if big.any():
        nu = np.sqrt(w[big])
        s[big] = np.sin(nu * xb[big]) / nu
        c[big] = np.cos(nu * xb[big])
    if s.ndim == 0:
        return complex(s), complex(c)
    return s, c


def constant_solution(basis, lam, x):
    """Sine-type solution of the constant-potential equation.

    Returns (value, derivative) at position x for spectral parameter lam:
    channels sin(nu_i x)/nu_i and cos(nu_i x) with nu_i^2 = lam - level_i,
    conjugated back by the basis transform.
    """
    u = basis.transform
    w = np.asarray(lam, dtype=complex) - basis.levels
    s, c = trig_pair(w, x)
    uh = u.conj().T
    return uh @ (np.asarray(s)[:, None] * u), uh @ (np.asarray(c)[:, None] * u)
