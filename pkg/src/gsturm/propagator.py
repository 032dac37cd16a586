"""Batched propagation of matrix solutions of -Y'' + Q(x)Y = lam Y.

One macro step applies the exact propagator of the locally frozen
(midpoint) potential over the full step and over its two halves, and
combines them by Richardson extrapolation.  The trigonometric kernels are
exact in lam, so the step error comes from the potential's variation only
and the scheme is globally fourth order with lam-independent constants;
constant potentials propagate to machine precision.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import PoleProximityError, ResolutionError

BASE_STEPS = 256
COND_LIMIT = 1e12


def default_steps(max_abs_lam, base=BASE_STEPS):
    """Smallest sanctioned step count for |lam| up to max_abs_lam."""
    need = int(np.ceil(2.0 * np.pi * np.sqrt(1.0 + max_abs_lam) / 64.0)) * 64
    return max(base, need)


def _require_steps(nsteps, lams):
    mx = float(np.abs(lams).max(initial=0.0))
    need = default_steps(mx, base=256)
    if nsteps < need:
        raise ResolutionError(
            f"mesh of {nsteps} steps cannot resolve |lam| = {mx:.3g}; "
            f"use at least {need} steps")


def _midpoint_cache(problem, nsteps):
    """Eigen-factorizations of Q at the quarter/mid/three-quarter points."""
    cache = problem.cache()
    key = ("midpoints", nsteps)
    if key not in cache:
        h = np.pi / nsteps
        x0 = np.arange(nsteps) * h
        pts = np.stack([x0 + 0.25 * h, x0 + 0.5 * h, x0 + 0.75 * h], axis=1)
        q = problem.grid.at(pts.ravel()).reshape(nsteps, 3, problem.m, problem.m)
        w, v = np.linalg.eigh(q)
        cache[key] = (w, v)
    return cache[key]


def _constant_factorization(problem):
    """Eigen-factorization of a constant potential, or None."""
    cache = problem.cache()
    if "constant" not in cache:
        vals = problem.grid.values
        if np.abs(vals - vals[0]).max(initial=0.0) == 0.0:
            w, v = np.linalg.eigh(vals[0])
            cache["constant"] = (w, v)
        else:
            cache["constant"] = None
    return cache["constant"]


def _fast_trig(w, eta):
    """Branchless stable (sin(sqrt(w)eta)/sqrt(w), cos(sqrt(w)eta))."""
    small = np.abs(w) < 1e-6
    wsafe = np.where(small, 1.0, w)
    nu = np.sqrt(wsafe)
    s = np.sin(nu * eta) / nu
    c = np.cos(nu * eta)
    if small.any():
        u = w * (eta * eta)
        s = np.where(small, eta * (1.0 - u / 6.0 * (1.0 - u / 20.0 * (1.0 - u / 42.0))), s)
        c = np.where(small, 1.0 - u / 2.0 * (1.0 - u / 12.0 * (1.0 - u / 30.0)), c)
    return s, c


def _substep(w_eigs, vecs, lams, eta, y, yp):
    """Exact constant-potential propagator across eta applied to (y, yp)."""
    wch = lams[:, None] - w_eigs[None, :]
    s, c = _fast_trig(wch, eta)
    vh = vecs.conj().T
    z = vh @ np.concatenate([y, yp], axis=-1)
    m = y.shape[-1]
    a, b = z[..., :m], z[..., m:]
    z2 = np.concatenate([c[:, :, None] * a + s[:, :, None] * b,
                         -(wch * s)[:, :, None] * a + c[:, :, None] * b], axis=-1)
    z2 = vecs @ z2
    return z2[..., :m], z2[..., m:]


def _apply_blocks(v, vh, s, c, ws, z, m):
    """One frozen-potential substep on the stacked state (B, m, 2m)."""
    za = vh @ z
    a, b = za[..., :m], za[..., m:]
    out = np.empty_like(za)
    out[..., :m] = c[:, :, None] * a + s[:, :, None] * b
    out[..., m:] = -ws[:, :, None] * a + c[:, :, None] * b
    return v @ out


def _macro_step(cache, i, lams, h, z, m, forward=True):
    """Richardson-extrapolated frozen-potential step on stacked state."""
    w, v = cache
    wch = lams[None, :, None] - w[i][:, None, :]          # (3, B, m)
    eta = h if forward else -h
    etas = np.array([0.5 * eta, eta, 0.5 * eta])[:, None, None]
    s3, c3 = _fast_trig(wch, etas)
    ws3 = wch * s3
    vh = v[i].conj().transpose(0, 2, 1)
    zf = _apply_blocks(v[i, 1], vh[1], s3[1], c3[1], ws3[1], z, m)
    first, second = (0, 2) if forward else (2, 0)
    zh = _apply_blocks(v[i, first], vh[first], s3[first], c3[first], ws3[first], z, m)
    zh = _apply_blocks(v[i, second], vh[second], s3[second], c3[second], ws3[second], zh, m)
    return (4.0 * zh - zf) / 3.0


@dataclass
class SolutionPath:
    """Batched solution values; trajectories are node-indexed when stored."""

    lam: np.ndarray
    value: np.ndarray       # Y at the terminal point, shape (B, m, m)
    derivative: np.ndarray  # Y' at the terminal point
    mesh: np.ndarray | None = None
    values: np.ndarray | None = None       # (nsteps+1, B, m, m)
    derivatives: np.ndarray | None = None


def _propagate(problem, lams, y0, yp0, nsteps, forward, trajectory):
    lams = np.atleast_1d(np.asarray(lams, dtype=complex))
    const = _constant_factorization(problem)
    if const is not None and not trajectory:
        # constant potential: the frozen-potential propagator is exact in one step
        bsz, m = lams.size, problem.m
        y = np.broadcast_to(np.asarray(y0, dtype=complex), (bsz, m, m)).copy()
        yp = np.broadcast_to(np.asarray(yp0, dtype=complex), (bsz, m, m)).copy()
        eta = np.pi if forward else -np.pi
        y, yp = _substep(const[0], const[1], lams, eta, y, yp)
        return SolutionPath(lam=lams, value=y, derivative=yp)
    if nsteps is None:
        nsteps = default_steps(float(np.abs(lams).max(initial=0.0)))
    _require_steps(nsteps, lams)
    cache = _midpoint_cache(problem, nsteps)
    h = np.pi / nsteps
    bsz, m = lams.size, problem.m
    z = np.empty((bsz, m, 2 * m), dtype=complex)
    z[..., :m] = np.asarray(y0, dtype=complex)
    z[..., m:] = np.asarray(yp0, dtype=complex)

    traj_y = traj_yp = None
    if trajectory:
        traj_y = np.empty((nsteps + 1, bsz, m, m), dtype=complex)
        traj_yp = np.empty_like(traj_y)
        idx0 = 0 if forward else nsteps
        traj_y[idx0], traj_yp[idx0] = z[..., :m], z[..., m:]

    steps = range(nsteps) if forward else range(nsteps - 1, -1, -1)
    for i in steps:
        z = _macro_step(cache, i, lams, h, z, m, forward=forward)
        if trajectory:
            node = i + 1 if forward else i
            traj_y[node], traj_yp[node] = z[..., :m], z[..., m:]

    mesh = np.linspace(0.0, np.pi, nsteps + 1) if trajectory else None
    return SolutionPath(lam=lams, value=z[..., :m].copy(),
                        derivative=z[..., m:].copy(), mesh=mesh,
                        values=traj_y, derivatives=traj_yp)


def propagate_sine(problem, lams, nsteps=None, trajectory=False):
    """Solution with Y(0) = 0, Y'(0) = I, integrated to x = pi."""
    m = problem.m
    return _propagate(problem, lams, np.zeros((m, m)), np.eye(m), nsteps, True, trajectory)


def propagate_boundary(problem, lams, nsteps=None, trajectory=False):
    """Solution pinned at the right end: Y(pi) = T, Y'(pi) = (I-T) + HT,
    integrated back to x = 0.  Satisfies the vertex condition identically."""
    t = problem.projector
    yp0 = problem.complement + problem.bc_matrix @ t
    return _propagate(problem, lams, t, yp0, nsteps, False, trajectory)


def boundary_form(problem, value, derivative):
    """Vertex boundary form T(Y'(pi) - H Y(pi)) - (I-T) Y(pi), batched."""
    t, h = problem.projector, problem.bc_matrix
    return np.einsum("ij,...jk->...ik", t, derivative - np.einsum(
        "ij,...jk->...ik", h, value)) - np.einsum("ij,...jk->...ik", problem.complement, value)


def char_matrix(problem, lams, nsteps=None):
    """Boundary form evaluated on the sine-type solution, shape (B, m, m)."""
    path = propagate_sine(problem, lams, nsteps=nsteps)
    return boundary_form(problem, path.value, path.derivative)


def char_det(problem, lams, nsteps=None):
    """Characteristic determinant; zero exactly at the eigenvalues."""
    v = char_matrix(problem, np.atleast_1d(lams), nsteps=nsteps)
    return np.linalg.det(v)


def char_singular_values(problem, lams, nsteps=None):
    """Singular values of the boundary form on the sine solution, (B, m)."""
    v = char_matrix(problem, np.atleast_1d(lams), nsteps=nsteps)
    return np.linalg.svd(v, compute_uv=False)


def weyl_matrix(problem, lams, nsteps=None, cond_limit=COND_LIMIT):
    """Weyl matrix M(lam) = Psi'(0) Psi(0)^{-1}, batched over lam.

    Raises PoleProximityError when Psi(0) is numerically singular, which
    signals that lam sits on (or too close to) an eigenvalue.
    """
    lams = np.atleast_1d(np.asarray(lams, dtype=complex))
    path = propagate_boundary(problem, lams, nsteps=nsteps)
    y0, yp0 = path.value, path.derivative
    cond = np.linalg.cond(y0)
    if np.any(~np.isfinite(cond)) or cond.max(initial=0.0) > cond_limit:
        bad = lams[int(np.argmax(np.where(np.isfinite(cond), cond, np.inf)))]
        raise PoleProximityError(f"Weyl matrix requested too close to an eigenvalue "
                                 f"(condition {cond.max():.2e} at lam = {bad:.6g})")
    mt = np.linalg.solve(np.swapaxes(y0, -1, -2), np.swapaxes(yp0, -1, -2))
    return np.swapaxes(mt, -1, -2)


def wronskian(y, yp, z, zp):
    """Matrix Wronskian <Y, Z> = Y Z' - Y' Z for batched values."""
    return y @ zp - yp @ z
