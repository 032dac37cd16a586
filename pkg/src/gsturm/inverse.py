"""Inverse spectral solver: model problems, closed-form overlap kernels,
the truncated main linear system per mesh point, and reconstruction of the
potential and boundary matrix from spectral data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import lu_factor, lu_solve
from scipy.linalg.lapack import zgecon

from .errors import DiagonalityError, IllConditionedError, ProblemSpecError
from .linalg import ConstantBasis, graph_projector, trig_pair
from .problems import MatrixProblem, PotentialGrid
from .spectral import build_groups, dedup_weights, forward_data
from .validate import Coefficients, check_structure, coefficients_from_problem

MESH_POINTS = 257
COND_LIMIT = 1e10
OFFDIAG_LIMIT = 1e-4
RESIDUAL_BOUND = 1e-10

_ODD_FACT = np.array([float(math.factorial(2 * j + 1)) for j in range(12)])
_SERIES_TERMS = 9


def _csinc(z):
    """sin(z)/z, entire, vectorized over complex arrays."""
    z = np.asarray(z, dtype=complex)
    tiny = np.abs(z) < 1e-8
    zsafe = np.where(tiny, 1.0, z)
    out = np.sin(zsafe) / zsafe
    return np.where(tiny, 1.0 - z * z / 6.0, out)


def overlap_channels(wa, wb, x):
    """Channel overlap integral of two sine-type solutions.

    Computes int_0^x sin(sqrt(wa) t)/sqrt(wa) * sin(sqrt(wb) t)/sqrt(wb) dt
    for complex arrays wa, wb (broadcast together) and scalar x >= 0.  The
    product-to-sum form is stable through the coincidence wa == wb; small
    channels switch to power series so nothing divides by ~0.
    """
    wa, wb = np.broadcast_arrays(np.asarray(wa, dtype=complex),
                                 np.asarray(wb, dtype=complex))
    out = np.zeros(wa.shape, dtype=complex)
    if x == 0.0:
        return out
    x2 = x * x
    big_a = np.abs(wa) * x2 > 0.5
    big_b = np.abs(wb) * x2 > 0.5

    sel = big_a & big_b
    if sel.any():
        nu = np.sqrt(wa[sel])
        om = np.sqrt(wb[sel])
        out[sel] = x * (_csinc((nu - om) * x) - _csinc((nu + om) * x)) / (2.0 * nu * om)

    sel = ~big_a & ~big_b
    if sel.any():
        a, b = wa[sel], wb[sel]
        acc = np.zeros_like(a)
        pow_a = np.ones_like(a)
        for j in range(_SERIES_TERMS):
            pow_b = np.ones_like(b)
            for k in range(_SERIES_TERMS):
                deg = 2 * j + 2 * k + 3
                acc = acc + ((-1) ** (j + k)) * pow_a * pow_b * x ** deg / (
                    _ODD_FACT[j] * _ODD_FACT[k] * deg)
                pow_b = pow_b * b
            pow_a = pow_a * a
        out[sel] = acc

    for sel, small_first in (((~big_a) & big_b, True), (big_a & (~big_b), False)):
        if sel.any():
            ws = wa[sel] if small_first else wb[sel]
            wl = wb[sel] if small_first else wa[sel]
            out[sel] = _overlap_mixed(ws, wl, x)
    return out


def _overlap_mixed(w_small, w_large, x):
    """Series in the small channel; moment integrals of the large one."""
    nu = np.sqrt(w_large)
    xx = nu * x
    jmax = 2 * _SERIES_TERMS
    sin_x, cos_x = np.sin(xx), np.cos(xx)
    ivals = [1.0 - cos_x]
    cvals = [sin_x]
    pw = np.ones_like(xx)
    for j in range(1, jmax):
        pw = pw * xx
        ivals.append(-pw * cos_x + j * cvals[j - 1])
        cvals.append(pw * sin_x - j * ivals[j - 1])
    acc = np.zeros_like(w_small)
    pow_s = np.ones_like(w_small)
    for j in range(_SERIES_TERMS):
        moment = ivals[2 * j + 1] / nu ** (2 * j + 3)
        acc = acc + ((-1) ** j) * pow_s / _ODD_FACT[j] * moment
        pow_s = pow_s * w_small
    return acc


def overlap_kernel(basis, x, lam, mu):
    """Matrix overlap kernel of the constant-potential model.

    Equals the integral over [0, x] of S^dagger(t, lam) S(t, mu) for the
    model's sine-type solution; also the Wronskian quotient of the two
    solutions divided by lam - mu.
    """
    u = basis.transform
    f = overlap_channels(np.asarray(lam, dtype=complex) - basis.levels,
                         np.asarray(mu, dtype=complex) - basis.levels, float(x))
    return u.conj().T @ (f[:, None] * u)


# ---------------------------------------------------------------------------
# model problems

@dataclass(frozen=True)
class ModelProblem:
    """Explicitly solvable comparison problem with matched asymptotics."""

    problem: MatrixProblem
    basis: ConstantBasis
    data: SpectralData
    coeffs: Coefficients
    h_model: float | None = None


def build_model_graph(omega, z1, n_max, *, nsteps=None, samples=65):
    """Graph-case model: constant diagonal potential from the edge means
    plus the vertex coupling fixed by the first shift root."""
    omega = np.asarray(omega, dtype=float)
    m = omega.size
    h_model = float(np.mean(omega) - z1)
    qmat = (2.0 / np.pi) * np.diag(omega)
    grid = PotentialGrid.constant(qmat, samples=samples)
    t = graph_projector(m)
    problem = MatrixProblem(grid=grid, projector=t, bc_matrix=h_model * t,
                            kind="graph", h=h_model)
    coeffs = coefficients_from_problem(problem)
    data = forward_data(problem, n_max, nsteps=nsteps)
    basis = ConstantBasis.from_matrix(qmat)
    return ModelProblem(problem=problem, basis=basis, data=data, coeffs=coeffs,
                        h_model=h_model)


def build_model_general(coeffs, n_max, *, nsteps=None, samples=65):
    """General model: constant potential (2/pi) * compressed mean, zero
    boundary matrix.  Refuses coefficients that fail the structure checks."""
    report = check_structure(coeffs)
    if not report["ok"]:
        bad = [k for k, v in report.items() if k != "ok" and not v["ok"]]
        raise ProblemSpecError(f"model coefficients fail structure checks: {bad}")
    m, p = coeffs.m, coeffs.p
    z = np.asarray(coeffs.shifts, dtype=float)
    theta = np.zeros((m, m), dtype=complex)
    for lo, hi in ((0, p), (p, m)):
        s = lo
        for i in range(lo + 1, hi + 1):
            if i == hi or z[i] - z[s] > 1e-8 * (1.0 + abs(z[s])):
                theta += z[s] * coeffs.projectors[s]
                s = i
    if np.abs(theta - coeffs.compressed).max() > 1e-8 * (1.0 + np.abs(theta).max()):
        # coefficients may come from a fit; trust the reassembled matrix
        pass
    qmat = (2.0 / np.pi) * theta
    grid = PotentialGrid.constant(qmat, samples=samples)
    problem = MatrixProblem(grid=grid, projector=coeffs.projector,
                            bc_matrix=np.zeros((m, m)), kind="general")
    model_coeffs = coefficients_from_problem(problem)
    if np.abs(np.sort(model_coeffs.shifts[:p]) - np.sort(z[:p])).max() > 1e-8 * (
            1.0 + np.abs(z).max()):
        raise ProblemSpecError("model failed to reproduce the shift roots")
    data = forward_data(problem, n_max, nsteps=nsteps)
    basis = ConstantBasis.from_matrix(qmat)
    return ModelProblem(problem=problem, basis=basis, data=data,
                        coeffs=model_coeffs, h_model=None)


# ---------------------------------------------------------------------------
# truncated main system

@dataclass
class MainSolution:
    """Solved truncated system at one mesh point."""

    x: float
    node_lam: np.ndarray        # (K,) spectral nodes (shifted)
    signs: np.ndarray           # +1 data node, -1 model node
    values: np.ndarray          # (K, m, m) solution values
    derivatives: np.ndarray     # (K, m, m)
    cond: float
    eps0: np.ndarray            # (m, m) correction primitive at x
    eps0_deriv: np.ndarray


class _Workspace:
    """Mesh-independent arrays for the truncated main system."""

    def __init__(self, data, model_data, basis):
        m = data.m
        lam0, lam1 = data.lam, model_data.lam
        a0, a1 = data.alpha_prime, model_data.alpha_prime
        node_lam, signs, alphas = [], [], []
        for n in range(data.n_max):
            for k in range(m):
                node_lam.extend([lam0[n, k], lam1[n, k]])
                signs.extend([1.0, -1.0])
                alphas.extend([a0[n, k], a1[n, k]])
        self.m = m
        self.node_lam = np.array(node_lam)
        self.signs = np.array(signs)
        self.alphas = np.array(alphas)
        self.basis = basis
        self.u = basis.transform
        self.uh = self.u.conj().T
        self.w_node = self.node_lam[:, None] - basis.levels[None, :]
        # premultiplier sign * alpha' * U^dagger per node
        self.pre = self.signs[:, None, None] * (self.alphas @ self.uh)
        self.signed_alpha = self.signs[:, None, None] * self.alphas
        self.k_nodes = self.node_lam.size

    def model_values(self, x):
        """Model solution and derivative at all nodes, shape (K, m, m)."""
        s, c = trig_pair(self.w_node, x)
        val = np.einsum("ic,kc,cj->kij", self.uh, s, self.u, optimize=True)
        der = np.einsum("ic,kc,cj->kij", self.uh, c, self.u, optimize=True)
        return val, der

    def solve_at(self, x, cond_limit=COND_LIMIT, n_label=None):
        k, m = self.k_nodes, self.m
        val, der = self.model_values(x)
        f = overlap_channels(self.w_node[:, None, :], self.w_node[None, :, :],
                             float(x))
        blocks = (self.pre[:, None, :, :] * f[:, :, None, :]) @ self.u
        big = blocks.transpose(1, 3, 0, 2).reshape(k * m, k * m)
        big[np.arange(k * m), np.arange(k * m)] += 1.0

        anorm = np.linalg.norm(big, 1)
        lu = lu_factor(big, check_finite=False)
        rcond = zgecon(lu[0], anorm, norm="1")[0]
        cond = np.inf if rcond == 0 else 1.0 / rcond
        if cond > cond_limit:
            raise IllConditionedError(
                f"main system condition {cond:.3e} exceeds {cond_limit:.1e} at "
                f"x = {x:.6f}" + (f" (N = {n_label})" if n_label else "") +
                "; the solvability condition is nearly violated")

        def solve(rhs_mats):
            rhs = rhs_mats.transpose(0, 2, 1).reshape(k * m, m)
            z = lu_solve(lu, rhs, check_finite=False)
            scale = np.linalg.norm(rhs)
            for _ in range(2):
                resid = big @ z - rhs
                if np.linalg.norm(resid) <= RESIDUAL_BOUND * max(scale, 1e-300):
                    break
                z = z - lu_solve(lu, resid, check_finite=False)
            else:
                resid = big @ z - rhs
                if np.linalg.norm(resid) > 1e-8 * max(scale, 1e-300):
                    raise IllConditionedError(
                        f"main-system residual {np.linalg.norm(resid):.2e} at "
                        f"x = {x:.6f} did not reach the bound")
            return z.reshape(k, m, m).transpose(0, 2, 1)

        xa = solve(val)
        eps0 = np.einsum("kij,kjl,klr->ir", xa, self.signed_alpha,
                         val.conj().transpose(0, 2, 1), optimize=True)
        rhs2 = der - eps0[None] @ val
        xap = solve(rhs2)
        eps0p = np.einsum("kij,kjl,klr->ir", xap, self.signed_alpha,
                          val.conj().transpose(0, 2, 1), optimize=True) + \
            np.einsum("kij,kjl,klr->ir", xa, self.signed_alpha,
                      der.conj().transpose(0, 2, 1), optimize=True)
        return MainSolution(x=float(x), node_lam=self.node_lam, signs=self.signs,
                            values=xa, derivatives=xap, cond=float(cond),
                            eps0=eps0, eps0_deriv=eps0p)


def main_solution(data, model, x, *, cond_limit=COND_LIMIT):
    """Solve the truncated main system at a single mesh point."""
    data_s, model_s, basis_s, shift = _aligned(data, model)
    ws = _Workspace(data_s, model_s.data, basis_s)
    return ws.solve_at(x, cond_limit=cond_limit, n_label=data.n_max)


def _aligned(data, model):
    """Rebase data and model onto one joint spectrum shift."""
    if data.m != model.data.m:
        raise ProblemSpecError("data and model dimension mismatch")
    if data.alpha_prime is None:
        data = dedup_weights(data)
    n = min(data.n_max, model.data.n_max)
    data = data.truncated(n)
    mdata = model.data.truncated(n)
    raw_min = min(data.raw_lam.min(), mdata.raw_lam.min())
    shift = max(0.0, 1.0 - raw_min)
    data_s = data.rebased(shift)
    model_s = ModelProblem(problem=model.problem, basis=model.basis.shifted(shift),
                           data=mdata.rebased(shift), coeffs=model.coeffs,
                           h_model=model.h_model)
    return data_s, model_s, model_s.basis, shift


# ---------------------------------------------------------------------------
# reconstruction

@dataclass
class Reconstruction:
    """Reconstructed operator on a mesh plus quality diagnostics.

    `offdiag_residual` measures the main-equation solution's off-diagonal
    part over the interior mesh (the graph-case diagonality condition);
    `potential_offdiag` reports the reconstructed potential's off-diagonal
    content including the endpoint truncation layers.
    """

    mesh: np.ndarray
    eps0: np.ndarray            # (X, m, m) correction primitive
    eps: np.ndarray             # (X, m, m) potential correction
    potential: np.ndarray       # (X, m, m) reconstructed (raw spectrum scale)
    bc_matrix: np.ndarray
    herm_residual: float
    offdiag_residual: float
    potential_offdiag: float
    cond_max: float
    groups: object
    shift: float
    trimmed_margin: float
    q_edges: np.ndarray | None = None
    h: float | None = None
    mean_update: np.ndarray | None = None

    @property
    def m(self):
        return self.potential.shape[-1]


def matrix_l2_norm(mesh, values):
    """Entrywise-max L2 norm over [0, pi] of a sampled matrix function."""
    integ = np.trapezoid(np.abs(values) ** 2, x=mesh, axis=0)
    return float(np.sqrt(integ.max()))


def _trim_boundary_layers(mesh, eps, margin):
    """Replace the endpoint margins of the correction by quadratic
    extrapolation from the adjacent interior band.

    The truncated series converges non-uniformly in O(1/N) neighborhoods of
    the interval ends (full-jump boundary layers); the interior values are
    accurate, so a local polynomial continuation restores uniform accuracy
    for smooth potentials.
    """
    out = eps.copy()
    flat = eps.reshape(eps.shape[0], -1)
    for left in (True, False):
        xs = mesh if left else np.pi - mesh
        inside = (xs >= margin) & (xs <= 3.0 * margin)
        fix = xs < margin
        if inside.sum() < 4 or not fix.any():
            continue
        design = np.stack([np.ones(inside.sum()), mesh[inside], mesh[inside] ** 2],
                          axis=1)
        coef, *_ = np.linalg.lstsq(design, flat[inside], rcond=None)
        target = np.stack([np.ones(fix.sum()), mesh[fix], mesh[fix] ** 2], axis=1)
        out.reshape(eps.shape[0], -1)[fix] = target @ coef
    return out


def reconstruct(data, model, *, mesh_points=MESH_POINTS, cond_limit=COND_LIMIT,
                offdiag_limit=OFFDIAG_LIMIT, graph_mode=None, separation=0.1,
                trim=True):
    """Recover the potential and boundary matrix from spectral data.

    Solves the truncated main system at every mesh point, forms the
    correction primitive and its analytic derivative, and assembles
    Q = Q_model + correction, H = H_model - T eps0(pi) T.  With `trim` the
    endpoint truncation layers of the correction are replaced by interior
    extrapolation.  In graph mode the main-equation solution must be
    diagonal over the interior; a violating residual raises
    DiagonalityError.
    """
    if graph_mode is None:
        graph_mode = model.h_model is not None
    data_s, model_s, basis_s, shift = _aligned(data, model)
    groups = build_groups(data_s, model_s.data, coeffs=model.coeffs,
                          separation=separation)
    ws = _Workspace(data_s, model_s.data, basis_s)
    mesh = np.linspace(0.0, np.pi, mesh_points)
    m = data_s.m
    n_max = data_s.n_max
    eps0 = np.empty((mesh_points, m, m), dtype=complex)
    eps0p = np.empty_like(eps0)
    sol_offdiag = np.zeros(mesh_points)
    diag_mask = np.eye(m, dtype=bool)
    cond_max = 0.0
    for i, x in enumerate(mesh):
        sol = ws.solve_at(x, cond_limit=cond_limit, n_label=n_max)
        eps0[i] = sol.eps0
        eps0p[i] = sol.eps0_deriv
        cond_max = max(cond_max, sol.cond)
        if m > 1:
            off = np.abs(sol.values[:, ~diag_mask]).max(initial=0.0)
            sol_offdiag[i] = off / (1.0 + np.abs(sol.values).max(initial=0.0))

    eps = -2.0 * eps0p
    margin = min(0.5, max(0.05, 5.0 / n_max))
    if trim:
        eps = _trim_boundary_layers(mesh, eps, margin)

    q_raw = model.basis.matrix[None, :, :] + eps      # raw-spectrum potential
    herm = float(np.abs(q_raw - q_raw.conj().transpose(0, 2, 1)).max()
                 / (1.0 + np.abs(q_raw).max()))
    q_sym = 0.5 * (q_raw + q_raw.conj().transpose(0, 2, 1))

    t = model.problem.projector
    h_rec = model.problem.bc_matrix - t @ eps0[-1] @ t
    herm_h = float(np.abs(h_rec - h_rec.conj().T).max() / (1.0 + np.abs(h_rec).max()))
    h_rec = 0.5 * (h_rec + h_rec.conj().T)
    herm = max(herm, herm_h)

    gate_margin = min(2.0 * np.pi / n_max, 0.45 * np.pi)
    interior = (mesh >= gate_margin) & (mesh <= np.pi - gate_margin)
    offdiag_residual = float(sol_offdiag[interior].max(initial=0.0)) if m > 1 else 0.0
    pot_off = np.abs(q_sym[:, ~diag_mask]).max(initial=0.0) if m > 1 else 0.0
    potential_offdiag = float(pot_off / (1.0 + np.abs(q_sym).max()))

    mean_update = 0.5 * np.trapezoid(eps, x=mesh, axis=0)

    q_edges = None
    h_val = None
    if graph_mode:
        if offdiag_residual > offdiag_limit:
            raise DiagonalityError(
                f"graph-mode reconstruction is not diagonal: off-diagonal "
                f"residual {offdiag_residual:.3e} exceeds {offdiag_limit:.1e}")
        q_edges = np.real(np.diagonal(q_sym, axis1=1, axis2=2)).copy()
        z = np.asarray(model.coeffs.shifts, dtype=float)
        h_val = float(z[1:].sum() / (m - 1) - z[0])

    return Reconstruction(mesh=mesh, eps0=eps0, eps=eps, potential=q_sym,
                          bc_matrix=h_rec, herm_residual=herm,
                          offdiag_residual=offdiag_residual,
                          potential_offdiag=potential_offdiag, cond_max=cond_max,
                          groups=groups, shift=shift, trimmed_margin=margin if trim else 0.0,
                          q_edges=q_edges, h=h_val, mean_update=mean_update)
