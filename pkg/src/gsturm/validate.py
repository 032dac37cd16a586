"""Asymptotic coefficients, residual sequences and the admissibility checks
run against spectral data (characterization-style diagnostics).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import linalg
from .errors import ProblemSpecError
from .spectral import _infer_p

KAPPA_TAIL_LIMIT = 1.0
WEIGHT_TAIL_LIMIT = 2.0
SURROGATE_THRESHOLD = 1e-6


@dataclass(frozen=True)
class Coefficients:
    """Leading spectral asymptotics: projector blocks, shift roots and the
    associated spectral projectors."""

    p: int
    projector: np.ndarray
    mean: np.ndarray
    compressed: np.ndarray
    shifts: np.ndarray
    projectors: np.ndarray      # (m, m, m)
    fitted: bool = False
    omega: np.ndarray | None = None

    @property
    def m(self):
        return self.projector.shape[0]

    @property
    def complement(self):
        return np.eye(self.m) - self.projector


def coefficients_from_problem(problem):
    """Exact coefficients of a given boundary value problem."""
    mean = 0.5 * problem.grid.integral()
    t = problem.projector
    shifts = linalg.spectral_shifts(mean, problem.bc_matrix, t)
    compressed = linalg.compressed_mean(mean, problem.bc_matrix, t)
    projs = linalg.shift_projectors(compressed, t, shifts)
    omega = np.diagonal(mean).real.copy() if problem.kind == "graph" else None
    return Coefficients(p=problem.p, projector=t, mean=mean, compressed=compressed,
                        shifts=shifts, projectors=projs, omega=omega)


def _centers(n_vals, k_idx, p):
    return np.where(k_idx < p, n_vals - 0.5, n_vals.astype(float))


def _z_tail_fit(rho, centers, n_vals, tail):
    """Least-squares shift roots from the square-root deviations.

    Fits n*(rho - center) = z/pi + a/n over the tail window, which removes
    the leading 1/n contamination of the residual sequence.
    """
    y = n_vals[:, None] * (rho - centers)
    nt = n_vals[tail].astype(float)
    design = np.stack([np.ones_like(nt), 1.0 / nt], axis=1)
    coef, *_ = np.linalg.lstsq(design, y[tail], rcond=None)
    return np.pi * coef[0]


def _projector_round(a, rank=None):
    """Nearest orthogonal projector (of the given rank) plus the residual."""
    a = 0.5 * (a + a.conj().T)
    w, v = np.linalg.eigh(a)
    if rank is None:
        keep = w > 0.5
    else:
        keep = np.zeros(w.size, dtype=bool)
        keep[np.argsort(-w)[:rank]] = True
    p = (v[:, keep] @ v[:, keep].conj().T) if keep.any() else np.zeros_like(a)
    resid = float(np.abs(w - keep.astype(float)).max(initial=0.0))
    return p, resid


def fit_coefficients(data, z_cluster_tol=0.05):
    """Estimate the asymptotic coefficients from a spectral data table.

    The shift roots come from tail averages of the square-root deviations;
    the projectors are rebuilt as exact spectral projectors of a fitted
    compressed-mean matrix, so the structural conditions hold by
    construction and the meaningful data checks are the residual bounds.
    """
    if data.alpha_prime is None:
        raise ProblemSpecError("fit_coefficients needs deduplicated data")
    m, n_max = data.m, data.n_max
    p = _infer_p(data)
    if p < 1 or p > m - 1:
        p = max(1, min(m - 1, p))
    rho = np.sqrt(np.maximum(data.raw_lam, 0.0))
    n_vals = np.arange(1, n_max + 1)
    tail = slice(max(1, n_max // 2), n_max)

    centers = np.stack([_centers(n_vals, np.full(n_max, k), p) for k in range(m)], axis=1)
    z_fit = _z_tail_fit(rho, centers, n_vals, tail)

    # projector from the range-block weight sums (rank pinned to p)
    pref_i = np.pi / (2.0 * (n_vals - 0.5) ** 2)
    alpha_i = data.alpha_prime[:, :p].sum(axis=1)
    t_fit, _ = _projector_round(
        np.mean(pref_i[tail, None, None] * alpha_i[tail], axis=0), rank=p)

    # fitted compressed mean from grouped weight sums
    pref = np.pi / (2.0 * n_vals ** 2)
    theta = np.zeros((m, m), dtype=complex)
    for lo, hi in ((0, p), (p, m)):
        order = np.argsort(z_fit[lo:hi])
        zb = z_fit[lo:hi][order]
        groups, start = [], 0
        for i in range(1, zb.size + 1):
            if i == zb.size or zb[i] - zb[start] > z_cluster_tol * (1.0 + abs(zb[start])):
                groups.append([lo + order[j] for j in range(start, i)])
                start = i
        for grp in groups:
            zbar = float(np.mean(z_fit[grp]))
            asum = data.alpha_prime[:, grp].sum(axis=1)
            proj, _ = _projector_round(
                np.mean(pref[tail, None, None] * asum[tail], axis=0), rank=len(grp))
            theta += zbar * proj
    tp = np.eye(m) - t_fit
    theta = t_fit @ theta @ t_fit + tp @ theta @ tp
    theta = 0.5 * (theta + theta.conj().T)

    shifts = np.concatenate([
        np.sort(np.linalg.eigvalsh(_compress(theta, t_fit))),
        np.sort(np.linalg.eigvalsh(_compress(theta, tp)))])
    projs = linalg.shift_projectors(theta, t_fit, shifts)
    return Coefficients(p=p, projector=t_fit, mean=theta, compressed=theta,
                        shifts=shifts, projectors=projs, fitted=True)


def _compress(a, proj):
    b = linalg.range_basis(proj)
    return b.conj().T @ a @ b


@dataclass
class ResidualReport:
    """Residual sequences of the eigenvalue and weight-sum asymptotics."""

    kappa: np.ndarray           # (N, m)
    kappa_partial_l2: np.ndarray
    kappa_tail_max: float
    weight_i: np.ndarray        # (N,) residual norms, range block
    weight_ii: np.ndarray
    weight_groups: np.ndarray   # (N, #distinct groups)
    z_fit: np.ndarray
    z_error: np.ndarray


def residual_report(data, coeffs):
    """Residuals of the two-term eigenvalue and weight-sum asymptotics
    relative to the given coefficients (computed on the raw spectrum)."""
    m, n_max, p = data.m, data.n_max, coeffs.p
    if data.alpha_prime is None:
        raise ProblemSpecError("residual_report needs deduplicated data")
    raw = data.raw_lam
    rho = np.sqrt(np.maximum(raw, 0.0))
    n_vals = np.arange(1, n_max + 1)
    k_idx = np.arange(m)
    centers = _centers(n_vals[:, None], k_idx[None, :], p)
    z = np.asarray(coeffs.shifts, dtype=float)
    kappa = n_vals[:, None] * (rho - centers - z[None, :] / (np.pi * n_vals[:, None]))
    kap2 = (kappa ** 2).sum(axis=1)
    partial = np.sqrt(np.cumsum(kap2))
    tail = slice(max(1, n_max // 2), n_max)
    kappa_tail = float(np.abs(kappa[tail]).max(initial=0.0))

    t, tp = coeffs.projector, coeffs.complement
    alpha_i = data.alpha_prime[:, :p].sum(axis=1)
    alpha_ii = data.alpha_prime[:, p:].sum(axis=1)
    pref_i = np.pi / (2.0 * (n_vals - 0.5) ** 2)
    pref = np.pi / (2.0 * n_vals ** 2)
    wi = np.array([np.linalg.norm(n * (pref_i[n - 1] * alpha_i[n - 1] - t), 2)
                   for n in n_vals])
    wii = np.array([np.linalg.norm(n * (pref[n - 1] * alpha_ii[n - 1] - tp), 2)
                    for n in n_vals])

    reps = _group_reps(z, p)
    wg = np.zeros((n_max, len(reps)))
    for j, (s, members) in enumerate(reps):
        asum = data.alpha_prime[:, members].sum(axis=1)
        a_s = coeffs.projectors[s]
        wg[:, j] = [np.linalg.norm(pref[n - 1] * asum[n - 1] - a_s, 2) for n in n_vals]

    z_fit = _z_tail_fit(rho, centers, n_vals, tail)
    return ResidualReport(kappa=kappa, kappa_partial_l2=partial,
                          kappa_tail_max=kappa_tail, weight_i=wi, weight_ii=wii,
                          weight_groups=wg, z_fit=z_fit, z_error=np.abs(z_fit - z))


def _group_reps(z, p, tol=1e-8):
    """Distinct shift groups as (representative index, member list) pairs."""
    reps = []
    for lo, hi in ((0, p), (p, len(z))):
        start = lo
        for i in range(lo + 1, hi + 1):
            if i == hi or z[i] - z[start] > tol * (1.0 + abs(z[start])):
                reps.append((start, list(range(start, i))))
                start = i
    return reps


# ---------------------------------------------------------------------------
# admissibility checks

def check_sd(data, tol_alpha=1e-8, tol_psd=1e-10):
    """Admissible-data class conditions, reported per check."""
    m, n_max = data.m, data.n_max
    flat = data.lam.ravel()
    alpha = data.alpha.reshape(-1, m, m)
    checks = {}

    bad = [] if np.all(np.isfinite(flat)) and np.all(np.isfinite(alpha)) else [(0, 0)]
    checks["finite"] = {"ok": not bad, "failures": bad}

    order_bad = []
    for i in range(flat.size - 1):
        if flat[i + 1] < flat[i] - 1e-12 * (1.0 + abs(flat[i])):
            order_bad.append(_tag(i + 1, m))
    checks["ordering"] = {"ok": not order_bad, "failures": order_bad}

    herm_bad, psd_bad = [], []
    for i, a in enumerate(alpha):
        scale = max(1.0, float(np.abs(a).max()))
        if np.abs(a - a.conj().T).max() > tol_alpha * scale:
            herm_bad.append(_tag(i, m))
            continue
        evals = np.linalg.eigvalsh(0.5 * (a + a.conj().T))
        if evals.min() < -tol_psd * max(scale, float(evals.max())):
            psd_bad.append(_tag(i, m))
    checks["hermitian"] = {"ok": not herm_bad, "failures": herm_bad}
    checks["positive_semidefinite"] = {"ok": not psd_bad, "failures": psd_bad}

    groups = _equal_groups(flat)
    eq_bad, rank_bad = [], []
    for grp in groups:
        head = alpha[grp[0]]
        scale = max(1.0, float(np.abs(head).max()))
        for i in grp[1:]:
            if np.abs(alpha[i] - head).max() > tol_alpha * scale:
                eq_bad.append(_tag(i, m))
        evals = np.linalg.eigvalsh(0.5 * (head + head.conj().T))
        rank = int(np.sum(evals > 1e-6 * max(float(evals.max()), 1e-300)))
        if rank != len(grp):
            rank_bad.extend(_tag(i, m) for i in grp)
    checks["equal_weights"] = {"ok": not eq_bad, "failures": eq_bad}
    checks["rank_multiplicity"] = {"ok": not rank_bad, "failures": rank_bad}

    checks["ok"] = all(c["ok"] for name, c in checks.items() if name != "ok")
    return checks


def _tag(i, m):
    n, k = divmod(i, m)
    return (n + 1, k + 1)


def _equal_groups(flat, tol=1e-9):
    groups, start = [], 0
    for i in range(1, flat.size + 1):
        if i == flat.size or abs(flat[i] - flat[start]) > tol * (1.0 + abs(flat[start])):
            groups.append(list(range(start, i)))
            start = i
    return groups


def check_structure(coeffs, graph_omega=None, tol=1e-8):
    """Structural conditions on the asymptotic coefficients.

    Verifies that each shift projector is an orthogonal projector, the
    distinct-group sums resolve the projector blocks, ranks equal the shift
    multiplicities and cross products vanish.  With `graph_omega` the
    complement roots and projectors are cross-checked against the
    graph-case closed formulas.
    """
    m, p = coeffs.m, coeffs.p
    z = np.asarray(coeffs.shifts, dtype=float)
    a = coeffs.projectors
    t, tp = coeffs.projector, coeffs.complement
    checks = {}

    proj_bad = []
    for s in range(m):
        if np.abs(a[s] @ a[s] - a[s]).max() > tol or np.abs(a[s] - a[s].conj().T).max() > tol:
            proj_bad.append(s + 1)
    checks["projector_property"] = {"ok": not proj_bad, "failures": proj_bad}

    reps = _group_reps(z, p)
    sum1 = sum((a[s] for s, mem in reps if s < p), np.zeros((m, m), dtype=complex))
    sum2 = sum((a[s] for s, mem in reps if s >= p), np.zeros((m, m), dtype=complex))
    checks["block_sums"] = {
        "ok": bool(np.abs(sum1 - t).max() <= tol and np.abs(sum2 - tp).max() <= tol),
        "failures": []}

    rank_bad = []
    for s, members in reps:
        if linalg.projector_rank(a[s]) != len(members):
            rank_bad.append(s + 1)
    checks["rank_matches_shifts"] = {"ok": not rank_bad, "failures": rank_bad}

    prod_bad = []
    for s in range(m):
        for k in range(m):
            cross = (s < p) != (k < p)
            if cross or abs(z[s] - z[k]) > tol * (1.0 + abs(z[s])):
                if np.abs(a[s] @ a[k]).max() > tol:
                    prod_bad.append((s + 1, k + 1))
    checks["orthogonal_products"] = {"ok": not prod_bad, "failures": prod_bad}

    sort_ok = bool(np.all(np.diff(z[:p]) >= -tol) and np.all(np.diff(z[p:]) >= -tol))
    checks["shifts_sorted"] = {"ok": sort_ok, "failures": []}

    if graph_omega is not None:
        omega = np.asarray(graph_omega, dtype=float)
        poly = np.polyder(np.poly(omega)) / m
        vals = np.abs(np.polyval(poly, z[1:]))
        scale = 1.0 + np.abs(omega).max(initial=0.0) ** (m - 1)
        checks["complement_polynomial_roots"] = {
            "ok": bool(vals.max(initial=0.0) <= 1e-6 * scale), "failures": []}
        try:
            a_graph = linalg.graph_shift_projectors(omega, z)
            diff = float(np.abs(a_graph - a).max())
            checks["graph_projector_formula"] = {"ok": diff <= 1e-6, "failures": [],
                                                 "residual": diff}
        except Exception as exc:  # degenerate roots: fall back silently
            checks["graph_projector_formula"] = {"ok": True, "failures": [],
                                                 "note": str(exc)}

    checks["ok"] = all(c["ok"] for name, c in checks.items() if name != "ok")
    return checks


def completeness_surrogate(data, mesh_t=None, threshold=SURROGATE_THRESHOLD):
    """Finite-rank surrogate for the completeness condition.

    Assembles the Gram matrix of the direction-weighted sine functions on a
    uniform t-mesh and reports its smallest eigenvalue.  A value above the
    threshold means "no finite obstruction to completeness"; this is
    explicitly not a proof of the infinite condition.
    """
    m, n_max = data.m, data.n_max
    if data.alpha_prime is None:
        raise ProblemSpecError("completeness surrogate needs deduplicated data")
    if mesh_t is None:
        mesh_t = 8 * n_max * m
    flat_lam = data.lam.ravel()
    alpha = data.alpha.reshape(-1, m, m)
    rho = np.sqrt(np.maximum(flat_lam, 1e-12))

    directions = np.zeros((flat_lam.size, m), dtype=complex)
    for grp in _equal_groups(flat_lam):
        head = 0.5 * (alpha[grp[0]] + alpha[grp[0]].conj().T)
        w, v = np.linalg.eigh(head)
        order = np.argsort(-w)
        for j, i in enumerate(grp):
            e = v[:, order[j]]
            k = int(np.argmax(np.abs(e)))
            phase = e[k] / abs(e[k]) if abs(e[k]) > 0 else 1.0
            directions[i] = e / phase
    t_mesh = np.linspace(0.0, np.pi, mesh_t)
    sines = np.sin(rho[:, None] * t_mesh[None, :]) / rho[:, None]
    # f_a(t) = direction_a * sine_a(t); Gram via the trapezoid rule
    dir_gram = directions.conj() @ directions.T
    w_t = np.full(mesh_t, np.pi / (mesh_t - 1))
    w_t[0] = w_t[-1] = 0.5 * np.pi / (mesh_t - 1)
    sine_gram = (sines * w_t[None, :]) @ sines.T
    gram = dir_gram * sine_gram
    evals = np.linalg.eigvalsh(0.5 * (gram + gram.conj().T))
    smallest = float(evals.min())
    return {"smallest": smallest, "threshold": threshold,
            "ok": bool(smallest > threshold),
            "note": "finite surrogate; not a proof of completeness"}


def validate_data(data, coeffs=None, *, kappa_limit=KAPPA_TAIL_LIMIT,
                  weight_limit=WEIGHT_TAIL_LIMIT, surrogate_threshold=SURROGATE_THRESHOLD):
    """Aggregate admissibility report for a spectral data set."""
    report = {"sd": check_sd(data)}
    fitted = coeffs is None
    if fitted:
        coeffs = fit_coefficients(data)
    resid = residual_report(data, coeffs)
    tail = slice(max(1, data.n_max // 2), data.n_max)
    wi_tail = float(np.median(resid.weight_i[tail]))
    wii_tail = float(np.median(resid.weight_ii[tail]))
    report["coefficients_fitted"] = fitted
    report["eigenvalue_asymptotics"] = {
        "ok": bool(resid.kappa_tail_max <= kappa_limit),
        "kappa_tail_max": resid.kappa_tail_max,
        "partial_l2": float(resid.kappa_partial_l2[-1]),
    }
    report["weight_asymptotics"] = {
        "ok": bool(wi_tail <= weight_limit and wii_tail <= weight_limit),
        "range_block_tail": wi_tail,
        "complement_block_tail": wii_tail,
    }
    report["z_fit"] = {
        "values": [float(v) for v in resid.z_fit],
        "error": [float(v) for v in resid.z_error],
        "ok": bool(np.max(resid.z_error, initial=0.0)
                   <= max(2e-3, 2.0 / data.n_max) * (1.0 + np.abs(coeffs.shifts).max())),
    }
    omega = coeffs.omega if coeffs.omega is not None else None
    report["structure"] = check_structure(coeffs, graph_omega=omega)
    report["completeness_surrogate"] = completeness_surrogate(
        data, threshold=surrogate_threshold)
    core = ["sd", "eigenvalue_asymptotics", "weight_asymptotics", "structure",
            "completeness_surrogate"]
    report["ok"] = all(report[name]["ok"] for name in core)
    return report
