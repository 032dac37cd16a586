"""Forward spectral pipeline: two-index eigenvalue tables, weight matrices
as contour residues of the Weyl matrix, deduplication over multiplicity
groups, and the eigenvalue groupings with their aggregate distances.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

from .errors import (ContourError, CountMismatchError, GroupingError,
                     ProblemSpecError, SDViolationError, SolverError)
from .propagator import (char_singular_values, default_steps, propagate_sine,
                         boundary_form, weyl_matrix)

GOLDEN_ITERS = 44
ROOT_SIGMA_TOL = 1e-6
MERGE_TOL = 1e-8
EQUAL_LAMBDA_TOL = 1e-9
CONTOUR_RADIUS_CAP = 0.1
SEPARATION = 0.1


# ---------------------------------------------------------------------------
# spectral data container

@dataclass(frozen=True)
class SpectralData:
    """Indexed eigenvalue / weight-matrix table.

    `lam` has shape (N, m) and stores the shifted eigenvalues (all >= 0);
    `shift` is the amount that was added to the raw spectrum.  `alpha` holds
    one Hermitian weight matrix per entry and `alpha_prime` the deduplicated
    variant (first member of each multiplicity group keeps the matrix, the
    rest get zero).
    """

    m: int
    n_max: int
    lam: np.ndarray
    alpha: np.ndarray
    alpha_prime: np.ndarray | None = None
    shift: float = 0.0
    provenance: str = "computed"

    def __post_init__(self):
        lam = np.asarray(self.lam, dtype=float)
        alpha = np.asarray(self.alpha, dtype=complex)
        if lam.shape != (self.n_max, self.m):
            raise ProblemSpecError(f"lam table has shape {lam.shape}, "
                                   f"expected ({self.n_max}, {self.m})")
        if alpha.shape != (self.n_max, self.m, self.m, self.m):
            raise ProblemSpecError("alpha table shape mismatch")
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "alpha", alpha)
        if self.alpha_prime is not None:
            object.__setattr__(self, "alpha_prime",
                               np.asarray(self.alpha_prime, dtype=complex))

    @property
    def rho(self):
        return np.sqrt(self.lam)

    @property
    def raw_lam(self):
        return self.lam - self.shift

    def rebased(self, shift):
        """Same data expressed with a different spectrum shift."""
        delta = shift - self.shift
        return replace(self, lam=self.lam + delta, shift=float(shift))

    def truncated(self, n_max):
        if n_max > self.n_max:
            raise ProblemSpecError("cannot extend a spectral data table")
        ap = None if self.alpha_prime is None else self.alpha_prime[:n_max]
        return replace(self, n_max=n_max, lam=self.lam[:n_max],
                       alpha=self.alpha[:n_max], alpha_prime=ap)


def dedup_weights(data, tol_equal=EQUAL_LAMBDA_TOL, tol_alpha=1e-8):
    """Fill the deduplicated weight table.

    Within every maximal group of equal eigenvalues the first entry keeps
    its weight matrix and the others are zeroed; equal eigenvalues carrying
    different weights violate the admissible-data class.
    """
    flat = data.lam.ravel()
    if np.any(np.diff(flat) < -1e-12 * (1.0 + np.abs(flat[:-1]))):
        raise SDViolationError("eigenvalues are not nondecreasing in the "
                               "two-index order")
    alpha = data.alpha.reshape(-1, data.m, data.m)
    prime = alpha.copy()
    i = 0
    while i < flat.size:
        j = i + 1
        while j < flat.size and abs(flat[j] - flat[i]) <= tol_equal * (1.0 + abs(flat[i])):
            j += 1
        head = alpha[i]
        scale = max(1.0, float(np.abs(head).max()))
        for k in range(i + 1, j):
            if np.abs(alpha[k] - head).max() > tol_alpha * scale:
                n, kk = divmod(k, data.m)
                raise SDViolationError(
                    f"equal eigenvalues with unequal weight matrices at (n,k)=({n + 1},{kk + 1})")
            prime[k] = 0.0
        i = j
    return replace(data, alpha_prime=prime.reshape(data.alpha.shape))


# ---------------------------------------------------------------------------
# serialization

def _fmt(x):
    return format(float(x), ".17g")


def to_json_dict(data):
    """Schema: {format_version, m, N, shift, entries:[{n,k,lambda,alpha}]}
    with all floats as 17-significant-digit decimal strings."""
    entries = []
    for n in range(data.n_max):
        for k in range(data.m):
            a = data.alpha[n, k].ravel()
            entries.append({
                "n": n + 1,
                "k": k + 1,
                "lambda": _fmt(data.lam[n, k]),
                "alpha": [[_fmt(z.real), _fmt(z.imag)] for z in a],
            })
    return {
        "format_version": 1,
        "m": data.m,
        "N": data.n_max,
        "shift": _fmt(data.shift),
        "provenance": data.provenance,
        "entries": entries,
    }


def from_json_dict(doc):
    m = int(doc["m"])
    n_max = int(doc["N"])
    lam = np.zeros((n_max, m))
    alpha = np.zeros((n_max, m, m, m), dtype=complex)
    seen = np.zeros((n_max, m), dtype=bool)
    for entry in doc["entries"]:
        n, k = int(entry["n"]) - 1, int(entry["k"]) - 1
        if not (0 <= n < n_max and 0 <= k < m):
            raise ProblemSpecError(f"entry index ({n + 1},{k + 1}) out of range")
        lam[n, k] = float(entry["lambda"])
        a = np.array([float(re) + 1j * float(im) for re, im in entry["alpha"]])
        alpha[n, k] = a.reshape(m, m)
        seen[n, k] = True
    if not seen.all():
        raise ProblemSpecError("spectral data file is missing entries")
    data = SpectralData(m=m, n_max=n_max, lam=lam, alpha=alpha,
                        shift=float(doc.get("shift", 0.0)),
                        provenance=str(doc.get("provenance", "loaded")))
    return dedup_weights(data)


def save_spectral_data(data, path):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(to_json_dict(data), f, indent=1, sort_keys=True)
        f.write("\n")


def load_spectral_data(path):
    with open(path, encoding="utf-8") as f:
        return from_json_dict(json.load(f))


# ---------------------------------------------------------------------------
# eigenvalue location

@dataclass
class LocatedSpectrum:
    """Distinct roots with multiplicities plus the filled two-index table."""

    table: np.ndarray          # (N, m) eigenvalues, nondecreasing
    roots: np.ndarray          # (R,) distinct eigenvalues
    mult: np.ndarray           # (R,) multiplicities
    isolation: np.ndarray      # (R,) distance to the nearest distinct root
    table_root: np.ndarray     # (N, m) index into roots for each table slot
    nsteps: int


def _segment_candidates(lam_grid, smin, smax):
    """Interior local minima of the smallest singular value."""
    cands = []
    if lam_grid.size < 3:
        return cands
    scale = float(np.median(smin))
    for i in range(1, lam_grid.size - 1):
        if smin[i] <= smin[i - 1] and smin[i] <= smin[i + 1] and smin[i] < 0.6 * max(scale, 1e-12):
            lo, hi = lam_grid[i - 1], lam_grid[i + 1]
            local = float(np.max(smax[max(0, i - 2):i + 3]))
            cands.append((lo, hi, local))
    return cands


def _golden_minimize(problem, lo, hi, nsteps, iters=GOLDEN_ITERS):
    a = np.asarray(lo, dtype=float).copy()
    b = np.asarray(hi, dtype=float).copy()
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    invphi2 = 1.0 - invphi

    def f(pts):
        return char_singular_values(problem, pts, nsteps=nsteps)[:, -1]

    c = a + invphi2 * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        swap = fc < fd
        c_old, d_old, fc_old, fd_old = c, d, fc, fd
        b = np.where(swap, d_old, b)
        a = np.where(swap, a, c_old)
        c = np.where(swap, a + invphi2 * (b - a), d_old)
        d = np.where(swap, c_old, a + invphi * (b - a))
        pts = np.where(swap, c, d)
        fpts = f(pts)
        fc = np.where(swap, fpts, fd_old)
        fd = np.where(swap, fc_old, fpts)
    return 0.5 * (a + b)


def _probe_plan(problem, n_max, n_low, window, step, lam_floor):
    """Probe grids: exhaustive low region plus windows around the centers.

    Returns (plans, low_top) where low_top is the square-root boundary of
    the exhaustively scanned region.
    """
    plans = []
    if n_low >= n_max:
        lam_top = (n_max + 0.3) ** 2 + problem.grid.max_norm() + 1.0
        low_top = np.sqrt(lam_top)
    else:
        low_top = n_low + 0.25
    neg = np.arange(lam_floor, 0.021, min(0.05, 2.0 * step))
    rho = np.arange(0.02, low_top + 2 * step, step)
    plans.append(("low", np.unique(np.concatenate([neg, rho ** 2]))))
    for n in range(n_low + 1, n_max + 1):
        for c, cnt in ((n - 0.5, problem.p), (float(n), problem.m - problem.p)):
            if cnt > 0:
                grid = np.arange(max(c - window, 0.02), c + window + step, step)
                plans.append((c, grid ** 2))
    return plans, low_top


def _allocate(pool, n_low, n_max, low_top):
    """Sort located roots into the low region / center buckets."""
    buckets = {"low": 0}
    orphans = 0
    for n in range(n_low + 1, n_max + 1):
        buckets[n - 0.5] = 0
        buckets[float(n)] = 0
    for lam, mult in pool:
        if lam < low_top ** 2:
            buckets["low"] += mult
            continue
        r = np.sqrt(lam)
        c_half = np.round(r - 0.5) + 0.5
        c_int = np.round(r)
        c = c_half if abs(r - c_half) < abs(r - c_int) else c_int
        if abs(r - c) <= 0.25 and c in buckets:
            buckets[c] += mult
        else:
            orphans += mult
    return buckets, orphans


def locate_eigenvalues(problem, n_max, *, nsteps=None, n_low=None, window=0.45,
                       grid_step=0.02, max_retries=3):
    """Locate the first n_max * m eigenvalues with multiplicities.

    Low rows come from an exhaustive scan whose depth adapts to the
    potential's size (a Weyl-type bound); higher rows from windows of
    radius `window` around the asymptotic centers n - 1/2 and n in the
    square-root variable.  Root counts per region are checked against the
    projector rank; mismatches retry with a finer grid and a deeper
    exhaustive region before failing.
    """
    if n_max < 1:
        raise ProblemSpecError("n_max must be at least 1")
    m, p = problem.m, problem.p
    if nsteps is None:
        nsteps = default_steps((n_max + 1.0) ** 2)
    lam_floor = problem.eigen_floor()
    if n_low is None:
        strength = problem.grid.max_norm() + np.linalg.norm(problem.bc_matrix, ord=2) + 0.5
        n_low = max(3, int(np.ceil(strength / 0.44)))

    pool = []
    failing = None
    nlo = n_low
    retry_units = None          # None means probe everything
    for attempt in range(max_retries + 1):
        step = grid_step / (4 ** attempt)
        plans, low_top = _probe_plan(problem, n_max, nlo, window, step, lam_floor)
        if retry_units is not None:
            plans = [(u, g) for u, g in plans if u in retry_units]
        all_lams = np.concatenate([g for _, g in plans])
        sv = char_singular_values(problem, all_lams, nsteps=nsteps)
        smin, smax = sv[:, -1], sv[:, 0]
        off = 0
        brackets = []
        for _, grid in plans:
            n = grid.size
            brackets.extend(_segment_candidates(grid, smin[off:off + n], smax[off:off + n]))
            off += n
        if brackets:
            lo = np.array([b[0] for b in brackets])
            hi = np.array([b[1] for b in brackets])
            scales = np.array([b[2] for b in brackets])
            lam_star = _golden_minimize(problem, lo, hi, nsteps)
            sv_star = char_singular_values(problem, lam_star, nsteps=nsteps)
            for lam, sigs, scl in zip(lam_star, sv_star, scales):
                scale = max(float(sigs[0]), 0.05 * scl, 1e-12)
                if sigs[-1] < ROOT_SIGMA_TOL * scale:
                    mult = int(np.sum(sigs < ROOT_SIGMA_TOL * scale))
                    pool.append((float(lam), mult))
        pool.sort()
        merged = []
        for lam, mult in pool:
            if merged and abs(lam - merged[-1][0]) <= MERGE_TOL * (1.0 + abs(lam)):
                merged[-1] = (merged[-1][0], max(merged[-1][1], mult))
            else:
                merged.append((lam, mult))
        pool = merged

        buckets, orphans = _allocate(pool, nlo, n_max, low_top)
        failing = []
        if nlo >= n_max:
            if buckets["low"] < n_max * m:
                failing.append("low")
        else:
            if buckets["low"] != nlo * m:
                failing.append("low")
            for n in range(nlo + 1, n_max + 1):
                if buckets[n - 0.5] != p:
                    failing.append(n - 0.5)
                if buckets[float(n)] != m - p:
                    failing.append(float(n))
            if orphans:
                failing.append("orphans")
        if not failing:
            break
        if "orphans" in failing:
            # misallocated roots: deepen the exhaustive region, rescan fully
            nlo = min(n_max, nlo + 2)
            pool = []
            retry_units = None
        else:
            retry_units = set(failing)
    else:
        detail = ", ".join(str(u) for u in failing)
        raise CountMismatchError(
            f"eigenvalue count mismatch after {max_retries} retries near: {detail}; "
            "the data may violate the assumed asymptotics or the mesh is too coarse")

    flat, flat_root = [], []
    for r, (lam, mult) in enumerate(pool):
        flat.extend([lam] * mult)
        flat_root.extend([r] * mult)
    if len(flat) < n_max * m:
        raise SolverError(f"found only {len(flat)} eigenvalues, need {n_max * m}")
    boundary = n_max * m
    if boundary < len(flat) and abs(flat[boundary - 1] - flat[boundary]) <= \
            MERGE_TOL * (1.0 + abs(flat[boundary])):
        raise SolverError("truncation level cuts through a multiplicity group; "
                          "increase n_max by one")
    table = np.array(flat[:boundary]).reshape(n_max, m)
    table_root = np.array(flat_root[:boundary]).reshape(n_max, m)

    roots = np.array([lam for lam, _ in pool])
    mult = np.array([mlt for _, mlt in pool])
    used = np.unique(table_root)
    roots, mult = roots[used], mult[used]
    remap = {old: new for new, old in enumerate(used)}
    table_root = np.vectorize(remap.get)(table_root)

    iso = np.full(roots.size, np.inf)
    if roots.size > 1:
        gaps = np.diff(roots)
        iso[:-1] = np.minimum(iso[:-1], gaps)
        iso[1:] = np.minimum(iso[1:], gaps)
    # the next eigenvalue beyond the table sits near the following center
    iso[-1] = min(iso[-1], (n_max + 0.5) ** 2 - roots[-1])
    return LocatedSpectrum(table=table, roots=roots, mult=mult, isolation=iso,
                           table_root=table_root, nsteps=nsteps)


# ---------------------------------------------------------------------------
# weight matrices

def weight_matrices(problem, located, nodes=64, nsteps=None, doubling_tol=1e-8):
    """Weight matrices as negated contour residues of the Weyl matrix.

    Each root gets a circle of radius min(isolation/3, 0.1); the trapezoid
    rule on `nodes` points is checked against the doubled node count and
    must agree to `doubling_tol` relative.
    """
    nsteps = located.nsteps if nsteps is None else nsteps
    roots, iso = located.roots, located.isolation
    radii = np.minimum(iso / 3.0, CONTOUR_RADIUS_CAP)

    # evaluate on the doubled node set once; the coarse rule reuses the
    # even-indexed nodes
    k2 = 2 * nodes
    theta = 2.0 * np.pi * np.arange(k2) / k2
    lams = (roots[:, None] + radii[:, None] * np.exp(1j * theta)).ravel()
    mvals = weyl_matrix(problem, lams, nsteps=nsteps).reshape(
        roots.size, k2, problem.m, problem.m)
    phase = np.exp(1j * theta)[None, :, None, None]
    a2 = -(radii[:, None, None] / k2) * np.sum(mvals * phase, axis=1)
    a1 = -(radii[:, None, None] / nodes) * np.sum(
        (mvals * phase)[:, ::2], axis=1)
    out = np.empty_like(a1)
    for i in range(roots.size):
        scale = max(1.0, float(np.abs(a2[i]).max()))
        if np.abs(a1[i] - a2[i]).max() > doubling_tol * scale:
            raise ContourError(f"contour quadrature did not converge at "
                               f"lam = {roots[i]:.8g}")
        a = a2[i]
        herm = np.abs(a - a.conj().T).max()
        if herm > 1e-8 * scale:
            raise SolverError(f"weight matrix not Hermitian at lam = {roots[i]:.8g} "
                              f"(residual {herm:.2e})")
        a = 0.5 * (a + a.conj().T)
        evals = np.linalg.eigvalsh(a)
        if evals.min() < -1e-10 * max(1.0, evals.max()):
            raise SolverError(f"weight matrix not positive semidefinite at "
                              f"lam = {roots[i]:.8g}")
        rank = int(np.sum(evals > ROOT_SIGMA_TOL * max(evals.max(), 1e-300)))
        if rank != located.mult[i]:
            raise SolverError(
                f"weight-matrix rank {rank} disagrees with multiplicity "
                f"{located.mult[i]} at lam = {roots[i]:.8g}")
        out[i] = a
    return out


def eigenfunction_weights(problem, lam0, mult, nsteps=None):
    """Independent weight-matrix oracle from normalized eigenfunctions.

    Builds an orthonormal basis of the eigenspace at lam0 and returns the
    sum of the outer products of the derivatives at zero.  Validated against
    the contour path on scalar and zero-potential problems before use.
    """
    if nsteps is None:
        nsteps = default_steps(abs(lam0))
    path = propagate_sine(problem, [lam0], nsteps=nsteps, trajectory=True)
    v = boundary_form(problem, path.value, path.derivative)[0]
    _, sig, vh = np.linalg.svd(v)
    scale = max(float(sig[0]), 1e-12)
    dim = int(np.sum(sig < ROOT_SIGMA_TOL * scale)) if problem.m > 1 else 1
    if dim != mult:
        raise SolverError(f"eigenspace dimension {dim} != multiplicity {mult} "
                          f"at lam = {lam0:.8g}")
    null = vh.conj().T[:, problem.m - mult:]
    traj = path.values[:, 0]                 # (nodes, m, m)
    y = traj @ null                          # (nodes, m, r)
    integrand = np.swapaxes(y.conj(), -1, -2) @ y
    gram = _simpson(integrand, path.mesh)
    return null @ np.linalg.inv(gram) @ null.conj().T


def _simpson(values, mesh):
    """Composite Simpson rule along axis 0 on a uniform mesh."""
    n = mesh.size - 1
    h = mesh[1] - mesh[0]
    ns = n if n % 2 == 0 else n - 1     # Simpson needs an even interval count
    w = np.zeros(n + 1)
    w[0:ns + 1:2] += 2.0 * h / 3.0
    w[1:ns:2] += 4.0 * h / 3.0
    w[0] -= h / 3.0
    w[ns] -= h / 3.0
    if ns < n:                          # trapezoid on the leftover cell
        w[n - 1] += 0.5 * h
        w[n] += 0.5 * h
    return np.tensordot(w, values, axes=(0, 0))


def forward_data(problem, n_max, *, nsteps=None, contour_nodes=64, **locate_kw):
    """Full forward solve: eigenvalue table, weight matrices, dedup, shift."""
    located = locate_eigenvalues(problem, n_max, nsteps=nsteps, **locate_kw)
    root_alpha = weight_matrices(problem, located, nodes=contour_nodes)
    alpha = root_alpha[located.table_root]
    shift = max(0.0, 1.0 - float(located.table.min()))
    data = SpectralData(m=problem.m, n_max=n_max, lam=located.table + shift,
                        alpha=alpha, shift=shift, provenance="computed")
    return dedup_weights(data)


# ---------------------------------------------------------------------------
# groupings and aggregate spectral distance

@dataclass
class GroupPartition:
    """Square-root groupings of two spectral data sets and their distance.

    Group index 1 collects everything up to row n0; after that, rows
    alternate between the projector-range block and its complement.  The
    per-group distances combine pairwise square-root spreads and weight-sum
    differences; the total follows the weighted l2 aggregation.
    """

    n0: int
    p: int
    centers: np.ndarray
    groups: list                # list of lists of (n, k, s) 1-based tags
    subgroups: list             # J-structure refinement of each group
    xi: np.ndarray
    xi_pair: np.ndarray
    xi_blocks: np.ndarray
    total: float                # the aggregate distance
    tail: float                 # contribution of the last quarter of groups


def _infer_p(model_data):
    rho = np.sqrt(np.maximum(model_data.raw_lam, 0.0))
    n_idx = np.arange(1, model_data.n_max + 1)[:, None]
    tail = rho[model_data.n_max // 2:]
    nt = n_idx[model_data.n_max // 2:]
    near_half = np.abs(tail - (nt - 0.5)) < np.abs(tail - nt)
    votes = near_half.sum(axis=0)
    return int(np.sum(votes > tail.shape[0] / 2))


def _spectral_norm(a):
    return float(np.linalg.norm(a, ord=2))


def build_groups(data, model, coeffs=None, *, separation=SEPARATION, z_tol=1e-8):
    """Group the square-root values of two data sets and measure their
    aggregate distance.

    Both data sets must share the dimension, the truncation level and the
    spectrum shift.  When asymptotic coefficients are supplied, the shift
    roots define the subgroup index sets; otherwise the subgroup structure
    degenerates to per-pair groups.
    """
    if data.m != model.m or data.n_max != model.n_max:
        raise ProblemSpecError("data and model tables must share m and N")
    if abs(data.shift - model.shift) > 1e-12 * (1.0 + abs(data.shift)):
        raise ProblemSpecError("data and model must carry the same spectrum shift")
    if data.alpha_prime is None or model.alpha_prime is None:
        raise ProblemSpecError("deduplicate both data sets before grouping")
    m, n_max = data.m, data.n_max
    p = coeffs.p if coeffs is not None else _infer_p(model)
    rho = {0: data.rho, 1: model.rho}

    def group_tags(n0):
        tags = [[(n, k, s) for n in range(1, n0 + 1) for k in range(1, m + 1)
                 for s in (0, 1)]]
        for n in range(n0 + 1, n_max + 1):
            tags.append([(n, k, s) for k in range(1, p + 1) for s in (0, 1)])
            tags.append([(n, k, s) for k in range(p + 1, m + 1) for s in (0, 1)])
        return tags

    def values(tagset):
        return np.array([rho[s][n - 1, k - 1] for (n, k, s) in tagset])

    chosen = None
    for n0 in range(1, max(2, n_max // 2 + 1)):
        if n0 >= n_max:
            break
        tags = group_tags(n0)
        vals = [values(t) for t in tags]
        ok = True
        for a, b in zip(vals[:-1], vals[1:]):
            if a.size and b.size and b.min() - a.max() < separation:
                ok = False
                break
        if ok:
            chosen = (n0, tags, vals)
            break
    if chosen is None:
        raise GroupingError("no admissible grouping: square-root clusters are "
                            "not separated; the data violate the asymptotics")
    n0, tags, vals = chosen

    # subgroup index sets from the shift-root multiplicity pattern
    if coeffs is not None:
        z = np.asarray(coeffs.shifts, dtype=float)
        blocks = {1: _z_groups(z[:p], z_tol), 2: _z_groups(z[p:], offset=p, tol=z_tol)}
    else:
        blocks = {1: [[k] for k in range(1, p + 1)],
                  2: [[k] for k in range(p + 1, m + 1)]}

    centers = [0.0]
    for j in range(1, n_max - n0 + 1):
        centers.extend([n0 + j - 0.5, n0 + j])

    subgroups = []
    for gi, tagset in enumerate(tags):
        if gi == 0:
            subgroups.append([tagset])
            continue
        block = 1 if gi % 2 == 1 else 2
        subs = []
        for jset in blocks[block]:
            sub = [t for t in tagset if t[1] in jset]
            if sub:
                subs.append(sub)
        subgroups.append(subs)

    def alpha_sum(tagset, s_wanted):
        table = data.alpha_prime if s_wanted == 0 else model.alpha_prime
        out = np.zeros((m, m), dtype=complex)
        for (n, k, s) in tagset:
            if s == s_wanted:
                out += table[n - 1, k - 1]
        return out

    def pair_distance_sum(tagset):
        v = values(tagset)
        if v.size < 2:
            return 0.0
        diff = np.abs(v[:, None] - v[None, :])
        return float(diff[np.triu_indices(v.size, k=1)].sum())

    kcount = len(tags)
    xi_pair = np.zeros(kcount)
    xi_blocks = np.zeros(kcount)
    for gi, tagset in enumerate(tags):
        kk = gi + 1
        whole_diff = _spectral_norm(alpha_sum(tagset, 0) - alpha_sum(tagset, 1))
        pairs = sorted({(n, k) for (n, k, _) in tagset})
        d_pair = sum(abs(rho[0][n - 1, k - 1] - rho[1][n - 1, k - 1]) for n, k in pairs)
        a_pair = sum(_spectral_norm(data.alpha_prime[n - 1, k - 1]
                                    - model.alpha_prime[n - 1, k - 1]) for n, k in pairs)
        xi_pair[gi] = d_pair + a_pair / kk ** 3 + whole_diff / kk ** 2

        d_blk = sum(pair_distance_sum(sub) for sub in subgroups[gi])
        a_blk = sum(_spectral_norm(alpha_sum(sub, 0) - alpha_sum(sub, 1))
                    for sub in subgroups[gi])
        xi_blocks[gi] = d_blk + a_blk / kk ** 3 + whole_diff / kk ** 2

    xi = np.minimum(xi_pair, xi_blocks)
    weights = (np.arange(1, kcount + 1) * xi) ** 2
    total = float(np.sqrt(weights.sum()))
    tail_start = max(1, kcount - max(1, kcount // 4))
    tail = float(np.sqrt(weights[tail_start:].sum()))
    return GroupPartition(n0=n0, p=p, centers=np.array(centers), groups=tags,
                          subgroups=subgroups, xi=xi, xi_pair=xi_pair,
                          xi_blocks=xi_blocks, total=total, tail=tail)


def _z_groups(zblock, tol=1e-8, offset=0):
    """1-based column indices grouped by equal shift roots."""
    groups = []
    start = 0
    z = np.asarray(zblock, dtype=float)
    for i in range(1, z.size + 1):
        if i == z.size or z[i] - z[start] > tol * (1.0 + abs(z[start])):
            groups.append([offset + j + 1 for j in range(start, i)])
            start = i
    return groups
