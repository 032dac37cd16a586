"""Acceptance suite: one test per release criterion, each printing a
pass/fail line with its runtime.  Tolerances are pinned here and must not
be loosened."""

import json
import pathlib
import time
from dataclasses import replace

import numpy as np
import pytest

from gsturm import inverse, spectral, validate
from gsturm.problems import star_graph, MatrixProblem, PotentialGrid, graph_projector
from tests.test_cli import run_cli, write_config

REPORT_PATH = pathlib.Path(__file__).resolve().parents[1] / "acceptance_report.txt"


def report(num, label, t0, budget):
    elapsed = time.time() - t0
    line = f"ACCEPTANCE {num} PASS: {label} ({elapsed:.1f}s / budget {budget:.0f}s)"
    print(line, flush=True)
    with open(REPORT_PATH, "a", encoding="utf-8") as f:
        f.write(line + "\n")
    assert elapsed <= budget, f"criterion {num} exceeded its runtime budget"


def test_acceptance_1_zero_potential_exactness():
    t0 = time.time()
    prob = star_graph([0.0, 0.0, 0.0], 0.0)
    data = spectral.forward_data(prob, 10)
    raw = data.raw_lam
    n = np.arange(1, 11.0)
    want = np.stack([(n - 0.5) ** 2, n ** 2, n ** 2], axis=1)
    assert np.abs(raw - want).max() < 1e-8
    t, tp = prob.projector, prob.complement
    for i, nn in enumerate(n):
        a_i = data.alpha_prime[i, :1].sum(axis=0)
        a_ii = data.alpha_prime[i, 1:].sum(axis=0)
        want_i = 2 * (nn - 0.5) ** 2 / np.pi * t
        want_ii = 2 * nn ** 2 / np.pi * tp
        assert np.abs(a_i - want_i).max() <= 1e-6 * np.abs(want_i).max()
        assert np.abs(a_ii - want_ii).max() <= 1e-6 * np.abs(want_ii).max()
    report(1, "zero-potential eigenvalues and weight sums", t0, 30)


def test_acceptance_2_spectrum_shift_covariance():
    t0 = time.time()
    c = 2.5
    base = star_graph([0.0, 0.0, 0.0], 0.0)
    shifted = star_graph([c, c, c], 0.0)
    d0 = spectral.forward_data(base, 6)
    dc = spectral.forward_data(shifted, 6)
    assert np.abs(dc.raw_lam - d0.raw_lam - c).max() < 1e-8
    scale = np.abs(d0.alpha).max(axis=(2, 3)) + 1.0
    rel = np.abs(dc.alpha - d0.alpha).max(axis=(2, 3)) / scale
    assert rel.max() <= 1e-6
    report(2, "spectrum shift covariance (c = 2.5)", t0, 60)


def test_acceptance_3_residue_dual_path():
    t0 = time.time()
    rng = np.random.default_rng(42)
    coeff = rng.uniform(-0.5, 0.5, size=(3, 3))
    qs = [lambda x, c=coeff[j]: c[0] + c[1] * np.cos(x) + c[2] * np.sin(2 * x)
          for j in range(3)]
    prob = star_graph(qs, 0.2)
    located = spectral.locate_eigenvalues(prob, 8)
    alphas = spectral.weight_matrices(prob, located)
    count = 0
    for i in range(located.roots.size):
        if count >= 20:
            break
        lam, mult = located.roots[i], int(located.mult[i])
        oracle = spectral.eigenfunction_weights(prob, lam, mult)
        scale = 1.0 + np.abs(alphas[i]).max()
        assert np.abs(alphas[i] - oracle).max() <= 1e-6 * scale, \
            f"dual-path mismatch at eigenvalue {lam:.6g}"
        count += 1
    assert count == 20
    report(3, "contour vs eigenfunction residues on 20 eigenvalues", t0, 120)


def test_acceptance_4_fixed_point():
    t0 = time.time()
    model = inverse.build_model_graph([0.3, -0.1, 0.2], 0.05, 8)
    rec = inverse.reconstruct(model.data, model, mesh_points=129)
    assert np.abs(rec.eps0).max() <= 1e-8
    assert np.abs(rec.potential - model.basis.matrix).max() <= 1e-7
    assert np.abs(rec.bc_matrix - model.problem.bc_matrix).max() <= 1e-7
    report(4, "main-equation fixed point on model data", t0, 60)


def test_acceptance_5_graph_roundtrip():
    t0 = time.time()
    prob = star_graph([lambda x: np.sin(x), lambda x: np.cos(x),
                       lambda x: x - np.pi / 2], 0.3)
    coeffs = validate.coefficients_from_problem(prob)
    data = spectral.forward_data(prob, 30)
    model = inverse.build_model_graph(coeffs.omega, coeffs.shifts[0], 30)
    errors = {}
    for n in (30, 15):
        model_n = inverse.ModelProblem(problem=model.problem, basis=model.basis,
                                       data=model.data.truncated(n),
                                       coeffs=model.coeffs, h_model=model.h_model)
        rec = inverse.reconstruct(data.truncated(n), model_n)
        mesh = rec.mesh
        q_true = np.stack([np.sin(mesh), np.cos(mesh), mesh - np.pi / 2], axis=1)
        errors[n] = np.sqrt(np.trapezoid((rec.q_edges - q_true) ** 2, x=mesh, axis=0))
        if n == 30:
            assert rec.h == pytest.approx(0.3, abs=1e-8)
    assert errors[30].max() <= 5e-2, f"edge L2 errors {errors[30]}"
    assert np.all(errors[15] > errors[30]), \
        f"no convergence: {errors[15]} vs {errors[30]}"
    report(5, f"graph roundtrip N=30 (L2 errors {np.round(errors[30], 4)})", t0, 600)


def test_acceptance_6_general_roundtrip():
    t0 = time.time()
    m, g, h = 2, 0.2, 0.2
    t_proj = graph_projector(m)

    def qmat(x):
        return np.diag([np.sin(x), np.cos(x)]) + g * (np.ones((m, m)) - np.eye(m))

    grid = PotentialGrid.from_callable(qmat, m)
    prob = MatrixProblem(grid=grid, projector=t_proj, bc_matrix=h * t_proj)
    coeffs = validate.coefficients_from_problem(prob)
    data = spectral.forward_data(prob, 30)
    model = inverse.build_model_general(coeffs, 30)
    rec = inverse.reconstruct(data, model)
    mesh = rec.mesh
    q_true = np.stack([qmat(x) for x in mesh]).astype(complex)
    err = rec.potential - q_true
    l2 = float(np.sqrt(np.trapezoid(np.abs(err) ** 2, x=mesh, axis=0).max()))
    h_err = float(np.abs(rec.bc_matrix - prob.bc_matrix).max())
    assert l2 <= 8e-2, f"potential L2 error {l2}"
    assert h_err <= 5e-2, f"boundary matrix error {h_err}"
    assert rec.herm_residual <= 1e-6
    report(6, f"general roundtrip m=2 (L2 {l2:.4f}, H err {h_err:.4f})", t0, 600)


def test_acceptance_7_stability_scaling():
    t0 = time.time()
    model = inverse.build_model_graph([0.3, -0.1], 0.05, 10)
    ratios = {}
    for delta in (1e-3, 1e-2):
        lam = model.data.lam.copy()
        lam[1, 0] += delta
        data = spectral.dedup_weights(replace(model.data, lam=lam, alpha_prime=None))
        rec = inverse.reconstruct(data, model, mesh_points=129, graph_mode=False)
        err = inverse.matrix_l2_norm(rec.mesh, rec.potential - model.basis.matrix)
        xi = rec.groups.total
        assert xi > 0
        ratios[delta] = err / xi
    spread = max(ratios.values()) / min(ratios.values())
    assert spread < 3.0, f"error/distance ratios {ratios}"
    # unperturbed row: exact data reproduce the model
    rec0 = inverse.reconstruct(model.data, model, mesh_points=129, graph_mode=False)
    err0 = inverse.matrix_l2_norm(rec0.mesh, rec0.potential - model.basis.matrix)
    assert err0 <= 1e-6 and rec0.groups.total == 0.0
    report(7, f"stability scaling (ratio spread {spread:.2f})", t0, 300)


def test_acceptance_8_characterization_validator():
    t0 = time.time()
    prob = star_graph([lambda x: 0.4 * np.sin(x), lambda x: 0.2 * np.cos(x)], 0.1)
    data = spectral.forward_data(prob, 10)
    coeffs = validate.coefficients_from_problem(prob)
    rep = validate.validate_data(data, coeffs)
    assert rep["ok"], f"valid data rejected: {rep}"
    assert rep["structure"]["ok"]
    assert rep["completeness_surrogate"]["ok"]

    # (a) negative-definite weight
    alpha = data.alpha.copy()
    alpha[0, 0] = -alpha[0, 0]
    bad = replace(data, alpha=alpha)
    rep_a = validate.check_sd(bad)
    assert not rep_a["positive_semidefinite"]["ok"]
    assert (1, 1) in rep_a["positive_semidefinite"]["failures"]

    # (b) rank / multiplicity mismatch on a double eigenvalue
    zprob = star_graph([0.0, 0.0, 0.0], 0.0)
    zdata = spectral.forward_data(zprob, 3)
    alpha = zdata.alpha.copy()
    head = alpha[0, 1]
    w, v = np.linalg.eigh(head)
    rank1 = w[-1] * np.outer(v[:, -1], v[:, -1].conj())
    alpha[0, 1] = rank1
    alpha[0, 2] = rank1
    bad_b = replace(zdata, alpha=alpha)
    rep_b = validate.check_sd(bad_b)
    assert not rep_b["rank_multiplicity"]["ok"]

    # (c) scaled weights break the asymptotics
    scaled = spectral.dedup_weights(
        replace(data, alpha=1.5 * data.alpha, alpha_prime=None))
    rep_c = validate.validate_data(scaled, coeffs)
    assert not rep_c["weight_asymptotics"]["ok"]
    report(8, "characterization validator and constructed violations", t0, 120)


def test_acceptance_9_diagonality_gate(tmp_path):
    t0 = time.time()
    fwd = write_config(tmp_path / "fwd.json", {
        "problem": {"kind": "graph", "m": 2,
                    "q": ["const:0.3", "const:-0.1"], "h": 0.1},
        "n_max": 10,
    })
    res = run_cli(["forward", "--config", fwd, "--out", str(tmp_path)], tmp_path)
    assert res.returncode == 0, res.stderr

    doc = json.loads((tmp_path / "spectral_data.json").read_text())
    entry = doc["entries"][0]
    m = doc["m"]
    a = np.array([float(re) + 1j * float(im) for re, im in entry["alpha"]]).reshape(m, m)
    w, v = np.linalg.eigh(a)
    vec = v[:, -1] + 1e-2 * np.array([1.0, -1.0]) / np.sqrt(2)
    vec = vec / np.linalg.norm(vec)
    rotated = w[-1] * np.outer(vec, vec.conj())
    entry["alpha"] = [[format(float(z.real), ".17g"), format(float(z.imag), ".17g")]
                      for z in rotated.ravel()]
    (tmp_path / "perturbed.json").write_text(json.dumps(doc))

    inv = write_config(tmp_path / "inv.json", {
        "data": str(tmp_path / "perturbed.json"),
        "model": {"kind": "graph", "omega": [0.3, -0.1], "z1": 0.0},
        "mesh_points": 129,
    })
    res = run_cli(["inverse", "--config", inv, "--out", str(tmp_path)], tmp_path)
    assert res.returncode == 6, (res.returncode, res.stderr)
    assert "diagonality-violation" in res.stderr
    resid = float(res.stderr.split("residual")[1].split("exceeds")[0].strip())
    assert resid > 1e-4
    report(9, f"diagonality gate (residual {resid:.2e})", t0, 120)
