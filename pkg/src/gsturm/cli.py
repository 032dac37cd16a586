"""Command-line entry points tying the pipeline together.

Commands: forward, inverse, roundtrip, stability, validate.  Each takes a
JSON config plus an optional output directory and writes JSON/CSV reports
(and PNG figures next to them).  Exit codes: 0 success, 2 config or input
error, 3 solver failure, 4 inadmissible spectral data, 5 ill-conditioned
main system, 6 diagonality violation, 7 grouping failure.
"""

from __future__ import annotations

import argparse
import json
import os
import pathlib
import sys

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_SD = 4
EXIT_ILLCOND = 5
EXIT_DIAGONALITY = 6
EXIT_GROUPING = 7


def _fail(tag, message, code):
    sys.stderr.write(f"gsturm-error: {tag}: {message}\n")
    return code


def _setup_threads():
    cap = os.environ.get("GSTURM_THREADS")
    if cap:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, cap)


def _load_config(path):
    with open(path, encoding="utf-8") as f:
        return json.load(f)


def _build_problem(spec):
    import numpy as np

    from .errors import ProblemSpecError
    from .problems import (MatrixProblem, PotentialGrid, builtin_potential,
                           graph_projector, star_graph)

    if not isinstance(spec, dict) or "kind" not in spec:
        raise ProblemSpecError("problem spec must be an object with a 'kind'")
    kind = spec["kind"]
    m = int(spec["m"])
    if kind == "graph":
        qs = [builtin_potential(name) for name in spec["q"]]
        if len(qs) != m:
            raise ProblemSpecError("graph problem needs one potential per edge")
        return star_graph(qs, float(spec.get("h", 0.0)))
    if kind == "general":
        diag = [builtin_potential(name) for name in spec.get("diag", ["zero"] * m)]
        if len(diag) != m:
            raise ProblemSpecError("general problem needs m diagonal potentials")
        g = float(spec.get("coupling", 0.0))
        coupling = g * (np.ones((m, m)) - np.eye(m))

        def qmat(x):
            return np.diag([f(x) for f in diag]) + coupling

        grid = PotentialGrid.from_callable(qmat, m)
        t = np.asarray(spec["T"], dtype=complex) if "T" in spec else graph_projector(m)
        if "H" in spec:
            bc = np.asarray(spec["H"], dtype=complex)
        else:
            bc = float(spec.get("h", 0.0)) * t
        return MatrixProblem(grid=grid, projector=t, bc_matrix=bc)
    raise ProblemSpecError(f"unknown problem kind {kind!r}")


def _true_potential_samples(spec, mesh):
    import numpy as np

    from .problems import builtin_potential

    if spec["kind"] == "graph":
        funcs = [builtin_potential(name) for name in spec["q"]]
        return np.stack([np.diag([f(x) for f in funcs]) for x in mesh]).astype(complex)
    funcs = [builtin_potential(name) for name in spec.get("diag", [])]
    m = int(spec["m"])
    g = float(spec.get("coupling", 0.0))
    out = np.zeros((mesh.size, m, m), dtype=complex)
    for i, x in enumerate(mesh):
        out[i] = np.diag([f(x) for f in funcs]) + g * (np.ones((m, m)) - np.eye(m))
    return out


def _build_model(cfg, data, n_max):
    import numpy as np

    from . import inverse
    from .errors import ProblemSpecError
    from .validate import coefficients_from_problem, fit_coefficients

    spec = cfg.get("model")
    if spec is None:
        raise ProblemSpecError("inverse runs need a 'model' section")
    nsteps = cfg.get("nsteps")
    if "from_problem" in spec:
        problem = _build_problem(spec["from_problem"])
        coeffs = coefficients_from_problem(problem)
        if spec.get("kind", problem.kind) == "graph" or problem.kind == "graph":
            return inverse.build_model_graph(coeffs.omega, coeffs.shifts[0],
                                             n_max, nsteps=nsteps)
        return inverse.build_model_general(coeffs, n_max, nsteps=nsteps)
    kind = spec.get("kind")
    if kind == "graph":
        omega = np.asarray(spec["omega"], dtype=float)
        if "z1" in spec:
            z1 = float(spec["z1"])
        else:
            z1 = float(fit_coefficients(data).shifts[0])
        return inverse.build_model_graph(omega, z1, n_max, nsteps=nsteps)
    if kind == "general":
        coeffs = fit_coefficients(data)
        return inverse.build_model_general(coeffs, n_max, nsteps=nsteps)
    raise ProblemSpecError("model spec needs 'from_problem', or kind graph/general")


def _json_matrix(a):
    import numpy as np

    a = np.asarray(a)
    return [[[format(float(v.real), ".17g"), format(float(v.imag), ".17g")]
             for v in row] for row in a]


def _dump_json(path, doc):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=1, sort_keys=True)
        f.write("\n")


def cmd_forward(cfg, out):
    import numpy as np

    from .spectral import forward_data, save_spectral_data
    from .validate import coefficients_from_problem, residual_report

    problem = _build_problem(cfg["problem"])
    n_max = int(cfg["n_max"])
    data = forward_data(problem, n_max, nsteps=cfg.get("nsteps"))
    save_spectral_data(data, out / "spectral_data.json")
    coeffs = coefficients_from_problem(problem)
    resid = residual_report(data, coeffs)
    report = {
        "format_version": 1,
        "m": problem.m,
        "n_max": n_max,
        "shift": data.shift,
        "kappa_tail_max": resid.kappa_tail_max,
        "kappa_partial_l2": float(resid.kappa_partial_l2[-1]),
        "z_fit": [float(v) for v in resid.z_fit],
        "z_true": [float(v) for v in coeffs.shifts],
        "weight_residual_tails": {
            "range_block": float(np.median(resid.weight_i[n_max // 2:])),
            "complement_block": float(np.median(resid.weight_ii[n_max // 2:])),
        },
    }
    _dump_json(out / "forward_report.json", report)
    print(f"wrote {out / 'spectral_data.json'} ({n_max * problem.m} eigenvalues, "
          f"shift {data.shift:g})")
    return EXIT_OK


def cmd_inverse(cfg, out):
    import numpy as np

    from . import inverse
    from .reporting import render_matrix_potential, render_potentials
    from .spectral import load_spectral_data
    from .validate import check_sd

    data = load_spectral_data(cfg["data"])
    if "n_max" in cfg and int(cfg["n_max"]) < data.n_max:
        data = data.truncated(int(cfg["n_max"]))
    sd = check_sd(data)
    if not sd["ok"]:
        bad = [k for k, v in sd.items() if k != "ok" and not v["ok"]]
        raise _SDError(f"data fail the admissibility checks: {bad}")
    model = _build_model(cfg, data, data.n_max)
    tol = cfg.get("tolerances", {})
    rec = inverse.reconstruct(
        data, model,
        mesh_points=int(cfg.get("mesh_points", inverse.MESH_POINTS)),
        cond_limit=float(tol.get("cond_limit", inverse.COND_LIMIT)),
        offdiag_limit=float(tol.get("offdiag_limit", inverse.OFFDIAG_LIMIT)),
        separation=float(tol.get("separation", 0.1)))
    _write_reconstruction(out, rec)
    if rec.q_edges is not None:
        render_potentials(out / "reconstruction_q.png", rec.mesh, rec.q_edges)
    else:
        render_matrix_potential(out / "reconstruction_q.png", rec.mesh, rec.potential)
    print(f"aggregate spectral distance: {rec.groups.total:.6g}")
    print(f"condition max: {rec.cond_max:.6g}")
    print(f"hermitian residual: {rec.herm_residual:.3e}; "
          f"diagonality residual: {rec.offdiag_residual:.3e}")
    return EXIT_OK


class _SDError(Exception):
    pass


def _write_reconstruction(out, rec):
    import numpy as np

    from .reporting import write_csv

    doc = {
        "format_version": 1,
        "mesh": [format(float(x), ".17g") for x in rec.mesh],
        "Q": [_json_matrix(q) for q in rec.potential],
        "H": _json_matrix(rec.bc_matrix),
        "epsilon0_pi": _json_matrix(rec.eps0[-1]),
        "shift": rec.shift,
        "graph": None if rec.q_edges is None else {
            "q": [[format(float(v), ".17g") for v in col] for col in rec.q_edges.T],
            "h": rec.h,
        },
        "diagnostics": {
            "condition_max": rec.cond_max,
            "herm_residual": rec.herm_residual,
            "offdiag_residual": rec.offdiag_residual,
            "potential_offdiag": rec.potential_offdiag,
            "aggregate_distance": rec.groups.total,
            "trimmed_margin": rec.trimmed_margin,
        },
    }
    _dump_json(out / "reconstruction.json", doc)
    if rec.q_edges is not None:
        m = rec.q_edges.shape[1]
        header = ["x"] + [f"q{j + 1}" for j in range(m)]
        rows = [[float(x)] + [float(v) for v in rec.q_edges[i]]
                for i, x in enumerate(rec.mesh)]
    else:
        m = rec.m
        header = ["x"] + [f"Q{i + 1}{j + 1}_re" for i in range(m) for j in range(m)]
        rows = [[float(x)] + [float(rec.potential[i, a, b].real)
                              for a in range(m) for b in range(m)]
                for i, x in enumerate(rec.mesh)]
    write_csv(out / "reconstruction_q.csv", header, rows)


def cmd_roundtrip(cfg, out):
    import numpy as np

    from . import inverse
    from .reporting import render_potentials, write_csv
    from .spectral import forward_data
    from .validate import coefficients_from_problem

    pspec = cfg["problem"]
    problem = _build_problem(pspec)
    n_max = int(cfg["n_max"])
    n_small = int(cfg.get("n_small", max(2, n_max // 2)))
    nsteps = cfg.get("nsteps")
    data = forward_data(problem, n_max, nsteps=nsteps)
    coeffs = coefficients_from_problem(problem)
    if problem.kind == "graph":
        model = inverse.build_model_graph(coeffs.omega, coeffs.shifts[0], n_max,
                                          nsteps=nsteps)
    else:
        model = inverse.build_model_general(coeffs, n_max, nsteps=nsteps)
    mesh_points = int(cfg.get("mesh_points", inverse.MESH_POINTS))

    results = {}
    for n in (n_small, n_max):
        model_n = inverse.ModelProblem(problem=model.problem, basis=model.basis,
                                       data=model.data.truncated(n),
                                       coeffs=model.coeffs, h_model=model.h_model)
        rec = inverse.reconstruct(data.truncated(n), model_n,
                                  mesh_points=mesh_points)
        q_true = _true_potential_samples(pspec, rec.mesh)
        err = rec.potential - q_true
        l2 = float(np.sqrt(np.trapezoid(np.abs(err) ** 2, x=rec.mesh, axis=0).max()))
        results[n] = (rec, l2)
        print(f"N = {n}: potential L2 error {l2:.6g}, hermitian residual "
              f"{rec.herm_residual:.3e}")

    rec, l2_big = results[n_max]
    _, l2_small = results[n_small]
    q_true = _true_potential_samples(pspec, rec.mesh)
    report = {
        "format_version": 1,
        "n_small": n_small,
        "n_max": n_max,
        "error_small": l2_small,
        "error_large": l2_big,
        "converged": bool(l2_big < l2_small),
        "herm_residual": rec.herm_residual,
        "h": rec.h,
        "bc_matrix": _json_matrix(rec.bc_matrix),
        "diagnostics": {
            "condition_max": rec.cond_max,
            "offdiag_residual": rec.offdiag_residual,
            "aggregate_distance": rec.groups.total,
        },
    }
    _dump_json(out / "roundtrip_report.json", report)

    if rec.q_edges is not None:
        m = rec.q_edges.shape[1]
        truth = np.real(np.diagonal(q_true, axis1=1, axis2=2))
        header = ["x"] + [f"q{j + 1}_true" for j in range(m)] + \
            [f"q{j + 1}_rec" for j in range(m)]
        rows = [[float(x)] + [float(v) for v in truth[i]] +
                [float(v) for v in rec.q_edges[i]]
                for i, x in enumerate(rec.mesh)]
        write_csv(out / "roundtrip_potentials.csv", header, rows)
        render_potentials(out / "roundtrip_potentials.png", rec.mesh,
                          rec.q_edges, truth)
    else:
        _write_reconstruction(out, rec)
        from .reporting import render_matrix_potential
        render_matrix_potential(out / "roundtrip_potentials.png", rec.mesh,
                                rec.potential)
    print(f"error(N={n_small}) = {l2_small:.6g} -> error(N={n_max}) = {l2_big:.6g}")
    return EXIT_OK


def cmd_stability(cfg, out):
    import numpy as np
    from dataclasses import replace

    from . import inverse
    from .reporting import render_stability, write_csv
    from .spectral import dedup_weights
    from .validate import coefficients_from_problem

    problem = _build_problem(cfg["problem"])
    n_max = int(cfg["n_max"])
    nsteps = cfg.get("nsteps")
    coeffs = coefficients_from_problem(problem)
    if problem.kind == "graph":
        model = inverse.build_model_graph(coeffs.omega, coeffs.shifts[0], n_max,
                                          nsteps=nsteps)
    else:
        model = inverse.build_model_general(coeffs, n_max, nsteps=nsteps)
    pert = cfg.get("perturb", {})
    n_idx = int(pert.get("n", 1)) - 1
    k_idx = int(pert.get("k", 1)) - 1
    deltas = [float(d) for d in pert.get("deltas", [0.0, 1e-3, 1e-2])]
    mesh_points = int(cfg.get("mesh_points", 129))

    rows = []
    for delta in deltas:
        lam = model.data.lam.copy()
        lam[n_idx, k_idx] += delta
        data = dedup_weights(replace(model.data, lam=lam, alpha_prime=None))
        rec = inverse.reconstruct(data, model, mesh_points=mesh_points,
                                  graph_mode=False)
        err = float(np.sqrt(np.trapezoid(
            np.abs(rec.potential - model.basis.matrix) ** 2,
            x=rec.mesh, axis=0).max()))
        xi = rec.groups.total
        ratio = err / xi if xi > 0 else float("nan")
        rows.append({"delta": delta, "distance": xi, "error": err, "ratio": ratio})
        print(f"delta = {delta:g}: distance = {xi:.6g}, error = {err:.6g}")

    _dump_json(out / "stability_report.json", {
        "format_version": 1, "n_max": n_max,
        "perturbed_index": [n_idx + 1, k_idx + 1], "rows": rows})
    write_csv(out / "stability.csv", ["delta", "distance", "error", "ratio"],
              [[r["delta"], r["distance"], r["error"], r["ratio"]] for r in rows])
    nz = [r for r in rows if r["delta"] > 0]
    if nz:
        render_stability(out / "stability.png", [r["delta"] for r in nz],
                         [r["distance"] for r in nz], [r["error"] for r in nz])
    return EXIT_OK


def cmd_validate(cfg, out):
    from .spectral import from_json_dict, load_spectral_data
    from .validate import coefficients_from_problem, validate_data

    try:
        with open(cfg["data"], encoding="utf-8") as f:
            doc = json.load(f)
        data = from_json_dict(doc)
    except Exception as exc:  # report admissibility failures, do not crash
        from .errors import SDViolationError
        if isinstance(exc, SDViolationError):
            _dump_json(out / "validation.json", {
                "format_version": 1, "ok": False,
                "sd": {"ok": False, "detail": str(exc)}})
            print(f"validation: FAIL ({exc})")
            return EXIT_OK
        raise
    coeffs = None
    if "problem" in cfg:
        coeffs = coefficients_from_problem(_build_problem(cfg["problem"]))
    report = validate_data(data, coeffs)
    report["format_version"] = 1
    _dump_json(out / "validation.json", _plain(report))
    status = "PASS" if report["ok"] else "FAIL"
    failed = [k for k, v in report.items()
              if isinstance(v, dict) and "ok" in v and not v["ok"]]
    print(f"validation: {status}" + (f" (failing: {failed})" if failed else ""))
    return EXIT_OK


def _plain(obj):
    import numpy as np

    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    return obj


def main(argv=None):
    _setup_threads()
    parser = argparse.ArgumentParser(
        prog="gsturm",
        description="Forward and inverse spectral solver for matrix "
                    "Sturm-Liouville operators and star-shaped graphs")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("forward", "inverse", "roundtrip", "stability", "validate"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--out", default=None)
    args = parser.parse_args(argv)

    from .errors import (DiagonalityError, GroupingError, IllConditionedError,
                         ProblemSpecError, SDViolationError, SolverError)

    try:
        cfg = _load_config(args.config)
    except (OSError, json.JSONDecodeError) as exc:
        return _fail("parse-error", str(exc), EXIT_CONFIG)

    out = pathlib.Path(args.out or cfg.get("out_dir", "."))
    out.mkdir(parents=True, exist_ok=True)

    handlers = {"forward": cmd_forward, "inverse": cmd_inverse,
                "roundtrip": cmd_roundtrip, "stability": cmd_stability,
                "validate": cmd_validate}
    try:
        return handlers[args.command](cfg, out)
    except (KeyError, TypeError, ValueError, OSError) as exc:
        return _fail("parse-error", str(exc), EXIT_CONFIG)
    except ProblemSpecError as exc:
        return _fail("parse-error", str(exc), EXIT_CONFIG)
    except _SDError as exc:
        return _fail("sd-violation", str(exc), EXIT_SD)
    except SDViolationError as exc:
        return _fail("sd-violation", str(exc), EXIT_SD)
    except IllConditionedError as exc:
        return _fail("ill-conditioned", str(exc), EXIT_ILLCOND)
    except DiagonalityError as exc:
        return _fail("diagonality-violation", str(exc), EXIT_DIAGONALITY)
    except GroupingError as exc:
        return _fail("grouping-error", str(exc), EXIT_GROUPING)
    except SolverError as exc:
        return _fail("solver-failure", str(exc), EXIT_SOLVER)


if __name__ == "__main__":
    sys.exit(main())
