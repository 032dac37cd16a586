"""Boundary value problem containers: sampled matrix potentials on [0, pi]
plus the self-adjoint vertex data (projector and boundary matrix).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import ProblemSpecError
from .linalg import graph_projector, projector_rank, require_hermitian, require_projector

DEFAULT_SAMPLES = 513


@dataclass(frozen=True)
class PotentialGrid:
    """Hermitian matrix potential sampled on a mesh spanning [0, pi].

    Values between nodes come from a cubic spline; the mesh must contain
    at least 65 nodes so the spline resolves the potentials this package
    targets to ~1e-10.
    """

    mesh: np.ndarray
    values: np.ndarray
    _spline: object = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        mesh = np.asarray(self.mesh, dtype=float)
        values = np.asarray(self.values, dtype=complex)
        if mesh.ndim != 1 or mesh.size < 65:
            raise ProblemSpecError("potential mesh needs at least 65 nodes")
        if mesh[0] != 0.0 or abs(mesh[-1] - np.pi) > 1e-14:
            raise ProblemSpecError("potential mesh must span [0, pi] exactly")
        if np.diff(mesh).min(initial=np.inf) <= 0:
            raise ProblemSpecError("potential mesh must be strictly increasing")
        if values.shape != (mesh.size, self.dim, self.dim):
            raise ProblemSpecError(f"potential samples have shape {values.shape}, "
                                   f"expected ({mesh.size}, m, m)")
        for k in (0, values.shape[0] // 2, values.shape[0] - 1):
            require_hermitian(values[k], name=f"potential sample {k}")
        herm = np.abs(values - values.conj().transpose(0, 2, 1)).max(initial=0.0)
        if herm > 1e-12 * max(1.0, np.abs(values).max(initial=0.0)):
            raise ProblemSpecError("potential samples are not Hermitian within 1e-12")
        object.__setattr__(self, "mesh", mesh)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "_spline", CubicSpline(mesh, values, axis=0))

    @property
    def dim(self):
        return int(np.asarray(self.values).shape[-1])

    @classmethod
    def from_callable(cls, func, m, samples=DEFAULT_SAMPLES):
        mesh = np.linspace(0.0, np.pi, samples)
        values = np.stack([np.asarray(func(x), dtype=complex).reshape(m, m) for x in mesh])
        return cls(mesh=mesh, values=values)

    @classmethod
    def constant(cls, matrix, samples=65):
        matrix = require_hermitian(matrix, tol=1e-10, name="constant potential")
        mesh = np.linspace(0.0, np.pi, samples)
        return cls(mesh=mesh, values=np.broadcast_to(matrix, (samples, *matrix.shape)).copy())

    @classmethod
    def zero(cls, m, samples=65):
        return cls.constant(np.zeros((m, m)), samples=samples)

    def at(self, x):
        """Potential values at the points x, shape (len(x), m, m)."""
        out = self._spline(np.asarray(x, dtype=float))
        return 0.5 * (out + out.conj().swapaxes(-1, -2))

    def integral(self):
        """Exact integral of the spline over [0, pi]."""
        return self._spline.integrate(0.0, np.pi)

    def max_norm(self):
        """Coarse upper bound on max_x ||Q(x)||_2 over the sample mesh."""
        return float(np.linalg.norm(self.values, ord=2, axis=(1, 2)).max(initial=0.0))

    def shifted(self, c0):
        """Grid of Q + c0*I."""
        eye = np.eye(self.dim)
        return PotentialGrid(mesh=self.mesh, values=self.values + c0 * eye)


@dataclass(frozen=True)
class MatrixProblem:
    """The boundary value problem: -Y'' + Q Y = lam Y on (0, pi), Y(0) = 0,
    and T(Y'(pi) - H Y(pi)) - (I - T) Y(pi) = 0.

    `kind` is "graph" when Q is diagonal, T is the star-graph vertex
    projector and H = h*T; anything else is "general".
    """

    grid: PotentialGrid
    projector: np.ndarray
    bc_matrix: np.ndarray
    kind: str = "general"
    h: float | None = None

    def __post_init__(self):
        t = require_projector(self.projector)
        bc = require_hermitian(self.bc_matrix, tol=1e-10, name="boundary matrix")
        m = self.grid.dim
        if t.shape != (m, m) or bc.shape != (m, m):
            raise ProblemSpecError("projector/boundary matrix dimension mismatch")
        if np.abs(t @ bc @ t - bc).max(initial=0.0) > 1e-10 * max(1.0, np.abs(bc).max(initial=0.0)):
            raise ProblemSpecError("boundary matrix must satisfy H = THT")
        if self.kind == "graph":
            if self.h is None:
                raise ProblemSpecError("graph problems require the scalar coupling h")
            diag = np.eye(m, dtype=bool)
            if np.abs(self.grid.values[:, ~diag]).max(initial=0.0) > 1e-12:
                raise ProblemSpecError("graph potentials must be diagonal")
            if np.abs(t - graph_projector(m)).max() > 1e-12:
                raise ProblemSpecError("graph problems use the vertex projector")
            if np.abs(bc - self.h * t).max() > 1e-10:
                raise ProblemSpecError("graph boundary matrix must equal h*T")
        elif self.kind != "general":
            raise ProblemSpecError(f"unknown problem kind {self.kind!r}")
        object.__setattr__(self, "projector", t)
        object.__setattr__(self, "bc_matrix", bc)
        object.__setattr__(self, "_cache", {})

    @property
    def m(self):
        return self.grid.dim

    @property
    def p(self):
        return projector_rank(self.projector)

    @property
    def complement(self):
        return np.eye(self.m) - self.projector

    def cache(self):
        return self.__dict__["_cache"]

    def eigen_floor(self):
        """Rigorous-ish lower bound for the spectrum (used to bound scans)."""
        qmax = self.grid.max_norm()
        hmax = float(np.linalg.norm(self.bc_matrix, ord=2))
        return -(qmax + hmax ** 2 + hmax / np.pi + 1.0)

    def shifted(self, c0):
        """Problem with potential Q + c0*I (same boundary data)."""
        return MatrixProblem(grid=self.grid.shifted(c0), projector=self.projector,
                             bc_matrix=self.bc_matrix, kind=self.kind, h=self.h)


def star_graph(potentials, h, samples=DEFAULT_SAMPLES):
    """Star-graph problem from per-edge scalar potentials.

    `potentials` is a sequence of callables q_j(x) (or constants); `h` is the
    scalar coupling at the internal vertex.
    """
    m = len(potentials)
    funcs = [q if callable(q) else (lambda x, v=float(q): v) for q in potentials]

    def qmat(x):
        return np.diag([f(x) for f in funcs])

    grid = PotentialGrid.from_callable(qmat, m, samples=samples)
    t = graph_projector(m)
    return MatrixProblem(grid=grid, projector=t, bc_matrix=float(h) * t, kind="graph", h=float(h))


def general_problem(qfunc, m, projector=None, bc_matrix=None, samples=DEFAULT_SAMPLES):
    """General matrix problem from a callable x -> Q(x)."""
    grid = qfunc if isinstance(qfunc, PotentialGrid) else PotentialGrid.from_callable(
        qfunc, m, samples=samples)
    t = graph_projector(m) if projector is None else np.asarray(projector, dtype=complex)
    bc = np.zeros((m, m)) if bc_matrix is None else np.asarray(bc_matrix, dtype=complex)
    return MatrixProblem(grid=grid, projector=t, bc_matrix=bc, kind="general")


def builtin_potential(name):
    """Scalar potential factory for the CLI built-ins.

    Supported names: "zero", "const:<v>", "sin:<k>", "cos:<k>" and
    "affine:<a>:<b>" meaning a + b*(x - pi/2).
    """
    parts = str(name).split(":")
    kind = parts[0]
    try:
        if kind == "zero":
            return lambda x: 0.0
        if kind == "const":
            v = float(parts[1])
            return lambda x: v
        if kind == "sin":
            k = float(parts[1]) if len(parts) > 1 else 1.0
            return lambda x: np.sin(k * x)
        if kind == "cos":
            k = float(parts[1]) if len(parts) > 1 else 1.0
            return lambda x: np.cos(k * x)
        if kind == "affine":
            a = float(parts[1]) if len(parts) > 1 else 0.0
            b = float(parts[2]) if len(parts) > 2 else 1.0
            return lambda x: a + b * (x - np.pi / 2)
    except (IndexError, ValueError) as exc:
        raise ProblemSpecError(f"malformed potential spec {name!r}") from exc
    raise ProblemSpecError(f"unknown builtin potential {name!r}")
