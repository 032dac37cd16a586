import numpy as np
import pytest

from gsturm import linalg
from gsturm.errors import InconsistencyError, ProblemSpecError


def test_graph_projector_m2():
    t = linalg.graph_projector(2)
    assert np.allclose(t, [[0.5, 0.5], [0.5, 0.5]])


def test_graph_projector_m3():
    t = linalg.graph_projector(3)
    assert np.allclose(t, np.full((3, 3), 1 / 3))
    assert linalg.projector_rank(t) == 1
    # exact idempotency for the m=2 case
    t2 = linalg.graph_projector(2)
    assert np.abs(t2 @ t2 - t2).max() == 0.0


def test_graph_projector_rejects_small_dim():
    with pytest.raises(ProblemSpecError):
        linalg.graph_projector(1)


def test_range_shifts_zero():
    t = linalg.graph_projector(3)
    z = linalg.range_shifts(np.zeros((3, 3)), np.zeros((3, 3)), t)
    assert np.allclose(z, 0.0, atol=1e-14)


def test_range_shifts_graph_m2():
    # mean potential diag(1, 3), no boundary coupling: shift = mean of means
    t = linalg.graph_projector(2)
    z = linalg.range_shifts(np.diag([1.0, 3.0]), np.zeros((2, 2)), t)
    assert z.shape == (1,)
    assert abs(z[0] - 2.0) < 1e-12


def brute_force_range_root(mean, bc, t):
    """Scan det(zI - T(mean-bc)T) restricted to Ran(T) for sign changes."""
    b = linalg.range_basis(t)
    block = b.conj().T @ (mean - bc) @ b

    def f(z):
        return np.linalg.det(z * np.eye(block.shape[0]) - block).real

    grid = np.linspace(-10, 10, 20001)
    vals = np.array([f(z) for z in grid])
    roots = []
    for i in range(len(grid) - 1):
        if vals[i] == 0.0:
            roots.append(grid[i])
        elif vals[i] * vals[i + 1] < 0:
            lo, hi = grid[i], grid[i + 1]
            for _ in range(80):
                mid = 0.5 * (lo + hi)
                if f(lo) * f(mid) <= 0:
                    hi = mid
                else:
                    lo = mid
            roots.append(0.5 * (lo + hi))
    return np.array(roots)


def test_range_shifts_m3_brute_force():
    t = linalg.graph_projector(3)
    mean = np.diag([1.0, 2.0, 3.0]).astype(complex)
    z = linalg.range_shifts(mean, np.zeros((3, 3)), t)
    assert abs(z[0] - 2.0) < 1e-10
    roots = brute_force_range_root(mean, np.zeros((3, 3)), t)
    assert np.allclose(z, roots, atol=1e-9)


def test_complement_shifts_graph_m2():
    t = linalg.graph_projector(2)
    z = linalg.complement_shifts(np.diag([0.4, 1.8]).astype(complex), t)
    assert np.allclose(z, [(0.4 + 1.8) / 2], atol=1e-12)


def test_complement_shifts_zero_m3():
    t = linalg.graph_projector(3)
    z = linalg.complement_shifts(np.zeros((3, 3)), t)
    assert np.allclose(z, [0.0, 0.0], atol=1e-13)


def test_complement_shifts_m3_polynomial_oracle():
    omega = np.array([0.0, 1.0, 2.0])
    t = linalg.graph_projector(3)
    z = linalg.complement_shifts(np.diag(omega).astype(complex), t)
    # roots of z^2 - 2z + 2/3, from the derivative of the cubic with the
    # given roots divided by m
    oracle = np.sort(np.roots([1.0, -2.0, 2.0 / 3.0]))
    assert np.allclose(z, oracle, atol=1e-10)


def test_complement_shifts_literal_vanishes():
    t = linalg.graph_projector(3)
    bc = 0.7 * t
    z = linalg.complement_shifts_literal(bc, t)
    assert np.allclose(z, 0.0, atol=1e-12)


def test_shifts_invariant_under_commuting_unitary():
    rng = np.random.default_rng(7)
    m = 4
    t = np.zeros((m, m), dtype=complex)
    t[:2, :2] = np.eye(2)
    mean = rng.normal(size=(m, m)) + 1j * rng.normal(size=(m, m))
    mean = 0.5 * (mean + mean.conj().T)
    hblk = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    bc = np.zeros((m, m), dtype=complex)
    bc[:2, :2] = 0.5 * (hblk + hblk.conj().T)
    # block unitary commutes with t
    u = np.zeros((m, m), dtype=complex)
    for sl in (slice(0, 2), slice(2, 4)):
        g = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
        q, _ = np.linalg.qr(g)
        u[sl, sl] = q
    z1 = linalg.spectral_shifts(mean, bc, t)
    z2 = linalg.spectral_shifts(u @ mean @ u.conj().T, u @ bc @ u.conj().T, t)
    assert np.abs(z1 - z2).max() < 1e-10


def test_constant_solution_zero_potential():
    basis = linalg.ConstantBasis.from_matrix(np.zeros((2, 2)))
    s, sp = linalg.constant_solution(basis, 1.0, np.pi / 2)
    assert np.allclose(s, np.eye(2), atol=1e-14)
    assert np.allclose(sp, np.zeros((2, 2)), atol=1e-14)


def test_constant_solution_limit_branch():
    basis = linalg.ConstantBasis.from_matrix(np.zeros((2, 2)))
    s, sp = linalg.constant_solution(basis, 0.0, np.pi)
    assert np.allclose(s, np.pi * np.eye(2), atol=1e-13)
    assert np.allclose(sp, np.eye(2), atol=1e-13)


def test_constant_solution_diagonal_channels():
    basis = linalg.ConstantBasis.from_matrix(np.diag([1.0, 2.0]))
    s, _ = linalg.constant_solution(basis, 3.0, 1.0)
    want = np.diag([np.sin(np.sqrt(2)) / np.sqrt(2), np.sin(1.0)])
    assert np.allclose(s, want, atol=1e-13)


def test_constant_solution_self_wronskian():
    rng = np.random.default_rng(3)
    c = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    basis = linalg.ConstantBasis.from_matrix(0.5 * (c + c.conj().T))
    lam = 2.3 + 0.7j
    for x in (0.3, 1.1, np.pi):
        s_l, sp_l = linalg.constant_solution(basis, lam, x)
        s_c, sp_c = linalg.constant_solution(basis, np.conj(lam), x)
        w = s_c.conj().T @ sp_l - sp_c.conj().T @ s_l
        assert np.abs(w).max() < 1e-10


def test_trig_pair_matches_direct():
    w = np.array([4.0, -9.0, 1e-8, 0.0], dtype=complex)
    s, c = linalg.trig_pair(w, 0.7)
    assert abs(s[0] - np.sin(2 * 0.7) / 2) < 1e-14
    assert abs(c[1] - np.cosh(3 * 0.7)) < 1e-12
    assert abs(s[3] - 0.7) < 1e-15
    nu = np.sqrt(1e-8)
    assert abs(s[2] - np.sin(nu * 0.7) / nu) < 1e-15


def test_shift_projectors_zero_mean():
    t = linalg.graph_projector(3)
    a = linalg.shift_projectors(np.zeros((3, 3)), t, np.zeros(3))
    assert np.allclose(a[0], t, atol=1e-12)
    assert np.allclose(a[1], np.eye(3) - t, atol=1e-12)
    assert np.allclose(a[2], np.eye(3) - t, atol=1e-12)


def test_shift_projectors_inconsistent_roots():
    t = linalg.graph_projector(2)
    with pytest.raises(InconsistencyError):
        linalg.shift_projectors(np.zeros((2, 2)), t, np.array([1.0, 0.0]))


def test_graph_shift_projectors_m2():
    omega = np.array([0.0, 2.0])
    shifts = np.array([1.0, 1.0])  # z1 arbitrary here; z2 = mean(omega) = 1
    a = linalg.graph_shift_projectors(omega, shifts)
    assert np.allclose(a[0], linalg.graph_projector(2))
    assert np.allclose(a[1], [[0.5, -0.5], [-0.5, 0.5]], atol=1e-12)


def test_graph_shift_projectors_degenerate_falls_back():
    omega = np.array([0.5, 0.5, 0.5])
    t = linalg.graph_projector(3)
    shifts = np.array([0.2, 0.5, 0.5])
    with pytest.warns(UserWarning):
        a = linalg.graph_shift_projectors(omega, shifts)
    assert np.allclose(a[1], np.eye(3) - t, atol=1e-10)
    assert np.allclose(a[2], np.eye(3) - t, atol=1e-10)


def test_graph_vs_general_projectors_m3():
    omega = np.array([0.0, 1.0, 2.0])
    t = linalg.graph_projector(3)
    mean = np.diag(omega).astype(complex)
    bc = np.zeros((3, 3))
    shifts = linalg.spectral_shifts(mean, bc, t)
    theta = linalg.compressed_mean(mean, bc, t)
    a_gen = linalg.shift_projectors(theta, t, shifts)
    a_graph = linalg.graph_shift_projectors(omega, shifts)
    assert np.abs(a_gen - a_graph).max() < 1e-8
    # the complement projectors resolve the complement of the vertex projector
    assert np.abs(a_graph[1] + a_graph[2] - (np.eye(3) - t)).max() < 1e-10


def test_shift_projector_products_vanish():
    omega = np.array([0.0, 1.0, 2.0])
    t = linalg.graph_projector(3)
    mean = np.diag(omega).astype(complex)
    shifts = linalg.spectral_shifts(mean, np.zeros((3, 3)), t)
    a = linalg.shift_projectors(linalg.compressed_mean(mean, np.zeros((3, 3)), t), t, shifts)
    for s in range(3):
        # projector property
        assert np.abs(a[s] @ a[s] - a[s]).max() < 1e-10
        assert np.abs(a[s] - a[s].conj().T).max() < 1e-10
        for k in range(3):
            cross_block = (s < 1) != (k < 1)
            if cross_block or abs(shifts[s] - shifts[k]) > 1e-8:
                assert np.abs(a[s] @ a[k]).max() < 1e-10
