import numpy as np
import pytest

from gsturm import spectral
from gsturm.errors import GroupingError, SDViolationError
from gsturm.problems import MatrixProblem, PotentialGrid, star_graph
from gsturm.propagator import char_det


def zero_graph(m=3, h=0.0):
    return star_graph([lambda x: 0.0] * m, h)


def scalar_problem(q, robin=0.0, dirichlet=False):
    grid = PotentialGrid.from_callable(lambda x: np.array([[q(x)]]), 1)
    if dirichlet:
        t = np.zeros((1, 1), dtype=complex)
        bc = np.zeros((1, 1))
    else:
        t = np.eye(1, dtype=complex)
        bc = robin * np.eye(1)
    return MatrixProblem(grid=grid, projector=t, bc_matrix=bc)


def test_locate_zero_graph():
    prob = zero_graph()
    loc = spectral.locate_eigenvalues(prob, 3)
    rho = np.sqrt(loc.table.ravel())
    want = [0.5, 1, 1, 1.5, 2, 2, 2.5, 3, 3]
    assert np.abs(rho - want).max() < 1e-9
    # residual of the characteristic determinant at the located roots
    d = char_det(prob, loc.roots)
    assert np.abs(d).max() < 1e-8


def test_locate_constant_shift():
    c = 2.5
    prob0 = zero_graph(m=2)
    probc = star_graph([lambda x: c] * 2, 0.0)
    l0 = spectral.locate_eigenvalues(prob0, 2).table
    lc = spectral.locate_eigenvalues(probc, 2).table
    assert np.abs(lc - l0 - c).max() < 1e-8


def test_locate_coupled_constant_m2():
    g = 0.1
    q = lambda x: np.array([[0.0, g], [g, 0.0]])
    grid = PotentialGrid.from_callable(q, 2)
    t = np.full((2, 2), 0.5)
    prob = MatrixProblem(grid=grid, projector=t, bc_matrix=np.zeros((2, 2)))
    loc = spectral.locate_eigenvalues(prob, 3)
    # decoupled channels: lam = (n-1/2)^2 + g and n^2 - g
    want = np.sort(np.concatenate(
        [(np.arange(1, 4) - 0.5) ** 2 + g, np.arange(1, 4) ** 2 - g])).reshape(3, 2)
    assert np.abs(loc.table - want).max() < 1e-8


def test_weights_zero_graph():
    prob = zero_graph()
    loc = spectral.locate_eigenvalues(prob, 2)
    alpha = spectral.weight_matrices(prob, loc)
    t = prob.projector
    tp = prob.complement
    # roots: 0.25 (mult 1), 1 (mult 2), 2.25, 4
    assert np.allclose(alpha[0], 2 * 0.25 / np.pi * t, rtol=1e-6)
    assert np.allclose(alpha[1], 2 * 1.0 / np.pi * tp, rtol=1e-6)
    assert np.allclose(alpha[2], 2 * 2.25 / np.pi * t, rtol=1e-6)
    assert np.allclose(alpha[3], 2 * 4.0 / np.pi * tp, rtol=1e-6)
    for a in alpha:
        assert np.abs(a - a.conj().T).max() < 1e-8 * np.abs(a).max()


def test_eigenfunction_oracle_scalar():
    prob = scalar_problem(lambda x: 0.3 * np.sin(x), robin=0.2)
    loc = spectral.locate_eigenvalues(prob, 3)
    alpha = spectral.weight_matrices(prob, loc)
    for i, lam in enumerate(loc.roots):
        a2 = spectral.eigenfunction_weights(prob, lam, int(loc.mult[i]))
        assert np.abs(alpha[i] - a2).max() < 1e-6 * max(1.0, np.abs(alpha[i]).max())


def test_eigenfunction_oracle_zero_graph():
    prob = zero_graph()
    a = spectral.eigenfunction_weights(prob, 0.25, 1)
    want = 1.0 / (2 * np.pi) * prob.projector
    assert np.abs(a - want).max() < 1e-8


def test_forward_data_shift_and_dedup():
    prob = zero_graph(m=2)
    data = spectral.forward_data(prob, 2)
    # raw spectrum starts at 0.25, so the shift normalizes the minimum to 1
    assert abs(data.shift - 0.75) < 1e-8
    assert abs(data.lam.min() - 1.0) < 1e-8
    assert np.allclose(data.raw_lam[:, 0], [0.25, 2.25], atol=1e-8)
    # all eigenvalues simple here: dedup leaves alpha unchanged
    assert np.abs(data.alpha_prime - data.alpha).max() == 0.0


def test_dedup_patterns():
    m = 2
    lam = np.array([[1.0, 1.0], [4.0, 4.0], [9.0, 10.0]])
    a = np.eye(m)[None, None] * np.ones((3, m, 1, 1))
    data = spectral.SpectralData(m=m, n_max=3, lam=lam, alpha=a)
    out = spectral.dedup_weights(data)
    assert np.abs(out.alpha_prime[0, 0] - np.eye(m)).max() == 0
    assert np.abs(out.alpha_prime[0, 1]).max() == 0
    assert np.abs(out.alpha_prime[1, 1]).max() == 0
    assert np.abs(out.alpha_prime[2, 1] - np.eye(m)).max() == 0


def test_dedup_triple_group():
    m = 3
    lam = np.array([[2.0, 2.0, 2.0]])
    a = np.broadcast_to(np.eye(m), (1, m, m, m)).copy()
    out = spectral.dedup_weights(spectral.SpectralData(m=m, n_max=1, lam=lam, alpha=a))
    assert np.abs(out.alpha_prime[0, 0] - np.eye(m)).max() == 0
    assert np.abs(out.alpha_prime[0, 1]).max() == 0
    assert np.abs(out.alpha_prime[0, 2]).max() == 0


def test_dedup_rejects_unequal_alpha():
    m = 2
    lam = np.array([[1.0, 1.0]])
    a = np.stack([np.stack([np.eye(m), 2 * np.eye(m)])])
    with pytest.raises(SDViolationError):
        spectral.dedup_weights(spectral.SpectralData(m=m, n_max=1, lam=lam, alpha=a))


def test_serialization_roundtrip(tmp_path):
    prob = zero_graph(m=2)
    data = spectral.forward_data(prob, 2)
    path = tmp_path / "data.json"
    spectral.save_spectral_data(data, path)
    back = spectral.load_spectral_data(path)
    assert back.m == data.m and back.n_max == data.n_max
    assert np.array_equal(back.lam, data.lam)
    assert np.array_equal(back.alpha, data.alpha)
    assert back.shift == data.shift
    # byte-identical on rewrite
    path2 = tmp_path / "data2.json"
    spectral.save_spectral_data(back, path2)
    assert path.read_bytes() == path2.read_bytes()


def synthetic_zero_data(m=2, n_max=4, as_model=False):
    """Closed-form zero-potential graph data (shift already applied)."""
    t = np.full((m, m), 1.0 / m)
    tp = np.eye(m) - t
    lam = np.zeros((n_max, m))
    alpha = np.zeros((n_max, m, m, m), dtype=complex)
    for n in range(1, n_max + 1):
        lam[n - 1, 0] = (n - 0.5) ** 2
        alpha[n - 1, 0] = 2 * (n - 0.5) ** 2 / np.pi * t
        for k in range(1, m):
            lam[n - 1, k] = n ** 2
            alpha[n - 1, k] = 2 * n ** 2 / np.pi * tp / (m - 1)
    shift = max(0.0, 1.0 - lam.min())
    data = spectral.SpectralData(m=m, n_max=n_max, lam=lam + shift, alpha=alpha,
                                 shift=shift)
    return spectral.dedup_weights(data)


def test_build_groups_identical_data():
    data = synthetic_zero_data()
    part = spectral.build_groups(data, data)
    assert part.total == 0.0
    assert np.all(part.xi == 0.0)


def test_build_groups_single_perturbation():
    data = synthetic_zero_data()
    model = synthetic_zero_data()
    delta = 1e-3
    lam = data.lam.copy()
    lam[0, 0] += delta
    pert = spectral.dedup_weights(
        spectral.SpectralData(m=data.m, n_max=data.n_max, lam=lam,
                              alpha=data.alpha, shift=data.shift))
    part = spectral.build_groups(pert, model)
    # the square-root move of the single perturbed entry
    drho = np.sqrt(lam[0, 0]) - np.sqrt(model.lam[0, 0])
    assert part.xi[0] == pytest.approx(drho, rel=1e-10)
    assert part.total == pytest.approx(1 * part.xi[0], rel=1e-12)
    # monotone in the perturbation size
    lam2 = data.lam.copy()
    lam2[0, 0] += 2 * delta
    pert2 = spectral.dedup_weights(
        spectral.SpectralData(m=data.m, n_max=data.n_max, lam=lam2,
                              alpha=data.alpha, shift=data.shift))
    part2 = spectral.build_groups(pert2, model)
    assert part2.total > part.total


def test_build_groups_separation_failure():
    data = synthetic_zero_data(n_max=6)
    lam = data.lam.copy()
    # park a high eigenvalue within 0.05 of the next cluster so that no
    # admissible n0 <= N/2 separates the groups
    lam[4, 0] = (np.sqrt(lam[4, 1]) - 0.05) ** 2
    bad = spectral.dedup_weights(
        spectral.SpectralData(m=data.m, n_max=6, lam=np.sort(lam.ravel()).reshape(6, data.m),
                              alpha=data.alpha, shift=data.shift))
    with pytest.raises(GroupingError):
        spectral.build_groups(bad, data)
