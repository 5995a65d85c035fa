import numpy as np
import pytest

from bhchain.analytic import analytic_input, populations, variances, xi
from bhchain.model import ChainConfig, ConfigError, validate
from bhchain.oracle import (
    BasisTooLarge,
    basis_dimension,
    build_basis,
    build_hamiltonian,
    evolve,
    exact_record,
    hop_operator,
    oracle_series,
)


@pytest.mark.parametrize("M,N,dim", [(2, 4, 5), (3, 2, 6), (4, 0, 1), (3, 3, 10)])
def test_dimensions(M, N, dim):
    assert basis_dimension(M, N) == dim
    basis = build_basis(M, N)
    assert basis.dim == dim
    assert np.all(basis.states.sum(axis=1) == N)
    assert tuple(basis.states[0]) == (N,) + (0,) * (M - 1)
    # descending lexicographic order
    rows = [tuple(s) for s in basis.states.tolist()]
    assert rows == sorted(rows, reverse=True)


def test_two_well_hamiltonian_elements():
    basis = build_basis(2, 2)
    H = build_hamiltonian(basis, J=1.0, chi=0.5).toarray()
    # states (2,0), (1,1), (0,2)
    r2 = np.sqrt(2)
    expected = np.array([[1.0, r2, 0], [r2, 0, r2], [0, r2, 1.0]])
    np.testing.assert_allclose(H, expected, atol=1e-14)


def test_hop_matrix_element():
    basis = build_basis(3, 3)
    op = hop_operator(basis, 1, 0).toarray()
    src = basis.index[(3, 0, 0)]
    dst = basis.index[(2, 1, 0)]
    assert op[dst, src] == pytest.approx(np.sqrt(3))


@pytest.mark.parametrize("M,N", [(2, 5), (3, 4), (4, 3)])
def test_hermitian(M, N):
    H = build_hamiltonian(build_basis(M, N), 0.7, 0.13)
    assert abs(H - H.conj().T).max() < 1e-14


def test_norm_and_energy_conserved():
    basis = build_basis(3, 4)
    H = build_hamiltonian(basis, 1.0, 0.2)
    exps = evolve(basis, H, np.linspace(0, 10, 21))
    energies = [e.energy for e in exps]
    np.testing.assert_allclose(energies, energies[0], atol=1e-10)
    assert all(abs(e.norm - 1) < 1e-12 for e in exps)
    np.testing.assert_allclose([e.populations.sum() for e in exps], 4.0, atol=1e-10)


def test_krylov_matches_dense(monkeypatch):
    import bhchain.oracle as oracle

    basis = build_basis(3, 5)
    H = build_hamiltonian(basis, 1.0, 0.3)
    t = np.linspace(0, 3, 7)
    dense = evolve(basis, H, t)
    monkeypatch.setattr(oracle, "DENSE_LIMIT", 0)
    krylov = evolve(basis, H, t)
    for a, b in zip(dense, krylov):
        np.testing.assert_allclose(a.hopping, b.hopping, atol=1e-9)
        np.testing.assert_allclose(a.number_products, b.number_products, atol=1e-9)


@pytest.mark.parametrize("M", [2, 3])
def test_noninteracting_matches_closed_form(M):
    t = np.linspace(0, 10, 51)
    basis = build_basis(M, 5)
    exps = evolve(basis, build_hamiltonian(basis, 1.0, 0.0), t)
    inp = analytic_input(M, 1.0, t, 5, fock=True)
    pops = np.array([e.populations for e in exps]).T
    var = np.array([np.diag(e.number_products) - e.populations**2 for e in exps]).T
    np.testing.assert_allclose(pops, populations(inp), atol=1e-8)
    np.testing.assert_allclose(var, variances(inp), atol=1e-8)


def test_series_matches_closed_form():
    cfg = ChainConfig(wells=3, atoms=6, t_max=10.0)
    s = oracle_series(cfg)
    inp = analytic_input(3, 1.0, validate(cfg).sample_times(), 6, fock=True)
    np.testing.assert_allclose(s.xi[0], xi(inp, 1, 2), atol=1e-8)
    assert np.all(s.n_eff == 0)
    assert np.all(s.xi_err == 0)


def test_record_shape():
    rec, exps = exact_record(2, 4, 1.0, 0.1, np.linspace(0, 1, 5), [(1, 2)])
    assert rec.means().shape == (5, 7)
    assert len(exps) == 5


def test_dimension_guard():
    # 4 wells with 200 atoms would need C(203, 3) = 1,373,701 states
    assert basis_dimension(4, 200) == 1373701
    with pytest.raises(BasisTooLarge):
        build_basis(4, 200)


def test_coherent_rejected():
    with pytest.raises(ConfigError):
        oracle_series(ChainConfig(atoms=4, initial_state="coherent"))
