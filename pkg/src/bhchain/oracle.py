"""Exact Schroedinger propagation in the fixed-N Fock basis.

Ground truth for small chains: the Bose-Hubbard Hamiltonian

    H / hbar = sum_j chi a_j^dag2 a_j^2 + J sum_j (a_j^dag a_{j+1} + h.c.)

is built in the number-conserving basis and the all-in-well-1 Fock state
is propagated through its eigendecomposition (or by Krylov action of the
exponential when the basis is large).
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import expm_multiply

from .estimators import MomentRecord, n_channels

MAX_DIMENSION = 200_000
DENSE_LIMIT = 3000
NORM_TOL = 1e-10


class BasisTooLarge(ValueError):
    """Basis dimension exceeds the resource guard."""


class NormDriftError(RuntimeError):
    pass


@dataclass
class FockBasis:
    """Occupation vectors (n_1, ..., n_M) with sum N, in descending
    lexicographic order so that (N, 0, ..., 0) is state 0."""

    M: int
    N: int
    states: np.ndarray
    index: dict

    @property
    def dim(self) -> int:
        return len(self.states)


def basis_dimension(M: int, N: int) -> int:
    return comb(N + M - 1, M - 1)


def _compositions(N: int, M: int):
    if M == 1:
        yield (N,)
        return
    for first in range(N, -1, -1):
        for rest in _compositions(N - first, M - 1):
            yield (first,) + rest


def build_basis(M: int, N: int, max_dim: int = MAX_DIMENSION) -> FockBasis:
    if M < 2:
        raise ValueError("need at least 2 wells")
    if N < 0 or int(N) != N:
        raise ValueError("N must be a non-negative integer")
    N = int(N)
    dim = basis_dimension(M, N)
    if dim > max_dim:
        raise BasisTooLarge(f"basis dimension {dim} for M={M}, N={N} exceeds the guard {max_dim}")
    states = np.array(list(_compositions(N, M)), dtype=np.int64).reshape(dim, M)
    index = {tuple(s): k for k, s in enumerate(states.tolist())}
    return FockBasis(M=M, N=N, states=states, index=index)


def hop_operator(basis: FockBasis, i: int, j: int) -> sparse.csr_matrix:
    """Matrix of a_i^dag a_j (0-based wells, i != j) in the basis."""
    rows, cols, vals = [], [], []
    for k, s in enumerate(basis.states):
        if s[j] == 0:
            continue
        t = s.copy()
        t[j] -= 1
        t[i] += 1
        rows.append(basis.index[tuple(t.tolist())])
        cols.append(k)
        vals.append(np.sqrt(s[j] * (s[i] + 1.0)))
    return sparse.csr_matrix((vals, (rows, cols)), shape=(basis.dim, basis.dim))


def build_hamiltonian(basis: FockBasis, J: float, chi: float) -> sparse.csr_matrix:
    """H/hbar as a sparse Hermitian matrix."""
    n = basis.states.astype(float)
    diag = chi * np.sum(n * (n - 1), axis=1)
    H = sparse.diags(diag).tocsr().astype(complex)
    for j in range(basis.M - 1):
        hop = hop_operator(basis, j, j + 1)
        H = H + J * (hop + hop.T)
    return H.tocsr()


@dataclass
class ExpectationSet:
    """Exact moments at one time; wells 0-based in the arrays."""

    hopping: np.ndarray  # <a_i^dag a_j>, complex (M, M)
    number_products: np.ndarray  # <N_i N_j>, real (M, M)
    pair_moment: np.ndarray  # <a_j^dag2 a_j^2>, real (M,)
    populations: np.ndarray  # <N_j>, real (M,)
    energy: float
    norm: float


def _expectations(basis, psi, hops, H) -> ExpectationSet:
    prob = np.abs(psi) ** 2
    n = basis.states.astype(float)
    pops = prob @ n
    nn = (n * prob[:, None]).T @ n
    M = basis.M
    hopping = np.zeros((M, M), dtype=complex)
    for (i, j), op in hops.items():
        hopping[i, j] = np.vdot(psi, op @ psi)
    for j in range(M):
        hopping[j, j] = pops[j]
    return ExpectationSet(
        hopping=hopping,
        number_products=nn,
        pair_moment=prob @ (n * (n - 1)),
        populations=pops,
        energy=float(np.vdot(psi, H @ psi).real),
        norm=float(np.sqrt(prob.sum())),
    )


def evolve(basis: FockBasis, H, t_grid, norm_tol: float = NORM_TOL) -> list[ExpectationSet]:
    """Propagate |N, 0, ..., 0> and return exact moments at each time."""
    t_grid = np.asarray(t_grid, dtype=float)
    psi0 = np.zeros(basis.dim, dtype=complex)
    psi0[basis.index[(basis.N,) + (0,) * (basis.M - 1)]] = 1.0
    hops = {(i, j): hop_operator(basis, i, j) for i in range(basis.M) for j in range(basis.M) if i != j}
    H = sparse.csr_matrix(H)

    if basis.dim <= DENSE_LIMIT:
        energies, vecs = np.linalg.eigh(H.toarray())
        coeff = vecs.conj().T @ psi0
        states = [vecs @ (np.exp(-1j * energies * t) * coeff) for t in t_grid]
    else:
        states = _krylov_states(H, psi0, t_grid)

    out = []
    for t, psi in zip(t_grid, states):
        exp = _expectations(basis, psi, hops, H)
        if abs(exp.norm - 1.0) > norm_tol:
            raise NormDriftError(f"norm drift {exp.norm - 1.0:.3e} at t={t}")
        out.append(exp)
    return out


def _krylov_states(H, psi0, t_grid):
    states = []
    psi = psi0
    t_prev = 0.0
    for t in t_grid:
        if t != t_prev:
            psi = expm_multiply(-1j * (t - t_prev) * H, psi)
            t_prev = t
        states.append(psi)
    return states


def moment_means(expectations: list[ExpectationSet], pairs) -> np.ndarray:
    """Exact values of every estimator channel, shape ``(T, channels)``.

    Maps quantum moments onto the positive-P channel layout used by
    :mod:`bhchain.estimators` (normal ordering throughout).
    """
    M = len(expectations[0].populations)
    out = np.empty((len(expectations), n_channels(M, len(pairs))), dtype=complex)
    for k, e in enumerate(expectations):
        out[k, :M] = e.populations
        out[k, M : 2 * M] = e.pair_moment
        for p, (i, j) in enumerate(pairs):
            i0, j0 = i - 1, j - 1
            base = 2 * M + 3 * p
            out[k, base] = e.hopping[i0, j0]
            # alpha_i alpha_j^+ <-> <a_j^dag a_i>
            out[k, base + 1] = e.hopping[j0, i0]
            out[k, base + 2] = e.number_products[i0, j0]
    return out


def exact_record(M: int, N: int, J: float, chi: float, t_grid, pairs, max_dim: int = MAX_DIMENSION):
    """Exact moments as a count-1 :class:`MomentRecord` (zero error bars)."""
    basis = build_basis(M, N, max_dim)
    H = build_hamiltonian(basis, J, chi)
    exps = evolve(basis, H, t_grid)
    return MomentRecord.from_moments(M, pairs, moment_means(exps, pairs)), exps


def oracle_series(config, max_dim: int = MAX_DIMENSION):
    """Exact curves for a Fock-state configuration on its sample grid.

    Error columns are zero and ``n_eff`` is 0, marking the series exact.
    """
    from .estimators import finalize
    from .model import ConfigError, InitialState, validate

    config = validate(config)
    if config.initial_state is not InitialState.FOCK:
        raise ConfigError("the exact oracle supports Fock initial states only")
    times = config.sample_times()
    rec, _ = exact_record(config.wells, config.atoms, config.coupling, config.nonlinearity,
                          times, config.pairs(), max_dim)
    J = config.coupling
    series = finalize(rec, times * J if J != 0 else times)
    series.n_eff = np.zeros(len(times))
    return series
