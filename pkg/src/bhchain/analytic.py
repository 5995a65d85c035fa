"""Closed-form non-interacting dynamics of the 2- and 3-well chains.

With chi = 0 the Heisenberg equations are linear, so each annihilation
operator evolves as a_j(t) = sum_k U_jk(t) a_k(0). Because only well 1 is
occupied initially, every normally ordered moment at time t reduces to a
moment of a_1(0) weighted by the transfer amplitudes u_j = U_j1(t):

    <N_j>          = P_j n0
    <a_i^dag a_j>  = conj(u_i) u_j n0
    <N_i N_j>      = P_i P_j <a^dag^2 a^2>_0,     i != j

with P_j = |u_j|^2 and <a^dag^2 a^2>_0 = v0 + n0^2 - n0. Everything below
follows from these, given the initial mean n0 and variance v0 of well 1.

Witness conventions (all pairs i != j):

    xi_ij    = |<a_i^dag a_j>|^2 - <N_i N_j>
    sigma_ij = |<a_i a_j^dag>|^2 - <(N_i + 1/2) N_j>   = xi_ij - <N_j>/2
    zeta_ij  = |<a_i a_j^dag>|^2 - <(N_i + 1/2)(N_j + 1/2)>
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SQRT2 = np.sqrt(2.0)


class NoAnalyticSolution(ValueError):
    """Requested chain has no closed-form solution in this module."""


@dataclass(frozen=True)
class AnalyticInput:
    """Parameters of a closed-form evaluation.

    ``t`` may be a scalar or an array; outputs broadcast over it.
    ``v0`` is the number variance of well 1 at t=0 (0 for Fock, ``n0`` for
    a coherent state).
    """

    wells: int
    J: float
    t: float | np.ndarray
    n0: float
    v0: float

    def __post_init__(self):
        if self.wells not in (2, 3):
            raise NoAnalyticSolution(
                f"closed-form solutions exist for 2 or 3 wells only, got {self.wells}"
            )
        if self.n0 < 0 or self.v0 < 0:
            raise ValueError("n0 and v0 must be non-negative")

    @property
    def omega(self) -> float:
        return SQRT2 * self.J


@dataclass
class WitnessTable:
    populations: np.ndarray
    variances: np.ndarray
    xi: dict = field(default_factory=dict)
    sigma: dict = field(default_factory=dict)
    zeta: dict = field(default_factory=dict)


def transfer_weights(inp: AnalyticInput) -> np.ndarray:
    """Fractions P_j(t) of the initial well-1 population found in well j."""
    t = np.asarray(inp.t, dtype=float)
    if inp.wells == 2:
        c = np.cos(inp.J * t)
        s = np.sin(inp.J * t)
        return np.stack([c**2, s**2])
    c = np.cos(inp.omega * t)
    s = np.sin(inp.omega * t)
    return np.stack([0.25 * (c + 1) ** 2, 0.5 * s**2, 0.25 * (c - 1) ** 2])


def _check_pair(inp: AnalyticInput, i: int, j: int):
    if i == j or not (1 <= i <= inp.wells and 1 <= j <= inp.wells):
        raise ValueError(f"unsupported well pair ({i}, {j}) for {inp.wells} wells")


def populations(inp: AnalyticInput) -> np.ndarray:
    """Mean well populations, shape ``(wells,) + shape(t)``."""
    return inp.n0 * transfer_weights(inp)


def variances(inp: AnalyticInput) -> np.ndarray:
    """Number variance in each well.

    V_j = P_j^2 v0 + P_j (1 - P_j) n0: the initial fluctuations, scaled,
    plus binomial partition noise from splitting the atoms.
    """
    p = transfer_weights(inp)
    return p**2 * inp.v0 + p * (1 - p) * inp.n0


def xi(inp: AnalyticInput, i: int, j: int) -> np.ndarray:
    """Hillery-Zubairy entanglement function; symmetric in (i, j).

    Equal to P_i P_j (n0 - v0), positive iff well 1 starts sub-Poissonian.
    """
    _check_pair(inp, i, j)
    p = transfer_weights(inp)
    return p[i - 1] * p[j - 1] * (inp.n0 - inp.v0)


def sigma(inp: AnalyticInput, i: int, j: int) -> np.ndarray:
    """EPR-steering function; positive values certify steering."""
    _check_pair(inp, i, j)
    return xi(inp, i, j) - 0.5 * populations(inp)[j - 1]


def zeta(inp: AnalyticInput, i: int, j: int) -> np.ndarray:
    """Bell-correlation function. Never positive for these chains."""
    _check_pair(inp, i, j)
    pops = populations(inp)
    return xi(inp, i, j) - 0.5 * (pops[i - 1] + pops[j - 1]) - 0.25


def hopping_moment(inp: AnalyticInput, i: int, j: int) -> np.ndarray:
    """<a_i^dag(t) a_j(t)> as a complex array."""
    t = np.asarray(inp.t, dtype=float)
    if inp.wells == 2:
        c, s = np.cos(inp.J * t), np.sin(inp.J * t)
        u = np.stack([c + 0j, -1j * s])
    else:
        c, s = np.cos(inp.omega * t), np.sin(inp.omega * t)
        u = np.stack([0.5 * (c + 1) + 0j, -1j * s / SQRT2, 0.5 * (c - 1) + 0j])
    return np.conj(u[i - 1]) * u[j - 1] * inp.n0


def witness_table(inp: AnalyticInput, pairs=None) -> WitnessTable:
    """Every observable for the given (1-based) pairs; all pairs by default."""
    if pairs is None:
        pairs = [(i, j) for i in range(1, inp.wells + 1) for j in range(i + 1, inp.wells + 1)]
    table = WitnessTable(populations=populations(inp), variances=variances(inp))
    for i, j in pairs:
        table.xi[(i, j)] = xi(inp, i, j)
        table.sigma[(i, j)] = sigma(inp, i, j)
        table.sigma[(j, i)] = sigma(inp, j, i)
        table.zeta[(i, j)] = zeta(inp, i, j)
    return table


def analytic_input(wells: int, J: float, t, atoms: float, fock: bool) -> AnalyticInput:
    """Input for a Fock (v0 = 0) or coherent (v0 = n0) first well."""
    return AnalyticInput(wells=wells, J=J, t=t, n0=float(atoms), v0=0.0 if fock else float(atoms))


def analytic_series(config):
    """Closed-form curves on the configuration's sample grid.

    Error columns are zero and ``n_eff`` is 0, marking the series exact.
    """
    from .estimators import CorrelationSeries
    from .model import InitialState, validate

    config = validate(config)
    if config.nonlinearity != 0:
        raise NoAnalyticSolution("closed forms exist only for nonlinearity = 0")
    J = config.coupling
    times = config.sample_times()
    inp = analytic_input(config.wells, J, times, config.atoms, config.initial_state is InitialState.FOCK)
    pairs = config.pairs()
    T = len(times)
    zeros_w = np.zeros((config.wells, T))
    zeros_p = np.zeros((len(pairs), T))

    def stack(f, swap=False):
        rows = [f(inp, j, i) if swap else f(inp, i, j) for i, j in pairs]
        return np.array(rows).reshape(len(pairs), T)

    return CorrelationSeries(
        jt=times * J if J != 0 else times,
        wells=config.wells,
        pairs=pairs,
        populations=populations(inp),
        populations_err=zeros_w,
        variances=variances(inp),
        variances_err=zeros_w.copy(),
        xi=stack(xi),
        xi_err=zeros_p,
        sigma_ij=stack(sigma),
        sigma_ij_err=zeros_p.copy(),
        sigma_ji=stack(sigma, swap=True),
        sigma_ji_err=zeros_p.copy(),
        zeta=stack(zeta),
        zeta_err=zeros_p.copy(),
        n_eff=np.zeros(T),
        imag_residual=np.zeros(T),
    )
