"""Initial positive-P samples for the first well of the chain.

The Fock-state distribution is built from the Husimi function of |N>:
a point mu with |mu|^2 ~ Gamma(N+1, 1) and uniform phase, smeared by a
unit-variance complex Gaussian delta that enters alpha and alpha_plus with
opposite signs,

    alpha = mu + delta,    alpha_plus = conj(mu - delta).

Averages of normally ordered products then give <a^dag a> = N and
<a^dag^2 a^2> = N(N-1), so the number variance vanishes.
"""

from __future__ import annotations

import numpy as np
from scipy import special

from .model import ChainConfig, InitialState, PhasePoint

# uniforms consumed per Fock sample: radius, phase, |delta|, arg delta
FOCK_DRAWS = 4


def sample_coherent(n: float, size: int | None = None):
    """Amplitudes of a coherent state with mean number ``n`` and phase 0.

    Deterministic; no random numbers are consumed.
    """
    if n < 0:
        raise ValueError("coherent-state mean number must be >= 0")
    amp = np.sqrt(float(n)) + 0j
    if size is None:
        return amp, amp
    full = np.full(size, amp)
    return full, full.copy()


def sample_fock(n: int, rng: np.random.Generator, size: int | None = None):
    """Draw (alpha, alpha_plus) representing the Fock state |n>.

    Both the Gamma radius and the Gaussian smear are produced by exact
    inversion from uniforms, so every sample consumes exactly
    :data:`FOCK_DRAWS` uniforms whatever values come out.
    """
    if n < 0 or int(n) != n:
        raise ValueError("Fock atom number must be a non-negative integer")
    shape = () if size is None else (size,)
    u = rng.random((FOCK_DRAWS,) + shape)
    # u in [0, 1): never hits the infinite quantile at 1
    radius2 = special.gammaincinv(int(n) + 1.0, u[0])
    mu = np.sqrt(radius2) * np.exp(2j * np.pi * u[1])
    # |delta|^2 ~ Exp(1) with uniform phase: a circular Gaussian, E|delta|^2 = 1
    delta = np.sqrt(-np.log1p(-u[2])) * np.exp(2j * np.pi * u[3])
    alpha = mu + delta
    alpha_plus = np.conj(mu - delta)
    if size is None:
        return complex(alpha), complex(alpha_plus)
    return alpha, alpha_plus


def sample_chain(config: ChainConfig, rng: np.random.Generator | None, size: int | None = None) -> PhasePoint:
    """Initial phase-space point(s) for a validated configuration.

    With ``size`` given, the returned arrays have shape ``(wells, size)``.
    Wells 2..M are vacuum.
    """
    shape = (config.wells,) if size is None else (config.wells, size)
    alpha = np.zeros(shape, dtype=complex)
    alpha_plus = np.zeros(shape, dtype=complex)
    if config.initial_state is InitialState.FOCK:
        if rng is None:
            raise ValueError("Fock sampling needs a random generator")
        a1, a1p = sample_fock(config.atoms, rng, size)
    else:
        a1, a1p = sample_coherent(config.atoms, size)
    alpha[0] = a1
    alpha_plus[0] = a1p
    diverged = False if size is None else np.zeros(size, dtype=bool)
    return PhasePoint(alpha, alpha_plus, diverged)
