"""Positive-P Ito equations for the M-well chain and the ensemble runner.

For every well j, with neighbours j-1 and j+1 where they exist,

    d alpha_j   = [-2i chi alpha_j^+ alpha_j^2  - iJ (alpha_{j-1}   + alpha_{j+1})]   dt
                  + sqrt(-2i chi alpha_j^2)   dW_{2j}
    d alpha_j^+ = [ 2i chi alpha_j^+2 alpha_j   + iJ (alpha_{j-1}^+ + alpha_{j+1}^+)] dt
                  + sqrt( 2i chi alpha_j^+2)  dW_{2j+1}

with independent real Wiener increments. Square roots take the principal
branch; flipping the sign of any noise amplitude changes nothing
observable because the increments are symmetric.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .estimators import DEFAULT_BATCHES, CorrelationSeries, MomentRecord, finalize
from .model import ChainConfig, PhasePoint, validate
from .sampler import sample_chain

log = logging.getLogger(__name__)

SCHEMES = {"em": _kernels.EM, "midpoint": _kernels.MIDPOINT}
# Euler-Maruyama inflates the norm of the hopping dynamics by (1 + (J dt)^2)
# per step, about 1% over Jt = 10 at dt = 1e-3/J; the midpoint scheme
# keeps it to O(dt^4) per step
DEFAULT_SCHEME = "midpoint"
MIDPOINT_ITERS = 3
# trajectories per RNG stream; fixed so that trajectory g is the same
# path whatever n_traj or the worker count
BLOCK_SIZE = 1000
MAX_DIVERGED_FRACTION = 1e-3


class DivergenceError(RuntimeError):
    """Too many trajectories tripped the divergence guard."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


def _hop(x: np.ndarray) -> np.ndarray:
    out = np.zeros_like(x)
    out[1:] += x[:-1]
    out[:-1] += x[1:]
    return out


def drift(state: PhasePoint, config: ChainConfig):
    """Deterministic increments per unit time, ``(d alpha, d alpha_plus)``."""
    a, ap = state.alpha, state.alpha_plus
    chi, J = config.nonlinearity, config.coupling
    da = -2j * chi * ap * a * a - 1j * J * _hop(a)
    dap = 2j * chi * ap * ap * a + 1j * J * _hop(ap)
    return da, dap


def noise_amplitudes(state: PhasePoint, config: ChainConfig):
    """Diagonal noise amplitudes ``(b_alpha, b_alpha_plus)``."""
    a, ap = state.alpha, state.alpha_plus
    chi = config.nonlinearity
    return np.sqrt(-2j * chi * a * a), np.sqrt(2j * chi * ap * ap)


def step(
    state: PhasePoint,
    config: ChainConfig,
    dt: float,
    rng: np.random.Generator | None = None,
    scheme: str = DEFAULT_SCHEME,
    eta: np.ndarray | None = None,
    iters: int = MIDPOINT_ITERS,
) -> PhasePoint:
    """One fixed step of the Ito equations.

    Exactly ``2 * wells`` standard normals (per trajectory) are drawn from
    ``rng`` unless ``eta`` supplies them; rows alternate alpha_1,
    alpha_1^+, alpha_2, ... The midpoint scheme iterates the drift to a
    fixed point at the half step while keeping the noise amplitude at its
    start-of-step value, which leaves the Ito limit unchanged.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}")
    with np.errstate(invalid="ignore", over="ignore"):
        return _step(state, config, dt, rng, scheme, eta, iters)


def _step(state, config, dt, rng, scheme, eta, iters):
    a0, ap0 = state.alpha, state.alpha_plus
    if eta is None:
        eta = rng.standard_normal((2 * a0.shape[0],) + a0.shape[1:])
    ba, bap = noise_amplitudes(state, config)
    sq = math.sqrt(dt)
    na = ba * eta[0::2] * sq
    nap = bap * eta[1::2] * sq
    if scheme == "em":
        da, dap = drift(state, config)
        a = a0 + da * dt + na
        ap = ap0 + dap * dt + nap
    else:
        mid = state
        for _ in range(iters):
            da, dap = drift(mid, config)
            mid = PhasePoint(a0 + 0.5 * (da * dt + na), ap0 + 0.5 * (dap * dt + nap))
        a = 2.0 * mid.alpha - a0
        ap = 2.0 * mid.alpha_plus - ap0
    finite = np.isfinite(a).all(axis=0) & np.isfinite(ap).all(axis=0)
    diverged = np.logical_or(state.diverged, ~finite)
    if np.ndim(diverged) == 0:
        diverged = bool(diverged)
    return PhasePoint(a, ap, diverged)


@dataclass
class EnsembleResult:
    config: ChainConfig
    scheme: str
    times: np.ndarray
    moments: MomentRecord
    n_diverged: int
    n_traj_effective: int

    @property
    def jt(self) -> np.ndarray:
        J = self.config.coupling
        return self.times * J if J != 0 else self.times

    def series(self) -> CorrelationSeries:
        return finalize(self.moments, self.jt)


def block_streams(seed: int, block: int):
    """Independent generators (initial state, noise) for one trajectory block."""
    init = np.random.SeedSequence(seed, spawn_key=(block, 0))
    noise = np.random.SeedSequence(seed, spawn_key=(block, 1))
    return np.random.Generator(np.random.SFC64(init)), np.random.Generator(np.random.SFC64(noise))


def _run_block(args):
    config, scheme, block, n_batches = args
    start = block * BLOCK_SIZE
    size = min(BLOCK_SIZE, config.n_traj - start)
    init_rng, noise_rng = block_streams(config.seed, block)
    # always draw a full block so trajectory g never depends on n_traj
    state = sample_chain(config, init_rng, size=BLOCK_SIZE)
    alpha = np.ascontiguousarray(state.alpha[:, :size])
    alpha_plus = np.ascontiguousarray(state.alpha_plus[:, :size])
    alive = np.ones(size, dtype=bool)
    traj_index = np.arange(start, start + size)

    record = MomentRecord(config.wells, config.pairs(), config.n_samples, n_batches)
    record.accumulate(0, alpha, alpha_plus, traj_index, alive)
    m = config.wells
    noisy = config.nonlinearity != 0
    chunk = config.sample_every
    empty = np.empty((0, 2 * m, size))
    code = SCHEMES[scheme]
    for k in range(1, config.n_samples):
        if noisy:
            noise = noise_rng.standard_normal((chunk, 2 * m, BLOCK_SIZE))[:, :, :size]
            noise = np.ascontiguousarray(noise)
        else:
            noise = empty
        _kernels.advance_block(
            alpha,
            alpha_plus,
            alive,
            config.coupling,
            config.nonlinearity,
            config.dt,
            noise,
            chunk,
            config.divergence_threshold,
            code,
            MIDPOINT_ITERS,
        )
        record.accumulate(k, alpha, alpha_plus, traj_index, alive)
    return record, int(size - alive.sum())


def run_ensemble(config: ChainConfig, scheme: str = DEFAULT_SCHEME, workers: int = 1, n_batches: int = DEFAULT_BATCHES,
                 max_diverged_fraction: float = MAX_DIVERGED_FRACTION) -> EnsembleResult:
    """Integrate ``config.n_traj`` trajectories and accumulate their moments.

    Trajectories are processed in fixed blocks of :data:`BLOCK_SIZE`, each
    with its own RNG streams derived from ``(seed, block)``; block records
    are merged in block order, so the result is bit-identical for any
    ``workers``.
    """
    config = validate(config)
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; expected one of {sorted(SCHEMES)}")
    n_blocks = -(-config.n_traj // BLOCK_SIZE)
    jobs = [(config, scheme, b, n_batches) for b in range(n_blocks)]
    record = MomentRecord(config.wells, config.pairs(), config.n_samples, n_batches)
    n_diverged = 0
    workers = max(1, int(workers or 1))
    if workers == 1 or n_blocks == 1:
        results = map(_run_block, jobs)
        for block_record, bad in results:
            record = record.merge(block_record)
            n_diverged += bad
    else:
        with ProcessPoolExecutor(max_workers=min(workers, n_blocks)) as pool:
            for block_record, bad in pool.map(_run_block, jobs):
                record = record.merge(block_record)
                n_diverged += bad
    result = EnsembleResult(
        config=config,
        scheme=scheme,
        times=config.sample_times(),
        moments=record,
        n_diverged=n_diverged,
        n_traj_effective=config.n_traj - n_diverged,
    )
    if n_diverged:
        log.warning("%d of %d trajectories diverged", n_diverged, config.n_traj)
    if n_diverged > max_diverged_fraction * config.n_traj:
        raise DivergenceError(
            f"{n_diverged} of {config.n_traj} trajectories diverged "
            f"(limit {max_diverged_fraction:g}); the divergence regime has been reached",
            result,
        )
    return result


def default_workers() -> int:
    return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1)
