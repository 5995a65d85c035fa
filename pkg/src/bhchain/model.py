"""Chain configuration and the doubled phase-space state."""

from __future__ import annotations

import dataclasses
import enum
import math
from dataclasses import dataclass, field

import numpy as np


class ConfigError(ValueError):
    """Raised for an invalid or unparseable chain configuration."""


class InitialState(str, enum.Enum):
    FOCK = "fock"
    COHERENT = "coherent"

    @classmethod
    def parse(cls, value) -> "InitialState":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ConfigError(
                f"initial_state must be one of {[s.value for s in cls]}, got {value!r}"
            ) from None


SEED_MAX = 2**64 - 1
# steps are coarsened until at most this many samples remain
TARGET_SAMPLES = 500


@dataclass(frozen=True)
class ChainConfig:
    """Physical and numerical parameters of one chain simulation.

    Only well 1 is populated at t=0; every other well starts in vacuum.
    ``dt``, ``sample_every`` and ``divergence_threshold`` may be left as
    ``None`` and are filled in by :func:`validate`.
    """

    wells: int = 2
    coupling: float = 1.0
    nonlinearity: float = 0.0
    atoms: float = 200
    initial_state: InitialState = InitialState.FOCK
    t_max: float = 10.0
    dt: float | None = None
    sample_every: int | None = None
    n_traj: int = 1000
    seed: int = 0
    divergence_threshold: float | None = None
    all_pairs: bool = False

    @property
    def n_samples(self) -> int:
        """Number of points in the sample grid (including t=0)."""
        step = self.sample_every * self.dt
        return _grid_intervals(self.t_max, step) + 1

    @property
    def n_steps(self) -> int:
        return (self.n_samples - 1) * self.sample_every

    def sample_times(self) -> np.ndarray:
        return np.arange(self.n_samples) * (self.sample_every * self.dt)

    def pairs(self) -> list[tuple[int, int]]:
        """Tracked well pairs, 1-based, in output order."""
        return tracked_pairs(self.wells, self.all_pairs)

    def replace(self, **changes) -> "ChainConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if value is None:
                continue
            if isinstance(value, InitialState):
                value = value.value
            out[f.name] = value
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ChainConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**data)


FIELD_NAMES = tuple(f.name for f in dataclasses.fields(ChainConfig))


def tracked_pairs(wells: int, all_pairs: bool = False) -> list[tuple[int, int]]:
    if all_pairs:
        return [(i, j) for i in range(1, wells + 1) for j in range(i + 1, wells + 1)]
    pairs = [(1, j) for j in range(2, wells + 1)]
    if wells >= 3:
        pairs.append((2, 3))
    return pairs


def _grid_intervals(t_max: float, step: float) -> int:
    # tolerate t_max being an inexact multiple of step, e.g. 10 / 0.02
    ratio = t_max / step
    n = math.floor(ratio + 1e-9 * max(1.0, ratio))
    return max(n, 0)


def _as_int(name: str, value) -> int:
    if isinstance(value, bool):
        raise ConfigError(f"{name} must be an integer, got {value!r}")
    if isinstance(value, (int, np.integer)):
        return int(value)
    try:
        fvalue = float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be an integer, got {value!r}") from None
    if not fvalue.is_integer():
        raise ConfigError(f"{name} must be an integer, got {value!r}")
    return int(fvalue)


def _as_float(name: str, value) -> float:
    if isinstance(value, bool):
        raise ConfigError(f"{name} must be a real number, got {value!r}")
    try:
        return float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be a real number, got {value!r}") from None


def validate(config: ChainConfig) -> ChainConfig:
    """Check a configuration and return its normalized form.

    Normalization coerces numeric types, fixes ``atoms`` to an ``int`` for
    Fock states, and fills in defaults: ``dt = 1e-3/|J|``, a
    ``sample_every`` giving at least 500 samples, and a divergence
    threshold of ``1e6 * max(N, 1)``. The function is idempotent.
    """
    wells = _as_int("wells", config.wells)
    if wells < 2:
        raise ConfigError("wells must be >= 2")
    coupling = _as_float("coupling", config.coupling)
    nonlinearity = _as_float("nonlinearity", config.nonlinearity)
    if not (math.isfinite(coupling) and math.isfinite(nonlinearity)):
        raise ConfigError("coupling and nonlinearity must be finite")
    if nonlinearity < 0:
        raise ConfigError("nonlinearity must be >= 0")

    initial_state = InitialState.parse(config.initial_state)
    if initial_state is InitialState.FOCK:
        try:
            atoms = _as_int("atoms", config.atoms)
        except ConfigError:
            raise ConfigError(
                f"Fock initial state needs an integer atom number, got {config.atoms!r}"
            ) from None
    else:
        atoms = _as_float("atoms", config.atoms)
        if not math.isfinite(atoms):
            raise ConfigError("atoms must be finite")
    if atoms < 0:
        raise ConfigError("atoms must be >= 0")

    t_max = _as_float("t_max", config.t_max)
    if not (t_max >= 0 and math.isfinite(t_max)):
        raise ConfigError("t_max must be finite and >= 0")

    if config.dt is None:
        dt = 1e-3 / abs(coupling) if coupling != 0 else 1e-3
    else:
        dt = _as_float("dt", config.dt)
    if not (dt > 0 and math.isfinite(dt)):
        raise ConfigError("dt must be > 0")

    if config.sample_every is None:
        steps = _grid_intervals(t_max, dt)
        sample_every = max(1, steps // TARGET_SAMPLES)
    else:
        sample_every = _as_int("sample_every", config.sample_every)
    if sample_every < 1:
        raise ConfigError("sample_every must be >= 1")

    n_traj = _as_int("n_traj", config.n_traj)
    if n_traj < 1:
        raise ConfigError("n_traj must be >= 1")

    seed = _as_int("seed", config.seed)
    if not 0 <= seed <= SEED_MAX:
        raise ConfigError("seed must be a 64-bit unsigned integer")

    if config.divergence_threshold is None:
        threshold = 1e6 * max(float(atoms), 1.0)
    else:
        threshold = _as_float("divergence_threshold", config.divergence_threshold)
    if not threshold > 0:
        raise ConfigError("divergence_threshold must be > 0")

    if not isinstance(config.all_pairs, (bool, np.bool_)):
        raise ConfigError("all_pairs must be a boolean")

    return ChainConfig(
        wells=wells,
        coupling=coupling,
        nonlinearity=nonlinearity,
        atoms=atoms,
        initial_state=initial_state,
        t_max=t_max,
        dt=dt,
        sample_every=sample_every,
        n_traj=n_traj,
        seed=seed,
        divergence_threshold=threshold,
        all_pairs=bool(config.all_pairs),
    )


@dataclass
class PhasePoint:
    """A positive-P phase-space point for an M-well chain.

    ``alpha`` and ``alpha_plus`` are independent complex vectors; they are
    complex conjugates only on average. A leading axis of length M may be
    followed by a trajectory axis, so the same type holds a whole block.
    """

    alpha: np.ndarray
    alpha_plus: np.ndarray
    diverged: np.ndarray | bool = field(default=False)

    def __post_init__(self):
        self.alpha = np.asarray(self.alpha, dtype=complex)
        self.alpha_plus = np.asarray(self.alpha_plus, dtype=complex)
        if self.alpha.shape != self.alpha_plus.shape:
            raise ValueError("alpha and alpha_plus must have the same shape")

    @property
    def wells(self) -> int:
        return self.alpha.shape[0]

    def copy(self) -> "PhasePoint":
        return PhasePoint(self.alpha.copy(), self.alpha_plus.copy(), np.copy(self.diverged))
