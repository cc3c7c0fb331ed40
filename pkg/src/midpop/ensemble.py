"""Population states and their moment machinery.

Two representations of a finite nonnegative measure on the trait line:

* :class:`ParticleEnsemble` -- weighted atoms, the stochastic state.
  Weights stay normalized to 1; the true mass rides along as ``total_mass``
  so floating point conditioning is independent of population growth.
* :class:`GridDensity` -- nonnegative values on a fixed uniform grid, the
  deterministic state.  Quadrature is h * sum(values), the trapezoid rule
  for supports that vanish at the grid boundary (every solver keeps them
  there), which pairs exactly with the discrete reproduction operator.

Both support raw/centered moments, characteristic function evaluation and
standardization (shift to mean 0, scale to variance 1).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .errors import ConcentrationError, DegenerateStateError, DomainError


@dataclass
class ParticleEnsemble:
    """Weighted atoms (positions, weights) with total mass tracked separately."""

    positions: np.ndarray
    weights: np.ndarray
    total_mass: float = 1.0
    rng_seed: int = 0

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float)
        self.weights = np.asarray(self.weights, dtype=float)
        if self.positions.ndim != 1 or self.positions.shape != self.weights.shape:
            raise DomainError("positions and weights must be 1-d arrays of equal length")
        if self.positions.size == 0:
            raise DegenerateStateError("empty ensemble")
        if not np.all(np.isfinite(self.positions)):
            raise DomainError("positions must be finite")
        if np.any(self.weights < 0):
            raise DomainError("weights must be nonnegative")
        if self.total_mass <= 0:
            raise DegenerateStateError("total mass must be positive")
        self.renormalize()

    def renormalize(self):
        w = self.weights.sum()
        if w <= 0:
            raise DegenerateStateError("weights sum to zero")
        self.weights = self.weights / w

    @property
    def size(self) -> int:
        return self.positions.size


@dataclass
class GridDensity:
    """Density values f(x_j) on the uniform grid x_j = x_min + j*h."""

    x_min: float
    h: float
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 1 or self.values.size < 2:
            raise DomainError("values must be a 1-d array with at least two nodes")
        if self.h <= 0:
            raise DomainError("grid spacing must be positive")
        if np.any(self.values < 0):
            raise DomainError("density values must be nonnegative")

    @property
    def nodes(self) -> np.ndarray:
        return self.x_min + self.h * np.arange(self.values.size)

    @property
    def mass(self) -> float:
        return float(self.h * self.values.sum())

    @property
    def size(self) -> int:
        return self.values.size


State = Union[ParticleEnsemble, GridDensity]


@dataclass
class MomentTrack:
    """One recorded row of a trajectory.

    ``M`` holds centered moments indexed by order (M[0] = 1, M[1] = 0),
    ``S`` the selection moments S_0..S_K, ``extras`` named diagnostics.
    Serializes to CSV columns t, rho, xbar, M2..MK, S0..SK, then extras.
    """

    t: float
    rho: float
    xbar: float
    M: np.ndarray
    S: np.ndarray | None = None
    extras: dict[str, float] = field(default_factory=dict)

    @property
    def order(self) -> int:
        return self.M.size - 1


def _support_and_masses(state: State) -> tuple[np.ndarray, np.ndarray, float]:
    """Common view: atom locations, their masses (summing to total), total mass."""
    if isinstance(state, ParticleEnsemble):
        return state.positions, state.weights * state.total_mass, state.total_mass
    mass = state.mass
    if mass <= 0:
        raise DegenerateStateError("grid density carries no mass")
    return state.nodes, state.h * state.values, mass


def raw_moments(state: State, k_max: int) -> np.ndarray:
    """Raw moments mu_0..mu_{k_max} of the measure (not normalized)."""
    if k_max < 0:
        raise DomainError("k_max must be nonnegative")
    x, masses, _ = _support_and_masses(state)
    out = np.empty(k_max + 1)
    acc = masses.copy()
    out[0] = acc.sum()
    for k in range(1, k_max + 1):
        acc *= x
        out[k] = acc.sum()
    return out


def centered_stats(state: State, k_max: int) -> tuple[float, float, np.ndarray]:
    """Mass, mean and centered moments M_0..M_{k_max} of the normalized law.

    M_0 = 1 and M_1 = 0 are enforced exactly rather than recomputed.
    """
    x, masses, mass = _support_and_masses(state)
    if mass <= 0:
        raise DegenerateStateError("state has nonpositive mass")
    w = masses / mass
    xbar = float(w @ x)
    out = np.zeros(max(k_max + 1, 2))
    out[0] = 1.0
    if k_max >= 2:
        d = x - xbar
        acc = w * d
        for k in range(2, k_max + 1):
            acc *= d
            out[k] = acc.sum()
    return mass, xbar, out[: k_max + 1] if k_max >= 1 else out[:1]


def char_fn(state: State, xi) -> np.ndarray | complex:
    """Characteristic function of the normalized law at xi (scalar or array).

    Returns sum_j w_j exp(-i xi x_j) for atoms, the matching quadrature for
    grids.  Equals 1 at xi = 0 and has modulus at most 1.
    """
    x, masses, mass = _support_and_masses(state)
    w = masses / mass
    xi_arr = np.atleast_1d(np.asarray(xi, dtype=float))
    out = np.exp(-1j * np.outer(xi_arr, x)) @ w
    if np.isscalar(xi) or np.asarray(xi).ndim == 0:
        return complex(out[0])
    return out


def standardize(state: State) -> tuple[State, float, float]:
    """Map the state to mass 1, mean 0, variance 1.

    Atoms move to (x - xbar)/sqrt(M2); grid coordinates are rescaled with the
    density multiplied by sqrt(M2).  Returns (state', xbar, M2).
    """
    mass, xbar, m = centered_stats(state, 2)
    m2 = float(m[2])
    if m2 <= 0:
        raise ConcentrationError("variance is zero: the profile is a point mass")
    s = np.sqrt(m2)
    if isinstance(state, ParticleEnsemble):
        new = ParticleEnsemble(
            positions=(state.positions - xbar) / s,
            weights=state.weights.copy(),
            total_mass=1.0,
            rng_seed=state.rng_seed,
        )
    else:
        new = GridDensity(
            x_min=(state.x_min - xbar) / s,
            h=state.h / s,
            values=state.values * (s / mass),
        )
    return new, xbar, m2
