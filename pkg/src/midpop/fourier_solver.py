"""Spectral evolution of the standardized profile's characteristic function.

With constant selection the transform gamma_hat of the centered, rescaled
profile obeys

    d/dt gamma_hat(xi) = gamma_hat(xi/2)^2 - gamma_hat(xi)
                         + (xi/4) d/dxi gamma_hat(xi),

whose stationary point is the heavy-tailed limit law (1 + |xi|) e^{-|xi|}.
The transport part generates pure dilations, which commute with the
quadratic gain term, so operator splitting carries no commutator error:
one step is a semi-Lagrangian dilation read (exact on characteristics)
followed by an explicit reaction update.

Two structural corrections keep the long-horizon dynamics on the
standardized manifold:

* The dilation factor is (1 - dt/2)^(-1/2) rather than exp(dt/4): the two
  agree to first order, and the modified factor makes the step's variance
  multiplier exactly one (the read scales the curvature at 0 by a^2, the
  reaction update by 1 - dt/2).  Variance is a neutral direction of the
  flow, so a small measured correction is folded into the read as well;
  without it, interpolation round-off random-walks the variance and
  eventually poisons the Fourier metric at small xi.

* Heavy tails build up along the flow, which in transform space means
  structure (a |xi|^3 kink with diverging higher coefficients) travelling
  to ever smaller |xi|.  A fixed grid cannot follow it below one spacing,
  and the associated modes, stable in the continuum because they exit
  inward, grow without bound at the resolution floor.  Each step therefore
  projects the first few nodes onto the admissible local shape
  1 - v xi^2/2 + c3 xi^3 (coefficients fitted just outside the projection
  zone), absorbing the under-resolved structure the way the continuum
  does.  The erased content carries O(h^(3/2)) weight in the s in (2, 3)
  Fourier metrics, which sets the scheme's resolution floor.

States sample xi >= 0 only; negative xi follows by conjugate symmetry.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError, DomainError

_FIT_NODES = 16
# local-shape fit window (node indices) and projection zone for the step
_SHAPE_LO, _SHAPE_HI = 2, 8
_PROJECT_BELOW = 6
_VARIANCE_GAIN = 0.5


@dataclass
class SpectralState:
    """Samples of the rescaled characteristic function on a uniform xi-grid."""

    xi_max: float
    values: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.ndim != 1 or self.values.size < 2 * _FIT_NODES:
            raise DomainError(f"need a 1-d array with at least {2 * _FIT_NODES} samples")
        if self.values.size % 2 == 0:
            raise DomainError("the node count n_xi must be even (half-grid reads)")
        if self.xi_max <= 0:
            raise DomainError("xi_max must be positive")

    @property
    def n_xi(self) -> int:
        return self.values.size - 1

    @property
    def h_xi(self) -> float:
        return self.xi_max / self.n_xi

    @property
    def xi(self) -> np.ndarray:
        return np.linspace(0.0, self.xi_max, self.values.size)

    @staticmethod
    def from_cf(cf: Callable, xi_max: float = 64.0, n_xi: int = 4096) -> "SpectralState":
        xi = np.linspace(0.0, xi_max, n_xi + 1)
        values = np.asarray(cf(xi), dtype=complex)
        state = SpectralState(xi_max, values)
        state.values[0] = 1.0
        return state

    def variance(self) -> float:
        """Second moment readout, -(second central difference at 0)."""
        h = self.h_xi
        # gamma_hat(-h) = conj(gamma_hat(h))
        second = (self.values[1] + np.conj(self.values[1]) - 2.0 * self.values[0]) / h**2
        return float(-second.real)

    def variance_fitted(self) -> float:
        """Variance via a local fit robust to the |xi|^3 kink at the origin.

        Fits 1 - (v/2) xi^2 + c3 xi^3 + c4 xi^4 + c5 xi^5 on the first
        nodes; a plain finite difference carries an O(h) bias from the
        kink that heavy-tailed laws put at 0.
        """
        return float(self._fit_row() @ (self.values[1 : _FIT_NODES + 1].real - 1.0))

    def _fit_row(self) -> np.ndarray:
        cached = getattr(self, "_fit_row_cache", None)
        if cached is None or cached.shape[0] != _FIT_NODES:
            xi = self.h_xi * np.arange(1, _FIT_NODES + 1)
            basis = np.stack([-(xi**2) / 2.0, xi**3, xi**4, xi**5], axis=1)
            cached = np.linalg.pinv(basis)[0]
            self._fit_row_cache = cached
        return cached

    def cf(self, xi) -> np.ndarray | complex:
        """Evaluate the stored transform at arbitrary xi.

        Cubic interpolation on the grid, zero beyond xi_max, conjugate
        symmetry for negative arguments.  Below 4 grid spacings a local
        model 1 - xi^2/2 + c3*xi^3 + c4*xi^4 (c3, c4 fitted on the first
        nodes) replaces interpolation: the transform of a heavy-tailed law
        has a |xi|^3 kink at 0 that polynomial interpolation across the
        origin would turn into spurious low-xi error, which is exactly
        where Fourier-metric integrands are most sensitive.
        """
        arr = np.atleast_1d(np.asarray(xi, dtype=float))
        a = np.abs(arr)
        out = np.zeros(arr.shape, dtype=complex)
        h = self.h_xi
        switch = 4.0 * h
        near = a < switch
        far = ~near
        if near.any():
            c3, c4 = self._small_xi_coeffs()
            an = a[near]
            out[near] = 1.0 - an**2 / 2.0 + c3 * an**3 + c4 * an**4
        if far.any():
            out[far] = _cubic_interp(self.values, a[far] / h)
        out = np.where(arr < 0, np.conj(out), out)
        if np.isscalar(xi) or np.asarray(xi).ndim == 0:
            return complex(out[0])
        return out

    def _small_xi_coeffs(self) -> tuple[complex, complex]:
        h = self.h_xi
        j = np.arange(1, 9)
        xi = j * h
        y = self.values[1:9] - 1.0 + xi**2 / 2.0
        basis = np.stack([xi**3, xi**4], axis=1)
        coef, *_ = np.linalg.lstsq(basis, y, rcond=None)
        return complex(coef[0]), complex(coef[1])


def _cubic_interp(vals: np.ndarray, p: np.ndarray) -> np.ndarray:
    """4-point Lagrange interpolation at fractional index positions p.

    Positions outside [0, n-1] return 0 (zero fill beyond the grid).
    """
    n = vals.size
    out = np.zeros(p.shape, dtype=vals.dtype)
    inside = (p >= 0.0) & (p <= n - 1.0)
    pi = p[inside]
    k = np.clip(np.floor(pi).astype(int) - 1, 0, n - 4)
    u = pi - k
    w0 = -(u - 1.0) * (u - 2.0) * (u - 3.0) / 6.0
    w1 = u * (u - 2.0) * (u - 3.0) / 2.0
    w2 = -u * (u - 1.0) * (u - 3.0) / 2.0
    w3 = u * (u - 1.0) * (u - 2.0) / 6.0
    out[inside] = w0 * vals[k] + w1 * vals[k + 1] + w2 * vals[k + 2] + w3 * vals[k + 3]
    return out


def _shape_rows(h: float) -> np.ndarray:
    xi = h * np.arange(_SHAPE_LO, _SHAPE_HI + 1)
    basis = np.stack([-(xi**2) / 2.0, xi**3], axis=1)
    return np.linalg.pinv(basis)


def step(state: SpectralState, dt: float) -> SpectralState:
    """One splitting step of the constant-selection spectral flow."""
    if dt <= 0 or dt > 0.1:
        raise ConfigError("spectral step needs 0 < dt <= 0.1")
    n = state.n_xi
    h = state.h_xi
    idx = np.arange(n + 1, dtype=float)
    rows = getattr(state, "_shape_rows_cache", None)
    if rows is None:
        rows = _shape_rows(h)
    window = slice(_SHAPE_LO, _SHAPE_HI + 1)

    # dilation read, exact on characteristics; the extra factors keep the
    # step's variance multiplier at exactly one and steer the measured
    # variance back to 1
    v_est = max(float(rows[0] @ (state.values[window].real - 1.0)), 0.1)
    factor = 1.0 / np.sqrt((1.0 - 0.5 * dt) * v_est**_VARIANCE_GAIN)
    advected = _cubic_interp(state.values, idx * factor)

    # explicit reaction: gain at xi/2 (even nodes exact, odd interpolated)
    half = _half_grid_values(advected)
    values = advected + dt * (half * half - advected)
    values[0] = 1.0

    # subgrid closure: project the under-resolved near-origin sector onto
    # the admissible local shape, with a linear blend up to the zone edge
    v2, c3 = rows @ (values[window].real - 1.0)
    c3_imag = _imag_cubic_coeff(values[window].imag, h)
    j = np.arange(1, _PROJECT_BELOW)
    xi_j = j * h
    model = 1.0 - v2 * xi_j**2 / 2.0 + (c3 + 1j * c3_imag) * xi_j**3
    w = 1.0 - j / _PROJECT_BELOW
    values[1:_PROJECT_BELOW] = w * model + (1.0 - w) * values[1:_PROJECT_BELOW]

    new = SpectralState(state.xi_max, values, t=state.t + dt)
    new._shape_rows_cache = rows
    new._fit_row_cache = getattr(state, "_fit_row_cache", None)
    return new


def _imag_cubic_coeff(y_imag: np.ndarray, h: float) -> float:
    # standardized laws have zero mean, so the imaginary part starts at
    # cubic order; a one-coefficient fit suffices for the projection
    xi = h * np.arange(_SHAPE_LO, _SHAPE_HI + 1)
    return float((xi**3 @ y_imag) / np.sum(xi**6))


def _half_grid_values(vals: np.ndarray) -> np.ndarray:
    n = vals.size - 1
    out = np.empty_like(vals)
    out[0 :: 2] = vals[0 : n // 2 + 1]
    odd = np.arange(1, n + 1, 2, dtype=float)
    out[1::2] = _cubic_interp(vals, odd / 2.0)
    return out


def residual(state: SpectralState, derivative: Optional[np.ndarray] = None) -> float:
    """Sup-norm stationarity defect of the spectral flow at this state.

    Evaluates |gamma_hat(xi/2)^2 - gamma_hat(xi) + (xi/4) gamma_hat'(xi)|
    over the even-index nodes, where the half argument is itself a node so
    no interpolation enters.  The derivative defaults to central
    differences (with the conjugate-symmetric ghost value at the origin
    and a one-sided second-order stencil at the boundary); pass analytic
    samples to remove the finite-difference error entirely.
    """
    v = state.values
    xi = state.xi
    h = state.h_xi
    if derivative is None:
        d = np.empty_like(v)
        d[1:-1] = (v[2:] - v[:-2]) / (2.0 * h)
        d[0] = (v[1] - np.conj(v[1])) / (2.0 * h)
        d[-1] = (3.0 * v[-1] - 4.0 * v[-2] + v[-3]) / (2.0 * h)
    else:
        d = np.asarray(derivative, dtype=complex)
        if d.shape != v.shape:
            raise DomainError("derivative samples must match the state grid")
    n = state.n_xi
    even = np.arange(0, n + 1, 2)
    half = v[even // 2]
    defect = half * half - v[even] + 0.25 * xi[even] * d[even]
    return float(np.max(np.abs(defect)))
