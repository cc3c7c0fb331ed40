"""Closed moment hierarchy and certified decay envelopes.

For polynomial selection the centered moments of the normalized profile
satisfy a closed ODE system once the two moments above the truncation
order are supplied by a closure rule.  The same module houses the
closed-form envelope functions used to certify simulated trajectories,
the spectral contraction rate, and the bounds on the selection remainder
of the rescaled Fourier flow.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import comb
from typing import Callable

import numpy as np

from .ensemble import GridDensity, MomentTrack, standardize
from .errors import (
    ArityError,
    ClosureBreakdownError,
    ConfigError,
    DomainError,
    HypothesisViolationError,
    UnsupportedRateError,
)
from .selection import SelectionRate, selection_moments

ZERO = "zero"
GAUSSIAN = "gaussian"


def _double_factorial(n: int) -> float:
    out = 1.0
    while n > 1:
        out *= n
        n -= 2
    return out


@dataclass
class MomentODEState:
    """Mean trait plus centered moments M_2..M_K (M_0 = 1, M_1 = 0 implicit)."""

    xbar: float
    M: np.ndarray            # indexed by order, length K + 1
    t: float = 0.0
    closure: str = GAUSSIAN
    rho: float = 1.0

    def __post_init__(self):
        self.M = np.asarray(self.M, dtype=float)
        k = self.M.size - 1
        if k < 4 or k % 2 != 0:
            raise ConfigError("moment order K must be an even integer >= 4")
        if self.closure not in (ZERO, GAUSSIAN):
            raise ConfigError(f"unknown closure {self.closure!r}")
        self.M[0] = 1.0
        self.M[1] = 0.0

    @property
    def order(self) -> int:
        return self.M.size - 1


def _closed_moments(m: np.ndarray, closure: str) -> np.ndarray:
    """Extend M_0..M_K by the closure values for M_{K+1}, M_{K+2}."""
    k = m.size - 1
    ext = np.empty(k + 3)
    ext[: k + 1] = m
    ext[k + 1] = 0.0
    if closure == ZERO:
        ext[k + 2] = 0.0
    else:
        ext[k + 2] = _double_factorial(k + 1) * max(m[2], 0.0) ** ((k + 2) / 2)
    return ext


def moment_rhs(state: MomentODEState, rate: SelectionRate):
    """Time derivatives (dxbar, dM_0..dM_K, dlog_rho) of the closed system.

    dxbar/dt   = -S_1
    dM_k/dt    = -(1 - 2^(1-k)) M_k
                 + 2^(-k) sum_{i=2}^{k-2} C(k,i) M_{k-i} M_i
                 - S_k + S_0 M_k + k S_1 M_{k-1}
    dlog_rho/dt = 1 - S_0 - m(xbar)
    """
    if not rate.is_polynomial:
        raise UnsupportedRateError("the closed hierarchy needs a polynomial rate")
    k_max = state.order
    ext = _closed_moments(state.M, state.closure)
    s = selection_moments(rate, state.xbar, ext)
    m = state.M
    dm = np.zeros(k_max + 1)
    for k in range(2, k_max + 1):
        mix = sum(comb(k, i) * m[k - i] * m[i] for i in range(2, k - 1))
        dm[k] = (
            -(1.0 - 2.0 ** (1 - k)) * m[k]
            + mix / 2.0**k
            - s[k]
            + s[0] * m[k]
            + k * s[1] * m[k - 1]
        )
    dxbar = -s[1]
    dlog_rho = 1.0 - s[0] - rate.evaluate(state.xbar)
    return dxbar, dm, dlog_rho


def integrate(
    state: MomentODEState,
    rate: SelectionRate,
    dt: float,
    t_end: float,
    record_every: int = 1,
) -> list[MomentTrack]:
    """Classical RK4 on the closed hierarchy, emitting MomentTrack rows.

    Aborts with ClosureBreakdownError if the integrated moments violate
    M_4 >= M_2^2 (beyond 1e-6 relative) or an even moment turns negative:
    past that point the closure is feeding back unusable values.
    """
    if dt <= 0:
        raise ConfigError("dt must be positive")
    n_steps = int(round(t_end / dt))
    k_max = state.order

    def pack(st):
        return st.xbar, st.M.copy(), np.log(st.rho)

    xbar, m, log_rho = pack(state)
    tracks = [_ode_track(state.t, xbar, m, log_rho, rate, state.closure)]
    for i in range(1, n_steps + 1):
        xbar, m, log_rho = _rk4_step(xbar, m, log_rho, rate, state.closure, dt)
        t = state.t + i * dt
        _check_moment_consistency(m, t)
        if i % record_every == 0 or i == n_steps:
            tracks.append(_ode_track(t, xbar, m, log_rho, rate, state.closure))
    state.xbar, state.M, state.rho, state.t = xbar, m, float(np.exp(log_rho)), state.t + n_steps * dt
    return tracks


def _rk4_step(xbar, m, log_rho, rate, closure, dt):
    def f(xb, mm):
        st = MomentODEState.__new__(MomentODEState)
        st.xbar, st.M, st.t, st.closure, st.rho = xb, mm, 0.0, closure, 1.0
        return moment_rhs(st, rate)

    k1 = f(xbar, m)
    k2 = f(xbar + 0.5 * dt * k1[0], m + 0.5 * dt * k1[1])
    k3 = f(xbar + 0.5 * dt * k2[0], m + 0.5 * dt * k2[1])
    k4 = f(xbar + dt * k3[0], m + dt * k3[1])
    xbar_new = xbar + dt / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
    m_new = m + dt / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
    log_rho_new = log_rho + dt / 6.0 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
    m_new[0], m_new[1] = 1.0, 0.0
    return xbar_new, m_new, log_rho_new


def _check_moment_consistency(m: np.ndarray, t: float):
    for k in range(2, m.size, 2):
        if m[k] < 0:
            raise ClosureBreakdownError(f"M_{k} = {m[k]} negative at t = {t:.6g}")
    if m.size > 4 and m[4] < m[2] ** 2 * (1.0 - 1e-6):
        raise ClosureBreakdownError(
            f"M_4 = {m[4]} fell below M_2^2 = {m[2]**2} at t = {t:.6g}"
        )


def _ode_track(t, xbar, m, log_rho, rate, closure) -> MomentTrack:
    s = selection_moments(rate, xbar, _closed_moments(m, closure))
    return MomentTrack(t=t, rho=float(np.exp(log_rho)), xbar=xbar, M=m.copy(), S=s)


# -- certified envelopes ------------------------------------------------------

DIRAC_STABILITY = "dirac_stability"
IMPROVED_RATE = "improved_rate"
M2_LOWER = "m2_lower"
DS_BOUND = "ds_bound"


@dataclass(frozen=True)
class EnvelopeSpec:
    """Parameters of one closed-form decay bound.

    kinds and parameters:
      dirac_stability: amplitude (initial moment), delta; optional margin
                       (the stability margin at the initial mean) to check
                       0 < delta < margin.
      improved_rate:   constant, rate.
      m2_lower:        constant, m2_0 (decays at the universal rate 1/2).
      ds_bound:        d0, L, c, s.
    """

    kind: str
    params: dict = field(default_factory=dict)


def envelope(spec: EnvelopeSpec) -> Callable[[np.ndarray], np.ndarray]:
    """Closed-form bound t -> value for one envelope spec.

    Raises HypothesisViolationError naming the condition when parameters
    sit outside the regime where the bound holds.
    """
    p = spec.params
    if spec.kind == DIRAC_STABILITY:
        delta, amp = float(p["delta"]), float(p["amplitude"])
        if delta <= 0:
            raise HypothesisViolationError(f"need delta > 0, got delta = {delta}")
        margin = p.get("margin")
        if margin is not None and delta >= margin:
            raise HypothesisViolationError(
                f"need delta < stability margin, got delta = {delta} >= {margin}"
            )
        return lambda t: amp * np.exp(-delta * np.asarray(t, dtype=float))
    if spec.kind == IMPROVED_RATE:
        rate, const = float(p["rate"]), float(p["constant"])
        if rate <= 0:
            raise HypothesisViolationError(f"need rate > 0, got {rate}")
        return lambda t: const * np.exp(-rate * np.asarray(t, dtype=float))
    if spec.kind == M2_LOWER:
        const, m2_0 = float(p["constant"]), float(p["m2_0"])
        if not 0 < const <= 1:
            raise HypothesisViolationError(f"need 0 < constant <= 1, got {const}")
        return lambda t: const * m2_0 * np.exp(-0.5 * np.asarray(t, dtype=float))
    if spec.kind == DS_BOUND:
        d0, big_l, c, s = (float(p["d0"]), float(p["L"]), float(p["c"]), float(p["s"]))
        lam = contraction_rate(s)
        if lam <= 0:
            raise HypothesisViolationError(f"contraction rate vanishes at s = {s}")
        if big_l < 0 or c <= 0:
            raise HypothesisViolationError("need L >= 0 and c > 0")
        if abs(c - lam) < 1e-12:
            return lambda t: (d0 + big_l * np.asarray(t, dtype=float)) * np.exp(
                -lam * np.asarray(t, dtype=float)
            )

        def bound(t, d0=d0, big_l=big_l, c=c, lam=lam):
            t = np.asarray(t, dtype=float)
            return d0 * np.exp(-lam * t) + big_l * (np.exp(-c * t) - np.exp(-lam * t)) / (
                lam - c
            )

        return bound
    raise ConfigError(f"unknown envelope kind {spec.kind!r}")


def contraction_rate(s: float) -> float:
    """Decay rate 1 - s/4 - 2^(1-s) of the constant-selection spectral flow.

    Positive on (2, 3) and zero at both endpoints.
    """
    if not 2.0 <= s <= 3.0:
        raise DomainError(f"the rate is only defined for s in [2, 3], got {s}")
    return 1.0 - s / 4.0 - 2.0 ** (1.0 - s)


def remainder_bound(order: int, alpha: float, beta: float, m2: float, m4: float,
                    xi: float, m6: float | None = None) -> float:
    """Closed-form bound on the selection remainder of the spectral flow.

    order 2:  (5/2) (alpha sqrt(M4/M2) + beta M4/M2) xi^2
    order 3:  (alpha M4/M2^(3/2) + beta sqrt(M4 M6)/M2^(3/2)) |xi|^3
    """
    if m2 <= 0:
        raise DomainError("remainder bound needs M2 > 0")
    if order == 2:
        return 2.5 * (alpha * np.sqrt(m4 / m2) + beta * m4 / m2) * xi * xi
    if order == 3:
        if m6 is None:
            raise ArityError("order-3 remainder bound needs M6")
        return (alpha * m4 / m2**1.5 + beta * np.sqrt(m4 * m6) / m2**1.5) * abs(xi) ** 3
    raise DomainError(f"remainder bound order must be 2 or 3, got {order}")


def measured_remainder(density: GridDensity, rate: SelectionRate, xi) -> np.ndarray:
    """Directly measured selection remainder R(xi) of a grid state.

    Standardizes the density, computes the needed transforms by quadrature
    and assembles

        R = S0 g^ - phi^ - (1/2)(S0 - S2/M2) xi dg^/dxi - i (S1/sqrt(M2)) xi g^,

    where g^ is the transform of the standardized profile and phi is the
    selection increment against that profile.
    """
    gamma, xbar, m2 = standardize(density)
    y = gamma.nodes
    g = gamma.h * gamma.values            # unit-mass weights
    root = np.sqrt(m2)
    dm = np.asarray(rate.evaluate(root * y + xbar), dtype=float) - rate.evaluate(xbar)
    s0 = float(dm @ g)
    s1 = root * float((dm * y) @ g)
    s2 = m2 * float((dm * y * y) @ g)
    xi_arr = np.atleast_1d(np.asarray(xi, dtype=float))
    phase = np.exp(-1j * np.outer(xi_arr, y))
    gam = phase @ g
    gam_prime = phase @ (-1j * y * g)
    phi_hat = phase @ (dm * g)
    return (
        s0 * gam
        - phi_hat
        - 0.5 * (s0 - s2 / m2) * xi_arr * gam_prime
        - 1j * (s1 / root) * xi_arr * gam
    )
