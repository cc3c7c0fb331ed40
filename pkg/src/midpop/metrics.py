"""Fourier-based probability metric, the limit profile, and rate fitting.

The distance between two standardized laws is the supremum over xi != 0 of
|cf1(xi) - cf2(xi)| / |xi|^s, finite for s in (2, 3] when the laws share
moments up to order two.  The supremum is discretized on a symmetric
xi-grid with an optional golden-section refinement around the grid argmax.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .ensemble import State, centered_stats, char_fn
from .errors import DomainError, MomentMismatchError

SQRT5 = math.sqrt(5.0)


@dataclass(frozen=True)
class XiGrid:
    """Evaluation grid for the sup over xi; covers both signs by symmetry."""

    xi_min: float = 1e-3
    xi_max: float = 1e3
    n_points: int = 2000
    spacing: str = "log"
    refine: bool = True

    def __post_init__(self):
        if not 0 < self.xi_min < self.xi_max:
            raise DomainError("need 0 < xi_min < xi_max")
        if self.n_points < 2:
            raise DomainError("need at least two grid points")
        if self.spacing not in ("log", "linear"):
            raise DomainError(f"unknown spacing {self.spacing!r}")

    def points(self) -> np.ndarray:
        if self.spacing == "log":
            return np.geomspace(self.xi_min, self.xi_max, self.n_points)
        return np.linspace(self.xi_min, self.xi_max, self.n_points)


def limit_profile_pdf(x) -> np.ndarray | float:
    """Density 2 / (pi (1 + x^2)^2) of the universal limit profile.

    Mean 0, variance 1, heavy tails: moments are finite only below order 3.
    """
    x = np.asarray(x, dtype=float)
    out = 2.0 / (np.pi * (1.0 + x * x) ** 2)
    return float(out) if out.ndim == 0 else out


def limit_profile_cf(xi) -> np.ndarray | float:
    """Characteristic function (1 + |xi|) exp(-|xi|) of the limit profile."""
    a = np.abs(np.asarray(xi, dtype=float))
    out = (1.0 + a) * np.exp(-a)
    return float(out) if out.ndim == 0 else out


def limit_profile_cf_derivative(xi) -> np.ndarray | float:
    """Analytic derivative -xi exp(-|xi|) of the limit profile transform."""
    x = np.asarray(xi, dtype=float)
    out = -x * np.exp(-np.abs(x))
    return float(out) if out.ndim == 0 else out


def fourier_distance(cf1, cf2, s: float, grid: XiGrid | None = None) -> tuple[float, float]:
    """sup over xi of |cf1 - cf2| / |xi|^s, with its argmax.

    ``cf1`` and ``cf2`` are vectorized callables returning characteristic
    function values of unit-mass, mean-zero, variance-one laws.  The
    normalization is checked at xi = 0; when ``grid.refine`` is set, the
    mean and variance are compared by central differences as well, and a
    ratio that keeps climbing as the grid approaches xi_min triggers a
    moment-mismatch error naming the violated order (the sup is infinite
    in that case, a mismatch of low-order moments, not a distance).
    """
    if not 2.0 <= s <= 3.0:
        raise DomainError(f"the distance is used with s in [2, 3], got {s}")
    grid = grid or XiGrid()
    _check_normalization(cf1, "cf1")
    _check_normalization(cf2, "cf2")
    if grid.refine:
        _check_shared_moments(cf1, cf2)

    xi = grid.points()
    xi_signed = np.concatenate([-xi[::-1], xi])
    diff = np.abs(np.asarray(cf1(xi_signed)) - np.asarray(cf2(xi_signed)))
    ratio = diff / np.abs(xi_signed) ** s
    k = int(np.argmax(ratio))
    best, best_xi = float(ratio[k]), float(xi_signed[k])

    _check_edge_divergence(cf1, cf2, ratio, xi, s)

    if grid.refine and 0 < k < xi_signed.size - 1:
        lo, hi = xi_signed[k - 1], xi_signed[k + 1]
        fn = lambda z: abs(cf1(z) - cf2(z)) / abs(z) ** s
        ref_xi, ref_val = _golden_max(fn, float(lo), float(hi))
        if ref_val > best:
            best, best_xi = ref_val, ref_xi
    return best, best_xi


def _check_normalization(cf, name: str):
    v = complex(np.asarray(cf(np.array([0.0])))[0])
    if abs(v - 1.0) > 1e-9:
        raise MomentMismatchError(f"{name}(0) = {v}: order 0 (mass) is not 1")


def _check_shared_moments(cf1, cf2, step: float = 1e-4):
    probes = np.array([-step, step])
    a = np.asarray(cf1(probes))
    b = np.asarray(cf2(probes))
    mean_diff = abs((a[1] - a[0]) - (b[1] - b[0])) / (2.0 * step)
    if mean_diff > 1e-3:
        raise MomentMismatchError(
            f"means differ by {mean_diff:.3g}: order 1 moments do not match"
        )
    var_a = -(a[1] - 2.0 + a[0]).real / step**2
    var_b = -(b[1] - 2.0 + b[0]).real / step**2
    if abs(var_a - var_b) > 2e-3:
        raise MomentMismatchError(
            f"variances {var_a:.6g} and {var_b:.6g} differ: order 2 moments do not match"
        )


def _check_edge_divergence(cf1, cf2, ratio: np.ndarray, xi: np.ndarray, s: float):
    # a sup pinned at the lowest |xi| and still growing as the grid refines
    # toward xi_min means the ratio diverges at 0: a low-order moment mismatch
    n = xi.size
    k_dec = int(np.searchsorted(xi, min(10.0 * xi[0], xi[-1])))
    k_dec = max(1, min(k_dec, n - 1))
    neg = ratio[n - 1 :: -1]  # negative side, ascending |xi|
    pos = ratio[n:]           # positive side, ascending |xi|
    for side in (neg, pos):
        if side[0] == ratio.max() and side[0] > 2.0 * side[k_dec]:
            order = 1 if s <= 2 else 2
            raise MomentMismatchError(
                f"ratio diverges toward xi_min: order <= {order} moments do not match"
            )


def _golden_max(fn, lo: float, hi: float, iters: int = 48) -> tuple[float, float]:
    inv_phi = (SQRT5 - 1.0) / 2.0
    a, b = lo, hi
    c = b - inv_phi * (b - a)
    d = a + inv_phi * (b - a)
    fc, fd = fn(c), fn(d)
    for _ in range(iters):
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = fn(d)
    x = (a + b) / 2.0
    return x, fn(x)


def particle_cf(state, s: float, grid: XiGrid):
    """Characteristic-function callable for a particle ensemble, guarded.

    Monte Carlo noise of size ~ 1/sqrt(n) makes |cf_emp - cf| / |xi|^s
    blow up as xi -> 0, so the metric is refused unless the ensemble is
    large and the grid stays above the noise-driven floor.
    """
    n = state.size
    if n < 10**6:
        raise DomainError(f"particle cf needs at least 1e6 atoms for metric use, got {n}")
    floor = 10.0 * (1.0 / math.sqrt(n)) ** (1.0 / s)
    if grid.xi_min < floor:
        raise DomainError(
            f"xi_min = {grid.xi_min} is below the noise floor {floor:.3g} for n = {n}"
        )
    return lambda xi: char_fn(state, xi)


def wasserstein_to_dirac(state: State, p: int) -> float:
    """W_p distance from the normalized law to the point mass at its mean.

    Equals M_p^(1/p) about the state's own mean; supported for p in {2, 4}.
    """
    if p not in (2, 4):
        raise DomainError("only the p = 2 and p = 4 Dirac distances are used")
    _, _, m = centered_stats(state, p)
    return float(m[p] ** (1.0 / p))


@dataclass(frozen=True)
class RateFit:
    rate: float
    intercept: float
    r_squared: float


def fit_rate(t, y, window: tuple[float, float]) -> RateFit:
    """Least-squares decay rate of a positive series over a time window.

    Fits log y against t on the rows with t in [t_a, t_b] and reports the
    negated slope.  Needs at least 8 rows, all positive.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    t_a, t_b = window
    sel = (t >= t_a) & (t <= t_b)
    if sel.sum() < 8:
        raise DomainError(f"need at least 8 rows in the window, found {int(sel.sum())}")
    ts, ys = t[sel], y[sel]
    if np.any(ys <= 0):
        raise DomainError("rate fitting needs strictly positive values in the window")
    logs = np.log(ys)
    slope, intercept = np.polyfit(ts, logs, 1)
    pred = slope * ts + intercept
    ss_res = float(np.sum((logs - pred) ** 2))
    ss_tot = float(np.sum((logs - logs.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    return RateFit(rate=-float(slope), intercept=float(intercept), r_squared=r2)
