"""Selection (net mortality) rates and their derived quantities.

A rate is a function m(x) of the trait, bounded below and growing at most
quadratically.  Polynomial rates up to degree two are first-class citizens:
for them the infimum, the stability margin, the local Lipschitz split and
the closed form of the selection moments are all exact.  Tabulated and
custom rates are supported with declared metadata.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ArityError, DomainError, UnsupportedRateError

CONSTANT = "constant"
AFFINE = "affine"
QUADRATIC = "quadratic"
TABLE = "lipschitz_table"
CUSTOM = "custom"

_POLYNOMIAL = (CONSTANT, AFFINE, QUADRATIC)


@dataclass(frozen=True)
class SelectionRate:
    """Trait-dependent selection rate m(x).

    For polynomial kinds m(x) = a + b*x + c*x**2.  ``lower_bound`` is the
    constant K with m(x) >= -K on the working domain; ``growth`` is C with
    m(x) <= C*(1 + x**2).  Both are derived for polynomial kinds when not
    supplied.  Instances are immutable and safe to share between solvers.
    """

    kind: str
    a: float = 0.0
    b: float = 0.0
    c: float = 0.0
    lower_bound: Optional[float] = None
    growth: Optional[float] = None
    table_x: Optional[np.ndarray] = field(default=None, repr=False)
    table_m: Optional[np.ndarray] = field(default=None, repr=False)
    table_lipschitz: Optional[float] = None
    fn: Optional[Callable[[float], float]] = field(default=None, repr=False)
    declared_inf: Optional[float] = None
    declared_alpha: Optional[float] = None
    declared_beta: Optional[float] = None

    def __post_init__(self):
        if self.kind not in (*_POLYNOMIAL, TABLE, CUSTOM):
            raise DomainError(f"unknown selection rate kind {self.kind!r}")
        if self.kind == QUADRATIC and self.c < 0:
            raise DomainError("quadratic rate needs c >= 0 so the infimum is attained")
        if self.kind == AFFINE and self.b != 0.0 and self.lower_bound is None:
            raise DomainError(
                "affine rate is unbounded below; declare lower_bound for the working domain"
            )
        if self.kind == TABLE:
            if self.table_x is None or self.table_m is None:
                raise DomainError("table rate needs table_x and table_m")
            xs = np.asarray(self.table_x, dtype=float)
            ms = np.asarray(self.table_m, dtype=float)
            if xs.ndim != 1 or xs.shape != ms.shape or xs.size < 2:
                raise DomainError("table must be two 1-d arrays of equal length >= 2")
            if not np.all(np.diff(xs) > 0):
                raise DomainError("table nodes must be strictly increasing")
            object.__setattr__(self, "table_x", xs)
            object.__setattr__(self, "table_m", ms)
        if self.kind == CUSTOM and self.fn is None:
            raise DomainError("custom rate needs a callable")
        if self.lower_bound is None:
            inf = self._inf_or_none()
            if inf is not None and math.isfinite(inf):
                object.__setattr__(self, "lower_bound", max(0.0, -inf))
        if self.growth is None and self.kind in _POLYNOMIAL:
            object.__setattr__(self, "growth", _poly_growth(self.a, self.b, self.c))
        if self.growth is None and self.kind == TABLE:
            # conservative: bound by the largest table value (grid use only)
            object.__setattr__(self, "growth", max(0.0, float(np.max(self.table_m))))

    # -- constructors ------------------------------------------------------

    @staticmethod
    def constant(a: float) -> "SelectionRate":
        return SelectionRate(CONSTANT, a=float(a))

    @staticmethod
    def affine(a: float, b: float, lower_bound: Optional[float] = None) -> "SelectionRate":
        if b == 0.0:
            return SelectionRate(CONSTANT, a=float(a))
        return SelectionRate(AFFINE, a=float(a), b=float(b), lower_bound=lower_bound)

    @staticmethod
    def quadratic(a: float, b: float, c: float) -> "SelectionRate":
        if c == 0.0:
            return SelectionRate.affine(a, b)
        return SelectionRate(QUADRATIC, a=float(a), b=float(b), c=float(c))

    @staticmethod
    def from_table(x, m, lipschitz: Optional[float] = None) -> "SelectionRate":
        xs = np.asarray(x, dtype=float)
        ms = np.asarray(m, dtype=float)
        if lipschitz is None and xs.size >= 2:
            lipschitz = float(np.max(np.abs(np.diff(ms) / np.diff(xs))))
        return SelectionRate(TABLE, table_x=xs, table_m=ms, table_lipschitz=lipschitz)

    @staticmethod
    def custom(
        fn: Callable[[float], float],
        lower_bound: float,
        growth: float,
        inf_value: Optional[float] = None,
        alpha_bound: Optional[float] = None,
        beta: Optional[float] = None,
    ) -> "SelectionRate":
        return SelectionRate(
            CUSTOM,
            fn=fn,
            lower_bound=float(lower_bound),
            growth=float(growth),
            declared_inf=inf_value,
            declared_alpha=alpha_bound,
            declared_beta=beta,
        )

    # -- basic queries ------------------------------------------------------

    @property
    def is_polynomial(self) -> bool:
        return self.kind in _POLYNOMIAL

    def _inf_or_none(self) -> Optional[float]:
        if self.kind == CONSTANT:
            return self.a
        if self.kind == AFFINE:
            return -math.inf
        if self.kind == QUADRATIC:
            return self.a - self.b * self.b / (4.0 * self.c)
        if self.kind == TABLE:
            return float(np.min(self.table_m))
        return self.declared_inf

    def inf_value(self) -> float:
        """Infimum of m over the working domain.

        Closed form for polynomial kinds, minimum over nodes for tables
        (the table must bracket the support of all simulated densities),
        declared metadata for custom rates.
        """
        inf = self._inf_or_none()
        if inf is None:
            raise UnsupportedRateError("custom rate without a declared infimum")
        return inf

    def evaluate(self, x):
        """Evaluate m at a scalar or array of trait values."""
        arr = np.asarray(x, dtype=float)
        if not np.all(np.isfinite(arr)):
            raise DomainError("selection rate probed at a non-finite trait value")
        if self.is_polynomial:
            out = self.a + self.b * arr + self.c * arr * arr
        elif self.kind == TABLE:
            out = np.interp(arr, self.table_x, self.table_m)
        else:
            out = np.vectorize(self.fn, otypes=[float])(arr)
        if self.lower_bound is not None:
            low = np.min(out)
            if low < -self.lower_bound - 1e-12 * max(1.0, abs(self.lower_bound)):
                raise DomainError(
                    f"rate evaluated to {low}, below the declared bound -{self.lower_bound}"
                )
        return float(out) if np.isscalar(x) or arr.ndim == 0 else out

    __call__ = evaluate

    def stability_margin(self, x: float) -> float:
        """inf(m) + 1/2 - m(x).

        Never exceeds 1/2; a positive value at the population mean is the
        criterion for local stability of concentrated profiles.
        """
        return self.inf_value() + 0.5 - self.evaluate(x)

    def lipschitz_decomposition(self, y: float) -> tuple[float, float]:
        """Pair (alpha, beta) with |m(x)-m(y)| <= alpha*|x-y| + beta*|x-y|**2 for all x.

        Exact for polynomial kinds: alpha = |b + 2c*y|, beta = c.  Globally
        Lipschitz tables give (L, 0).  Custom rates must declare both.
        """
        if self.is_polynomial:
            return abs(self.b + 2.0 * self.c * y), self.c
        if self.kind == TABLE:
            if self.table_lipschitz is None:
                raise UnsupportedRateError("table rate without a Lipschitz constant")
            return float(self.table_lipschitz), 0.0
        if self.declared_alpha is None or self.declared_beta is None:
            raise UnsupportedRateError(
                "custom rate without declared (alpha, beta) metadata; refusing to guess"
            )
        return float(self.declared_alpha), float(self.declared_beta)


def _poly_growth(a: float, b: float, c: float) -> float:
    # smallest C with a + b*x + c*x^2 <= C*(1 + x^2):
    # sup over x of (a - c + b*x)/(1 + x^2) equals ((a-c) + hypot(a-c, b))/2
    return c + ((a - c) + math.hypot(a - c, b)) / 2.0


def selection_moments(rate: SelectionRate, xbar: float, moments) -> np.ndarray:
    """Selection moments S_0..S_k from centered moments, closed form.

    ``moments`` supplies the centered moments M_0..M_{k+2} about ``xbar``
    (M_0 = 1 and M_1 = 0).  For m(x) = a + b*x + c*x**2,

        m(x) - m(xbar) = (b + 2c*xbar)*(x - xbar) + c*(x - xbar)**2,

    hence S_k = (b + 2c*xbar)*M_{k+1} + c*M_{k+2}, exact for degree <= 2.
    """
    if not rate.is_polynomial:
        raise UnsupportedRateError("closed-form selection moments need a polynomial rate")
    m = np.asarray(moments, dtype=float)
    if m.ndim != 1 or m.size < 3:
        raise ArityError("need centered moments M_0..M_{k+2} with k >= 0")
    if abs(m[0] - 1.0) > 1e-9 or abs(m[1]) > 1e-9:
        raise DomainError("centered moment vector must start with M_0 = 1, M_1 = 0")
    slope = rate.b + 2.0 * rate.c * xbar
    k_max = m.size - 3
    return slope * m[1 : k_max + 2] + rate.c * m[2 : k_max + 3]
