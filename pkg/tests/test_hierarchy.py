import numpy as np
import pytest
from scipy.integrate import quad

from midpop.ensemble import GridDensity, raw_moments
from midpop.errors import (
    ArityError,
    ClosureBreakdownError,
    DomainError,
    HypothesisViolationError,
    UnsupportedRateError,
)
from midpop.hierarchy import (
    GAUSSIAN,
    ZERO,
    EnvelopeSpec,
    MomentODEState,
    contraction_rate,
    envelope,
    integrate,
    measured_remainder,
    moment_rhs,
    remainder_bound,
)
from midpop.selection import SelectionRate

SQUARE = SelectionRate.quadratic(0.0, 0.0, 1.0)


def gaussian_moments(k_max, var=1.0):
    m = np.zeros(k_max + 1)
    m[0] = 1.0
    for k in range(2, k_max + 1, 2):
        m[k] = var ** (k // 2) * np.prod(np.arange(k - 1, 0, -2), dtype=float)
    return m


class TestMomentRhs:
    def test_constant_rate_variance_contraction(self):
        state = MomentODEState(xbar=0.0, M=gaussian_moments(4), closure=GAUSSIAN)
        _, dm, _ = moment_rhs(state, SelectionRate.constant(1.0))
        assert dm[2] == pytest.approx(-0.5)

    def test_square_rate_with_gaussian_moments(self):
        # frozen: -1/2*M2 - S2 + S0*M2 with S0 = 1, S2 = 3 gives -2.5
        state = MomentODEState(xbar=0.0, M=gaussian_moments(4), closure=GAUSSIAN)
        _, dm, _ = moment_rhs(state, SQUARE)
        assert dm[2] == pytest.approx(-2.5)

    def test_symmetric_state_mean_is_stationary(self):
        state = MomentODEState(xbar=0.0, M=gaussian_moments(6), closure=GAUSSIAN)
        dxbar, _, _ = moment_rhs(state, SQUARE)
        assert dxbar == 0.0

    def test_nonpolynomial_rejected(self):
        state = MomentODEState(xbar=0.0, M=gaussian_moments(4))
        table = SelectionRate.from_table([-1, 0, 1], [1.0, 0.0, 1.0])
        with pytest.raises(UnsupportedRateError):
            moment_rhs(state, table)

    def test_rhs_matches_finite_difference_of_grid_run(self):
        # independent oracle: central finite differences of the grid
        # solver's recorded moments on a smooth scenario
        from midpop.grid_solver import GridSolver, GridSolverConfig, discretize_profile, make_grid

        n = 16384
        x_min, h = make_grid(0.5, 12 * 0.05, n)
        f = discretize_profile({"kind": "gaussian", "mean": 0.5, "var": 0.0025}, x_min, h, n)
        solver = GridSolver(f, SQUARE, GridSolverConfig(dt=1e-3, t_end=0.2, record_every=100))
        tracks = solver.run()
        mid = tracks[1]
        state = MomentODEState(xbar=mid.xbar, M=mid.M[:5], closure=GAUSSIAN)
        dxbar, dm, _ = moment_rhs(state, SQUARE)
        dt_rec = tracks[2].t - tracks[0].t
        fd_xbar = (tracks[2].xbar - tracks[0].xbar) / dt_rec
        fd_m2 = (tracks[2].M[2] - tracks[0].M[2]) / dt_rec
        assert dxbar == pytest.approx(fd_xbar, rel=2e-2)
        assert dm[2] == pytest.approx(fd_m2, rel=2e-2)


class TestIntegrate:
    def test_constant_rate_closed_solution(self):
        state = MomentODEState(xbar=0.3, M=gaussian_moments(8), closure=GAUSSIAN)
        tracks = integrate(state, SelectionRate.constant(0.2), dt=1e-3, t_end=4.0,
                           record_every=500)
        for tr in tracks:
            assert tr.M[2] == pytest.approx(np.exp(-0.5 * tr.t), abs=1e-6)
        assert tracks[-1].xbar == 0.3

    def test_t_end_zero_single_row(self):
        state = MomentODEState(xbar=0.0, M=gaussian_moments(4))
        tracks = integrate(state, SQUARE, dt=0.01, t_end=0.0)
        assert len(tracks) == 1

    def test_mass_growth_recorded(self):
        state = MomentODEState(xbar=0.0, M=gaussian_moments(4), closure=GAUSSIAN)
        tracks = integrate(state, SelectionRate.constant(0.0), dt=1e-3, t_end=1.0)
        assert tracks[-1].rho == pytest.approx(np.e, rel=1e-6)

    def test_matches_grid_solver_on_stability_scenario(self):
        # cross-solver oracle: quadratic selection, narrow start
        from midpop.grid_solver import GridSolver, GridSolverConfig, discretize_profile, make_grid

        n = 16384
        x_min, h = make_grid(0.5, 12 * 0.05, n)
        f = discretize_profile({"kind": "gaussian", "mean": 0.5, "var": 0.0025}, x_min, h, n)
        solver = GridSolver(f, SQUARE, GridSolverConfig(dt=1e-3, t_end=5.0, record_every=1000))
        grid_tracks = solver.run()

        state = MomentODEState(xbar=0.5, M=gaussian_moments(8, var=0.0025), closure=GAUSSIAN)
        ode_tracks = integrate(state, SQUARE, dt=1e-3, t_end=5.0, record_every=1000)
        for g, o in zip(grid_tracks, ode_tracks):
            assert o.M[2] == pytest.approx(g.M[2], rel=1e-2)
            assert o.M[4] == pytest.approx(g.M[4], rel=2e-2)

    def test_closure_breakdown_detected(self):
        m = gaussian_moments(4)
        m[4] = 0.5 * m[2] ** 2  # impossible: M4 < M2^2
        state = MomentODEState(xbar=0.0, M=m, closure=ZERO)
        with pytest.raises(ClosureBreakdownError):
            integrate(state, SQUARE, dt=0.05, t_end=5.0)

    def test_zero_closure_keeps_exact_variance_decay(self):
        # the variance equation is closed regardless of the closure rule
        # when selection is constant
        state = MomentODEState(xbar=0.0, M=gaussian_moments(4), closure=ZERO)
        tracks = integrate(state, SelectionRate.constant(0.0), dt=1e-3, t_end=2.0,
                           record_every=500)
        for tr in tracks:
            assert tr.M[2] == pytest.approx(np.exp(-0.5 * tr.t), abs=1e-7)


class TestEnvelopes:
    def test_dirac_stability_bound_value(self):
        spec = EnvelopeSpec("dirac_stability", {"delta": 0.2, "amplitude": 1e-2})
        assert envelope(spec)(5.0) == pytest.approx(1e-2 * np.exp(-1.0))

    def test_margin_hypothesis_checked(self):
        spec = EnvelopeSpec("dirac_stability", {"delta": 0.3, "amplitude": 1.0, "margin": 0.25})
        with pytest.raises(HypothesisViolationError):
            envelope(spec)

    def test_m2_lower(self):
        spec = EnvelopeSpec("m2_lower", {"constant": 0.5, "m2_0": 1e-3})
        assert envelope(spec)(2.0) == pytest.approx(0.5e-3 * np.exp(-1.0))

    def test_ds_bound_at_zero_is_initial_distance(self):
        for c in (0.05, contraction_rate(2.5)):
            spec = EnvelopeSpec("ds_bound", {"d0": 0.7, "L": 0.3, "c": c, "s": 2.5})
            assert envelope(spec)(0.0) == pytest.approx(0.7)

    def test_ds_bound_resonant_case_peaks_then_decays(self):
        lam = contraction_rate(2.5)
        spec = EnvelopeSpec("ds_bound", {"d0": 0.01, "L": 0.1, "c": lam, "s": 2.5})
        bound = envelope(spec)
        t_peak = 1.0 / lam - 0.01 / 0.1
        eps = 1e-3
        assert bound(t_peak) > bound(t_peak - eps)
        assert bound(t_peak) > bound(t_peak + eps)

    def test_unknown_kind_rejected(self):
        from midpop.errors import ConfigError

        with pytest.raises(ConfigError):
            envelope(EnvelopeSpec("nonsense", {}))


class TestContractionRate:
    def test_endpoints_vanish(self):
        assert contraction_rate(2.0) == pytest.approx(0.0, abs=1e-15)
        assert contraction_rate(3.0) == pytest.approx(0.0, abs=1e-15)

    def test_value_at_s25(self):
        # direct evaluation; cross-checked by maximizing over (2, 3): the
        # maximum sits at s = 3 - log2(1/ln 2) - ... ~ 2.472, barely above
        # the s = 2.5 value
        assert contraction_rate(2.5) == pytest.approx(0.0214466094, abs=1e-9)
        s = np.linspace(2.0, 3.0, 10_001)
        vals = 1 - s / 4 - 2 ** (1 - s)
        assert 0 < vals.max() - contraction_rate(2.5) < 3e-4

    def test_positive_inside(self):
        for s in (2.1, 2.5, 2.9):
            assert contraction_rate(s) > 0

    def test_domain_guard(self):
        with pytest.raises(DomainError):
            contraction_rate(1.9)
        with pytest.raises(DomainError):
            contraction_rate(3.1)


class TestRemainderBound:
    def test_vanishes_without_selection_variation(self):
        assert remainder_bound(2, 0.0, 0.0, 1.0, 3.0, 1.0) == 0.0
        assert remainder_bound(3, 0.0, 0.0, 1.0, 3.0, 1.0, m6=15.0) == 0.0

    def test_order2_formula(self):
        # 5/2 * (1 * sqrt(4)) * 1 = 5
        assert remainder_bound(2, 1.0, 0.0, 1.0, 4.0, 1.0) == pytest.approx(5.0)

    def test_order3_needs_m6(self):
        with pytest.raises(ArityError):
            remainder_bound(3, 1.0, 1.0, 1.0, 3.0, 1.0)

    def test_moment_chain_on_random_densities(self):
        # M4^2 <= M2 M6 holds for any law, so the order-3 bound's mixed term
        # dominates the pure-M4 term it replaced
        rng = np.random.default_rng(8)
        for _ in range(50):
            x = np.linspace(-5, 5, 801)
            g = rng.uniform(0.01, 1.0, x.size) * np.exp(-(x**2) / rng.uniform(0.5, 4.0))
            g /= np.trapezoid(g, x)
            xbar = np.trapezoid(x * g, x)
            d = x - xbar
            m2 = np.trapezoid(d**2 * g, x)
            m4 = np.trapezoid(d**4 * g, x)
            m6 = np.trapezoid(d**6 * g, x)
            assert m4**2 <= m2 * m6 * (1 + 1e-12)


class TestMeasuredRemainder:
    def test_constant_rate_gives_zero(self):
        x = np.linspace(-6, 6, 2001)
        v = np.exp(-(x**2) / 2)
        f = GridDensity(-6.0, x[1] - x[0], v)
        r = measured_remainder(f, SelectionRate.constant(3.0), [0.1, 0.5, 1.0])
        assert np.max(np.abs(r)) < 1e-12

    def test_dominated_by_order2_bound(self):
        rng = np.random.default_rng(12)
        x = np.linspace(-0.5, 1.5, 4001)
        h = x[1] - x[0]
        for _ in range(10):
            center = rng.uniform(0.3, 0.7)
            width = rng.uniform(0.02, 0.08)
            v = np.exp(-((x - center) ** 2) / (2 * width**2)) * (1 + 0.3 * np.sin(8 * x))
            f = GridDensity(-0.5, h, v)
            from midpop.ensemble import centered_stats

            _, xbar, m = centered_stats(f, 4)
            alpha, beta = SQUARE.lipschitz_decomposition(xbar)
            for xi in (0.1, 0.5, 1.0):
                bound = remainder_bound(2, alpha, beta, m[2], m[4], xi)
                r = measured_remainder(f, SQUARE, xi)
                assert np.abs(r)[0] <= bound * (1 + 1e-9)


class TestStateValidation:
    def test_odd_order_rejected(self):
        with pytest.raises(Exception):
            MomentODEState(xbar=0.0, M=np.zeros(6))  # K = 5 odd

    def test_m0_m1_pinned(self):
        m = np.array([3.0, 2.0, 1.0, 0.0, 3.0])
        state = MomentODEState(xbar=0.0, M=m)
        assert state.M[0] == 1.0 and state.M[1] == 0.0
