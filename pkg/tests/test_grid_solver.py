import numpy as np
import pytest

from midpop.ensemble import GridDensity, centered_stats
from midpop.errors import ConfigError
from midpop.grid_solver import (
    GridSolver,
    GridSolverConfig,
    discretize_profile,
    duhamel_weight,
    make_grid,
)
from midpop.selection import SelectionRate


def gaussian_solver(rate, dt=1e-2, t_end=1.0, n=1024, width=8.0, var=1.0,
                    mean=0.0, record_every=10):
    x_min, h = make_grid(mean, width * np.sqrt(var), n)
    f = discretize_profile({"kind": "gaussian", "mean": mean, "var": var}, x_min, h, n)
    cfg = GridSolverConfig(dt=dt, t_end=t_end, record_every=record_every)
    return GridSolver(f, rate, cfg)


class TestDuhamelWeight:
    def test_limit_value_at_zerofk(self):
        assert duhamel_weight(0.0, 0.01) == 0.01
        assert duhamel_weight(1e-13, 0.01) == 0.01

    def test_matches_formula(self):
        m, dt = 2.0, 0.1
        assert duhamel_weight(m, dt) == pytest.approx((1 - np.exp(-m * dt)) / m)

    def test_positive_for_negative_rates(self):
        w = duhamel_weight(np.array([-3.0, -1e-3, 0.5, 50.0]), 0.01)
        assert np.all(w > 0)


class TestStep:
    def test_mass_growth_without_selection(self):
        # one step with m = 0 multiplies the mass by exactly (1 + dt)
        solver = gaussian_solver(SelectionRate.constant(0.0), dt=0.01)
        rho0 = solver.f.mass
        solver.step()
        assert solver.f.mass == pytest.approx(rho0 * 1.01, rel=1e-12)

    def test_point_profile_growth_rate(self):
        # a single-node profile is a fixed point of reproduction; its mass
        # obeys rho' = rho (1 - m0) exactly in the dt -> 0 limit
        m0 = 0.3
        n = 64
        x_min, h = make_grid(0.0, 1.0, n)
        values = np.zeros(n)
        j = 32
        values[j] = 1.0 / h
        rate = SelectionRate.constant(m0)
        errs = []
        for dt in (1e-2, 5e-3, 2.5e-3):
            cfg = GridSolverConfig(dt=dt, t_end=1.0, record_every=10**6)
            solver = GridSolver(GridDensity(x_min, h, values.copy()), rate, cfg)
            tracks = solver.run()
            support = solver.f.values > 0
            assert support.sum() == 1 and support[j]
            errs.append(abs(tracks[-1].rho - np.exp(1.0 - m0)))
        assert errs[2] < errs[0]
        assert errs[2] < 2e-3

    def test_positivity_preserved(self):
        solver = gaussian_solver(SelectionRate.quadratic(0.0, 0.0, 1.0), t_end=2.0)
        solver.run()
        assert np.all(solver.f.values >= 0)

    def test_rejects_bad_dt(self):
        with pytest.raises(ConfigError):
            GridSolverConfig(dt=0.0, t_end=1.0)


class TestRun:
    def test_t_end_zero_records_initial_state(self):
        solver = gaussian_solver(SelectionRate.constant(0.0), t_end=0.0)
        tracks = solver.run()
        assert len(tracks) == 1
        assert tracks[0].t == 0.0
        assert tracks[0].rho == pytest.approx(1.0)

    def test_constant_rate_mass_matches_ode(self):
        # rho(t) = rho0 exp((1 - m0) t) for constant m; 1e-3 relative at dt = 1e-3
        m0 = 0.4
        solver = gaussian_solver(SelectionRate.constant(m0), dt=1e-3, t_end=2.0,
                                 record_every=100)
        tracks = solver.run()
        for tr in tracks:
            assert tr.rho == pytest.approx(np.exp((1 - m0) * tr.t), rel=1e-3)

    def test_variance_halving_rate_constant_selection(self):
        # with m = 0 the variance contracts at rate 1/2; refine dt and the
        # grid and the error at t = 2 must shrink
        errors = []
        for dt, n in ((2e-2, 512), (1e-2, 1024)):
            solver = gaussian_solver(SelectionRate.constant(0.0), dt=dt, t_end=2.0, n=n)
            tracks = solver.run()
            m2 = tracks[-1].M[2]
            errors.append(abs(m2 - np.exp(-1.0)))
        assert errors[1] < errors[0]
        assert errors[1] < 5e-3

    def test_restart_is_bitwise(self):
        rate = SelectionRate.quadratic(0.0, 0.0, 1.0)
        a = gaussian_solver(rate, t_end=1.0, var=0.04, mean=0.5, width=10)
        a.run()
        straight = a.f.values.copy()

        b = gaussian_solver(rate, t_end=0.4, var=0.04, mean=0.5, width=10)
        b.run()
        b.config.t_end = 1.0
        b.run()
        assert np.array_equal(b.f.values, straight)
        assert b.step_index == a.step_index

    def test_moment_growth_bound(self):
        # even raw moments grow no faster than exp((K+1) t) with
        # K = max(0, -inf m)
        rate = SelectionRate.quadratic(0.0, 0.0, 1.0)  # inf m = 0 -> K = 0
        solver = gaussian_solver(rate, t_end=2.0, var=0.04, mean=0.5, width=10)
        from midpop.ensemble import raw_moments

        mu0 = raw_moments(solver.f, 8)
        solver.run()
        mu = raw_moments(solver.f, 8)
        for k in (0, 2, 4, 6, 8):
            assert mu[k] <= np.exp(2.0) * mu0[k] * (1 + 1e-6)

    def test_s2_lower_bound(self):
        # S_2 >= (margin(xbar) - 1/2) M_2 on every recorded row
        rate = SelectionRate.quadratic(0.0, 0.0, 1.0)
        solver = gaussian_solver(rate, t_end=2.0, var=0.04, mean=0.5, width=10)
        tracks = solver.run()
        for tr in tracks:
            margin = rate.stability_margin(tr.xbar)
            assert tr.S[2] >= (margin - 0.5) * tr.M[2] - 1e-9

    def test_observer_extras_recorded(self):
        solver = gaussian_solver(SelectionRate.constant(0.0), t_end=0.2)
        tracks = solver.run(observers=[lambda s, tr: {"probe": tr.rho * 2}])
        assert all("probe" in tr.extras for tr in tracks)

    def test_table_rate_records_quadrature_selection_moments(self):
        # non-polynomial rates take the direct-quadrature path for S_k
        xs = np.linspace(-10, 10, 401)
        rate = SelectionRate.from_table(xs, np.abs(xs))
        solver = gaussian_solver(rate, t_end=0.5)
        tracks = solver.run()
        for tr in tracks:
            margin = rate.stability_margin(tr.xbar)
            assert tr.S[2] >= (margin - 0.5) * tr.M[2] - 1e-9
        # quadrature S_0 equals E[m(X)] - m(xbar) for |x| and a centered
        # start: E|X| = sqrt(2/pi) at t = 0 for a unit gaussian
        s0 = tracks[0].S[0]
        assert s0 == pytest.approx(np.sqrt(2 / np.pi), abs=2e-3)

    def test_overflow_aborts_with_time(self):
        # enormous net growth overflows exp(-m dt); the solver must stop
        # with a diagnostic instead of carrying NaN/inf forward
        from midpop.errors import SolverAbortError

        rate = SelectionRate.custom(lambda x: -8e4, lower_bound=8e4, growth=0.0,
                                    inf_value=-8e4)
        with np.errstate(over="ignore", invalid="ignore"):
            solver = gaussian_solver(rate, dt=1e-2, t_end=1.0)
            with pytest.raises(SolverAbortError) as err:
                solver.run()
        assert err.value.t > 0


class TestProfiles:
    def test_two_atoms_mean_exact(self):
        x_min, h = make_grid(0.0, 2.0, 257)
        f = discretize_profile(
            {"kind": "two_atoms", "x1": -0.7371, "x2": 1.133, "w": 0.25}, x_min, h, 257
        )
        rho, xbar, _ = centered_stats(f, 2)
        assert rho == pytest.approx(1.0, rel=1e-12)
        assert xbar == pytest.approx(0.25 * -0.7371 + 0.75 * 1.133, abs=1e-12)

    def test_uniform_profile(self):
        x_min, h = make_grid(0.0, 3.0, 1001)
        f = discretize_profile({"kind": "uniform", "a": -1.0, "b": 1.0}, x_min, h, 1001)
        _, xbar, m = centered_stats(f, 2)
        assert abs(xbar) < 1e-12
        assert m[2] == pytest.approx(1.0 / 3.0, rel=1e-2)

    def test_gaussian_profile_mass(self):
        x_min, h = make_grid(1.0, 6.0, 2001)
        f = discretize_profile(
            {"kind": "gaussian", "mean": 1.0, "var": 0.25, "mass": 2.5}, x_min, h, 2001
        )
        assert f.mass == pytest.approx(2.5, rel=1e-12)

    def test_unknown_profile_rejected(self):
        with pytest.raises(ConfigError):
            discretize_profile({"kind": "cauchy"}, 0.0, 0.1, 10)

    def test_table_profile(self, tmp_path):
        path = tmp_path / "profile.txt"
        x = np.linspace(-2, 2, 101)
        np.savetxt(path, np.column_stack([x, np.exp(-x * x)]))
        x_min, h = make_grid(0.0, 3.0, 501)
        f = discretize_profile({"kind": "table", "path": str(path)}, x_min, h, 501)
        assert f.mass == pytest.approx(1.0, rel=1e-12)
        _, xbar, _ = centered_stats(f, 2)
        assert abs(xbar) < 1e-6
