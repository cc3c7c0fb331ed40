import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from midpop.ensemble import (
    GridDensity,
    ParticleEnsemble,
    centered_stats,
    char_fn,
    raw_moments,
    standardize,
)
from midpop.errors import ConcentrationError, DegenerateStateError, DomainError


def two_atoms(x1=-1.0, x2=1.0, w=0.5, mass=1.0):
    return ParticleEnsemble(np.array([x1, x2]), np.array([w, 1 - w]), total_mass=mass)


def gaussian_grid(mean=0.0, var=1.0, half_width=10.0, n=4001, mass=1.0):
    x_min = mean - half_width
    h = 2 * half_width / (n - 1)
    x = x_min + h * np.arange(n)
    v = np.exp(-((x - mean) ** 2) / (2 * var))
    v *= mass / (h * v.sum())
    return GridDensity(x_min, h, v)


def random_ensemble(rng, n=25):
    return ParticleEnsemble(
        positions=rng.uniform(-4, 4, n),
        weights=rng.uniform(0.05, 1.0, n),
        total_mass=rng.uniform(0.2, 5.0),
    )


class TestRawMoments:
    def test_point_mass(self):
        ens = ParticleEnsemble(np.array([2.0]), np.array([1.0]), total_mass=1.0)
        np.testing.assert_allclose(raw_moments(ens, 3), [1.0, 2.0, 4.0, 8.0])

    def test_symmetric_atoms(self):
        np.testing.assert_allclose(raw_moments(two_atoms(), 3), [1.0, 0.0, 1.0, 0.0])

    def test_uniform_grid_second_moment_refines(self):
        # exact integral of x^2 over uniform [-1, 1] is 1/3; the quadrature
        # error must shrink under grid refinement
        errs = []
        for n in (201, 401, 801):
            h = 2.0 / n
            x_min = -1.0 + h / 2
            grid = GridDensity(x_min, h, np.full(n, 0.5))
            mu = raw_moments(grid, 2)
            errs.append(abs(mu[2] - 1.0 / 3.0))
        assert errs[0] < 1e-3
        assert errs[2] < errs[0]

    def test_negative_order_rejected(self):
        with pytest.raises(DomainError):
            raw_moments(two_atoms(), -1)


class TestCenteredStats:
    def test_symmetric_atoms(self):
        rho, xbar, m = centered_stats(two_atoms(), 4)
        assert (rho, xbar) == (1.0, 0.0)
        np.testing.assert_allclose(m, [1.0, 0.0, 1.0, 0.0, 1.0])

    def test_point_mass_has_no_spread(self):
        ens = ParticleEnsemble(np.array([1.7]), np.array([1.0]))
        _, xbar, m = centered_stats(ens, 6)
        assert xbar == 1.7
        np.testing.assert_allclose(m[2:], 0.0)

    def test_gaussian_grid_moments(self):
        _, _, m = centered_stats(gaussian_grid(), 4)
        assert m[2] == pytest.approx(1.0, abs=1e-8)
        assert m[4] == pytest.approx(3.0, abs=1e-7)

    def test_zero_mass_grid_rejected(self):
        grid = GridDensity(0.0, 0.1, np.zeros(16))
        with pytest.raises(DegenerateStateError):
            centered_stats(grid, 2)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_centered_consistent_with_raw_binomial(self, seed):
        # binomial expansion M_k = sum_j C(k,j) (mu_j/mu_0) (-xbar)^(k-j)
        rng = np.random.default_rng(seed)
        state = random_ensemble(rng)
        mu = raw_moments(state, 6)
        rho, xbar, m = centered_stats(state, 6)
        from math import comb

        for k in range(2, 7):
            expect = sum(comb(k, j) * (mu[j] / mu[0]) * (-xbar) ** (k - j) for j in range(k + 1))
            assert m[k] == pytest.approx(expect, rel=1e-10, abs=1e-12)

    def test_cauchy_schwarz_chain(self):
        rng = np.random.default_rng(21)
        for _ in range(100):
            state = random_ensemble(rng)
            _, _, m = centered_stats(state, 4)
            assert abs(m[3]) <= np.sqrt(m[2] * m[4]) * (1 + 1e-12)
            assert m[2] <= np.sqrt(m[4]) * (1 + 1e-12)


class TestCharFn:
    def test_unit_at_zero(self):
        assert char_fn(two_atoms(), 0.0) == pytest.approx(1.0 + 0j)

    def test_point_mass_phase(self):
        ens = ParticleEnsemble(np.array([0.7]), np.array([1.0]))
        xi = 1.3
        assert char_fn(ens, xi) == pytest.approx(np.exp(-1j * xi * 0.7))

    def test_symmetric_state_is_real(self):
        vals = char_fn(two_atoms(), np.linspace(-8, 8, 41))
        assert np.max(np.abs(vals.imag)) < 1e-12

    def test_modulus_bounded(self):
        grid = gaussian_grid()
        vals = char_fn(grid, np.linspace(-20, 20, 101))
        assert np.max(np.abs(vals)) <= 1 + 1e-12

    def test_standardized_state_derivatives_at_zero(self):
        # value 1, first derivative 0, second derivative -1, by central
        # finite differences with step 1e-4
        h = 1e-4
        for state in (gaussian_grid(mean=2.0, var=0.3), two_atoms(0.0, 2.0)):
            std, _, _ = standardize(state)
            f0 = char_fn(std, 0.0)
            fp = char_fn(std, h)
            fm = char_fn(std, -h)
            assert abs(f0 - 1.0) < 1e-12
            assert abs((fp - fm) / (2 * h)) < 1e-6
            assert abs((fp - 2 * f0 + fm) / h**2 + 1.0) < 1e-6


class TestStandardize:
    def test_already_standard(self):
        std, xbar, m2 = standardize(two_atoms())
        assert (xbar, m2) == (0.0, 1.0)
        np.testing.assert_allclose(std.positions, [-1.0, 1.0])

    def test_affine_map(self):
        std, xbar, m2 = standardize(two_atoms(0.0, 2.0))
        assert (xbar, m2) == (1.0, 1.0)
        np.testing.assert_allclose(std.positions, [-1.0, 1.0])
        assert std.total_mass == 1.0

    def test_idempotent(self):
        rng = np.random.default_rng(2)
        state = random_ensemble(rng)
        once, _, _ = standardize(state)
        twice, xbar, m2 = standardize(once)
        assert abs(xbar) < 1e-12 and abs(m2 - 1.0) < 1e-12
        np.testing.assert_allclose(twice.positions, once.positions, atol=1e-12)

    def test_grid_rescaling(self):
        std, xbar, m2 = standardize(gaussian_grid(mean=1.5, var=0.25, mass=3.0))
        assert xbar == pytest.approx(1.5, abs=1e-9)
        assert m2 == pytest.approx(0.25, abs=1e-9)
        rho, mean, m = centered_stats(std, 2)
        assert rho == pytest.approx(1.0, abs=1e-12)
        assert abs(mean) < 1e-12
        assert m[2] == pytest.approx(1.0, abs=1e-10)

    def test_point_mass_refused(self):
        ens = ParticleEnsemble(np.array([3.0]), np.array([1.0]))
        with pytest.raises(ConcentrationError):
            standardize(ens)


class TestValidation:
    def test_negative_weights_rejected(self):
        with pytest.raises(DomainError):
            ParticleEnsemble(np.array([0.0, 1.0]), np.array([0.5, -0.5]))

    def test_negative_density_rejected(self):
        with pytest.raises(DomainError):
            GridDensity(0.0, 0.1, np.array([1.0, -0.1, 0.0]))

    def test_weights_renormalized(self):
        ens = ParticleEnsemble(np.array([0.0, 1.0]), np.array([2.0, 2.0]), total_mass=7.0)
        np.testing.assert_allclose(ens.weights, [0.5, 0.5])
        assert ens.total_mass == 7.0
