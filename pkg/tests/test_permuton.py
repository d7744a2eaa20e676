"""
Tests for excursions, measure pairs, permutons and the closed-form limits.
"""

import unittest

import numpy as np

from mallows_avoid.domains.core import Permutation, identity, reverse, rlm_staircase
from mallows_avoid.domains.permuton import (
    CurveComponent,
    CurvePermuton,
    Excursion,
    MeasurePairD,
    PermutonGrid,
    StepMeasure,
    cdf,
    empirical_excursion,
    empirical_measure_pair,
    excursion_from_graph,
    kolmogorov_distance,
    limit_density_pair_321,
    limit_excursion_231,
    limit_excursion_derivative_231,
    limit_inverse_rlm_curve,
    limit_permuton,
    limit_rlm_curve,
    limit_rlm_curve_derivative,
    monotone_coupling,
    pattern_density_mc,
    permuton_from_rlm,
    permuton_of_perm,
    psi,
    quantile,
    rlm_curve_grid,
    rlm_curve_of_permuton,
    rlm_graph_from_excursion,
    x_star,
)
from mallows_avoid.domains.theory import minimizer_321


def ones(t):
    return np.ones_like(np.asarray(t, dtype=float))


class TestExcursion(unittest.TestCase):
    """Tests for excursions and the rotation of RLM curves."""

    def test_validation(self):
        """Test that invalid excursions are rejected."""
        with self.assertRaises(ValueError):
            Excursion(np.array([0.0, 0.5, 0.1]))
        with self.assertRaises(ValueError):
            Excursion(np.array([0.0, -0.2, 0.0]))
        with self.assertRaises(ValueError):
            Excursion(np.array([0.0, 0.9, 0.0]))

    def test_empirical_excursion(self):
        """Test the scaled Dyck heights of small avoiders."""
        phi = empirical_excursion(reverse(identity(2)))
        np.testing.assert_allclose(phi.values, [0.0, 0.25, 0.5, 0.25, 0.0])
        self.assertAlmostEqual(float(phi(0.5)), 0.5)
        self.assertAlmostEqual(float(empirical_excursion(identity(3)).values.max()), 1.0 / 6.0)

    def test_staircase_rotation(self):
        """Test that the rotated staircase is the scaled Dyck path."""
        p = Permutation((3, 1, 2, 5, 4))
        phi = excursion_from_graph(rlm_staircase(p), m=10)
        np.testing.assert_allclose(phi.values, empirical_excursion(p).values, atol=1e-12)

    def test_graph_roundtrip(self):
        """Test excursion -> graph -> excursion."""
        phi = Excursion(limit_excursion_231(2.0, np.linspace(0.0, 1.0, 257)))
        back = excursion_from_graph(rlm_graph_from_excursion(phi), m=256)
        self.assertLess(kolmogorov_distance(phi, back), 1e-9)


class TestMeasures(unittest.TestCase):
    """Tests for step measures, quantiles and monotone couplings."""

    def test_empirical_pair(self):
        """Test the indicator densities of the strict RL minima."""
        pair = empirical_measure_pair(Permutation((2, 1)))
        np.testing.assert_allclose(pair.first.density, [0.0, 1.0])
        np.testing.assert_allclose(pair.second.density, [1.0, 0.0])
        empty = empirical_measure_pair(identity(4))
        self.assertEqual(empty.first.mass, 0.0)

    def test_pair_validation(self):
        """Test mass and domination checks of a measure pair."""
        with self.assertRaises(ValueError):
            MeasurePairD(StepMeasure(np.array([1.0, 0.0])), StepMeasure(np.array([0.0, 0.0])))
        with self.assertRaises(ValueError):
            MeasurePairD(StepMeasure(np.array([1.0, 0.0])), StepMeasure(np.array([0.0, 1.0])))

    def test_quantile(self):
        """Test the generalized inverse of step CDFs."""
        uniform = StepMeasure(np.ones(10))
        self.assertAlmostEqual(float(quantile(uniform, 0.3)), 0.3)
        upper_half = StepMeasure(np.array([0.0, 1.0]))
        self.assertAlmostEqual(float(quantile(upper_half, 0.25)), 0.75)
        self.assertAlmostEqual(float(quantile(upper_half, 0.0)), 0.5)
        with self.assertRaises(ValueError):
            quantile(uniform, 1.0)

    def test_monotone_coupling(self):
        """Test the coupling of the lower and upper halves of [0, 1]."""
        lower = StepMeasure(np.array([1.0, 0.0]))
        upper = StepMeasure(np.array([0.0, 1.0]))
        xs, ys, weights = monotone_coupling(lower, upper).atoms(100)
        np.testing.assert_allclose(ys - xs, 0.5)
        self.assertAlmostEqual(float(weights.sum()), 0.5)
        with self.assertRaises(ValueError):
            monotone_coupling(lower, StepMeasure(np.ones(2)))

    def test_kolmogorov_distance(self):
        """Test sup-distances and type checks."""
        uniform = StepMeasure(np.ones(4))
        self.assertEqual(kolmogorov_distance(uniform, uniform), 0.0)
        self.assertAlmostEqual(kolmogorov_distance(uniform, StepMeasure(np.zeros(4))), 1.0)
        with self.assertRaises(ValueError):
            kolmogorov_distance(uniform, StepMeasure(np.ones(8)))
        with self.assertRaises(ValueError):
            kolmogorov_distance(uniform, Excursion(np.zeros(5)))


class TestGridPermutons(unittest.TestCase):
    """Tests for grid permutons and the maps between curves and permutons."""

    def test_psi_of_empty_pair_is_diagonal(self):
        """Test that the zero pair gives the diagonal permuton."""
        zero = StepMeasure(np.zeros(8))
        P = psi(MeasurePairD(zero, zero), G=16)
        grid = P.grid
        np.testing.assert_allclose(P.cdf, np.minimum.outer(grid, grid), atol=1e-12)

    def test_psi_of_limit_pair(self):
        """Test that the coupled logistic pair is the 321 limit permuton."""
        beta, G = 3.0, 32
        P = psi(minimizer_321(beta, m=2**12), G=G)
        limit = limit_permuton("321", beta).cdf_grid(G)
        self.assertLess(kolmogorov_distance(P, limit), 1e-5)

    def test_diagonal_curve(self):
        """Test the permuton of the diagonal RLM curve."""
        P = permuton_from_rlm(lambda x: x, G=16)
        grid = P.grid
        np.testing.assert_allclose(P.cdf, np.minimum.outer(grid, grid), atol=1e-9)
        self.assertEqual(P.violations(), [])

    def test_antidiagonal_curve(self):
        """Test the permuton of the curve that stays at 0 until x = 1."""
        P = permuton_from_rlm((0, 1), G=16)
        grid = P.grid
        expected = np.maximum(0.0, np.add.outer(grid, grid) - 1.0)
        np.testing.assert_allclose(P.cdf, expected, atol=1e-12)

    def test_rlm_curve_roundtrip(self):
        """Test that the RLM curve is read back from the permuton."""
        F = rlm_staircase(Permutation((2, 1, 3, 5, 4)))
        self.assertEqual(F, (0, 0, 2, 3, 3, 5))
        P = permuton_from_rlm(F, G=5)
        np.testing.assert_allclose(rlm_curve_grid(P), np.array(F) / 5.0)
        self.assertAlmostEqual(rlm_curve_of_permuton(P, 0.4), 0.4)

    def test_permuton_of_perm(self):
        """Test the three cell variants of a permutation's permuton."""
        p = Permutation((2, 4, 1, 3, 6, 5, 8, 7, 10, 9))
        plain = permuton_of_perm(p, "plain", G=40)
        for variant in ("diag", "antidiag"):
            other = permuton_of_perm(p, variant, G=40)
            self.assertEqual(other.violations(), [])
            self.assertLessEqual(kolmogorov_distance(plain, other), 1.0 / p.n + 1e-12)
        self.assertEqual(plain.violations(), [])
        with self.assertRaises(ValueError):
            permuton_of_perm(p, "bogus")

    def test_grid_validation(self):
        """Test that non-permuton CDFs are reported."""
        self.assertNotEqual(PermutonGrid(np.zeros((3, 3))).violations(), [])
        with self.assertRaises(ValueError):
            PermutonGrid(np.zeros((3, 3))).check()


class TestLimitShapes(unittest.TestCase):
    """Tests for the closed-form limit curves and permutons."""

    def test_endpoints(self):
        """Test f(0) = 0 and f(1) = 1."""
        for tag in ("231", "321"):
            for beta in (0.5, 3.0, 50.0):
                values = limit_rlm_curve(tag, beta, [0.0, 1.0])
                np.testing.assert_allclose(values, [0.0, 1.0], atol=1e-10)

    def test_diagonal_for_nonpositive_beta(self):
        """Test that beta <= 0 gives the diagonal."""
        xs = np.linspace(0.0, 1.0, 11)
        for tag in ("231", "321"):
            np.testing.assert_array_equal(limit_rlm_curve(tag, -1.0, xs), xs)
        self.assertEqual(x_star(-1.0), 0.5)

    def test_curve_below_diagonal(self):
        """Test f(x) <= x and monotonicity."""
        xs = np.linspace(0.0, 1.0, 1001)
        for tag in ("231", "321"):
            f = limit_rlm_curve(tag, 4.0, xs)
            self.assertTrue(np.all(f <= xs + 1e-12))
            self.assertTrue(np.all(np.diff(f) >= -1e-12))

    def test_231_graph_symmetry(self):
        """Test f(1 - f(x)) = 1 - x."""
        xs = np.linspace(0.0, 1.0, 101)
        f = limit_rlm_curve("231", 2.0, xs)
        np.testing.assert_allclose(limit_rlm_curve("231", 2.0, 1.0 - f), 1.0 - xs, atol=1e-10)

    def test_inverse_curves(self):
        """Test f^{-1}(f(x)) = x."""
        xs = np.linspace(0.0, 1.0, 101)
        for tag in ("231", "321"):
            f = limit_rlm_curve(tag, 3.0, xs)
            np.testing.assert_allclose(limit_inverse_rlm_curve(tag, 3.0, f), xs, atol=1e-9)

    def test_x_star(self):
        """Test that f' crosses 1 at x*."""
        for beta in (0.5, 2.0, 10.0):
            star = x_star(beta)
            self.assertAlmostEqual(float(limit_rlm_curve_derivative("231", beta, star)), 1.0, places=8)
            self.assertGreater(star, 0.5)

    def test_derivatives(self):
        """Test closed-form derivatives against central differences."""
        xs = np.linspace(0.05, 0.95, 19)
        h = 1e-6
        for tag in ("231", "321"):
            numeric = (limit_rlm_curve(tag, 2.5, xs + h) - limit_rlm_curve(tag, 2.5, xs - h)) / (2 * h)
            np.testing.assert_allclose(limit_rlm_curve_derivative(tag, 2.5, xs), numeric, rtol=1e-5)
        numeric = (limit_excursion_231(2.5, xs + h) - limit_excursion_231(2.5, xs - h)) / (2 * h)
        np.testing.assert_allclose(limit_excursion_derivative_231(2.5, xs), numeric, atol=1e-6)

    def test_excursion_symmetry(self):
        """Test phi(t) = phi(1 - t) and phi = 0 for beta <= 0."""
        ts = np.linspace(0.0, 1.0, 101)
        np.testing.assert_allclose(limit_excursion_231(3.0, ts), limit_excursion_231(3.0, 1.0 - ts), atol=1e-12)
        np.testing.assert_array_equal(limit_excursion_231(-2.0, ts), np.zeros_like(ts))

    def test_density_pair(self):
        """Test rho1 + rho2 = 1 and the coupling relation rho1 = f' rho2(f)."""
        xs = np.linspace(0.0, 1.0, 51)
        rho1, rho2 = limit_density_pair_321(2.0, xs)
        np.testing.assert_allclose(rho1 + rho2, 1.0)
        f = limit_rlm_curve("321", 2.0, xs)
        _, rho2_at_f = limit_density_pair_321(2.0, f)
        np.testing.assert_allclose(rho1, limit_rlm_curve_derivative("321", 2.0, xs) * rho2_at_f, atol=1e-8)

    def test_231_component_masses(self):
        """Test the antidiagonal mass 2x* - 1 and total mass 1."""
        beta = 3.0
        masses = limit_permuton("231", beta).component_masses()
        self.assertAlmostEqual(float(masses[1]), 2.0 * x_star(beta) - 1.0, places=6)
        self.assertAlmostEqual(float(masses.sum()), 1.0, places=6)

    def test_321_component_masses(self):
        """Test the two halves of the 321 limit."""
        masses = limit_permuton("321", 2.0).component_masses()
        np.testing.assert_allclose(masses, [0.5, 0.5], atol=1e-7)

    def test_uniform_marginals(self):
        """Test mu([0, x] x [0, 1]) = x."""
        for tag in ("231", "321"):
            P = limit_permuton(tag, 2.0)
            for x in (0.2, 0.5, 0.9):
                self.assertAlmostEqual(cdf(P, x, 1.0), x, places=6)
                self.assertAlmostEqual(cdf(P, 1.0, x), x, places=6)

    def test_diagonal_permuton(self):
        """Test that beta <= 0 gives the diagonal permuton."""
        P = limit_permuton("231", -1.0)
        self.assertAlmostEqual(cdf(P, 0.3, 0.7), 0.3, places=8)
        self.assertEqual(len(P.components), 1)

    def test_grid_cdf_is_a_permuton(self):
        """Test that the gridded limit passes the permuton checks."""
        for tag in ("231", "321"):
            self.assertEqual(limit_permuton(tag, 2.0).cdf_grid(16).violations(1e-6), [])

    def test_beta_range(self):
        """Test that |beta| above 700 is rejected."""
        with self.assertRaises(ValueError):
            limit_rlm_curve("231", 800.0, 0.5)
        with self.assertRaises(ValueError):
            limit_rlm_curve("132", 1.0, 0.5)


class TestPatternDensity(unittest.TestCase):
    """Tests for Monte Carlo pattern densities."""

    def test_antidiagonal_is_all_inversions(self):
        """Test dens(21) = 1 on the antidiagonal."""
        component = CurveComponent("antidiagonal", weight=ones)
        P = CurvePermuton((component,), beta=0.0, pattern="231")
        estimate, stderr = pattern_density_mc((2, 1), P, 2000, np.random.default_rng(1))
        self.assertEqual(estimate, 1.0)
        self.assertEqual(stderr, 0.0)

    def test_limits_avoid_their_pattern(self):
        """Test that samples of a limit permuton avoid its pattern."""
        rng = np.random.default_rng(7)
        for tag in ("231", "321"):
            estimate, _ = pattern_density_mc(tag, limit_permuton(tag, 3.0), 20000, rng)
            self.assertLess(estimate, 0.005)

    def test_diagonal_has_no_inversions(self):
        """Test dens(21) = 0 on the diagonal."""
        estimate, _ = pattern_density_mc((2, 1), limit_permuton("321", -1.0), 5000, np.random.default_rng(3))
        self.assertEqual(estimate, 0.0)

    def test_increasing_pattern_in_uniform_grid(self):
        """Test dens(12) near 1/2 for the uniform permuton."""
        grid = np.linspace(0.0, 1.0, 9)
        P = PermutonGrid(np.outer(grid, grid))
        estimate, stderr = pattern_density_mc((1, 2), P, 20000, np.random.default_rng(11))
        self.assertLess(abs(estimate - 0.5), 5 * stderr)


if __name__ == "__main__":
    unittest.main()
