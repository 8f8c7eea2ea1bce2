import os
import sys
import unittest

import numpy as np

# Add parent directory to path
sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from constants import BANDWIDTH_FLOOR, SIZE_CLAMP, Emojis
from errors import LearningError
from size_kde import SizeKDE, fit_size_kde, sample_kde


class TestSizeKDE(unittest.TestCase):
    def test_silverman_bandwidth(self):
        kde = fit_size_kde([[1.0], [2.0], [3.0]])
        self.assertAlmostEqual(kde.bandwidths[0], 1.06 * 1.0 * 3 ** (-0.2), places=12)

    def test_single_sample_uses_floor(self):
        """Test that one sample gives a floored bandwidth instead of zero."""
        kde = fit_size_kde([[0.5, 0.4, 0.6]])
        np.testing.assert_array_equal(kde.bandwidths, [BANDWIDTH_FLOOR] * 3)

    def test_density_peaks_at_samples(self):
        kde = fit_size_kde([[2.0, 1.6, 0.5], [2.1, 1.8, 0.55]])
        self.assertGreater(kde.density([2.05, 1.7, 0.52]), kde.density([3.0, 0.5, 1.5]))

    def test_point_mass_axis(self):
        kde = SizeKDE(samples=np.array([[1.0, 2.0]]), bandwidths=np.array([0.1, 0.0]))
        self.assertGreater(kde.density([1.0, 2.0]), 0.0)
        self.assertEqual(kde.density([1.0, 2.1]), 0.0)

    def test_draws_are_positive(self):
        """Test that draws near zero with a wide kernel stay strictly positive."""
        kde = SizeKDE(samples=np.array([[0.01, 0.01, 0.01]]), bandwidths=np.array([0.5, 0.5, 0.5]))
        rng = np.random.default_rng(0)
        for _ in range(200):
            self.assertTrue(min(sample_kde(kde, rng)) > 0)

    def test_empty_samples_rejected(self):
        with self.assertRaises(LearningError):
            fit_size_kde(np.zeros((0, 3)))

    def test_dict_round_trip(self):
        kde = fit_size_kde([[1.0, 0.5, 0.7], [1.2, 0.6, 0.8]])
        again = SizeKDE.from_dict(kde.to_dict())
        np.testing.assert_array_equal(again.samples, kde.samples)
        np.testing.assert_array_equal(again.bandwidths, kde.bandwidths)

    def test_stuck_draw_is_clamped_with_warning(self):
        kde = SizeKDE(samples=np.array([[-1.0, 0.5]]), bandwidths=np.array([0.0, 0.0]))
        with self.assertLogs('sago', level='WARNING') as logs:
            draw = sample_kde(kde, np.random.default_rng(0))
        self.assertEqual(draw, (SIZE_CLAMP, 0.5))
        self.assertIn(Emojis.WARN, logs.output[0])


class TestSizeKDEDraws(unittest.TestCase):
    def test_identical_samples(self):
        """Test that 10,000 draws around one repeated size stay within 3 floored bandwidths on average."""
        size = np.array([1.2, 0.8, 0.5])
        kde = fit_size_kde([size] * 5)
        rng = np.random.default_rng(11)
        draws = np.array([sample_kde(kde, rng) for _ in range(10000)])
        np.testing.assert_array_less(np.abs(draws.mean(axis=0) - size), 3 * BANDWIDTH_FLOOR)

    def test_two_clusters_average_between(self):
        kde = fit_size_kde([[1.0, 1.0, 1.0]] * 200 + [[3.0, 3.0, 3.0]] * 200)
        rng = np.random.default_rng(12)
        draws = np.array([sample_kde(kde, rng) for _ in range(10000)])
        np.testing.assert_allclose(draws.mean(axis=0), [2.0, 2.0, 2.0], atol=0.05)

    def test_single_sample_spread(self):
        kde = SizeKDE(samples=np.array([[2.0, 1.0, 0.8]]), bandwidths=np.array([0.1, 0.05, 0.02]))
        rng = np.random.default_rng(13)
        draws = np.array([sample_kde(kde, rng) for _ in range(10000)])
        np.testing.assert_allclose(draws.std(axis=0) / kde.bandwidths, [1.0, 1.0, 1.0], atol=0.2)

    def test_zero_bandwidth_returns_a_sample(self):
        kde = SizeKDE(samples=np.array([[1.0, 0.5, 0.7], [2.0, 1.5, 0.9]]), bandwidths=np.zeros(3))
        rng = np.random.default_rng(14)
        for _ in range(20):
            self.assertIn(sample_kde(kde, rng), [(1.0, 0.5, 0.7), (2.0, 1.5, 0.9)])


if __name__ == '__main__':
    unittest.main()
