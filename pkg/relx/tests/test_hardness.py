"""
# Run the hard-instance and equivalence tests
pytest relx/tests/test_hardness.py -v
"""

import unittest
from fractions import Fraction

import numpy as np
from pydantic import ValidationError

from relx.core.errors import DimensionMismatchError
from relx.core.hardness import (
    Equivalent,
    Witness,
    brute_force_equiv,
    build_rectangle_net,
    build_subsetsum_net,
    corners,
    nonzero_fraction,
)
from relx.core.models import RectangleSpec
from relx.core.network import zero_net
from relx.tests.helpers import subset_in_window, victim


class TestRectangleNet(unittest.TestCase):
    def setUp(self):
        # p a power of two keeps every grid value and tent exact
        self.spec = RectangleSpec.from_cells(d=3, p=4, cells=[1, 2])
        self.rect = build_rectangle_net(self.spec)

    def test_width_is_three_per_active_coordinate(self):
        self.assertEqual(self.spec.active, [0, 1])
        self.assertEqual(self.rect.net.h, 6)
        self.assertEqual(self.rect.net.k, 1)

    def test_peak_at_cell_center(self):
        self.assertEqual(self.rect(np.array([0.25, 0.5, 0.9])), 1.0)

    def test_zero_outside_cell(self):
        self.assertLess(abs(self.rect(np.array([0.9, 0.5, 0.1]))), 1e-12)
        self.assertEqual(self.rect(np.array([0.25, 0.0, 0.3])), 0.0)

    def test_grid_fraction_is_p_to_minus_k(self):
        self.assertEqual(nonzero_fraction(self.rect, 3, 4), Fraction(1, 4**2))

    def test_four_inputs_two_active(self):
        spec = RectangleSpec.from_cells(d=4, p=4, cells=[3, 1], active=[1, 3])
        self.assertEqual(nonzero_fraction(build_rectangle_net(spec), 4, 4), Fraction(1, 16))

    def test_sharded_enumeration_agrees(self):
        self.assertEqual(nonzero_fraction(self.rect, 3, 4, shard_size=5), Fraction(1, 16))

    def test_callable_and_network_inputs(self):
        self.assertEqual(nonzero_fraction(lambda xs: xs[:, 0], 2, 4), Fraction(3, 4))
        self.assertEqual(nonzero_fraction(zero_net(2, 1, 1), 2, 4), Fraction(0))

    def test_grid_limits(self):
        with self.assertRaises(ValueError):
            nonzero_fraction(self.rect, 0, 4)
        with self.assertRaises(ValueError):
            nonzero_fraction(self.rect, 30, 4)


class TestRectangleSpec(unittest.TestCase):
    def test_cells_map_to_open_intervals(self):
        spec = RectangleSpec.from_cells(d=2, p=8, cells=[3], active=[1])
        np.testing.assert_array_equal(spec.a, [0.0, 0.25])
        np.testing.assert_array_equal(spec.b, [1.0, 0.5])
        self.assertEqual(spec.k, 1)

    def test_bad_cells(self):
        with self.assertRaises(ValueError):
            RectangleSpec.from_cells(d=2, p=4, cells=[0])
        with self.assertRaises(ValueError):
            RectangleSpec.from_cells(d=2, p=4, cells=[4])
        with self.assertRaises(ValueError):
            RectangleSpec.from_cells(d=2, p=4, cells=[1], active=[2])
        with self.assertRaises(DimensionMismatchError):
            RectangleSpec.from_cells(d=2, p=4, cells=[1, 2], active=[0])

    def test_bounds_validated(self):
        with self.assertRaises(ValidationError):
            RectangleSpec(a=[0.5], b=[0.25], p=4)
        with self.assertRaises(ValidationError):
            RectangleSpec(a=[-0.5], b=[0.25], p=4)
        with self.assertRaises(ValidationError):
            RectangleSpec(a=[0.5], b=[0.5], p=4)


class TestSubsetSum(unittest.TestCase):
    def test_known_instance(self):
        net = build_subsetsum_net([3, 5, 9], 14, 1)
        result = brute_force_equiv(net, zero_net(3, 3, 1))
        self.assertIsInstance(result, Witness)
        self.assertEqual(result.subset, [1, 2])
        self.assertAlmostEqual(result.gap, 0.5)

    def test_no_solution_is_equivalent_to_zero(self):
        net = build_subsetsum_net([2, 4, 6, 8], 7, 1)
        result = brute_force_equiv(net, zero_net(4, 1, 1))
        self.assertIsInstance(result, Equivalent)
        self.assertEqual(result.checked, 16)

    def test_window_edges_are_zero(self):
        net = build_subsetsum_net([4], 2, 4)
        result = brute_force_equiv(net, zero_net(1, 1, 1))
        self.assertIsInstance(result, Equivalent)

    def test_matches_meet_in_the_middle(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            d = int(rng.integers(4, 15))
            v = [int(x) for x in rng.integers(1, 60, size=d)]
            target = int(rng.integers(0, sum(v) + 1))
            p = int(rng.integers(1, 4))
            expected = subset_in_window(v, target, p)
            result = brute_force_equiv(build_subsetsum_net(v, target, p), zero_net(d, 1, 1))
            if expected is None:
                self.assertIsInstance(result, Equivalent)
            else:
                self.assertIsInstance(result, Witness)
                total = sum(v[i] for i in result.subset)
                self.assertLess(abs(2 * (total - target)), p)

    def test_bad_instances(self):
        with self.assertRaises(ValueError):
            build_subsetsum_net([], 1, 1)
        with self.assertRaises(ValueError):
            build_subsetsum_net([1, 2], 1, 0)


class TestBruteForceEquiv(unittest.TestCase):
    def test_identical_networks(self):
        net = victim(6, 3, 2, 0)
        result = brute_force_equiv(net, net)
        self.assertEqual(result, Equivalent(checked=64))

    def test_sharding_finds_the_same_witness(self):
        net = build_subsetsum_net([1, 2, 4, 8, 16], 21, 1)
        a = brute_force_equiv(net, zero_net(5, 1, 1))
        b = brute_force_equiv(net, zero_net(5, 1, 1), shard_size=3)
        np.testing.assert_array_equal(a.x, b.x)
        self.assertEqual(a.subset, [0, 2, 4])

    def test_dimension_checks(self):
        with self.assertRaises(DimensionMismatchError):
            brute_force_equiv(victim(3, 2, 1, 0), victim(4, 2, 1, 0))
        with self.assertRaises(DimensionMismatchError):
            brute_force_equiv(victim(3, 2, 1, 0), victim(3, 2, 2, 0))

    def test_corner_bit_order(self):
        rows = corners(3, 0, 8)
        self.assertEqual(rows.shape, (8, 3))
        np.testing.assert_array_equal(rows[5], [1.0, 0.0, 1.0])
        np.testing.assert_array_equal(rows[6], [0.0, 1.0, 1.0])


if __name__ == "__main__":
    unittest.main()
