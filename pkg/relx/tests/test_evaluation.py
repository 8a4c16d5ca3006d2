"""
# Run the fidelity, precision and transfer tests
pytest relx/tests/test_evaluation.py -v
"""

import unittest

import numpy as np

from relx.core.errors import DimensionMismatchError
from relx.core.evaluation import (
    align,
    align_and_precision,
    fidelity,
    logit_gap_bits,
    max_logit_gap,
    pgd_attack,
    predict_labels,
    transfer_rate,
    transfer_stats,
    uniform_inputs,
    weight_bits,
)
from relx.core.extraction import extract
from relx.core.models import AttackConfig, ExtractionConfig, Phase, TwoLayerNet
from relx.core.network import add_dead_neuron, permute_neurons, scale_neuron
from relx.tests.helpers import local_oracle, victim


def diagonal_net():
    """Label is argmax(x0, x1) on the positive quadrant."""
    return TwoLayerNet(a0=np.eye(2), b0=np.zeros(2), a1=np.eye(2), b1=np.zeros(2))


class TestFidelity(unittest.TestCase):
    def test_self_fidelity(self):
        net = victim(5, 4, 3, 0)
        self.assertEqual(fidelity(net, net, n=500), 1.0)

    def test_oracle_model_charges_eval(self):
        net = victim(5, 4, 3, 0)
        oracle = local_oracle(net)
        self.assertEqual(fidelity(net, oracle, n=50, seed=1), 1.0)
        self.assertEqual(oracle.ledger.count(Phase.EVAL), 50)

    def test_explicit_inputs(self):
        net = diagonal_net()
        flipped = net.replace(a1=np.array([[0.0, 1.0], [1.0, 0.0]]))
        inputs = np.array([[0.9, 0.1], [0.2, 0.7], [0.6, 0.3]])
        self.assertEqual(fidelity(net, flipped, inputs=inputs), 0.0)
        with self.assertRaises(ValueError):
            fidelity(net, net, inputs=np.zeros((0, 2)))

    def test_ties_go_to_lowest_class(self):
        net = diagonal_net()
        self.assertEqual(predict_labels(net, np.array([[0.5, 0.5]])).tolist(), [0])

    def test_max_logit_gap(self):
        net = victim(3, 2, 2, 1)
        xs = np.random.default_rng(0).uniform(size=(20, 3))
        self.assertEqual(max_logit_gap(net, net, xs), 0.0)

    def test_logit_gap_uses_batch_scale(self):
        net = TwoLayerNet(a0=[[1.0]], b0=[0.0], a1=[[1.0]], b1=[0.0])
        shifted = net.replace(b1=np.array([1e-9]))
        xs = np.array([[1.0], [1e-6]])
        self.assertAlmostEqual(max_logit_gap(net, shifted, xs), 1e-9, delta=1e-15)


class TestAlignment(unittest.TestCase):
    def setUp(self):
        self.net = victim(6, 3, 2, 3)

    def test_permuted_scaled_copy(self):
        extracted = permute_neurons(scale_neuron(self.net, 0, 2.0), [2, 0, 1])
        result = align(self.net, extracted)
        self.assertEqual(result.unmatched, 0)
        self.assertEqual(result.permutation, [1, 2, 0])
        self.assertAlmostEqual(result.scales[0], 2.0, delta=1e-12)
        self.assertEqual(result.signs, [1, 1, 1])
        np.testing.assert_allclose(result.cosines, 1.0, atol=1e-12)

    def test_negated_row(self):
        a0 = self.net.a0.copy()
        b0 = self.net.b0.copy()
        a0[1] *= -1
        b0[1] *= -1
        result = align(self.net, self.net.replace(a0=a0, b0=b0))
        self.assertEqual(result.signs[1], -1)

    def test_extra_dead_neuron_is_left_over(self):
        extracted = add_dead_neuron(self.net, -np.ones(6), -1.0)
        result = align(self.net, extracted)
        self.assertEqual(result.unmatched, 0)
        self.assertNotIn(extracted.h - 1, result.permutation)

    def test_missing_neuron_is_unmatched(self):
        smaller = TwoLayerNet(
            a0=self.net.a0[:2], b0=self.net.b0[:2], a1=self.net.a1[:, :2], b1=self.net.b1
        )
        result = align(self.net, smaller)
        self.assertEqual(result.unmatched, 1)
        self.assertIsNone(result.permutation[2])

    def test_shape_mismatch(self):
        with self.assertRaises(DimensionMismatchError):
            align(self.net, victim(5, 3, 2, 3))


class TestPrecision(unittest.TestCase):
    def test_identical_nets_hit_the_ceiling(self):
        net = victim(6, 3, 2, 4)
        bits = weight_bits(net, net, align(net, net))
        self.assertEqual(bits.size, 3 * 7)
        self.assertTrue(np.all(bits == 52.0))
        self.assertTrue(np.all(logit_gap_bits(net, net, n=100) == 52.0))

    def test_small_error_costs_bits(self):
        net = victim(6, 3, 2, 4)
        a0 = net.a0.copy()
        a0[0, 0] *= 1.0 + 2.0**-20
        report = align_and_precision(net, net.replace(a0=a0), n_logit=100)
        self.assertLess(report.mean_bits, 52.0)
        self.assertEqual(len(report.bits_histogram), 53)
        self.assertEqual(sum(report.bits_histogram), 3 * 7)


class TestAdversarial(unittest.TestCase):
    def setUp(self):
        self.net = diagonal_net()
        self.points = np.random.default_rng(0).uniform(0.05, 0.95, size=(40, 2))

    def test_stays_in_ball_and_box(self):
        cfg = AttackConfig(epsilon=0.2, iterations=10)
        for x in self.points[:10]:
            adv = pgd_attack(self.net, x, int(np.argmax(x)), cfg)
            self.assertLessEqual(np.max(np.abs(adv - x)), 0.2 + 1e-12)
            self.assertTrue(np.all((adv >= 0.0) & (adv <= 1.0)))

    def test_zero_epsilon_is_a_copy(self):
        x = self.points[0]
        adv = pgd_attack(self.net, x, 0, AttackConfig(epsilon=0.0))
        np.testing.assert_array_equal(adv, x)
        self.assertIsNot(adv, x)

    def test_transfer_to_itself(self):
        stats = transfer_stats(self.net, self.net, self.points, AttackConfig(epsilon=0.5))
        self.assertGreater(stats.source_successful, 0)
        self.assertEqual(stats.rate, 1.0)

    def test_no_successes_gives_zero_rate(self):
        stats = transfer_stats(self.net, self.net, self.points, AttackConfig(iterations=0))
        self.assertEqual(stats.source_successful, 0)
        self.assertEqual(stats.rate, 0.0)
        self.assertEqual(stats.attempted, 40)

    def test_oracle_target(self):
        oracle = local_oracle(self.net)
        stats = transfer_stats(self.net, oracle, self.points, AttackConfig(epsilon=0.5))
        self.assertEqual(stats.rate, 1.0)
        self.assertGreater(oracle.ledger.count(Phase.EVAL), 0)


if __name__ == "__main__":
    unittest.main()


class TestExtractedVictim(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.victim = victim(32, 16, 10, 6)
        cls.extracted = extract(local_oracle(cls.victim), 32, 16, ExtractionConfig(seed=0)).net

    def test_adversarial_examples_transfer(self):
        points = uniform_inputs(32, 2000, 11)
        stats = transfer_stats(self.extracted, self.victim, points, AttackConfig(iterations=20))
        self.assertGreaterEqual(stats.source_successful, 500)
        self.assertEqual(stats.transferred, stats.source_successful)
        self.assertEqual(stats.rate, 1.0)

    def test_transfer_rate_against_oracle(self):
        oracle = local_oracle(self.victim)
        points = uniform_inputs(32, 200, 12)
        self.assertEqual(transfer_rate(self.extracted, oracle, points), 1.0)
        self.assertGreater(oracle.ledger.count(Phase.EVAL), 0)
