"""
# Run the hybrid refinement tests
pytest relx/tests/test_hybrid.py -v
"""

import unittest

import numpy as np
from pydantic import ValidationError

from relx.core.errors import DimensionMismatchError
from relx.core.evaluation import fidelity, uniform_inputs
from relx.core.extraction import extract
from relx.core.hybrid import (
    RefinementParams,
    gradient,
    hyperplane_foot,
    inject_weight_error,
    objective,
    refine,
)
from relx.core.models import Phase, RefinementConfig
from relx.core.network import forward_batch
from relx.tests.helpers import local_oracle, victim


class TestInjectWeightError(unittest.TestCase):
    def setUp(self):
        self.net = victim(5, 3, 2, 11)

    def test_zero_magnitude_is_identity(self):
        self.assertIs(inject_weight_error(self.net, 0, 0, 0.0), self.net)

    def test_only_one_entry_changes(self):
        bad = inject_weight_error(self.net, 1, 2, 0.25)
        diff = bad.a0 - self.net.a0
        self.assertAlmostEqual(diff[1, 2], 0.25, delta=1e-15)
        diff[1, 2] = 0.0
        self.assertFalse(np.any(diff))
        np.testing.assert_array_equal(bad.a1, self.net.a1)

    def test_witness_stays_on_hyperplane(self):
        witness = hyperplane_foot(self.net, 1)
        bad = inject_weight_error(self.net, 1, 2, 0.25, witness=witness)
        self.assertAlmostEqual(float(bad.a0[1] @ witness + bad.b0[1]), 0.0, delta=1e-12)

    def test_bad_indices(self):
        with self.assertRaises(IndexError):
            inject_weight_error(self.net, 3, 0, 0.1)
        with self.assertRaises(IndexError):
            inject_weight_error(self.net, 0, 5, 0.1)
        with self.assertRaises(DimensionMismatchError):
            inject_weight_error(self.net, 0, 0, 0.1, witness=np.zeros(2))


class TestObjective(unittest.TestCase):
    def setUp(self):
        self.net = victim(4, 3, 2, 12)
        rng = np.random.default_rng(0)
        self.xs = rng.uniform(size=(64, 4))
        self.ys = rng.normal(size=(64, 2))

    def test_vector_and_scalar_bias(self):
        self.assertEqual(RefinementParams.from_net(self.net).w0.shape, (3,))
        params = RefinementParams.from_net(self.net, scalar_bias=True)
        self.assertEqual(params.w0.shape, (1,))
        self.assertTrue(params.to_net(self.net).bitwise_equal(self.net))

    def test_zero_at_the_true_logits(self):
        params = RefinementParams.from_net(self.net)
        ys = forward_batch(self.net, self.xs)
        self.assertAlmostEqual(objective(self.net, params, self.xs, ys), 0.0, delta=1e-24)

    def test_gradient_matches_finite_differences(self):
        for scalar_bias in (False, True):
            params = RefinementParams.from_net(self.net, scalar_bias)
            params = params.step(
                RefinementParams(
                    w0=np.full_like(params.w0, -0.01),
                    w1=np.zeros_like(params.w1),
                    w2=np.zeros_like(params.w2),
                ),
                1.0,
            )
            grads = gradient(self.net, params, self.xs, self.ys)
            h = 1e-6
            data = (self.xs, self.ys)
            for name in ("w0", "w1", "w2"):
                analytic = getattr(grads, name)
                base = getattr(params, name)
                numeric = np.zeros_like(base)
                for idx in np.ndindex(base.shape):
                    plus, minus = base.copy(), base.copy()
                    plus[idx] += h
                    minus[idx] -= h
                    f_plus = objective(self.net, params.model_copy(update={name: plus}), *data)
                    f_minus = objective(self.net, params.model_copy(update={name: minus}), *data)
                    numeric[idx] = (f_plus - f_minus) / (2 * h)
                np.testing.assert_allclose(analytic, numeric, rtol=1e-5, atol=1e-7)


class TestRefine(unittest.TestCase):
    def setUp(self):
        self.victim = victim(6, 4, 3, 13)
        self.cfg = RefinementConfig(dataset_size=512, iterations=400, seed=1)

    def test_exact_net_stays_exact(self):
        oracle = local_oracle(self.victim)
        result = refine(self.victim, oracle, self.cfg)
        self.assertAlmostEqual(result.initial_objective, 0.0, delta=1e-24)
        self.assertLessEqual(result.final_objective, result.initial_objective)
        self.assertEqual(oracle.ledger.count(Phase.OTHER), 512)

    def test_scalar_bias_variant(self):
        bad = inject_weight_error(self.victim, 2, 0, -0.1)
        cfg = self.cfg.model_copy(update={"scalar_bias": True})
        result = refine(bad, local_oracle(self.victim), cfg)
        self.assertLessEqual(result.final_objective, result.initial_objective)
        shift = result.net.b0 - bad.b0
        np.testing.assert_allclose(shift, shift[0])

    def test_minibatch(self):
        bad = inject_weight_error(self.victim, 1, 3, 0.1)
        cfg = self.cfg.model_copy(update={"batch_size": 64})
        result = refine(bad, local_oracle(self.victim), cfg)
        self.assertLessEqual(result.final_objective, result.initial_objective)

    def test_output_width_checked(self):
        other = victim(6, 4, 2, 13)
        with self.assertRaises(DimensionMismatchError):
            refine(self.victim, local_oracle(other), self.cfg)

    def test_config_validation(self):
        with self.assertRaises(ValidationError):
            RefinementConfig(learning_rate=0)
        with self.assertRaises(ValidationError):
            RefinementConfig(low=1.0, high=0.0)


class TestRefineExtracted(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.victim = victim(32, 32, 10, 0)
        cls.extracted = extract(local_oracle(cls.victim), 32, 32).net
        cls.inputs = uniform_inputs(32, 10000, 7)

    def corrupted(self, magnitude: float):
        # the neuron with the heaviest outgoing weights moves the logits most
        neuron = int(np.argmax(np.linalg.norm(self.extracted.a1, axis=0)))
        return inject_weight_error(self.extracted, neuron, 3, magnitude)

    def test_extracted_net_matches_before_corruption(self):
        self.assertGreaterEqual(fidelity(self.extracted, self.victim, inputs=self.inputs), 0.999)

    def test_restores_fidelity_after_injected_error(self):
        bad = self.corrupted(0.5)
        self.assertLess(fidelity(bad, self.victim, inputs=self.inputs), 0.995)
        result = refine(bad, local_oracle(self.victim), RefinementConfig(seed=3))
        self.assertLess(result.final_objective, 0.5 * result.initial_objective)
        self.assertGreaterEqual(fidelity(result.net, self.victim, inputs=self.inputs), 0.99)
        np.testing.assert_array_equal(result.net.a0, bad.a0)

    def test_divergent_learning_rate_is_backed_off(self):
        bad = self.corrupted(0.5)
        cfg = RefinementConfig(seed=3, learning_rate=50.0, iterations=100)
        result = refine(bad, local_oracle(self.victim), cfg)
        self.assertGreater(result.restarts, 0)
        self.assertLess(result.final_objective, result.initial_objective)


if __name__ == "__main__":
    unittest.main()
