from unittest import skipUnless

import numpy as np
from django.conf import settings
from django.test import SimpleTestCase, tag

from ddlk.autoregressive import fit_joint, knockoff_levels, knockoffs_from_levels, model_log_prob, sample_knockoffs
from ddlk.diagnostics import conditional_entropy_estimate, swap_auc_probe
from ddlk.exceptions import InvalidInput, TrainingDiverged
from ddlk.mdn import ConditionalDensityNetwork
from ddlk.optim import AdamState, EarlyStopping
from ddlk.swap import SwapIndicator, empty_swap, full_swap, swap_probabilities
from ddlk.tests.helpers import ar_gaussian, constant_model, random_model, small_config
from ddlk.trainer import TrainConfig, adam_step, ddlk_objective_batch, fit_knockoff, validation_objective


class AdamTests(SimpleTestCase):

    def test_zero_gradient_leaves_parameters(self):
        params = np.array([1.0, -2.0])
        moved, state = adam_step(params, np.zeros(2), AdamState.zeros(2), 0.1)
        np.testing.assert_array_equal(moved, params)
        self.assertEqual(state.t, 1)

    def test_first_step_moves_by_the_learning_rate(self):
        moved, _ = adam_step(np.array([0.0, 0.0]), np.array([3.0, -0.01]), AdamState.zeros(2), 0.01)
        np.testing.assert_allclose(moved, [-0.01, 0.01], rtol=1e-5)

    def test_minimizes_a_quadratic(self):
        w, state = np.array([0.0]), AdamState.zeros(1)
        for _ in range(200):
            w, state = adam_step(w, 2 * (w - 3.0), state, 0.1)
        self.assertAlmostEqual(float(w[0]), 3.0, delta=0.05)

    def test_shape_mismatch(self):
        with self.assertRaises(ValueError):
            adam_step(np.zeros(2), np.zeros(3), AdamState.zeros(2), 0.1)


class EarlyStoppingTests(SimpleTestCase):

    def test_stops_after_patience_epochs_without_improvement(self):
        stopper = EarlyStopping(patience=2)
        self.assertTrue(stopper(1.0))
        self.assertFalse(stopper(1.5))
        self.assertFalse(stopper.early_stop)
        self.assertFalse(stopper(1.0))
        self.assertTrue(stopper.early_stop)
        self.assertEqual(stopper.best_loss, 1.0)


class TrainConfigTests(SimpleTestCase):

    def test_defaults(self):
        config = TrainConfig()
        self.assertEqual((config.lam, config.temperature, config.batch_size), (0.1, 0.5, 64))

    def test_from_dict_accepts_lambda_and_skips_unknown_keys(self):
        config = TrainConfig.from_dict({'lambda': 0.3, 'seed': None, 'colour': 'blue', 'batch_size': 32})
        self.assertEqual(config.lam, 0.3)
        self.assertEqual(config.seed, 0)
        self.assertEqual(config.batch_size, 32)
        self.assertEqual(config.to_dict()['lambda'], 0.3)
        self.assertNotIn('lam', config.to_dict())

    def test_rejects_bad_values(self):
        for values in ({'lam': -0.1}, {'lr_phi': 0.0}, {'batch_size': 0}, {'val_fraction': 1.0}, {'temperature': -1.0}):
            with self.subTest(values=values), self.assertRaises(InvalidInput):
                TrainConfig(**values)


class ObjectiveBatchTests(SimpleTestCase):

    def setUp(self):
        rng = np.random.default_rng(0)
        self.theta = random_model(2, 0, rng)
        self.phi = random_model(2, 2, rng)
        self.x = rng.standard_normal((3, 2))

    def swapped_objective(self, phi, x, xt, soft, lam):
        """A - B with the swap relaxed to u = x + s (xt - x)"""
        u = x + soft * (xt - x)
        ut = xt + soft * (x - xt)
        A = np.mean(model_log_prob(self.theta, None, x) + (1.0 + lam) * model_log_prob(phi, x, xt))
        B = np.mean(model_log_prob(self.theta, None, u) + model_log_prob(phi, u, ut))
        return float(A - B)

    def test_empty_swap_without_entropy_is_zero(self):
        report, _, _ = ddlk_objective_batch(self.theta, self.phi, self.x, empty_swap(2), 0.0, np.random.default_rng(1))
        self.assertEqual(report.objective, 0.0)
        self.assertEqual(report.A, report.B)

    def test_exchangeable_pair_scores_zero(self):
        theta = constant_model(2, 0, [0.0, 0.0], [1.0, 1.0])
        phi = constant_model(2, 2, [0.0, 0.0], [1.0, 1.0])
        x = np.random.default_rng(2).standard_normal((10_000, 2))
        for H in (full_swap(2), SwapIndicator([True, False])):
            report, _, _ = ddlk_objective_batch(theta, phi, x, H, 0.0, np.random.default_rng(3))
            self.assertAlmostEqual(report.objective, 0.0, delta=0.05)

    def test_entropy_term_scales_the_knockoff_likelihood(self):
        lam = 0.4
        report, _, _ = ddlk_objective_batch(self.theta, self.phi, self.x, empty_swap(2), lam, np.random.default_rng(4))
        xt, _ = sample_knockoffs(self.phi, self.x, np.random.default_rng(4))
        expected = lam * np.mean(model_log_prob(self.phi, self.x, xt))
        self.assertAlmostEqual(report.objective, float(expected), places=10)

    def test_knockoff_gradients_match_common_random_numbers(self):
        lam, H = 0.2, SwapIndicator([True, False])
        report, grads_phi, _ = ddlk_objective_batch(self.theta, self.phi, self.x, H, lam, np.random.default_rng(5))
        xt, _ = sample_knockoffs(self.phi, self.x, np.random.default_rng(5))
        levels = knockoff_levels(self.phi, self.x, xt)
        soft = H.bits.astype(float)

        def objective_at(j, params):
            phi = self.phi.copy()
            net = phi.conditionals[j]
            phi.conditionals[j] = ConditionalDensityNetwork(net.input_dim, net.n_components, net.hidden_units, params)
            return self.swapped_objective(phi, self.x, knockoffs_from_levels(phi, self.x, levels), soft, lam)

        self.assertAlmostEqual(report.objective, self.swapped_objective(self.phi, self.x, xt, soft, lam), places=8)
        rng = np.random.default_rng(6)
        h = 1e-6
        for j, net in enumerate(self.phi.conditionals):
            for i in rng.choice(net.n_parameters, size=20, replace=False):
                step = np.zeros(net.n_parameters)
                step[i] = h
                numeric = (objective_at(j, net.params + step) - objective_at(j, net.params - step)) / (2 * h)
                analytic = float(grads_phi[j][i])
                self.assertAlmostEqual(numeric, analytic, delta=1e-3 * max(abs(analytic), 1e-2), msg=f'conditional {j}[{i}]')

    def test_swap_gradient_is_the_relaxed_derivative(self):
        H = SwapIndicator([False, True])
        _, _, grad_soft = ddlk_objective_batch(self.theta, self.phi, self.x, H, 0.1, np.random.default_rng(7))
        xt, _ = sample_knockoffs(self.phi, self.x, np.random.default_rng(7))
        h = 1e-6
        for j in range(2):
            step = np.zeros(2)
            step[j] = h
            soft = H.bits.astype(float)
            numeric = (
                self.swapped_objective(self.phi, self.x, xt, soft + step, 0.1)
                - self.swapped_objective(self.phi, self.x, xt, soft - step, 0.1)
            ) / (2 * h)
            self.assertAlmostEqual(numeric, float(grad_soft[j]), delta=1e-4 * max(1.0, abs(grad_soft[j])))


class ValidationObjectiveTests(SimpleTestCase):

    def test_common_random_numbers_make_it_repeatable(self):
        rng = np.random.default_rng(8)
        theta, phi = random_model(2, 0, rng), random_model(2, 2, rng)
        data = rng.standard_normal((50, 2))
        panel = [full_swap(2), SwapIndicator([True, False])]
        first = validation_objective(theta, phi, data, panel, np.random.default_rng(9))
        second = validation_objective(theta, phi, data, panel, np.random.default_rng(9))
        self.assertEqual(first, second)


class FitKnockoffTests(SimpleTestCase):

    def setUp(self):
        rng = np.random.default_rng(10)
        self.train = ar_gaussian(400, 2, 0.5, rng)
        self.val = ar_gaussian(100, 2, 0.5, rng)
        self.theta = constant_model(2, 0, [0.0, 0.0], [1.0, 1.0])

    def test_history_is_deterministic_and_joint_is_frozen(self):
        config = small_config(max_epochs_knockoff=3)
        before = [net.params.copy() for net in self.theta.conditionals]
        runs = [fit_knockoff(self.theta, self.train, self.val, config, np.random.default_rng(11)) for _ in range(2)]
        self.assertEqual([r.to_dict() for r in runs[0][2]], [r.to_dict() for r in runs[1][2]])
        np.testing.assert_array_equal(runs[0][1].logits, runs[1][1].logits)
        for params, net in zip(before, self.theta.conditionals):
            np.testing.assert_array_equal(params, net.params)

    def test_history_starts_with_the_untrained_model(self):
        phi, _, history = fit_knockoff(self.theta, self.train, self.val, small_config(max_epochs_knockoff=2), np.random.default_rng(12))
        self.assertEqual(history[0].epoch, 0)
        self.assertEqual([r.epoch for r in history], list(range(len(history))))
        self.assertTrue(all(np.isfinite(r.validation) for r in history))
        self.assertEqual(phi.history, [r.to_dict() for r in history])
        self.assertEqual(phi.kind, 'knockoff')

    def test_shape_checks(self):
        with self.assertRaises(InvalidInput):
            fit_knockoff(self.theta, np.zeros((10, 3)), np.zeros((5, 3)), small_config(), np.random.default_rng(0))
        with self.assertRaises(InvalidInput):
            fit_knockoff(random_model(2, 2, np.random.default_rng(0)), self.train, self.val, small_config(), np.random.default_rng(0))

    def test_adversary_learns_to_swap_the_wrong_coordinate(self):
        x = np.random.default_rng(13).standard_normal((2_000, 2))
        # knockoff for feature 0 is centred at 3, feature 1 is exact
        phi = constant_model(2, 2, [3.0, 0.0], [1.0, 1.0])
        config = small_config(lam=0.0, max_epochs_knockoff=10, lr_beta=0.05)
        frozen, sampler, history = fit_knockoff(
            self.theta, x[:1_700], x[1_700:], config, np.random.default_rng(14), phi_model=phi, update_phi=False,
        )
        self.assertEqual(len(history), 11)
        probabilities = swap_probabilities(sampler)
        self.assertGreater(probabilities[0], 0.9)
        for original, kept in zip(phi.conditionals, frozen.conditionals):
            np.testing.assert_array_equal(original.params, kept.params)

    def test_runaway_objective_is_reported(self):
        theta = constant_model(1, 0, [0.0], [1.0])
        phi = constant_model(1, 1, [1e4], [1.0])
        x = np.random.default_rng(15).standard_normal((640, 1))
        with self.assertRaises(TrainingDiverged) as caught:
            fit_knockoff(theta, x[:512], x[512:], small_config(lam=0.0), np.random.default_rng(16), phi_model=phi)
        self.assertGreaterEqual(caught.exception.epoch, 1)
        self.assertEqual(caught.exception.history[0].epoch, 0)

    @tag('slow')
    @skipUnless(settings.KNOCKOFF_FORGE_SLOW_TESTS, 'set KNOCKOFF_FORGE_SLOW_TESTS to run')
    def test_training_improves_validation_and_fools_a_classifier(self):
        config = small_config(max_epochs_joint=50, max_epochs_knockoff=100, patience=10)
        for seed in range(3):
            with self.subTest(seed=seed):
                rng = np.random.default_rng(100 + seed)
                data = ar_gaussian(6_000, 5, 0.6, rng)
                train, val, test = data[:4_000], data[4_000:5_000], data[5_000:]
                theta = fit_joint(train, val, config, np.random.default_rng(seed))
                phi, _, history = fit_knockoff(theta, train, val, config, np.random.default_rng(10 + seed))
                self.assertGreater(history[0].validation, 0.0)
                self.assertLessEqual(history[-1].validation, 0.2 * history[0].validation)
                xt, _ = sample_knockoffs(phi, test, np.random.default_rng(20 + seed))
                self.assertLessEqual(swap_auc_probe(test, xt, seed=seed), 0.60)

    @tag('slow')
    @skipUnless(settings.KNOCKOFF_FORGE_SLOW_TESTS, 'set KNOCKOFF_FORGE_SLOW_TESTS to run')
    def test_entropy_weight_raises_knockoff_entropy(self):
        rng = np.random.default_rng(18)
        data = ar_gaussian(4_000, 5, 0.6, rng)
        train, val, test = data[:3_000], data[3_000:3_500], data[3_500:]
        theta = fit_joint(train, val, small_config(max_epochs_joint=40), np.random.default_rng(0))
        entropies = []
        for lam in (0.001, 10.0):
            phi, _, _ = fit_knockoff(theta, train, val, small_config(lam=lam, max_epochs_knockoff=60), np.random.default_rng(1))
            entropies.append(conditional_entropy_estimate(phi, test, np.random.default_rng(2)))
        self.assertGreater(entropies[1], entropies[0])
