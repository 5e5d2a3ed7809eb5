"""Forward simulation: determinism, distributional checks, pyramid links."""

import numpy as np
import pytest
from scipy import stats

from sglcm.core import (
    GraphicalMatrix,
    TwoLayerParams,
    attribute_distribution,
    binary_patterns,
    pattern_index,
    two_layer_conditional,
)
from sglcm.identify import check_multilayer, check_two_layer
from sglcm.simulate import (
    BooleanLayer,
    MainEffectLayer,
    MultinomialLayer,
    reference_truth,
    simulate_pyramid,
    simulate_two_layer,
)


class TestReferenceTruth:
    def test_dimensions(self):
        truth = reference_truth()
        assert truth.p == 20 and truth.d == 4 and truth.K1 == 4 and truth.B == 2

    def test_row_13_pattern(self):
        truth = reference_truth()
        assert truth.graph.entries[12].tolist() == [1, 1, 0, 0]

    def test_single_parent_weight(self):
        truth = reference_truth()
        assert truth.beta[0, 0, 0] == 3.0  # row 1: single parent
        assert truth.beta[12, 0, 0] == 2.0  # row 13: two parents

    def test_intercepts(self):
        truth = reference_truth()
        assert truth.beta0[0].tolist() == [-3.0, -2.0, -1.0]

    def test_identifiability(self):
        truth = reference_truth()
        assert check_multilayer([truth.graph]).status == "strict"
        assert check_two_layer(truth.graph, B=2, beta=truth.beta).status == "strict"

    def test_deep_defaults_flagged(self):
        assert reference_truth().meta["deep_params_source"] == "package_default"


class TestTwoLayerSimulation:
    def test_seed_determinism(self):
        truth = reference_truth()
        a = simulate_two_layer(truth, n=100, seed=42)
        b = simulate_two_layer(truth, n=100, seed=42)
        assert np.array_equal(a.dataset.values, b.dataset.values)
        assert np.array_equal(a.latents_alpha, b.latents_alpha)
        assert np.array_equal(a.latents_z, b.latents_z)
        c = simulate_two_layer(truth, n=100, seed=43)
        assert not np.array_equal(a.dataset.values, c.dataset.values)

    def test_prefix_stability(self):
        # per-subject streams: the first rows do not depend on n
        truth = reference_truth()
        a = simulate_two_layer(truth, n=20, seed=9)
        b = simulate_two_layer(truth, n=60, seed=9)
        assert np.array_equal(a.dataset.values, b.dataset.values[:20])

    def test_degenerate_traits_match_conditional(self):
        # deep class 1 almost surely, traits on almost surely
        g = GraphicalMatrix(np.ones((3, 2), dtype=np.int8))
        truth = TwoLayerParams(
            graph=g,
            beta0=np.tile([[0.5, -0.5]], (3, 1)),
            beta=np.full((3, 2, 2), 1.5),
            tau=np.array([1.0]),
            eta=np.full((2, 1), 1.0 - 1e-12),
        )
        sim = simulate_two_layer(truth, n=100_000, seed=1)
        assert sim.latents_alpha.all()
        ones = np.ones(2)
        for j in range(3):
            want = two_layer_conditional(truth, j, ones)
            for c in range(3):
                freq = (sim.dataset.values[:, j] == c + 1).mean()
                se = np.sqrt(want[c] * (1 - want[c]) / 100_000)
                assert abs(freq - want[c]) <= 3 * se + 1e-9

    def test_zero_effects_uniform(self):
        import warnings

        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            g = GraphicalMatrix(np.zeros((2, 1), dtype=np.int8))
        truth = TwoLayerParams(
            graph=g,
            beta0=np.zeros((2, 2)),
            beta=np.zeros((2, 2, 1)),
            tau=np.array([1.0]),
            eta=np.array([[0.5]]),
        )
        sim = simulate_two_layer(truth, n=60_000, seed=2)
        for j in range(2):
            for c in (1, 2, 3):
                freq = (sim.dataset.values[:, j] == c).mean()
                assert abs(freq - 1 / 3) < 3 * np.sqrt((1 / 3) * (2 / 3) / 60_000)

    def test_joint_alpha_y_distribution_chisquare(self):
        # joint cell counts of (alpha pattern, y pattern) vs model probabilities
        rng = np.random.default_rng(3)
        K1, p, d, n = 2, 3, 2, 100_000
        g = (rng.random((p, K1)) < 0.8).astype(np.int8)
        g[0] = 1
        truth = TwoLayerParams(
            graph=GraphicalMatrix(g),
            beta0=rng.normal(0, 0.5, size=(p, d - 1)),
            beta=np.where(g[:, None, :] == 1, 1.0 + rng.random((p, d - 1, K1)), 0.0),
            tau=np.array([0.4, 0.6]),
            eta=np.array([[0.2, 0.7], [0.8, 0.3]]),
        )
        sim = simulate_two_layer(truth, n=n, seed=4)
        pats = binary_patterns(K1)
        alpha_probs = attribute_distribution(truth.tau, truth.eta)
        alpha_idx = np.array([pattern_index(a) for a in sim.latents_alpha])
        n_y = d ** p
        y_idx = np.zeros(n, dtype=np.int64)
        for j in range(p):
            y_idx = y_idx * d + (sim.dataset.values[:, j] - 1)
        cell = alpha_idx * n_y + y_idx
        counts = np.bincount(cell, minlength=len(pats) * n_y)
        expected = np.zeros(len(pats) * n_y)
        for ai, a in enumerate(pats):
            cond = [two_layer_conditional(truth, j, a) for j in range(p)]
            for yi in range(n_y):
                prob = alpha_probs[ai]
                rest = yi
                for j in range(p - 1, -1, -1):
                    prob *= cond[j][rest % d]
                    rest //= d
                expected[ai * n_y + yi] = prob
        expected *= n
        keep = expected > 5
        res = stats.chisquare(counts[keep], expected[keep] * counts[keep].sum() / expected[keep].sum())
        assert res.pvalue > 0.001


class TestPyramid:
    def test_two_layer_specialization_exact(self):
        truth = reference_truth()
        direct = simulate_two_layer(truth, n=200, seed=8)
        via_pyramid = simulate_pyramid(
            [truth.graph],
            [MultinomialLayer(beta0=truth.beta0, beta=truth.beta)],
            deep_tau=truth.tau,
            deep_eta=truth.eta,
            n=200,
            seed=8,
        )
        assert np.array_equal(direct.dataset.values, via_pyramid.dataset.values)
        assert np.array_equal(direct.latents_alpha, via_pyramid.latents_alpha[0])
        assert np.array_equal(direct.latents_z, via_pyramid.latents_z)

    def _three_layer_setup(self):
        I2 = np.eye(2, dtype=np.int8)
        g2 = np.vstack([I2, I2])  # K1=4 children of K2=2 parents
        truth = reference_truth()
        bottom = MultinomialLayer(beta0=truth.beta0, beta=truth.beta)
        return truth, g2

    def test_boolean_layer_noiseless(self):
        truth, g2 = self._three_layer_setup()
        boolean = BooleanLayer(theta0=np.zeros(4), theta1=np.ones(4))
        out = simulate_pyramid(
            [truth.graph, GraphicalMatrix(g2)],
            [MultinomialLayer(beta0=truth.beta0, beta=truth.beta), boolean],
            deep_tau=np.array([0.5, 0.5]),
            deep_eta=np.array([[0.9, 0.1], [0.1, 0.9]]),
            n=500,
            seed=5,
        )
        alpha1, alpha2 = out.latents_alpha
        want = (alpha2 @ g2.T > 0).astype(np.int8)
        assert np.array_equal(alpha1, want)

    def test_main_effect_layer_matches_link(self):
        truth, g2 = self._three_layer_setup()
        beta0 = np.array([0.3, -0.6, 1.0, 0.0])
        layer = MainEffectLayer(beta0=beta0, beta=np.zeros((4, 2)))
        out = simulate_pyramid(
            [truth.graph, GraphicalMatrix(g2)],
            [MultinomialLayer(beta0=truth.beta0, beta=truth.beta), layer],
            deep_tau=np.array([0.5, 0.5]),
            deep_eta=np.array([[0.9, 0.1], [0.1, 0.9]]),
            n=60_000,
            seed=6,
        )
        alpha1, alpha2 = out.latents_alpha
        want = 1.0 / (1.0 + np.exp(-beta0))
        freq = alpha1.mean(axis=0)
        se = np.sqrt(want * (1 - want) / 60_000)
        assert (np.abs(freq - want) < 4 * se).all()
        # no parent effect: child independent of parents
        for k in range(4):
            for k2 in range(2):
                r = np.corrcoef(alpha1[:, k], alpha2[:, k2])[0, 1]
                assert abs(r) < 0.02

    def test_dimension_chain_validated(self):
        truth = reference_truth()
        with pytest.raises(Exception):
            simulate_pyramid(
                [truth.graph, GraphicalMatrix(np.eye(3, dtype=np.int8))],
                [MultinomialLayer(beta0=truth.beta0, beta=truth.beta),
                 BooleanLayer(theta0=np.zeros(3), theta1=np.ones(3))],
                deep_tau=np.array([1.0]),
                deep_eta=np.full((3, 1), 0.5),
                n=10,
                seed=0,
            )
