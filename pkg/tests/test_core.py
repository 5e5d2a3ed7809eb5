"""Core types and deterministic probability evaluations."""

import numpy as np
import pytest

from sglcm.core import (
    ConstraintMatrix,
    Dataset,
    GraphicalMatrix,
    LcmParams,
    TwoLayerParams,
    attribute_distribution,
    binary_patterns,
    constraint_matrix_from_graph,
    lcm_cell_probability,
    marginal_y_probability,
    pattern_index,
    two_layer_conditional,
    two_layer_to_lcm,
)
from sglcm.errors import CapacityError, InputError
from sglcm.simulate import reference_truth

EXAMPLE_GRAPH = np.array(
    [
        [1, 0, 0],
        [0, 1, 0],
        [0, 0, 1],
        [1, 1, 0],
        [1, 0, 1],
        [0, 1, 1],
    ],
    dtype=np.int8,
)

# Known 6x8 constraint matrix for EXAMPLE_GRAPH, keyed by column label.
EXAMPLE_S_BY_LABEL = {
    (0, 0, 0): (1, 1, 1, 1, 1, 1),
    (1, 0, 0): (0, 1, 1, 1, 1, 1),
    (0, 1, 0): (1, 0, 1, 1, 1, 1),
    (0, 0, 1): (1, 1, 0, 1, 1, 1),
    (1, 1, 0): (0, 0, 1, 0, 1, 1),
    (1, 0, 1): (0, 1, 0, 1, 0, 1),
    (0, 1, 1): (1, 0, 0, 1, 1, 0),
    (1, 1, 1): (0, 0, 0, 0, 0, 0),
}


def small_lcm(nu, columns_per_var, S):
    lambdas = tuple(np.asarray(L, dtype=float) for L in columns_per_var)
    return LcmParams(nu=np.asarray(nu, float), lambdas=lambdas, constraint=ConstraintMatrix(S))


class TestPatterns:
    def test_canonical_order(self):
        pats = binary_patterns(2)
        assert pats.tolist() == [[0, 0], [0, 1], [1, 0], [1, 1]]

    def test_pattern_index_roundtrip(self):
        pats = binary_patterns(4)
        for i, row in enumerate(pats):
            assert pattern_index(row) == i

    def test_cap(self):
        with pytest.raises(CapacityError):
            binary_patterns(25)


class TestDataset:
    def test_valid(self):
        d = Dataset(values=[[1, 2], [2, 1]], cardinalities=(2, 3))
        assert d.n == 2 and d.p == 2

    def test_out_of_range_cell(self):
        with pytest.raises(InputError):
            Dataset(values=[[1, 4]], cardinalities=(2, 3))

    def test_zero_not_allowed(self):
        with pytest.raises(InputError):
            Dataset(values=[[0, 1]], cardinalities=(2, 2))


class TestGraphicalMatrix:
    def test_all_zero_column_warns(self):
        with pytest.warns(UserWarning):
            GraphicalMatrix([[1, 0], [1, 0]])

    def test_non_binary_rejected(self):
        with pytest.raises(InputError):
            GraphicalMatrix([[2, 0], [0, 1]])


class TestLcmParamsValidation:
    def test_equality_constraint_enforced(self):
        S = np.array([[1, 0, 0]])
        # tied columns differ -> invalid
        L = np.array([[0.9, 0.2, 0.3], [0.1, 0.8, 0.7]])
        with pytest.raises(InputError):
            small_lcm([0.3, 0.3, 0.4], [L], S)

    def test_inequality_constraint_enforced(self):
        S = np.array([[1, 0]])
        # free column shares an entry with the baseline -> invalid
        L = np.array([[0.2, 0.2], [0.8, 0.8]])
        with pytest.raises(InputError):
            small_lcm([0.5, 0.5], [L], S)

    def test_valid_params_accepted(self):
        S = np.array([[1, 0, 0]])
        L = np.array([[0.9, 0.2, 0.2], [0.1, 0.8, 0.8]])
        params = small_lcm([0.3, 0.3, 0.4], [L], S)
        assert params.k == 3 and params.cardinalities == (2,)


class TestCellProbability:
    def test_single_class_independence(self):
        S = np.ones((2, 1), dtype=int)
        L = np.array([[0.5], [0.5]])
        params = small_lcm([1.0], [L, L], S)
        for pattern in ([1, 1], [1, 2], [2, 1], [2, 2]):
            assert lcm_cell_probability(params, pattern) == pytest.approx(0.25)

    def test_hand_mixture(self):
        S = np.ones((1, 2), dtype=int)
        L = np.array([[0.9, 0.2], [0.1, 0.8]])
        params = small_lcm([0.3, 0.7], [L], S)
        assert lcm_cell_probability(params, [1]) == pytest.approx(0.41)
        assert lcm_cell_probability(params, [2]) == pytest.approx(0.59)

    def test_full_table_sums_to_one(self):
        rng = np.random.default_rng(0)
        from sglcm.identify import random_lcm_params

        S = ConstraintMatrix(rng.integers(0, 2, size=(3, 4)).astype(np.int8))
        params = random_lcm_params(S, rng, cardinalities=(2, 3, 2))
        total = 0.0
        for c1 in range(1, 3):
            for c2 in range(1, 4):
                for c3 in range(1, 3):
                    total += lcm_cell_probability(params, [c1, c2, c3])
        assert total == pytest.approx(1.0, abs=1e-10)

    def test_out_of_range_category(self):
        S = np.ones((1, 1), dtype=int)
        params = small_lcm([1.0], [np.array([[0.4], [0.6]])], S)
        with pytest.raises(InputError):
            lcm_cell_probability(params, [3])


class TestConstraintFromGraph:
    def test_example_matrix_by_label(self):
        S = constraint_matrix_from_graph(GraphicalMatrix(EXAMPLE_GRAPH))
        assert S.entries.shape == (6, 8)
        for label, column in EXAMPLE_S_BY_LABEL.items():
            got = tuple(int(v) for v in S.entries[:, S.column_of_label(label)])
            assert got == column, f"column {label}"

    def test_all_zero_row_gives_zero_row(self):
        g = np.array([[0, 0], [1, 0]], dtype=np.int8)
        with pytest.warns(UserWarning):
            gm = GraphicalMatrix(g)
        S = constraint_matrix_from_graph(gm)
        assert (S.entries[0] == 0).all()

    def test_identity_graph(self):
        K = 3
        S = constraint_matrix_from_graph(GraphicalMatrix(np.eye(K, dtype=np.int8)))
        pats = binary_patterns(K)
        for j in range(K):
            expected = 1 - pats[:, j]
            assert (S.entries[j] == expected).all()

    def test_monotone_in_edges(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            g = rng.integers(0, 2, size=(4, 3)).astype(np.int8)
            g[0, 0] = 0
            with np.errstate(all="ignore"):
                import warnings

                with warnings.catch_warnings():
                    warnings.simplefilter("ignore")
                    S0 = constraint_matrix_from_graph(GraphicalMatrix(g)).entries
                    g2 = g.copy()
                    g2[0, 0] = 1
                    S1 = constraint_matrix_from_graph(GraphicalMatrix(g2)).entries
            assert (S1 >= S0).all()

    def test_capacity(self):
        import warnings

        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            g = GraphicalMatrix(np.zeros((2, 22), dtype=np.int8))
        with pytest.raises(CapacityError):
            constraint_matrix_from_graph(g)


class TestTwoLayerConditional:
    def test_intercept_softmax(self):
        truth = reference_truth()
        probs = two_layer_conditional(truth, 0, np.zeros(4))
        expected = np.exp([-3.0, -2.0, -1.0, 0.0])
        expected /= expected.sum()
        assert probs == pytest.approx(expected, abs=1e-4)
        assert probs == pytest.approx([0.0321, 0.0871, 0.2369, 0.6439], abs=5e-5)

    def test_zero_coefficients_uniform(self):
        g = GraphicalMatrix(np.ones((2, 1), dtype=np.int8))
        params = TwoLayerParams(
            graph=g,
            beta0=np.zeros((2, 2)),
            beta=np.full((2, 2, 1), 1e-12),
            tau=np.array([1.0]),
            eta=np.array([[0.5]]),
        )
        probs = two_layer_conditional(params, 0, np.zeros(1))
        assert probs == pytest.approx([1 / 3] * 3, abs=1e-9)

    def test_shift_invariance(self):
        # shifting every logit including the baseline leaves softmax unchanged
        logits = np.array([0.3, -1.2, 0.0])
        for shift in (0.0, 2.5, -7.0):
            shifted = logits + shift
            e = np.exp(shifted - shifted.max())
            probs = e / e.sum()
            e0 = np.exp(logits - logits.max())
            assert probs == pytest.approx(e0 / e0.sum(), abs=1e-12)


class TestAttributeDistribution:
    def test_symmetric_uniform(self):
        K1 = 3
        eta = np.full((K1, 1), 0.5)
        dist = attribute_distribution(np.array([1.0]), eta)
        assert dist == pytest.approx([1 / 8] * 8, abs=1e-12)

    def test_two_class_mixture(self):
        dist = attribute_distribution(np.array([0.5, 0.5]), np.array([[0.2, 0.8]]))
        assert dist[1] == pytest.approx(0.5)  # P(alpha = 1)
        assert dist.sum() == pytest.approx(1.0)

    def test_normalization_random(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            B, K1 = 3, 4
            tau = rng.dirichlet(np.ones(B))
            eta = rng.uniform(0.05, 0.95, size=(K1, B))
            assert attribute_distribution(tau, eta).sum() == pytest.approx(1.0, abs=1e-10)


def tiny_two_layer(rng, p=3, K1=2, d=2, B=2):
    g = (rng.random((p, K1)) < 0.7).astype(np.int8)
    g[0] = 1  # keep every latent with at least one child
    gm = GraphicalMatrix(g)
    beta0 = rng.normal(0, 1, size=(p, d - 1))
    beta = np.where(g[:, None, :] == 1, rng.normal(0, 1, size=(p, d - 1, K1)) + 2.0, 0.0)
    tau = rng.dirichlet(np.ones(B))
    eta = rng.uniform(0.1, 0.9, size=(K1, B))
    return TwoLayerParams(graph=gm, beta0=beta0, beta=beta, tau=tau, eta=eta)


class TestMarginalAndReduction:
    def test_agrees_with_induced_lcm(self):
        rng = np.random.default_rng(11)
        params = tiny_two_layer(rng)
        lcm = two_layer_to_lcm(params)
        for _ in range(100):
            pattern = rng.integers(1, params.d + 1, size=params.p)
            a = marginal_y_probability(params, pattern)
            b = lcm_cell_probability(lcm, pattern)
            assert a == pytest.approx(b, abs=1e-12)

    def test_no_latent_influence_when_graph_empty(self):
        import warnings

        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            gm = GraphicalMatrix(np.zeros((2, 2), dtype=np.int8))
        params = TwoLayerParams(
            graph=gm,
            beta0=np.array([[0.4], [-0.3]]),
            beta=np.zeros((2, 1, 2)),
            tau=np.array([0.3, 0.7]),
            eta=np.array([[0.2, 0.9], [0.6, 0.4]]),
        )
        for pattern in ([1, 1], [1, 2], [2, 1], [2, 2]):
            got = marginal_y_probability(params, pattern)
            want = 1.0
            for j in range(2):
                pj = two_layer_conditional(params, j, np.zeros(2))
                want *= pj[pattern[j] - 1]
            assert got == pytest.approx(want, abs=1e-12)

    def test_sums_to_one(self):
        rng = np.random.default_rng(7)
        params = tiny_two_layer(rng, p=4)
        total = 0.0
        for idx in range(2 ** params.p):
            pattern = [1 + ((idx >> b) & 1) for b in range(params.p)]
            total += marginal_y_probability(params, pattern)
        assert total == pytest.approx(1.0, abs=1e-10)

    def test_roundtrip_equality_constraints_exact(self):
        # classes that cover the same parent sets share identical columns
        rng = np.random.default_rng(13)
        params = tiny_two_layer(rng)
        lcm = two_layer_to_lcm(params)  # constructor enforces ties exactly
        S = lcm.constraint.entries
        for j in range(params.p):
            tied = np.flatnonzero(S[j] == 0)
            base = lcm.lambdas[j][:, tied[0]]
            assert np.abs(lcm.lambdas[j][:, tied] - base[:, None]).max() == 0.0


class TestTwoLayerParamsValidation:
    def test_nonzero_where_edge(self):
        g = GraphicalMatrix(np.ones((1, 1), dtype=np.int8))
        with pytest.raises(InputError):
            TwoLayerParams(
                graph=g,
                beta0=np.zeros((1, 1)),
                beta=np.zeros((1, 1, 1)),
                tau=np.array([1.0]),
                eta=np.array([[0.5]]),
            )

    def test_zero_where_no_edge(self):
        import warnings

        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            g = GraphicalMatrix(np.array([[1, 0]], dtype=np.int8))
        with pytest.raises(InputError):
            TwoLayerParams(
                graph=g,
                beta0=np.zeros((1, 1)),
                beta=np.ones((1, 1, 2)),
                tau=np.array([1.0]),
                eta=np.array([[0.5], [0.5]]),
            )

    def test_eta_open_interval(self):
        g = GraphicalMatrix(np.ones((1, 1), dtype=np.int8))
        with pytest.raises(InputError):
            TwoLayerParams(
                graph=g,
                beta0=np.zeros((1, 1)),
                beta=np.ones((1, 1, 1)),
                tau=np.array([1.0]),
                eta=np.array([[1.0]]),
            )
