"""Core types and probability evaluations for sparse-graph latent class models.

A constrained latent class model (LCM) mixes k latent classes; a binary
constraint matrix S marks, per observed variable, which class-conditional
probability columns are free (S=1) and which are tied to a shared baseline
column (S=0).  A two-layer model puts K1 binary latent traits between the
observed variables and a deep categorical class, with multinomial-logit
links along a sparse bipartite graph.  Everything here is deterministic;
all types are immutable after construction.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import CapacityError, InputError

# Tolerance used when validating probability vectors at construction time.
CONSTRUCT_TOL = 1e-12
# Looser tolerance for derived normalization checks (sums over up to 2^20 terms).
PROPERTY_TOL = 1e-10
# Largest number of binary latent traits for which 2^K enumeration is allowed.
ENUM_CAP = 20


def binary_patterns(K: int, cap: int = ENUM_CAP) -> np.ndarray:
    """All binary vectors of length K as a (2^K, K) array, canonical order.

    Canonical order is lexicographic with (0,...,0) first and the leftmost
    coordinate most significant: for K=2 the rows are 00, 01, 10, 11.
    """
    if K > cap:
        raise CapacityError(f"2^{K} patterns exceed enumeration cap 2^{cap}")
    idx = np.arange(2 ** K, dtype=np.int64)
    shifts = np.arange(K - 1, -1, -1, dtype=np.int64)
    return ((idx[:, None] >> shifts[None, :]) & 1).astype(np.int8)


def pattern_index(alpha) -> int:
    """Position of a binary vector in the canonical order of binary_patterns."""
    alpha = np.asarray(alpha).astype(np.int64)
    K = alpha.shape[-1]
    weights = 1 << np.arange(K - 1, -1, -1, dtype=np.int64)
    return int(alpha @ weights)


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


def _check_binary(entries: np.ndarray, name: str) -> None:
    if not np.isin(entries, (0, 1)).all():
        raise InputError(f"{name} entries must be 0 or 1")


@dataclass(frozen=True)
class Dataset:
    """n x p table of categorical observations with per-column cardinalities.

    Cell values at column j are integer category codes in 1..cardinalities[j].
    """

    values: np.ndarray
    cardinalities: tuple[int, ...]

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.int64)
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise InputError("dataset must be a non-empty n x p table")
        card = tuple(int(d) for d in self.cardinalities)
        if len(card) != values.shape[1]:
            raise InputError("one cardinality per column required")
        if any(d < 2 for d in card):
            raise InputError("cardinalities must be >= 2")
        for j, d in enumerate(card):
            col = values[:, j]
            if col.min() < 1 or col.max() > d:
                raise InputError(
                    f"column {j + 1} has values outside 1..{d}"
                )
        object.__setattr__(self, "values", _freeze(values))
        object.__setattr__(self, "cardinalities", card)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class GraphicalMatrix:
    """Binary parent-child adjacency between two consecutive layers.

    Rows index children (observed variables for the bottom layer), columns
    index parent latent variables.  An all-zero column is legal but vacuous
    (a parent with no children); the constructor warns about it.
    """

    entries: np.ndarray

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=np.int8)
        if entries.ndim != 2:
            raise InputError("graphical matrix must be 2-dimensional")
        _check_binary(entries, "graphical matrix")
        empty = np.flatnonzero(entries.sum(axis=0) == 0)
        if empty.size:
            warnings.warn(
                f"graphical matrix has all-zero column(s) {empty.tolist()}: "
                "latent variable(s) with no children",
                stacklevel=2,
            )
        object.__setattr__(self, "entries", _freeze(entries))

    @property
    def rows(self) -> int:
        return self.entries.shape[0]

    @property
    def cols(self) -> int:
        return self.entries.shape[1]


@dataclass(frozen=True)
class ConstraintMatrix:
    """Binary p x k matrix marking free (1) vs baseline-tied (0) columns.

    When the k columns index binary trait configurations, column_labels
    holds the 2^K patterns (tuples) in the same column order.
    """

    entries: np.ndarray
    column_labels: tuple[tuple[int, ...], ...] | None = None

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=np.int8)
        if entries.ndim != 2:
            raise InputError("constraint matrix must be 2-dimensional")
        _check_binary(entries, "constraint matrix")
        if self.column_labels is not None:
            labels = tuple(tuple(int(v) for v in lab) for lab in self.column_labels)
            if len(labels) != entries.shape[1]:
                raise InputError("one column label per column required")
            if len(set(labels)) != len(labels):
                raise InputError("column labels must be distinct")
            K = len(labels[0])
            if len(labels) != 2 ** K or any(len(lab) != K for lab in labels):
                raise InputError("labels must enumerate all 2^K binary patterns")
            object.__setattr__(self, "column_labels", labels)
        object.__setattr__(self, "entries", _freeze(entries))

    @property
    def p(self) -> int:
        return self.entries.shape[0]

    @property
    def k(self) -> int:
        return self.entries.shape[1]

    def column_of_label(self, label) -> int:
        """Column position of a binary pattern label."""
        if self.column_labels is None:
            raise InputError("constraint matrix has no column labels")
        return self.column_labels.index(tuple(int(v) for v in label))


@dataclass(frozen=True)
class LcmParams:
    """Mixture proportions and class-conditional probability tables.

    lambdas[j] is the d_j x k table for variable j; columns with S[j,h]=0
    must all equal one shared baseline column, and each free column must
    differ from that baseline in every entry.
    """

    nu: np.ndarray
    lambdas: tuple[np.ndarray, ...]
    constraint: ConstraintMatrix

    def __post_init__(self):
        nu = np.asarray(self.nu, dtype=np.float64)
        lambdas = tuple(np.asarray(L, dtype=np.float64) for L in self.lambdas)
        S = self.constraint.entries
        k = nu.shape[0]
        if S.shape != (len(lambdas), k):
            raise InputError("constraint matrix shape must be p x k")
        if abs(nu.sum() - 1.0) > CONSTRUCT_TOL or (nu <= 0).any():
            raise InputError("mixture proportions must be positive and sum to 1")
        for j, L in enumerate(lambdas):
            if L.ndim != 2 or L.shape[1] != k or L.shape[0] < 2:
                raise InputError(f"lambdas[{j}] must be d_j x k with d_j >= 2")
            if np.abs(L.sum(axis=0) - 1.0).max() > CONSTRUCT_TOL:
                raise InputError(f"lambdas[{j}] columns must sum to 1")
            tied = np.flatnonzero(S[j] == 0)
            if tied.size:
                base = L[:, tied[0]]
                if np.abs(L[:, tied] - base[:, None]).max() > CONSTRUCT_TOL:
                    raise InputError(
                        f"lambdas[{j}] baseline-tied columns must be identical"
                    )
                free = np.flatnonzero(S[j] == 1)
                if free.size and (L[:, free] == base[:, None]).any():
                    raise InputError(
                        f"lambdas[{j}] free columns must differ from the "
                        "baseline in every entry"
                    )
        object.__setattr__(self, "nu", _freeze(nu))
        object.__setattr__(self, "lambdas", tuple(_freeze(L) for L in lambdas))

    @property
    def p(self) -> int:
        return len(self.lambdas)

    @property
    def k(self) -> int:
        return self.nu.shape[0]

    @property
    def cardinalities(self) -> tuple[int, ...]:
        return tuple(L.shape[0] for L in self.lambdas)


@dataclass(frozen=True)
class TwoLayerParams:
    """Parameters of the two-layer model with constant cardinality d.

    Logit of category c for variable j is beta0[j,c] + sum_k beta[j,c,k] *
    g[j,k] * alpha_k, with category d as the zero-logit baseline.  The K1
    traits follow a B-class mixture of independent Bernoullis: class
    proportions tau and success probabilities eta[k,b].
    """

    graph: GraphicalMatrix
    beta0: np.ndarray
    beta: np.ndarray
    tau: np.ndarray
    eta: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        beta0 = np.asarray(self.beta0, dtype=np.float64)
        beta = np.asarray(self.beta, dtype=np.float64)
        tau = np.asarray(self.tau, dtype=np.float64)
        eta = np.asarray(self.eta, dtype=np.float64)
        g = self.graph.entries
        p, K1 = g.shape
        if beta0.ndim != 2 or beta0.shape[0] != p:
            raise InputError("beta0 must be p x (d-1)")
        if beta.shape != (p, beta0.shape[1], K1):
            raise InputError("beta must be p x (d-1) x K1")
        gmask = np.broadcast_to(g[:, None, :].astype(bool), beta.shape)
        if (beta[~gmask] != 0).any():
            raise InputError("beta must vanish where g[j,k] = 0")
        if (beta[gmask] == 0).any():
            raise InputError("beta must be nonzero where g[j,k] = 1")
        if abs(tau.sum() - 1.0) > CONSTRUCT_TOL or (tau <= 0).any():
            raise InputError("tau must be positive and sum to 1")
        if eta.shape != (K1, tau.shape[0]):
            raise InputError("eta must be K1 x B")
        if (eta <= 0).any() or (eta >= 1).any():
            raise InputError("eta entries must lie in (0, 1)")
        object.__setattr__(self, "beta0", _freeze(beta0))
        object.__setattr__(self, "beta", _freeze(beta))
        object.__setattr__(self, "tau", _freeze(tau))
        object.__setattr__(self, "eta", _freeze(eta))

    @property
    def p(self) -> int:
        return self.graph.rows

    @property
    def K1(self) -> int:
        return self.graph.cols

    @property
    def B(self) -> int:
        return self.tau.shape[0]

    @property
    def d(self) -> int:
        return self.beta0.shape[1] + 1


def lcm_cell_probability(params: LcmParams, pattern) -> float:
    """Probability of one response pattern under a constrained LCM.

    Returns sum_h nu_h * prod_j lambdas[j][pattern_j, h] for 1-based pattern.
    """
    pattern = np.asarray(pattern, dtype=np.int64)
    if pattern.shape != (params.p,):
        raise InputError("pattern must have one category per variable")
    prod = params.nu.copy()
    for j, L in enumerate(params.lambdas):
        c = pattern[j]
        if not 1 <= c <= L.shape[0]:
            raise InputError(f"pattern[{j}] = {c} outside 1..{L.shape[0]}")
        prod *= L[c - 1]
    return float(prod.sum())


def constraint_matrix_from_graph(graph: GraphicalMatrix, cap: int = ENUM_CAP) -> ConstraintMatrix:
    """Constraint matrix induced by a bipartite graph over binary traits.

    Column alpha of the p x 2^K result is 0 exactly when alpha covers row
    j's parent set entrywise (alpha >= g[j,:]), i.e. the conditional table
    of variable j is at its ceiling and tied to the baseline.  Columns are
    labeled by the canonical pattern order.
    """
    g = graph.entries
    K = graph.cols
    patterns = binary_patterns(K, cap=cap)
    covers = (patterns[:, None, :] >= g[None, :, :]).all(axis=2)  # (2^K, p)
    S = (1 - covers.T.astype(np.int8))
    labels = tuple(tuple(int(v) for v in row) for row in patterns)
    return ConstraintMatrix(S, column_labels=labels)


def two_layer_conditional(params: TwoLayerParams, j: int, alpha) -> np.ndarray:
    """Category distribution of variable j given a binary trait vector.

    Softmax of the category logits with the last category as the zero-logit
    baseline; the returned vector has length d and sums to 1.
    """
    alpha = np.asarray(alpha, dtype=np.float64)
    if alpha.shape != (params.K1,):
        raise InputError("alpha must have length K1")
    active = params.graph.entries[j] * alpha
    logits = np.concatenate([params.beta0[j] + params.beta[j] @ active, [0.0]])
    logits -= logits.max()
    expl = np.exp(logits)
    return expl / expl.sum()


def attribute_distribution(tau, eta) -> np.ndarray:
    """Probability of each binary trait pattern under the deep mixture.

    P(alpha) = sum_b tau_b * prod_k eta[k,b]^alpha_k (1-eta[k,b])^(1-alpha_k),
    returned over all 2^K1 patterns in canonical order.
    """
    tau = np.asarray(tau, dtype=np.float64)
    eta = np.asarray(eta, dtype=np.float64)
    K1 = eta.shape[0]
    patterns = binary_patterns(K1)
    # (2^K1, K1, B): eta where alpha_k = 1, 1 - eta where alpha_k = 0
    bern = np.where(patterns[:, :, None] == 1, eta[None, :, :], 1.0 - eta[None, :, :])
    return bern.prod(axis=1) @ tau


def two_layer_to_lcm(params: TwoLayerParams, cap: int = ENUM_CAP) -> LcmParams:
    """Constrained LCM over 2^K1 classes induced by a two-layer model.

    Classes are the trait patterns in canonical order; the constraint matrix
    comes from the graph, the mixture weights from the deep layer, and the
    conditional tables from the logistic link.
    """
    constraint = constraint_matrix_from_graph(params.graph, cap=cap)
    patterns = binary_patterns(params.K1, cap=cap)
    nu = attribute_distribution(params.tau, params.eta)
    lambdas = []
    for j in range(params.p):
        L = np.stack(
            [two_layer_conditional(params, j, a) for a in patterns], axis=1
        )
        lambdas.append(L)
    return LcmParams(nu=nu, lambdas=tuple(lambdas), constraint=constraint)


def marginal_y_probability(params: TwoLayerParams, pattern, cap: int = ENUM_CAP) -> float:
    """Marginal probability of a response pattern under the two-layer model.

    Sums P(alpha) * prod_j P(y_j = pattern_j | alpha) over all 2^K1 trait
    patterns; equal to the cell probability of the induced LCM.
    """
    pattern = np.asarray(pattern, dtype=np.int64)
    if pattern.shape != (params.p,):
        raise InputError("pattern must have one category per variable")
    if (pattern < 1).any() or (pattern > params.d).any():
        raise InputError("pattern categories must lie in 1..d")
    patterns = binary_patterns(params.K1, cap=cap)
    weights = attribute_distribution(params.tau, params.eta)
    total = 0.0
    for w, alpha in zip(weights, patterns):
        prob = w
        for j in range(params.p):
            prob *= two_layer_conditional(params, j, alpha)[pattern[j] - 1]
        total += prob
    return float(total)
