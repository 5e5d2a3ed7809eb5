"""Post-chain analysis: column alignment, point estimates, recovery metrics.

Latent columns are only identified up to permutation, so estimates are
aligned to a reference graph by minimizing Hamming distance before any
comparison; deep-class labels are aligned afterwards by matching the
Bernoulli profile matrix.  Under the shrinkage prior the chain carries
surplus columns, which are cut by keeping those with the largest average
posterior slab variance.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import InputError
from .gibbs import PosteriorDraws, estimate_k_star

EXHAUSTIVE_PERM_MAX = 8


@dataclass(frozen=True)
class EvalReport:
    """Recovery metrics of one fitted chain against a known truth."""

    g_error_matrix: float
    g_error_row: float
    g_error_entry: float
    rmse: dict  # per-block RMSE: beta_active, beta_all, beta0, eta
    k_star: float | None
    permutation: tuple[int, ...]
    retained_columns: tuple[int, ...]
    class_permutation: tuple[int, ...]
    meta: dict = field(default_factory=dict, compare=False)

    def to_dict(self) -> dict:
        return {
            "g_error_matrix": self.g_error_matrix,
            "g_error_row": self.g_error_row,
            "g_error_entry": self.g_error_entry,
            "rmse": dict(self.rmse),
            "k_star": self.k_star,
            "permutation": list(self.permutation),
            "retained_columns": list(self.retained_columns),
            "class_permutation": list(self.class_permutation),
            "meta": dict(self.meta),
        }


def align_columns(G_hat, G_ref) -> tuple[int, ...]:
    """Column permutation of G_hat minimizing Hamming distance to G_ref.

    Returns perm such that G_hat[:, perm] best matches G_ref column by
    column.  Exhaustive for K <= 8 (ties broken toward the lexicographically
    smallest permutation), Hungarian assignment on the pairwise Hamming
    costs for larger K.
    """
    G_hat = np.asarray(G_hat)
    G_ref = np.asarray(G_ref)
    if G_hat.shape != G_ref.shape:
        raise InputError("matrices must have equal shapes after column retention")
    K = G_hat.shape[1]
    cost = np.empty((K, K), dtype=np.int64)
    for a in range(K):
        for b in range(K):
            cost[a, b] = int((G_hat[:, a] != G_ref[:, b]).sum())
    if K <= EXHAUSTIVE_PERM_MAX:
        best = None
        best_cost = None
        for perm in itertools.permutations(range(K)):
            c = sum(cost[perm[b], b] for b in range(K))
            if best_cost is None or c < best_cost:
                best, best_cost = perm, c
        return tuple(best)
    rows, cols = linear_sum_assignment(cost)
    perm = np.empty(K, dtype=np.int64)
    perm[cols] = rows
    return tuple(int(v) for v in perm)


def posterior_mode_estimates(draws: PosteriorDraws):
    """Element-wise posterior modes (G_hat, A_hat, Z_hat).

    Binary entries are 1 when their retained-draw frequency exceeds 1/2
    (exactly 1/2 resolves to 0); Z_hat is one-hot at each subject's most
    frequent deep class, first class winning ties.
    """
    G_hat = (draws.G.mean(axis=0) > 0.5).astype(np.int8)
    A_hat = (draws.A.mean(axis=0) > 0.5).astype(np.int8)
    R, n = draws.Z.shape
    B = draws.tau.shape[1]
    counts = np.zeros((n, B), dtype=np.int64)
    for b in range(B):
        counts[:, b] = (draws.Z == b + 1).sum(axis=0)
    Z_hat = np.zeros((n, B), dtype=np.int8)
    Z_hat[np.arange(n), counts.argmax(axis=1)] = 1
    return G_hat, A_hat, Z_hat


def recovery_errors(G_hat, G_true) -> tuple[float, float, float]:
    """(matrix, row, entry) recovery error rates between binary matrices."""
    G_hat = np.asarray(G_hat)
    G_true = np.asarray(G_true)
    if G_hat.shape != G_true.shape:
        raise InputError("shape mismatch")
    diff = G_hat != G_true
    matrix_err = float(diff.any())
    row_err = float(diff.any(axis=1).mean())
    entry_err = float(diff.mean())
    return matrix_err, row_err, entry_err


def rmse_blocks(
    beta_mean, beta0_mean, eta_mean, truth, active_mask=None
) -> dict:
    """Root-mean-square errors of posterior means against the truth.

    beta is reported twice: over the truly-active entries only and over all
    entries.  Inputs must already be column- and class-aligned.
    """
    beta_mean = np.asarray(beta_mean)
    beta0_mean = np.asarray(beta0_mean)
    eta_mean = np.asarray(eta_mean)
    g = truth.graph.entries
    if active_mask is None:
        active_mask = np.broadcast_to(g[:, None, :] == 1, truth.beta.shape)
    diff_beta = beta_mean - truth.beta
    return {
        "beta_active": float(np.sqrt(np.mean(diff_beta[active_mask] ** 2))),
        "beta_all": float(np.sqrt(np.mean(diff_beta ** 2))),
        "beta0": float(np.sqrt(np.mean((beta0_mean - truth.beta0) ** 2))),
        "eta": float(np.sqrt(np.mean((eta_mean - truth.eta) ** 2))),
    }


def retained_column_order(draws: PosteriorDraws, K_target: int) -> tuple[int, ...]:
    """Columns kept for evaluation: largest average posterior slab variance."""
    K = draws.sigma2.shape[2]
    if K_target > K:
        raise InputError("cannot retain more columns than the chain carries")
    avg_var = draws.sigma2.mean(axis=0).mean(axis=0)  # per column
    order = np.argsort(-avg_var, kind="stable")
    return tuple(int(k) for k in sorted(order[:K_target]))


def align_classes(eta_mean, tau_mean, eta_true) -> tuple[int, ...]:
    """Deep-class permutation minimizing eta RMSE after column alignment."""
    B = eta_true.shape[1]
    best, best_cost = None, None
    for perm in itertools.permutations(range(B)):
        c = float(np.mean((eta_mean[:, perm] - eta_true) ** 2))
        if best_cost is None or c < best_cost:
            best, best_cost = perm, c
    return tuple(best)


def evaluate_run(draws: PosteriorDraws, truth) -> EvalReport:
    """Full evaluation of one chain against the generating parameters.

    Retains K1 columns (shrinkage mode), aligns columns to the true graph,
    aligns deep classes, and reports graph recovery errors and per-block
    RMSEs of the posterior means.
    """
    K1 = truth.K1
    cols = retained_column_order(draws, K1)
    G_hat_full, _, _ = posterior_mode_estimates(draws)
    G_hat = G_hat_full[:, cols]
    perm = align_columns(G_hat, truth.graph.entries)
    aligned_cols = tuple(cols[p] for p in perm)

    G_aligned = G_hat[:, perm]
    matrix_err, row_err, entry_err = recovery_errors(G_aligned, truth.graph.entries)

    beta_mean = draws.beta.mean(axis=0)[:, :, aligned_cols]
    beta0_mean = draws.beta0.mean(axis=0)
    eta_mean = draws.eta.mean(axis=0)[aligned_cols, :]
    tau_mean = draws.tau.mean(axis=0)
    class_perm = align_classes(eta_mean, tau_mean, truth.eta)
    eta_aligned = eta_mean[:, class_perm]

    rmse = rmse_blocks(beta_mean, beta0_mean, eta_aligned, truth)
    k_star = estimate_k_star(draws) if draws.csp_pi is not None else None
    return EvalReport(
        g_error_matrix=matrix_err,
        g_error_row=row_err,
        g_error_entry=entry_err,
        rmse=rmse,
        k_star=k_star,
        permutation=perm,
        retained_columns=tuple(cols),
        class_permutation=class_perm,
        meta={"n_retained_draws": draws.n_retained},
    )
