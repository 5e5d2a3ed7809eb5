"""Joint-distribution consistency harness for the Gibbs sampler.

Two simulators for the same joint over (parameters, data): the
marginal-conditional one draws parameters from the prior and data from the
model, i.i.d.; the successive-conditional one alternates a full Gibbs sweep
with a data redraw.  If every full-conditional update is correct, both
leave the joint invariant and all moments agree; z-scores on a battery of
bounded test functions flag any discrepancy.  Auxiliary Polya-Gamma
variables are refreshed inside the sweep and excluded from the battery.
"""

from __future__ import annotations

import numpy as np

from .gibbs import CSP, ChainState, SamplerConfig, _state_sweep

TOY_N = 4
TOY_P = 3
TOY_D = 2


def toy_config(mode: str = "fixed_K", positivity: bool = True, seed: int = 0) -> SamplerConfig:
    """Sampler settings for the tiny closed-loop model."""
    return SamplerConfig(
        K=2,
        B=2,
        iterations=2,
        burn_in=1,
        seed=seed,
        mode=mode,
        positivity_constraint=positivity,
    )


def prior_state(config: SamplerConfig, n: int, p: int, d: int, rng) -> ChainState:
    """Exact draw of all parameters from the prior the sampler targets."""
    dm1 = d - 1
    K, B = config.K, config.B
    gamma = float(rng.beta(1.0, 1.0))
    G = (rng.random((p, K)) < gamma).astype(np.int64)
    csp_v = csp_pi = csp_zind = None
    if config.mode == CSP:
        csp_v = np.empty(K)
        csp_v[: K - 1] = rng.beta(1.0, config.alpha_csp, size=K - 1)
        csp_v[K - 1] = 1.0
        w = csp_v * np.concatenate([[1.0], np.cumprod(1.0 - csp_v[:-1])])
        csp_pi = np.minimum(np.cumsum(w), 1.0)
        csp_pi[-1] = 1.0
        csp_zind = 1 + np.array(
            [rng.choice(K, p=w / w.sum()) for _ in range(K)], dtype=np.int64
        )
        sigma2 = np.empty((dm1, K))
        for k in range(K):
            if csp_zind[k] > k + 1:
                sigma2[:, k] = config.b_sigma / rng.gamma(config.a_sigma, 1.0, size=dm1)
            else:
                sigma2[:, k] = config.theta_inf
    else:
        sigma2 = config.b_sigma / rng.gamma(config.a_sigma, 1.0, size=(dm1, K))
    beta0 = config.mu0 + np.sqrt(config.sigma0_sq) * rng.standard_normal((p, dm1))
    slab = rng.standard_normal((p, dm1, K)) * np.sqrt(sigma2)[None, :, :]
    if config.positivity_constraint:
        slab = np.abs(slab)
    pseudo = config.v0 * rng.standard_normal((p, dm1, K))
    beta = np.where(G[:, None, :] == 1, slab, pseudo)
    tau = rng.dirichlet(np.ones(B))
    eta = rng.beta(1.0, 1.0, size=(K, B))
    z = np.array([rng.choice(B, p=tau) for _ in range(n)], dtype=np.int64)
    A = (rng.random((n, K)) < eta[:, z].T).astype(np.int64)
    W = np.full((n, p, dm1), 0.25)
    return ChainState(
        beta0=beta0, beta=beta, G=G, sigma2=sigma2, gamma=gamma,
        tau=tau, eta=eta, A=A, z=z, W=W,
        csp_v=csp_v, csp_pi=csp_pi, csp_zind=csp_zind,
    )


def draw_data(state: ChainState, rng) -> np.ndarray:
    """0-based categorical data from the observation model."""
    n = state.A.shape[0]
    p, dm1 = state.beta0.shape
    active = state.beta * state.G[:, None, :]
    logits = np.concatenate(
        [
            state.beta0[None, :, :] + np.einsum("nk,jck->njc", state.A.astype(np.float64), active),
            np.zeros((n, p, 1)),
        ],
        axis=2,
    )
    logits -= logits.max(axis=2, keepdims=True)
    probs = np.exp(logits)
    probs /= probs.sum(axis=2, keepdims=True)
    u = rng.random((n, p))
    return (u[:, :, None] >= probs.cumsum(axis=2)).sum(axis=2).astype(np.int64)


TEST_FUNCTION_NAMES = (
    "mean_beta0", "mean_beta0_sq", "mean_tanh_beta", "mean_tanh_beta_sq",
    "mean_g_tanh_beta", "mean_g", "gamma", "gamma_sq",
    "mean_inv_sigma2", "mean_log_sigma2", "tau1", "tau1_sq",
    "mean_eta", "mean_eta_sq", "mean_eta_cross", "mean_a",
    "frac_z1", "mean_a_cross", "frac_y_cat1", "mean_a1_y1",
)


def test_functions(state: ChainState, y0: np.ndarray) -> np.ndarray:
    """20 bounded or light-tailed moments of (parameters, data)."""
    th = np.tanh(state.beta)
    return np.array(
        [
            state.beta0.mean(),
            (state.beta0 ** 2).mean(),
            th.mean(),
            (th ** 2).mean(),
            (state.G[:, None, :] * th).mean(),
            state.G.mean(),
            state.gamma,
            state.gamma ** 2,
            (1.0 / state.sigma2).mean(),
            np.log(state.sigma2).mean(),
            state.tau[0],
            state.tau[0] ** 2,
            state.eta.mean(),
            (state.eta ** 2).mean(),
            (state.eta[:, 0] * state.eta[:, 1]).mean(),
            state.A.mean(),
            (state.z == 0).mean(),
            (state.A[:, 0] * state.A[:, 1]).mean(),
            (y0 == 0).mean(),
            (state.A[:, 0] * (y0[:, 0] == 0)).mean(),
        ]
    )


def marginal_conditional(config, n, p, d, n_draws, rng) -> np.ndarray:
    out = np.empty((n_draws, len(TEST_FUNCTION_NAMES)))
    for t in range(n_draws):
        state = prior_state(config, n, p, d, rng)
        y0 = draw_data(state, rng)
        out[t] = test_functions(state, y0)
    return out


def successive_conditional(config, n, p, d, n_sweeps, rng) -> np.ndarray:
    state = prior_state(config, n, p, d, rng)
    y0 = draw_data(state, rng)
    out = np.empty((n_sweeps, len(TEST_FUNCTION_NAMES)))
    for t in range(n_sweeps):
        _state_sweep(state, y0, config, rng)
        y0 = draw_data(state, rng)
        out[t] = test_functions(state, y0)
    return out


def batch_means_se(x: np.ndarray, n_batches: int = 100) -> float:
    """Standard error of the mean of a stationary series via batch means."""
    m = len(x) // n_batches
    if m < 2:
        raise ValueError("series too short for the requested batch count")
    means = x[: m * n_batches].reshape(n_batches, m).mean(axis=1)
    return float(np.sqrt(means.var(ddof=1) / n_batches))


def geweke_zscores(mc: np.ndarray, sc: np.ndarray, n_batches: int = 100) -> np.ndarray:
    """Per-function z-scores between the two simulators.

    The i.i.d. marginal-conditional stream uses the plain standard error;
    the autocorrelated successive-conditional stream uses batch means.
    """
    zs = np.empty(mc.shape[1])
    for q in range(mc.shape[1]):
        se_mc = mc[:, q].std(ddof=1) / np.sqrt(mc.shape[0])
        se_sc = batch_means_se(sc[:, q], n_batches)
        zs[q] = (mc[:, q].mean() - sc[:, q].mean()) / np.sqrt(se_mc ** 2 + se_sc ** 2)
    return zs


def run_getting_it_right(
    mode: str = "fixed_K",
    positivity: bool = True,
    n_draws: int = 100_000,
    n_sweeps: int = 100_000,
    seed: int = 20240001,
) -> dict:
    """Full two-simulator comparison on the toy model; returns the z table."""
    config = toy_config(mode=mode, positivity=positivity, seed=seed)
    rng = np.random.default_rng(seed)
    mc = marginal_conditional(config, TOY_N, TOY_P, TOY_D, n_draws, rng)
    sc = successive_conditional(config, TOY_N, TOY_P, TOY_D, n_sweeps, rng)
    zs = geweke_zscores(mc, sc)
    return {
        "z_scores": zs,
        "names": TEST_FUNCTION_NAMES,
        "mc_means": mc.mean(axis=0),
        "sc_means": sc.mean(axis=0),
        "max_abs_z": float(np.abs(zs).max()),
    }
