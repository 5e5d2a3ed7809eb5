"""Gibbs sampler for the two-layer model with spike-and-slab graph selection.

Multinomial-logit likelihoods are handled by Polya-Gamma augmentation: for
each (subject, variable, non-baseline category) the auxiliary w is drawn
immediately before the corresponding coefficient block, which makes each
block move an exact collapsed update of the marginal posterior.  Edge
indicators get a Bernoulli(gamma) spike-and-slab prior with an untruncated
pseudo-prior N(0, v0^2) on inactive coefficients.  Two modes:

* fixed_K: slab variances sigma2[c,k] ~ InverseGamma(a_sigma, b_sigma);
* csp: a stick-breaking spike-and-slab process over column variances with
  increasing spike mass, which lets the chain switch off surplus latent
  columns and yields an effective-column-count estimate.

With positivity_constraint the active main effects are kept strictly
positive (half-normal slab; coordinate-wise truncated Gaussian updates),
removing the sign ambiguity of the latent traits.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np
from numba import njit

from .core import Dataset
from .errors import InputError, NumericalError
from .pg import pg_draw

FIXED_K = "fixed_K"
CSP = "csp"

_LOG2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class SamplerConfig:
    """Run-length, mode, and hyperparameter settings for one chain."""

    K: int
    B: int
    iterations: int
    burn_in: int
    seed: int
    thin: int = 1
    mode: str = FIXED_K
    positivity_constraint: bool = True
    mu0: float = 0.0
    sigma0_sq: float = 4.0
    v0: float = 0.1
    a_sigma: float = 2.0
    b_sigma: float = 2.0
    alpha_csp: float = 5.0
    theta_inf: float = 0.07

    def __post_init__(self):
        if self.mode not in (FIXED_K, CSP):
            raise InputError(f"mode must be '{FIXED_K}' or '{CSP}'")
        if not 0 <= self.burn_in < self.iterations:
            raise InputError("need 0 <= burn_in < iterations")
        if self.thin < 1:
            raise InputError("thin must be >= 1")
        if self.v0 <= 0 or self.theta_inf <= 0:
            raise InputError("v0 and theta_inf must be positive")
        if self.K < 1 or self.B < 1:
            raise InputError("K and B must be >= 1")
        if self.sigma0_sq <= 0 or self.a_sigma <= 0 or self.b_sigma <= 0 or self.alpha_csp <= 0:
            raise InputError("variance and shape hyperparameters must be positive")

    @property
    def n_retained(self) -> int:
        return (self.iterations - self.burn_in) // self.thin


@dataclass
class ChainState:
    """Full latent state of the sampler at one iteration.

    Arrays are owned by the state and mutated in place by run_chain; the
    functional update_* wrappers copy before mutating.  z holds deep-class
    labels in 0..B-1 (Z_onehot() gives the indicator form); W holds the
    most recent Polya-Gamma auxiliaries.
    """

    beta0: np.ndarray  # (p, d-1)
    beta: np.ndarray  # (p, d-1, K)
    G: np.ndarray  # (p, K) 0/1
    sigma2: np.ndarray  # (d-1, K)
    gamma: float
    tau: np.ndarray  # (B,)
    eta: np.ndarray  # (K, B)
    A: np.ndarray  # (n, K) 0/1
    z: np.ndarray  # (n,) labels 0..B-1
    W: np.ndarray  # (n, p, d-1)
    csp_v: np.ndarray | None = None  # (K,)
    csp_pi: np.ndarray | None = None  # (K,)
    csp_zind: np.ndarray | None = None  # (K,) values 1..K

    def Z_onehot(self) -> np.ndarray:
        B = self.tau.shape[0]
        out = np.zeros((self.z.shape[0], B), dtype=np.int8)
        out[np.arange(self.z.shape[0]), self.z] = 1
        return out

    def copy(self) -> "ChainState":
        return ChainState(
            beta0=self.beta0.copy(),
            beta=self.beta.copy(),
            G=self.G.copy(),
            sigma2=self.sigma2.copy(),
            gamma=float(self.gamma),
            tau=self.tau.copy(),
            eta=self.eta.copy(),
            A=self.A.copy(),
            z=self.z.copy(),
            W=self.W.copy(),
            csp_v=None if self.csp_v is None else self.csp_v.copy(),
            csp_pi=None if self.csp_pi is None else self.csp_pi.copy(),
            csp_zind=None if self.csp_zind is None else self.csp_zind.copy(),
        )


@dataclass(frozen=True)
class PosteriorDraws:
    """Thinned post-burn-in draws of every parameter block."""

    config: SamplerConfig
    beta0: np.ndarray  # (R, p, d-1)
    beta: np.ndarray  # (R, p, d-1, K)
    G: np.ndarray  # (R, p, K) int8
    sigma2: np.ndarray  # (R, d-1, K)
    gamma: np.ndarray  # (R,)
    tau: np.ndarray  # (R, B)
    eta: np.ndarray  # (R, K, B)
    A: np.ndarray  # (R, n, K) int8
    Z: np.ndarray  # (R, n) labels 1..B
    loglik: np.ndarray  # (R,)
    csp_pi: np.ndarray | None = None  # (R, K)
    csp_zind: np.ndarray | None = None  # (R, K)
    csp_v: np.ndarray | None = None  # (R, K)
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def n_retained(self) -> int:
        return self.beta0.shape[0]


# ---------------------------------------------------------------------------
# Compiled kernels.  Convention: y0 holds 0-based category codes, beta/beta0
# exclude the baseline category whose logit is identically zero, and G/A are
# int64 0/1 arrays.
# ---------------------------------------------------------------------------


@njit(cache=True)
def _rtnorm_pos(mean, sd, rng):
    """N(mean, sd^2) truncated to (0, inf)."""
    a = -mean / sd
    if a < 0.35:
        while True:
            x = rng.standard_normal()
            if x > a:
                return mean + sd * x
    lam = 0.5 * (a + math.sqrt(a * a + 4.0))
    while True:
        x = a + rng.standard_exponential() / lam
        diff = x - lam
        if rng.random() <= math.exp(-0.5 * diff * diff):
            return mean + sd * x


@njit(cache=True)
def _linpred_var(beta0, beta, G, A, j, out):
    """Non-baseline logits of variable j for all subjects: out is (n, d-1)."""
    n = A.shape[0]
    dm1 = beta0.shape[1]
    K = beta.shape[2]
    for i in range(n):
        for c in range(dm1):
            v = beta0[j, c]
            for k in range(K):
                if G[j, k] == 1 and A[i, k] == 1:
                    v += beta[j, c, k]
            out[i, c] = v


@njit(cache=True)
def _lse_excluding(row, c):
    """log sum over categories != c of exp(logit), baseline logit 0."""
    dm1 = row.shape[0]
    m = 0.0  # baseline logit
    for l in range(dm1):
        if l != c and row[l] > m:
            m = row[l]
    s = math.exp(0.0 - m)
    for l in range(dm1):
        if l != c:
            s += math.exp(row[l] - m)
    return m + math.log(s)


@njit(cache=True)
def _lse_full(row):
    """log sum over all categories of exp(logit), baseline logit 0."""
    dm1 = row.shape[0]
    m = 0.0
    for l in range(dm1):
        if row[l] > m:
            m = row[l]
    s = math.exp(0.0 - m)
    for l in range(dm1):
        s += math.exp(row[l] - m)
    return m + math.log(s)


@njit(cache=True)
def _loglik_obs(y0, beta0, beta, G, A):
    """Log-likelihood of the observed table under current (beta, G, A)."""
    n, p = y0.shape
    dm1 = beta0.shape[1]
    K = beta.shape[2]
    total = 0.0
    row = np.empty(dm1)
    for i in range(n):
        for j in range(p):
            for c in range(dm1):
                v = beta0[j, c]
                for k in range(K):
                    if G[j, k] == 1 and A[i, k] == 1:
                        v += beta[j, c, k]
                row[c] = v
            lse = _lse_full(row)
            c_obs = y0[i, j]
            x = row[c_obs] if c_obs < dm1 else 0.0
            total += x - lse
    return total


@njit(cache=True)
def _draw_w_var(L, W, j, rng):
    """All Polya-Gamma auxiliaries of variable j given current logits L."""
    n, dm1 = L.shape
    for c in range(dm1):
        for i in range(n):
            C = _lse_excluding(L[i], c)
            W[i, j, c] = pg_draw(L[i, c] - C, rng)


@njit(cache=True)
def _beta_block(
    y0, L, W, A, G, beta0, beta, sigma2, j, c,
    mu0, sigma0_sq, v0, positivity, refresh_w, rng,
):
    """One coefficient block (variable j, category c).

    Optionally refreshes the block's Polya-Gamma auxiliaries from the
    current logits, then draws (intercept, active main effects) from the
    Gaussian full conditional; inactive effects come from the pseudo-prior.
    With positivity the block is updated coordinate-wise with the active
    coordinates truncated to (0, inf).  L[:, c] is left consistent with the
    new coefficients.
    """
    n = y0.shape[0]
    K = beta.shape[2]
    ks = np.empty(K, dtype=np.int64)
    m = 0
    for k in range(K):
        if G[j, k] == 1:
            ks[m] = k
            m += 1
        else:
            beta[j, c, k] = v0 * rng.standard_normal()

    dim = m + 1
    P = np.zeros((dim, dim))
    b = np.zeros(dim)
    P[0, 0] = 1.0 / sigma0_sq
    b[0] = mu0 / sigma0_sq
    for l in range(m):
        P[l + 1, l + 1] = 1.0 / sigma2[c, ks[l]]

    for i in range(n):
        C = _lse_excluding(L[i], c)
        if refresh_w:
            W[i, j, c] = pg_draw(L[i, c] - C, rng)
        w = W[i, j, c]
        yind = 1.0 if y0[i, j] == c else 0.0
        x = (yind - 0.5) / w + C
        # accumulate contributions of the design row (1, a_i[ks])
        P[0, 0] += w
        b[0] += w * x
        for l in range(m):
            if A[i, ks[l]] == 1:
                P[0, l + 1] += w
                P[l + 1, 0] += w
                P[l + 1, l + 1] += w
                b[l + 1] += w * x
                for l2 in range(l + 1, m):
                    if A[i, ks[l2]] == 1:
                        P[l + 1, l2 + 1] += w
                        P[l2 + 1, l + 1] += w

    mu = np.linalg.solve(P, b)
    draw = np.empty(dim)
    if not positivity:
        # beta = mu + Lchol^{-T} z by back-substitution
        Lchol = np.linalg.cholesky(P)
        zvec = np.empty(dim)
        for l in range(dim):
            zvec[l] = rng.standard_normal()
        for l in range(dim - 1, -1, -1):
            s = zvec[l]
            for l2 in range(l + 1, dim):
                s -= Lchol[l2, l] * draw[l2]
            draw[l] = s / Lchol[l, l]
        for l in range(dim):
            draw[l] += mu[l]
    else:
        # one coordinate-wise Gibbs scan starting from the current values
        draw[0] = beta0[j, c]
        for l in range(m):
            draw[l + 1] = beta[j, c, ks[l]]
        for l in range(dim):
            s = 0.0
            for l2 in range(dim):
                if l2 != l:
                    s += P[l, l2] * (draw[l2] - mu[l2])
            cond_mean = mu[l] - s / P[l, l]
            cond_sd = 1.0 / math.sqrt(P[l, l])
            if l == 0:
                draw[l] = cond_mean + cond_sd * rng.standard_normal()
            else:
                draw[l] = _rtnorm_pos(cond_mean, cond_sd, rng)

    beta0[j, c] = draw[0]
    for l in range(m):
        beta[j, c, ks[l]] = draw[l + 1]
    for i in range(n):
        v = draw[0]
        for l in range(m):
            if A[i, ks[l]] == 1:
                v += draw[l + 1]
        L[i, c] = v


@njit(cache=True)
def _update_wbeta(y0, W, A, G, beta0, beta, sigma2, mu0, sigma0_sq, v0, positivity, refresh_w, rng):
    n, p = y0.shape
    dm1 = beta0.shape[1]
    L = np.empty((n, dm1))
    for j in range(p):
        _linpred_var(beta0, beta, G, A, j, L)
        for c in range(dm1):
            _beta_block(
                y0, L, W, A, G, beta0, beta, sigma2, j, c,
                mu0, sigma0_sq, v0, positivity, refresh_w, rng,
            )


@njit(cache=True)
def _update_w_all(W, A, G, beta0, beta, rng):
    n = A.shape[0]
    p = beta0.shape[0]
    dm1 = beta0.shape[1]
    L = np.empty((n, dm1))
    for j in range(p):
        _linpred_var(beta0, beta, G, A, j, L)
        _draw_w_var(L, W, j, rng)


@njit(cache=True)
def _slab_logpdf(x, var, positivity):
    if positivity:
        if x <= 0.0:
            return -np.inf
        return math.log(2.0) - 0.5 * (_LOG2PI + math.log(var)) - 0.5 * x * x / var
    return -0.5 * (_LOG2PI + math.log(var)) - 0.5 * x * x / var


@njit(cache=True)
def _update_g_gamma(y0, A, G, beta0, beta, sigma2, gamma_box, v0, positivity, rng):
    """Edge indicators g[j,k] one at a time, then the inclusion probability."""
    n, p = y0.shape
    dm1 = beta0.shape[1]
    K = beta.shape[2]
    gamma = gamma_box[0]
    log_gamma_odds = math.log(gamma) - math.log1p(-gamma)
    L = np.empty((n, dm1))
    work = np.empty(dm1)
    for j in range(p):
        # running logits under the current G row, kept in sync with flips
        _linpred_var(beta0, beta, G, A, j, L)
        for k in range(K):
            log_odds = log_gamma_odds
            for c in range(dm1):
                bb = beta[j, c, k]
                log_odds += _slab_logpdf(bb, sigma2[c, k], positivity)
                log_odds -= -0.5 * (_LOG2PI + math.log(v0 * v0)) - 0.5 * bb * bb / (v0 * v0)
            g_cur = G[j, k]
            if not np.isinf(log_odds):
                # likelihood ratio over subjects with the trait present
                for i in range(n):
                    if A[i, k] != 1:
                        continue
                    c_obs = y0[i, j]
                    for c in range(dm1):
                        work[c] = L[i, c] - (beta[j, c, k] if g_cur == 1 else 0.0)
                    x0 = work[c_obs] if c_obs < dm1 else 0.0
                    ll0 = x0 - _lse_full(work)
                    for c in range(dm1):
                        work[c] += beta[j, c, k]
                    x1 = work[c_obs] if c_obs < dm1 else 0.0
                    ll1 = x1 - _lse_full(work)
                    log_odds += ll1 - ll0
            if log_odds > 0:
                p1 = 1.0 / (1.0 + math.exp(-log_odds))
            else:
                e = math.exp(log_odds)
                p1 = e / (1.0 + e)
            g_new = 1 if rng.random() < p1 else 0
            if g_new != g_cur:
                sign = 1.0 if g_new == 1 else -1.0
                for i in range(n):
                    if A[i, k] == 1:
                        for c in range(dm1):
                            L[i, c] += sign * beta[j, c, k]
                G[j, k] = g_new
    ssum = 0.0
    for j in range(p):
        for k in range(K):
            ssum += G[j, k]
    gamma_box[0] = rng.beta(1.0 + ssum, 1.0 + p * K - ssum)


@njit(cache=True)
def _update_sigma_fixed(G, beta, sigma2, a_sigma, b_sigma, rng):
    p = beta.shape[0]
    dm1 = beta.shape[1]
    K = beta.shape[2]
    for k in range(K):
        cnt = 0.0
        for j in range(p):
            cnt += G[j, k]
        for c in range(dm1):
            ssq = 0.0
            for j in range(p):
                if G[j, k] == 1:
                    ssq += beta[j, c, k] * beta[j, c, k]
            shape = a_sigma + 0.5 * cnt
            scale = b_sigma + 0.5 * ssq
            sigma2[c, k] = scale / rng.gamma(shape, 1.0)


@njit(cache=True)
def _update_csp(G, beta, sigma2, v, pi, zind, a_sigma, b_sigma, alpha, theta_inf, rng):
    """Stick-breaking spike-and-slab block over column variances.

    Indicators are drawn with the slab variances integrated out (normal
    spike vs heavy-tailed slab marginal on the active coefficients), then
    the variances and the stick fractions given the indicators, and the
    cumulative spike probabilities are recomputed.
    """
    p = beta.shape[0]
    dm1 = beta.shape[1]
    K = beta.shape[2]

    logw = np.empty(K)
    acc = 0.0
    for l in range(K):
        vl = v[l] if l < K - 1 else 1.0
        logw[l] = math.log(vl) + acc
        acc += math.log1p(-vl) if l < K - 1 else -np.inf

    # indicators zind[k] in 1..K
    wt = np.empty(K)
    for k in range(K):
        pe = 0.0
        for j in range(p):
            pe += G[j, k]
        spike = 0.0
        slab = 0.0
        for c in range(dm1):
            ssq = 0.0
            for j in range(p):
                if G[j, k] == 1:
                    bb = beta[j, c, k]
                    ssq += bb * bb
            spike += -0.5 * pe * (_LOG2PI + math.log(theta_inf)) - 0.5 * ssq / theta_inf
            slab += (
                a_sigma * math.log(b_sigma)
                + math.lgamma(a_sigma + 0.5 * pe)
                - math.lgamma(a_sigma)
                - 0.5 * pe * _LOG2PI
                - (a_sigma + 0.5 * pe) * math.log(b_sigma + 0.5 * ssq)
            )
        mx = -np.inf
        for l in range(K):
            wt[l] = logw[l] + (spike if l <= k else slab)
            if wt[l] > mx:
                mx = wt[l]
        tot = 0.0
        for l in range(K):
            wt[l] = math.exp(wt[l] - mx)
            tot += wt[l]
        u = rng.random() * tot
        cum = 0.0
        pick = K - 1
        for l in range(K):
            cum += wt[l]
            if u < cum:
                pick = l
                break
        zind[k] = pick + 1

    # slab or pinned spike variances given the indicators
    for k in range(K):
        cnt = 0.0
        for j in range(p):
            cnt += G[j, k]
        for c in range(dm1):
            if zind[k] > k + 1:
                ssq = 0.0
                for j in range(p):
                    if G[j, k] == 1:
                        ssq += beta[j, c, k] * beta[j, c, k]
                shape = a_sigma + 0.5 * cnt
                scale = b_sigma + 0.5 * ssq
                sigma2[c, k] = scale / rng.gamma(shape, 1.0)
            else:
                sigma2[c, k] = theta_inf

    # stick fractions and cumulative spike probabilities
    for k in range(K - 1):
        eq = 0.0
        gt = 0.0
        for l in range(K):
            if zind[l] == k + 1:
                eq += 1.0
            elif zind[l] > k + 1:
                gt += 1.0
        v[k] = rng.beta(1.0 + eq, alpha + gt)
    v[K - 1] = 1.0
    acc = 0.0
    cum = 0.0
    for l in range(K):
        vl = v[l]
        w_l = vl * math.exp(acc)
        cum += w_l
        pi[l] = cum
        acc += math.log1p(-vl) if l < K - 1 else -np.inf
    pi[K - 1] = 1.0


@njit(cache=True)
def _update_tau_eta(A, z, tau, eta, rng):
    n, K = A.shape
    B = tau.shape[0]
    conc = np.empty(B)
    for b in range(B):
        conc[b] = 1.0
    for i in range(n):
        conc[z[i]] += 1.0
    tot = 0.0
    for b in range(B):
        tau[b] = rng.gamma(conc[b], 1.0)
        tot += tau[b]
    for b in range(B):
        tau[b] /= tot
    for k in range(K):
        for b in range(B):
            on = 0.0
            off = 0.0
            for i in range(n):
                if z[i] == b:
                    if A[i, k] == 1:
                        on += 1.0
                    else:
                        off += 1.0
            eta[k, b] = rng.beta(1.0 + on, 1.0 + off)


@njit(cache=True)
def _update_az(y0, A, z, G, beta0, beta, tau, eta, rng):
    """Subject traits (sequentially per coordinate) and deep labels."""
    n, p = y0.shape
    dm1 = beta0.shape[1]
    K = beta.shape[2]
    B = tau.shape[0]
    L = np.empty((p, dm1))
    logq = np.empty(B)
    for i in range(n):
        for j in range(p):
            for c in range(dm1):
                vv = beta0[j, c]
                for k in range(K):
                    if G[j, k] == 1 and A[i, k] == 1:
                        vv += beta[j, c, k]
                L[j, c] = vv
        for k in range(K):
            e = eta[k, z[i]]
            log_odds = math.log(e) - math.log1p(-e)
            a_cur = A[i, k]
            for j in range(p):
                if G[j, k] != 1:
                    continue
                c_obs = y0[i, j]
                # logits with the trait on / off
                lse1 = 0.0
                lse0 = 0.0
                x1 = 0.0
                x0 = 0.0
                m1 = 0.0
                m0 = 0.0
                for c in range(dm1):
                    base = L[j, c] - (beta[j, c, k] if a_cur == 1 else 0.0)
                    v1 = base + beta[j, c, k]
                    v0_ = base
                    if v1 > m1:
                        m1 = v1
                    if v0_ > m0:
                        m0 = v0_
                s1 = math.exp(-m1)
                s0 = math.exp(-m0)
                for c in range(dm1):
                    base = L[j, c] - (beta[j, c, k] if a_cur == 1 else 0.0)
                    v1 = base + beta[j, c, k]
                    v0_ = base
                    s1 += math.exp(v1 - m1)
                    s0 += math.exp(v0_ - m0)
                    if c == c_obs:
                        x1 = v1
                        x0 = v0_
                lse1 = m1 + math.log(s1)
                lse0 = m0 + math.log(s0)
                if c_obs >= dm1:
                    x1 = 0.0
                    x0 = 0.0
                log_odds += (x1 - lse1) - (x0 - lse0)
            if log_odds > 0:
                p1 = 1.0 / (1.0 + math.exp(-log_odds))
            else:
                ee = math.exp(log_odds)
                p1 = ee / (1.0 + ee)
            a_new = 1 if rng.random() < p1 else 0
            if a_new != a_cur:
                for j in range(p):
                    if G[j, k] == 1:
                        for c in range(dm1):
                            L[j, c] += beta[j, c, k] if a_new == 1 else -beta[j, c, k]
                A[i, k] = a_new
        # deep label
        mx = -np.inf
        for b in range(B):
            s = math.log(tau[b])
            for k in range(K):
                e = eta[k, b]
                s += math.log(e) if A[i, k] == 1 else math.log1p(-e)
            logq[b] = s
            if s > mx:
                mx = s
        tot = 0.0
        for b in range(B):
            logq[b] = math.exp(logq[b] - mx)
            tot += logq[b]
        u = rng.random() * tot
        cum = 0.0
        pick = B - 1
        for b in range(B):
            cum += logq[b]
            if u < cum:
                pick = b
                break
        z[i] = pick


@njit(cache=True)
def _sweep(
    y0, W, A, z, G, beta0, beta, sigma2, gamma_box, tau, eta,
    csp_v, csp_pi, csp_zind, use_csp,
    mu0, sigma0_sq, v0, a_sigma, b_sigma, alpha_csp, theta_inf,
    positivity, rng,
):
    """One full Gibbs sweep in the documented block order."""
    _update_wbeta(
        y0, W, A, G, beta0, beta, sigma2, mu0, sigma0_sq, v0, positivity, True, rng
    )
    _update_g_gamma(y0, A, G, beta0, beta, sigma2, gamma_box, v0, positivity, rng)
    if use_csp:
        _update_csp(
            G, beta, sigma2, csp_v, csp_pi, csp_zind,
            a_sigma, b_sigma, alpha_csp, theta_inf, rng,
        )
    else:
        _update_sigma_fixed(G, beta, sigma2, a_sigma, b_sigma, rng)
    _update_tau_eta(A, z, tau, eta, rng)
    _update_az(y0, A, z, G, beta0, beta, tau, eta, rng)


# ---------------------------------------------------------------------------
# Python-level wrappers and the chain driver
# ---------------------------------------------------------------------------


def _dataset_codes(data) -> np.ndarray:
    """0-based category codes; enforces constant cardinality."""
    if isinstance(data, Dataset):
        card = set(data.cardinalities)
        if len(card) != 1:
            raise InputError("sampler requires a constant cardinality across columns")
        return np.ascontiguousarray(data.values - 1, dtype=np.int64)
    return np.ascontiguousarray(np.asarray(data, dtype=np.int64))


def compute_phi_C(state: ChainState, i: int, j: int, c: int) -> tuple[float, float]:
    """Linear-predictor offset pair for one (subject, variable, category).

    C is the log-sum-exp of the other categories' logits (baseline included
    at logit zero) and phi is the category logit minus C, both computed
    with max-subtraction.
    """
    dm1 = state.beta0.shape[1]
    row = np.empty(dm1)
    for cc in range(dm1):
        row[cc] = state.beta0[j, cc] + float(
            np.sum(state.beta[j, cc] * state.G[j] * state.A[i])
        )
    C = _lse_excluding(row, c)
    return float(row[c] - C), float(C)


def initial_state(y0: np.ndarray, config: SamplerConfig, rng: np.random.Generator) -> ChainState:
    """Overdispersed prior-consistent starting point."""
    n, p = y0.shape
    d = int(y0.max()) + 1
    dm1 = d - 1
    K, B = config.K, config.B
    G = rng.integers(0, 2, size=(p, K)).astype(np.int64)
    gamma = float(rng.beta(1.0, 1.0))
    csp_v = csp_pi = csp_zind = None
    if config.mode == CSP:
        csp_v = np.empty(K)
        csp_v[: K - 1] = rng.beta(1.0, config.alpha_csp, size=K - 1)
        csp_v[K - 1] = 1.0
        w = csp_v * np.concatenate([[1.0], np.cumprod(1.0 - csp_v[:-1])])
        csp_pi = np.minimum(np.cumsum(w), 1.0)
        csp_pi[-1] = 1.0
        csp_zind = np.array(
            [1 + int(rng.choice(K, p=w / w.sum())) for _ in range(K)], dtype=np.int64
        )
        sigma2 = np.empty((dm1, K))
        for k in range(K):
            if csp_zind[k] > k + 1:
                sigma2[:, k] = config.b_sigma / rng.gamma(config.a_sigma, 1.0, size=dm1)
            else:
                sigma2[:, k] = config.theta_inf
    else:
        sigma2 = config.b_sigma / rng.gamma(config.a_sigma, 1.0, size=(dm1, K))
    beta0 = config.mu0 + math.sqrt(config.sigma0_sq) * rng.standard_normal((p, dm1))
    beta = np.where(
        G[:, None, :] == 1,
        np.abs(rng.standard_normal((p, dm1, K)))
        if config.positivity_constraint
        else rng.standard_normal((p, dm1, K)),
        config.v0 * rng.standard_normal((p, dm1, K)),
    )
    tau = rng.dirichlet(np.ones(B))
    eta = rng.beta(1.0, 1.0, size=(K, B))
    A = rng.integers(0, 2, size=(n, K)).astype(np.int64)
    z = rng.integers(0, B, size=n).astype(np.int64)
    W = np.full((n, p, dm1), 0.25)
    return ChainState(
        beta0=beta0, beta=beta, G=G, sigma2=sigma2, gamma=gamma,
        tau=tau, eta=eta, A=A, z=z, W=W,
        csp_v=csp_v, csp_pi=csp_pi, csp_zind=csp_zind,
    )


def _hyper_tuple(config: SamplerConfig):
    return (
        config.mu0, config.sigma0_sq, config.v0,
        config.a_sigma, config.b_sigma, config.alpha_csp, config.theta_inf,
    )


def _state_sweep(state: ChainState, y0: np.ndarray, config: SamplerConfig, rng) -> None:
    gamma_box = np.array([state.gamma])
    use_csp = config.mode == CSP
    dummy = np.zeros(1)
    dummyi = np.zeros(1, dtype=np.int64)
    _sweep(
        y0, state.W, state.A, state.z, state.G, state.beta0, state.beta,
        state.sigma2, gamma_box, state.tau, state.eta,
        state.csp_v if use_csp else dummy,
        state.csp_pi if use_csp else dummy,
        state.csp_zind if use_csp else dummyi,
        use_csp,
        *_hyper_tuple(config),
        config.positivity_constraint,
        rng,
    )
    state.gamma = float(gamma_box[0])


# Functional single-block wrappers used by the unit tests; each copies the
# state, applies exactly one full-conditional update, and returns the copy.


def update_w(state: ChainState, rng: np.random.Generator) -> ChainState:
    out = state.copy()
    _update_w_all(out.W, out.A, out.G, out.beta0, out.beta, rng)
    return out


def update_beta(state: ChainState, data, config: SamplerConfig, rng) -> ChainState:
    """Coefficient blocks given the stored Polya-Gamma auxiliaries."""
    out = state.copy()
    y0 = _dataset_codes(data)
    _update_wbeta(
        y0, out.W, out.A, out.G, out.beta0, out.beta, out.sigma2,
        config.mu0, config.sigma0_sq, config.v0,
        config.positivity_constraint, False, rng,
    )
    return out


def update_wbeta(state: ChainState, data, config: SamplerConfig, rng) -> ChainState:
    """Auxiliaries refreshed per block immediately before each beta draw."""
    out = state.copy()
    y0 = _dataset_codes(data)
    _update_wbeta(
        y0, out.W, out.A, out.G, out.beta0, out.beta, out.sigma2,
        config.mu0, config.sigma0_sq, config.v0,
        config.positivity_constraint, True, rng,
    )
    return out


def update_g(state: ChainState, data, config: SamplerConfig, rng) -> ChainState:
    out = state.copy()
    y0 = _dataset_codes(data)
    gamma_box = np.array([out.gamma])
    _update_g_gamma(
        y0, out.A, out.G, out.beta0, out.beta, out.sigma2, gamma_box,
        config.v0, config.positivity_constraint, rng,
    )
    out.gamma = float(gamma_box[0])
    return out


def update_sigma_fixedK(state: ChainState, config: SamplerConfig, rng) -> ChainState:
    out = state.copy()
    _update_sigma_fixed(out.G, out.beta, out.sigma2, config.a_sigma, config.b_sigma, rng)
    return out


def update_csp(state: ChainState, config: SamplerConfig, rng) -> ChainState:
    if config.mode != CSP or state.csp_v is None:
        raise InputError("update_csp requires csp mode")
    out = state.copy()
    _update_csp(
        out.G, out.beta, out.sigma2, out.csp_v, out.csp_pi, out.csp_zind,
        config.a_sigma, config.b_sigma, config.alpha_csp, config.theta_inf, rng,
    )
    return out


def update_tau_eta(state: ChainState, rng: np.random.Generator) -> ChainState:
    out = state.copy()
    _update_tau_eta(out.A, out.z, out.tau, out.eta, rng)
    return out


def update_A_Z(state: ChainState, data, rng: np.random.Generator) -> ChainState:
    out = state.copy()
    y0 = _dataset_codes(data)
    _update_az(y0, out.A, out.z, out.G, out.beta0, out.beta, out.tau, out.eta, rng)
    return out


def loglik(state: ChainState, data) -> float:
    y0 = _dataset_codes(data)
    return float(_loglik_obs(y0, state.beta0, state.beta, state.G, state.A))


def run_chain(
    data: Dataset,
    config: SamplerConfig,
    rng: np.random.Generator | None = None,
    progress: callable = None,
) -> PosteriorDraws:
    """Run one chain and return the thinned post-burn-in draws.

    Deterministic for a fixed config.seed.  Aborts with the iteration index
    if a retained draw has non-finite state or log-likelihood.
    """
    y0 = _dataset_codes(data)
    n, p = y0.shape
    d = data.cardinalities[0] if isinstance(data, Dataset) else int(y0.max()) + 1
    if rng is None:
        rng = np.random.default_rng(config.seed)
    state = initial_state(y0, config, rng)
    dm1 = state.beta0.shape[1]
    K, B = config.K, config.B
    R = config.n_retained
    use_csp = config.mode == CSP

    out = {
        "beta0": np.empty((R, p, dm1)),
        "beta": np.empty((R, p, dm1, K)),
        "G": np.empty((R, p, K), dtype=np.int8),
        "sigma2": np.empty((R, dm1, K)),
        "gamma": np.empty(R),
        "tau": np.empty((R, B)),
        "eta": np.empty((R, K, B)),
        "A": np.empty((R, n, K), dtype=np.int8),
        "Z": np.empty((R, n), dtype=np.int16),
        "loglik": np.empty(R),
    }
    if use_csp:
        out["csp_pi"] = np.empty((R, K))
        out["csp_zind"] = np.empty((R, K), dtype=np.int16)
        out["csp_v"] = np.empty((R, K))

    running = {"loglik": [], "iteration": [], "mean_g": [], "mean_abs_beta": []}
    t0 = time.perf_counter()
    r = 0
    for it in range(1, config.iterations + 1):
        _state_sweep(state, y0, config, rng)
        if it > config.burn_in and (it - config.burn_in) % config.thin == 0:
            ll = float(_loglik_obs(y0, state.beta0, state.beta, state.G, state.A))
            if not (
                np.isfinite(ll)
                and np.isfinite(state.beta0).all()
                and np.isfinite(state.beta).all()
                and np.isfinite(state.sigma2).all()
            ):
                raise NumericalError(f"non-finite sampler state at iteration {it}")
            out["beta0"][r] = state.beta0
            out["beta"][r] = state.beta
            out["G"][r] = state.G
            out["sigma2"][r] = state.sigma2
            out["gamma"][r] = state.gamma
            out["tau"][r] = state.tau
            out["eta"][r] = state.eta
            out["A"][r] = state.A
            out["Z"][r] = state.z + 1
            out["loglik"][r] = ll
            if use_csp:
                out["csp_pi"][r] = state.csp_pi
                out["csp_zind"][r] = state.csp_zind
                out["csp_v"][r] = state.csp_v
            r += 1
        if it % max(1, config.iterations // 20) == 0:
            running["iteration"].append(it)
            running["loglik"].append(float(_loglik_obs(y0, state.beta0, state.beta, state.G, state.A)))
            running["mean_g"].append(float(state.G.mean()))
            running["mean_abs_beta"].append(float(np.abs(state.beta).mean()))
            if progress is not None:
                progress(it, config.iterations, running)

    meta = {
        "runtime_seconds": time.perf_counter() - t0,
        "n": n,
        "p": p,
        "d": int(d),
        "running_means": running,
        "positivity_constraint": config.positivity_constraint,
    }
    return PosteriorDraws(
        config=config,
        csp_pi=out.get("csp_pi"),
        csp_zind=out.get("csp_zind"),
        csp_v=out.get("csp_v"),
        meta=meta,
        **{k: v for k, v in out.items() if not k.startswith("csp_")},
    )


def estimate_k_star(draws: PosteriorDraws) -> float:
    """Effective number of active latent columns under the shrinkage prior.

    Posterior mean of sum_k (1 - pi_k) over the retained draws.
    """
    if draws.csp_pi is None:
        raise InputError("effective-K estimate requires csp-mode draws")
    return float((1.0 - draws.csp_pi).sum(axis=1).mean())


def estimate_k_star_indicator(draws: PosteriorDraws) -> float:
    """Indicator-form estimate: mean count of columns whose label exceeds k."""
    if draws.csp_zind is None:
        raise InputError("effective-K estimate requires csp-mode draws")
    K = draws.csp_zind.shape[1]
    ks = np.arange(1, K + 1)
    return float((draws.csp_zind > ks[None, :]).sum(axis=1).mean())
