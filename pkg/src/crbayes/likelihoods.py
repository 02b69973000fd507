"""Log-domain likelihood kernels for closed-population abundance models.

All functions work with log-gamma as the only special-function primitive so
that population sizes in the millions never overflow, and all of them accept
either a scalar N or an array of (possibly non-integer) N values. Support
violations met during grid scans (N below the number of observed animals)
come back as ``-inf`` rather than exceptions, so optimizers and tail fitters
can scan freely.
"""

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import betaln, gammaln, xlog1py, xlogy

from .data import SufficientStats


class NoFiniteMLEError(RuntimeError):
    """Raised when the profile likelihood has no finite maximizer."""


@dataclass(frozen=True)
class BetaParams:
    """Shape parameters of a Beta distribution on a detection probability."""

    a: float
    b: float

    def __post_init__(self):
        if self.a <= 0 or self.b <= 0:
            raise ValueError("Beta shapes must be positive")


@dataclass(frozen=True)
class HeterogeneityParams:
    """Beta(alpha, beta) population from which per-animal detection rates are drawn."""

    alpha: float
    beta: float

    def __post_init__(self):
        if self.alpha <= 0 or self.beta <= 0:
            raise ValueError("heterogeneity shapes must be positive")


def _as_grid(n):
    """Coerce N to a float array, remembering whether the input was scalar."""
    arr = np.asarray(n, dtype=float)
    return np.atleast_1d(arr), arr.ndim == 0


def _maybe_scalar(values: np.ndarray, scalar: bool):
    return float(values[0]) if scalar else values


def _check_p(p: float) -> None:
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"detection probability must be in [0, 1], got {p}")


def kahn_log_prob(n_j: Sequence[int], n, p: float):
    """Log probability of per-occasion capture counts under iid Binomial(N, p).

    The counts on the K occasions are modelled as independent Binomial(N, p)
    draws, so the result is

        sum_j log C(N, n_j) + n. log p + (K N - n.) log(1 - p).

    N below max(n_j) is rejected: the count model is undefined there.
    """
    _check_p(p)
    counts = np.asarray(n_j, dtype=int)
    if counts.ndim != 1 or counts.size == 0 or (counts < 0).any():
        raise ValueError("n_j must be a non-empty vector of nonnegative counts")
    grid, scalar = _as_grid(n)
    if (grid < counts.max()).any():
        raise ValueError(f"N must be at least max(n_j) = {counts.max()}")
    k = counts.size
    n_dot = int(counts.sum())
    out = np.zeros_like(grid)
    for c in counts:
        out += gammaln(grid + 1) - gammaln(c + 1) - gammaln(grid - c + 1)
    out += xlogy(n_dot, p) + xlog1py(k * grid - n_dot, -p)
    return _maybe_scalar(out, scalar)


def m0_log_prob(stats: SufficientStats, n, p: float):
    """Log probability of a full capture history under constant detection.

    Equals log[ N! / ((N - M)! M!) * p^n. * (1-p)^(K N - n.) ] where M animals
    were observed; N < M gives -inf by convention.
    """
    _check_p(p)
    grid, scalar = _as_grid(n)
    m, k, n_dot = stats.m_k1, stats.k, stats.n_dot
    valid = grid >= m
    safe = np.where(valid, grid, m)
    out = (
        gammaln(safe + 1)
        - gammaln(safe - m + 1)
        - gammaln(m + 1)
        + xlogy(n_dot, p)
        + xlog1py(k * safe - n_dot, -p)
    )
    out = np.where(valid, out, -np.inf)
    return _maybe_scalar(out, scalar)


def m0_profile_log_lik(stats: SufficientStats, n):
    """Profile log likelihood: detection rate replaced by its plug-in n./(K N)."""
    grid, scalar = _as_grid(n)
    m, k, n_dot = stats.m_k1, stats.k, stats.n_dot
    valid = grid >= max(m, 1)
    safe = np.where(valid, grid, max(m, 1))
    p_hat = n_dot / (k * safe)
    out = (
        gammaln(safe + 1)
        - gammaln(safe - m + 1)
        - gammaln(m + 1)
        + xlogy(n_dot, p_hat)
        + xlogy(k * safe - n_dot, 1.0 - p_hat)
    )
    out = np.where(valid, out, -np.inf)
    return _maybe_scalar(out, scalar)


def m0_profile_mle(stats: SufficientStats, window: int = 20) -> tuple[int, float]:
    """Maximize the profile likelihood over integer population sizes.

    Scans upward from the number of observed animals in doubling blocks and
    stops once the profile has decreased for ``window`` consecutive integers
    past the best point (the profile is unimodal in practice; the window
    guards against plateaus). Requires at least one recapture, otherwise the
    profile increases forever and no finite maximizer exists.
    """
    if stats.m_k1 == 0:
        raise NoFiniteMLEError("empty dataset: nothing to estimate")
    if stats.recaptures < 1:
        raise NoFiniteMLEError(
            "no recaptures (r = 0): the profile likelihood has no finite maximizer"
        )
    best_n, best_val = stats.m_k1, -np.inf
    prev = -np.inf
    run = 0
    start, block = stats.m_k1, 256
    done = False
    while not done:
        grid = np.arange(start, start + block)
        vals = np.atleast_1d(m0_profile_log_lik(stats, grid))
        for n_val, val in zip(grid, vals):
            if val > best_val:
                best_val, best_n = float(val), int(n_val)
            run = run + 1 if val < prev else 0
            prev = float(val)
            if run >= window:
                done = True
                break
        start += block
        block *= 2
        if not done and start > 10**9:
            raise NoFiniteMLEError("profile likelihood still rising at N = 1e9")
    p_hat = stats.n_dot / (stats.k * best_n)
    return best_n, p_hat


def mh_integrated_log_prob(stats: SufficientStats, n, params: HeterogeneityParams):
    """Log likelihood of a full history with Beta-distributed detection rates.

    Each animal's detection probability is integrated out against
    Beta(alpha, beta), which turns every per-animal factor into a ratio of
    rising factorials:

        N!/((N-M)! M!) * [prod_{j<K}(beta+j)/(alpha+beta+j)]^(N-M)
        * prod_i [prod_{j<y_i}(alpha+j) prod_{j<K-y_i}(beta+j)] / prod_{j<K}(alpha+beta+j)

    computed as sums of log-gamma differences. N < M gives -inf.
    """
    a, b = params.alpha, params.beta
    grid, scalar = _as_grid(n)
    m, k = stats.m_k1, stats.k
    log_zero_cell = float(
        gammaln(b + k) - gammaln(b) - gammaln(a + b + k) + gammaln(a + b)
    )
    log_obs = 0.0
    for y in stats.y_i_dot:
        log_obs += (
            gammaln(a + y)
            - gammaln(a)
            + gammaln(b + k - y)
            - gammaln(b)
            - gammaln(a + b + k)
            + gammaln(a + b)
        )
    valid = grid >= m
    safe = np.where(valid, grid, m)
    out = (
        gammaln(safe + 1)
        - gammaln(safe - m + 1)
        - gammaln(m + 1)
        + (safe - m) * log_zero_cell
        + log_obs
    )
    out = np.where(valid, out, -np.inf)
    return _maybe_scalar(out, scalar)


def beta_binomial_log_pmf(j, k: int, params: HeterogeneityParams):
    """Log mass at j captures out of k occasions with a Beta-mixed rate."""
    j = np.asarray(j, dtype=float)
    a, b = params.alpha, params.beta
    return (
        gammaln(k + 1)
        - gammaln(j + 1)
        - gammaln(k - j + 1)
        + betaln(a + j, b + k - j)
        - betaln(a, b)
    )


def mh_summary_log_prob(
    f_j: Sequence[int], m_k1: int, n, k: int, params: HeterogeneityParams
):
    """Log likelihood of the capture-frequency summary under Beta-mixed detection.

    Models the counts (N - M, f_1, ..., f_K) of animals caught 0, 1, ..., K
    times as a multinomial with beta-binomial cell probabilities. Up to a
    factor constant in N this matches :func:`mh_integrated_log_prob`.
    """
    freqs = np.asarray(f_j, dtype=int)
    if freqs.ndim != 1 or freqs.size != k or (freqs < 0).any():
        raise ValueError("f_j must have one nonnegative count per occasion")
    if int(freqs.sum()) != m_k1:
        raise ValueError("f_j must sum to the number of observed animals")
    grid, scalar = _as_grid(n)
    log_pi = beta_binomial_log_pmf(np.arange(k + 1), k, params)
    valid = grid >= m_k1
    safe = np.where(valid, grid, m_k1)
    out = (
        gammaln(safe + 1)
        - gammaln(safe - m_k1 + 1)
        - gammaln(freqs + 1).sum()
        + (safe - m_k1) * log_pi[0]
        + float(freqs @ log_pi[1:])
    )
    out = np.where(valid, out, -np.inf)
    return _maybe_scalar(out, scalar)


def york_madigan_log_kernel(n_grid, n_obs: int, k: int, delta: float):
    """Log posterior kernel of a k-cell Dirichlet(delta) multinomial count model.

    log[ Gamma(N+1)/Gamma(N-n+1) * Gamma(N-n+delta)/Gamma(N+k*delta) ]
    with n observed cases; the prior on N is applied elsewhere. Decays like
    N^(-(k-1)*delta) for large N.
    """
    if k < 2:
        raise ValueError("need at least two cells")
    if delta <= 0:
        raise ValueError("delta must be positive")
    if n_obs < 0:
        raise ValueError("observed count must be nonnegative")
    grid, scalar = _as_grid(n_grid)
    valid = grid >= n_obs
    safe = np.where(valid, grid, n_obs)
    out = (
        gammaln(safe + 1)
        - gammaln(safe - n_obs + 1)
        + gammaln(safe - n_obs + delta)
        - gammaln(safe + k * delta)
    )
    out = np.where(valid, out, -np.inf)
    return _maybe_scalar(out, scalar)
