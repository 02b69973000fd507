"""Data-augmentation Gibbs sampler for the constant-detection model.

The population is embedded in a fixed superpopulation of M rows (the observed
animals plus M - M_obs all-zero rows); each row carries a membership
indicator z_i with inclusion probability psi, and detections are Bernoulli
only for members. With psi ~ Beta(1, 1) the induced prior on N = sum(z) is
discrete uniform on {0..M}, so the chain's N-marginal can be validated
against the exact truncated grid posterior. The sweep utility reruns the
chain for increasing M: when the underlying posterior is improper the mean
of N keeps climbing with M, which is the diagnostic this module exists for.
"""

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import CaptureHistory, summarize
from .likelihoods import BetaParams


@dataclass(frozen=True)
class DaConfig:
    """Chain settings for the augmented sampler.

    ``psi_prior`` are the Beta shapes on the inclusion probability; (1, 1)
    induces a flat prior on N over {0..M}, while a small first shape such as
    (0.001, 1) only *approximates* a 1/N prior on N (the induced prior is
    beta-binomial, not exactly scale). ``fix_psi`` pins psi instead of
    sampling it, which with 1.0 makes every row a member.
    """

    m: int
    iters: int = 20_000
    burnin: int = 2_000
    thin: int = 1
    seed: int = 0
    psi_prior: tuple[float, float] = (1.0, 1.0)
    p_prior: BetaParams = field(default_factory=lambda: BetaParams(1.0, 1.0))
    fix_psi: float | None = None

    def __post_init__(self):
        if self.m < 0:
            raise ValueError("augmented size must be nonnegative")
        if not self.iters > self.burnin >= 0:
            raise ValueError("need iters > burnin >= 0")
        if self.thin < 1:
            raise ValueError("thin must be at least 1")
        if self.psi_prior[0] <= 0 or self.psi_prior[1] <= 0:
            raise ValueError("psi prior shapes must be positive")
        if self.fix_psi is not None and not 0.0 < self.fix_psi <= 1.0:
            raise ValueError("fixed psi must be in (0, 1]")


@dataclass
class DaChains:
    """Retained draws plus summaries for one chain."""

    n: np.ndarray
    psi: np.ndarray
    p: np.ndarray
    m: int
    m_k1: int

    def summary(self) -> dict:
        out = {}
        for name, chain in (("N", self.n), ("psi", self.psi), ("p", self.p)):
            q = np.quantile(chain, [0.025, 0.5, 0.975])
            out[name] = {
                "mean": float(chain.mean()),
                "sd": float(chain.std(ddof=1)) if chain.size > 1 else 0.0,
                "q2.5": float(q[0]),
                "median": float(q[1]),
                "q97.5": float(q[2]),
                "ess": effective_sample_size(chain),
            }
        return out


def effective_sample_size(chain: np.ndarray) -> float:
    """ESS via the initial-positive-sequence rule on autocorrelation pairs."""
    x = np.asarray(chain, dtype=float)
    n = x.size
    if n < 4:
        return float(n)
    x = x - x.mean()
    var = float(x @ x) / n
    if var == 0.0:
        return float(n)
    # FFT autocovariance
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, size)
    acov = np.fft.irfft(f * np.conjugate(f), size)[:n].real / n
    rho = acov / var
    tau = 1.0
    m = 1
    while m + 1 < n:
        pair = rho[m] + rho[m + 1]
        if pair < 0.0:
            break
        tau += 2.0 * pair
        m += 2
    return float(n / max(tau, 1.0))


def da_gibbs(data: CaptureHistory, config: DaConfig) -> DaChains:
    """Run the augmented Gibbs sampler and return the retained draws.

    Full conditionals: membership of each all-zero row is Bernoulli with odds
    psi (1-p)^K against 1 - psi (observed rows are members by construction,
    and the all-zero rows are exchangeable, so their indicator sum is drawn
    as one binomial); then p ~ Beta(a_p + n., b_p + K sum(z) - n.) and
    psi ~ Beta(a_psi + sum(z), b_psi + M - sum(z)). N = sum(z) is recorded
    after burn-in at the configured thinning.
    """
    stats = summarize(data)
    m_k1, k, n_dot = stats.m_k1, stats.k, stats.n_dot
    if config.m < m_k1:
        raise ValueError(f"augmented size {config.m} is below the {m_k1} observed animals")
    n_free = config.m - m_k1
    rng = np.random.default_rng(config.seed)
    a_p, b_p = config.p_prior.a, config.p_prior.b
    a_psi, b_psi = config.psi_prior

    # overdispersed start: fair-coin membership for the augmented rows,
    # detection and inclusion rates from their priors
    extra = int(rng.binomial(n_free, 0.5)) if n_free else 0
    p = float(rng.beta(a_p, b_p))
    psi = config.fix_psi if config.fix_psi is not None else float(rng.beta(a_psi, b_psi))
    if config.fix_psi == 1.0:
        extra = n_free

    kept = (config.iters - config.burnin + config.thin - 1) // config.thin
    out_n = np.empty(kept, dtype=int)
    out_psi = np.empty(kept)
    out_p = np.empty(kept)
    idx = 0
    for it in range(config.iters):
        members = m_k1 + extra
        p = float(rng.beta(a_p + n_dot, b_p + k * members - n_dot))
        if config.fix_psi is None:
            psi = float(rng.beta(a_psi + members, b_psi + config.m - members))
        if n_free:
            w = psi * (1.0 - p) ** k
            denom = w + (1.0 - psi)
            # denom is 0 only when psi = 1 and p = 1; membership is then
            # forced by the prior
            prob = min(w / denom, 1.0) if denom > 0.0 else 1.0
            extra = int(rng.binomial(n_free, prob))
        if it >= config.burnin and (it - config.burnin) % config.thin == 0:
            out_n[idx] = m_k1 + extra
            out_psi[idx] = psi
            out_p[idx] = p
            idx += 1
    return DaChains(n=out_n, psi=out_psi, p=out_p, m=config.m, m_k1=m_k1)


@dataclass
class SweepEntry:
    m: int
    mean_n: float
    sd_n: float
    ess: float
    se_mean: float


@dataclass
class SweepReport:
    """Posterior mean of N as a function of the augmented size M.

    ``slope`` is the weighted least-squares slope of mean against M (weights
    from each chain's Monte Carlo standard error) and ``slope_z`` its
    significance; a posterior whose mean keeps growing with M is the
    practical signature of impropriety. ``stable`` holds when the means vary
    by less than ``stability_threshold`` relative to the first sweep point.
    """

    entries: list[SweepEntry]
    slope: float
    slope_se: float
    slope_z: float
    stable: bool
    relative_change: float
    sd_ratio: float
    stability_threshold: float

    def to_dict(self) -> dict:
        return {
            "entries": [
                {
                    "M": e.m,
                    "mean_N": e.mean_n,
                    "sd_N": e.sd_n,
                    "ess": e.ess,
                    "se_mean": e.se_mean,
                }
                for e in self.entries
            ],
            "slope": self.slope,
            "slope_se": self.slope_se,
            "slope_z": self.slope_z,
            "stable": self.stable,
            "relative_change": self.relative_change,
            "sd_ratio": self.sd_ratio,
            "stability_threshold": self.stability_threshold,
        }

    def write_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    def write_csv(self, path: str | Path) -> None:
        with Path(path).open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["M", "mean_N", "sd_N", "ess"])
            for e in self.entries:
                writer.writerow([e.m, repr(e.mean_n), repr(e.sd_n), repr(e.ess)])


def m_sweep(
    data: CaptureHistory,
    m_values: list[int],
    base: DaConfig,
    stability_threshold: float = 0.05,
) -> SweepReport:
    """Rerun the sampler across augmented sizes and test mean-of-N stability.

    Each M gets its own chain (seeded from the base seed plus its index).
    """
    if len(m_values) < 2:
        raise ValueError("need at least two augmented sizes to sweep")
    m_k1 = summarize(data).m_k1
    if any(m < m_k1 for m in m_values):
        raise ValueError("every augmented size must cover the observed animals")

    entries = []
    for i, m in enumerate(m_values):
        cfg = DaConfig(
            m=int(m),
            iters=base.iters,
            burnin=base.burnin,
            thin=base.thin,
            seed=base.seed + i,
            psi_prior=base.psi_prior,
            p_prior=base.p_prior,
            fix_psi=base.fix_psi,
        )
        chains = da_gibbs(data, cfg)
        ess = effective_sample_size(chains.n)
        sd = float(chains.n.std(ddof=1))
        entries.append(
            SweepEntry(
                m=int(m),
                mean_n=float(chains.n.mean()),
                sd_n=sd,
                ess=ess,
                se_mean=sd / np.sqrt(max(ess, 1.0)),
            )
        )

    ms = np.array([e.m for e in entries], dtype=float)
    means = np.array([e.mean_n for e in entries])
    ses = np.array([max(e.se_mean, 1e-12) for e in entries])
    w = 1.0 / ses**2
    xbar = float((w * ms).sum() / w.sum())
    sxx = float((w * (ms - xbar) ** 2).sum())
    slope = float((w * (ms - xbar) * means).sum() / sxx)
    slope_se = float(np.sqrt(1.0 / sxx))
    rel_change = float((means.max() - means.min()) / abs(means[0]))
    return SweepReport(
        entries=entries,
        slope=slope,
        slope_se=slope_se,
        slope_z=slope / slope_se if slope_se > 0 else np.inf,
        stable=rel_change < stability_threshold,
        relative_change=rel_change,
        sd_ratio=float(entries[-1].sd_n / entries[0].sd_n),
        stability_threshold=stability_threshold,
    )
