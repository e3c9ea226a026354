"""Distinguisher statistics: quantiles, data complexity, the chi-square statistic T."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

LN2 = math.log(2.0)

MULTIPLE = "multiple"
MULTIDIM = "multidimensional"


@dataclass(frozen=True)
class ErrorProbs:
    """Error probabilities carried as log2 values so 2^-186 stays exact.

    ``beta0`` is the probability that the right key fails the test (its
    statistic lands above tau = mu0 + sigma0 z_{1-beta0}); ``beta1`` is the
    probability that a wrong key passes (tau = mu1 - sigma1 z_{1-beta1}).
    """

    log2_beta0: float
    log2_beta1: float

    def __post_init__(self):
        for name in ("log2_beta0", "log2_beta1"):
            if not getattr(self, name) < 0:
                raise ValueError(f"{name} must be < 0 (probability in (0, 1))")

    @classmethod
    def from_probs(cls, beta0: float, beta1: float) -> "ErrorProbs":
        for b in (beta0, beta1):
            if not 0 < b < 1:
                raise ValueError("error probabilities must lie in (0, 1)")
        return cls(math.log2(beta0), math.log2(beta1))

    @property
    def beta0(self) -> float:
        return 2.0**self.log2_beta0

    @property
    def beta1(self) -> float:
        return 2.0**self.log2_beta1

    @property
    def z0(self) -> float:
        return upper_quantile(self.log2_beta0)

    @property
    def z1(self) -> float:
        return upper_quantile(self.log2_beta1)


TARGET_6R = ErrorProbs(-2.7, -90.0)
TARGET_7R = ErrorProbs(-2.7, -186.0)


def normal_quantile(p: float) -> float:
    """z with Phi(z) = p."""
    if not 0 < p < 1:
        raise ValueError(f"probability {p} outside (0, 1)")
    return float(special.ndtri(p))


def upper_quantile(log2_tail: float) -> float:
    """z_{1-beta} for beta = 2^log2_tail, accurate deep into the tail.

    Uses the log-domain inverse CDF so tails like 2^-186 do not underflow.
    """
    if not log2_tail < 0:
        raise ValueError("tail must be a probability below 1 (log2 < 0)")
    return -float(special.ndtri_exp(log2_tail * LN2))


def _log2(x: float) -> float:
    return math.log2(x) if x > 0 else -math.inf


@dataclass(frozen=True)
class ComplexityEstimate:
    log2_N: float
    tau: float
    model: str
    n: int
    l: int
    exceeds_codebook: bool

    @property
    def log2_tau(self) -> float:
        return _log2(self.tau)


def required_data_multiple(n: int, l: int, errs: ErrorProbs) -> ComplexityEstimate:
    """Data for the correlation-sum test over ``l`` independent approximations."""
    z0, z1 = errs.z0, errs.z1
    denom = math.sqrt(l / 2) - z1
    if denom <= 0:
        raise ValueError(f"l = {l} is too small: sqrt(l/2) must exceed z_(1-beta1) = {z1:.3f}")
    log2_N = n + math.log2((z0 + z1) / denom)
    # mu0 + sigma0 z0 with mu0 = l/N, sigma0 = sqrt(2l)/N, evaluated in log space
    log2_tau = math.log2(l + math.sqrt(2 * l) * z0) - log2_N
    return ComplexityEstimate(log2_N, 2.0**log2_tau, MULTIPLE, n, l, log2_N > n)


def required_data_multidim(n: int, l: int, errs: ErrorProbs) -> ComplexityEstimate:
    z0, z1 = errs.z0, errs.z1
    ratio = (z0 + z1) / (math.sqrt((l - 1) / 2) + z0)
    # (2^n - 1) ratio + 1, in log space; the -1/+1 are far below double precision at n=128
    N = (2.0**n - 1) * ratio + 1
    log2_N = math.log2(N)
    params = multidim_params(n, N, l)
    tau = params.mu0 + params.sigma0 * z0
    return ComplexityEstimate(log2_N, tau, MULTIDIM, n, l, log2_N > n)


@dataclass(frozen=True)
class DistParams:
    mu0: float
    sigma0: float
    mu1: float
    sigma1: float
    model: str


def multidim_params(n: int, N: float, l: int) -> DistParams:
    """Right-key (balanced, without replacement) and wrong-key chi-square moments."""
    if not 0 < N <= 2.0**n:
        raise ValueError(f"N = {N} outside (0, 2^{n}]")
    frac = (2.0**n - N) / (2.0**n - 1)
    mu0 = (l - 1) * frac
    sigma0 = math.sqrt(2 * (l - 1)) * frac
    return DistParams(mu0, sigma0, float(l - 1), math.sqrt(2 * (l - 1)), MULTIDIM)


def multiple_params(n: int, N: float, l: int) -> DistParams:
    if N <= 0:
        raise ValueError("N must be positive")
    mu0 = l / N
    sigma0 = math.sqrt(2 * l) / N
    return DistParams(mu0, sigma0, mu0 + l / 2.0**n, sigma0 + math.sqrt(2 * l) / 2.0**n, MULTIPLE)


def statistic_T_numerator(counts, N: int) -> int:
    """Exact integer N*T = 2^m sum V^2 - N^2 (Pearson form)."""
    counts = np.asarray(counts, dtype=np.int64)
    size = len(counts)
    if size & (size - 1) or size < 2:
        raise ValueError("counter length must be a power of two >= 2")
    total = int(counts.sum())
    if total != N:
        raise ValueError(f"counters sum to {total}, expected N = {N}")
    # sum V^2 <= N^2, so int64 is exact below N = 2^31
    c = counts if N < 1 << 31 else counts.astype(object)
    return size * int(np.dot(c, c)) - N * N


def statistic_T(counts, N: int, m: int | None = None) -> float:
    """Pearson chi-square of the counters against the uniform distribution.

    T = sum_z (V[z] - N 2^-m)^2 / (N 2^-m).  Its mean is l - 1 for a random
    source and mu0 for a balanced one, with l = 2^m.
    """
    counts = np.asarray(counts)
    if m is not None and len(counts) != 1 << m:
        raise ValueError(f"expected 2^{m} counters, got {len(counts)}")
    if N <= 0:
        raise ValueError("N must be positive")
    return statistic_T_numerator(counts, N) / N


def statistic_T_batch(counts: np.ndarray) -> np.ndarray:
    """Vectorized T over rows of a ``(trials, 2^m)`` count matrix."""
    counts = np.asarray(counts, dtype=np.float64)
    N = counts.sum(axis=1)
    size = counts.shape[1]
    return size * (counts**2).sum(axis=1) / N - N


def decide(statistic: float, tau: float) -> bool:
    """True when the key survives (statistic strictly below tau)."""
    return statistic < tau


# -- synthetic sources --------------------------------------------------------------


def balanced_counts(rng: np.random.Generator, n: int, N: int, l: int, trials: int) -> np.ndarray:
    """Counters from N draws without replacement out of a perfectly balanced 2^n source."""
    pop = np.full(l, (1 << n) // l, dtype=np.int64)
    return np.stack([rng.multivariate_hypergeometric(pop, N) for _ in range(trials)])


def random_function_counts(rng: np.random.Generator, n: int, N: int, l: int, trials: int) -> np.ndarray:
    """Counters from N distinct inputs of a fresh random function F_2^n -> Z_l per trial."""
    out = []
    for _ in range(trials):
        pop = rng.multinomial(1 << n, np.full(l, 1.0 / l))
        out.append(rng.multivariate_hypergeometric(pop, N))
    return np.stack(out)
