"""Exact-to-tolerance CDFs for the discrete laws entering the closed-form bounds.

All summation is carried out in linear space with compensated accumulation;
per-term magnitudes are produced from exact integer binomial coefficients and
log-space exponent assembly, which keeps every desk-scale CDF well inside
1e-12 absolute error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

__all__ = [
    "Poisson",
    "Binomial",
    "NegBinomial",
    "DistParams",
    "cdf",
    "poisson_cdf",
    "binomial_cdf",
    "negbinomial_cdf",
    "gamma_fn",
    "truncation_gamma_series",
    "nb_binomial_identity_check",
    "poisson_limit_check",
]


@dataclass(frozen=True)
class Poisson:
    rate: float

    def __post_init__(self):
        if not self.rate >= 0:
            raise ValueError(f"Poisson rate must be >= 0, got {self.rate}")


@dataclass(frozen=True)
class Binomial:
    trials: int
    p: float

    def __post_init__(self):
        if self.trials < 0 or int(self.trials) != self.trials:
            raise ValueError(f"Binomial trials must be a nonnegative integer, got {self.trials}")
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"Binomial p must be in [0,1], got {self.p}")


@dataclass(frozen=True)
class NegBinomial:
    """Counts successes (probability p each) before the r-th failure."""

    failures: int
    p: float

    def __post_init__(self):
        if self.failures < 1 or int(self.failures) != self.failures:
            raise ValueError(f"NegBinomial failures must be an integer >= 1, got {self.failures}")
        if not 0.0 <= self.p < 1.0:
            raise ValueError(f"NegBinomial p must be in [0,1), got {self.p}")


DistParams = Poisson | Binomial | NegBinomial


def cdf(params: DistParams, k: int) -> float:
    """P(X <= k) for the given discrete law; k < 0 returns 0."""
    if isinstance(params, Poisson):
        return poisson_cdf(params.rate, k)
    if isinstance(params, Binomial):
        return binomial_cdf(params.trials, params.p, k)
    if isinstance(params, NegBinomial):
        return negbinomial_cdf(params.failures, params.p, k)
    raise TypeError(f"unsupported distribution parameters: {params!r}")


def poisson_cdf(rate: float, k: int) -> float:
    if k < 0:
        return 0.0
    k = int(k)
    if rate == 0.0:
        return 1.0
    if rate < 700.0:
        # scaled exponent accumulation: term_0 = exp(-rate), term_{j+1} = term_j * rate/(j+1)
        term = math.exp(-rate)
        terms = [term]
        for j in range(k):
            term *= rate / (j + 1)
            terms.append(term)
        return min(1.0, math.fsum(terms))
    # exp(-rate) underflows: assemble each term in log space
    terms = [math.exp(j * math.log(rate) - rate - math.lgamma(j + 1)) for j in range(k + 1)]
    return min(1.0, math.fsum(terms))


def _binomial_pmf(trials: int, p: float, j: int) -> float:
    if p == 0.0:
        return 1.0 if j == 0 else 0.0
    if p == 1.0:
        return 1.0 if j == trials else 0.0
    comb = math.comb(trials, j)
    logmag = j * math.log(p) + (trials - j) * math.log1p(-p)
    if comb < 1e250:
        return comb * math.exp(logmag)
    return math.exp(math.log(comb) + logmag)


def binomial_cdf(trials: int, p: float, k: int) -> float:
    if k < 0:
        return 0.0
    trials = int(trials)
    k = int(k)
    if k >= trials:
        return 1.0
    # sum whichever tail has fewer terms
    if k + 1 <= trials - k:
        total = math.fsum(_binomial_pmf(trials, p, j) for j in range(k + 1))
        return min(1.0, total)
    upper = math.fsum(_binomial_pmf(trials, p, j) for j in range(k + 1, trials + 1))
    return max(0.0, 1.0 - upper)


def negbinomial_cdf(failures: int, p: float, k: int) -> float:
    if k < 0:
        return 0.0
    failures = int(failures)
    k = int(k)
    if p == 0.0:
        return 1.0
    base = failures * math.log1p(-p)
    logp = math.log(p)
    terms = []
    for j in range(k + 1):
        comb = math.comb(j + failures - 1, j)
        logmag = j * logp + base
        if comb < 1e250:
            terms.append(comb * math.exp(logmag))
        else:
            terms.append(math.exp(math.log(comb) + logmag))
    return min(1.0, math.fsum(terms))


def gamma_fn(z: float) -> float:
    """Gamma function on the positive reals."""
    if not z > 0:
        raise ValueError(f"gamma_fn requires z > 0, got {z}")
    return math.gamma(z)


def truncation_gamma_series(beta: float, n: int, ratio: float) -> float:
    """Gamma-ratio series for the truncation bound of the power family.

    Equals ratio**(1 - n/beta) * sum_{k<=n} Gamma(beta-n+k)/(Gamma(beta-n) k!)
    * (1 - ratio**(1/beta))**k; for integer beta it coincides with the
    negative-binomial and binomial CDF forms.  Needs beta > n and ratio in (0, 1].
    """
    if not beta > n:
        raise ValueError(f"series needs beta > n, got beta={beta}, n={n}")
    if not 0.0 < ratio <= 1.0:
        raise ValueError(f"ratio must be in (0,1], got {ratio}")
    u = 1.0 - ratio ** (1.0 / beta)
    coeff = 1.0
    terms = [1.0]
    for k in range(1, n + 1):
        coeff *= (beta - n + k - 1) / k
        terms.append(coeff * u ** k)
    return ratio ** (1.0 - n / beta) * math.fsum(terms)


def nb_binomial_identity_check(beta: int, n: int, p: float, tol: float = 1e-10) -> bool:
    """Whether P(NB(beta-n, p) <= n) and P(B(beta, p) <= n) agree within tol."""
    if beta < n + 1:
        raise ValueError(f"identity needs beta >= n+1, got beta={beta}, n={n}")
    lhs = negbinomial_cdf(beta - n, p, n)
    rhs = binomial_cdf(beta, p, n)
    return abs(lhs - rhs) <= tol


def poisson_limit_check(rate: float, n: int, r_list) -> dict:
    """Deviation of P(B(r, 1-exp(-rate/r)) <= n) from the Poisson CDF along r_list."""
    rs = [int(r) for r in r_list]
    if any(r < 1 for r in rs):
        raise ValueError("trial counts must be >= 1")
    target = poisson_cdf(rate, n)
    deviations = [abs(binomial_cdf(r, 1.0 - math.exp(-rate / r), n) - target) for r in rs]
    pairs = sorted(zip(rs, deviations))
    decreasing = all(pairs[i + 1][1] <= pairs[i][1] + 1e-15 for i in range(len(pairs) - 1))
    return {
        "r": rs,
        "deviations": deviations,
        "max_deviation": max(deviations),
        "decreasing_in_r": decreasing,
    }
