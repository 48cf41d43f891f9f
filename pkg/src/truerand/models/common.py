"""Photon-number statistics and the report type shared by both device models."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.special import gammaln, pdtrc

from truerand.errors import DomainError

# Outcomes (x_v, x_h) in table order.
OUTCOMES = ("00", "01", "10", "11")

TAIL_MASS = 1e-12
N_MAX_CAP = 4096


@dataclass(frozen=True)
class EntropyReport:
    """Entropy rates of a device model, in bits per pulse."""

    hmin_cond: float
    shannon_cond: float
    hmin_uncond: float
    y_star: float | None
    truncation_error: float


def poisson(alpha2: float, n: int) -> float:
    """P(N = n) for a Poisson photon number with mean ``alpha2``.

    Evaluated in log space so large ``n`` neither overflows nor loses the
    result to cancellation.
    """
    if alpha2 < 0 or n < 0:
        raise DomainError("poisson needs alpha2 >= 0 and n >= 0")
    if alpha2 == 0:
        return 1.0 if n == 0 else 0.0
    return math.exp(-alpha2 + n * math.log(alpha2) - math.lgamma(n + 1))


def poisson_pmf(alpha2: float, n_max: int) -> np.ndarray:
    """Vector of P(N = n) for n = 0..n_max."""
    if alpha2 < 0:
        raise DomainError("alpha2 must be >= 0")
    n = np.arange(n_max + 1)
    if alpha2 == 0:
        return (n == 0).astype(float)
    return np.exp(-alpha2 + n * math.log(alpha2) - gammaln(n + 1))


def poisson_tail(alpha2: float, n_max: int) -> float:
    """Mass P(N > n_max) that a truncated sum leaves out."""
    if alpha2 == 0:
        return 0.0
    return float(pdtrc(n_max, alpha2))


def resolve_n_max(alpha2: float, n_max: int | str) -> int:
    """Truncation point: explicit, or the smallest n with tail mass < 1e-12."""
    if n_max != "auto":
        n_max = int(n_max)
        if n_max < 0:
            raise DomainError("n_max must be >= 0")
        return n_max
    if alpha2 == 0:
        return 0
    # the tail at the mean is about 1/2, and it decays fast beyond, so a
    # linear scan from there is short
    n = min(int(alpha2), N_MAX_CAP)
    while n < N_MAX_CAP and poisson_tail(alpha2, n) >= TAIL_MASS:
        n += 1
    return n


def validate_common(alpha2: float, mu: float) -> None:
    if not (math.isfinite(alpha2) and alpha2 >= 0):
        raise DomainError(f"alpha2 must be a finite value >= 0, got {alpha2}")
    if not 0.0 <= mu <= 1.0:
        raise DomainError(f"mu must lie in [0, 1], got {mu}")


def half_power(n: int) -> Fraction:
    return Fraction(1, 2**n)


def binom_half_sum(n: int, lo: int, hi: int) -> float:
    """(1/2)^n * sum_{m=lo}^{hi} C(n, m), with an empty range giving 0.

    Integer arithmetic keeps the sum exact; the final division rounds once.
    """
    lo, hi = max(lo, 0), min(hi, n)
    if lo > hi:
        return 0.0
    return sum(math.comb(n, m) for m in range(lo, hi + 1)) / 2**n


def binom_half_cdf(n: int) -> np.ndarray:
    """Padded cumulative sums of Binomial(n, 1/2).

    Element ``k + 1`` holds P(M <= k) for k = -1..n, so index 0 is 0 and
    index n + 1 is 1.  The upper half comes from the reversed cumulative sum
    (P(M <= k) = 1 - P(M >= k + 1)) so both ends stay accurate.
    """
    m = np.arange(n + 1)
    pmf = np.exp(gammaln(n + 1) - gammaln(m + 1) - gammaln(n - m + 1) - n * math.log(2))
    cdf = np.cumsum(pmf)
    upper_tail = np.append(np.cumsum(pmf[::-1])[::-1][1:], 0.0)
    upper = m >= n // 2
    cdf[upper] = 1.0 - upper_tail[upper]
    return np.concatenate(([0.0], cdf))
