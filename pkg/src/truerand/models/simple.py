"""Simplified PBS-based QRNG: Poisson source, two detectors that are either
sensitive (probability ``mu``) or blind, independently of the photon number.

Side information is C = (N, R_v, R_h): the photon number and the two
sensitivity bits.  Given C the only remaining randomness is the path each
photon takes after the beam splitter.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from truerand.models.common import (
    OUTCOMES,
    EntropyReport,
    half_power,
    poisson_pmf,
    poisson_tail,
    resolve_n_max,
    validate_common,
)
from truerand.probcore import (
    NORM_TOL,
    FiniteDistribution,
    JointDistribution,
    min_entropy,
)


@dataclass(frozen=True)
class SimpleModelParams:
    alpha2: float
    mu: float
    n_max: int | str = "auto"

    def __post_init__(self):
        validate_common(self.alpha2, self.mu)
        resolve_n_max(self.alpha2, self.n_max)

    @property
    def resolved_n_max(self) -> int:
        return resolve_n_max(self.alpha2, self.n_max)

    @property
    def truncation_error(self) -> float:
        return poisson_tail(self.alpha2, self.resolved_n_max)


def _row_terms(n_max: int):
    """Per-n arrays of a = (1/2)^n with n = 0 masked out."""
    n = np.arange(n_max + 1)
    a = np.ldexp(1.0, -n)
    photons = n >= 1
    return a, photons


def raw_distribution_simple(params: SimpleModelParams) -> FiniteDistribution:
    """Distribution of (x_v, x_h) with the side information averaged out."""
    mu = params.mu
    n_max = params.resolved_n_max
    pn = poisson_pmf(params.alpha2, n_max)
    a, photons = _row_terms(n_max)
    w = pn * photons
    p11 = float(np.sum(w * (1 - 2 * a))) * mu**2
    p01 = float(np.sum(w * (a * mu + (1 - 2 * a) * mu * (1 - mu))))
    p00 = float(pn[0] + np.sum(w * (2 * a * (1 - mu) + (1 - 2 * a) * (1 - mu) ** 2)))
    return FiniteDistribution(
        OUTCOMES, [p00, p01, p01, p11], tol=params.truncation_error + NORM_TOL
    )


def conditional_row_simple(n: int, r_v: int, r_h: int) -> tuple[Fraction, ...]:
    """P(x | n, r_v, r_h) in outcome order 00, 01, 10, 11, exactly.

    ``r_v``/``r_h`` are the sensitivity bits (1 = sensitive).
    """
    if n < 0 or r_v not in (0, 1) or r_h not in (0, 1):
        raise ValueError("need n >= 0 and sensitivity bits in {0, 1}")
    zero, one = Fraction(0), Fraction(1)
    if n == 0 or (r_v, r_h) == (0, 0):
        return (one, zero, zero, zero)
    a = half_power(n)
    if (r_v, r_h) == (0, 1):
        return (a, 1 - a, zero, zero)
    if (r_v, r_h) == (1, 0):
        return (a, zero, 1 - a, zero)
    return (zero, a, a, 1 - 2 * a)


@dataclass(frozen=True)
class ConditionalTable:
    """Rows P(x | c) keyed by side-information tuple, with P(c) weights."""

    rows: dict
    weights: dict

    def joint(self, tol: float = NORM_TOL) -> JointDistribution:
        keys = list(self.rows)
        probs = np.array(
            [[float(p) * self.weights[c] for p in self.rows[c]] for c in keys]
        ).T
        return JointDistribution(OUTCOMES, tuple(keys), probs, tol)

    def average(self) -> np.ndarray:
        """sum_c P(c) P(x | c), i.e. the marginal of X."""
        total = np.zeros(4)
        for c, row in self.rows.items():
            total += self.weights[c] * np.array([float(p) for p in row])
        return total


def conditional_table_simple(params: SimpleModelParams) -> ConditionalTable:
    n_max = params.resolved_n_max
    pn = poisson_pmf(params.alpha2, n_max)
    pr = {0: 1.0 - params.mu, 1: params.mu}
    rows, weights = {}, {}
    for n in range(n_max + 1):
        for r_v in (0, 1):
            for r_h in (0, 1):
                rows[(n, r_v, r_h)] = conditional_row_simple(n, r_v, r_h)
                weights[(n, r_v, r_h)] = float(pn[n]) * pr[r_v] * pr[r_h]
    return ConditionalTable(rows, weights)


def joint_simple(params: SimpleModelParams) -> JointDistribution:
    """P(x, c) with c = (n, r_v, r_h), truncated at ``n_max``."""
    return conditional_table_simple(params).joint(params.truncation_error + NORM_TOL)


def _xlog(p: np.ndarray) -> np.ndarray:
    out = np.zeros_like(p)
    nz = p > 0
    out[nz] = -p[nz] * np.log2(p[nz])
    return out


def entropy_report_simple(params: SimpleModelParams) -> EntropyReport:
    mu = params.mu
    n_max = params.resolved_n_max
    pn = poisson_pmf(params.alpha2, n_max)
    a, photons = _row_terms(n_max)
    w = pn * photons

    guess = pn[0] + np.sum(
        w
        * (
            (1 - mu) ** 2
            + 2 * mu * (1 - mu) * (1 - a)
            + mu**2 * np.maximum(a, 1 - 2 * a)
        )
    )
    one_sensitive = _xlog(a) + _xlog(1 - a)
    both_sensitive = 2 * _xlog(a) + _xlog(1 - 2 * a)
    shannon = np.sum(w * (2 * mu * (1 - mu) * one_sensitive + mu**2 * both_sensitive))

    return EntropyReport(
        hmin_cond=max(0.0, -math.log2(float(guess))),
        shannon_cond=float(shannon),
        hmin_uncond=min_entropy(raw_distribution_simple(params)),
        y_star=None,
        truncation_error=params.truncation_error,
    )
