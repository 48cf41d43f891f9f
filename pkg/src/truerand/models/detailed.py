"""Detailed PBS-based QRNG model.

Differences from the simplified model:

* a detector fires once ``r`` photons reached it, where the threshold ``r`` is
  geometric, P(r) = mu (1 - mu)^(r - 1);
* each detector may also click regardless of photons (dark count, afterpulse
  of its own previous click, crosstalk from the other detector's previous
  click).  Whether that happens is the bit ``s`` and is side information.

Thresholds above ``n`` all behave alike, so they are lumped into the single
value ``r = n + 1`` ("photons never trigger this detector") carrying the
residual mass (1 - mu)^n.

The joint law of (s_v, s_h) is only pinned down through its marginal
``p = P(s = 1)``.  It is parameterized by ``y = P(s_v = s_h = 1)`` and the
conditional min-entropy is minimized over the admissible ``y``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import cached_property

import numpy as np

from truerand.errors import DomainError, NumericError
from truerand.models.common import (
    OUTCOMES,
    EntropyReport,
    binom_half_cdf,
    binom_half_sum,
    poisson_pmf,
    poisson_tail,
    resolve_n_max,
    validate_common,
)
from truerand.probcore import JointDistribution

GOLDEN_TOL = 1e-10


@dataclass(frozen=True)
class DetailedModelParams:
    alpha2: float
    mu: float
    p_dark: float = 0.0
    gamma: float = 0.0
    delta: float = 0.0
    n_max: int | str = "auto"
    y_grid: int = 1024

    def __post_init__(self):
        validate_common(self.alpha2, self.mu)
        for name in ("p_dark", "gamma", "delta"):
            value = getattr(self, name)
            if not 0.0 <= value < 1.0:
                raise DomainError(f"{name} must lie in [0, 1), got {value}")
        if int(self.y_grid) < 2:
            raise DomainError(f"y_grid must be >= 2, got {self.y_grid}")
        resolve_n_max(self.alpha2, self.n_max)

    @property
    def resolved_n_max(self) -> int:
        return resolve_n_max(self.alpha2, self.n_max)

    @property
    def truncation_error(self) -> float:
        return poisson_tail(self.alpha2, self.resolved_n_max)


@dataclass(frozen=True)
class PxSolution:
    p_x: float  # stationary P(x_v = 1) = P(x_h = 1)
    p_det: float  # probability that photons alone make a detector click
    p_s: float  # P(s = 1), probability of a photon-independent click


def threshold_weights(mu: float, n: int) -> np.ndarray:
    """P(r) for r = 1..n followed by the lumped mass of r > n."""
    r = np.arange(1, n + 1)
    return np.append(mu * (1.0 - mu) ** (r - 1), (1.0 - mu) ** n)


def photon_click_probability(params: DetailedModelParams) -> float:
    """p_det = sum_n P(n) sum_{r<=n} P(r) sum_{m>=r} (1/2)^n C(n, m)."""
    n_max = params.resolved_n_max
    pn = poisson_pmf(params.alpha2, n_max)
    total = 0.0
    for n in range(1, n_max + 1):
        cdf = binom_half_cdf(n)
        r = np.arange(1, n + 1)
        at_least_r = 1.0 - cdf[r]  # P(M >= r)
        total += pn[n] * float(np.dot(threshold_weights(params.mu, n)[:-1], at_least_r))
    return float(total)


def _fixed_point_residual(p_x: float, p_det: float, params: DetailedModelParams) -> float:
    s0 = (1 - params.p_dark) * (1 - params.gamma * p_x) * (1 - params.delta * p_x)
    return p_x - (1.0 - s0 * (1.0 - p_det))


def solve_px(params: DetailedModelParams) -> PxSolution:
    """Stationary click probability ``p_x``.

    It solves p_x = P(s=1) + P(s=0) p_det with
    P(s=1) = 1 - (1 - p_dark)(1 - gamma p_x)(1 - delta p_x), a quadratic
    a p^2 + b p + c = 0 whose unique root in [0, 1] is selected.
    """
    p_det = photon_click_probability(params)
    k = (1.0 - params.p_dark) * (1.0 - p_det)
    g, d = params.gamma, params.delta
    a, b, c = k * g * d, 1.0 - k * (g + d), k - 1.0
    # g(0) = c <= 0 and g(1) = k (1-g)(1-d) >= 0 bracket exactly one root
    if a == 0.0:
        if b == 0.0:
            raise NumericError("degenerate fixed-point equation")
        root = -c / b
    else:
        disc = b * b - 4.0 * a * c
        if disc < 0:
            raise NumericError("fixed-point quadratic has no real root")
        q = -0.5 * (b + math.copysign(math.sqrt(disc), b))
        candidates = [q / a, c / q] if q != 0.0 else [0.0]
        inside = [r for r in candidates if -1e-12 <= r <= 1 + 1e-12]
        if not inside:
            raise NumericError(f"no root of the p_x equation in [0, 1]: {candidates}")
        root = min(inside, key=lambda r: abs(_fixed_point_residual(r, p_det, params)))
    if not -1e-12 <= root <= 1 + 1e-12:
        raise NumericError(f"p_x root {root} outside [0, 1]")
    p_x = min(max(root, 0.0), 1.0)
    p_s = 1.0 - (1.0 - params.p_dark) * (1.0 - g * p_x) * (1.0 - d * p_x)
    return PxSolution(p_x=float(p_x), p_det=float(p_det), p_s=float(p_s))


def conditional_row_detailed(n: int, r_v: int, r_h: int, s_v: int, s_h: int) -> tuple:
    """P(x | n, r_v, r_h, s_v, s_h) in outcome order 00, 01, 10, 11.

    ``m`` counts photons on the v path; v fires from photons iff m >= r_v and
    h iff n - m >= r_h.
    """
    if n < 0 or r_v < 1 or r_h < 1 or s_v not in (0, 1) or s_h not in (0, 1):
        raise DomainError("need n >= 0, thresholds >= 1 and click bits in {0, 1}")

    def s(lo, hi):
        return binom_half_sum(n, lo, hi)

    if (s_v, s_h) == (1, 1):
        return (0.0, 0.0, 0.0, 1.0)
    if (s_v, s_h) == (0, 1):
        return (0.0, s(0, r_v - 1), 0.0, s(r_v, n))
    if (s_v, s_h) == (1, 0):
        # x_h = 1 iff n - m >= r_h, i.e. m <= n - r_h
        return (0.0, 0.0, s(n - r_h + 1, n), s(0, n - r_h))
    if r_v > n and r_h > n:
        return (1.0, 0.0, 0.0, 0.0)
    if r_v > n:
        return (s(0, r_h - 1), s(r_h, n), 0.0, 0.0)
    if r_h > n:
        return (s(0, r_v - 1), 0.0, s(r_v, n), 0.0)
    if r_v + r_h <= n:
        return (0.0, s(0, r_v - 1), s(n - r_h + 1, n), s(r_v, n - r_h))
    return (s(n - r_h + 1, r_v - 1), s(0, n - r_h), s(r_v, n), 0.0)


def _silent_rows(n: int) -> np.ndarray:
    """Rows for s = (0, 0) over all (r_v, r_h) in 1..n+1, shape (n+1, n+1, 4)."""
    cdf = binom_half_cdf(n)
    rv = np.arange(1, n + 2)[:, None]
    rh = np.arange(1, n + 2)[None, :]
    hi = n - rh + 1  # index of P(M <= n - r_h)
    p01 = cdf[np.minimum(rv - 1, n - rh) + 1]
    p10 = 1.0 - cdf[np.maximum(rv, n - rh + 1)]
    p11 = np.clip(cdf[hi] - cdf[rv], 0.0, None)
    p00 = np.clip(cdf[rv] - cdf[hi], 0.0, None)
    p01, p10 = np.broadcast_arrays(p01, p10)
    return np.stack([p00, p01, p10, p11], axis=-1)


def _entropy_terms(rows: np.ndarray) -> np.ndarray:
    out = np.zeros(rows.shape[:-1])
    for k in range(rows.shape[-1]):
        p = rows[..., k]
        nz = p > 0
        out[nz] -= p[nz] * np.log2(p[nz])
    return out


@dataclass(frozen=True)
class _SideInfoSums:
    """Poisson/threshold-averaged quantities for each value of (s_v, s_h).

    Every model output is affine in the joint law of (s_v, s_h), so these
    sums are computed once and then combined for any ``y``.
    """

    p_n0: float
    p_photons: float  # P(N >= 1) within the truncation
    guess_00: float
    guess_01: float
    shannon_00: float
    shannon_01: float
    px_00: np.ndarray
    px_01: np.ndarray
    px_10: np.ndarray


def _side_info_sums(params: DetailedModelParams) -> _SideInfoSums:
    mu = params.mu
    n_max = params.resolved_n_max
    pn = poisson_pmf(params.alpha2, n_max)
    g00 = g01 = h00 = h01 = 0.0
    px00, px01, px10 = np.zeros(4), np.zeros(4), np.zeros(4)
    for n in range(1, n_max + 1):
        if pn[n] == 0.0:
            continue
        w = threshold_weights(mu, n)
        ww = np.outer(w, w)
        rows = _silent_rows(n)
        g00 += pn[n] * float(np.sum(ww * rows.max(axis=-1)))
        h00 += pn[n] * float(np.sum(ww * _entropy_terms(rows)))
        px00 += pn[n] * np.tensordot(ww, rows, axes=([0, 1], [0, 1]))

        # s = (0, 1): x_h = 1, x_v = [m >= r_v]
        cdf = binom_half_cdf(n)
        v_silent = cdf[np.arange(1, n + 2)]  # P(m < r_v)
        g01 += pn[n] * float(np.dot(w, np.maximum(v_silent, 1.0 - v_silent)))
        h01 += pn[n] * float(
            np.dot(w, _entropy_terms(np.stack([v_silent, 1.0 - v_silent], axis=-1)))
        )
        silent = float(np.dot(w, v_silent))
        px01 += pn[n] * np.array([0.0, silent, 0.0, 1.0 - silent])
        # s = (1, 0) mirrors it (m and n - m have the same law)
        px10 += pn[n] * np.array([0.0, 0.0, silent, 1.0 - silent])
    return _SideInfoSums(
        p_n0=float(pn[0]),
        p_photons=float(pn[1:].sum()),
        guess_00=g00,
        guess_01=g01,
        shannon_00=h00,
        shannon_01=h01,
        px_00=px00,
        px_01=px01,
        px_10=px10,
    )


def y_interval(p: float) -> tuple[float, float]:
    """Admissible P(s_v = s_h = 1) given both marginals equal ``p``."""
    lo, hi = max(0.0, 2.0 * p - 1.0), p
    if lo > hi + 1e-15:
        raise NumericError(f"empty y interval for p = {p}")
    return lo, hi


def _side_info_law(p: float, y: float) -> tuple[float, float, float, float]:
    # P(00), P(01), P(10), P(11) for (s_v, s_h)
    return (max(0.0, 1.0 - 2.0 * p + y), max(0.0, p - y), max(0.0, p - y), y)


class DetailedModel:
    """Evaluates the detailed model for one parameter set."""

    def __init__(self, params: DetailedModelParams):
        self.params = params

    @cached_property
    def px(self) -> PxSolution:
        return solve_px(self.params)

    @cached_property
    def sums(self) -> _SideInfoSums:
        return _side_info_sums(self.params)

    @property
    def p(self) -> float:
        return self.px.p_s

    def guessing_probability(self, y: float) -> float:
        """Weighted guessing probability of X given (n, r_v, r_h, s_v, s_h)."""
        q00, q01, q10, q11 = _side_info_law(self.p, y)
        t = self.sums
        return (
            t.p_n0
            + q00 * t.guess_00
            + (q01 + q10) * t.guess_01
            + q11 * t.p_photons
        )

    def objective(self, y: float) -> float:
        return -math.log2(self.guessing_probability(y))

    def shannon(self, y: float) -> float:
        q00, q01, q10, _ = _side_info_law(self.p, y)
        t = self.sums
        return q00 * t.shannon_00 + (q01 + q10) * t.shannon_01

    def raw_distribution(self, y: float | None = None) -> np.ndarray:
        """P_X; by default with independent noise clicks (y = p^2)."""
        if y is None:
            y = self.p**2
        q = _side_info_law(self.p, y)
        t = self.sums
        return (
            t.p_n0 * np.array(q)
            + q[0] * t.px_00
            + q[1] * t.px_01
            + q[2] * t.px_10
            + q[3] * t.p_photons * np.array([0.0, 0.0, 0.0, 1.0])
        )

    def minimize(self) -> tuple[float, float]:
        """(y_star, objective(y_star)) minimizing the conditional min-entropy."""
        lo, hi = y_interval(self.p)
        if hi - lo <= GOLDEN_TOL:
            return hi, self.objective(hi)
        grid = np.linspace(lo, hi, int(self.params.y_grid))
        values = np.array([self.objective(y) for y in grid])
        i = int(np.argmin(values))
        a, b = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
        y_ref = golden_section(self.objective, a, b, GOLDEN_TOL)
        f_ref = self.objective(y_ref)
        if f_ref <= values[i]:
            return y_ref, f_ref
        return float(grid[i]), float(values[i])

    def report(self) -> EntropyReport:
        y_star, hmin = self.minimize()
        return EntropyReport(
            hmin_cond=max(0.0, hmin),
            shannon_cond=self.shannon(y_star),
            hmin_uncond=max(0.0, -math.log2(float(self.raw_distribution().max()))),
            y_star=y_star,
            truncation_error=self.params.truncation_error,
        )

    def joint(self, y: float | None = None) -> JointDistribution:
        """Full table P(x, c) with c = (n, r_v, r_h, s_v, s_h).

        Built row by row from :func:`conditional_row_detailed`; meant for
        cross-checks on small truncations.
        """
        if y is None:
            y = self.p**2
        q = dict(zip([(0, 0), (0, 1), (1, 0), (1, 1)], _side_info_law(self.p, y)))
        pn = poisson_pmf(self.params.alpha2, self.params.resolved_n_max)
        keys, cols = [], []
        for n in range(len(pn)):
            w = threshold_weights(self.params.mu, n)
            for r_v in range(1, n + 2):
                for r_h in range(1, n + 2):
                    for s, qs in q.items():
                        keys.append((n, r_v, r_h, *s))
                        weight = pn[n] * w[r_v - 1] * w[r_h - 1] * qs
                        row = conditional_row_detailed(n, r_v, r_h, *s)
                        cols.append([weight * v for v in row])
        tol = self.params.truncation_error + 1e-9
        return JointDistribution(OUTCOMES, tuple(keys), np.array(cols).T, tol)


def golden_section(f, a: float, b: float, tol: float = GOLDEN_TOL) -> float:
    """Minimizer of a unimodal ``f`` on [a, b] to within ``tol``."""
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    c, d = b - inv_phi * (b - a), a + inv_phi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = f(d)
    candidates = [(f(a), a), (fc, c), (fd, d), (f(b), b)]
    return min(candidates)[1]


def guessing_probability_detailed(params: DetailedModelParams, y: float) -> float:
    return DetailedModel(params).guessing_probability(y)


def entropy_report_detailed(params: DetailedModelParams) -> EntropyReport:
    return DetailedModel(params).report()


def arrival_time_rate(params: DetailedModelParams) -> float:
    """Rate when each pulse period is split into two half-intensity slots.

    Twice the conditional min-entropy at ``alpha2 / 2``.  Correlations between
    the two slots (dead time, afterpulsing at doubled rate) are ignored.
    """
    half = replace(params, alpha2=params.alpha2 / 2.0)
    return 2.0 * entropy_report_detailed(half).hmin_cond
