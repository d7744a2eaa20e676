"""
Theory domain: rate functions, actions and their minimizers, exact inversion
generating polynomials, log-space partition functions and their limits.

Both partition functions run a transfer over Dyck heights:
    231: an up-step leaving height h carries q^h.
    321: after each even step 2m (m = 1..n-1) at height h, weight q^(h/2).
A non-canonical pattern whose reduction flips inversions satisfies
Z^{beta,alpha}_n = q^{n(n-1)/2} Z^{-beta,canonical}_n.
"""

import math
from dataclasses import dataclass
from functools import partial
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from loguru import logger
from scipy.special import expit, logsumexp, xlogy

from mallows_avoid.domains.core import PatternLike, pattern3
from mallows_avoid.domains.permuton import (
    Excursion,
    MeasurePairD,
    StepMeasure,
    limit_cumulative_pair_321,
    limit_excursion_231,
)
from mallows_avoid.utils.quadrature import MAX_SUBDIVISIONS, integrate_adaptive_simpson
from mallows_avoid.utils.workers import map_in_pool

ArrayLike = Union[float, Sequence[float], np.ndarray]

LOG4 = math.log(4.0)
N_MAX_EXACT = 60
LIMIT_GRID = 2**15


def catalan(n: int) -> int:
    return math.comb(2 * n, n) // (n + 1)


def rate_J(y: ArrayLike) -> np.ndarray:
    """
    J(y) = (1/2)(1+y)log(1+y) + (1/2)(1-y)log(1-y), with 0 log 0 = 0.

    Raises:
        ValueError: If |y| > 1
    """
    y = np.asarray(y, dtype=float)
    if np.any(np.abs(y) > 1.0 + 1e-12):
        raise ValueError("rate_J is defined on [-1, 1]")
    y = np.clip(y, -1.0, 1.0)
    return 0.5 * xlogy(1.0 + y, 1.0 + y) + 0.5 * xlogy(1.0 - y, 1.0 - y)


def rate_J_prime(y: ArrayLike) -> np.ndarray:
    return np.arctanh(np.asarray(y, dtype=float))


def _binary_entropy_terms(rho: np.ndarray) -> np.ndarray:
    return xlogy(rho, rho) + xlogy(1.0 - rho, 1.0 - rho)


def rate_H231(phi: Excursion) -> float:
    """H(phi) = 2 * integral of J(phi'), exact for piecewise-linear phi."""
    return float(2.0 * np.mean(rate_J(np.clip(phi.slopes(), -1.0, 1.0))))


def rate_H321(pair: MeasurePairD) -> float:
    """Integral of the two binary entropies plus 2 log 2."""
    rho1 = np.clip(pair.first.density, 0.0, 1.0)
    rho2 = np.clip(pair.second.density, 0.0, 1.0)
    entropy = _binary_entropy_terms(rho1) + _binary_entropy_terms(rho2)
    return float(np.mean(entropy) + 2.0 * math.log(2.0))


def _integral_of_excursion(phi: Excursion) -> float:
    values = phi.values
    return float((values[:-1] + values[1:]).sum() / (2.0 * phi.m))


def action_231(beta: float, phi: Excursion) -> float:
    """A(phi) = H(phi) - 2 beta * integral of phi."""
    return rate_H231(phi) - 2.0 * beta * _integral_of_excursion(phi)


def action_321(beta: float, pair: MeasurePairD) -> float:
    """A(pi1, pi2) = H(pi1, pi2) - beta * integral of x (rho1 - rho2)."""
    m = pair.m
    midpoints = (np.arange(m) + 0.5) / m
    linear = float(np.sum(midpoints * (pair.first.density - pair.second.density)) / m)
    return rate_H321(pair) - beta * linear


def rate_H321_at_minimizer(beta: float, tol: float = 1e-10) -> float:
    """
    H at the logistic pair:
    (2/beta) * integral over [-beta/2, beta/2] of (s expit(s) - softplus(s)) + 2 log 2.
    """
    if beta <= 0:
        return 0.0
    integrand = lambda s: s * expit(s) - np.logaddexp(0.0, s)  # noqa: E731
    value, _ = integrate_adaptive_simpson(integrand, -beta / 2.0, beta / 2.0, tol)
    return 2.0 * value / beta + 2.0 * math.log(2.0)


def minimizer_231(beta: float, m: int = LIMIT_GRID) -> Excursion:
    """phi_beta on m+1 grid points; the zero excursion when beta <= 0."""
    return Excursion(limit_excursion_231(beta, np.linspace(0.0, 1.0, m + 1)))


def minimizer_321(beta: float, m: int = LIMIT_GRID) -> MeasurePairD:
    """Cell averages of the logistic densities; (1/2, 1/2) when beta <= 0."""
    first, second = limit_cumulative_pair_321(beta, np.linspace(0.0, 1.0, m + 1))
    return MeasurePairD(StepMeasure.from_cdf(first), StepMeasure.from_cdf(second))


@dataclass(frozen=True)
class InvGenPoly:
    """Inversion generating polynomial of the avoiders of a pattern."""

    coefficients: Tuple[int, ...]
    n: int
    pattern: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "coefficients", tuple(int(c) for c in self.coefficients))
        if any(c < 0 for c in self.coefficients):
            raise ValueError("Coefficients must be nonnegative")
        if sum(self.coefficients) != catalan(self.n):
            raise ValueError(
                f"Coefficients sum to {sum(self.coefficients)}, expected C_{self.n}"
            )
        if self.degree > self.n * (self.n - 1) // 2:
            raise ValueError(f"Degree {self.degree} exceeds n(n-1)/2")

    @property
    def degree(self) -> int:
        nonzero = [k for k, c in enumerate(self.coefficients) if c]
        return nonzero[-1] if nonzero else 0

    def evaluate(self, q: float) -> float:
        total = 0
        for coefficient in reversed(self.coefficients):
            total = total * q + coefficient
        return total

    def log_evaluate(self, log_q: float) -> float:
        """log Z(q) at q = e^{log_q}, without overflow."""
        ks = [k for k, c in enumerate(self.coefficients) if c]
        logs = np.array([math.log(self.coefficients[k]) + k * log_q for k in ks])
        return float(logsumexp(logs))

    def rows(self) -> List[Tuple[int, int]]:
        """Rows of the ``k,coeff`` export."""
        return list(enumerate(self.coefficients))


def _canonical_poly(tag: str, n: int) -> List[int]:
    size = n * (n - 1) // 2 + 1
    table = np.zeros((n + 2, size), dtype=object)
    table[:] = 0
    table[0, 0] = 1
    for k in range(1, 2 * n + 1):
        nxt = np.zeros_like(table)
        nxt[:] = 0
        nxt[:-1] += table[1:]
        for h in range(min(k, n)):
            if tag == "231":
                nxt[h + 1, h:] += table[h, : size - h]
            else:
                nxt[h + 1] += table[h]
        if tag == "321" and k % 2 == 0 and k < 2 * n:
            for h in range(2, n + 1, 2):
                shifted = np.zeros(size, dtype=object)
                shifted[:] = 0
                shifted[h // 2 :] = nxt[h, : size - h // 2]
                nxt[h] = shifted
        table = nxt
    return [int(c) for c in table[0]]


def partition_poly(pattern: PatternLike, n: int, n_max_exact: int = N_MAX_EXACT) -> InvGenPoly:
    """
    Exact inversion generating polynomial sum over avoiders of q^inv.

    Args:
        pattern: Any pattern of length 3
        n: Size
        n_max_exact: Size cap

    Returns:
        InvGenPoly with big-integer coefficients

    Raises:
        ValueError: If n is negative or exceeds the cap
    """
    alpha = pattern3(pattern)
    if n < 0 or n > n_max_exact:
        raise ValueError(f"n={n} outside the exact range 0..{n_max_exact}")
    coefficients = _canonical_poly(alpha.canonical, n)
    if alpha.flips_inversions:
        coefficients = coefficients[::-1]
    return InvGenPoly(tuple(coefficients), n, alpha.tag)


def _canonical_log_partition(tag: str, n: int, log_q: float) -> float:
    heights = np.arange(n + 1, dtype=float)
    logs = np.full(n + 1, -np.inf)
    logs[0] = 0.0
    for k in range(1, 2 * n + 1):
        nxt = np.full(n + 1, -np.inf)
        up = logs[:-1] + (heights[:-1] * log_q if tag == "231" else 0.0)
        nxt[1:] = up
        nxt[:-1] = np.logaddexp(nxt[:-1], logs[1:])
        if tag == "321" and k % 2 == 0 and k < 2 * n:
            nxt = nxt + 0.5 * heights * log_q
        logs = nxt
    return float(logs[0])


def partition_log(pattern: PatternLike, n: int, beta: float) -> float:
    """
    (1/n) log Z_n^{beta, pattern} with q = e^{beta/n}, by log-space transfer.

    Raises:
        ValueError: If n < 1
    """
    if n < 1:
        raise ValueError(f"n must be at least 1, got {n}")
    alpha = pattern3(pattern)
    effective = alpha.effective_beta(beta)
    log_z = _canonical_log_partition(alpha.canonical, n, effective / n)
    if alpha.flips_inversions:
        log_z += (beta / n) * (n * (n - 1) / 2.0)
    return log_z / n


def partition_limit(
    pattern: PatternLike,
    beta: float,
    tol: float = 1e-10,
    max_subdivisions: int = MAX_SUBDIVISIONS,
) -> float:
    """
    lim (1/n) log Z_n^{beta, pattern}.

    231: 2 log(1+e^beta) - beta - (1/beta) * integral over [-beta, beta] of s expit(s).
    321: (2/beta) * integral over [-beta/2, beta/2] of softplus(s).
    log 4 when beta <= 0.
    """
    alpha = pattern3(pattern)
    if alpha.flips_inversions:
        return beta / 2.0 + partition_limit(alpha.canonical, -beta, tol, max_subdivisions)
    if beta <= 0:
        return LOG4
    if alpha.canonical == "231":
        integrand = lambda s: s * expit(s)  # noqa: E731
        value, _ = integrate_adaptive_simpson(integrand, -beta, beta, tol, max_subdivisions)
        return 2.0 * float(np.logaddexp(0.0, beta)) - beta - value / beta
    integrand = lambda s: np.logaddexp(0.0, s)  # noqa: E731
    value, _ = integrate_adaptive_simpson(integrand, -beta / 2.0, beta / 2.0, tol, max_subdivisions)
    return 2.0 * value / beta


@dataclass(frozen=True)
class LogPartitionTable:
    """(1/n) log Z_n at fixed beta for a range of n, with the limit."""

    pattern: str
    beta: float
    ns: Tuple[int, ...]
    values: Tuple[float, ...]
    limit: float

    def __post_init__(self) -> None:
        if len(self.ns) != len(self.values):
            raise ValueError("ns and values must have the same length")
        if not all(math.isfinite(v) for v in self.values):
            raise ValueError("LogPartitionTable entries must be finite")

    @property
    def residuals(self) -> Tuple[float, ...]:
        return tuple(abs(v - self.limit) for v in self.values)

    def rows(self) -> List[Tuple[int, float, float, float]]:
        """Rows of the ``n,log_z_over_n,limit,residual`` export."""
        return [
            (n, value, self.limit, residual)
            for n, value, residual in zip(self.ns, self.values, self.residuals)
        ]


def _partition_row(n: int, pattern: str, beta: float) -> float:
    return partition_log(pattern, n, beta)


def partition_convergence(
    pattern: PatternLike,
    beta: float,
    n_list: Sequence[int],
    workers: Optional[int] = None,
    tol: float = 1e-10,
    max_subdivisions: int = MAX_SUBDIVISIONS,
) -> LogPartitionTable:
    """
    Table of (1/n) log Z_n against the limit; rows run in a process pool.

    Args:
        pattern: Any pattern of length 3
        beta: Tilt parameter
        n_list: Sizes
        workers: Worker count (capped by MALLOWS_AVOID_THREADS)
        tol: Quadrature tolerance of the limit
        max_subdivisions: Subdivision cap of the limit quadrature

    Returns:
        LogPartitionTable
    """
    alpha = pattern3(pattern)
    ns = tuple(int(n) for n in n_list)
    limit = partition_limit(alpha, beta, tol, max_subdivisions)
    values = map_in_pool(partial(_partition_row, pattern=alpha.tag, beta=beta), ns, workers)
    for n, value in zip(ns, values):
        logger.info(f"partition {alpha.tag} beta={beta} n={n}: {value:.12f}")
    return LogPartitionTable(alpha.tag, float(beta), ns, tuple(values), limit)
