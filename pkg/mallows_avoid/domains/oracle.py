"""
Oracle domain: exhaustive small-n ground truth.

Avoiders are generated from the Dyck path enumeration (lexicographic, D before
U) and decoded, never by filtering n! permutations. ``validate_all`` runs the
exhaustive property suites of every other domain and collects the results in
a ValidationReport.
"""

import itertools
import math
import time
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from loguru import logger
from scipy.special import logsumexp

from mallows_avoid.domains.core import (
    CANONICAL_PATTERNS,
    PATTERNS,
    Pattern3,
    PatternLike,
    Permutation,
    avoids,
    inversions,
    occurrences,
    pattern3,
    rlm_staircase,
    strict_rl_minima,
    symmetry_apply,
)
from mallows_avoid.domains.dyck import (
    DyckPath,
    delta_inv,
    dyck_to_perm,
    enumerate_dyck_heights,
    flip,
    flip_kind,
    inv_from_dyck,
    inv_from_heights,
    perm_to_dyck,
)
from mallows_avoid.domains.permuton import (
    MASS_TOL,
    Excursion,
    MeasurePairD,
    excursion_from_graph,
    permuton_from_rlm,
    rlm_curve_grid,
)
from mallows_avoid.domains.sampler import kernel_row
from mallows_avoid.domains.theory import catalan, partition_poly

ENUMERATION_CAP = 14
# exhaustive scans over all n! permutations
OCCURRENCES_21_N_MAX = 8
ALL_PERMUTATIONS_N_MAX = 7
BALL_METRICS = ("excursion-sup", "pair-kolmogorov")

DeltaFn = Callable[[PatternLike, DyckPath, int], int]


def _check_cap(n: int, cap: int) -> None:
    if n < 0:
        raise ValueError(f"n must be nonnegative, got {n}")
    if n > cap:
        raise ValueError(f"n={n} exceeds the enumeration cap {cap}")


def _paths_from_heights(heights: np.ndarray) -> List[DyckPath]:
    steps = np.diff(heights.astype(np.int64), axis=1)
    return [DyckPath(tuple(row)) for row in steps.tolist()]


def enumerate_avoiders(
    pattern: PatternLike, n: int, cap: int = ENUMERATION_CAP
) -> List[Permutation]:
    """
    All avoiders of a length-3 pattern, in lexicographic order of their
    canonical Dyck words.

    Args:
        pattern: Any pattern of length 3
        n: Size
        cap: Largest size allowed

    Returns:
        List of C_n permutations

    Raises:
        ValueError: If n exceeds the cap
    """
    _check_cap(n, cap)
    alpha = pattern3(pattern)
    paths = _paths_from_heights(enumerate_dyck_heights(n))
    return [symmetry_apply(alpha, dyck_to_perm(alpha.canonical, d)) for d in paths]


@dataclass(frozen=True)
class ExactDistribution:
    """Tilted law proportional to e^((beta/n) inv) on the avoiders."""

    support: Tuple[Permutation, ...]
    probabilities: np.ndarray
    beta: float
    pattern: str
    inversions: np.ndarray

    def __post_init__(self) -> None:
        if len(self.support) != self.probabilities.size:
            raise ValueError("Support and probabilities differ in length")
        if abs(float(self.probabilities.sum()) - 1.0) > 1e-12:
            raise ValueError("Probabilities must sum to 1")

    @property
    def n(self) -> int:
        return self.support[0].n if self.support else 0

    def as_dict(self) -> Dict[Permutation, float]:
        return dict(zip(self.support, self.probabilities.tolist()))

    def probability(self, p: Permutation) -> float:
        return self.as_dict().get(p, 0.0)

    def expected_inversions(self) -> float:
        return float(np.dot(self.probabilities, self.inversions))

    def tv_distance(self, counts: Dict[Permutation, int]) -> float:
        """Total variation distance to the empirical law of counts."""
        total = sum(counts.values())
        if total == 0:
            raise ValueError("No samples to compare")
        exact = self.as_dict()
        keys = set(exact) | set(counts)
        return 0.5 * sum(abs(exact.get(k, 0.0) - counts.get(k, 0) / total) for k in keys)


def _tilted_probabilities(invs: np.ndarray, beta: float, n: int) -> np.ndarray:
    logs = (beta / n) * invs.astype(float) if n else np.zeros(invs.size)
    return np.exp(logs - logsumexp(logs))


def _pattern_inversions(alpha: Pattern3, heights: np.ndarray) -> np.ndarray:
    n = (heights.shape[1] - 1) // 2
    canonical = inv_from_heights(alpha.canonical, heights)
    if alpha.flips_inversions:
        return n * (n - 1) // 2 - canonical
    return canonical


def exact_tilted(
    pattern: PatternLike, n: int, beta: float, cap: int = ENUMERATION_CAP
) -> ExactDistribution:
    """
    Exact tilted distribution over the avoiders of size n.

    Raises:
        ValueError: If n exceeds the cap
    """
    _check_cap(n, cap)
    alpha = pattern3(pattern)
    support = enumerate_avoiders(alpha, n, cap)
    invs = _pattern_inversions(alpha, enumerate_dyck_heights(n))
    probabilities = _tilted_probabilities(invs, beta, n)
    return ExactDistribution(tuple(support), probabilities, float(beta), alpha.tag, invs)


def _pair_cdfs(heights: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    steps = np.diff(heights.astype(np.int64), axis=1)
    n = steps.shape[1] // 2
    in_a = steps[:, 0::2] < 0
    in_b = steps[:, 1::2] > 0
    first = np.zeros((steps.shape[0], n + 1))
    second = np.zeros((steps.shape[0], n + 1))
    np.cumsum(in_a, axis=1, out=first[:, 1:])
    np.cumsum(in_b, axis=1, out=second[:, 1:])
    return first / n, second / n


def ball_distances(
    pattern: PatternLike,
    n: int,
    center: Union[Excursion, MeasurePairD],
    metric: Optional[str] = None,
    heights: Optional[np.ndarray] = None,
) -> np.ndarray:
    """
    Distance from the empirical statistic of every avoider to the center.

    excursion-sup compares d(k)/(2n) with the center at k/(2n), k = 0..2n.
    pair-kolmogorov compares the position and value CDFs of the strict
    right-to-left minima at m/n, m = 0..n.
    """
    alpha = pattern3(pattern)
    metric = metric or ("excursion-sup" if alpha.canonical == "231" else "pair-kolmogorov")
    if metric not in BALL_METRICS:
        raise ValueError(f"Unknown metric {metric!r}, expected one of {BALL_METRICS}")
    if heights is None:
        heights = enumerate_dyck_heights(n)
    if metric == "excursion-sup":
        if not isinstance(center, Excursion):
            raise ValueError("excursion-sup needs an Excursion center")
        target = center(np.arange(2 * n + 1) / (2.0 * n))
        return np.abs(heights / (2.0 * n) - target[None, :]).max(axis=1)
    if alpha.canonical != "321":
        raise ValueError("pair-kolmogorov applies to the 321 family only")
    if not isinstance(center, MeasurePairD):
        raise ValueError("pair-kolmogorov needs a MeasurePairD center")
    xs = np.arange(n + 1) / n
    first, second = _pair_cdfs(heights)
    return np.maximum(
        np.abs(first - center.first.cdf_at(xs)[None, :]).max(axis=1),
        np.abs(second - center.second.cdf_at(xs)[None, :]).max(axis=1),
    )


def exact_ball_probability(
    pattern: PatternLike,
    n: int,
    beta: float,
    center: Union[Excursion, MeasurePairD],
    eps: float,
    metric: Optional[str] = None,
    cap: int = ENUMERATION_CAP,
) -> float:
    """
    Probability under the tilted law that the empirical statistic lies in the
    closed eps-ball around center.

    Args:
        pattern: Any pattern of length 3
        n: Size
        beta: Tilt
        center: Excursion (231 family) or MeasurePairD (321 family)
        eps: Radius
        metric: "excursion-sup" or "pair-kolmogorov"; defaults by family
        cap: Enumeration cap

    Returns:
        Exact probability
    """
    _check_cap(n, cap)
    alpha = pattern3(pattern)
    heights = enumerate_dyck_heights(n)
    distances = ball_distances(alpha, n, center, metric, heights)
    probabilities = _tilted_probabilities(_pattern_inversions(alpha, heights), beta, n)
    return float(probabilities[distances <= eps].sum())


@dataclass
class SuiteResult:
    """Outcome of one property suite at one size."""

    suite: str
    n: int
    cases: int = 0
    failures: int = 0
    first_counterexample: Optional[str] = None
    note: Optional[str] = None

    def check(self, ok: bool, counterexample: Callable[[], str]) -> None:
        self.cases += 1
        if not ok:
            self.failures += 1
            if self.first_counterexample is None:
                self.first_counterexample = counterexample()

    @property
    def passed(self) -> bool:
        return self.failures == 0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "suite": self.suite,
            "n": self.n,
            "cases": self.cases,
            "failures": self.failures,
            "first_counterexample": self.first_counterexample,
            "note": self.note,
        }


@dataclass
class ValidationReport:
    results: List[SuiteResult] = field(default_factory=list)
    elapsed: float = 0.0

    @property
    def failures(self) -> int:
        return sum(r.failures for r in self.results)

    @property
    def passed(self) -> bool:
        return self.failures == 0

    def failed_suites(self) -> List[SuiteResult]:
        return [r for r in self.results if not r.passed]

    def to_json(self) -> List[Dict[str, Any]]:
        return [r.to_dict() for r in self.results]


def _all_permutations(n: int) -> List[Permutation]:
    return [Permutation(values) for values in itertools.permutations(range(1, n + 1))]


def _suite_catalan_counts(n: int) -> SuiteResult:
    result = SuiteResult("catalan_counts", n)
    for tag in CANONICAL_PATTERNS:
        count = len(enumerate_avoiders(tag, n))
        result.check(count == catalan(n), lambda: f"pattern {tag}: {count} avoiders")
    return result


def _suite_enumeration_complete(n: int, everything: List[Permutation]) -> SuiteResult:
    result = SuiteResult("enumeration_complete", n)
    for tag in PATTERNS:
        listed = enumerate_avoiders(tag, n)
        filtered = {p for p in everything if avoids(tag, p)}
        result.check(
            len(set(listed)) == len(listed) and set(listed) == filtered,
            lambda: f"pattern {tag}: enumeration differs from filtering",
        )
    return result


def _suite_avoids_matches_occurrences(n: int, everything: List[Permutation]) -> SuiteResult:
    result = SuiteResult("avoids_matches_occurrences", n)
    for p in everything:
        for tag in PATTERNS:
            result.check(
                avoids(tag, p) == (occurrences(tag, p) == 0),
                lambda: f"pattern {tag}, p={p.to_text()}",
            )
    return result


def _suite_occurrences_21(n: int, everything: List[Permutation]) -> SuiteResult:
    result = SuiteResult("occurrences_21_is_inversions", n)
    for p in everything:
        result.check(occurrences((2, 1), p) == inversions(p), lambda: f"p={p.to_text()}")
    return result


def _suite_ab_pair_invariants(n: int, avoiders: List[Permutation]) -> SuiteResult:
    result = SuiteResult("ab_pair_invariants", n)
    for p in avoiders:
        ab = strict_rl_minima(p)
        result.check(ab.is_valid, lambda: f"p={p.to_text()}: {'; '.join(ab.violations())}")
    return result


def _suite_rlm_staircase(n: int, perms: List[Permutation]) -> SuiteResult:
    result = SuiteResult("rlm_staircase", n)
    for p in perms:
        F = rlm_staircase(p)
        ok = (
            F[n] == n
            and all(F[x] <= x for x in range(n + 1))
            and all(a <= b for a, b in zip(F, F[1:]))
        )
        result.check(ok, lambda: f"p={p.to_text()}: F={F}")
    return result


def _suite_symmetry_bijection(n: int, canonical_avoiders: Dict[str, List[Permutation]]) -> SuiteResult:
    result = SuiteResult("symmetry_bijection", n)
    for alpha in PATTERNS.values():
        for p in canonical_avoiders[alpha.canonical]:
            image = symmetry_apply(alpha, p)
            result.check(
                avoids(alpha, image) and symmetry_apply(alpha, image) == p,
                lambda: f"pattern {alpha.tag}, p={p.to_text()}",
            )
    return result


def _suite_bijection_roundtrip(tag: str, n: int, paths: List[DyckPath]) -> SuiteResult:
    result = SuiteResult(f"bijection_roundtrip_{tag}", n)
    decoded = set()
    for d in paths:
        p = dyck_to_perm(tag, d)
        decoded.add(p)
        result.check(
            avoids(tag, p) and perm_to_dyck(tag, p) == d,
            lambda: f"path {d.to_string()} -> {p.to_text()}",
        )
    result.check(len(decoded) == len(paths), lambda: f"{len(decoded)} distinct images")
    return result


def _suite_inversion_formula(tag: str, n: int, paths: List[DyckPath]) -> SuiteResult:
    result = SuiteResult(f"inversion_formula_{tag}", n)
    for d in paths:
        p = dyck_to_perm(tag, d)
        expected = inversions(p)
        if tag == "231":
            direct = n * (n - 1) // 2 - sum(rlm_staircase(p)[:n])
        else:
            ab = strict_rl_minima(p)
            direct = sum(ab.A) - sum(ab.B)
        result.check(
            inv_from_dyck(tag, d) == expected and direct == expected,
            lambda: f"p={p.to_text()}: inv={expected}, path={inv_from_dyck(tag, d)}, direct={direct}",
        )
    return result


def _suite_delta_rule(n: int, paths: List[DyckPath], delta_fn: DeltaFn) -> SuiteResult:
    result = SuiteResult("delta_rule", n)
    for tag in CANONICAL_PATTERNS:
        invs = {d: inv_from_dyck(tag, d) for d in paths}
        for d in paths:
            for i in range(1, 2 * n):
                moved = flip(d, i)
                expected = invs[moved] - invs[d]
                got = delta_fn(tag, d, i)
                ok = got == expected
                if tag == "231" and moved != d:
                    ok = ok and abs(got) == 1
                result.check(
                    ok,
                    lambda: f"pattern {tag}, d={d.to_string()}, i={i}: delta {got}, expected {expected}",
                )
    return result


def _suite_flip_involution(n: int, paths: List[DyckPath]) -> SuiteResult:
    result = SuiteResult("flip_involution", n)
    for d in paths:
        for i in range(1, 2 * n):
            if flip_kind(d.heights, i) is None:
                continue
            moved = flip(d, i)
            result.check(
                moved != d and flip(moved, i) == d,
                lambda: f"d={d.to_string()}, i={i}",
            )
    return result


def _suite_partition_bruteforce(n: int) -> SuiteResult:
    result = SuiteResult("partition_poly_bruteforce", n)
    for tag in PATTERNS:
        histogram = Counter(inversions(p) for p in enumerate_avoiders(tag, n))
        expected = [histogram.get(k, 0) for k in range(n * (n - 1) // 2 + 1)]
        got = list(partition_poly(tag, n).coefficients)
        result.check(got == expected, lambda: f"pattern {tag}: {got} vs {expected}")
    return result


def _poly_mul(a: Sequence[int], b: Sequence[int]) -> List[int]:
    out = [0] * (len(a) + len(b) - 1)
    for i, x in enumerate(a):
        for j, y in enumerate(b):
            out[i + j] += x * y
    return out


def _suite_partition_recurrence(n_max: int) -> SuiteResult:
    """Z_{n+1}(q) = sum_i q^i Z_i(q) Z_{n-i}(q) for the 231 family."""
    result = SuiteResult("partition_recurrence_231", n_max)
    polys = [list(partition_poly("231", k).coefficients) for k in range(n_max + 1)]
    for n in range(n_max):
        total = [0] * ((n + 1) * n // 2 + 1)
        for i in range(n + 1):
            term = [0] * i + _poly_mul(polys[i], polys[n - i])
            for k, c in enumerate(term):
                total[k] += c
        result.check(total == polys[n + 1], lambda: f"n+1={n + 1}: {total} vs {polys[n + 1]}")
    return result


def _suite_detailed_balance(n: int, paths: List[DyckPath], betas: Sequence[float]) -> SuiteResult:
    result = SuiteResult("detailed_balance", n)
    for tag in CANONICAL_PATTERNS:
        invs = {d: inv_from_dyck(tag, d) for d in paths}
        for beta in betas:
            log_q = beta / n
            rows = {d: kernel_row(tag, d, beta) for d in paths}
            for d, row in rows.items():
                total = sum(row.values())
                result.check(abs(total - 1.0) < 1e-12, lambda: f"row of {d.to_string()} sums to {total}")
                for target, p in row.items():
                    if target == d:
                        continue
                    forward = math.exp(log_q * invs[d]) * p
                    backward = math.exp(log_q * invs[target]) * rows[target].get(d, 0.0)
                    result.check(
                        math.isclose(forward, backward, rel_tol=1e-12),
                        lambda: f"pattern {tag}, beta={beta}: {d.to_string()} <-> {target.to_string()}",
                    )
    return result


def _suite_rlm_permuton_roundtrip(
    n: int, avoiders: List[Permutation], tol_mass: float = MASS_TOL
) -> SuiteResult:
    result = SuiteResult("rlm_permuton_roundtrip", n)
    for p in avoiders:
        F = rlm_staircase(p)
        P = permuton_from_rlm(F, G=n)
        curve = rlm_curve_grid(P, tol_mass)
        expected = np.array([F[x] for x in range(n)] + [n]) / n
        result.check(
            not P.violations() and np.allclose(curve, expected, atol=1e-12),
            lambda: f"p={p.to_text()}: curve {curve.tolist()} vs {expected.tolist()}",
        )
        path_heights = perm_to_dyck("231", p).heights / (2.0 * n)
        phi = excursion_from_graph(F, m=2 * n)
        result.check(
            np.allclose(phi.values, path_heights, atol=1e-12),
            lambda: f"p={p.to_text()}: rotated staircase differs from the Dyck path",
        )
    return result


def _suite_tilted_monotone(n: int, betas: Sequence[float]) -> SuiteResult:
    result = SuiteResult("tilted_mean_inversions_monotone", n)
    for tag in CANONICAL_PATTERNS:
        means = [exact_tilted(tag, n, beta).expected_inversions() for beta in betas]
        result.check(
            all(a < b for a, b in zip(means, means[1:])),
            lambda: f"pattern {tag}: means {means}",
        )
    return result


def _suite_ball_ordering(n: int, eps: float) -> SuiteResult:
    result = SuiteResult(
        "ldp_ball_ordering", n, note="finite-n ordering sanity check only"
    )
    grid = np.linspace(0.0, 1.0, 2 * n + 1)
    flat = Excursion(np.zeros_like(grid))
    tent = Excursion(np.minimum(grid, 1.0 - grid))
    p_flat = exact_ball_probability("231", n, 0.0, flat, eps)
    p_tent = exact_ball_probability("231", n, 0.0, tent, eps)
    result.check(
        p_flat > p_tent,
        lambda: f"P(ball around 0)={p_flat} not above P(ball around tent)={p_tent}",
    )
    return result


def validate_all(
    n_max: int = 8,
    delta_fn: Optional[DeltaFn] = None,
    ball_n: int = 12,
    ball_eps: float = 0.15,
    cap: int = ENUMERATION_CAP,
    tol_mass: float = MASS_TOL,
) -> ValidationReport:
    """
    Run every exhaustive property suite for n = 1..n_max.

    Args:
        n_max: Largest size checked
        delta_fn: Inversion-delta function under test (default delta_inv)
        ball_n: Size of the ball-ordering check (0 skips it)
        ball_eps: Ball radius
        cap: Enumeration cap
        tol_mass: Mass tolerance for curve extraction from grid permutons

    Returns:
        ValidationReport with one entry per suite and size
    """
    _check_cap(n_max, cap)
    delta_fn = delta_fn or delta_inv
    report = ValidationReport()
    started = time.perf_counter()

    def add(result: SuiteResult) -> None:
        report.results.append(result)
        status = "ok" if result.passed else f"FAILED ({result.failures})"
        log = logger.info if result.passed else logger.error
        log(f"{result.suite} n={result.n}: {result.cases} cases {status}")

    for n in range(1, n_max + 1):
        paths = _paths_from_heights(enumerate_dyck_heights(n))
        canonical_avoiders = {tag: enumerate_avoiders(tag, n, cap) for tag in CANONICAL_PATTERNS}
        everything = _all_permutations(n) if n <= OCCURRENCES_21_N_MAX else []
        add(_suite_catalan_counts(n))
        if n <= ALL_PERMUTATIONS_N_MAX:
            add(_suite_enumeration_complete(n, everything))
            add(_suite_avoids_matches_occurrences(n, everything))
            add(_suite_rlm_staircase(n, everything))
        else:
            add(_suite_rlm_staircase(n, canonical_avoiders["231"]))
        if everything:
            add(_suite_occurrences_21(n, everything))
        add(_suite_ab_pair_invariants(n, canonical_avoiders["321"]))
        add(_suite_symmetry_bijection(n, canonical_avoiders))
        for tag in CANONICAL_PATTERNS:
            add(_suite_bijection_roundtrip(tag, n, paths))
            add(_suite_inversion_formula(tag, n, paths))
        add(_suite_delta_rule(n, paths, delta_fn))
        add(_suite_flip_involution(n, paths))
        add(_suite_partition_bruteforce(n))
        if n <= 6:
            add(_suite_detailed_balance(n, paths, (-1.5, 2.0)))
        if 2 <= n <= 6:
            add(_suite_tilted_monotone(n, (-2.0, 0.0, 2.0)))
        add(_suite_rlm_permuton_roundtrip(n, canonical_avoiders["231"], tol_mass))
    add(_suite_partition_recurrence(max(n_max, 20)))
    if ball_n:
        add(_suite_ball_ordering(ball_n, ball_eps))

    report.elapsed = time.perf_counter() - started
    logger.info(
        f"Validation finished in {report.elapsed:.1f}s: "
        f"{len(report.results)} suites, {report.failures} failures"
    )
    return report
