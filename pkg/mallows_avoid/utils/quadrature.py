"""
Adaptive Simpson integration for smooth scalar integrands.

Used for the entropy and dilogarithm-type integrals of the partition limits and
for cumulative weights along the components of analytic permutons.
"""

from typing import Callable, List, Sequence, Tuple

import numpy as np
from loguru import logger

MAX_SUBDIVISIONS = 2**20


def _simpson(fa: float, fm: float, fb: float, h: float) -> float:
    """Simpson's rule on an interval of half-width h."""
    return h / 3.0 * (fa + 4.0 * fm + fb)


def integrate_adaptive_simpson(
    f: Callable[[float], float],
    a: float,
    b: float,
    tol: float = 1e-10,
    max_subdivisions: int = MAX_SUBDIVISIONS,
) -> Tuple[float, float]:
    """
    Adaptive Simpson's rule integration.

    Intervals are refined from an explicit work stack until the Richardson
    error estimate of each piece is below its share of the tolerance, or until
    the subdivision cap is reached.

    Args:
        f: Function to integrate
        a: Lower bound
        b: Upper bound
        tol: Absolute error tolerance
        max_subdivisions: Maximum number of accepted intervals

    Returns:
        Tuple of (integral_value, error_estimate)
    """
    if a == b:
        return 0.0, 0.0

    if a > b:
        result, error = integrate_adaptive_simpson(f, b, a, tol, max_subdivisions)
        return -result, error

    fa = float(f(a))
    fb = float(f(b))
    m = 0.5 * (a + b)
    fm = float(f(m))
    whole = _simpson(fa, fm, fb, 0.5 * (b - a))

    total = 0.0
    error = 0.0
    accepted = 0
    capped = False
    stack: List[Tuple[float, float, float, float, float, float, float]] = [
        (a, b, fa, fm, fb, whole, tol)
    ]

    while stack:
        lo, hi, flo, fmid, fhi, s_whole, local_tol = stack.pop()
        mid = 0.5 * (lo + hi)
        h = 0.5 * (hi - lo)
        flm = float(f(0.5 * (lo + mid)))
        frm = float(f(0.5 * (mid + hi)))

        s_left = _simpson(flo, flm, fmid, 0.5 * h)
        s_right = _simpson(fmid, frm, fhi, 0.5 * h)
        estimate = (s_left + s_right - s_whole) / 15.0

        at_cap = accepted + len(stack) + 2 > max_subdivisions
        if abs(estimate) <= local_tol or at_cap or mid in (lo, hi):
            capped = capped or at_cap
            total += s_left + s_right + estimate
            error += abs(estimate)
            accepted += 1
            continue

        stack.append((mid, hi, fmid, frm, fhi, s_right, 0.5 * local_tol))
        stack.append((lo, mid, flo, flm, fmid, s_left, 0.5 * local_tol))

    if capped:
        logger.warning(
            f"Adaptive Simpson hit the subdivision cap on [{a}, {b}], "
            f"error estimate {error:.3e}"
        )

    return total, error


def cumulative_simpson(
    f: Callable[[float], float],
    points: Sequence[float],
    tol: float = 1e-8,
    max_subdivisions: int = MAX_SUBDIVISIONS,
) -> np.ndarray:
    """
    Cumulative integrals of f from points[0] to each of the sorted points.

    Args:
        f: Function to integrate
        points: Nondecreasing evaluation points
        tol: Absolute tolerance of the final cumulative value
        max_subdivisions: Subdivision cap per piece

    Returns:
        Array of the same length as points, starting at 0
    """
    xs = np.asarray(points, dtype=float)
    if xs.size == 0:
        return np.zeros(0)
    if np.any(np.diff(xs) < 0.0):
        raise ValueError("cumulative_simpson needs nondecreasing points")

    pieces = max(xs.size - 1, 1)
    out = np.zeros(xs.size)
    for k in range(1, xs.size):
        value, _ = integrate_adaptive_simpson(
            f, float(xs[k - 1]), float(xs[k]), tol / pieces, max_subdivisions
        )
        out[k] = out[k - 1] + value
    return out
