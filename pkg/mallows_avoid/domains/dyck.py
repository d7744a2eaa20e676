"""
Dyck domain: paths, the bijections with 231- and 321-avoiders, inversion counts
read off paths, and constant-time inversion deltas for peak/valley flips.

Encodings:
    231: walk the staircase F of right-to-left minima from (0,0) to (n,n); a
         right step is +1 and an up step is -1. The resulting word is also the
         stack-sorting word of the permutation (push = +1, pop = -1).
    321: the interleaved word s_{2m-1} = -1 iff m in A, s_{2m} = +1 iff m in B,
         where (A, B) are the strict right-to-left minima.

Heights d(0..2n) are cached on every path. For 231 the inversion count is the
sum over up-steps of (height after the step - 1); for 321 it is half the sum of
the even-index heights d(2), d(4), ..., d(2n-2).
"""

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from mallows_avoid.domains.core import (
    ABPair,
    PatternLike,
    Permutation,
    _require_canonical,
    avoids,
    rlm_staircase,
    strict_rl_minima,
)


@dataclass(frozen=True)
class DyckPath:
    """A +1/-1 walk of length 2n that stays nonnegative and ends at 0."""

    steps: Tuple[int, ...]
    _heights: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        steps = tuple(int(s) for s in self.steps)
        object.__setattr__(self, "steps", steps)
        if len(steps) % 2:
            raise ValueError(f"Dyck path needs an even number of steps, got {len(steps)}")
        if any(s not in (1, -1) for s in steps):
            raise ValueError("Dyck path steps must be +1 or -1")
        heights = np.zeros(len(steps) + 1, dtype=np.int64)
        if steps:
            np.cumsum(steps, out=heights[1:])
        if heights.min() < 0 or heights[-1] != 0:
            raise ValueError(f"Not a Dyck path: {self.to_string_of(steps)}")
        heights.setflags(write=False)
        object.__setattr__(self, "_heights", heights)

    @property
    def n(self) -> int:
        return len(self.steps) // 2

    @property
    def heights(self) -> np.ndarray:
        """Read-only partial sums d(0..2n)."""
        return self._heights

    @staticmethod
    def to_string_of(steps: Tuple[int, ...]) -> str:
        return "".join("U" if s > 0 else "D" for s in steps)

    def to_string(self) -> str:
        """Text format over {U, D}, e.g. ``UUDD``."""
        return self.to_string_of(self.steps)

    @classmethod
    def from_string(cls, text: str) -> "DyckPath":
        letters = text.strip().upper()
        if any(c not in "UD" for c in letters):
            raise ValueError(f"Dyck word may only contain U and D: {text!r}")
        return cls(tuple(1 if c == "U" else -1 for c in letters))

    @classmethod
    def from_heights(cls, heights: np.ndarray) -> "DyckPath":
        heights = np.asarray(heights, dtype=np.int64)
        if heights.size == 0 or heights[0] != 0:
            raise ValueError("Heights must start at 0")
        return cls(tuple(int(s) for s in np.diff(heights)))

    def height_rows(self) -> List[Tuple[int, int]]:
        """Rows of the ``i,height`` CSV export."""
        return [(i, int(h)) for i, h in enumerate(self._heights)]


def minimal_path(n: int) -> DyckPath:
    """(UD)^n, the path of the identity permutation."""
    return DyckPath((1, -1) * n)


def maximal_path(n: int) -> DyckPath:
    """U^n D^n, the full-height path."""
    return DyckPath((1,) * n + (-1,) * n)


def alternating_path(n: int) -> DyckPath:
    """(UUDD)^(n/2), followed by UD when n is odd."""
    return DyckPath((1, 1, -1, -1) * (n // 2) + (1, -1) * (n % 2))


def perm_to_dyck_231(p: Permutation) -> DyckPath:
    """
    Path of a 231-avoider read from its staircase of right-to-left minima.

    Args:
        p: 231-avoiding permutation

    Returns:
        DyckPath of size n

    Raises:
        ValueError: If p contains 231
    """
    if not avoids("231", p):
        raise ValueError(f"Permutation {p.to_text()} is not 231-avoiding")
    staircase = rlm_staircase(p)
    steps: List[int] = []
    for x in range(p.n):
        steps.append(1)
        steps.extend([-1] * (staircase[x + 1] - staircase[x]))
    return DyckPath(tuple(steps))


def dyck_to_perm_231(d: DyckPath) -> Permutation:
    """
    Inverse of perm_to_dyck_231 in linear time.

    The word is replayed as a stack-sorting run: +1 pushes the next position,
    -1 pops a position and assigns it the next output value.
    """
    values = [0] * d.n
    stack: List[int] = []
    position = 0
    output = 0
    for step in d.steps:
        if step > 0:
            position += 1
            stack.append(position)
        else:
            output += 1
            values[stack.pop() - 1] = output
    return Permutation(tuple(values))


def ab_to_dyck_321(ab: ABPair) -> DyckPath:
    """
    Interleaved word of an ABPair.

    Raises:
        ValueError: If ab violates a_i > b_i or domination
    """
    ab.check_invariants()
    in_a = set(ab.A)
    in_b = set(ab.B)
    steps: List[int] = []
    for m in range(1, ab.n + 1):
        steps.append(-1 if m in in_a else 1)
        steps.append(1 if m in in_b else -1)
    return DyckPath(tuple(steps))


def dyck_to_ab_321(d: DyckPath) -> ABPair:
    """Read A off the odd steps and B off the even steps."""
    steps = d.steps
    A = tuple(m for m in range(1, d.n + 1) if steps[2 * m - 2] < 0)
    B = tuple(m for m in range(1, d.n + 1) if steps[2 * m - 1] > 0)
    return ABPair(A, B, d.n)


def perm_to_dyck_321(p: Permutation) -> DyckPath:
    """
    Path of a 321-avoider through its strict right-to-left minima.

    Raises:
        ValueError: If p contains 321
    """
    if not avoids("321", p):
        raise ValueError(f"Permutation {p.to_text()} is not 321-avoiding")
    return ab_to_dyck_321(strict_rl_minima(p))


def dyck_to_perm_321(d: DyckPath) -> Permutation:
    """Place B at positions A, then fill the rest increasingly."""
    ab = dyck_to_ab_321(d)
    values = [0] * d.n
    for a, b in zip(ab.A, ab.B):
        values[a - 1] = b
    in_b = set(ab.B)
    free_values = iter(v for v in range(1, d.n + 1) if v not in in_b)
    for position in range(d.n):
        if values[position] == 0:
            values[position] = next(free_values)
    return Permutation(tuple(values))


def perm_to_dyck(alpha: PatternLike, p: Permutation) -> DyckPath:
    if _require_canonical(alpha) == "231":
        return perm_to_dyck_231(p)
    return perm_to_dyck_321(p)


def dyck_to_perm(alpha: PatternLike, d: DyckPath) -> Permutation:
    if _require_canonical(alpha) == "231":
        return dyck_to_perm_231(d)
    return dyck_to_perm_321(d)


def inv_from_heights(alpha: PatternLike, heights: np.ndarray) -> np.ndarray:
    """
    Inversion counts from height vectors (last axis indexes d(0..2n)).

    Accepts a single path or a matrix of paths, one per row.
    """
    tag = _require_canonical(alpha)
    heights = np.asarray(heights, dtype=np.int64)
    if tag == "231":
        ups = np.diff(heights, axis=-1) > 0
        return np.sum((heights[..., 1:] - 1) * ups, axis=-1)
    two_n = heights.shape[-1] - 1
    return np.sum(heights[..., 2:two_n:2], axis=-1) // 2


def inv_from_dyck(alpha: PatternLike, d: DyckPath) -> int:
    """
    Inversion count of the permutation encoded by d.

    231: sum over x of (x - F(x)). 321: sum(A) - sum(B).
    """
    return int(inv_from_heights(alpha, d.heights))


def flip_kind(heights: np.ndarray, i: int) -> Optional[str]:
    """'peak' when flip(d, i) lowers d(i), 'valley' when it raises it, else None."""
    if not 1 <= i <= len(heights) - 2:
        return None
    left = heights[i - 1]
    if left != heights[i + 1]:
        return None
    h = heights[i]
    if h == left + 1 and h >= 2:
        return "peak"
    if h == left - 1:
        return "valley"
    return None


def flip(d: DyckPath, i: int) -> DyckPath:
    """
    Turn the peak (of height >= 2) or valley at index i into its opposite.

    Args:
        d: Dyck path
        i: Index in 1..2n-1

    Returns:
        The flipped path, or d itself when index i is inert
    """
    kind = flip_kind(d.heights, i)
    if kind is None:
        return d
    steps = list(d.steps)
    steps[i - 1], steps[i] = steps[i], steps[i - 1]
    return DyckPath(tuple(steps))


def delta_inv(alpha: PatternLike, d: DyckPath, i: int) -> int:
    """
    Change of the inversion count under flip(d, i), in O(1).

    231: +1 for valley to peak, -1 for peak to valley.
    321: the same at even i, and 0 at odd i.
    """
    tag = _require_canonical(alpha)
    kind = flip_kind(d.heights, i)
    if kind is None:
        return 0
    if tag == "321" and i % 2 == 1:
        return 0
    return 1 if kind == "valley" else -1


def enumerate_dyck_heights(n: int) -> np.ndarray:
    """
    All Dyck paths of size n as a height matrix, in lexicographic word order
    with D before U.

    Args:
        n: Size (2n steps)

    Returns:
        Integer array of shape (C_n, 2n+1)
    """
    dtype = np.int8 if n < 127 else np.int16
    heights = np.zeros((1, 1), dtype=dtype)
    for k in range(2 * n):
        last = heights[:, -1].astype(np.int64)
        candidates = np.stack([last - 1, last + 1], axis=1)
        remaining = 2 * n - k - 1
        valid = (candidates >= 0) & (candidates <= remaining)
        rows, cols = np.nonzero(valid)
        heights = np.hstack(
            [heights[rows], candidates[rows, cols].astype(dtype)[:, None]]
        )
    return heights
