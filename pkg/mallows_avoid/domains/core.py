"""
Core domain: permutations, length-3 patterns and permutation statistics.

Positions and values are 1-based in the data model. The symmetry transforms
reduce the six patterns of length 3 to the two canonical ones, 231 and 321.
"""

import itertools
from dataclasses import dataclass
from typing import Dict, Iterable, Iterator, List, Sequence, Tuple, Union

import numpy as np

CANONICAL_PATTERNS = ("231", "321")


@dataclass(frozen=True)
class Permutation:
    """A permutation of {1..n} in one-line notation."""

    values: Tuple[int, ...]

    def __post_init__(self) -> None:
        values = tuple(int(v) for v in self.values)
        object.__setattr__(self, "values", values)
        if sorted(values) != list(range(1, len(values) + 1)):
            raise ValueError(f"Not a permutation of 1..{len(values)}: {values}")

    @property
    def n(self) -> int:
        return len(self.values)

    def __len__(self) -> int:
        return len(self.values)

    def __iter__(self) -> Iterator[int]:
        return iter(self.values)

    def __getitem__(self, position: int) -> int:
        """Value at a 1-based position."""
        if not 1 <= position <= self.n:
            raise IndexError(f"Position {position} outside 1..{self.n}")
        return self.values[position - 1]

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=np.int64)

    def to_text(self) -> str:
        """One-line text format: space-separated values."""
        return " ".join(str(v) for v in self.values)

    @classmethod
    def from_text(cls, text: str) -> "Permutation":
        return cls(tuple(int(token) for token in text.split()))

    @classmethod
    def from_array(cls, values: Iterable[int]) -> "Permutation":
        return cls(tuple(int(v) for v in values))


@dataclass(frozen=True)
class Pattern3:
    """
    A pattern of length 3 together with its reduction to a canonical pattern.

    ``transform`` lists the maps ("reverse", "complement") that carry
    tag-avoiders onto canonical-avoiders. Each map exchanges inversions with
    non-inversions, so an odd number of them flips the sign of beta.
    """

    tag: str
    canonical: str
    transform: Tuple[str, ...]

    @property
    def values(self) -> Tuple[int, ...]:
        return tuple(int(c) for c in self.tag)

    @property
    def is_canonical(self) -> bool:
        return self.tag == self.canonical

    @property
    def flips_inversions(self) -> bool:
        return len(self.transform) % 2 == 1

    def effective_beta(self, beta: float) -> float:
        """Beta to use on the canonical pattern to sample this one at beta."""
        return -beta if self.flips_inversions else beta

    def __str__(self) -> str:
        return self.tag


PATTERNS: Dict[str, Pattern3] = {
    "231": Pattern3("231", "231", ()),
    "213": Pattern3("213", "231", ("complement",)),
    "312": Pattern3("312", "231", ("reverse", "complement")),
    "132": Pattern3("132", "231", ("reverse",)),
    "321": Pattern3("321", "321", ()),
    "123": Pattern3("123", "321", ("reverse",)),
}

PatternLike = Union[Pattern3, str, int]


def pattern3(tag: PatternLike) -> Pattern3:
    """
    Look up a pattern of length 3.

    Args:
        tag: A Pattern3, or its tag as a string or integer

    Returns:
        The registered Pattern3

    Raises:
        ValueError: If the tag is not a pattern of length 3
    """
    if isinstance(tag, Pattern3):
        return tag
    key = str(tag).strip()
    if key not in PATTERNS:
        raise ValueError(f"Unknown pattern {tag!r}, expected one of {sorted(PATTERNS)}")
    return PATTERNS[key]


def canonical_pattern(tag: PatternLike) -> Pattern3:
    """The canonical pattern (231 or 321) a tag reduces to."""
    return PATTERNS[pattern3(tag).canonical]


def _require_canonical(alpha: PatternLike) -> str:
    pattern = pattern3(alpha)
    if not pattern.is_canonical:
        raise ValueError(f"Pattern {pattern.tag} is not canonical (231 or 321)")
    return pattern.tag


@dataclass(frozen=True)
class ABPair:
    """
    Positions A and values B of the strict right-to-left minima.

    Sortedness and range are checked on construction. The structural
    invariants (a_i > b_i and domination) hold for 321-avoiders and are
    checked by ``check_invariants``.
    """

    A: Tuple[int, ...]
    B: Tuple[int, ...]
    n: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "A", tuple(int(a) for a in self.A))
        object.__setattr__(self, "B", tuple(int(b) for b in self.B))
        if len(self.A) != len(self.B):
            raise ValueError(f"|A|={len(self.A)} differs from |B|={len(self.B)}")
        for name, seq in (("A", self.A), ("B", self.B)):
            if any(x >= y for x, y in zip(seq, seq[1:])):
                raise ValueError(f"{name} must be strictly increasing: {seq}")
            if seq and not (1 <= seq[0] and seq[-1] <= self.n):
                raise ValueError(f"{name} must lie in 1..{self.n}: {seq}")

    @property
    def k(self) -> int:
        return len(self.A)

    def pairs(self) -> List[Tuple[int, int]]:
        return list(zip(self.A, self.B))

    def violations(self) -> List[str]:
        """Human-readable list of broken invariants (empty when valid)."""
        problems = []
        if self.A and self.A[0] <= 1:
            problems.append(f"a_1={self.A[0]} must exceed 1")
        if self.B and self.B[-1] >= self.n:
            problems.append(f"b_k={self.B[-1]} must be below n={self.n}")
        for a, b in zip(self.A, self.B):
            if a <= b:
                problems.append(f"a={a} must exceed b={b}")
        in_a = set(self.A)
        below_a = 0
        below_b = 0
        b_set = set(self.B)
        for m in range(1, self.n + 1):
            # counts over elements strictly below m
            if below_b < below_a or (m in in_a and below_b == below_a):
                problems.append(f"domination fails at m={m}")
                break
            below_a += m in in_a
            below_b += m in b_set
        return problems

    def check_invariants(self) -> None:
        problems = self.violations()
        if problems:
            raise ValueError(f"Invalid ABPair for n={self.n}: " + "; ".join(problems))

    @property
    def is_valid(self) -> bool:
        return not self.violations()


def identity(n: int) -> Permutation:
    return Permutation(tuple(range(1, n + 1)))


def reverse(p: Permutation) -> Permutation:
    """sigma(n), ..., sigma(1)."""
    return Permutation(p.values[::-1])


def complement(p: Permutation) -> Permutation:
    """n+1-sigma(1), ..., n+1-sigma(n)."""
    return Permutation(tuple(p.n + 1 - v for v in p.values))


def inverse(p: Permutation) -> Permutation:
    out = [0] * p.n
    for position, value in enumerate(p.values, start=1):
        out[value - 1] = position
    return Permutation(tuple(out))


def inversions(p: Permutation) -> int:
    """
    Count pairs i<j with p(i)>p(j) using a Fenwick tree.

    Args:
        p: Permutation

    Returns:
        Number of inversions
    """
    n = p.n
    tree = [0] * (n + 1)
    count = 0
    for seen, value in enumerate(p.values):
        # seen values that are <= value
        smaller = 0
        k = value
        while k > 0:
            smaller += tree[k]
            k -= k & -k
        count += seen - smaller
        k = value
        while k <= n:
            tree[k] += 1
            k += k & -k
    return count


def _pattern_values(alpha: Union[PatternLike, Sequence[int]]) -> Tuple[int, ...]:
    if isinstance(alpha, Pattern3):
        return alpha.values
    if isinstance(alpha, (str, int)):
        values = tuple(int(c) for c in str(alpha))
    else:
        values = tuple(int(v) for v in alpha)
    if sorted(values) != list(range(1, len(values) + 1)):
        raise ValueError(f"Not a pattern: {alpha!r}")
    return values


def occurrences(alpha: Union[PatternLike, Sequence[int]], p: Permutation) -> int:
    """
    Number of occurrences of a pattern in p (naive, O(n^k)).

    Args:
        alpha: Pattern as Pattern3, tag, or sequence such as (2, 1)
        p: Permutation

    Returns:
        Number of index subsets whose values have the relative order of alpha
    """
    pattern = _pattern_values(alpha)
    k = len(pattern)
    # positions of the pattern sorted by pattern value
    order = sorted(range(k), key=lambda j: pattern[j])
    values = p.values
    count = 0
    for combo in itertools.combinations(range(p.n), k):
        picked = [values[combo[j]] for j in order]
        if all(picked[j] < picked[j + 1] for j in range(k - 1)):
            count += 1
    return count


def _avoids_231(values: Sequence[int]) -> bool:
    # stack-sortable iff 231-avoiding
    stack: List[int] = []
    expected = 1
    for value in values:
        while stack and stack[-1] < value:
            if stack.pop() != expected:
                return False
            expected += 1
        stack.append(value)
    while stack:
        if stack.pop() != expected:
            return False
        expected += 1
    return True


def _avoids_321(values: Sequence[int]) -> bool:
    running_max = 0
    # largest value that already has a larger value to its left
    middle = 0
    for value in values:
        if value < middle:
            return False
        if value < running_max:
            middle = max(middle, value)
        else:
            running_max = value
    return True


def avoids(alpha: PatternLike, p: Permutation) -> bool:
    """
    Whether p avoids a length-3 pattern, in linear time.

    Args:
        alpha: Pattern of length 3
        p: Permutation

    Returns:
        True iff p has no occurrence of alpha
    """
    pattern = pattern3(alpha)
    if not pattern.is_canonical:
        return avoids(pattern.canonical, symmetry_apply(pattern, p))
    if pattern.tag == "231":
        return _avoids_231(p.values)
    return _avoids_321(p.values)


def strict_rl_minima(p: Permutation) -> ABPair:
    """
    Strict right-to-left minima of p: positions a with b = p(a) < a and b
    smaller than every later value.

    Args:
        p: Permutation (321-avoiding for the ABPair invariants to hold)

    Returns:
        ABPair of sorted positions and values
    """
    positions: List[int] = []
    values: List[int] = []
    suffix_min = p.n + 1
    for a in range(p.n, 0, -1):
        b = p.values[a - 1]
        if b < suffix_min:
            if b < a:
                positions.append(a)
                values.append(b)
            suffix_min = b
    positions.reverse()
    values.reverse()
    return ABPair(tuple(positions), tuple(values), p.n)


def rlm_staircase(p: Permutation) -> Tuple[int, ...]:
    """
    Staircase F(x) = min{p(c) : c > x} - 1 for x = 0..n-1, and F(n) = n.

    Args:
        p: Permutation

    Returns:
        Tuple of n+1 integers, nondecreasing with F(x) <= x
    """
    n = p.n
    staircase = [0] * (n + 1)
    staircase[n] = n
    suffix_min = n + 1
    for x in range(n - 1, -1, -1):
        suffix_min = min(suffix_min, p.values[x])
        staircase[x] = suffix_min - 1
    return tuple(staircase)


_TRANSFORMS = {"reverse": reverse, "complement": complement}


def symmetry_apply(alpha: PatternLike, p: Permutation) -> Permutation:
    """
    Apply the transform carrying alpha-avoiders to canonical-avoiders.

    Every transform in the table is an involution, so the same call maps
    canonical-avoiders back to alpha-avoiders.

    Args:
        alpha: Pattern of length 3
        p: Permutation

    Returns:
        Transformed permutation
    """
    out = p
    for name in pattern3(alpha).transform:
        out = _TRANSFORMS[name](out)
    return out
