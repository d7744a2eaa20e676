"""
Sampler domain: the tilted peak/valley Markov chain on Dyck paths.

One step draws an index i uniformly in 1..2n-1 and a uniform u. If the path
has a peak of height >= 2 or a valley at i, the flip changes the inversion
count of the decoded permutation by delta in {-1, 0, +1}, and it is accepted
when u < min(1, q^delta) with q = e^(beta/n). The stationary law is
proportional to q^inv on the avoiders of the canonical pattern.

Draws come in rows of two doubles from a PCG64 generator, so the compiled
block kernel and the pure-Python ``metropolis_step`` consume the stream in
the same order and agree bit for bit.
"""

import math
import time
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger
from numba import njit
from pydantic import BaseModel, ConfigDict, Field, field_validator

from mallows_avoid.domains.core import (
    PATTERNS,
    Pattern3,
    PatternLike,
    Permutation,
    _require_canonical,
    inversions,
    symmetry_apply,
)
from mallows_avoid.domains.dyck import (
    DyckPath,
    alternating_path,
    delta_inv,
    dyck_to_perm,
    flip,
    flip_kind,
    inv_from_dyck,
    maximal_path,
    minimal_path,
)
from mallows_avoid.domains.permuton import limit_cumulative_pair_321, limit_excursion_231
from mallows_avoid.utils.workers import map_in_pool

MAX_SEED = 2**64 - 1
MAIN_STREAM = 0
COUPLING_STREAM = 1
INIT_ALIASES = {"min": "minimal", "max": "maximal", "alt": "alternating"}
RNG_DESCRIPTION = "numpy PCG64 seeded by SeedSequence(seed, spawn_key=(stream_id,))"
COUPLING_CONVENTION = "shared proposal index and shared acceptance uniform"


@njit(cache=True)
def _run_block(heights, inv, log_q, is_321, draws):  # pragma: no cover - compiled
    two_n = heights.shape[0] - 1
    p_plus = min(1.0, math.exp(log_q))
    p_minus = min(1.0, math.exp(-log_q))
    accepted = 0
    for k in range(draws.shape[0]):
        i = 1 + int(draws[k, 0] * (two_n - 1))
        left = heights[i - 1]
        if left != heights[i + 1]:
            continue
        h = heights[i]
        if h > left:
            if h < 2:
                continue
            delta = -1
        else:
            delta = 1
        if is_321 and i % 2 == 1:
            delta = 0
        if delta > 0:
            p = p_plus
        elif delta < 0:
            p = p_minus
        else:
            p = 1.0
        if draws[k, 1] < p:
            heights[i] = 2 * left - h
            inv += delta
            accepted += 1
    return inv, accepted


@njit(cache=True)
def _run_coupled_block(first, second, log_q, is_321, draws):  # pragma: no cover - compiled
    two_n = first.shape[0] - 1
    p_plus = min(1.0, math.exp(log_q))
    p_minus = min(1.0, math.exp(-log_q))
    for k in range(draws.shape[0]):
        i = 1 + int(draws[k, 0] * (two_n - 1))
        u = draws[k, 1]
        for heights in (first, second):
            left = heights[i - 1]
            if left != heights[i + 1]:
                continue
            h = heights[i]
            if h > left:
                if h < 2:
                    continue
                delta = -1
            else:
                delta = 1
            if is_321 and i % 2 == 1:
                delta = 0
            if delta > 0:
                p = p_plus
            elif delta < 0:
                p = p_minus
            else:
                p = 1.0
            if u < p:
                heights[i] = 2 * left - h


def derive_rng(seed: int, stream_id: int = MAIN_STREAM) -> np.random.Generator:
    """
    Independent, reproducible generator for a (seed, stream) pair.

    Args:
        seed: Nonnegative 64-bit seed
        stream_id: Stream index; distinct streams never share a state

    Returns:
        numpy Generator backed by PCG64
    """
    if not 0 <= int(seed) <= MAX_SEED:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    sequence = np.random.SeedSequence(int(seed), spawn_key=(int(stream_id),))
    return np.random.Generator(np.random.PCG64(sequence))


class RunConfig(BaseModel):
    """Parameters of one chain run."""

    model_config = ConfigDict(frozen=True)

    pattern: str = Field(
        description="Pattern of length 3 to avoid",
        pattern="^(231|213|312|132|321|123)$",
    )
    n: int = Field(description="Permutation size", ge=1)
    beta: float = Field(default=0.0, description="Tilt; q = e^(beta/n)", allow_inf_nan=False)
    steps: int = Field(default=0, description="Number of Metropolis steps", ge=0)
    seed: int = Field(default=0, description="64-bit seed", ge=0, le=MAX_SEED)
    thin: int = Field(default=0, description="Record every thin steps; 0 = final state only", ge=0)
    init: str = Field(
        default="minimal",
        description="Initial path",
        pattern="^(minimal|maximal|alternating|limit)$",
    )
    coupling_check: bool = Field(default=False, description="Also run the coupled diagnostic")
    checkpoints: int = Field(default=16, description="Coupling checkpoints", ge=1)
    block_size: int = Field(default=2**20, description="Draws per compiled block", ge=1)

    @field_validator("pattern", mode="before")
    @classmethod
    def _pattern_to_text(cls, value: Any) -> str:
        return str(value).strip()

    @field_validator("init", mode="before")
    @classmethod
    def _expand_init(cls, value: Any) -> str:
        text = str(value).strip()
        return INIT_ALIASES.get(text, text)

    @property
    def alpha(self) -> Pattern3:
        return PATTERNS[self.pattern]

    @property
    def effective_beta(self) -> float:
        return self.alpha.effective_beta(self.beta)


@dataclass(frozen=True)
class ChainState:
    """Chain position on canonical-pattern paths with its cached inversion count."""

    path: DyckPath
    inv: int
    pattern: Pattern3
    n: int
    log_q: float
    step_count: int = 0

    @classmethod
    def start(cls, pattern: PatternLike, path: DyckPath, beta: float) -> "ChainState":
        tag = _require_canonical(pattern)
        return cls(path, inv_from_dyck(tag, path), PATTERNS[tag], path.n, beta / path.n)

    @property
    def beta(self) -> float:
        return self.log_q * self.n

    def permutation(self) -> Permutation:
        return dyck_to_perm(self.pattern, self.path)


def _acceptance(delta: int, log_q: float) -> float:
    if delta == 0:
        return 1.0
    return min(1.0, math.exp(log_q * delta))


def metropolis_step(s: ChainState, rng: np.random.Generator) -> ChainState:
    """
    One Metropolis step; the reference implementation of the compiled kernel.

    Args:
        s: Current state
        rng: Generator; exactly two doubles are drawn

    Returns:
        Next state (step_count always advances)
    """
    u = rng.random(2)
    two_n = 2 * s.n
    i = 1 + int(u[0] * (two_n - 1))
    advanced = replace(s, step_count=s.step_count + 1)
    if flip_kind(s.path.heights, i) is None:
        return advanced
    delta = delta_inv(s.pattern, s.path, i)
    if u[1] < _acceptance(delta, s.log_q):
        return replace(advanced, path=flip(s.path, i), inv=s.inv + delta)
    return advanced


def kernel_row(pattern: PatternLike, d: DyckPath, beta: float) -> Dict[DyckPath, float]:
    """
    Exact one-step transition probabilities out of d.

    Returns:
        Mapping from reachable paths (d included) to probabilities summing to 1
    """
    tag = _require_canonical(pattern)
    log_q = beta / d.n
    proposals = 2 * d.n - 1
    row: Dict[DyckPath, float] = {d: 0.0}
    for i in range(1, 2 * d.n):
        if flip_kind(d.heights, i) is None:
            row[d] += 1.0 / proposals
            continue
        p = _acceptance(delta_inv(tag, d, i), log_q)
        target = flip(d, i)
        row[target] = row.get(target, 0.0) + p / proposals
        row[d] += (1.0 - p) / proposals
    return row


def limit_path(pattern: PatternLike, beta: float, n: int) -> DyckPath:
    """
    Dyck path greedily tracking the limit heights at (pattern, beta).

    231 follows 2n phi_beta(k/2n); 321 follows 2n (Pi2 - Pi1)(k/2n) for the
    cumulative minimizer pair. beta <= 0 gives the minimal path.
    """
    tag = _require_canonical(pattern)
    ts = np.arange(2 * n + 1) / (2.0 * n)
    if tag == "231":
        target = 2.0 * n * limit_excursion_231(beta, ts)
    else:
        first, second = limit_cumulative_pair_321(beta, ts)
        target = 2.0 * n * (second - first)
    heights = [0]
    for k in range(2 * n):
        h = heights[-1]
        remaining = 2 * n - k - 1
        up_ok = h + 1 <= remaining
        down_ok = h >= 1
        closer_up = abs(h + 1 - target[k + 1]) <= abs(h - 1 - target[k + 1])
        heights.append(h + 1 if up_ok and (closer_up or not down_ok) else h - 1)
    return DyckPath.from_heights(np.array(heights))


def initial_path(init: str, pattern: PatternLike, beta: float, n: int) -> DyckPath:
    init = INIT_ALIASES.get(init, init)
    if init == "minimal":
        return minimal_path(n)
    if init == "maximal":
        return maximal_path(n)
    if init == "alternating":
        return alternating_path(n)
    if init == "limit":
        return limit_path(pattern, beta, n)
    raise ValueError(f"Unknown init {init!r}")


def _decode(alpha: Pattern3, heights: np.ndarray) -> Permutation:
    path = DyckPath.from_heights(heights)
    return symmetry_apply(alpha, dyck_to_perm(alpha.canonical, path))


@dataclass
class SampleRecord:
    """Outcome of one run: final permutation and path, run statistics, metadata."""

    config: RunConfig
    permutation: Permutation
    path: DyckPath
    accept_rate: float
    final_inv: int
    wall_time: float
    thinned: List[Tuple[int, Permutation]] = field(default_factory=list)
    coupling: Optional["CouplingDiagnostic"] = None
    state: Optional[ChainState] = None

    def metadata(self) -> Dict[str, Any]:
        cfg = self.config
        meta: Dict[str, Any] = {
            "pattern": cfg.pattern,
            "n": cfg.n,
            "beta": cfg.beta,
            "steps": cfg.steps,
            "seed": cfg.seed,
            "thin": cfg.thin,
            "init": cfg.init,
            "coupling_check": cfg.coupling_check,
            "checkpoints": cfg.checkpoints,
            "accept_rate": self.accept_rate,
            "final_inv": self.final_inv,
            "wall_time": self.wall_time,
            "canonical_pattern": cfg.alpha.canonical,
            "effective_beta": cfg.effective_beta,
            "rng": RNG_DESCRIPTION,
        }
        if self.coupling is not None:
            meta["coupling"] = self.coupling.summary()
        return meta


def _block_ends(steps: int, thin: int, block_size: int) -> List[int]:
    ends = set(range(block_size, steps, block_size))
    if thin:
        ends.update(range(thin, steps + 1, thin))
    ends.add(steps)
    return sorted(e for e in ends if 0 < e <= steps)


def run_chain(
    cfg: RunConfig,
    on_record: Optional[Callable[[int, Permutation], None]] = None,
) -> SampleRecord:
    """
    Run the chain for cfg.steps steps on stream 0 of cfg.seed.

    Non-canonical patterns run on the canonical pattern at the effective beta
    and every recorded state is mapped back with symmetry_apply. Thinned
    states go to ``on_record(step, permutation)`` as they are produced; with
    no callback they are kept on the returned record.

    Args:
        cfg: Run configuration
        on_record: Optional streaming sink for thinned states

    Returns:
        SampleRecord
    """
    alpha = cfg.alpha
    canonical = alpha.canonical
    beta = cfg.effective_beta
    log_q = beta / cfg.n
    is_321 = canonical == "321"
    rng = derive_rng(cfg.seed, MAIN_STREAM)

    path = initial_path(cfg.init, canonical, beta, cfg.n)
    heights = np.array(path.heights, dtype=np.int64)
    inv = inv_from_dyck(canonical, path)
    thinned: List[Tuple[int, Permutation]] = []
    sink = on_record if on_record is not None else (lambda step, p: thinned.append((step, p)))

    logger.info(
        f"Running {cfg.steps} steps: pattern={cfg.pattern} n={cfg.n} beta={cfg.beta} "
        f"init={cfg.init} seed={cfg.seed}"
    )
    started = time.perf_counter()
    accepted = 0
    done = 0
    for end in _block_ends(cfg.steps, cfg.thin, cfg.block_size):
        draws = rng.random((end - done, 2))
        inv, block_accepted = _run_block(heights, inv, log_q, is_321, draws)
        accepted += int(block_accepted)
        done = end
        if cfg.thin and done % cfg.thin == 0:
            sink(done, _decode(alpha, heights))
        if done % cfg.block_size == 0:
            logger.info(f"{done}/{cfg.steps} steps, accept rate {accepted / done:.4f}")
    wall_time = time.perf_counter() - started

    final_path = DyckPath.from_heights(heights)
    permutation = _decode(alpha, heights)
    record = SampleRecord(
        config=cfg,
        permutation=permutation,
        path=final_path,
        accept_rate=accepted / cfg.steps if cfg.steps else 0.0,
        final_inv=inversions(permutation),
        wall_time=wall_time,
        thinned=thinned,
        state=ChainState(final_path, int(inv), PATTERNS[canonical], cfg.n, log_q, cfg.steps),
    )
    if cfg.coupling_check:
        record.coupling = coupled_equilibration(cfg)
    logger.info(
        f"Finished in {wall_time:.2f}s: accept rate {record.accept_rate:.4f}, "
        f"inv {record.final_inv} (cached canonical inv {int(inv)})"
    )
    return record


@dataclass
class CouplingDiagnostic:
    """Sup-distance between two coupled chains' normalized excursions."""

    inits: Tuple[str, str]
    steps: List[int]
    distances: List[float]
    convention: str = COUPLING_CONVENTION

    @property
    def final_distance(self) -> float:
        return self.distances[-1]

    def rows(self) -> List[Tuple[int, float]]:
        """Rows of the ``step,distance`` export."""
        return list(zip(self.steps, self.distances))

    def summary(self) -> Dict[str, Any]:
        return {
            "inits": list(self.inits),
            "final_distance": self.final_distance,
            "checkpoints": len(self.steps),
            "convention": self.convention,
            "note": "heuristic equilibration check, not a mixing bound",
        }


def coupled_equilibration(
    cfg: RunConfig, inits: Sequence[str] = ("minimal", "maximal")
) -> CouplingDiagnostic:
    """
    Run two chains from different starts with shared randomness (stream 1).

    Args:
        cfg: Run configuration; steps and checkpoints are used, init is not
        inits: Initial paths of the two chains

    Returns:
        CouplingDiagnostic with sup |h1 - h2| / (2n) at each checkpoint, the
        first one taken before any step
    """
    alpha = cfg.alpha
    canonical = alpha.canonical
    beta = cfg.effective_beta
    log_q = beta / cfg.n
    rng = derive_rng(cfg.seed, COUPLING_STREAM)
    first = np.array(initial_path(inits[0], canonical, beta, cfg.n).heights, dtype=np.int64)
    second = np.array(initial_path(inits[1], canonical, beta, cfg.n).heights, dtype=np.int64)
    scale = 2.0 * cfg.n

    ends = np.unique(np.linspace(0, cfg.steps, cfg.checkpoints + 1).astype(np.int64))
    steps = [0]
    distances = [float(np.abs(first - second).max() / scale)]
    done = 0
    for end in ends[1:]:
        while done < end:
            chunk = int(min(cfg.block_size, end - done))
            _run_coupled_block(first, second, log_q, canonical == "321", rng.random((chunk, 2)))
            done += chunk
        steps.append(int(end))
        distances.append(float(np.abs(first - second).max() / scale))
        logger.debug(f"coupling at step {end}: sup distance {distances[-1]:.5f}")
    return CouplingDiagnostic((inits[0], inits[1]), steps, distances)


def run_replicas(cfgs: Sequence[RunConfig], workers: Optional[int] = None) -> List[SampleRecord]:
    """Independent runs over a process pool, returned in input order."""
    return map_in_pool(run_chain, list(cfgs), workers)
