"""
Permuton domain.

Parameter-space objects (excursions and pairs of subuniform measures), grid
permutons given by their CDF on a (G+1)x(G+1) lattice, analytic permutons made
of weighted curves, the maps between them, and the closed-form limit shapes.

Conventions:
    - A CompletedGraph is the polyline of a nondecreasing curve f with f <= x,
      closed by vertical segments, running from (0, 0) to (1, 1). Rotating it
      by -pi/4 gives an excursion: t = (x + y) / 2, phi = (x - y) / 2.
    - PermutonGrid.cdf[i, j] = mu([0, i/G] x [0, j/G]).
    - All beta-formulas are evaluated in log-sum-exp form so beta up to ~700
      stays finite.
"""

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.special import expit

from mallows_avoid.domains.core import (
    PatternLike,
    Permutation,
    _pattern_values,
    _require_canonical,
    avoids,
    strict_rl_minima,
)
from mallows_avoid.domains.dyck import DyckPath, perm_to_dyck_231
from mallows_avoid.utils.quadrature import cumulative_simpson, integrate_adaptive_simpson

ArrayLike = Union[float, Sequence[float], np.ndarray]

MASS_TOL = 1e-9


def _readonly(values: ArrayLike) -> np.ndarray:
    out = np.array(values, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Excursion:
    """Piecewise-linear phi sampled at t_k = k/m, k = 0..m."""

    values: np.ndarray
    tol: float = 1e-9

    def __post_init__(self) -> None:
        values = _readonly(self.values)
        object.__setattr__(self, "values", values)
        if values.ndim != 1 or values.size < 2:
            raise ValueError("Excursion needs at least two grid values")
        if abs(values[0]) > self.tol or abs(values[-1]) > self.tol:
            raise ValueError("Excursion must vanish at t=0 and t=1")
        if values.min() < -self.tol:
            raise ValueError(f"Excursion must be nonnegative, min={values.min()}")
        step = 1.0 / (values.size - 1)
        if np.abs(np.diff(values)).max() > step + self.tol:
            raise ValueError("Excursion must be 1-Lipschitz")

    @property
    def m(self) -> int:
        return self.values.size - 1

    @property
    def grid(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.m + 1)

    def slopes(self) -> np.ndarray:
        return np.diff(self.values) * self.m

    def __call__(self, t: ArrayLike) -> np.ndarray:
        return np.interp(t, self.grid, self.values)


@dataclass(frozen=True)
class StepMeasure:
    """Measure on [0,1] with a density constant on each of m cells."""

    density: np.ndarray
    tol: float = 1e-9

    def __post_init__(self) -> None:
        density = _readonly(self.density)
        object.__setattr__(self, "density", density)
        if density.ndim != 1 or density.size < 1:
            raise ValueError("StepMeasure needs at least one cell")
        if density.min() < -self.tol or density.max() > 1.0 + self.tol:
            raise ValueError("StepMeasure density must lie in [0, 1]")

    @property
    def m(self) -> int:
        return self.density.size

    @property
    def mass(self) -> float:
        return float(self.density.sum() / self.m)

    @property
    def grid(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.m + 1)

    def cdf(self) -> np.ndarray:
        """CDF at the m+1 grid nodes."""
        out = np.zeros(self.m + 1)
        np.cumsum(self.density / self.m, out=out[1:])
        return out

    def cdf_at(self, x: ArrayLike) -> np.ndarray:
        return np.interp(x, self.grid, self.cdf())

    def complement(self) -> "StepMeasure":
        """Leb - pi."""
        return StepMeasure(np.clip(1.0 - self.density, 0.0, 1.0), self.tol)

    @classmethod
    def from_cdf(cls, cdf_nodes: ArrayLike) -> "StepMeasure":
        cdf_nodes = np.asarray(cdf_nodes, dtype=float)
        m = cdf_nodes.size - 1
        return cls(np.clip(np.diff(cdf_nodes) * m, 0.0, 1.0))


@dataclass(frozen=True)
class MeasurePairD:
    """Pair (pi1, pi2) of equal mass with pi1([0,x]) <= pi2([0,x])."""

    first: StepMeasure
    second: StepMeasure
    tol: float = 1e-9

    def __post_init__(self) -> None:
        if self.first.m != self.second.m:
            raise ValueError(
                f"Measure pair grids differ: {self.first.m} vs {self.second.m}"
            )
        if abs(self.first.mass - self.second.mass) > self.tol:
            raise ValueError(
                f"Measure pair masses differ: {self.first.mass} vs {self.second.mass}"
            )
        if np.any(self.first.cdf() > self.second.cdf() + self.tol):
            raise ValueError("Measure pair violates CDF domination")

    @property
    def m(self) -> int:
        return self.first.m


@dataclass(frozen=True)
class PermutonGrid:
    """Permuton given by its CDF on the lattice (i/G, j/G)."""

    cdf: np.ndarray

    def __post_init__(self) -> None:
        cdf = _readonly(self.cdf)
        object.__setattr__(self, "cdf", cdf)
        if cdf.ndim != 2 or cdf.shape[0] != cdf.shape[1] or cdf.shape[0] < 2:
            raise ValueError(f"PermutonGrid needs a square (G+1)x(G+1) CDF, got {cdf.shape}")

    @property
    def G(self) -> int:
        return self.cdf.shape[0] - 1

    @property
    def grid(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.G + 1)

    def cell_masses(self) -> np.ndarray:
        """mu of each cell [(i-1)/G, i/G] x [(j-1)/G, j/G]."""
        return np.diff(np.diff(self.cdf, axis=0), axis=1)

    def violations(self, tol: float = 1e-9) -> List[str]:
        problems = []
        grid = self.grid
        if np.abs(self.cdf[0, :]).max() > tol or np.abs(self.cdf[:, 0]).max() > tol:
            problems.append("cdf must vanish on the axes")
        if np.abs(self.cdf[:, -1] - grid).max() > tol:
            problems.append("first marginal is not uniform")
        if np.abs(self.cdf[-1, :] - grid).max() > tol:
            problems.append("second marginal is not uniform")
        if np.diff(self.cdf, axis=0).min() < -tol or np.diff(self.cdf, axis=1).min() < -tol:
            problems.append("cdf is not monotone")
        if self.cell_masses().min() < -tol:
            problems.append("cdf is not 2-increasing")
        return problems

    def check(self, tol: float = 1e-9) -> "PermutonGrid":
        problems = self.violations(tol)
        if problems:
            raise ValueError("Invalid permuton grid: " + "; ".join(problems))
        return self

    def cdf_at(self, x: ArrayLike, y: ArrayLike) -> np.ndarray:
        """Bilinear interpolation of the grid CDF."""
        interpolator = RegularGridInterpolator((self.grid, self.grid), self.cdf)
        xs, ys = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        points = np.stack([np.clip(xs, 0.0, 1.0), np.clip(ys, 0.0, 1.0)], axis=-1)
        return interpolator(points)

    def sample_points(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Draw points: a cell by its mass, then uniformly inside the cell."""
        masses = np.clip(self.cell_masses(), 0.0, None).ravel()
        cells = rng.choice(masses.size, size=size, p=masses / masses.sum())
        rows, cols = np.divmod(cells, self.G)
        offsets = rng.random((size, 2))
        return np.stack([(rows + offsets[:, 0]) / self.G, (cols + offsets[:, 1]) / self.G], axis=1)


@dataclass(frozen=True)
class CurveComponent:
    """
    One weighted curve of an analytic permuton, parametrized by t in support.

    kind:
        "graph"        points (t, g(t))
        "transpose"    points (g(t), t)
        "antidiagonal" points (t, 1 - t)
    """

    kind: str
    weight: Callable[[np.ndarray], np.ndarray]
    curve: Callable[[np.ndarray], np.ndarray] = lambda t: np.asarray(t, dtype=float)
    inverse: Callable[[np.ndarray], np.ndarray] = lambda y: np.asarray(y, dtype=float)
    support: Tuple[float, float] = (0.0, 1.0)
    breakpoints: Tuple[float, ...] = ()

    def __post_init__(self) -> None:
        if self.kind not in ("graph", "transpose", "antidiagonal"):
            raise ValueError(f"Unknown curve kind {self.kind!r}")
        lo, hi = self.support
        if not 0.0 <= lo <= hi <= 1.0:
            raise ValueError(f"Invalid support {self.support}")

    def knots(self) -> np.ndarray:
        lo, hi = self.support
        inner = [b for b in self.breakpoints if lo < b < hi]
        return np.array([lo, *inner, hi])

    def points(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.kind == "graph":
            return np.stack([t, self.curve(t)], axis=-1)
        if self.kind == "transpose":
            return np.stack([self.curve(t), t], axis=-1)
        return np.stack([t, 1.0 - t], axis=-1)


@dataclass(frozen=True)
class CurvePermuton:
    """Permuton made of weighted curves, with closed-form weights."""

    components: Tuple[CurveComponent, ...]
    beta: float
    pattern: str
    simpson_tol: float = 1e-8
    table_size: int = 4096
    _tables: Dict[int, Tuple[np.ndarray, np.ndarray]] = field(
        default_factory=dict, repr=False, compare=False
    )

    def _weight_scalar(self, component: CurveComponent) -> Callable[[float], float]:
        return lambda t: float(component.weight(np.asarray(t)))

    def cumulative_weight(self, index: int, ts: ArrayLike) -> np.ndarray:
        """W(t) = integral of the weight from the start of the support to t."""
        component = self.components[index]
        lo, hi = component.support
        ts = np.clip(np.asarray(ts, dtype=float), lo, hi)
        flat = ts.ravel()
        nodes = np.unique(np.concatenate([component.knots(), flat]))
        cumulative = cumulative_simpson(self._weight_scalar(component), nodes, self.simpson_tol)
        return cumulative[np.searchsorted(nodes, flat)].reshape(ts.shape)

    def component_masses(self) -> np.ndarray:
        masses = []
        for component in self.components:
            total = 0.0
            knots = component.knots()
            for a, b in zip(knots[:-1], knots[1:]):
                value, _ = integrate_adaptive_simpson(
                    self._weight_scalar(component), float(a), float(b), self.simpson_tol
                )
                total += value
            masses.append(total)
        return np.array(masses)

    def cdf(self, x: float, y: float) -> float:
        """mu([0, x] x [0, y]) by quadrature along each component."""
        x = float(np.clip(x, 0.0, 1.0))
        y = float(np.clip(y, 0.0, 1.0))
        total = 0.0
        for index, component in enumerate(self.components):
            if component.kind == "graph":
                upper = min(x, float(component.inverse(np.asarray(y))))
                total += float(self.cumulative_weight(index, upper))
            elif component.kind == "transpose":
                upper = min(float(component.inverse(np.asarray(x))), y)
                total += float(self.cumulative_weight(index, upper))
            else:
                lower_upper = self.cumulative_weight(index, [1.0 - y, x])
                total += max(0.0, float(lower_upper[1] - lower_upper[0]))
        return total

    def cdf_grid(self, G: int) -> PermutonGrid:
        """Grid CDF at resolution G."""
        grid = np.linspace(0.0, 1.0, G + 1)
        total = np.zeros((G + 1, G + 1))
        for index, component in enumerate(self.components):
            if component.kind == "graph":
                w_x = self.cumulative_weight(index, grid)
                w_y = self.cumulative_weight(index, component.inverse(grid))
                total += np.minimum.outer(w_x, w_y)
            elif component.kind == "transpose":
                w_x = self.cumulative_weight(index, component.inverse(grid))
                w_y = self.cumulative_weight(index, grid)
                total += np.minimum.outer(w_x, w_y)
            else:
                w_x = self.cumulative_weight(index, grid)
                w_y = self.cumulative_weight(index, 1.0 - grid)
                total += np.maximum(0.0, w_x[:, None] - w_y[None, :])
        return PermutonGrid(total)

    def _sampling_table(self, index: int) -> Tuple[np.ndarray, np.ndarray]:
        if index not in self._tables:
            component = self.components[index]
            lo, hi = component.support
            ts = np.unique(np.concatenate([np.linspace(lo, hi, self.table_size), component.knots()]))
            cumulative = cumulative_simpson(self._weight_scalar(component), ts, self.simpson_tol)
            self._tables[index] = (ts, cumulative)
        return self._tables[index]

    def sample_points(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Inverse-CDF sampling: pick a component by mass, then a parameter t."""
        masses = self.component_masses()
        choice = rng.choice(len(self.components), size=size, p=masses / masses.sum())
        out = np.empty((size, 2))
        for index, component in enumerate(self.components):
            selected = np.nonzero(choice == index)[0]
            if selected.size == 0:
                continue
            ts, cumulative = self._sampling_table(index)
            u = rng.random(selected.size) * cumulative[-1]
            out[selected] = component.points(np.interp(u, cumulative, ts))
        return out


@dataclass(frozen=True)
class CompletedGraph:
    """Polyline of a nondecreasing curve below the diagonal, from (0,0) to (1,1)."""

    xs: np.ndarray
    ys: np.ndarray
    tol: float = 1e-9

    def __post_init__(self) -> None:
        xs = np.asarray(self.xs, dtype=float)
        ys = np.asarray(self.ys, dtype=float)
        if xs.shape != ys.shape or xs.ndim != 1 or xs.size < 2:
            raise ValueError("CompletedGraph needs matching 1-D vertex arrays")
        if np.diff(xs).min() < -self.tol or np.diff(ys).min() < -self.tol:
            raise ValueError("CompletedGraph must be nondecreasing in both coordinates")
        if np.any(ys > xs + self.tol):
            raise ValueError("RLM curve must satisfy f(x) <= x")
        if abs(xs[0]) + abs(ys[0]) > self.tol or abs(xs[-1] - 1) + abs(ys[-1] - 1) > self.tol:
            raise ValueError("CompletedGraph must run from (0,0) to (1,1)")
        # drop zero-length segments
        keep = np.ones(xs.size, dtype=bool)
        keep[1:] = (np.diff(xs) + np.diff(ys)) > 0.0
        object.__setattr__(self, "xs", _readonly(np.clip(xs[keep], 0.0, 1.0)))
        object.__setattr__(self, "ys", _readonly(np.clip(ys[keep], 0.0, 1.0)))

    @property
    def t(self) -> np.ndarray:
        return (self.xs + self.ys) / 2.0

    @property
    def phi(self) -> np.ndarray:
        return (self.xs - self.ys) / 2.0

    @classmethod
    def from_staircase(cls, staircase: Sequence[int]) -> "CompletedGraph":
        """Graph of f(x) = F(floor(n x)) / n on [0,1), f(1) = 1."""
        n = len(staircase) - 1
        xs = [0.0]
        ys = [0.0]
        for k in range(n):
            level = staircase[k] / n
            xs += [k / n, (k + 1) / n]
            ys += [level, level]
        xs.append(1.0)
        ys.append(1.0)
        return cls(np.array(xs), np.array(ys))

    @classmethod
    def from_values(cls, values: ArrayLike) -> "CompletedGraph":
        """Piecewise-linear f sampled on a uniform grid, closed at both ends."""
        values = np.asarray(values, dtype=float)
        grid = np.linspace(0.0, 1.0, values.size)
        xs = np.concatenate([[0.0], grid, [1.0]])
        ys = np.concatenate([[0.0], values, [1.0]])
        return cls(xs, ys)

    @classmethod
    def from_function(cls, f: Callable[[np.ndarray], np.ndarray], samples: int = 4096) -> "CompletedGraph":
        return cls.from_values(f(np.linspace(0.0, 1.0, samples + 1)))

    def __call__(self, x: ArrayLike) -> np.ndarray:
        """Right-continuous f: the top of the graph above x."""
        x = np.asarray(x, dtype=float)
        k = np.clip(np.searchsorted(self.xs, x, side="right") - 1, 0, self.xs.size - 1)
        nxt = np.minimum(k + 1, self.xs.size - 1)
        span = self.xs[nxt] - self.xs[k]
        with np.errstate(invalid="ignore", divide="ignore"):
            frac = np.where(span > 0, (x - self.xs[k]) / np.where(span > 0, span, 1.0), 0.0)
        return self.ys[k] + frac * (self.ys[nxt] - self.ys[k])


def _staircase_like(f: object) -> bool:
    return isinstance(f, (tuple, list)) and all(isinstance(v, (int, np.integer)) for v in f)


def _as_graph(f: object) -> CompletedGraph:
    if isinstance(f, CompletedGraph):
        return f
    if _staircase_like(f):
        staircase = list(f)  # type: ignore[call-overload]
        n = len(staircase) - 1
        if staircase[-1] != n or any(staircase[x] > x for x in range(n + 1)):
            raise ValueError("Staircase must satisfy F(x) <= x and F(n) = n")
        return CompletedGraph.from_staircase(staircase)
    if isinstance(f, Excursion):
        return rlm_graph_from_excursion(f)
    if callable(f):
        return CompletedGraph.from_function(f)
    return CompletedGraph.from_values(np.asarray(f, dtype=float))


def excursion_from_graph(f: object, m: int = 1024) -> Excursion:
    """
    Rotate the completed graph of an RLM curve into an excursion on m+1 points.

    Args:
        f: CompletedGraph, staircase, callable or uniform-grid values
        m: Number of grid cells of the result

    Returns:
        Excursion
    """
    graph = _as_graph(f)
    grid = np.linspace(0.0, 1.0, m + 1)
    return Excursion(np.clip(np.interp(grid, graph.t, graph.phi), 0.0, None))


def rlm_graph_from_excursion(phi: Excursion) -> CompletedGraph:
    """Inverse rotation: x = t + phi, y = t - phi."""
    grid = phi.grid
    xs = np.clip(grid + phi.values, 0.0, 1.0)
    ys = np.clip(grid - phi.values, 0.0, 1.0)
    return CompletedGraph(np.maximum.accumulate(xs), np.maximum.accumulate(ys))


def empirical_excursion(p: Permutation) -> Excursion:
    """phi(k/2n) = d(k)/(2n) for the Dyck path of a 231-avoider."""
    if not avoids("231", p):
        raise ValueError(f"Permutation {p.to_text()} is not 231-avoiding")
    return excursion_of_path(perm_to_dyck_231(p))


def excursion_of_path(d: DyckPath) -> Excursion:
    return Excursion(d.heights / (2.0 * d.n))


def empirical_measure_pair(p: Permutation) -> MeasurePairD:
    """Indicator densities of the strict RL-minima positions and values."""
    if not avoids("321", p):
        raise ValueError(f"Permutation {p.to_text()} is not 321-avoiding")
    ab = strict_rl_minima(p)
    first = np.zeros(p.n)
    second = np.zeros(p.n)
    first[np.asarray(ab.A, dtype=int) - 1] = 1.0
    second[np.asarray(ab.B, dtype=int) - 1] = 1.0
    return MeasurePairD(StepMeasure(first), StepMeasure(second))


def quantile(m: StepMeasure, u: ArrayLike) -> np.ndarray:
    """
    Generalized inverse sup{x : m([0, x]) <= u}.

    Args:
        m: Step measure
        u: Level(s) in [0, mass)

    Returns:
        Quantile(s), same shape as u

    Raises:
        ValueError: If a level lies outside [0, mass)
    """
    u = np.asarray(u, dtype=float)
    cdf = m.cdf()
    if np.any(u < 0.0) or np.any(u >= cdf[-1]):
        raise ValueError(f"Quantile level outside [0, {cdf[-1]})")
    k = np.searchsorted(cdf, u, side="right") - 1
    return k / m.m + (u - cdf[k]) / m.density[k]


@dataclass(frozen=True)
class Coupling:
    """Nondecreasing coupling of two equal-mass step measures."""

    first: StepMeasure
    second: StepMeasure

    @property
    def mass(self) -> float:
        return self.first.mass

    def cdf(self, x: ArrayLike, y: ArrayLike) -> np.ndarray:
        return np.minimum(self.first.cdf_at(x), self.second.cdf_at(y))

    def cdf_grid(self, G: int) -> np.ndarray:
        grid = np.linspace(0.0, 1.0, G + 1)
        return np.minimum.outer(self.first.cdf_at(grid), self.second.cdf_at(grid))

    def atoms(self, count: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Pushforward of Leb on [0, M] discretized at count midpoints."""
        if self.mass <= 0.0:
            return np.zeros(0), np.zeros(0), np.zeros(0)
        levels = (np.arange(count) + 0.5) * self.mass / count
        weights = np.full(count, self.mass / count)
        return quantile(self.first, levels), quantile(self.second, levels), weights


def monotone_coupling(m1: StepMeasure, m2: StepMeasure, tol: float = MASS_TOL) -> Coupling:
    """
    The unique coupling of m1 and m2 with nondecreasing support.

    Raises:
        ValueError: If the masses differ beyond tol
    """
    if abs(m1.mass - m2.mass) > tol:
        raise ValueError(f"Cannot couple measures of mass {m1.mass} and {m2.mass}")
    return Coupling(m1, m2)


def psi(pair: MeasurePairD, G: int = 256, tol_mass: float = MASS_TOL) -> PermutonGrid:
    """pi1 -> pi2 plus (Leb - pi1) -> (Leb - pi2), as a grid permuton."""
    upper = monotone_coupling(pair.first, pair.second, tol_mass)
    lower = monotone_coupling(pair.first.complement(), pair.second.complement(), tol_mass)
    return PermutonGrid(upper.cdf_grid(G) + lower.cdf_grid(G)).check(1e-9)


def _sparse_min_table(values: np.ndarray) -> List[np.ndarray]:
    table = [values]
    width = 1
    while 2 * width <= values.size:
        prev = table[-1]
        table.append(np.minimum(prev[:-width], prev[width:]))
        width *= 2
    return table


def permuton_from_rlm(f: object, G: int = 256) -> PermutonGrid:
    """
    Grid CDF of the 231-avoiding permuton whose RLM curve is f.

    mu([x,1] x [0,y]) is the L1 distance from (x, y) to the completed graph
    when (x, y) lies above it, else 0. Along the graph x' - y' = 2 phi, so the
    distance is y - x + 2 min phi over the arc of the graph inside
    [x,1] x [0,y]; range minima use a sparse table.

    Args:
        f: CompletedGraph, integer staircase F(0..n), callable, or values
        G: Grid resolution

    Returns:
        PermutonGrid
    """
    graph = _as_graph(f)
    xs, ys, tv, phiv = graph.xs, graph.ys, graph.t, graph.phi
    grid = np.linspace(0.0, 1.0, G + 1)
    last = xs.size - 1

    # first parameter where the graph reaches abscissa x
    k = np.clip(np.searchsorted(xs, grid, side="left"), 1, last)
    exact = xs[k - 1] >= grid
    span = np.where(xs[k] > xs[k - 1], xs[k] - xs[k - 1], 1.0)
    frac = np.clip((grid - xs[k - 1]) / span, 0.0, 1.0)
    t_start = np.where(exact, tv[k - 1], tv[k - 1] + frac * (tv[k] - tv[k - 1]))

    # last parameter where the graph is still at or below ordinate y
    k = np.clip(np.searchsorted(ys, grid, side="right") - 1, 0, last - 1)
    span = np.where(ys[k + 1] > ys[k], ys[k + 1] - ys[k], 1.0)
    frac = np.clip((grid - ys[k]) / span, 0.0, 1.0)
    t_end = np.where(ys[k + 1] <= grid, tv[k + 1], tv[k] + frac * (tv[k + 1] - tv[k]))

    ts, te = np.meshgrid(t_start, t_end, indexing="ij")
    inside = ts <= te
    lowest = np.minimum(np.interp(ts, tv, phiv), np.interp(te, tv, phiv))

    table = _sparse_min_table(phiv)
    lo = np.searchsorted(tv, ts, side="left")
    hi = np.searchsorted(tv, te, side="right") - 1
    has_vertex = inside & (lo <= hi)
    width = np.where(has_vertex, hi - lo + 1, 1)
    level = np.floor(np.log2(width)).astype(int)
    stacked = np.full((len(table), phiv.size), np.inf)
    for depth, row in enumerate(table):
        stacked[depth, : row.size] = row
    lo_c = np.where(has_vertex, lo, 0)
    hi_c = np.where(has_vertex, hi - (1 << level) + 1, 0)
    vertex_min = np.minimum(stacked[level, lo_c], stacked[level, hi_c])
    lowest = np.where(has_vertex, np.minimum(lowest, vertex_min), lowest)

    x_grid, y_grid = np.meshgrid(grid, grid, indexing="ij")
    lower_right = np.where(inside, np.maximum(0.0, y_grid - x_grid + 2.0 * lowest), 0.0)
    cdf = np.clip(y_grid - lower_right, 0.0, None)
    return PermutonGrid(cdf)


def rlm_curve_grid(P: PermutonGrid, tol_mass: float = MASS_TOL) -> np.ndarray:
    """RLM curve at every grid abscissa: largest grid y with zero lower-right mass."""
    lower_right = P.cdf[-1, :][None, :] - P.cdf
    zero = lower_right <= tol_mass
    # lower-right mass is nondecreasing in y
    index = np.sum(np.cumprod(zero, axis=1), axis=1) - 1
    return index / P.G


def rlm_curve_of_permuton(P: PermutonGrid, x: float, tol_mass: float = MASS_TOL) -> float:
    """f(x) = max{y : mu([x,1] x [0,y]) = 0} on the grid."""
    i = int(round(float(np.clip(x, 0.0, 1.0)) * P.G))
    return float(rlm_curve_grid(P, tol_mass)[i])


def _check_beta_range(beta: float) -> None:
    if abs(beta) > 700.0:
        raise ValueError(f"|beta| must not exceed 700, got {beta}")


def x_star(beta: float) -> float:
    """Abscissa where (f^231_beta)' = 1; 1/2 when beta <= 0."""
    if beta <= 0:
        return 0.5
    _check_beta_range(beta)
    return float((np.logaddexp(0.0, beta) - np.log(2.0)) / beta)


def _f231(beta: float, x: np.ndarray) -> np.ndarray:
    inner = np.exp(-beta) - np.expm1(beta * (x - 1.0))
    return np.clip(-np.log(inner) / beta, 0.0, 1.0)


def _f231_prime(beta: float, x: np.ndarray) -> np.ndarray:
    inner = np.exp(-beta) - np.expm1(beta * (x - 1.0))
    return np.exp(beta * (x - 1.0)) / inner


def _log_f321_denominator(beta: float, x: np.ndarray) -> np.ndarray:
    # log(1 + e^{beta/2} + e^beta - e^{beta x})
    return beta + np.log(np.exp(-beta) + np.exp(-beta / 2.0) - np.expm1(beta * (x - 1.0)))


def _f321(beta: float, x: np.ndarray) -> np.ndarray:
    log_num = np.logaddexp(beta * x, beta / 2.0)
    return np.clip(0.5 + (log_num - _log_f321_denominator(beta, x)) / beta, 0.0, 1.0)


def _f321_prime(beta: float, x: np.ndarray) -> np.ndarray:
    # v/(v + c) + v/(D - v) with v = e^{beta x}, c = e^{beta/2}, D = 1 + c + c^2
    tail = np.exp(-beta * x) + np.exp(beta * (0.5 - x)) + np.expm1(beta * (1.0 - x))
    return expit(beta * (x - 0.5)) + 1.0 / tail


def _f321_inverse(beta: float, y: np.ndarray) -> np.ndarray:
    z = beta * (y - 0.5)
    log_a = z + np.logaddexp(np.logaddexp(0.0, beta / 2.0), beta)
    with np.errstate(divide="ignore"):
        log_diff = log_a + np.log(-np.expm1(np.minimum(beta / 2.0 - log_a, 0.0)))
    return np.clip((log_diff - np.logaddexp(0.0, z)) / beta, 0.0, 1.0)


def limit_rlm_curve(pattern: PatternLike, beta: float, x: ArrayLike) -> np.ndarray:
    """
    Closed-form limit curve f_beta for 231 or 321; the diagonal when beta <= 0.

    Args:
        pattern: 231 or 321
        beta: Tilt parameter
        x: Abscissa(s) in [0, 1]

    Returns:
        f_beta(x)
    """
    tag = _require_canonical(pattern)
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    if beta <= 0:
        return x.copy()
    _check_beta_range(beta)
    if tag == "231":
        return _f231(beta, x)
    return _f321(beta, x)


def limit_rlm_curve_derivative(pattern: PatternLike, beta: float, x: ArrayLike) -> np.ndarray:
    """f_beta'(x) in closed form."""
    tag = _require_canonical(pattern)
    x = np.asarray(x, dtype=float)
    if beta <= 0:
        return np.ones_like(x)
    _check_beta_range(beta)
    if tag == "231":
        return _f231_prime(beta, x)
    return _f321_prime(beta, x)


def limit_inverse_rlm_curve(pattern: PatternLike, beta: float, y: ArrayLike) -> np.ndarray:
    """Inverse of limit_rlm_curve on [0, 1]."""
    tag = _require_canonical(pattern)
    y = np.clip(np.asarray(y, dtype=float), 0.0, 1.0)
    if beta <= 0:
        return y.copy()
    _check_beta_range(beta)
    if tag == "231":
        # graph symmetry f(1 - f(x)) = 1 - x
        return np.clip(1.0 - _f231(beta, 1.0 - y), 0.0, 1.0)
    return _f321_inverse(beta, y)


def limit_excursion_231(beta: float, t: ArrayLike) -> np.ndarray:
    """phi_beta(t) = (1/beta) log((1+e^beta)/(1+e^{beta(1-2t)})) - t, 0 if beta <= 0."""
    t = np.asarray(t, dtype=float)
    if beta <= 0:
        return np.zeros_like(t)
    _check_beta_range(beta)
    value = (np.logaddexp(0.0, beta) - np.logaddexp(0.0, beta * (1.0 - 2.0 * t))) / beta - t
    return np.clip(value, 0.0, None)


def limit_excursion_derivative_231(beta: float, t: ArrayLike) -> np.ndarray:
    """phi_beta'(t) = tanh(beta (1 - 2t) / 2)."""
    t = np.asarray(t, dtype=float)
    if beta <= 0:
        return np.zeros_like(t)
    return np.tanh(beta * (1.0 - 2.0 * t) / 2.0)


def limit_density_pair_321(beta: float, x: ArrayLike) -> Tuple[np.ndarray, np.ndarray]:
    """Logistic densities rho1(x) = 1/(1+e^{beta(1/2-x)}), rho2 = 1 - rho1."""
    x = np.asarray(x, dtype=float)
    if beta <= 0:
        half = np.full_like(x, 0.5)
        return half, half.copy()
    return expit(beta * (x - 0.5)), expit(beta * (0.5 - x))


def limit_cumulative_pair_321(beta: float, x: ArrayLike) -> Tuple[np.ndarray, np.ndarray]:
    """Exact CDFs of the logistic pair: integrals of rho1 and rho2 over [0, x]."""
    x = np.asarray(x, dtype=float)
    if beta <= 0:
        return 0.5 * x, 0.5 * x
    first = (np.logaddexp(0.0, beta * (x - 0.5)) - np.logaddexp(0.0, -beta / 2.0)) / beta
    return first, x - first


def limit_permuton(
    pattern: PatternLike,
    beta: float,
    simpson_tol: float = 1e-8,
    table_size: int = 4096,
) -> CurvePermuton:
    """
    Analytic limit permuton of the tilted model for 231 or 321.

    231: the graph of f_beta with weight min(1, f'), plus the antidiagonal
    over [0, x*] with weight 1 - f'. 321: the graph of f_beta and its
    transpose, both weighted by rho1. Diagonal when beta <= 0.
    """
    tag = _require_canonical(pattern)
    if beta <= 0:
        diagonal = CurveComponent("graph", weight=lambda t: np.ones_like(np.asarray(t, dtype=float)))
        return CurvePermuton((diagonal,), beta, tag, simpson_tol, table_size)

    _check_beta_range(beta)
    curve = lambda t: limit_rlm_curve(tag, beta, t)  # noqa: E731
    inverse = lambda y: limit_inverse_rlm_curve(tag, beta, y)  # noqa: E731

    if tag == "231":
        star = x_star(beta)
        components = (
            CurveComponent(
                "graph",
                weight=lambda t: np.minimum(1.0, _f231_prime(beta, np.asarray(t, dtype=float))),
                curve=curve,
                inverse=inverse,
                breakpoints=(star,),
            ),
            CurveComponent(
                "antidiagonal",
                weight=lambda t: np.maximum(0.0, 1.0 - _f231_prime(beta, np.asarray(t, dtype=float))),
                support=(0.0, star),
            ),
        )
    else:
        rho = lambda t: expit(beta * (np.asarray(t, dtype=float) - 0.5))  # noqa: E731
        components = (
            CurveComponent("graph", weight=rho, curve=curve, inverse=inverse),
            CurveComponent("transpose", weight=rho, curve=curve, inverse=inverse),
        )
    return CurvePermuton(components, beta, tag, simpson_tol, table_size)


def cdf(P: Union[PermutonGrid, CurvePermuton], x: float, y: float) -> float:
    """mu([0, x] x [0, y]) for a grid or analytic permuton."""
    if isinstance(P, PermutonGrid):
        return float(P.cdf_at(x, y))
    return P.cdf(x, y)


def sample_point(P: Union[PermutonGrid, CurvePermuton], rng: np.random.Generator) -> Tuple[float, float]:
    point = P.sample_points(rng, 1)[0]
    return float(point[0]), float(point[1])


def permuton_of_perm(p: Permutation, variant: str = "plain", G: Optional[int] = None) -> PermutonGrid:
    """
    Grid CDF of the permuton of p.

    Args:
        p: Permutation
        variant: "plain" (uniform mass 1/n on each cell), "diag" or
            "antidiag" (mass on the diagonal or antidiagonal of each cell)
        G: Grid resolution, default n

    Returns:
        PermutonGrid
    """
    n = p.n
    G = n if G is None else G
    grid = np.linspace(0.0, 1.0, G + 1)
    columns = np.arange(n)
    values = p.as_array() - 1
    ax = np.clip(n * grid[:, None] - columns[None, :], 0.0, 1.0)
    by = np.clip(n * grid[:, None] - values[None, :], 0.0, 1.0)

    if variant == "plain":
        total = ax @ by.T
    elif variant in ("diag", "antidiag"):
        total = np.zeros((G + 1, G + 1))
        for c in range(n):
            if variant == "diag":
                total += np.minimum.outer(ax[:, c], by[:, c])
            else:
                total += np.maximum(0.0, np.add.outer(ax[:, c], by[:, c]) - 1.0)
    else:
        raise ValueError(f"Unknown permuton variant {variant!r}")
    return PermutonGrid(total / n)


def kolmogorov_distance(a: object, b: object) -> float:
    """
    Sup-distance between CDFs on a shared grid.

    StepMeasure: sup |F_a - F_b|. MeasurePairD: max over the two coordinates.
    Excursion: sup |phi_a - phi_b|. PermutonGrid: sup over the lattice.

    Raises:
        ValueError: If the objects have different types or grids
    """
    if type(a) is not type(b):
        raise ValueError(f"Cannot compare {type(a).__name__} with {type(b).__name__}")
    if isinstance(a, StepMeasure) and isinstance(b, StepMeasure):
        if a.m != b.m:
            raise ValueError(f"Grid mismatch: {a.m} vs {b.m}")
        return float(np.abs(a.cdf() - b.cdf()).max())
    if isinstance(a, MeasurePairD) and isinstance(b, MeasurePairD):
        return max(kolmogorov_distance(a.first, b.first), kolmogorov_distance(a.second, b.second))
    if isinstance(a, Excursion) and isinstance(b, Excursion):
        if a.m != b.m:
            raise ValueError(f"Grid mismatch: {a.m} vs {b.m}")
        return float(np.abs(a.values - b.values).max())
    if isinstance(a, PermutonGrid) and isinstance(b, PermutonGrid):
        if a.G != b.G:
            raise ValueError(f"Grid mismatch: {a.G} vs {b.G}")
        return float(np.abs(a.cdf - b.cdf).max())
    raise ValueError(f"Unsupported type {type(a).__name__}")


def pattern_density_mc(
    alpha: object,
    permuton: Union[PermutonGrid, CurvePermuton],
    samples: int,
    rng: np.random.Generator,
) -> Tuple[float, float]:
    """
    Monte Carlo estimate of dens(alpha, mu): the probability that k iid
    points of mu, sorted by abscissa, have ordinates in the order of alpha.

    Args:
        alpha: Pattern (Pattern3, tag, or sequence such as (2, 1))
        permuton: Grid or analytic permuton
        samples: Number of k-point draws
        rng: Random generator

    Returns:
        (estimate, standard error)
    """
    if samples < 1:
        raise ValueError("samples must be at least 1")
    pattern = np.asarray(_pattern_values(alpha)) - 1  # type: ignore[arg-type]
    k = pattern.size
    points = permuton.sample_points(rng, samples * k).reshape(samples, k, 2)
    order = np.argsort(points[:, :, 0], axis=1)
    ys = np.take_along_axis(points[:, :, 1], order, axis=1)
    ranks = np.argsort(np.argsort(ys, axis=1), axis=1)
    hits = np.all(ranks == pattern[None, :], axis=1)
    estimate = float(hits.mean())
    stderr = float(np.sqrt(estimate * (1.0 - estimate) / samples))
    return estimate, stderr
