"""Fenchel-Legendre transform engine and penalty integrands.

The conjugate of a driver is the extended-real penalty integrand
f(t, q) = sup_z { q.z - g(t, z) } with values in [0, +inf].  Infinity is the
genuine float infinity, never a large sentinel: it dominates sums and loses
every minimum, which is exactly the arithmetic the truncation and gating
operations rely on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .drivers import Driver, _magnitude, probe_zero

Array = np.ndarray

GRID_POINTS_1D = 4097
REFINE_POINTS_1D = 129
GRID_POINTS_PER_AXIS = {1: GRID_POINTS_1D, 2: 129, 3: 33}
REFINE_POINTS_PER_AXIS = {1: REFINE_POINTS_1D, 2: 17, 3: 9}


@dataclass
class PenaltyIntegrand:
    """Extended-real integrand f(t, q) >= 0 with f(t, 0) = 0 and a domain radius.

    `domain_radius` is the radius outside which the value is exactly +inf;
    `domain_certified` records whether that radius was derived from a declared
    Lipschitz constant (or analytic knowledge) rather than guessed.
    """

    name: str
    evaluate: Callable[[float, Array], Array]
    domain_radius: float
    zero_at_origin: bool
    dim: int = 1
    step_minimizer: Callable[[float, Array], Array] | None = None
    domain_certified: bool = True
    notes: tuple[str, ...] = ()

    def __call__(self, t: float, q):
        return self.evaluate(t, q)


def _tensor_grid(radius: float, dim: int, per_axis: int) -> Array:
    axis = np.linspace(-radius, radius, per_axis)
    if dim == 1:
        return axis
    grids = np.meshgrid(*([axis] * dim), indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=-1)


def _local_grid(center: Array, half_width: float, radius: float, dim: int, per_axis: int) -> Array:
    if dim == 1:
        lo = max(float(center) - half_width, -radius)
        hi = min(float(center) + half_width, radius)
        return np.linspace(lo, hi, per_axis)
    axes = [np.linspace(max(c - half_width, -radius), min(c + half_width, radius), per_axis)
            for c in np.atleast_1d(center)]
    grids = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=-1)


def grid_sup_of_linear_minus(fun: Callable[[float, Array], Array], t: float, slopes,
                             radius: float, dim: int = 1,
                             points: int | None = None, passes: int = 2) -> Array:
    """sup_x { slope . x - fun(t, x) } over [-radius, radius]^dim, one value per slope.

    Grid search with `passes` refinement sweeps around each coarse arg max.
    Infinite fun values are allowed and simply never attain the sup; an
    all-infinite fun raises (empty effective domain).
    """
    if dim not in GRID_POINTS_PER_AXIS:
        raise ValueError(f"tensor grids support dimensions {sorted(GRID_POINTS_PER_AXIS)}, "
                         f"got {dim}")
    slopes_arr = np.asarray(slopes, dtype=float)
    single = slopes_arr.ndim == 0 if dim == 1 else slopes_arr.ndim == 1
    rows = np.atleast_1d(slopes_arr) if dim == 1 else np.atleast_2d(slopes_arr)

    per_axis = points if points is not None else GRID_POINTS_PER_AXIS[dim]
    pts = _tensor_grid(radius, dim, per_axis)
    fvals = np.asarray(fun(t, pts), dtype=float)
    if not np.any(np.isfinite(fvals)):
        raise ValueError("empty effective domain: the function is +inf on the whole grid")

    finite = np.isfinite(fvals)
    arg = np.empty(rows.shape[0], dtype=int)
    best = np.empty(rows.shape[0])
    for lo in range(0, rows.shape[0], 512):
        hi = min(lo + 512, rows.shape[0])
        block = rows[lo:hi]
        cross = block[:, None] * pts[None, :] if dim == 1 else block @ pts.T
        scores = cross - fvals[None, :]
        scores[:, ~finite] = -np.inf
        arg[lo:hi] = np.argmax(scores, axis=1)
        best[lo:hi] = scores[np.arange(hi - lo), arg[lo:hi]]

    spacing = 2.0 * radius / (per_axis - 1) if per_axis > 1 else radius
    refine_axis = REFINE_POINTS_PER_AXIS[dim]
    for i in range(rows.shape[0]):
        center = pts[arg[i]]
        width = spacing
        for _ in range(passes):
            local = _local_grid(center, width, radius, dim, refine_axis)
            lvals = np.asarray(fun(t, local), dtype=float)
            lscores = (rows[i] * local if dim == 1 else local @ rows[i]) - lvals
            lscores[~np.isfinite(lvals)] = -np.inf
            j = int(np.argmax(lscores))
            if lscores[j] > best[i]:
                best[i] = lscores[j]
                center = local[j]
            width = 2.0 * width / (refine_axis - 1)
    return best[0] if single else best


def fenchel(driver: Driver, *, points: int | None = None, passes: int = 2) -> PenaltyIntegrand:
    """Convex conjugate of a driver as a penalty integrand.

    A driver Lipschitz with constant mu has conjugate exactly +inf outside the
    ball of radius mu, so the effective-domain radius is pinned to mu without
    any numerics.  Inside the ball the analytic conjugate is used when the
    driver carries one, otherwise a two-pass refined grid supremum.
    """
    if not probe_zero(driver):
        raise ValueError(f"driver {driver.name} fails g(t, 0) = 0; conjugate undefined "
                         "under the standing normalisation")
    dim = driver.dim
    mu = driver.lipschitz
    notes: tuple[str, ...] = ()

    if mu is None and driver.conjugate is None:
        notes = ("domain detection refused: no declared Lipschitz constant and no "
                 "analytic conjugate; finite values computed on the grid only",)
        gate_radius = math.inf
        certified = False
    else:
        gate_radius = mu if mu is not None else math.inf
        certified = mu is not None

    if driver.conjugate is not None:
        inner = driver.conjugate
    else:
        if driver.validity_radius != math.inf:
            z_max = driver.validity_radius
        else:
            z_max = 8.0 * max(1.0, mu if mu is not None else 1.0)

        def inner(t, q, _zmax=z_max):
            return grid_sup_of_linear_minus(driver.evaluate, t, q, _zmax, dim,
                                            points=points, passes=passes)

    def evaluate(t, q):
        vals = np.asarray(inner(t, q), dtype=float)
        if math.isinf(gate_radius):
            return vals if vals.shape else float(vals)
        gated = np.where(_magnitude(q, dim) <= gate_radius, vals, np.inf)
        return gated if gated.shape else float(gated)

    origin = 0.0 if dim == 1 else np.zeros(dim)
    at_zero = float(np.asarray(evaluate(0.0, origin)))
    return PenaltyIntegrand(
        name=f"conjugate[{driver.name}]",
        evaluate=evaluate,
        domain_radius=gate_radius,
        zero_at_origin=abs(at_zero) <= 1e-9,
        dim=dim,
        step_minimizer=driver.step_minimizer,
        domain_certified=certified,
        notes=notes,
    )


def inverse_fenchel(integrand: PenaltyIntegrand, *, search_radius: float | None = None,
                    points: int | None = None, passes: int = 2) -> Driver:
    """Conjugate of a penalty integrand, recovered as a driver.

    The supremum runs over a grid of the effective domain, so the integrand
    needs a finite domain radius or an explicit search box.
    """
    radius = integrand.domain_radius
    if not math.isfinite(radius):
        if search_radius is None:
            raise ValueError("integrand has unbounded domain; pass search_radius")
        radius = search_radius
    if radius == 0.0:
        # Only q = 0 feasible and f(0) = 0: the conjugate collapses to zero.
        origin = 0.0 if integrand.dim == 1 else np.zeros(integrand.dim)
        if not np.isfinite(float(np.asarray(integrand(0.0, origin)))):
            raise ValueError("empty effective domain: integrand infinite at the origin")
        return Driver(name=f"conjugate[{integrand.name}]",
                      evaluate=lambda t, z: _magnitude(z, integrand.dim) * 0.0,
                      lipschitz=0.0, convex=True, dim=integrand.dim)

    def evaluate(t, z, _radius=radius):
        return grid_sup_of_linear_minus(integrand.evaluate, t, z, _radius,
                                        integrand.dim, points=points, passes=passes)

    # Force the empty-domain error at build time rather than first use.
    probe = 0.0 if integrand.dim == 1 else np.zeros(integrand.dim)
    evaluate(0.0, probe)

    return Driver(
        name=f"conjugate[{integrand.name}]",
        evaluate=evaluate,
        lipschitz=integrand.domain_radius if math.isfinite(integrand.domain_radius) else radius,
        convex=True,
        dim=integrand.dim,
    )


def truncate_integrand(integrand: PenaltyIntegrand, level: float) -> PenaltyIntegrand:
    """Gate the integrand at |q| <= level, +inf outside.

    Gates form a lattice: truncating twice equals truncating at the smaller
    level.  Since f(t, 0) = 0, level 0 yields the indicator of the origin.
    """
    if level < 0:
        raise ValueError("truncation level must be nonnegative")
    dim = integrand.dim
    base_eval = integrand.evaluate

    def evaluate(t, q):
        vals = np.asarray(base_eval(t, q), dtype=float)
        gated = np.where(_magnitude(q, dim) <= level, vals, np.inf)
        return gated if gated.shape else float(gated)

    minimizer = None
    if integrand.step_minimizer is not None:
        base_min = integrand.step_minimizer

        def minimizer(t, zed, _n=level):
            q = np.asarray(base_min(t, zed), dtype=float)
            if dim == 1:
                return np.clip(q, -_n, _n)
            norm = _magnitude(q, dim)
            scale = np.where(norm > _n, np.where(norm > 0, _n / norm, 1.0), 1.0)
            return q * scale[..., None]

    return replace(
        integrand,
        name=f"{integrand.name}|level<={level:g}",
        evaluate=evaluate,
        domain_radius=min(level, integrand.domain_radius),
        step_minimizer=minimizer,
    )


@dataclass
class MonotoneFamilyReport:
    """Outcome of the gated-family structure checks on explicit grids."""

    levels: tuple[float, ...]
    integrand_decreasing: bool
    conjugates_increasing: bool
    infimum_recovers: bool
    worst_conjugate_violation: float
    counterexamples: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.integrand_decreasing and self.conjugates_increasing and self.infimum_recovers


def monotone_family_check(integrand: PenaltyIntegrand, levels: Sequence[float], *,
                          q_grid: Array | None = None, z_grid: Array | None = None,
                          t: float = 0.0, conjugate_tol: float = 1e-9) -> MonotoneFamilyReport:
    """Verify the gated family: f_n decreasing in n, conjugates increasing, inf_n f_n = f.

    The infimum check demands exact equality at every grid point some level
    covers; the conjugate monotonicity allows grid tolerance because each
    level is conjugated on its own grid.
    """
    levels = tuple(levels)
    if any(b <= a for a, b in zip(levels, levels[1:])):
        raise ValueError("levels must be strictly increasing")
    if integrand.dim != 1:
        raise ValueError("family check runs on 1-d integrands")
    span = max(levels) * 1.5 + 1.0
    if q_grid is None:
        q_grid = np.linspace(-span, span, 201)
    if z_grid is None:
        z_grid = np.linspace(-4.0, 4.0, 81)

    gated = [truncate_integrand(integrand, n) for n in levels]
    fvals = np.stack([np.asarray(g(t, q_grid), dtype=float) for g in gated])

    counterexamples = []
    decreasing = True
    for i in range(len(levels) - 1):
        bad = fvals[i] < fvals[i + 1]
        if np.any(bad):
            decreasing = False
            j = int(np.flatnonzero(bad)[0])
            counterexamples.append(("integrand_order", levels[i], float(q_grid[j]),
                                    float(fvals[i, j]), float(fvals[i + 1, j])))

    conj = [np.asarray(inverse_fenchel(g)(t, z_grid), dtype=float) for g in gated]
    worst = 0.0
    increasing = True
    for i in range(len(levels) - 1):
        gap = conj[i] - conj[i + 1]
        worst = max(worst, float(np.max(gap)))
        bad = gap > conjugate_tol
        if np.any(bad):
            increasing = False
            j = int(np.flatnonzero(bad)[0])
            counterexamples.append(("conjugate_order", levels[i], float(z_grid[j]),
                                    float(conj[i][j]), float(conj[i + 1][j])))

    base = np.asarray(integrand(t, q_grid), dtype=float)
    inf_family = np.min(fvals, axis=0)
    covered = np.abs(q_grid) <= max(levels)
    recovered = bool(np.all(inf_family[covered] == base[covered]))
    if not recovered:
        j = int(np.flatnonzero(covered & (inf_family != base))[0])
        counterexamples.append(("infimum", float(q_grid[j]), float(inf_family[j]), float(base[j])))

    return MonotoneFamilyReport(levels, decreasing, increasing, recovered, worst, counterexamples)


def biconjugate_gap(driver: Driver, z_grid, *, t: float = 0.0,
                    points: int | None = None, passes: int = 2) -> float:
    """Max absolute gap |g - (g*)*| on a z grid; near zero for convex drivers."""
    if not driver.convex:
        raise ValueError("biconjugate identity needs a convex driver")
    integrand = fenchel(driver, points=points, passes=passes)
    back = inverse_fenchel(integrand, points=points, passes=passes)
    z_grid = np.asarray(z_grid, dtype=float)
    direct = np.asarray(driver(t, z_grid), dtype=float)
    recovered = np.asarray(back(t, z_grid), dtype=float)
    return float(np.max(np.abs(direct - recovered)))
