"""Library of backward-equation drivers with declared regularity metadata.

A driver is a function g(t, z), normalised so g(t, 0) = 0, together with its
declared Lipschitz constant, convexity flag and optional analytic extras
(conjugate, one-step dual minimizer, subgradient).  The quadratic driver is
only Lipschitz on a bounded z-range, so it declares a validity radius and
every consumer checks its z arguments stay inside it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

Array = np.ndarray


def _magnitude(z, dim: int):
    z = np.asarray(z, dtype=float)
    if dim == 1:
        return np.abs(z)
    return np.linalg.norm(z, axis=-1)


@dataclass
class Driver:
    """g(t, z) with metadata.

    `lipschitz` is the declared global constant (None when unknown);
    `validity_radius` bounds the z-range on which the declaration holds.
    `conjugate`, `step_minimizer` and `subgradient` are optional analytic
    companions: the convex conjugate f(t, q), the minimizer of
    q -> q.z + f(t, q), and an element of the z-subdifferential.
    """

    name: str
    evaluate: Callable[[float, Array], Array]
    lipschitz: float | None
    convex: bool
    validity_radius: float = math.inf
    dim: int = 1
    positively_homogeneous: bool = False
    conjugate: Callable[[float, Array], Array] | None = None
    step_minimizer: Callable[[float, Array], Array] | None = None
    subgradient: Callable[[float, Array], Array] | None = None

    def __call__(self, t: float, z):
        return self.evaluate(t, z)


# -- builtin instances ----------------------------------------------------


def zero(dim: int = 1) -> Driver:
    return Driver(
        name="zero",
        evaluate=lambda t, z: _magnitude(z, dim) * 0.0,
        lipschitz=0.0,
        convex=True,
        dim=dim,
        positively_homogeneous=True,
        conjugate=lambda t, q: np.where(_magnitude(q, dim) == 0.0, 0.0, np.inf),
        step_minimizer=lambda t, zed: np.zeros_like(np.asarray(zed, dtype=float)),
        subgradient=lambda t, z: np.asarray(z, dtype=float) * 0.0,
    )


def abs_scaled(mu: float, dim: int = 1) -> Driver:
    """g(z) = mu * |z|: the scaled-norm driver dominating everything mu-Lipschitz."""
    if mu < 0:
        raise ValueError("mu must be nonnegative")
    if mu == 0.0:
        return zero(dim)
    return Driver(
        name=f"abs:{mu:g}",
        evaluate=lambda t, z: mu * _magnitude(z, dim),
        lipschitz=mu,
        convex=True,
        dim=dim,
        positively_homogeneous=True,
        conjugate=lambda t, q: np.where(_magnitude(q, dim) <= mu, 0.0, np.inf),
        step_minimizer=lambda t, zed: -mu * np.sign(np.asarray(zed, dtype=float)),
        subgradient=lambda t, z: mu * np.sign(np.asarray(z, dtype=float)),
    )


def entropic(gamma: float, radius: float = 8.0, dim: int = 1) -> Driver:
    """g(z) = gamma |z|^2 / 2: quadratic, hence Lipschitz only on |z| <= radius.

    Declared with constant gamma*radius on that range; solvers error when an
    encountered z leaves the range rather than silently extrapolating the
    declaration.
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    if not (radius > 0 and math.isfinite(radius)):
        raise ValueError("entropic driver needs a finite positive validity radius")

    def minimizer(t, zed):
        q = -gamma * np.asarray(zed, dtype=float)
        return np.clip(q, -gamma * radius, gamma * radius)

    return Driver(
        name=f"entropic:{gamma:g}",
        evaluate=lambda t, z: gamma * _magnitude(z, dim) ** 2 / 2.0,
        lipschitz=gamma * radius,
        convex=True,
        validity_radius=radius,
        dim=dim,
        conjugate=lambda t, q: _magnitude(q, dim) ** 2 / (2.0 * gamma),
        step_minimizer=minimizer,
        subgradient=lambda t, z: gamma * np.asarray(z, dtype=float),
    )


def linear(slope) -> Driver:
    """g(z) = b . z, the drift-only driver (1-d unless a vector slope is given)."""
    b = np.asarray(slope, dtype=float)
    dim = 1 if b.shape == () else int(b.shape[0])
    mu = float(np.linalg.norm(b))

    if dim == 1:
        evaluate = lambda t, z: float(b) * np.asarray(z, dtype=float)
        conjugate = lambda t, q: np.where(np.asarray(q, dtype=float) == float(b), 0.0, np.inf)
    else:
        evaluate = lambda t, z: np.asarray(z, dtype=float) @ b
        conjugate = lambda t, q: np.where(
            _magnitude(np.asarray(q, dtype=float) - b, dim) == 0.0, 0.0, np.inf)

    minimizer = None
    if dim == 1:
        minimizer = lambda t, zed: np.broadcast_to(b, np.shape(zed)).copy()

    return Driver(
        name=f"linear:{slope!r}" if dim > 1 else f"linear:{float(b):g}",
        evaluate=evaluate,
        lipschitz=mu,
        convex=True,
        dim=dim,
        positively_homogeneous=True,
        conjugate=conjugate,
        step_minimizer=minimizer,
        subgradient=lambda t, z: np.broadcast_to(b, np.shape(z)).copy(),
    )


def interval(lo: float, hi: float) -> Driver:
    """g(z) = max(lo*z, hi*z): support function of [lo, hi], with lo <= 0 <= hi.

    The sign constraint keeps g(t, 0) = 0; dropping it would break the
    normalisation every probe asserts.
    """
    if not (lo <= 0.0 <= hi):
        raise ValueError(f"interval driver needs lo <= 0 <= hi, got [{lo}, {hi}]")

    def minimizer(t, zed):
        zed = np.asarray(zed, dtype=float)
        return np.where(zed > 0, lo, np.where(zed < 0, hi, 0.0))

    return Driver(
        name=f"interval:{lo:g},{hi:g}",
        evaluate=lambda t, z: np.maximum(lo * np.asarray(z, dtype=float),
                                         hi * np.asarray(z, dtype=float)),
        lipschitz=max(abs(lo), abs(hi)),
        convex=True,
        positively_homogeneous=True,
        conjugate=lambda t, q: np.where(
            (np.asarray(q, dtype=float) >= lo) & (np.asarray(q, dtype=float) <= hi),
            0.0, np.inf),
        step_minimizer=minimizer,
        subgradient=lambda t, z: np.where(np.asarray(z, dtype=float) > 0, hi,
                                          np.where(np.asarray(z, dtype=float) < 0, lo, 0.0)),
    )


_BUILTINS = {
    "zero": lambda params: zero(),
    "abs": lambda params: abs_scaled(*params),
    "entropic": lambda params: entropic(*params),
    "linear": lambda params: linear(*params),
    "interval": lambda params: interval(*params),
}


def builtin(name: str, params: Sequence[float] = ()) -> Driver:
    """Instantiate a builtin driver by name with positional parameters."""
    try:
        factory = _BUILTINS[name]
    except KeyError:
        raise ValueError(f"unknown driver {name!r}; known: {sorted(_BUILTINS)}") from None
    return factory(tuple(params))


def parse_spec(text: str) -> Driver:
    """Parse CLI driver strings: zero | abs:MU | entropic:GAMMA[,RADIUS] | linear:B | interval:A,B."""
    name, _, rest = text.partition(":")
    params = tuple(float(p) for p in rest.split(",")) if rest else ()
    return builtin(name.strip(), params)


# -- assumption probes ----------------------------------------------------


@dataclass
class ProbeReport:
    name: str
    passed: bool
    worst: float
    failures: list = field(default_factory=list)

    def __bool__(self):
        return self.passed


def probe_zero(driver: Driver, time_samples: Sequence[float] | None = None,
               tol: float = 1e-14) -> ProbeReport:
    """Check the normalisation g(t, 0) = 0 at sampled times."""
    times = list(time_samples) if time_samples is not None else [0.0, 0.25, 0.5, 1.0]
    origin = 0.0 if driver.dim == 1 else np.zeros(driver.dim)
    worst = 0.0
    failures = []
    for t in times:
        val = float(driver(t, origin))
        worst = max(worst, abs(val))
        if abs(val) > tol:
            failures.append((t, val))
    return ProbeReport("zero_at_origin", not failures, worst, failures)


def probe_lipschitz(driver: Driver, domain_radius: float, sample_count: int = 2000,
                    seed: int = 0) -> ProbeReport:
    """Largest sampled difference quotient, compared against the declared constant."""
    if domain_radius <= 0:
        raise ValueError("domain_radius must be positive")
    rng = np.random.default_rng(seed)
    shape = (sample_count,) if driver.dim == 1 else (sample_count, driver.dim)
    z0 = rng.uniform(-domain_radius, domain_radius, size=shape)
    z1 = rng.uniform(-domain_radius, domain_radius, size=shape)
    gaps = _magnitude(z0 - z1, driver.dim)
    keep = gaps > 1e-12
    quotients = np.abs(np.asarray(driver(0.0, z0[keep]), dtype=float)
                       - np.asarray(driver(0.0, z1[keep]), dtype=float)) / gaps[keep]
    estimate = float(np.max(quotients)) if quotients.size else 0.0
    declared = driver.lipschitz
    passed = declared is not None and estimate <= declared * (1.0 + 1e-9)
    return ProbeReport("lipschitz", passed, estimate,
                       [] if passed else [("estimate", estimate, "declared", declared)])


def probe_convex(driver: Driver, domain_radius: float, sample_count: int = 2000,
                 seed: int = 0, tol: float = 1e-12) -> ProbeReport:
    """Midpoint convexity on sampled pairs."""
    if domain_radius <= 0:
        raise ValueError("domain_radius must be positive")
    rng = np.random.default_rng(seed)
    shape = (sample_count,) if driver.dim == 1 else (sample_count, driver.dim)
    z0 = rng.uniform(-domain_radius, domain_radius, size=shape)
    z1 = rng.uniform(-domain_radius, domain_radius, size=shape)
    mid = np.asarray(driver(0.0, (z0 + z1) / 2.0), dtype=float)
    avg = (np.asarray(driver(0.0, z0), dtype=float) + np.asarray(driver(0.0, z1), dtype=float)) / 2.0
    excess = mid - avg
    worst = float(np.max(excess))
    bad = np.flatnonzero(excess > tol)
    failures = [(z0[i], z1[i], float(excess[i])) for i in bad[:5]]
    return ProbeReport("convex", worst <= tol, worst, failures)
