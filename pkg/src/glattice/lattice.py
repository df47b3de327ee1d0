"""Binomial models of the Brownian filtration.

A lattice couples a uniform time grid with a tree of nodes per step: either
the recombining random walk (step k carries k+1 nodes) or the full binary
tree of paths (step k carries 2**k nodes).  Adapted fields attach one value
per node and step, predictable controls one value per node for each
transition, and stopping times are absorbing families of per-step node sets.

Everything here is read-only after construction and safe to share across
threads.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

FULL_BINARY_MAX_STEPS = 20


class TreeTopology(enum.Enum):
    RECOMBINING = "recombining"
    FULL_BINARY = "full_binary"


@dataclass(frozen=True)
class TimeGrid:
    """Uniform partition of [0, horizon] into `steps` intervals."""

    horizon: float
    steps: int

    def __post_init__(self):
        if not (math.isfinite(self.horizon) and self.horizon > 0):
            raise ValueError(f"horizon must be positive and finite, got {self.horizon}")
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")

    @property
    def dt(self) -> float:
        return self.horizon / self.steps

    @property
    def sqrt_dt(self) -> float:
        return math.sqrt(self.dt)

    def time(self, step: int) -> float:
        return step * self.dt


@dataclass(frozen=True)
class NodeId:
    """Address of one node: (step, index within the step)."""

    step: int
    index: int

    def __str__(self):
        return f"node(step={self.step}, index={self.index})"


class Lattice:
    """Time grid plus node enumeration for one of the two topologies."""

    def __init__(self, grid: TimeGrid, topology: TreeTopology):
        if topology is TreeTopology.FULL_BINARY and grid.steps > FULL_BINARY_MAX_STEPS:
            raise ValueError(
                f"full binary tree limited to {FULL_BINARY_MAX_STEPS} steps "
                f"(2**{grid.steps} nodes would not fit), got {grid.steps}"
            )
        self.grid = grid
        self.topology = topology
        self._levels = self._build_levels()

    # -- sizes -----------------------------------------------------------

    @property
    def steps(self) -> int:
        return self.grid.steps

    @property
    def horizon(self) -> float:
        return self.grid.horizon

    @property
    def dt(self) -> float:
        return self.grid.dt

    @property
    def sqrt_dt(self) -> float:
        return self.grid.sqrt_dt

    def node_count(self, step: int) -> int:
        if not 0 <= step <= self.steps:
            raise ValueError(f"step {step} outside [0, {self.steps}]")
        if self.topology is TreeTopology.RECOMBINING:
            return step + 1
        return 2**step

    def validate_node(self, node: NodeId) -> None:
        if not 0 <= node.step <= self.steps:
            raise ValueError(f"{node}: step outside [0, {self.steps}]")
        if not 0 <= node.index < self.node_count(node.step):
            raise ValueError(
                f"{node}: index outside [0, {self.node_count(node.step)})"
            )

    # -- geometry --------------------------------------------------------

    def _build_levels(self) -> list[np.ndarray]:
        # (2 * upcount - k) * sqrt(dt): bitwise equal across merged paths
        sdt = self.sqrt_dt
        levels = []
        upcount = np.zeros(1, dtype=np.int64)
        for k in range(self.steps + 1):
            levels.append((2 * upcount - k) * sdt)
            if self.topology is TreeTopology.RECOMBINING:
                upcount = np.arange(k + 2, dtype=np.int64)
            else:
                nxt = np.empty(2 * upcount.size, dtype=np.int64)
                nxt[0::2] = upcount
                nxt[1::2] = upcount + 1
                upcount = nxt
        for arr in levels:
            arr.flags.writeable = False
        return levels

    def level_values(self, step: int) -> np.ndarray:
        """Random-walk approximation of the Brownian level, one value per node."""
        if not 0 <= step <= self.steps:
            raise ValueError(f"step {step} outside [0, {self.steps}]")
        return self._levels[step]

    def child_values(self, values_at_next_step: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Split a step-(k+1) vector into (down, up) children aligned with step-k nodes."""
        v = values_at_next_step
        if self.topology is TreeTopology.RECOMBINING:
            return v[:-1], v[1:]
        return v[0::2], v[1::2]

    def lift_to_children(self, values: np.ndarray) -> np.ndarray:
        """Copy a step-k vector onto every child node (full binary trees only)."""
        if self.topology is not TreeTopology.FULL_BINARY:
            raise ValueError("lifting parent values to children needs unique parents "
                             "(full binary topology)")
        return np.repeat(values, 2)

    def terminal_ancestors(self, step: int) -> np.ndarray:
        """For each terminal node, the index of its step-k ancestor (full binary only)."""
        if self.topology is not TreeTopology.FULL_BINARY:
            raise ValueError("path ancestry needs the full binary topology")
        return np.arange(2**self.steps) >> (self.steps - step)


def build_grid(horizon: float, steps: int, topology: TreeTopology = TreeTopology.RECOMBINING) -> Lattice:
    """Build the lattice for a uniform grid; errors on empty grids and oversized trees."""
    return Lattice(TimeGrid(horizon, steps), topology)


def brownian_level(lattice: Lattice, node: NodeId) -> float:
    """Value of the random walk at one node; zero at the root by construction."""
    lattice.validate_node(node)
    return float(lattice.level_values(node.step)[node.index])


class AdaptedField:
    """One value per node for a contiguous range of steps.

    A field over steps `start .. start + len(values) - 1`; measurability at
    each step holds by construction because entries are indexed by nodes.
    """

    __slots__ = ("lattice", "start", "values")

    def __init__(self, lattice: Lattice, values: Sequence[np.ndarray], start: int = 0):
        values = [np.asarray(v, dtype=float) for v in values]
        if not values:
            raise ValueError("adapted field needs at least one step of values")
        if start < 0 or start + len(values) - 1 > lattice.steps:
            raise ValueError("field step range outside the grid")
        for offset, vec in enumerate(values):
            expected = lattice.node_count(start + offset)
            if vec.shape != (expected,):
                raise ValueError(
                    f"step {start + offset}: expected {expected} node values, got {vec.shape}"
                )
        self.lattice = lattice
        self.start = start
        self.values = values

    @property
    def stop(self) -> int:
        """Last step carried by the field (inclusive)."""
        return self.start + len(self.values) - 1

    def __getitem__(self, step: int) -> np.ndarray:
        if not self.start <= step <= self.stop:
            raise KeyError(f"field holds steps {self.start}..{self.stop}, not {step}")
        return self.values[step - self.start]

    def sup_norm(self) -> float:
        """Boundedness certificate: the largest absolute node value."""
        return max(float(np.max(np.abs(v))) for v in self.values)

    def single(self, step: int) -> "AdaptedField":
        """The one-step field holding this field's values at `step`."""
        return AdaptedField(self.lattice, [self[step].copy()], start=step)

    @classmethod
    def constant(cls, lattice: Lattice, value: float, step: int) -> "AdaptedField":
        return cls(lattice, [np.full(lattice.node_count(step), float(value))], start=step)


def terminal_field(lattice: Lattice, payoff: Callable[[np.ndarray], np.ndarray] | Sequence[float]) -> AdaptedField:
    """Terminal claim at the last step, from a payoff on the Brownian level or an explicit vector.

    The claim must be essentially bounded: any non-finite entry is rejected.
    """
    n = lattice.node_count(lattice.steps)
    if callable(payoff):
        vec = np.asarray(payoff(lattice.level_values(lattice.steps)), dtype=float)
        if vec.shape == ():
            vec = np.full(n, float(vec))
    else:
        vec = np.asarray(payoff, dtype=float)
    if vec.shape != (n,):
        raise ValueError(f"terminal claim needs {n} values, got shape {vec.shape}")
    if not np.all(np.isfinite(vec)):
        bad = int(np.flatnonzero(~np.isfinite(vec))[0])
        raise ValueError(f"terminal claim not essentially bounded: non-finite value at "
                         f"{NodeId(lattice.steps, bad)}")
    return AdaptedField(lattice, [vec], start=lattice.steps)


class PredictableControl:
    """One value per step-k node for k = 0..N-1, governing the k -> k+1 transition."""

    __slots__ = ("lattice", "values")

    def __init__(self, lattice: Lattice, values: Sequence[np.ndarray]):
        values = [np.asarray(v, dtype=float) for v in values]
        if len(values) != lattice.steps:
            raise ValueError(f"control needs {lattice.steps} steps, got {len(values)}")
        for k, vec in enumerate(values):
            if vec.shape != (lattice.node_count(k),):
                raise ValueError(f"step {k}: expected {lattice.node_count(k)} values")
        self.lattice = lattice
        self.values = values

    def __getitem__(self, step: int) -> np.ndarray:
        return self.values[step]

    def max_abs(self) -> float:
        return max(float(np.max(np.abs(v))) for v in self.values)

    def is_deterministic(self) -> bool:
        """True when every step carries a single value across nodes."""
        return all(v.size == 1 or float(np.ptp(v)) == 0.0 for v in self.values)

    def map(self, fn: Callable[[int, np.ndarray], np.ndarray]) -> "PredictableControl":
        return PredictableControl(self.lattice, [fn(k, v) for k, v in enumerate(self.values)])

    @classmethod
    def constant(cls, lattice: Lattice, value: float) -> "PredictableControl":
        return cls(lattice, [np.full(lattice.node_count(k), float(value))
                             for k in range(lattice.steps)])

    @classmethod
    def from_state_function(cls, lattice: Lattice, fn: Callable[[float, np.ndarray], np.ndarray]) -> "PredictableControl":
        """Markov feedback control q_k = fn(t_k, level_k), evaluated nodewise."""
        vals = []
        for k in range(lattice.steps):
            v = np.broadcast_to(np.asarray(fn(lattice.grid.time(k), lattice.level_values(k)),
                                           dtype=float), (lattice.node_count(k),))
            vals.append(np.array(v))
        return cls(lattice, vals)


class StoppingTime:
    """Stopping time with values in {0, .., N} as absorbing per-step node sets.

    `reached[k]` flags the step-k nodes where the time is <= k, so {tau <= k}
    is a union of step-k atoms by construction (the adaptedness test).  The
    flags must be absorbing (children of a reached node are reached) and the
    horizon is always reached.
    """

    __slots__ = ("lattice", "reached")

    def __init__(self, lattice: Lattice, reached: Sequence[np.ndarray]):
        reached = [np.asarray(r, dtype=bool) for r in reached]
        if len(reached) != lattice.steps + 1:
            raise ValueError(f"need {lattice.steps + 1} step masks, got {len(reached)}")
        for k, mask in enumerate(reached):
            if mask.shape != (lattice.node_count(k),):
                raise ValueError(f"step {k}: mask shape {mask.shape} mismatches node count")
        if not np.all(reached[lattice.steps]):
            raise ValueError("stopping time must reach the horizon on every path")
        for k in range(lattice.steps):
            down, up = lattice.child_values(reached[k + 1])
            if np.any(reached[k] & ~down) or np.any(reached[k] & ~up):
                raise ValueError(f"non-absorbing stop flags between steps {k} and {k + 1}")
        self.lattice = lattice
        self.reached = reached

    @classmethod
    def deterministic(cls, lattice: Lattice, step: int) -> "StoppingTime":
        if not 0 <= step <= lattice.steps:
            raise ValueError(f"step {step} outside [0, {lattice.steps}]")
        return cls(lattice, [np.full(lattice.node_count(k), k >= step) for k in range(lattice.steps + 1)])

    def is_before(self, other: "StoppingTime") -> bool:
        """Pointwise self <= other: wherever other has stopped, self has too."""
        return all(np.all(mine | ~theirs)
                   for mine, theirs in zip(self.reached, other.reached))

    def minimum(self, other: "StoppingTime") -> "StoppingTime":
        return StoppingTime(self.lattice, [a | b for a, b in zip(self.reached, other.reached)])

    def maximum(self, other: "StoppingTime") -> "StoppingTime":
        return StoppingTime(self.lattice, [a & b for a, b in zip(self.reached, other.reached)])

    def step_on_paths(self) -> np.ndarray:
        """First reached step along each terminal path (full binary only)."""
        lat = self.lattice
        if lat.topology is not TreeTopology.FULL_BINARY:
            raise ValueError("pathwise stop steps need the full binary topology")
        n_paths = 2**lat.steps
        out = np.full(n_paths, lat.steps, dtype=int)
        done = np.zeros(n_paths, dtype=bool)
        for k in range(lat.steps + 1):
            hit = self.reached[k][lat.terminal_ancestors(k) if k < lat.steps else np.arange(n_paths)]
            fresh = hit & ~done
            out[fresh] = k
            done |= hit
        return out


def hitting_time(lattice: Lattice, event: Sequence[np.ndarray]) -> StoppingTime:
    """First step whose ancestry enters the adapted event; the horizon if never.

    The event is a per-step node indicator, hence adapted by construction.
    On the full binary tree the result is the exact pathwise hitting time; on
    the recombining tree merged paths share flags, so the result is the entry
    time into the absorbing closure of the event (the smallest family of
    per-node stop sets containing it).
    """
    event = [np.asarray(e, dtype=bool) for e in event]
    if len(event) != lattice.steps + 1:
        raise ValueError(f"event needs {lattice.steps + 1} step masks, got {len(event)}")
    reached: list[np.ndarray] = []
    for k, mask in enumerate(event):
        if mask.shape != (lattice.node_count(k),):
            raise ValueError(f"step {k}: event mask shape mismatches node count")
        if k == 0:
            cur = mask.copy()
        else:
            prev = reached[k - 1]
            if lattice.topology is TreeTopology.RECOMBINING:
                carried = np.zeros(k + 1, dtype=bool)
                carried[:-1] |= prev
                carried[1:] |= prev
            else:
                carried = np.repeat(prev, 2)
            cur = mask | carried
        reached.append(cur)
    reached[lattice.steps] = np.ones(lattice.node_count(lattice.steps), dtype=bool)
    return StoppingTime(lattice, reached)
