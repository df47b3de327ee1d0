"""Equivalent measures on the lattice built from predictable drift controls.

A control q turns the fair coin into per-node up probabilities; the
multiplicative density (1 + q dB) makes the conditional drift of the
increments exactly q*dt and keeps the density a P-martingale node by node.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .lattice import (
    AdaptedField,
    Lattice,
    NodeId,
    PredictableControl,
    StoppingTime,
    TreeTopology,
)


class AdmissibilityError(ValueError):
    """A control violates |q| * sqrt(dt) < 1, so the implied measure is not equivalent."""

    def __init__(self, node: NodeId, value: float, bound: float):
        self.node = node
        self.value = value
        self.bound = bound
        super().__init__(
            f"inadmissible control at {node}: |{value}| >= 1/sqrt(dt) = {bound}; "
            "the implied up-probability leaves (0, 1)"
        )


class MeasureChange:
    """A measure equivalent to the fair coin, stored as per-node up probabilities."""

    __slots__ = ("lattice", "control", "up_prob", "exact_drift")

    def __init__(self, control: PredictableControl, up_prob: Sequence[np.ndarray],
                 exact_drift: bool = True):
        self.lattice = control.lattice
        self.control = control
        self.up_prob = [np.asarray(p, dtype=float) for p in up_prob]
        self.exact_drift = exact_drift
        for k, p in enumerate(self.up_prob):
            if p.shape != (self.lattice.node_count(k),):
                raise ValueError(f"step {k}: up_prob shape mismatches node count")
            if np.any(p <= 0.0) or np.any(p >= 1.0):
                bad = int(np.flatnonzero((p <= 0.0) | (p >= 1.0))[0])
                raise AdmissibilityError(NodeId(k, bad), float(control[k][bad]),
                                         1.0 / self.lattice.sqrt_dt)

    def one_step_expectation(self, values_next: np.ndarray, step: int) -> np.ndarray:
        """Conditional expectation of a step-(k+1) vector given the step-k node."""
        down, up = self.lattice.child_values(np.asarray(values_next, dtype=float))
        p = self.up_prob[step]
        return p * up + (1.0 - p) * down

    def density(self) -> AdaptedField:
        """The density martingale M with M_0 = 1, one value per node.

        The density is a path functional, so it is a node field only on the
        full binary tree; on the recombining tree merged nodes carry distinct
        path products and no adapted-field representation exists.
        """
        lat = self.lattice
        if lat.topology is not TreeTopology.FULL_BINARY:
            raise ValueError("density is path-dependent; build the measure on a "
                             "full binary tree to materialise it")
        vals = [np.ones(1)]
        for k in range(lat.steps):
            p = self.up_prob[k]
            cur = vals[k]
            nxt = np.empty(2 * cur.size)
            nxt[0::2] = cur * (2.0 * (1.0 - p))
            nxt[1::2] = cur * (2.0 * p)
            vals.append(nxt)
        return AdaptedField(lat, vals, start=0)

    def node_probabilities(self) -> list[np.ndarray]:
        """Forward measure: probability of sitting at each node, step by step."""
        lat = self.lattice
        probs = [np.ones(1)]
        for k in range(lat.steps):
            p = self.up_prob[k]
            cur = probs[k]
            if lat.topology is TreeTopology.RECOMBINING:
                nxt = np.zeros(k + 2)
                nxt[:-1] += cur * (1.0 - p)
                nxt[1:] += cur * p
            else:
                nxt = np.empty(2 * cur.size)
                nxt[0::2] = cur * (1.0 - p)
                nxt[1::2] = cur * p
            probs.append(nxt)
        return probs


def density_from_control(control: PredictableControl) -> MeasureChange:
    """Measure change with the multiplicative density M_{k+1} = M_k (1 + q dB).

    Exact on the lattice: E_Q[dB | F_k] = q*dt and M is a P-martingale with
    no discretisation bias.  Requires |q|*sqrt(dt) < 1 strictly; violations
    raise instead of clamping, since clamping would silently change the
    measure.
    """
    lat = control.lattice
    sdt = lat.sqrt_dt
    up_prob = []
    for k in range(lat.steps):
        q = control[k]
        bad = np.abs(q) * sdt >= 1.0
        if np.any(bad):
            idx = int(np.flatnonzero(bad)[0])
            raise AdmissibilityError(NodeId(k, idx), float(q[idx]), 1.0 / sdt)
        up_prob.append((1.0 + q * sdt) / 2.0)
    return MeasureChange(control, up_prob, exact_drift=True)


def exponential_density_from_control(control: PredictableControl) -> MeasureChange:
    """Measure change from the exponential (Doleans-Dade) density, normalised per node.

    Admissible for every finite control, but carries an O(dt) drift bias:
    E_Q[dB | F_k] = sqrt(dt) * tanh(q sqrt(dt)) instead of q*dt.  Intended for
    convergence experiments only; identities exact under the multiplicative
    form hold only in the dt -> 0 limit here.
    """
    lat = control.lattice
    sdt = lat.sqrt_dt
    up_prob = []
    for k in range(lat.steps):
        q = control[k]
        up_prob.append(1.0 / (1.0 + np.exp(-2.0 * q * sdt)))
    return MeasureChange(control, up_prob, exact_drift=False)


def expectation_under(measure: MeasureChange, field: AdaptedField, from_step: int) -> AdaptedField:
    """Iterated one-step conditional expectations of a single-step field.

    The tower property holds exactly (bitwise) because a two-stage evaluation
    performs the identical sequence of one-step averages.
    """
    if field.start != field.stop:
        raise ValueError("expectation_under expects a single-step field")
    t = field.start
    if from_step > t:
        raise ValueError(f"conditioning step {from_step} is after the field step {t}")
    cur = field[t].copy()
    for k in reversed(range(from_step, t)):
        cur = measure.one_step_expectation(cur, k)
    return AdaptedField(measure.lattice, [cur], start=from_step)


def between_masks(sigma: StoppingTime, tau: StoppingTime) -> list[np.ndarray]:
    """Per-step indicators of the stochastic interval ]]sigma, tau]].

    The transition over (t_k, t_{k+1}] lies in the interval iff sigma <= k < tau;
    both events are readable off the step-k node, so the masks are predictable.
    """
    if not sigma.is_before(tau):
        raise ValueError("stochastic interval needs sigma <= tau pointwise")
    return [sigma.reached[k] & ~tau.reached[k] for k in range(sigma.lattice.steps)]


def paste_controls(first: PredictableControl, second: PredictableControl,
                   sigma: StoppingTime, tau: StoppingTime) -> PredictableControl:
    """Control equal to `first` outside ]]sigma, tau]] and `second` inside."""
    masks = between_masks(sigma, tau)
    return PredictableControl(
        first.lattice,
        [np.where(masks[k], second[k], first[k]) for k in range(first.lattice.steps)],
    )


def truncate_control(control: PredictableControl, level: float) -> PredictableControl:
    """Gate the control at |q| <= level, zeroing it elsewhere."""
    if level < 0:
        raise ValueError("truncation level must be nonnegative")
    return control.map(lambda k, q: np.where(np.abs(q) <= level, q, 0.0))


def stop_control(control: PredictableControl, tau: StoppingTime) -> PredictableControl:
    """Keep the control on ]]0, tau]] and zero it afterwards."""
    return control.map(lambda k, q: np.where(tau.reached[k], 0.0, q))


def restrict_control(control: PredictableControl, masks: Sequence[np.ndarray]) -> PredictableControl:
    """Zero the control outside the predictable set given by per-step node masks."""
    masks = [np.asarray(m, dtype=bool) for m in masks]
    if len(masks) != control.lattice.steps:
        raise ValueError(f"need {control.lattice.steps} step masks")
    for k, m in enumerate(masks):
        if m.shape != (control.lattice.node_count(k),):
            raise ValueError(f"step {k}: mask shape mismatches node count")
    return control.map(lambda k, q: np.where(masks[k], q, 0.0))
