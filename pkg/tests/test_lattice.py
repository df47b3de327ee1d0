import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import glattice as gl


class TestBuildGrid:
    def test_recombining_node_counts(self):
        lat = gl.build_grid(1.0, 4, gl.TreeTopology.RECOMBINING)
        assert lat.node_count(4) == 5

    def test_full_binary_node_counts(self):
        lat = gl.build_grid(1.0, 3, gl.TreeTopology.FULL_BINARY)
        assert lat.node_count(3) == 8

    def test_empty_grid_rejected(self):
        with pytest.raises(ValueError):
            gl.build_grid(1.0, 0)

    def test_nonpositive_horizon_rejected(self):
        with pytest.raises(ValueError):
            gl.build_grid(-1.0, 4)
        with pytest.raises(ValueError):
            gl.build_grid(0.0, 4)

    def test_full_binary_step_bound(self):
        with pytest.raises(ValueError):
            gl.build_grid(1.0, gl.FULL_BINARY_MAX_STEPS + 1, gl.TreeTopology.FULL_BINARY)

    def test_dt_times_steps_is_horizon(self):
        grid = gl.TimeGrid(1.7, 13)
        assert grid.dt * grid.steps == pytest.approx(1.7, abs=1e-15)

    @given(steps=st.integers(1, 12), full=st.booleans())
    def test_node_counts_match_topology(self, steps, full):
        topo = gl.TreeTopology.FULL_BINARY if full else gl.TreeTopology.RECOMBINING
        lat = gl.build_grid(1.0, steps, topo)
        for k in range(steps + 1):
            assert lat.node_count(k) == (2**k if full else k + 1)
            assert lat.level_values(k).shape == (lat.node_count(k),)


class TestBrownianLevel:
    def test_root_is_zero(self):
        lat = gl.build_grid(1.0, 4)
        assert gl.brownian_level(lat, gl.NodeId(0, 0)) == 0.0

    def test_all_up_node(self):
        lat = gl.build_grid(1.0, 4)  # dt = 0.25
        assert gl.brownian_level(lat, gl.NodeId(4, 4)) == pytest.approx(2.0, abs=1e-14)

    def test_one_up_one_down(self):
        lat = gl.build_grid(1.0, 2)
        assert gl.brownian_level(lat, gl.NodeId(2, 1)) == pytest.approx(0.0, abs=1e-14)

    def test_invalid_node_rejected(self):
        lat = gl.build_grid(1.0, 4)
        with pytest.raises(ValueError):
            gl.brownian_level(lat, gl.NodeId(2, 5))

    @given(steps=st.integers(1, 10), full=st.booleans())
    @settings(max_examples=30)
    def test_edges_move_by_sqrt_dt(self, steps, full):
        topo = gl.TreeTopology.FULL_BINARY if full else gl.TreeTopology.RECOMBINING
        lat = gl.build_grid(2.0, steps, topo)
        for k in range(steps):
            cur = lat.level_values(k)
            down, up = lat.child_values(lat.level_values(k + 1))
            assert np.allclose(up - cur, lat.sqrt_dt, atol=1e-14)
            assert np.allclose(down - cur, -lat.sqrt_dt, atol=1e-14)

    def test_level_function_constant_on_equal_levels(self, full6):
        # merged-path values agree whenever the walk level agrees
        field = gl.terminal_field(full6, lambda x: np.sin(x))
        levels = full6.level_values(6)
        vals = field[6]
        for level in np.unique(np.round(levels, 12)):
            group = vals[np.isclose(levels, level)]
            assert np.all(group == group[0])


class TestTerminalField:
    def test_identity_payoff(self):
        lat = gl.build_grid(1.0, 2)  # dt = 0.5
        field = gl.terminal_field(lat, lambda x: x)
        r = math.sqrt(0.5)
        assert np.allclose(field[2], [-2 * r, 0.0, 2 * r], atol=1e-14)

    def test_constant_payoff(self):
        lat = gl.build_grid(1.0, 3)
        field = gl.terminal_field(lat, lambda x: np.full_like(x, 3.0))
        assert np.all(field[3] == 3.0)

    def test_explicit_vector_wrong_length(self):
        lat = gl.build_grid(1.0, 2)
        with pytest.raises(ValueError):
            gl.terminal_field(lat, [1.0, 2.0])

    def test_non_finite_rejected(self):
        lat = gl.build_grid(1.0, 1)
        with pytest.raises(ValueError, match="essentially bounded"):
            gl.terminal_field(lat, [1.0, np.inf])

    def test_sup_norm_certificate(self):
        lat = gl.build_grid(1.0, 2)
        field = gl.terminal_field(lat, [1.0, -7.0, 2.0])
        assert field.sup_norm() == 7.0


class TestAdaptedField:
    def test_length_validation(self, rec8):
        with pytest.raises(ValueError):
            gl.AdaptedField(rec8, [np.zeros(3)], start=8)

    def test_step_indexing(self, rec8):
        field = gl.AdaptedField(rec8, [np.zeros(k + 1) for k in range(9)], start=0)
        assert field[5].shape == (6,)
        with pytest.raises(KeyError):
            field[9]


class TestStoppingTime:
    def test_never_true_event(self, rec8):
        event = [np.zeros(k + 1, dtype=bool) for k in range(9)]
        tau = gl.hitting_time(rec8, event)
        for k in range(8):
            assert not tau.reached[k].any()
        assert tau.reached[8].all()

    def test_event_at_root(self, rec8):
        event = [np.zeros(k + 1, dtype=bool) for k in range(9)]
        event[0][0] = True
        tau = gl.hitting_time(rec8, event)
        assert all(mask.all() for mask in tau.reached)

    def test_running_sum_threshold_is_deterministic_ceiling(self):
        # constant control: the accumulated cost f(q) dt crosses n at step ceil(n/(f(q) dt))
        lat = gl.build_grid(1.0, 10)
        q, gamma, n = 0.6, 1.0, 0.1
        per_step = gamma * q * q / 2.0 * lat.dt
        running = np.cumsum(np.full(10, per_step))
        event = [np.full(k + 1, k > 0 and running[k - 1] >= n) for k in range(11)]
        tau = gl.hitting_time(lat, event)
        expected = math.ceil(n / per_step)
        for k in range(11):
            assert tau.reached[k].all() == (k >= expected)

    def test_adaptedness_absorbing_enforced(self, rec8):
        masks = [np.zeros(k + 1, dtype=bool) for k in range(9)]
        masks[3][:] = True
        masks[4][:] = False  # children of reached nodes must stay reached
        masks[8][:] = True
        with pytest.raises(ValueError, match="absorbing"):
            gl.StoppingTime(rec8, masks)

    def test_horizon_must_be_reached(self, rec8):
        masks = [np.zeros(k + 1, dtype=bool) for k in range(9)]
        with pytest.raises(ValueError, match="horizon"):
            gl.StoppingTime(rec8, masks)

    def test_min_max_and_order(self, rec8):
        a = gl.StoppingTime.deterministic(rec8, 2)
        b = gl.StoppingTime.deterministic(rec8, 5)
        assert a.is_before(b)
        assert not b.is_before(a)
        assert a.minimum(b).is_before(a)
        assert b.is_before(a.maximum(b))

    def test_full_binary_hit_is_exact_pathwise(self, full6):
        # barrier event: compare node flags against per-path first hits
        barrier = 0.9
        event = [np.abs(full6.level_values(k)) >= barrier for k in range(7)]
        tau = gl.hitting_time(full6, event)
        steps = tau.step_on_paths()
        for path in range(2**6):
            walk = [path >> (6 - k) for k in range(7)]
            hits = [k for k in range(7) if event[k][walk[k]]]
            expected = min(hits) if hits else 6
            assert steps[path] == expected

    def test_union_of_atoms_invariant(self, rec8):
        rng = np.random.default_rng(0)
        event = [rng.uniform(size=k + 1) < 0.2 for k in range(9)]
        tau = gl.hitting_time(rec8, event)
        # {tau <= k} determined by the step-k node: masks exist and are absorbing
        for k in range(8):
            down, up = rec8.child_values(tau.reached[k + 1])
            assert np.all(~tau.reached[k] | (down & up))


class TestPredictableControl:
    def test_constant_and_max_abs(self, rec8):
        q = gl.PredictableControl.constant(rec8, -0.7)
        assert q.max_abs() == 0.7
        assert q.is_deterministic()

    def test_state_function(self, rec8):
        q = gl.PredictableControl.from_state_function(rec8, lambda t, x: 0.1 * x)
        assert np.allclose(q[3], 0.1 * rec8.level_values(3))
        assert not q.is_deterministic()

    def test_shape_validation(self, rec8):
        with pytest.raises(ValueError):
            gl.PredictableControl(rec8, [np.zeros(2)] * 8)
