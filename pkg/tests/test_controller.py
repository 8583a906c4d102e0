import numpy as np
import pytest

from gridflow.controller import (
    BASE_EVENT,
    ControlState,
    active_gradient_norm,
    apply_event,
    initial_state,
    load_events,
    parse_events,
    run_scenario,
    run_segment,
    step,
)
from gridflow.exceptions import CaseFormatException, CaseValidationException
from gridflow.model import GradientMode, LoadEvent, LoadType
from gridflow.objective import combined
from gridflow.powerflow import solve


@pytest.fixture(scope="module")
def exact_trace(net9, load_steps):
    return run_scenario(net9, load_steps, GradientMode.EXACT)


def _bus(net, bus_id):
    return next(bus for bus in net.buses if bus.id == bus_id)


def test_initial_state_is_flat(net9):
    state = initial_state(net9, GradientMode.APPROX, dt=5.0)
    np.testing.assert_array_equal(state.q_ctrl, np.zeros(5))
    assert (state.iteration, state.mode, state.dt) == (0, GradientMode.APPROX, 5.0)


def test_zero_gradient_step_is_identity(net9, y9, sol9):
    state = initial_state(net9)
    moved = step(state, net9, y9, sol9, grads=np.zeros(5))
    np.testing.assert_array_equal(moved.q_ctrl, state.q_ctrl)
    assert moved.iteration == 1


def test_step_clamps_to_limits(net9, y9, sol9):
    state = ControlState(q_ctrl=net9.q_min.copy(), dt=10.0)
    moved = step(state, net9, y9, sol9, grads=np.full(5, 3.0))
    np.testing.assert_array_equal(moved.q_ctrl, net9.q_min)
    moved = step(state, net9, y9, sol9, grads=np.full(5, -1e3))
    np.testing.assert_array_equal(moved.q_ctrl, net9.q_max)


def test_pinned_sources_do_not_count(net9):
    q = net9.q_min.copy()
    grads = np.array([0.5, 0.5, 0.5, 0.5, 0.5])
    assert active_gradient_norm(net9, q, grads) == 0.0
    grads[0] = -0.2
    assert active_gradient_norm(net9, q, grads) == pytest.approx(0.2)


def test_single_step_descends(net9, y9, sol9):
    state = initial_state(net9, dt=1.0)
    before = combined(net9, y9, sol9, state.q_ctrl).f
    moved = step(state, net9, y9, sol9)
    after_sol = solve(net9, y9, moved.q_ctrl, warm_start=sol9)
    assert combined(net9, y9, after_sol, moved.q_ctrl).f < before


def test_segment_stops_at_tolerance(net9, y9, sol9):
    state, fragment = run_segment(initial_state(net9), net9, y9, sol9, eps=np.inf)
    assert state.iteration == 0
    assert len(fragment.records) == 1
    assert fragment.segments[0].converged_at == 0
    assert fragment.segments[0].event == BASE_EVENT


def test_segment_without_final_record(net9, y9, sol9):
    state, fragment = run_segment(
        initial_state(net9), net9, y9, sol9, eps=0.0, max_iter=3, record_final=False
    )
    assert state.iteration == 3
    assert [record.iteration for record in fragment.records] == [0, 1, 2]
    assert not fragment.segments[0].converged


def test_apply_event_scales_loads(net9, load_steps):
    first = apply_event(net9, load_steps[0])
    assert _bus(first, 5).q_load == pytest.approx(0.6)
    assert _bus(first, 5).p_load == 1.2
    assert _bus(first, 1) == _bus(net9, 1)
    second = apply_event(first, load_steps[1])
    assert _bus(second, 5).p_load == pytest.approx(1.26)
    assert _bus(second, 7).p_load == 0.0
    third = apply_event(second, load_steps[2])
    assert _bus(third, 5).q_load == pytest.approx(0.48)
    # the original network is untouched
    assert _bus(net9, 5).q_load == 0.5


def test_apply_event_unknown_bus(net9):
    ev = LoadEvent(
        name="Event1",
        at_iteration=1,
        buses=(42,),
        load_type=LoadType.REAL,
        multiplier=1.1,
    )
    with pytest.raises(CaseValidationException, match="unknown bus 42"):
        apply_event(net9, ev)


def test_parse_bundled_schedule(load_steps):
    assert [ev.name for ev in load_steps] == ["Event1", "Event2", "Event3", "Event4"]
    assert [ev.at_iteration for ev in load_steps] == [25, 50, 75, 100]
    assert load_steps[1].buses == (5, 6, 8, 9)
    assert load_steps[1].load_type is LoadType.REAL
    assert load_steps[2].multiplier == 0.8


@pytest.mark.parametrize(
    "text,line",
    [
        ("25 5,6 reactive\n", 1),
        ("# header\n25 5,6 imaginary 1.2\n", 2),
        ("25 5,6 real -1\n", 1),
        ("x 5 real 1.0\n", 1),
    ],
)
def test_bad_event_rows(text, line):
    with pytest.raises(CaseFormatException) as info:
        parse_events(text)
    assert info.value.line == line


def test_missing_event_file(tmp_path):
    with pytest.raises(CaseFormatException, match="event file not found"):
        load_events(tmp_path / "none.events")


def test_zero_horizon_records_start_only(net9):
    trace = run_scenario(net9, mode=GradientMode.EXACT, horizon=0)
    assert len(trace.records) == 1
    assert trace.records[0].iteration == 0


def test_events_beyond_horizon_are_ignored(net9, load_steps):
    trace = run_scenario(net9, load_steps, GradientMode.APPROX, horizon=30)
    assert [segment.event for segment in trace.segments] == [BASE_EVENT, "Event1"]
    assert trace.records[-1].iteration <= 30


def test_event_records_land_on_schedule(exact_trace):
    names = [segment.event for segment in exact_trace.segments]
    assert names == [BASE_EVENT, "Event1", "Event2", "Event3", "Event4"]
    starts = {segment.event: segment.start for segment in exact_trace.segments}
    assert starts == {
        BASE_EVENT: 0,
        "Event1": 25,
        "Event2": 50,
        "Event3": 75,
        "Event4": 100,
    }
    iterations = [record.iteration for record in exact_trace.records]
    assert iterations == sorted(set(iterations)), "records must be strictly ordered"


def test_trace_stays_within_limits(net9, exact_trace):
    for record in exact_trace.records:
        assert np.all(record.q_ctrl >= net9.q_min), record.iteration
        assert np.all(record.q_ctrl <= net9.q_max), record.iteration


@pytest.mark.parametrize("mode", [GradientMode.EXACT, GradientMode.APPROX])
def test_each_segment_descends(net9, load_steps, exact_trace, mode):
    trace = exact_trace
    if mode is not GradientMode.EXACT:
        trace = run_scenario(net9, load_steps, mode)
    for segment in trace.segments:
        values = [record.objective.f for record in trace.segment_records(segment)]
        # the first step of a segment is exempt
        for k in range(1, len(values) - 1):
            assert values[k + 1] <= values[k] + 1e-9, (
                f"{mode.value} {segment.event} step {k}: "
                f"{values[k]} -> {values[k + 1]}"
            )


def test_gradient_shrinks_in_base_segment(exact_trace):
    records = exact_trace.segment_records(exact_trace.segments[0])
    assert records[-1].grad_max < records[0].grad_max


def test_reactive_load_increase_raises_support(exact_trace):
    base = exact_trace.segment_records(exact_trace.segments[0])[-1]
    event1 = exact_trace.segment_records(exact_trace.segments[1])[-1]
    assert event1.q_ctrl.sum() > base.q_ctrl.sum()


def test_runs_are_deterministic(net9, load_steps, exact_trace):
    again = run_scenario(net9, load_steps, GradientMode.EXACT)
    assert len(again.records) == len(exact_trace.records)
    for ours, theirs in zip(again.records, exact_trace.records):
        np.testing.assert_array_equal(ours.q_ctrl, theirs.q_ctrl)
        assert ours.objective == theirs.objective


def test_final_state_is_recorded(exact_trace):
    final = exact_trace.final
    assert final.iteration == exact_trace.final_state.iteration
    np.testing.assert_array_equal(final.q_ctrl, exact_trace.final_state.q_ctrl)
    np.testing.assert_array_equal(final.v, exact_trace.final_solution.v)
    # reactive 1.2 then 0.8 at bus 5
    assert _bus(exact_trace.final_network, 5).q_load == pytest.approx(0.48)
