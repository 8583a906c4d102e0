import numpy as np
import pytest

from gridflow.exceptions import PowerFlowDivergedException, ZeroImpedanceException
from gridflow.model import Branch, BusKind
from gridflow.objective import power_loss
from gridflow.powerflow import (
    PF_TOL,
    branch_flows,
    build_admittance,
    reactive_injection,
    require_converged,
    series_admittance,
    solve,
)


def test_series_admittance_of_line_4_1(net9):
    ys = series_admittance(net9.branches[0])
    assert ys.real == pytest.approx(0.30132, abs=1e-4)
    assert ys.imag == pytest.approx(-17.35588, abs=1e-4)


def test_pure_reactance():
    ys = series_admittance(Branch(from_bus=1, to_bus=2, r=0.0, x=0.25))
    assert ys == pytest.approx(complex(0.0, -4.0))


def test_zero_reactance_rejected():
    with pytest.raises(ZeroImpedanceException):
        series_admittance(Branch(from_bus=1, to_bus=2, r=0.01, x=0.0))


def test_admittance_is_symmetric_with_charging(net9, y9):
    assert np.allclose(y9.ybus, y9.ybus.T)
    # bus 4 sees half the charging of 5-4 and 6-4 plus three series terms
    ys = [series_admittance(net9.branches[k]) for k in (0, 7, 8)]
    expected = sum(ys) + 0.5j * (0.176 + 0.158)
    assert y9.ybus[3, 3] == pytest.approx(expected)


def test_base_case_converges(net9, sol9):
    assert sol9.converged, f"mismatch {sol9.max_mismatch}"
    assert sol9.max_mismatch <= PF_TOL
    assert sol9.iterations <= 10
    assert sol9.mismatch_history[-1] == sol9.max_mismatch


def test_power_balance(net9, y9, sol9):
    for pos, bus in enumerate(net9.buses):
        if bus.kind is BusKind.SLACK:
            continue
        assert sol9.p_inj[pos] == pytest.approx(bus.p_gen - bus.p_load, abs=1e-7)
        if bus.kind is BusKind.PQ:
            assert sol9.q_inj[pos] == pytest.approx(bus.q_gen - bus.q_load, abs=1e-7)
    # slack covers the load plus the losses
    assert float(np.sum(sol9.p_inj)) == pytest.approx(power_loss(y9, sol9))
    assert power_loss(y9, sol9) > 0.0


def test_setpoints_held(net9, sol9):
    for pos, bus in enumerate(net9.buses):
        if bus.kind is not BusKind.PQ:
            assert sol9.v[pos] == bus.v_init
    assert sol9.delta[net9.slack_position] == 0.0


def test_warm_start_matches_cold(net9, y9, sol9):
    q = np.array([0.1, -0.1, 0.2, 0.05, 0.3])
    cold = solve(net9, y9, q)
    warm = solve(net9, y9, q, warm_start=sol9)
    assert cold.converged and warm.converged
    np.testing.assert_allclose(warm.v, cold.v, atol=1e-8)
    np.testing.assert_allclose(warm.delta, cold.delta, atol=1e-8)
    again = solve(net9, y9, q, warm_start=warm)
    assert again.iterations == 0


def test_warm_start_dimension_mismatch(two_bus, sol9):
    with pytest.raises(ValueError):
        solve(two_bus, build_admittance(two_bus), np.zeros(1), warm_start=sol9)


def test_branch_losses_sum_to_system_loss(net9, y9, sol9):
    flows = branch_flows(net9, y9, sol9)
    assert sum(flow.loss for flow in flows) == pytest.approx(
        power_loss(y9, sol9), abs=1e-9
    )
    for flow in flows:
        assert flow.loss >= -1e-12, flow.branch.label


def test_generator_line_carries_dispatch(net9, y9, sol9):
    line_7_2 = branch_flows(net9, y9, sol9)[1]
    assert line_7_2.branch.label == "7-2"
    assert line_7_2.p_to == pytest.approx(1.63, abs=1e-7)


def test_reactive_injection_includes_control(net9, y9):
    q = np.array([0.2, 0.1, -0.1, 0.0, 0.4])
    sol = solve(net9, y9, q)
    buses = {bus.id: bus for bus in net9.buses}
    for source, q_i in zip(net9.sources, q):
        injected = reactive_injection(source.bus, y9, sol)
        assert injected == pytest.approx(q_i - buses[source.bus].q_load, abs=1e-7)


def test_idle_network_has_no_flow(idle_net):
    y = build_admittance(idle_net)
    sol = solve(idle_net, y, np.zeros(1))
    assert sol.converged and sol.iterations == 0
    np.testing.assert_array_equal(sol.v, np.ones(3))
    np.testing.assert_array_equal(sol.delta, np.zeros(3))
    assert all(flow.p_from == 0.0 for flow in branch_flows(idle_net, y, sol))


def test_overload_does_not_converge(two_bus):
    heavy = two_bus.model_copy(
        update={
            "buses": (
                two_bus.buses[0],
                two_bus.buses[1].model_copy(update={"p_load": 50.0}),
            )
        }
    )
    sol = solve(heavy, build_admittance(heavy), np.zeros(1), max_iter=15)
    assert not sol.converged
    with pytest.raises(PowerFlowDivergedException) as info:
        require_converged(sol)
    assert info.value.solution is sol
