import numpy as np
import pytest

from almpc.problem import validate
from almpc.testbench.harness import plant_step
from almpc.testbench.problems import (
    BallOnPlate, Crane2D, Cstr, DoubleIntegratorShrinking, DualArmRobot, load_cstr_data,
)
from almpc.testbench.scenarios import SCENARIOS, get_scenario


@pytest.mark.parametrize("name", sorted(SCENARIOS))
def test_scenarios_validate(name):
    sc = get_scenario(name)
    pb = sc.make_problem()
    sc.options.validate(pb.dims)
    assert validate(pb, sc.bounds(pb)).ok
    assert sc.x0.shape == (pb.dims.Nx,)


def test_unknown_scenario():
    with pytest.raises(KeyError):
        get_scenario("nope")


def test_crane_start_satisfies_obstacle_constraint():
    pb = Crane2D()
    x0 = get_scenario("crane2d").x0
    h = pb.h(x0, np.zeros(2), None, 0.0)
    assert h[0] == pytest.approx(-0.05)
    assert np.all(h <= 0.0)
    # the load hanging low in the middle of the rail violates it
    assert pb.h(np.array([0.0, 0.0, 1.5, 0.0, 0.0, 0.0]), np.zeros(2), None, 0.0)[0] > 0.0


def test_crane_rest_is_equilibrium():
    pb = Crane2D()
    np.testing.assert_array_equal(pb.f(np.array([1.0, 0.0, 2.0, 0.0, 0.0, 0.0]), np.zeros(2), None, 0.0), 0.0)


def test_dual_arm_endpoints_close_the_chain():
    pb = DualArmRobot()
    for x in (pb.x0, pb.xf):
        np.testing.assert_allclose(pb.g(x, np.zeros(6), None, 0.0), 0.0, atol=1e-14)
    np.testing.assert_allclose(pb.gT(pb.xf, None, 10.0), 0.0, atol=1e-14)


def test_double_integrator_target_rest():
    pb = DoubleIntegratorShrinking()
    np.testing.assert_array_equal(pb.f(pb.xdes, np.zeros(1), None, 0.0), [0.0, 0.0])


def test_cstr_steady_state_is_stationary():
    pb = Cstr()
    u = np.asarray(load_cstr_data()["setpoints"][0]["u"], dtype=float)
    xs = pb.steady_state(u)
    rate = pb.f(xs, u, None, 0.0)
    assert np.max(np.abs(rate / np.maximum(np.abs(xs), 1.0))) < 1e-9
    np.testing.assert_allclose(plant_step(pb, xs, u, 10.0), xs, rtol=1e-6)


def test_plant_step_matches_analytic_double_integrator():
    pb = DoubleIntegratorShrinking()
    x = plant_step(pb, np.array([0.0, 1.0]), np.array([0.5]), 2.0)
    np.testing.assert_allclose(x, [2.0 + 0.25 * 4.0, 2.0], rtol=1e-8)


def test_ball_on_plate_constraints_at_start():
    pb = BallOnPlate()
    h = pb.h(get_scenario("ball-on-plate").x0, np.zeros(1), None, 0.0)
    assert np.max(h) > 0.0  # the start state lies outside the box (see decisions ledger)
