import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from almpc.errors import NumericalFailure
from almpc.problem import (
    PROBLEMS, Bounds, FiniteDifferenceProblem, Problem, ProblemDims, ScaledProblem, check_derivatives,
    eval_dynamics, scale_to_internal, unscale_from_internal, validate,
)
from almpc.testbench.problems import BallOnPlate, DoubleIntegratorShrinking

from conftest import Integrator1D

floats = st.floats(-1e3, 1e3, allow_nan=False)


def test_ball_on_plate_validates():
    pb = BallOnPlate()
    assert validate(pb, Bounds.for_dims(pb.dims, umax=0.0524)).ok


def test_inverted_control_bound():
    pb = BallOnPlate()
    report = validate(pb, Bounds(u_min=[0.1], u_max=[-0.1]))
    assert "inverted control bound, index 0" in report.findings


def test_missing_derivative_hook():
    class NoDhdx(BallOnPlate):
        dhdx_mult = Problem.dhdx_mult

    report = validate(NoDhdx(), Bounds.for_dims(NoDhdx().dims, umax=1.0))
    assert any("missing derivative hook dhdx_mult" in f for f in report.findings)


def test_singular_mass_matrix_rejected():
    pb = Integrator1D()
    pb.mass_matrix = np.zeros((1, 1))
    assert any("singular" in f for f in validate(pb, Bounds.for_dims(pb.dims)).findings)


def test_scale_vectors_must_be_positive():
    pb = Integrator1D()
    report = validate(pb, Bounds.for_dims(pb.dims, x_scale=[0.0]))
    assert any("x_scale" in f for f in report.findings)


def test_eval_dynamics_examples():
    pb = BallOnPlate()
    np.testing.assert_allclose(eval_dynamics(pb, np.zeros(2), np.array([1.0]), None, 0.0), [-0.04, -7.01])
    np.testing.assert_allclose(eval_dynamics(pb, np.array([0.0, 2.0]), np.array([0.0]), None, 0.0), [2.0, 0.0])
    di = DoubleIntegratorShrinking()
    np.testing.assert_allclose(eval_dynamics(di, np.array([-1.0, -1.0]), np.array([0.5]), None, 0.0), [-1.0, 0.5])


def test_eval_dynamics_non_finite():
    class Bad(Integrator1D):
        def f(self, x, u, p, t):
            return np.array([np.nan])

    with pytest.raises(NumericalFailure) as err:
        eval_dynamics(Bad(), np.zeros(1), np.zeros(1), None, 0.0)
    assert err.value.index == 0


def test_scaling_examples():
    b = Bounds(u_min=[-1.0], u_max=[1.0])
    np.testing.assert_array_equal(scale_to_internal(b, [3.0, 4.0]), [3.0, 4.0])
    b = Bounds(u_min=[-1.0], u_max=[1.0], x_scale=[2.0], x_offset=[1.0])
    np.testing.assert_array_equal(scale_to_internal(b, [5.0]), [2.0])


@settings(max_examples=50, deadline=None)
@given(st.lists(floats, min_size=3, max_size=3), st.lists(st.floats(1e-3, 1e3), min_size=3, max_size=3),
       st.lists(floats, min_size=3, max_size=3))
def test_scaling_round_trip(x, scale, offset):
    b = Bounds(u_min=[0.0], u_max=[0.0], x_scale=scale, x_offset=offset)
    back = unscale_from_internal(b, scale_to_internal(b, x))
    np.testing.assert_allclose(back, x, rtol=1e-12, atol=1e-9)


@pytest.mark.parametrize("name", sorted(PROBLEMS))
def test_registered_hooks_match_finite_differences(name):
    pb = PROBLEMS[name]()
    optimize_T = name == "double-integrator-shrinking"
    for hook, err in check_derivatives(pb, optimize_T=optimize_T).items():
        assert err is None or err < 1e-5, (name, hook, err)


@pytest.mark.parametrize("name", sorted(PROBLEMS))
def test_multiplied_jacobians_are_linear(name):
    pb = PROBLEMS[name]()
    d = pb.dims
    rng = np.random.default_rng(3)
    x, u, p = pb.nominal_state(), pb.nominal_control(), np.zeros(d.Np)
    for hook, n in (("dfdx_mult", d.Nx), ("dfdu_mult", d.Nx), ("dgdx_mult", d.Ng), ("dhdx_mult", d.Nh)):
        if n == 0:
            continue
        l1, l2 = rng.standard_normal(n), rng.standard_normal(n)
        fn = getattr(pb, hook)
        lhs = fn(x, u, p, 0.3, 2.0 * l1 - 3.0 * l2)
        rhs = 2.0 * fn(x, u, p, 0.3, l1) - 3.0 * fn(x, u, p, 0.3, l2)
        np.testing.assert_allclose(lhs, rhs, rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("name", sorted(PROBLEMS))
def test_node_hooks_match_pointwise_hooks(name):
    pb = PROBLEMS[name]()
    d = pb.dims
    rng = np.random.default_rng(1)
    N = 7
    X = pb.nominal_state() * (1 + 0.1 * rng.standard_normal((N, d.Nx)))
    U = pb.nominal_control() + 0.1 * rng.standard_normal((N, d.Nu))
    t = np.linspace(0.0, 1.0, N)
    p = np.zeros(d.Np)
    for hook in ("l_nodes", "g_nodes", "h_nodes", "dldx_nodes", "dldu_nodes"):
        np.testing.assert_allclose(getattr(pb, hook)(X, U, p, t), getattr(Problem, hook)(pb, X, U, p, t),
                                   rtol=1e-12, atol=1e-12, err_msg=hook)
    for hook, n in (("dgdx_mult_nodes", d.Ng), ("dgdu_mult_nodes", d.Ng),
                    ("dhdx_mult_nodes", d.Nh), ("dhdu_mult_nodes", d.Nh)):
        W = rng.standard_normal((N, n))
        np.testing.assert_allclose(getattr(pb, hook)(X, U, p, t, W), getattr(Problem, hook)(pb, X, U, p, t, W),
                                   rtol=1e-12, atol=1e-12, err_msg=hook)


def test_scaled_problem_hooks_match_finite_differences():
    pb = BallOnPlate()
    b = Bounds(u_min=[-1.0], u_max=[1.0], x_scale=[0.1, 0.5], x_offset=[0.05, -0.01], u_scale=[0.03],
               u_offset=[0.01])
    for hook, err in check_derivatives(ScaledProblem(pb, b)).items():
        assert err is None or err < 1e-5, (hook, err)


def test_finite_difference_problem_is_flagged_non_realtime():
    fd = FiniteDifferenceProblem(BallOnPlate())
    assert not fd.realtime
    x, u = np.array([0.1, 0.02]), np.array([0.01])
    np.testing.assert_allclose(fd.dldx(x, u, None, 0.0), BallOnPlate().dldx(x, u, None, 0.0), rtol=1e-8)


def test_parameter_hooks_not_applicable_without_parameters():
    report = check_derivatives(BallOnPlate())
    assert report["dfdp_mult"] is None and report["dldp"] is None


def test_dims_reject_nonpositive_state():
    with pytest.raises(ValueError):
        ProblemDims(Nx=0, Nu=1)
