"""Integration against exact solutions, forced scalar systems, CSV I/O."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
import hypothesis.strategies as st

from crncalc import (
    ForcedSystem,
    ForcingFunction,
    SimConfig,
    closed_form_reference,
    compile_expression,
    compile_rhs,
    derive_ode,
    designed_inversion_network,
    double_identification_network,
    integrate_network,
    naive_inversion_network,
    parse_forcing,
    read_trajectory_csv,
    simulate_forced,
    simulate_program,
)
from crncalc.simulate import compile_circuit_rhs, initial_state
from crncalc.circuit import lower_to_circuit, flatten

TIGHT = dict(rel_tol=1e-10, abs_tol=1e-12)


def sup_err(traj, sid, reference):
    return float(np.max(np.abs(traj.series(sid) - reference(traj.times))))


# --- integrator vs closed forms ----------------------------------------------

def test_naive_inversion_matches_closed_form():
    net = naive_inversion_network()
    for a, x0 in [(2.0, 1.0), (0.5, 0.0), (4.0, 0.25)]:
        traj = integrate_network(net, {"A": a, "X": x0}, SimConfig(t_end=20, **TIGHT))
        err = sup_err(traj, "X", lambda t: closed_form_reference(
            "naive_inversion", {"a": a, "x0": x0}, t))
        assert err <= 1e-8, (a, x0, err)


def test_designed_inversion_matches_closed_form():
    net = designed_inversion_network()
    for a, x0 in [(2.0, 1.0), (0.5, 1.0), (3.0, 0.25)]:
        traj = integrate_network(net, {"A": a, "X": x0}, SimConfig(t_end=20, **TIGHT))
        err = sup_err(traj, "X", lambda t: closed_form_reference(
            "designed_inversion", {"a": a, "x0": x0}, t))
        assert err <= 1e-8, (a, x0, err)


def test_double_identification_matches_closed_form():
    net = double_identification_network()
    traj = integrate_network(net, {"A": 3.0}, SimConfig(t_end=20, **TIGHT))
    err = sup_err(traj, "X", lambda t: closed_form_reference(
        "double_identification", {"a": 3.0}, t))
    assert err <= 1e-8
    # intermediate follows plain identification
    err_y = sup_err(traj, "Y", lambda t: closed_form_reference(
        "identification", {"a": 3.0}, t))
    assert err_y <= 1e-8


def test_closed_form_rejects_unknown_case():
    with pytest.raises(ValueError):
        closed_form_reference("magic", {"a": 1.0}, 0.0)


def test_addition_program_closed_form():
    prog = compile_expression("a + b")
    traj = simulate_program(prog, {"a": 1, "b": 2}, SimConfig(t_end=20, **TIGHT))
    target = lambda t: 3.0 * (1.0 - np.exp(-t))
    assert sup_err(traj, "X1", target) <= 1e-8
    assert traj.final("X1") == pytest.approx(3.0, abs=1e-8)
    assert traj.termination.status == "completed"


def test_inversion_program_default_init():
    # init+ puts the output at 1, so the a=2, x0=1 solution applies directly
    prog = compile_expression("1/a")
    traj = simulate_program(prog, {"a": 2}, SimConfig(t_end=20, **TIGHT))
    err = sup_err(traj, "X1", lambda t: closed_form_reference(
        "designed_inversion", {"a": 2.0, "x0": 1.0}, t))
    assert err <= 1e-8


def test_tied_rectified_subtraction_is_exact():
    # at a = b the helper species obeys y' = y, so y = e^t and x = e^{-t}
    prog = compile_expression("rsub(a, b)")
    cfg = SimConfig(t_end=40, blowup_threshold=1e6, **TIGHT)
    traj = simulate_program(prog, {"a": 1, "b": 1}, cfg)
    assert traj.termination.status == "blowup"
    assert traj.termination.species == "Y1"
    assert traj.termination.time == pytest.approx(math.log(1e6), abs=1e-6)
    keep = traj.times <= 10.0
    y_err = np.abs(traj.series("Y1")[keep] - np.exp(traj.times[keep]))
    x_err = np.abs(traj.series("X1")[keep] - np.exp(-traj.times[keep]))
    assert float(np.max(y_err / np.exp(traj.times[keep]))) <= 1e-7
    assert float(np.max(x_err)) <= 1e-7


def test_default_blowup_threshold():
    prog = compile_expression("rsub(a, b)")
    traj = simulate_program(prog, {"a": 2, "b": 2}, SimConfig(t_end=40))
    assert traj.termination.status == "blowup"
    assert traj.termination.time == pytest.approx(math.log(1e12), rel=1e-4)


# --- time change and conserved inputs ----------------------------------------

def test_sigma_rescales_time():
    prog = compile_expression("sqrt(a) + b")
    base = simulate_program(prog, {"a": 4, "b": 1}, SimConfig(t_end=16, **TIGHT))
    fast = simulate_program(prog, {"a": 4, "b": 1},
                            SimConfig(t_end=8, sigma=2.0, output_grid=0.5, **TIGHT))
    for sid in ("X1", "X2", "Y1"):
        ref = base.at(2.0 * fast.times, sid)
        assert float(np.max(np.abs(fast.series(sid) - ref))) <= 1e-7, sid


def test_inputs_are_bitwise_constant():
    prog = compile_expression("a * b")
    traj = simulate_program(prog, {"a": 1.7, "b": 2.3}, SimConfig(t_end=10))
    assert np.all(traj.series("A") == 1.7)
    assert np.all(traj.series("B") == 2.3)


def test_initial_state_rules():
    prog = compile_expression("a / b")
    init = initial_state(prog, {"a": 3, "b": 2})
    assert init == {"A": 3.0, "B": 2.0, "X1": 1.0, "X2": 0.0}
    init = initial_state(prog, {"a": 3, "b": 2}, overrides={"X2": 0.7})
    assert init["X2"] == 0.7
    with pytest.raises(ValueError, match="missing value"):
        initial_state(prog, {"a": 3})
    with pytest.raises(ValueError, match="unknown inputs"):
        initial_state(prog, {"a": 3, "b": 2, "c": 1})
    with pytest.raises(ValueError, match="unknown species"):
        initial_state(prog, {"a": 3, "b": 2}, overrides={"Q": 1.0})
    with pytest.raises(ValueError, match="non-negative"):
        initial_state(prog, {"a": -3, "b": 2})


def test_integrate_network_rejects_unknown_species():
    with pytest.raises(ValueError, match="unknown species"):
        integrate_network(naive_inversion_network(), {"A": 1, "Q": 2})


# --- forcing functions --------------------------------------------------------

def test_parse_forcing_examples():
    g = parse_forcing("2 + 1*exp(-3*t) + 0.5*t^1*exp(-1*t)")
    assert g.constant == 2.0
    assert len(g.terms) == 2
    assert g.limit == 2.0
    assert g.rate == 1.0
    assert g(0.0) == pytest.approx(3.0)
    big = g(50.0)
    assert big == pytest.approx(2.0, abs=1e-12)

    one = parse_forcing("1")
    assert one.is_constant_one() and one.rate == math.inf

    g2 = parse_forcing("2 - exp(-t)")
    assert g2.constant == 2.0 and g2.terms[0].coeff == -1.0
    assert g2.terms[0].rate == 1.0

    g3 = parse_forcing("-1 + exp(-2*t)")
    assert g3.limit == -1.0 and g3.rate == 2.0

    g4 = parse_forcing("t*exp(-2*t)")
    assert g4.terms[0].power == 1 and g4.terms[0].rate == 2.0


def test_parse_forcing_rejects_growth():
    for bad in ["3*t", "t^2", "exp(t)", "2 + q"]:
        with pytest.raises(ValueError):
            parse_forcing(bad)


def test_forced_linear_matches_closed_form():
    sys = ForcedSystem("linear", parse_forcing("2 + exp(-3*t)"),
                       parse_forcing("1"), x0=1.0)
    traj = simulate_forced(sys, SimConfig(t_end=20, **TIGHT))
    t = traj.times
    exact = 2.0 + (1.0 - 1.5) * np.exp(-t) - 0.5 * np.exp(-3.0 * t)
    assert float(np.max(np.abs(traj.series("x") - exact))) <= 1e-8


def test_forced_power_equals_designed_inversion():
    sys = ForcedSystem("power", ForcingFunction(1.0), ForcingFunction(2.0),
                       m=1, x0=1.0)
    traj = simulate_forced(sys, SimConfig(t_end=20, **TIGHT))
    err = sup_err(traj, "x", lambda t: closed_form_reference(
        "designed_inversion", {"a": 2.0, "x0": 1.0}, t))
    assert err <= 1e-8


def test_forced_matches_compiled_root_gate():
    # held input a=2: the root gate's helper species is exactly the power
    # form with g1 = 1, g2 = 2, m = 2
    prog = compile_expression("sqrt(a)")
    grid = dict(output_grid=0.5, t_end=12)
    traj = simulate_program(prog, {"a": 2}, SimConfig(**grid, **TIGHT))
    sys = ForcedSystem("power", ForcingFunction(1.0), ForcingFunction(2.0),
                       m=2, x0=1.0)
    forced = simulate_forced(sys, SimConfig(**grid, **TIGHT))
    assert np.array_equal(traj.times, forced.times)
    diff = np.abs(traj.series("Y1") - forced.series("x"))
    assert float(np.max(diff)) <= 1e-8


def test_forced_system_validation():
    one = ForcingFunction(1.0)
    with pytest.raises(ValueError):
        ForcedSystem("cubic", one, one)
    with pytest.raises(ValueError):
        ForcedSystem("power", one, one, m=0)
    with pytest.raises(ValueError):
        simulate_forced(ForcedSystem("linear", one, one),
                        SimConfig(t_end=5, sigma=2.0))


# --- configuration and output -------------------------------------------------

def test_simconfig_validation():
    for bad in [dict(t_end=0), dict(sigma=-1), dict(blowup_threshold=0),
                dict(rel_tol=1e-14), dict(abs_tol=1e-16),
                dict(output_grid=0.0), dict(t_end=5, output_grid=6.0)]:
        with pytest.raises(ValueError):
            SimConfig(**bad)


def test_output_grid_sampling():
    prog = compile_expression("a + b")
    traj = simulate_program(prog, {"a": 1, "b": 1},
                            SimConfig(t_end=10, output_grid=0.5))
    assert traj.times.shape == (21,)
    assert traj.times[0] == 0.0 and traj.times[-1] == 10.0
    assert np.allclose(np.diff(traj.times), 0.5)
    ragged = simulate_program(prog, {"a": 1, "b": 1},
                              SimConfig(t_end=1.0, output_grid=0.3))
    assert np.allclose(ragged.times, [0.0, 0.3, 0.6, 0.9, 1.0])


def test_csv_round_trip():
    prog = compile_expression("a/b")
    traj = simulate_program(prog, {"a": 1, "b": 2}, SimConfig(t_end=5))
    back = read_trajectory_csv(traj.to_csv())
    assert back.species == traj.species
    assert np.array_equal(back.times, traj.times)
    assert np.array_equal(back.states, traj.states)
    assert back.termination.status == "completed"

    blow = simulate_program(compile_expression("rsub(a, b)"), {"a": 1, "b": 1},
                            SimConfig(t_end=40, blowup_threshold=1e6))
    back = read_trajectory_csv(blow.to_csv())
    assert back.termination.status == "blowup"
    assert back.termination.species == "Y1"
    assert back.termination.time == pytest.approx(math.log(1e6), abs=1e-5)


def test_csv_rejects_malformed_text():
    with pytest.raises(ValueError):
        read_trajectory_csv("no header\n1,2\n")
    with pytest.raises(ValueError):
        read_trajectory_csv("t,A,B\n0.0,1.0\n")


def test_no_negative_excursions_flagged():
    for src, vals in [("a + b", {"a": 1, "b": 2}), ("1/a", {"a": 3}),
                      ("sqrt(abs(a - b))", {"a": 5, "b": 2})]:
        traj = simulate_program(compile_expression(src), vals, SimConfig(t_end=30))
        assert traj.negatives == ()


# --- factored gate RHS agrees with the expanded polynomial field ---------------

@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(min_value=0.0, max_value=8.0), min_size=7, max_size=7))
def test_factored_rhs_matches_expanded(values):
    circuit = lower_to_circuit("sqrt(abs(a - b)) + a/b")
    prog = flatten(circuit)
    ids = prog.network.species_ids
    fast = compile_circuit_rhs(circuit, ids)
    slow = compile_rhs(derive_ode(prog.network))
    y = np.array((values * 3)[: len(ids)])
    lhs = np.asarray(fast(0.0, y), dtype=float)
    rhs = np.asarray(slow(0.0, y), dtype=float)
    assert np.allclose(lhs, rhs, rtol=1e-9, atol=1e-9)
