import numpy as np
import pytest

from slag.asymptotics import ComplexField
from slag.branched_iteration import (DEFAULT_TS, Family, IterationState, NondegeneracyError,
                                     build_approximate_pair, classify_family, composed_shift,
                                     conformal_demo, correction_step, cutoff_profile,
                                     deviation_slope, directional_derivative, extract_order_term,
                                     fit_source, residual_index_set, residual_order_check, residual_sweep,
                                     shift_vector, split_field)
from slag.sl_operator import Pair, VerticalForm, linear_conformal_metric


@pytest.fixture(scope="module")
def one_step():
    state = conformal_demo()
    return correction_step(state)


@pytest.fixture(scope="module")
def two_steps():
    return build_approximate_pair(conformal_demo(), 6)


def test_shift_vector_examples():
    assert shift_vector(1.3 - 0.2j, 1.3 - 0.2j) == pytest.approx(-2 / 3)
    assert shift_vector(0, 2.0) == 0
    with pytest.raises(NondegeneracyError):
        shift_vector(1.0, 0.0)


def test_shift_cancels_half_power():
    v = shift_vector(1j, 1.0)
    d = directional_derivative(ComplexField.monomial(1.5, 0.0, 1.0), v)
    lead = d.canonical().terms[(0.5, 0.0, 0)]
    assert abs(lead - (-1j)) < 1e-12


def test_cutoff_profile():
    r = np.array([0.0, 0.5, 0.7, 0.9, 2.0])
    c = cutoff_profile(r)
    assert c[0] == 1 and c[1] == 1 and c[3] == 0 and c[4] == 0 and 0 < c[2] < 1


def test_exact_model_is_fixed_point():
    state = conformal_demo(c=0.0)
    ot = extract_order_term(state)
    assert ot.exact and ot.order == np.inf
    new, rep = correction_step(state)
    assert rep is None and new is state
    assert all(row.slope == np.inf for row in residual_order_check(state))


def test_flat_generic_pair_is_order_three():
    # Re z^(3/2) twisted part, |z|^2 - 2 x3^2 untwisted part: harmonic in R^3 with det Hess != 0
    pair = Pair(ComplexField.monomial(1.5, 0.0, 1.0), ComplexField.monomial(1.0, 1.0, 1.0),
                VerticalForm(lambda x: -4.0 * x, lambda x: -4.0 * np.ones_like(x)), n=3)
    state = IterationState(Family({1: pair}), linear_conformal_metric(0.0), 0, 1.0)
    ot = extract_order_term(state, (0.2, 0.1, 0.05, 0.025))
    assert ot.order == 3 and abs(ot.slope - 3) < 0.1


def test_conformal_rho_minus_part_is_r_to_minus_half():
    state = conformal_demo()
    ot = extract_order_term(state)
    R, T, Z = state.grid.mesh()
    sigma = (ot.rho / (1 - 2 * state.c * Z)).mean(axis=2)
    S, _ = fit_source(sigma, state.grid, residual_index_set(state.family.at(1.0).potential()))
    minus, _ = split_field(S)
    assert min(a + b for a, b, _ in minus.canonical().terms) == pytest.approx(-0.5)


def test_bad_t_grids():
    state = conformal_demo()
    with pytest.raises(ValueError):
        extract_order_term(state, (0.2, 0.1, 0.05))
    with pytest.raises(ValueError):
        extract_order_term(state, (0.2, 0.1, 0.04, 0.02))


def test_one_correction(one_step):
    new, rep = one_step
    assert 2.9 <= rep.slope_before <= 3.1
    assert rep.slope_after >= 3.9
    scale = max(abs(rep.B_new), abs(new.B1))
    assert abs(rep.A_after) < 1e-5 * scale and abs(rep.A_after_fit) < 1e-5 * scale
    assert abs(rep.plus_mean) < 1e-6
    assert rep.v == pytest.approx(shift_vector(rep.a, new.B1))
    assert [row[0] for row in new.ladder] == [3] * 4 + [5] * 4


def test_ladder_and_shift_composition(two_steps):
    state, reps = two_steps
    assert len(reps) == 2
    slopes = state.slopes
    assert all(b >= a + 0.9 for a, b in zip(slopes, slopes[1:]))
    assert abs(reps[1].v) < 0.5 * abs(reps[0].v)
    assert composed_shift(state, 0.1) == pytest.approx(0.01 * reps[0].v + 1e-4 * reps[1].v)


def test_deviation_from_linear_family(two_steps):
    state, _ = two_steps
    assert deviation_slope(state) >= 2.9


def test_family_nondegenerate_at_half_T(two_steps):
    state, _ = two_steps
    assert classify_family(state, state.T / 2) == "nondegenerate"


def test_order_check_table(two_steps):
    state, _ = two_steps
    rows = residual_order_check(state)
    assert [r.stage for r in rows] == [1, 3, 5]
    assert 2.9 <= rows[0].slope <= 3.1 and rows[1].slope >= 3.9 and rows[2].slope >= 5.9


def test_reaching_target_order_is_a_no_op():
    state, reps = build_approximate_pair(conformal_demo(), 2)
    assert reps == [] and state.order == 3


def test_degenerate_start_rejected():
    state = conformal_demo()
    a1 = state.family.components[1]
    a1.minus = a1.minus + ComplexField.monomial(0.5, 0.0, 1.0)
    with pytest.raises(NondegeneracyError):
        build_approximate_pair(state, 4)


def test_sweep_norms_carry_r_weight():
    state = conformal_demo()
    slope, _, norms, fields = residual_sweep(state.metric, state.family, state.grid, DEFAULT_TS)
    R, _, _ = state.grid.mesh()
    assert norms[0] == pytest.approx(np.max(np.abs(R * fields[0])))
