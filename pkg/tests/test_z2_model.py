import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from slag.asymptotics import ComplexField, leading_exponent
from slag.flat_cy import make_c2_hk_structure
from slag.z2_model import (ArgumentError, TwistedField, apply_twisted_laplacian,
                           classify_nondegenerate, disk_poisson_terms, graph_of_multivalued,
                           leading_coefficients, leading_coefficients_exact,
                           local_model_potential, mellin_residue, mode_decompose, radial_grid,
                           twisted_poisson_solve)

R = radial_grid()


def _monomials(*pairs):
    """Re(sum c z^nu) sampled on the double cover and decomposed."""
    def func(r, th):
        return sum(np.real(c * r**nu * np.exp(1j * nu * th)) for nu, c in pairs)
    return TwistedField.from_function(func, R, K=6)


def test_grid_shape():
    assert R[-1] == 1.0 and R[0] == pytest.approx(1e-4, rel=0.06)
    np.testing.assert_allclose(R[1:] / R[:-1], 1.05, rtol=1e-12)


@pytest.mark.parametrize("nu,k", [(0.5, 0), (1.5, 1)])
def test_decompose_single_monomial(nu, k):
    f = _monomials((nu, 1.0))
    np.testing.assert_allclose(f.modes[k], R**nu, atol=1e-13)
    others = np.delete(f.modes, k, axis=0)
    assert np.max(np.abs(others)) < 1e-13


def test_decompose_rejects_periodic():
    th = 4 * np.pi * np.arange(32) / 32
    with pytest.raises(ArgumentError, match="defect"):
        mode_decompose(np.cos(th)[None, :] * np.ones((3, 1)), R[:3])


@settings(max_examples=25, deadline=None)
@given(st.lists(st.complex_numbers(max_magnitude=5, allow_nan=False, allow_infinity=False),
                min_size=1, max_size=5), st.floats(0, 2 * np.pi))
def test_evaluation_is_antiperiodic_and_reconstructs(cs, theta):
    pairs = [(k + 0.5, c) for k, c in enumerate(cs)]
    f = _monomials(*pairs)
    a, b = f.evaluate([theta, theta + 2 * np.pi]).T
    assert np.max(np.abs(a + b)) <= 1e-13 * max(1.0, np.max(np.abs(a)))
    direct = sum(np.real(c * R**nu * np.exp(1j * nu * theta)) for nu, c in pairs)
    assert np.max(np.abs(a - direct)) < 1e-10


def test_harmonic_extension_of_rim_data():
    f = twisted_poisson_solve(TwistedField(R, np.zeros((2, len(R)))), boundary=[0, 1.0]).field
    np.testing.assert_allclose(f.modes[1], R**1.5, atol=1e-12)
    assert np.max(np.abs(f.modes[0])) == 0


def test_zero_data_gives_zero():
    f = twisted_poisson_solve(TwistedField(R, np.zeros((4, len(R)), dtype=complex))).field
    assert np.max(np.abs(f.modes)) == 0


def test_singular_source_particular_and_homogeneous():
    res = twisted_poisson_solve(TwistedField(R, np.array([R**-0.5])))
    term = res.particular[0][0]
    assert term.gamma == pytest.approx(1.5) and term.p == 0
    assert term.coeff == pytest.approx(0.5, abs=1e-6)
    assert not res.resonant[0]
    f = res.field
    np.testing.assert_allclose(f.modes[0], 0.5 * R**1.5 - 0.5 * R**0.5, atol=1e-8)
    # exact symbolic route: Laplacian of the particular term reproduces the source
    P = ComplexField.monomial(1.0, 0.5, 0.5)       # (1/2) r^(3/2) e^(i theta/2)
    th = 0.3 * np.ones_like(R)
    np.testing.assert_allclose(P(R, th), 0.5 * R**1.5 * np.cos(0.15), rtol=1e-14)
    np.testing.assert_allclose(P.laplacian()(R, th), R**-0.5 * np.cos(0.15), rtol=1e-13)


def test_nonresonant_power_source_reapplication():
    rhs = TwistedField(R, np.array([np.zeros_like(R), R**1.5]))
    res = twisted_poisson_solve(rhs)
    term = res.particular[1][0]
    assert term.gamma == pytest.approx(3.5)
    assert term.coeff == pytest.approx(1 / (3.5**2 - 1.5**2), rel=1e-8)
    back = apply_twisted_laplacian(res.field).modes[1][2:-2]
    rel = np.linalg.norm(back - rhs.modes[1][2:-2]) / np.linalg.norm(rhs.modes[1][2:-2])
    assert rel < 1e-8


def test_resonant_source_flagged_with_log_term():
    res = twisted_poisson_solve(TwistedField(R, np.array([np.zeros_like(R), R**-0.5])))
    assert res.resonant[1]
    term = res.particular[1][0]
    assert term.p == 1 and term.coeff == pytest.approx(1 / 3, rel=1e-6)


def test_excluded_branch_rejected():
    with pytest.raises(ArgumentError):
        twisted_poisson_solve(TwistedField(R, np.array([R**-2.5])))


@settings(max_examples=15, deadline=None)
@given(st.floats(-0.45, 3.0), st.integers(0, 3), st.floats(-2, 2))
def test_solution_exponents_are_half_integers(gamma, k, c):
    mu = gamma + 2
    if abs(mu - (k + 0.5)) < 0.06 or abs(c) < 1e-3:
        return
    modes = np.zeros((k + 1, len(R)), dtype=complex)
    modes[k] = c * R**gamma
    res = twisted_poisson_solve(TwistedField(R, modes))
    f = res.field
    part = res.particular[k][0]
    hom = f.modes[k] - part.coeff * R**part.gamma
    inner = np.nonzero(R < 1e-2)[0][2:]
    e, _ = leading_exponent(R, hom, inner)
    assert abs(e - (k + 0.5)) < 0.02


def test_leading_coefficients_exact_basis():
    lc = leading_coefficients(_monomials((0.5, 1.0), (1.5, 2.0)))
    assert abs(lc.A - 1) < 1e-8 and abs(lc.B - 2) < 1e-8
    lc = leading_coefficients(_monomials((1.5, 1.0)))
    assert abs(lc.A) < 1e-8 and abs(lc.B - 1) < 1e-8


def test_leading_coefficient_matches_mellin_residue():
    f = twisted_poisson_solve(TwistedField(R, np.array([R**-0.5]))).field
    A = leading_coefficients(f).A
    assert abs(A - (-0.5)) < 1e-6
    assert abs(mellin_residue(R, f.modes[0], 0.5) - A) < 1e-5


def test_leading_coefficients_stable_under_refinement():
    def A_at(ratio):
        r = radial_grid(ratio=ratio)
        return leading_coefficients(twisted_poisson_solve(TwistedField(r, np.array([r**-0.5]))).field).A
    assert abs(A_at(1.05) - A_at(1.025)) < 1e-5


@pytest.mark.parametrize("nu,label", [(1.5, "nondegenerate"), (0.5, "degenerate-A"),
                                      (2.5, "B-vanishing")])
def test_classify(nu, label):
    assert classify_nondegenerate(_monomials((nu, 1.0))) == label
    exact = leading_coefficients_exact(ComplexField.monomial(nu, 0))
    assert classify_nondegenerate(exact) == label


def test_disk_poisson_terms_zero_rim():
    F, P, H = disk_poisson_terms(ComplexField.monomial(0.0, -0.5, 1.0))
    th = np.linspace(0, 4 * np.pi, 13)
    assert np.max(np.abs(F(np.ones_like(th), th))) < 1e-14
    assert leading_coefficients_exact(F).A == pytest.approx(-0.5)


def test_local_model_potential():
    F = local_model_potential(1, 0.5)
    assert F.canonical().terms == {(1.5, 0.0, 0): pytest.approx(1 / 3)}


@pytest.mark.parametrize("k", [1, 2, 3])
def test_graph_on_variety(k):
    rep = graph_of_multivalued(k, 0.5, 400)
    assert rep.variety_defect < 1e-10
    assert rep.smooth == (k == 1)
    assert rep.singular_at_origin == (k >= 2)
    assert not rep.unbounded_gradient


def test_graph_k0_unbounded():
    rep = graph_of_multivalued(0, 0.5, 200)
    assert rep.unbounded_gradient


def test_graph_is_special_lagrangian():
    rep = graph_of_multivalued(1, 0.3, 200)
    assert rep.omega_max < 1e-12 and rep.im_omega_max < 1e-12
    assert make_c2_hk_structure().n == 2
