import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from slag.asymptotics import (ComplexField, DomainError, FitError, PoleError, indicial_min_singular,
                              indicial_multiplicity, indicial_roots, leading_exponent,
                              mellin_pole_formula, mellin_pole_location, mellin_transform,
                              polyhom_fit)
from slag.z2_model import TwistedField, radial_grid, twisted_poisson_solve


def bump(r):
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    m = r < 1
    out[m] = np.exp(-1 / (1 - r[m] ** 2))
    return out


def unit_step(r):
    return np.where(np.asarray(r) <= 1.0, 1.0, 0.0)


R = radial_grid()


# ---------------------------------------------------------------- Mellin

def test_pole_formula_examples():
    assert mellin_pole_formula(0.5, 0, 0) == pytest.approx(-2.0)
    assert mellin_pole_formula(0.0, 1, -1j) == pytest.approx(1.0)


def test_pole_formula_raises_at_pole():
    with pytest.raises(PoleError) as exc:
        mellin_pole_formula(0.5, 2, 0.5j)
    assert (exc.value.s, exc.value.p) == (0.5, 2)


def test_bump_at_minus_i_is_plain_integral():
    direct = integrate.quad(lambda r: float(bump(r)), 0, 1, epsabs=1e-13)[0]
    assert abs(mellin_transform(bump, -1j, 0.0) - direct) < 1e-8


def test_transform_of_monomial_is_direct_integral():
    # int_0^1 r^s (log r)^p r^(i zeta - 1) dr = (-1)^p p! / (i zeta + s)^(p+1)
    for s, p in [(0.5, 0), (0.0, 1), (1.5, 2)]:
        u = lambda r, s=s, p=p: r**s * np.log(r) ** p * unit_step(r)
        for xi in np.linspace(-2, 2, 5):
            z = xi - 0.5j
            num = mellin_transform(u, z, s)
            exact = (-1) ** p * math.factorial(p) / (1j * z + s) ** (p + 1)
            assert abs(num - exact) < 1e-8 * max(1, abs(exact))
            # the closed form differs from the integral over [0, 1] by an overall sign
            assert abs(num + mellin_pole_formula(s, p, z)) < 1e-8 * max(1, abs(exact))


def test_growth_near_pole():
    u = lambda r: np.sqrt(r) * bump(r)
    a = mellin_transform(u, 0.5j - 0.02j, 0.5)
    b = mellin_transform(u, 0.5j - 0.01j, 0.5)
    assert abs(b / a) == pytest.approx(2.0, rel=0.05)


def test_strip_violation():
    with pytest.raises(DomainError):
        mellin_transform(bump, 0.6j, 0.5)


@settings(max_examples=10, deadline=None)
@given(st.floats(-3, 3), st.floats(-2, 2), st.floats(-1.5, -0.1))
def test_linearity(c, xi, eta):
    z = complex(xi, eta)
    assert abs(mellin_transform(lambda r: c * bump(r), z, 0.0) - c * mellin_transform(bump, z, 0.0)) \
        < 1e-9 * max(1, abs(c))


@pytest.mark.parametrize("c", [2.0, 0.5])
def test_dilation(c):
    z = 0.7 - 0.4j
    lhs = mellin_transform(lambda r: bump(c * r), z, 0.0, R=max(1.0, 1 / c))
    rhs = c ** (-1j * z) * mellin_transform(bump, z, 0.0)
    assert abs(lhs - rhs) < 1e-8


@pytest.mark.parametrize("s", [0.5, 1.5])
def test_pole_location_matches_fit_exponent(s):
    pole = mellin_pole_location(lambda r: r**s * unit_step(r), s)
    fit_exp, _ = leading_exponent(R, R**s)
    assert abs(pole - s) < 0.01 and abs(pole - fit_exp) < 0.01


# ------------------------------------------------------- indicial roots

def test_roots_in_window():
    roots = indicial_roots((0.0, 3.0))
    assert [z for z, _ in roots] == pytest.approx([0.5, 1.5, 2.5])
    assert all(m == 2 for _, m in roots)


def test_non_root_is_invertible():
    assert indicial_min_singular(1.0) > 0.5
    assert indicial_multiplicity(1.0) == 0
    assert indicial_multiplicity(1.5) == 2


def test_roots_symmetric():
    pos = [z for z, _ in indicial_roots((0.0, 4.0))]
    neg = [z for z, _ in indicial_roots((-4.0, 0.0))]
    assert sorted(-np.array(neg)) == pytest.approx(pos)


# -------------------------------------------------------------- fitting

def test_fit_exact_dictionary():
    fit = polyhom_fit(R, R**0.5 + 2 * R**1.5, [(0.5, 0), (1.5, 0), (2.5, 0)])
    assert abs(fit.coefficient(0.5) - 1) < 1e-10 and abs(fit.coefficient(1.5) - 2) < 1e-9
    assert not fit.has_log()


def test_fit_flags_log():
    fit = polyhom_fit(R, R**1.5 * np.log(R), [(1.5, 0), (1.5, 1), (2.5, 0)])
    assert fit.log_flags[(1.5, 1)]
    assert abs(fit.coefficient(1.5, 1) - 1) < 1e-6


def test_fit_no_false_log():
    fit = polyhom_fit(R, R**1.5 + 0.3 * R**2.5, [(1.5, 0), (1.5, 1), (2.5, 0)])
    assert not fit.log_flags[(1.5, 1)]


def test_fit_recovers_resonant_solver_term():
    res = twisted_poisson_solve(TwistedField(R, np.array([np.zeros_like(R), R**-0.5])))
    explicit = res.particular[1][0].coeff
    fit = polyhom_fit(R, res.field.modes[1], [(1.5, 0), (1.5, 1), (2.5, 0), (3.5, 0)], nu=1.5)
    assert fit.log_flags[(1.5, 1)]
    assert abs(fit.coefficient(1.5, 1) - explicit) < 1e-6


def test_fit_collinear_dictionary():
    with pytest.raises(FitError):
        polyhom_fit(R, R**0.5, [(0.5, 0), (0.5 + 1e-9, 0)])


def test_expansion_exponents_increase():
    fit = polyhom_fit(R, R**2.5 + R**0.5, [(2.5, 0), (0.5, 0), (1.5, 0)])
    gs = [t.gamma for t in fit.terms]
    assert gs == sorted(gs)


# ------------------------------------------------- exact complex fields

@settings(max_examples=30, deadline=None)
@given(st.floats(-1.5, 2.5), st.floats(-1.5, 2.5), st.integers(0, 2))
def test_poisson_particular_inverts_laplacian(a, b, p):
    src = ComplexField.monomial(a, b, 1.0, p)
    P = src.poisson_particular()
    r = np.array([0.3, 0.7, 1.3])
    th = np.array([0.2, 1.1, 2.9])
    lhs = P.laplacian()(r, th)
    rhs = src(r, th)
    assert np.max(np.abs(lhs - rhs)) < 1e-9 * max(1, np.max(np.abs(rhs)))
