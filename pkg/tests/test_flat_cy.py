import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from slag.flat_cy import (ArgumentError, ConstForm, NonLagrangianError, StateError,
                          FlatCYStructure, Immersion, evaluate_by_leibniz, graph_immersion,
                          graph_on_torus, holomorphic_two_form_c2, lagrangian_angle,
                          make_c2_hk_structure, make_flat_structure, pullback_form,
                          pullback_forms, spectral_derivatives, star_pullbacks)
from slag.z2_model import graph_of_multivalued


def test_n1_structure():
    S = make_flat_structure(1)
    assert S.omega.component((0, 1)) == 1
    assert S.Omega.component((0,)) == 1 and S.Omega.component((1,)) == 1j


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_normalization_and_compatibility(n):
    S = make_flat_structure(n)
    assert S.normalization_residual() == 0
    assert S.compatibility_residual() == 0


def test_n2_normalization_componentwise():
    # independent expansion: omega^2/2 = dx1 dy1 dx2 dy2 reordered; Omega ^ conj Omega by hand
    S = make_flat_structure(2)
    w2 = S.omega.wedge(S.omega) * 0.5
    OO = S.Omega.wedge(S.Omega.conj())
    # coordinates (x1, x2, y1, y2): omega^2/2 = dx1 dy1 dx2 dy2 = -dx1 dx2 dy1 dy2
    assert w2.component((0, 2, 1, 3)) == 1
    assert w2.component((0, 1, 2, 3)) == -1
    # dz1 dz2 dzb1 dzb2 = (2i)^2 * (-1) * dx1 dy1 dx2 dy2  ->  coefficient of dx1 dx2 dy1 dy2 is -4
    assert OO.component((0, 1, 2, 3)) == pytest.approx(-4)
    assert w2.component((0, 1, 2, 3)) == pytest.approx(-1 * (0.5j) ** 2 * OO.component((0, 1, 2, 3)))


@pytest.mark.parametrize("n", [0, 5, 2.0])
def test_bad_dimension(n):
    with pytest.raises(ArgumentError):
        make_flat_structure(n)


def test_c2_hk_values():
    S = make_c2_hk_structure()
    e = np.eye(4)
    assert S.omega.evaluate(np.stack([e[0], e[2]])) == 1
    assert S.im_Omega.evaluate(np.stack([e[0], e[3]])) == 1
    assert S.compatibility_residual() == 0
    assert S.normalization_residual() < 1e-15


def test_c2_holomorphic_form_identity():
    # dz ^ dw = omega + i Im Omega in this real normalisation (recorded convention)
    S = make_c2_hk_structure()
    dzdw = holomorphic_two_form_c2(S)
    assert (dzdw - (S.omega + 1j * S.im_Omega)).max_abs() == 0


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_evaluate_matches_leibniz(k, seed):
    rng = np.random.default_rng(seed)
    d = 5
    coeffs = {idx: complex(*rng.standard_normal(2))
              for idx in itertools.combinations(range(d), k) if rng.random() < 0.6}
    form = ConstForm(d, k, coeffs)
    V = rng.standard_normal((3, k, d))
    oracle = [evaluate_by_leibniz(form, v) for v in V]
    np.testing.assert_allclose(form.evaluate(V), oracle, atol=1e-12)


def test_wedge_antisymmetry():
    a, b = ConstForm.basis(3, 0), ConstForm.basis(3, 1)
    assert (a.wedge(b) + b.wedge(a)).max_abs() == 0
    assert a.wedge(a).max_abs() == 0


def test_structure_json_roundtrip():
    S = make_c2_hk_structure()
    T = FlatCYStructure.from_json(json.loads(json.dumps(S.to_json())))
    assert (T.Omega - S.Omega).max_abs() == 0 and T.base_orientation == S.base_orientation


def test_zero_section():
    S = make_flat_structure(3)
    f = np.zeros((8, 8, 8))
    im = graph_on_torus(S, f)
    pb = pullback_forms(S, im)
    assert np.max(np.abs(pb.omega)) == 0 and np.max(np.abs(pb.im_Omega)) == 0
    np.testing.assert_allclose(pb.re_Omega, 1.0)
    assert np.all(lagrangian_angle(S, im) == 0)


def test_holomorphic_curve_pullbacks():
    S = make_c2_hk_structure()
    for t in (0.1, 0.5, 1.0):
        rep = graph_of_multivalued(1, t, 500, seed=3)
        pb = pullback_forms(S, rep.immersion)
        assert np.max(np.abs(pb.omega)) < 1e-12
        assert np.max(np.abs(pb.im_Omega)) < 1e-12
        th = lagrangian_angle(S, rep.immersion)
        assert np.max(np.abs(th[1:])) < 1e-12


def test_graph_of_df_on_torus():
    S = make_flat_structure(2)
    N, L = 16, 2 * np.pi
    x = np.arange(N) * L / N
    X1, X2 = np.meshgrid(x, x, indexing="ij")
    f = 0.3 * np.sin(X1) * np.cos(X2)
    im = graph_on_torus(S, f, L)
    pb = pullback_forms(S, im)
    assert np.max(np.abs(pb.omega)) < 1e-12
    H = np.empty((N, N, 2, 2))
    H[..., 0, 0] = -0.3 * np.sin(X1) * np.cos(X2)
    H[..., 1, 1] = -0.3 * np.sin(X1) * np.cos(X2)
    H[..., 0, 1] = H[..., 1, 0] = -0.3 * np.cos(X1) * np.sin(X2)
    dets = np.linalg.det(np.eye(2) + 1j * H).ravel()
    np.testing.assert_allclose(pb.im_Omega, dets.imag, atol=1e-12)
    th = lagrangian_angle(S, im)
    np.testing.assert_allclose(np.exp(1j * th), dets / np.abs(dets), atol=1e-12)
    c, s = star_pullbacks(S, im)
    np.testing.assert_allclose(s, np.sin(th), atol=1e-10)
    np.testing.assert_allclose(c, np.cos(th), atol=1e-10)


def test_xy_potential_on_box():
    S = make_flat_structure(2)
    base = np.random.default_rng(0).random((50, 2))
    grad = base[:, ::-1]                     # d(x1 x2)
    hess = np.broadcast_to(np.array([[0.0, 1.0], [1.0, 0.0]]), (50, 2, 2))
    im = graph_immersion(S, base, grad, hess)
    pb = pullback_forms(S, im)
    assert np.max(np.abs(pb.omega)) == 0
    np.testing.assert_allclose(pb.im_Omega, np.linalg.det(np.eye(2) + 1j * hess[0]).imag)


def test_non_closed_form_is_not_lagrangian():
    S = make_flat_structure(2)
    base = np.zeros((4, 2))
    hess = np.broadcast_to(np.array([[0.0, 1.0], [-1.0, 0.0]]), (4, 2, 2))
    im = graph_immersion(S, base, base, hess)
    assert np.max(np.abs(pullback_forms(S, im).omega)) > 0.5
    with pytest.raises(NonLagrangianError) as exc:
        lagrangian_angle(S, im)
    assert exc.value.max_omega == pytest.approx(2.0)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_closedness_iff_lagrangian(seed):
    rng = np.random.default_rng(seed)
    S = make_flat_structure(3)
    A = rng.standard_normal((3, 3))
    sym = (A + A.T) / 2
    for M, closed in ((sym, True), (sym + (A - A.T), False)):
        im = graph_immersion(S, np.zeros((1, 3)), np.zeros((1, 3)), M[None])
        lag = np.max(np.abs(pullback_forms(S, im).omega)) < 1e-12
        assert lag == (closed or np.allclose(A, A.T))


def test_errors():
    S = make_flat_structure(2)
    with pytest.raises(StateError):
        pullback_forms(S, Immersion(np.zeros((3, 4))))
    im = graph_on_torus(S, np.zeros((4, 4)))
    with pytest.raises(ArgumentError):
        pullback_forms(make_flat_structure(3), im)
    three = ConstForm(4, 3, {(0, 1, 2): 1.0})
    with pytest.raises(ArgumentError):
        pullback_form(three, im)


def test_spectral_derivatives_exact_for_trig():
    N, L = 12, 1.0
    x = np.arange(N) / N
    X, Y = np.meshgrid(x, x, indexing="ij")
    f = np.sin(2 * np.pi * X) * np.cos(4 * np.pi * Y)
    g, H, T = spectral_derivatives(f, L, 3)
    np.testing.assert_allclose(g[..., 0], 2 * np.pi * np.cos(2 * np.pi * X) * np.cos(4 * np.pi * Y), atol=1e-11)
    np.testing.assert_allclose(H[..., 1, 1], -(4 * np.pi) ** 2 * f, atol=1e-9)
    np.testing.assert_allclose(T[..., 0, 0, 0], -(2 * np.pi) ** 3 * np.cos(2 * np.pi * X) * np.cos(4 * np.pi * Y), atol=1e-8)
