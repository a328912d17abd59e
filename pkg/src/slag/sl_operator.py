"""Special Lagrangian residuals for graphs.

For a closed 1-form alpha on a Riemannian base, H = g^{-1} nabla alpha and

    pSL(alpha) = -d*alpha + P(nabla alpha),   P = sum_{k>=1} (-1)^k P_{2k+1}(H),

so that on flat space pSL(df) = Im det(I + i Hess f).  The codifferential is
taken with the sign for which -d*alpha = div_g alpha = tr H.

Metrics are flat or conformally flat, g = exp(2 phi) * delta.  Two-valued
fields live on the double cover, parametrised by (r, theta) with theta in
[0, 4 pi).
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ._kernels import esym_batch, im_det_batch
from .asymptotics import ComplexField, FitError, leading_exponent


class ArgumentError(ValueError):
    pass


class NotClosedError(ValueError):
    def __init__(self, max_curl):
        super().__init__(f"1-form is not closed: max curl = {max_curl:.3e}")
        self.max_curl = max_curl


def elementary_symmetric(H, k):
    """P_k(H): coefficient of t^k in det(I + tH)."""
    H = np.asarray(H, dtype=float)
    n = H.shape[0]
    if H.shape != (n, n) or n > 8:
        raise ArgumentError("H must be square with n <= 8")
    if not 0 <= k <= n:
        raise ArgumentError(f"k={k} outside 0..{n}")
    return float(esym_batch(H[None])[0, k])


def odd_nonlinearity(H):
    """P(H) = -P_3 + P_5 - ... for a stack of matrices (shape (..., n, n))."""
    H = np.asarray(H, dtype=float)
    shp = H.shape[:-2]
    Hf = H.reshape((-1,) + H.shape[-2:])
    e = esym_batch(Hf)
    return (im_det_batch(Hf) - e[:, 1]).reshape(shp)


def im_det(H):
    H = np.asarray(H, dtype=float)
    shp = H.shape[:-2]
    return im_det_batch(H.reshape((-1,) + H.shape[-2:])).reshape(shp)


def symmetric_identity_errors(samples=10_000, nmax=5, seed=0, ts=(-1.3, 0.7, 2.0)):
    """Max abs errors of det(I + tH) = sum P_k t^k and Im det(I + iH) = P_1 - P_3 + ...

    Random symmetric H with entries in [-1, 1], sizes 1..nmax in equal shares;
    both left-hand sides come from LAPACK determinants.
    """
    rng = np.random.default_rng(seed)
    per = -(-samples // nmax)
    err_poly = err_im = 0.0
    for n in range(1, nmax + 1):
        A = rng.uniform(-1, 1, (per, n, n))
        H = (A + np.swapaxes(A, 1, 2)) / 2
        e = esym_batch(H)
        for t in ts:
            lhs = np.linalg.det(np.eye(n) + t * H)
            rhs = e @ (t ** np.arange(n + 1))
            err_poly = max(err_poly, float(np.max(np.abs(lhs - rhs))))
        signs = np.array([(-1) ** ((k - 1) // 2) if k % 2 else 0 for k in range(n + 1)])
        lhs = np.linalg.det(np.eye(n) + 1j * H).imag
        err_im = max(err_im, float(np.max(np.abs(lhs - e @ signs))))
    return err_poly, err_im


def sl_residual_cn(f=None, L=1.0, hess=None):
    """Im det(I + i Hess f) pointwise.

    Either periodic samples ``f`` on a uniform grid of the torus of side L
    (spectral Hessian) or precomputed Hessians ``hess`` of shape (..., n, n).
    """
    if hess is None:
        from .flat_cy import spectral_derivatives
        _, hess = spectral_derivatives(np.asarray(f, dtype=float), L)
    return im_det(hess)


# ------------------------------------------------------------ metrics

@dataclass
class ConformalMetric:
    """g = exp(2 phi) delta on R^n; ``phi`` and its gradient are callables of X (N, n)."""

    n: int
    phi: Callable = None
    grad_phi: Callable = None
    name: str = "flat"

    def factors(self, X):
        X = np.atleast_2d(X)
        if self.phi is None:
            return np.zeros(len(X)), np.zeros((len(X), self.n))
        return self.phi(X), self.grad_phi(X)


def flat_metric(n):
    return ConformalMetric(n)


def linear_conformal_metric(c=0.25, n=3, axis=2):
    """exp(-2 phi) = 1 - 2 c x_axis, so d phi / d x_axis = c / (1 - 2 c x_axis)."""

    def u(X):
        return 1.0 - 2.0 * c * X[:, axis]

    def phi(X):
        return -0.5 * np.log(u(X))

    def grad_phi(X):
        g = np.zeros((len(X), n))
        g[:, axis] = c / u(X)
        return g

    return ConformalMetric(n, phi, grad_phi, f"conformal-linear(c={c})")


def covariant_derivative(metric, X, alpha, dalpha):
    """nabla_j alpha_k for g = exp(2 phi) delta.

    Gamma^k_ij = delta_ki phi_j + delta_kj phi_i - delta_ij phi_k gives
    nabla_j alpha_k = d_j alpha_k - phi_j alpha_k - phi_k alpha_j + delta_jk phi.alpha.
    ``dalpha[..., j, k]`` holds d_j alpha_k.
    """
    _, gp = metric.factors(X)
    out = np.array(dalpha, dtype=float, copy=True)
    out -= gp[:, :, None] * alpha[:, None, :]
    out -= alpha[:, :, None] * gp[:, None, :]
    pa = np.einsum("ni,ni->n", gp, alpha)
    out += pa[:, None, None] * np.eye(metric.n)[None]
    return out


def shape_operator(metric, X, alpha, dalpha):
    """H^i_j = exp(-2 phi) nabla_j alpha_i (symmetric for closed alpha)."""
    ph, _ = metric.factors(X)
    nab = covariant_derivative(metric, X, alpha, dalpha)
    return np.exp(-2.0 * ph)[:, None, None] * np.swapaxes(nab, -1, -2)


def psl_residual(metric, X, alpha, dalpha, curl_tol=1e-8):
    """-d*alpha + P(nabla alpha) at points X for a closed 1-form."""
    dalpha = np.asarray(dalpha, dtype=float)
    curl = float(np.max(np.abs(dalpha - np.swapaxes(dalpha, -1, -2)))) if dalpha.size else 0.0
    scale = max(1.0, float(np.max(np.abs(dalpha))) if dalpha.size else 1.0)
    if curl > curl_tol * scale:
        raise NotClosedError(curl)
    H = shape_operator(metric, X, np.asarray(alpha, dtype=float), dalpha)
    return im_det(H)


# ------------------------------------------------------------ pairs

@dataclass
class VerticalForm:
    """beta(x_axis) dx_axis; closed because beta depends on x_axis only."""

    beta: Callable
    dbeta: Callable
    axis: int = 2
    scale: float = 1.0

    def scaled(self, s):
        return VerticalForm(self.beta, self.dbeta, self.axis, self.scale * s)

    def __call__(self, X):
        N, n = X.shape
        a = np.zeros((N, n))
        da = np.zeros((N, n, n))
        a[:, self.axis] = self.scale * self.beta(X[:, self.axis])
        da[:, self.axis, self.axis] = self.scale * self.dbeta(X[:, self.axis])
        return a, da


@dataclass
class QuadraticPotentialForm:
    """d(x.Q x / 2 + b.x) for a constant symmetric Q (harmonic on flat space when tr Q = 0)."""

    Q: np.ndarray
    b: np.ndarray = None
    scale: float = 1.0

    def scaled(self, s):
        return QuadraticPotentialForm(self.Q, self.b, self.scale * s)

    def __call__(self, X):
        Q = np.asarray(self.Q, dtype=float)
        b = np.zeros(Q.shape[0]) if self.b is None else np.asarray(self.b, dtype=float)
        a = self.scale * (X @ Q.T + b[None, :])
        da = self.scale * np.broadcast_to(Q, (X.shape[0],) + Q.shape).copy()
        return a, da


@dataclass
class Pair:
    """a = alpha_plus + alpha_minus on R^2 x (remaining axes), branched along {z = center}.

    Both parts are differentials of real potentials Re(F) of ``ComplexField``
    type in (x1, x2).  ``plus_extra`` is an optional further untwisted closed
    form (callable X -> (alpha, d alpha) with a ``scaled`` method).
    ``leadingA``/``leadingB`` record Re(A z^1/2 + B z^3/2) of the minus potential.
    """

    minus: ComplexField = field(default_factory=ComplexField)
    plus: ComplexField = field(default_factory=ComplexField)
    plus_extra: Optional[object] = None
    center: complex = 0j
    leadingA: complex = 0j
    leadingB: complex = 0j
    n: int = 3
    t: float = 1.0

    def scaled(self, s):
        extra = None if self.plus_extra is None else self.plus_extra.scaled(s)
        return Pair(self.minus * s, self.plus * s, extra, self.center,
                    self.leadingA * s, self.leadingB * s, self.n, self.t)

    def potential(self):
        return self.plus + self.minus

    def evaluate(self, r, theta, x3=None):
        """Points X (N, n) and alpha, d alpha on the double cover."""
        r = np.asarray(r, dtype=float).ravel()
        theta = np.asarray(theta, dtype=float).ravel()
        N = r.size
        zc = self.center
        X = np.zeros((N, self.n))
        X[:, 0] = r * np.cos(theta) + zc.real
        X[:, 1] = r * np.sin(theta) + zc.imag
        if self.n > 2:
            X[:, 2] = 0.0 if x3 is None else np.asarray(x3, dtype=float).ravel()
        _, g, Hs = self.potential().derivatives(r, theta)
        alpha = np.zeros((N, self.n))
        dal = np.zeros((N, self.n, self.n))
        alpha[:, :2] = g
        dal[:, :2, :2] = Hs
        if self.plus_extra is not None:
            a2, da2 = self.plus_extra(X)
            alpha += a2
            dal += da2
        return X, alpha, dal

    def monodromy_defect(self, r=0.5, ntheta=16):
        th = np.linspace(0, 2 * np.pi, ntheta, endpoint=False)
        rr = np.full_like(th, r)
        a = self.minus(rr, th)
        b = self.minus(rr, th + 2 * np.pi)
        return float(np.max(np.abs(a + b)))


def polar_cover_grid(r, ntheta, x3=None):
    """Tensor grid over (r, theta in [0, 4 pi), x3)."""
    th = 4 * np.pi * np.arange(ntheta) / ntheta
    x3 = np.array([0.0]) if x3 is None else np.asarray(x3, dtype=float)
    R, T, Z = np.meshgrid(np.asarray(r, dtype=float), th, x3, indexing="ij")
    return R, T, Z


def pair_residual(metric, pair, R, T, Z):
    X, a, da = pair.evaluate(R, T, Z)
    return psl_residual(metric, X, a, da).reshape(R.shape)


# ------------------------------------------------------------ splitting

@dataclass
class SplitField:
    plus: np.ndarray
    minus: np.ndarray


def split_residual(res, theta=None, axis=-1):
    """Split samples over theta in [0, 4 pi) into deck-even and deck-odd parts."""
    res = np.asarray(res)
    N = res.shape[axis]
    if N % 2:
        raise ArgumentError("angular samples must cover a full double period (even count)")
    if theta is not None:
        theta = np.asarray(theta, dtype=float)
        expect = 4 * np.pi * np.arange(N) / N
        if theta.shape != (N,) or np.max(np.abs(theta - theta[0] - expect)) > 1e-9:
            raise ArgumentError("theta must be a uniform grid on a full [0, 4 pi) period")
    shifted = np.roll(res, -N // 2, axis=axis)
    return SplitField((res + shifted) / 2, (res - shifted) / 2)


# ------------------------------------------------------------ quadratic term

@dataclass
class QuadraticReport:
    t: float
    residual_max: float
    exact: bool
    minus_exponent: Optional[float] = None
    plus_exponent: Optional[float] = None
    minus_uncertainty: Optional[float] = None
    plus_uncertainty: Optional[float] = None


def quadratic_term(metric, pair, t, r_inner=(1e-6, 1e-4), nr=25, ntheta=32, x3=0.5,
                   exact_tol=1e-13):
    """Nonlinear part of pSL(t a) and the leading radial exponents of its +/- parts.

    The linear part of pSL vanishes by harmonicity, so the full residual is
    the nonlinear term.  Exponents are log-log slopes of the sup over theta
    of each part across the inner radial window.
    """
    sp = pair.scaled(t)
    r = np.geomspace(r_inner[0], r_inner[1], nr)
    R, T, Z = polar_cover_grid(r, ntheta, np.array([x3]))
    res = pair_residual(metric, sp, R, T, Z)[:, :, 0]
    parts = split_residual(res, axis=1)
    scale = max(1.0, float(np.max(np.abs(res))))
    rep = QuadraticReport(t, float(np.max(np.abs(res))), bool(np.max(np.abs(res)) <= exact_tol))
    if rep.exact:
        return rep
    for name, arr in (("minus", parts.minus), ("plus", parts.plus)):
        amp = np.max(np.abs(arr), axis=1)
        if np.max(amp) <= exact_tol * scale:
            continue
        if np.any(amp <= 0):
            raise FitError(f"{name} part vanishes on part of the radial window")
        e, u = leading_exponent(r, amp)
        setattr(rep, f"{name}_exponent", e)
        setattr(rep, f"{name}_uncertainty", u)
    return rep
